"""Trace-driven near-memory-processing mesh simulator."""

try:
    # installed layout: the extension lives inside the package
    from ._nmpsim import (
        OpTrace,
        SimError,
        active_page_distribution,
        affinity_quadrants,
        classify_page_accesses,
        compute_reward,
        compute_utilization,
        generate_kernel_trace,
        parse_trace,
        run_simulation,
        run_simulation_file,
        serialize_trace,
    )
except ImportError:  # build-tree layout: extension on sys.path
    from _nmpsim import (
        OpTrace,
        SimError,
        active_page_distribution,
        affinity_quadrants,
        classify_page_accesses,
        compute_reward,
        compute_utilization,
        generate_kernel_trace,
        parse_trace,
        run_simulation,
        run_simulation_file,
        serialize_trace,
    )

__all__ = [
    "OpTrace",
    "SimError",
    "active_page_distribution",
    "affinity_quadrants",
    "classify_page_accesses",
    "compute_reward",
    "compute_utilization",
    "generate_kernel_trace",
    "parse_trace",
    "run_simulation",
    "run_simulation_file",
    "serialize_trace",
]
