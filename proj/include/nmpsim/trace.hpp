#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nmpsim/common.hpp"

namespace nmpsim::trace {

enum class OpKind : uint8_t { ADD, MAC, MIN, MAX };

const char* op_kind_name(OpKind k);
std::optional<OpKind> op_kind_from_name(const std::string& s);

// One near-memory operation <&dest += &src1 OP &src2>. src2 is absent only
// for single-source reductions (ADD/MIN/MAX); MAC always carries two sources.
struct NmpOp {
    uint64_t seq_id = 0;
    OpKind op_kind = OpKind::ADD;
    uint64_t dest_vaddr = 0;
    uint64_t src1_vaddr = 0;
    std::optional<uint64_t> src2_vaddr;
    uint32_t process_id = 0;
};

struct ProcessDesc {
    uint32_t id = 0;
    uint64_t virtual_extent = 0;  // bytes of virtual address space, page aligned
};

// [lo, hi) byte range with read-only permission; everything else is read-write.
struct ReadOnlyRegion {
    uint32_t process_id = 0;
    uint64_t lo = 0;
    uint64_t hi = 0;
};

struct OpTrace {
    std::vector<NmpOp> ops;
    uint64_t page_size_bytes = 4096;
    std::vector<ProcessDesc> processes;          // sorted by id
    std::vector<ReadOnlyRegion> readonly_regions;  // sorted by (pid, lo)

    uint64_t page_of(uint64_t vaddr) const { return vaddr / page_size_bytes; }
    const ProcessDesc* find_process(uint32_t pid) const;
    bool is_readonly(uint32_t pid, uint64_t vaddr) const;
    void validate() const;  // enforces ordering/extent invariants, throws ParseError-like SimError
};

enum class KernelKind { MAC, RD, SPMV_LIKE, PR_LIKE, BP_LIKE, KM_LIKE };

const char* kernel_kind_name(KernelKind k);
std::optional<KernelKind> kernel_kind_from_name(const std::string& s);

// Synthetic kernel traces. n counts 8-byte elements processed; the access
// shapes approximate the benchmark classes they are named after:
//   MAC       one op per element over three disjoint sequential regions
//   RD        pairwise reduction tree, all partial sums in one accumulator page
//   SPMV_LIKE sequential vals/rows, gather src2 with power-law page popularity
//   PR_LIKE   high page count, every page touched once (low reuse)
//   BP_LIKE   large sequential input, small hot weight region reused throughout
//   KM_LIKE   sequential points against small hot centroid + accumulator pages
// Deterministic for fixed (kind, n, seed).
OpTrace generate_kernel_trace(KernelKind kind, uint64_t n, uint64_t seed);

// Power-law exponent used by SPMV_LIKE page draws (fit target of its tests).
inline constexpr double kSpmvPowerLawExponent = 1.5;

// Page access histogram: one access per operand reference. Returns one count
// per bin; bins are [0,e0), [e0,e1), ..., [e_last, inf).
std::vector<uint64_t> classify_page_accesses(const OpTrace& t, const std::vector<uint64_t>& bin_edges);

// Mean number of distinct pages touched per epoch, with seq_id mapped to a
// nominal cycle via issue_rate (ops/cycle).
double active_page_distribution(const OpTrace& t, uint64_t epoch_cycles, double issue_rate);

struct AffinityProfile {
    uint32_t n_bins = 0;
    // low/high radix x low/high weight, order: LL, LH, HL, HH (radix major)
    std::array<uint64_t, 4> quadrant_counts{};
    std::map<uint64_t, uint64_t> per_page_radix;
    std::map<std::pair<uint64_t, uint64_t>, uint64_t> per_edge_weight;  // key lo<hi
};

// Page co-occurrence analysis: radix(p) = distinct partner pages over all ops,
// edge weight = co-occurrence count per unordered pair. Pages are placed on an
// n_bins x n_bins grid (equal-width bins over observed ranges) and collapsed
// into quadrants split at the median bin.
AffinityProfile affinity_analysis(const OpTrace& t, uint32_t n_bins);

// Text format, one op per line: `seq_id OP_KIND dest_hex src1_hex [src2_hex] pid`
// with `#` comments and `!` header lines (page_size, process, readonly).
OpTrace parse_trace(const std::string& text);
std::string serialize_trace(const OpTrace& t);

OpTrace load_trace_file(const std::string& path);
void save_trace_file(const OpTrace& t, const std::string& path);

}  // namespace nmpsim::trace
