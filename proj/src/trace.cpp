#include "nmpsim/trace.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace nmpsim::trace {

namespace {

constexpr uint64_t kElemBytes = 8;

// Composite key so multi-process traces keep page identities apart.
uint64_t page_key(uint32_t pid, uint64_t page) { return (uint64_t(pid) << 44) | page; }

}  // namespace

const char* op_kind_name(OpKind k) {
    switch (k) {
        case OpKind::ADD: return "ADD";
        case OpKind::MAC: return "MAC";
        case OpKind::MIN: return "MIN";
        case OpKind::MAX: return "MAX";
    }
    return "?";
}

std::optional<OpKind> op_kind_from_name(const std::string& s) {
    if (s == "ADD") return OpKind::ADD;
    if (s == "MAC") return OpKind::MAC;
    if (s == "MIN") return OpKind::MIN;
    if (s == "MAX") return OpKind::MAX;
    return std::nullopt;
}

const char* kernel_kind_name(KernelKind k) {
    switch (k) {
        case KernelKind::MAC: return "MAC";
        case KernelKind::RD: return "RD";
        case KernelKind::SPMV_LIKE: return "SPMV_LIKE";
        case KernelKind::PR_LIKE: return "PR_LIKE";
        case KernelKind::BP_LIKE: return "BP_LIKE";
        case KernelKind::KM_LIKE: return "KM_LIKE";
    }
    return "?";
}

std::optional<KernelKind> kernel_kind_from_name(const std::string& s) {
    if (s == "MAC") return KernelKind::MAC;
    if (s == "RD") return KernelKind::RD;
    if (s == "SPMV_LIKE" || s == "SPMV") return KernelKind::SPMV_LIKE;
    if (s == "PR_LIKE" || s == "PR") return KernelKind::PR_LIKE;
    if (s == "BP_LIKE" || s == "BP") return KernelKind::BP_LIKE;
    if (s == "KM_LIKE" || s == "KM") return KernelKind::KM_LIKE;
    return std::nullopt;
}

const ProcessDesc* OpTrace::find_process(uint32_t pid) const {
    for (const auto& p : processes)
        if (p.id == pid) return &p;
    return nullptr;
}

bool OpTrace::is_readonly(uint32_t pid, uint64_t vaddr) const {
    for (const auto& r : readonly_regions)
        if (r.process_id == pid && vaddr >= r.lo && vaddr < r.hi) return true;
    return false;
}

void OpTrace::validate() const {
    if (!is_pow2(page_size_bytes)) throw SimError("page_size must be a power of two");
    uint64_t prev = 0;
    bool first = true;
    for (const auto& op : ops) {
        if (!first && op.seq_id <= prev) throw SimError("ops not strictly increasing by seq_id");
        prev = op.seq_id;
        first = false;
        const ProcessDesc* p = find_process(op.process_id);
        if (!p) throw SimError("op " + std::to_string(op.seq_id) + " references undeclared process");
        auto check = [&](uint64_t a) {
            if (a >= p->virtual_extent)
                throw SimError("op " + std::to_string(op.seq_id) + " address outside process extent");
        };
        check(op.dest_vaddr);
        check(op.src1_vaddr);
        if (op.src2_vaddr) check(*op.src2_vaddr);
    }
}

// ---------------------------------------------------------------------------
// Generators

namespace {

struct Builder {
    OpTrace t;
    uint64_t next_seq = 0;

    void op(OpKind k, uint64_t d, uint64_t s1, std::optional<uint64_t> s2, uint32_t pid = 0) {
        t.ops.push_back(NmpOp{next_seq++, k, d, s1, s2, pid});
    }
};

uint64_t page_align_up(uint64_t v, uint64_t page) { return (v + page - 1) / page * page; }

// Inverse-CDF sampler over K items with P(i) proportional to (i+1)^-alpha.
struct PowerLawSampler {
    std::vector<double> cdf;
    PowerLawSampler(uint64_t k, double alpha) {
        cdf.resize(k);
        double acc = 0;
        for (uint64_t i = 0; i < k; ++i) {
            acc += std::pow(double(i + 1), -alpha);
            cdf[i] = acc;
        }
        for (auto& v : cdf) v /= acc;
    }
    uint64_t draw(std::mt19937_64& rng) const {
        double u = draw_u01(rng);
        return std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin();
    }
};

}  // namespace

OpTrace generate_kernel_trace(KernelKind kind, uint64_t n, uint64_t seed) {
    if (n == 0) throw InvalidParameter("kernel size must be positive");
    const uint64_t page = 4096;
    std::mt19937_64 rng(mix_seed(seed, uint64_t(kind)));
    Builder b;
    b.t.page_size_bytes = page;

    auto region_after = [&](uint64_t prev_end) { return page_align_up(prev_end, page); };

    switch (kind) {
        case KernelKind::MAC: {
            // dest[i] += a[i] * b[i] over three disjoint sequential regions
            uint64_t d0 = 0;
            uint64_t a0 = region_after(d0 + n * kElemBytes);
            uint64_t b0 = region_after(a0 + n * kElemBytes);
            uint64_t end = region_after(b0 + n * kElemBytes);
            for (uint64_t i = 0; i < n; ++i)
                b.op(OpKind::MAC, d0 + i * kElemBytes, a0 + i * kElemBytes, b0 + i * kElemBytes);
            b.t.processes = {{0, end}};
            b.t.readonly_regions = {{0, a0, region_after(b0 + n * kElemBytes)}};
            break;
        }
        case KernelKind::RD: {
            // Pairwise reduction tree over one sequential region; every partial
            // sum lands in the single accumulator page, the root at its base.
            uint64_t in0 = 0;
            uint64_t acc0 = region_after(in0 + n * kElemBytes);
            uint64_t end = acc0 + page;
            uint64_t slots = page / kElemBytes;
            std::vector<uint64_t> level;
            for (uint64_t i = 0; i < n; ++i) level.push_back(in0 + i * kElemBytes);
            uint64_t scratch = 1;  // slot 0 reserved for the root
            while (level.size() > 1) {
                std::vector<uint64_t> next;
                bool root = level.size() == 2;
                for (size_t i = 0; i + 1 < level.size(); i += 2) {
                    uint64_t dest = root ? acc0 : acc0 + (scratch++ % (slots - 1) + 1) * kElemBytes;
                    b.op(OpKind::ADD, dest, level[i], level[i + 1]);
                    next.push_back(dest);
                }
                if (level.size() % 2) next.push_back(level.back());
                level.swap(next);
            }
            b.t.processes = {{0, end}};
            b.t.readonly_regions = {{0, in0, region_after(in0 + n * kElemBytes)}};
            break;
        }
        case KernelKind::SPMV_LIKE: {
            // y[r] += vals[i] * x[col(i)], col pages drawn from a power law
            constexpr uint64_t kNnzPerRow = 8;
            uint64_t x_pages = std::max<uint64_t>(16, n / 64);
            uint64_t y0 = 0;
            uint64_t v0 = region_after(y0 + (n / kNnzPerRow + 1) * kElemBytes);
            uint64_t x0 = region_after(v0 + n * kElemBytes);
            uint64_t end = x0 + x_pages * page;
            PowerLawSampler pl(x_pages, kSpmvPowerLawExponent);
            uint64_t elems_per_page = page / kElemBytes;
            for (uint64_t i = 0; i < n; ++i) {
                uint64_t xp = pl.draw(rng);
                uint64_t xoff = draw_below(rng, elems_per_page);
                b.op(OpKind::MAC, y0 + (i / kNnzPerRow) * kElemBytes, v0 + i * kElemBytes,
                     x0 + xp * page + xoff * kElemBytes);
            }
            b.t.processes = {{0, end}};
            b.t.readonly_regions = {{0, v0, end}};
            break;
        }
        case KernelKind::PR_LIKE: {
            // rank-update style: every operand on a fresh page, touched once
            uint64_t d0 = 0;
            uint64_t s1 = d0 + n * page;
            uint64_t s2 = s1 + n * page;
            uint64_t end = s2 + n * page;
            for (uint64_t i = 0; i < n; ++i) {
                uint64_t off = draw_below(rng, page / kElemBytes) * kElemBytes;
                b.op(OpKind::MAC, d0 + i * page + off, s1 + i * page + off, s2 + i * page + off);
            }
            b.t.processes = {{0, end}};
            b.t.readonly_regions = {{0, s1, end}};
            break;
        }
        case KernelKind::BP_LIKE: {
            // gradient pass: long sequential activations against a small
            // weight region that is revisited for the whole run
            uint64_t w_pages = std::max<uint64_t>(4, n / 512);
            uint64_t g_pages = std::max<uint64_t>(2, w_pages / 2);
            uint64_t g0 = 0;
            uint64_t a0 = region_after(g0 + g_pages * page);
            uint64_t w0 = region_after(a0 + n * kElemBytes);
            uint64_t end = w0 + w_pages * page;
            uint64_t elems_per_page = page / kElemBytes;
            for (uint64_t i = 0; i < n; ++i) {
                uint64_t wp = i % w_pages;
                uint64_t woff = draw_below(rng, elems_per_page);
                uint64_t goff = (i % (g_pages * elems_per_page)) * kElemBytes;
                b.op(OpKind::MAC, g0 + goff, a0 + i * kElemBytes, w0 + wp * page + woff * kElemBytes);
            }
            b.t.processes = {{0, end}};
            b.t.readonly_regions = {{0, a0, end}};
            break;
        }
        case KernelKind::KM_LIKE: {
            // assignment pass: sequential points, hot centroid pages, per-
            // cluster accumulators
            uint64_t k_pages = 8;
            uint64_t acc_pages = 32;
            uint64_t p0 = 0;
            uint64_t c0 = region_after(p0 + n * kElemBytes);
            uint64_t a0 = c0 + k_pages * page;
            uint64_t end = a0 + acc_pages * page;
            uint64_t elems_per_page = page / kElemBytes;
            for (uint64_t i = 0; i < n; ++i) {
                uint64_t cluster = draw_below(rng, k_pages * elems_per_page);
                uint64_t acc = draw_below(rng, acc_pages);
                uint64_t aoff = draw_below(rng, elems_per_page);
                b.op(OpKind::MAC, a0 + acc * page + aoff * kElemBytes, p0 + i * kElemBytes,
                     c0 + cluster * kElemBytes);
            }
            b.t.processes = {{0, end}};
            b.t.readonly_regions = {{0, p0, a0}};
            break;
        }
    }
    b.t.validate();
    return b.t;
}

// ---------------------------------------------------------------------------
// Analyses

namespace {

std::map<uint64_t, uint64_t> page_access_counts(const OpTrace& t) {
    std::map<uint64_t, uint64_t> counts;
    for (const auto& op : t.ops) {
        counts[page_key(op.process_id, t.page_of(op.dest_vaddr))]++;
        counts[page_key(op.process_id, t.page_of(op.src1_vaddr))]++;
        if (op.src2_vaddr) counts[page_key(op.process_id, t.page_of(*op.src2_vaddr))]++;
    }
    return counts;
}

}  // namespace

std::vector<uint64_t> classify_page_accesses(const OpTrace& t, const std::vector<uint64_t>& bin_edges) {
    if (bin_edges.empty()) throw InvalidParameter("bin_edges must be nonempty");
    for (size_t i = 1; i < bin_edges.size(); ++i)
        if (bin_edges[i] <= bin_edges[i - 1]) throw InvalidParameter("bin_edges must be strictly ascending");
    std::vector<uint64_t> bins(bin_edges.size() + 1, 0);
    for (const auto& [key, count] : page_access_counts(t)) {
        // bin index = number of edges <= count, so [e_i, e_i+1) owns its left edge
        size_t b = std::upper_bound(bin_edges.begin(), bin_edges.end(), count) - bin_edges.begin();
        bins[b]++;
        (void)key;
    }
    return bins;
}

double active_page_distribution(const OpTrace& t, uint64_t epoch_cycles, double issue_rate) {
    if (epoch_cycles == 0) throw InvalidParameter("epoch_cycles must be positive");
    if (!(issue_rate > 0)) throw InvalidParameter("issue_rate must be positive");
    if (t.ops.empty()) return 0.0;
    std::map<uint64_t, std::set<uint64_t>> per_epoch;
    uint64_t last_epoch = 0;
    for (const auto& op : t.ops) {
        uint64_t cycle = uint64_t(double(op.seq_id) / issue_rate);
        uint64_t epoch = cycle / epoch_cycles;
        last_epoch = std::max(last_epoch, epoch);
        auto& pages = per_epoch[epoch];
        pages.insert(page_key(op.process_id, t.page_of(op.dest_vaddr)));
        pages.insert(page_key(op.process_id, t.page_of(op.src1_vaddr)));
        if (op.src2_vaddr) pages.insert(page_key(op.process_id, t.page_of(*op.src2_vaddr)));
    }
    uint64_t total = 0;
    for (const auto& [e, pages] : per_epoch) total += pages.size();
    return double(total) / double(last_epoch + 1);
}

AffinityProfile affinity_analysis(const OpTrace& t, uint32_t n_bins) {
    if (n_bins < 2) throw InvalidParameter("n_bins must be >= 2");
    AffinityProfile prof;
    prof.n_bins = n_bins;
    std::map<uint64_t, std::set<uint64_t>> partners;
    for (const auto& op : t.ops) {
        std::set<uint64_t> pages;
        pages.insert(page_key(op.process_id, t.page_of(op.dest_vaddr)));
        pages.insert(page_key(op.process_id, t.page_of(op.src1_vaddr)));
        if (op.src2_vaddr) pages.insert(page_key(op.process_id, t.page_of(*op.src2_vaddr)));
        for (auto a : pages) {
            partners.try_emplace(a);  // single-page ops still count the page
            for (auto bp : pages) {
                if (a >= bp) continue;
                partners[a].insert(bp);
                partners[bp].insert(a);
                prof.per_edge_weight[{a, bp}]++;
            }
        }
    }
    uint64_t max_radix = 0, max_weight = 0;
    std::map<uint64_t, uint64_t> weight_sum;
    for (const auto& [p, ps] : partners) {
        prof.per_page_radix[p] = ps.size();
        max_radix = std::max<uint64_t>(max_radix, ps.size());
        weight_sum[p] = 0;
    }
    for (const auto& [edge, w] : prof.per_edge_weight) {
        weight_sum[edge.first] += w;
        weight_sum[edge.second] += w;
    }
    for (const auto& [p, w] : weight_sum) max_weight = std::max(max_weight, w);

    auto bin_of = [&](uint64_t v, uint64_t vmax) -> uint32_t {
        if (vmax == 0) return 0;
        uint64_t b = v * n_bins / (vmax + 1);
        return uint32_t(std::min<uint64_t>(b, n_bins - 1));
    };
    uint32_t split = n_bins / 2;  // median bin boundary
    for (const auto& [p, radix] : prof.per_page_radix) {
        bool hi_r = bin_of(radix, max_radix) >= split;
        bool hi_w = bin_of(weight_sum[p], max_weight) >= split;
        prof.quadrant_counts[(hi_r ? 2 : 0) + (hi_w ? 1 : 0)]++;
    }
    return prof;
}

// ---------------------------------------------------------------------------
// Text format

namespace {

std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream is(line);
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

uint64_t parse_u64(const std::string& s, size_t line_no, int base = 10) {
    uint64_t v = 0;
    const char* begin = s.c_str();
    const char* end = begin + s.size();
    if (base == 16 && s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) begin += 2;
    auto [p, ec] = std::from_chars(begin, end, v, base);
    if (ec != std::errc{} || p != end) throw ParseError("bad number '" + s + "'", line_no);
    return v;
}

}  // namespace

OpTrace parse_trace(const std::string& text) {
    OpTrace t;
    t.page_size_bytes = 4096;
    std::istringstream is(text);
    std::string line;
    size_t line_no = 0;
    bool saw_op = false;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        if (line[0] == '!') {
            if (saw_op) throw ParseError("header line after first op", line_no);
            auto eq = line.find('=');
            if (eq == std::string::npos) throw ParseError("malformed header line", line_no);
            std::string key = line.substr(1, eq - 1);
            std::string val = line.substr(eq + 1);
            auto toks = split_ws(val);
            if (key == "page_size") {
                if (toks.size() != 1) throw ParseError("page_size takes one value", line_no);
                t.page_size_bytes = parse_u64(toks[0], line_no);
                if (!is_pow2(t.page_size_bytes)) throw ParseError("page_size must be a power of two", line_no);
            } else if (key == "process") {
                if (toks.size() != 2) throw ParseError("process takes `id extent_hex`", line_no);
                t.processes.push_back({uint32_t(parse_u64(toks[0], line_no)), parse_u64(toks[1], line_no, 16)});
            } else if (key == "readonly") {
                if (toks.size() != 3) throw ParseError("readonly takes `pid lo_hex hi_hex`", line_no);
                t.readonly_regions.push_back({uint32_t(parse_u64(toks[0], line_no)),
                                              parse_u64(toks[1], line_no, 16), parse_u64(toks[2], line_no, 16)});
            } else {
                throw ParseError("unknown header key '" + key + "'", line_no);
            }
            continue;
        }
        auto toks = split_ws(line);
        if (toks.size() < 5 || toks.size() > 6) throw ParseError("expected 5 or 6 fields", line_no);
        NmpOp op;
        op.seq_id = parse_u64(toks[0], line_no);
        auto kind = op_kind_from_name(toks[1]);
        if (!kind) throw ParseError("unknown op kind '" + toks[1] + "'", line_no);
        op.op_kind = *kind;
        op.dest_vaddr = parse_u64(toks[2], line_no, 16);
        op.src1_vaddr = parse_u64(toks[3], line_no, 16);
        if (toks.size() == 6) {
            op.src2_vaddr = parse_u64(toks[4], line_no, 16);
            op.process_id = uint32_t(parse_u64(toks[5], line_no));
        } else {
            if (op.op_kind == OpKind::MAC) throw ParseError("MAC requires src2", line_no);
            op.process_id = uint32_t(parse_u64(toks[4], line_no));
        }
        t.ops.push_back(op);
        saw_op = true;
    }
    std::sort(t.processes.begin(), t.processes.end(), [](auto& a, auto& b) { return a.id < b.id; });
    std::sort(t.readonly_regions.begin(), t.readonly_regions.end(),
              [](auto& a, auto& b) { return std::tie(a.process_id, a.lo) < std::tie(b.process_id, b.lo); });
    try {
        t.validate();
    } catch (const SimError& e) {
        throw ParseError(e.what(), line_no);
    }
    return t;
}

std::string serialize_trace(const OpTrace& t) {
    std::ostringstream os;
    os << "!page_size=" << t.page_size_bytes << "\n";
    for (const auto& p : t.processes) {
        os << "!process=" << p.id << " 0x" << std::hex << p.virtual_extent << std::dec << "\n";
    }
    for (const auto& r : t.readonly_regions) {
        os << "!readonly=" << r.process_id << " 0x" << std::hex << r.lo << " 0x" << r.hi << std::dec << "\n";
    }
    for (const auto& op : t.ops) {
        os << op.seq_id << " " << op_kind_name(op.op_kind) << std::hex << " 0x" << op.dest_vaddr << " 0x"
           << op.src1_vaddr;
        if (op.src2_vaddr) os << " 0x" << *op.src2_vaddr;
        os << std::dec << " " << op.process_id << "\n";
    }
    return os.str();
}

OpTrace load_trace_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open trace file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_trace(ss.str());
}

void save_trace_file(const OpTrace& t, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write trace file: " + path);
    out << serialize_trace(t);
}

}  // namespace nmpsim::trace
