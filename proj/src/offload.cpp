#include "nmpsim/offload.hpp"

#include <algorithm>
#include <limits>

namespace nmpsim::offload {

const char* technique_name(Technique t) {
    switch (t) {
        case Technique::BNMP: return "BNMP";
        case Technique::LDB: return "LDB";
        case Technique::PEI: return "PEI";
    }
    return "?";
}

std::optional<Technique> technique_from_name(const std::string& s) {
    if (s == "BNMP" || s == "bnmp") return Technique::BNMP;
    if (s == "LDB" || s == "ldb") return Technique::LDB;
    if (s == "PEI" || s == "pei") return Technique::PEI;
    return std::nullopt;
}

void HistoryRing::push(double v) {
    vals_.push_front(v);
    while (vals_.size() > len_) vals_.pop_back();
}

std::vector<double> HistoryRing::snapshot() const {
    std::vector<double> out(vals_.begin(), vals_.end());
    out.resize(len_, 0.0);
    return out;
}

PageInfoEntry& PageInfoCache::touch(PageKey page) {
    ++accesses;
    for (auto& e : entries_)
        if (e.page == page) return e;
    if (entries_.size() < capacity_) {
        PageInfoEntry e;
        e.page = page;
        e.hop_history = HistoryRing(history_len_);
        e.latency_history = HistoryRing(history_len_);
        e.migration_latency_history = HistoryRing(history_len_);
        e.action_history = HistoryRing(history_len_);
        e.insert_seq = next_seq_++;
        entries_.push_back(e);
        return entries_.back();
    }
    // LFU victim, ties broken by oldest entry; contents abandoned
    size_t victim = 0;
    for (size_t i = 1; i < entries_.size(); ++i) {
        const auto& e = entries_[i];
        const auto& v = entries_[victim];
        if (e.access_count < v.access_count ||
            (e.access_count == v.access_count && e.insert_seq < v.insert_seq))
            victim = i;
    }
    PageInfoEntry e;
    e.page = page;
    e.hop_history = HistoryRing(history_len_);
    e.latency_history = HistoryRing(history_len_);
    e.migration_latency_history = HistoryRing(history_len_);
    e.action_history = HistoryRing(history_len_);
    e.insert_seq = next_seq_++;
    entries_[victim] = e;
    return entries_[victim];
}

PageInfoEntry* PageInfoCache::find(PageKey page) {
    ++accesses;
    for (auto& e : entries_)
        if (e.page == page) return &e;
    return nullptr;
}

const PageInfoEntry* PageInfoCache::find(PageKey page) const {
    for (const auto& e : entries_)
        if (e.page == page) return &e;
    return nullptr;
}

const PageInfoEntry* PageInfoCache::hottest() const {
    const PageInfoEntry* best = nullptr;
    for (const auto& e : entries_) {
        if (!best || e.access_count > best->access_count ||
            (e.access_count == best->access_count && e.page < best->page))
            best = &e;
    }
    return best;
}

void PageInfoCache::age_counters() {
    for (auto& e : entries_) {
        e.access_count >>= 1;
        e.migration_count >>= 1;
    }
    total_page_accesses >>= 1;
}

void PageInfoCache::clear() {
    entries_.clear();
    next_seq_ = 0;
    total_page_accesses = 0;
}

void ComputeRemapTable::put(PageKey page, int cube) {
    auto it = map_.find(page);
    if (it != map_.end()) {
        it->second = cube;
        return;
    }
    if (map_.size() >= capacity_ && !fifo_.empty()) {
        map_.erase(fifo_.front());
        fifo_.pop_front();
    }
    map_[page] = cube;
    fifo_.push_back(page);
}

std::optional<int> ComputeRemapTable::lookup(PageKey page) const {
    auto it = map_.find(page);
    if (it == map_.end()) return std::nullopt;
    return it->second;
}

void ComputeRemapTable::clear() {
    map_.clear();
    fifo_.clear();
}

HostCache::HostCache(uint64_t bytes, int line_bytes, int ways, int mshr_entries)
    : line_bytes_(line_bytes), ways_(ways), mshr_entries_(mshr_entries) {
    if (line_bytes < 1 || ways < 1 || mshr_entries < 1) throw ConfigError("bad host cache geometry");
    sets_ = size_t(bytes / uint64_t(line_bytes) / uint64_t(ways));
    if (sets_ == 0) throw ConfigError("host cache smaller than one set");
    sets_tags_.resize(sets_);
}

bool HostCache::probe(uint64_t paddr) {
    uint64_t line = paddr / uint64_t(line_bytes_);
    auto& set = sets_tags_[size_t(line % sets_)];
    for (auto& [tag, stamp] : set) {
        if (tag == line) {
            stamp = ++lru_clock_;
            return true;
        }
    }
    return false;
}

void HostCache::install(uint64_t paddr) {
    uint64_t line = paddr / uint64_t(line_bytes_);
    auto& set = sets_tags_[size_t(line % sets_)];
    for (auto& [tag, stamp] : set) {
        if (tag == line) {
            stamp = ++lru_clock_;
            return;
        }
    }
    if (int(set.size()) < ways_) {
        set.push_back({line, ++lru_clock_});
        return;
    }
    size_t victim = 0;
    for (size_t i = 1; i < set.size(); ++i)
        if (set[i].second < set[victim].second) victim = i;
    set[victim] = {line, ++lru_clock_};
}

bool HostCache::mshr_acquire() {
    if (mshr_used_ >= mshr_entries_) return false;
    ++mshr_used_;
    return true;
}

void HostCache::mshr_release() {
    if (mshr_used_ > 0) --mshr_used_;
}

void HostCache::clear() {
    for (auto& s : sets_tags_) s.clear();
    mshr_used_ = 0;
    lru_clock_ = 0;
}

SchedulePlan schedule_op(Technique technique, const ComputeRemapTable& remap, const OperandPlacement& dest,
                         const OperandPlacement& src1, const std::optional<OperandPlacement>& src2) {
    SchedulePlan plan;
    std::optional<int> suggestion = remap.lookup(dest.page);
    if (!suggestion) suggestion = remap.lookup(src1.page);
    if (!suggestion && src2) suggestion = remap.lookup(src2->page);
    if (suggestion) {
        plan.compute_cube = *suggestion;
        plan.remapped = true;
    } else {
        switch (technique) {
            case Technique::BNMP: plan.compute_cube = dest.cube; break;
            case Technique::LDB: plan.compute_cube = src1.cube; break;
            case Technique::PEI: plan.compute_cube = src1.cube; break;  // offload leg of PEI
        }
    }
    if (src1.cube != plan.compute_cube) plan.fetch_slots.push_back(1);
    if (src2 && src2->cube != plan.compute_cube) plan.fetch_slots.push_back(2);
    plan.forward_result = dest.cube != plan.compute_cube;
    return plan;
}

int tom_epoch_select(const std::vector<WindowOp>& window, memnet::DramMapper& mapper,
                     const std::vector<int>& candidate_variants, int current,
                     const memnet::MeshConfig& mesh, int operand_bytes) {
    if (candidate_variants.empty()) throw InvalidParameter("need at least one mapping candidate");
    if (window.empty()) return current;
    int saved = mapper.variant();
    uint64_t best_score = std::numeric_limits<uint64_t>::max();
    int best = candidate_variants.front();
    for (size_t ci = 0; ci < candidate_variants.size(); ++ci) {
        mapper.set_variant(candidate_variants[ci]);
        uint64_t score = 0;
        for (const auto& op : window) {
            memnet::Coord compute = memnet::coord_of(mapper.cube_of_frame(op.dest_frame), mesh);
            score += uint64_t(operand_bytes) *
                     uint64_t(memnet::manhattan(memnet::coord_of(mapper.cube_of_frame(op.src1_frame), mesh), compute));
            if (op.src2_frame)
                score += uint64_t(operand_bytes) *
                         uint64_t(memnet::manhattan(memnet::coord_of(mapper.cube_of_frame(*op.src2_frame), mesh),
                                                    compute));
        }
        if (score < best_score) {
            best_score = score;
            best = candidate_variants[ci];
        }
    }
    mapper.set_variant(saved);
    return best;
}

PeiDecision pei_host_filter(HostCache& cache, const std::vector<uint64_t>& operand_paddrs) {
    PeiDecision d;
    std::vector<bool> hits(operand_paddrs.size());
    bool any = false;
    for (size_t i = 0; i < operand_paddrs.size(); ++i) {
        hits[i] = cache.probe(operand_paddrs[i]);
        any = any || hits[i];
    }
    if (!any) return d;  // all miss: offload
    d.host_execute = true;
    for (size_t i = 0; i < operand_paddrs.size(); ++i)
        if (!hits[i]) d.miss_slots.push_back(int(i));
    return d;
}

std::vector<int> mc_corner_cubes(const memnet::MeshConfig& mesh) {
    using memnet::cube_id_of;
    return {cube_id_of({0, 0}, mesh), cube_id_of({mesh.width - 1, 0}, mesh),
            cube_id_of({0, mesh.height - 1}, mesh), cube_id_of({mesh.width - 1, mesh.height - 1}, mesh)};
}

int mc_of_cube(int cube, const memnet::MeshConfig& mesh) {
    memnet::Coord c = memnet::coord_of(cube, mesh);
    int right = c.x >= (mesh.width + 1) / 2 ? 1 : 0;
    int top = c.y >= (mesh.height + 1) / 2 ? 1 : 0;
    return top * 2 + right;
}

std::optional<CandidateSelection> select_candidate_page(std::vector<PageInfoCache>& caches, int& cursor) {
    int n = int(caches.size());
    for (int i = 0; i < n; ++i) {
        int mc = (cursor + i) % n;
        const PageInfoEntry* e = caches[size_t(mc)].hottest();
        if (e) {
            cursor = (mc + 1) % n;
            return CandidateSelection{mc, e->page};
        }
    }
    return std::nullopt;
}

}  // namespace nmpsim::offload
