#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gfcl/graph.hpp"
#include "gfcl/rng.hpp"

namespace gfcl {

/// How the label space and the labeled nodes are carved up before any
/// training happens. Counts select disjoint class sets; fractions split the
/// nodes of each base class into train/val/test pools.
struct SplitSpec {
    std::size_t n_base = 0;
    std::size_t n_novel_tr = 0;
    std::size_t n_novel_val = 0;
    std::size_t n_novel_test = 0;
    double base_train_fraction = 0.6;
    double base_val_fraction = 0.2;
    double base_test_fraction = 0.2;
    /// Episode shot count; splitting requires every class to hold at least
    /// 2K+1 labeled nodes so supports, queries, and a holdout all fit.
    std::size_t k_shot = 5;
    std::uint64_t seed = 0;
};

struct DataSplits {
    std::vector<int> base_classes;
    std::vector<int> novel_tr_classes;
    std::vector<int> novel_val_classes;
    std::vector<int> novel_test_classes;

    /// Per base class, disjoint node pools.
    std::map<int, std::vector<std::size_t>> base_train;
    std::map<int, std::vector<std::size_t>> base_val;
    std::map<int, std::vector<std::size_t>> base_test;

    /// Per novel class (any of the three novel sets), all labeled nodes.
    std::map<int, std::vector<std::size_t>> novel_nodes;

    /// Nodes of evaluation-novel classes; these never appear in pre-training
    /// or meta-training episodes.
    std::vector<char> masked;

    bool is_masked(std::size_t v) const { return v < masked.size() && masked[v]; }

    std::vector<std::size_t> masked_nodes() const {
        std::vector<std::size_t> out;
        for (std::size_t v = 0; v < masked.size(); ++v) {
            if (masked[v]) out.push_back(v);
        }
        return out;
    }
};

/// Deterministic class- and node-level split. Classes are assigned by a
/// seeded shuffle; nodes of each base class are split per-class by the
/// requested fractions.
inline DataSplits make_splits(const Graph& graph, const SplitSpec& spec) {
    const double frac_sum =
        spec.base_train_fraction + spec.base_val_fraction + spec.base_test_fraction;
    if (std::abs(frac_sum - 1.0) > 1e-9) {
        throw std::invalid_argument("make_splits: base node fractions must sum to 1");
    }
    if (spec.n_base == 0) throw std::invalid_argument("make_splits: need at least one base class");

    std::vector<int> classes = graph.class_ids();
    const std::size_t wanted =
        spec.n_base + spec.n_novel_tr + spec.n_novel_val + spec.n_novel_test;
    if (wanted > classes.size()) {
        throw std::invalid_argument("make_splits: requested " + std::to_string(wanted) +
                                    " classes but only " + std::to_string(classes.size()) +
                                    " are labeled");
    }
    const std::size_t min_nodes = 2 * spec.k_shot + 1;
    for (const int c : classes) {
        const std::size_t n = graph.nodes_of_class(c).size();
        if (n < min_nodes) {
            throw std::invalid_argument("make_splits: class " + std::to_string(c) + " has only " +
                                        std::to_string(n) + " labeled nodes, needs " +
                                        std::to_string(min_nodes));
        }
    }

    Rng class_rng(derive_seed(spec.seed, "class-split"));
    class_rng.shuffle(classes);

    DataSplits splits;
    auto take = [&classes](std::size_t offset, std::size_t count) {
        std::vector<int> out(classes.begin() + static_cast<std::ptrdiff_t>(offset),
                             classes.begin() + static_cast<std::ptrdiff_t>(offset + count));
        std::sort(out.begin(), out.end());
        return out;
    };
    splits.base_classes = take(0, spec.n_base);
    splits.novel_tr_classes = take(spec.n_base, spec.n_novel_tr);
    splits.novel_val_classes = take(spec.n_base + spec.n_novel_tr, spec.n_novel_val);
    splits.novel_test_classes =
        take(spec.n_base + spec.n_novel_tr + spec.n_novel_val, spec.n_novel_test);

    Rng node_rng(derive_seed(spec.seed, "node-split"));
    for (const int c : splits.base_classes) {
        std::vector<std::size_t> nodes = graph.nodes_of_class(c);
        node_rng.shuffle(nodes);
        const std::size_t n = nodes.size();
        const auto n_tr = static_cast<std::size_t>(spec.base_train_fraction * static_cast<double>(n));
        const auto n_val = static_cast<std::size_t>(spec.base_val_fraction * static_cast<double>(n));
        auto slice = [&nodes](std::size_t lo, std::size_t hi) {
            std::vector<std::size_t> out(nodes.begin() + static_cast<std::ptrdiff_t>(lo),
                                         nodes.begin() + static_cast<std::ptrdiff_t>(hi));
            std::sort(out.begin(), out.end());
            return out;
        };
        splits.base_train[c] = slice(0, n_tr);
        splits.base_val[c] = slice(n_tr, n_tr + n_val);
        splits.base_test[c] = slice(n_tr + n_val, n);
    }

    for (const auto* group :
         {&splits.novel_tr_classes, &splits.novel_val_classes, &splits.novel_test_classes}) {
        for (const int c : *group) splits.novel_nodes[c] = graph.nodes_of_class(c);
    }

    splits.masked.assign(graph.num_nodes(), 0);
    for (const int c : splits.novel_test_classes) {
        for (const std::size_t v : splits.novel_nodes[c]) splits.masked[v] = 1;
    }
    return splits;
}

inline nlohmann::json split_manifest(const DataSplits& splits) {
    nlohmann::json j;
    j["classes"] = {{"base", splits.base_classes},
                    {"novel_tr", splits.novel_tr_classes},
                    {"novel_val", splits.novel_val_classes},
                    {"novel_test", splits.novel_test_classes}};
    nlohmann::json base_nodes;
    for (const int c : splits.base_classes) {
        base_nodes[std::to_string(c)] = {{"train", splits.base_train.at(c)},
                                         {"val", splits.base_val.at(c)},
                                         {"test", splits.base_test.at(c)}};
    }
    j["base_nodes"] = std::move(base_nodes);
    nlohmann::json novel_nodes;
    for (const auto& [c, nodes] : splits.novel_nodes) novel_nodes[std::to_string(c)] = nodes;
    j["novel_nodes"] = std::move(novel_nodes);
    j["masked_nodes"] = splits.masked_nodes();
    return j;
}

/// Which classes arrived in which session, plus the cached support nodes of
/// every novel class. Base classes have no cache; their supports are drawn
/// fresh each episode.
class ClassRegistry {
public:
    void reset(std::vector<int> base_classes) {
        std::sort(base_classes.begin(), base_classes.end());
        sessions_.clear();
        session_of_.clear();
        cache_.clear();
        add_session(std::move(base_classes));
    }

    void append_session(std::vector<int> classes,
                        const std::map<int, std::vector<std::size_t>>& supports) {
        std::sort(classes.begin(), classes.end());
        for (const int c : classes) {
            const auto it = supports.find(c);
            if (it == supports.end()) {
                throw std::invalid_argument("ClassRegistry: missing cached support for class " +
                                            std::to_string(c));
            }
            cache_[c] = it->second;
        }
        add_session(std::move(classes));
    }

    std::size_t num_sessions() const { return sessions_.size(); }

    const std::vector<int>& session_classes(std::size_t i) const { return sessions_[i]; }

    /// -1 when the class has not been seen.
    int session_of(int class_id) const {
        const auto it = session_of_.find(class_id);
        return it == session_of_.end() ? -1 : it->second;
    }

    /// nullptr for base classes and unseen classes.
    const std::vector<std::size_t>* cached_support(int class_id) const {
        const auto it = cache_.find(class_id);
        return it == cache_.end() ? nullptr : &it->second;
    }

    /// All seen classes, session-major, ascending within each session.
    std::vector<int> seen_classes() const {
        std::vector<int> out;
        for (const auto& session : sessions_) out.insert(out.end(), session.begin(), session.end());
        return out;
    }

private:
    void add_session(std::vector<int> classes) {
        const int index = static_cast<int>(sessions_.size());
        for (const int c : classes) {
            if (session_of_.count(c)) {
                throw std::invalid_argument("ClassRegistry: class " + std::to_string(c) +
                                            " already registered");
            }
            session_of_[c] = index;
        }
        sessions_.push_back(std::move(classes));
    }

    std::vector<std::vector<int>> sessions_;
    std::map<int, int> session_of_;
    std::map<int, std::vector<std::size_t>> cache_;
};

/// One session's worth of work: supports and queries for every class seen so
/// far, with the session each class arrived in. Slots are ordered
/// session-major, class-ascending.
struct ClassSlot {
    int class_id = 0;
    int session = 0;
    std::vector<std::size_t> support;
    std::vector<std::size_t> query;
};

struct EpisodeTask {
    std::size_t session_index = 0;
    std::size_t n_way = 0;
    std::size_t k_shot = 0;
    std::vector<ClassSlot> classes;

    std::size_t num_sessions() const { return session_index + 1; }

    /// Throws if any episode invariant is violated.
    void validate() const {
        if (classes.empty()) throw std::logic_error("EpisodeTask: no classes");
        std::set<std::size_t> support_set;
        std::set<std::size_t> query_set;
        std::set<int> class_set;
        std::size_t newest = 0;
        for (std::size_t i = 0; i < classes.size(); ++i) {
            const ClassSlot& slot = classes[i];
            if (i > 0) {
                const ClassSlot& prev = classes[i - 1];
                if (std::make_pair(prev.session, prev.class_id) >=
                    std::make_pair(slot.session, slot.class_id)) {
                    throw std::logic_error("EpisodeTask: slots out of order");
                }
            }
            if (!class_set.insert(slot.class_id).second) {
                throw std::logic_error("EpisodeTask: duplicate class");
            }
            if (slot.support.size() != k_shot) {
                throw std::logic_error("EpisodeTask: class " + std::to_string(slot.class_id) +
                                       " support size != K");
            }
            if (slot.query.empty()) {
                throw std::logic_error("EpisodeTask: class " + std::to_string(slot.class_id) +
                                       " has no queries");
            }
            for (const std::size_t v : slot.support) support_set.insert(v);
            for (const std::size_t v : slot.query) query_set.insert(v);
            newest = std::max(newest, static_cast<std::size_t>(slot.session));
        }
        if (newest != session_index) {
            throw std::logic_error("EpisodeTask: session_index does not match newest slot");
        }
        if (session_index > 0) {
            std::size_t novel = 0;
            for (const ClassSlot& slot : classes) {
                if (static_cast<std::size_t>(slot.session) == session_index) ++novel;
            }
            if (novel != n_way) {
                throw std::logic_error("EpisodeTask: newest session must introduce exactly N classes");
            }
        }
        for (const std::size_t v : query_set) {
            if (support_set.count(v)) {
                throw std::logic_error("EpisodeTask: node " + std::to_string(v) +
                                       " appears in both support and query");
            }
        }
    }
};

/// Streams incremental-session tasks. In MetaTrain mode the pseudo-novel
/// class pool recycles: once fewer than N unused classes remain, the
/// registry drops back to the base classes and the pool refills, so the
/// stream never runs dry. Evaluation modes walk the held-out class pool once
/// and throw when it is exhausted.
///
/// All draws come from one seeded generator in a fixed order, so the entire
/// stream is a pure function of (splits, mode, N, K, query_k, seed).
class EpisodeSampler {
public:
    enum class Mode { MetaTrain, EvalTest, EvalVal };

    EpisodeSampler(const DataSplits& splits, Mode mode, std::size_t n_way, std::size_t k_shot,
                   std::size_t query_k, std::uint64_t seed, bool include_novel_tr_as_base = false)
        : splits_(&splits),
          mode_(mode),
          n_way_(n_way),
          k_shot_(k_shot),
          query_k_(query_k),
          rng_(derive_seed(seed, "episodes")) {
        if (n_way == 0 || k_shot == 0 || query_k == 0) {
            throw std::invalid_argument("EpisodeSampler: N, K, and query size must be positive");
        }
        base_classes_ = splits.base_classes;
        if (mode != Mode::MetaTrain && include_novel_tr_as_base) {
            base_classes_.insert(base_classes_.end(), splits.novel_tr_classes.begin(),
                                 splits.novel_tr_classes.end());
            std::sort(base_classes_.begin(), base_classes_.end());
        }
        switch (mode) {
            case Mode::MetaTrain: pool_ = splits.novel_tr_classes; break;
            case Mode::EvalTest: pool_ = splits.novel_test_classes; break;
            case Mode::EvalVal: pool_ = splits.novel_val_classes; break;
        }
        registry_.reset(base_classes_);
    }

    const ClassRegistry& registry() const { return registry_; }
    std::size_t reset_count() const { return reset_count_; }

    std::size_t remaining_novel() const {
        std::size_t unused = 0;
        for (const int c : pool_) {
            if (registry_.session_of(c) < 0) ++unused;
        }
        return unused;
    }

    /// Sessions the pool can still supply before recycling (or exhaustion).
    std::size_t max_sessions() const { return remaining_novel() / n_way_; }

    EpisodeTask next() {
        if (remaining_novel() < n_way_) {
            if (mode_ != Mode::MetaTrain) {
                throw std::invalid_argument(
                    "EpisodeSampler: novel class pool exhausted after " +
                    std::to_string(registry_.num_sessions() - 1) + " sessions");
            }
            registry_.reset(base_classes_);
            ++reset_count_;
        }

        std::vector<int> unused;
        for (const int c : pool_) {
            if (registry_.session_of(c) < 0) unused.push_back(c);
        }
        const std::vector<int> new_classes = rng_.sample(unused, n_way_);

        std::map<int, std::vector<std::size_t>> new_supports;
        for (const int c : new_classes) {
            new_supports[c] = sample_nodes(splits_->novel_nodes.at(c), k_shot_, c, "support");
        }
        std::map<int, std::vector<std::size_t>> base_supports;
        for (const int c : base_classes_) {
            base_supports[c] = sample_nodes(base_support_pool(c), k_shot_, c, "support");
        }

        registry_.append_session(new_classes, new_supports);

        EpisodeTask task;
        task.session_index = registry_.num_sessions() - 1;
        task.n_way = n_way_;
        task.k_shot = k_shot_;
        for (std::size_t s = 0; s < registry_.num_sessions(); ++s) {
            for (const int c : registry_.session_classes(s)) {
                ClassSlot slot;
                slot.class_id = c;
                slot.session = static_cast<int>(s);
                if (s == 0) {
                    slot.support = base_supports.at(c);
                } else {
                    slot.support = *registry_.cached_support(c);
                }
                slot.query = sample_queries(c, s == 0, slot.support);
                task.classes.push_back(std::move(slot));
            }
        }
        return task;
    }

private:
    const std::vector<std::size_t>& base_support_pool(int c) const {
        // Classes folded in from the meta-train pool have no node-level split.
        const auto it = splits_->base_train.find(c);
        return it != splits_->base_train.end() ? it->second : splits_->novel_nodes.at(c);
    }

    const std::vector<std::size_t>& base_query_pool(int c) const {
        if (!splits_->base_train.count(c)) return splits_->novel_nodes.at(c);
        switch (mode_) {
            case Mode::MetaTrain: return splits_->base_train.at(c);
            case Mode::EvalTest: return splits_->base_test.at(c);
            case Mode::EvalVal: return splits_->base_val.at(c);
        }
        throw std::logic_error("unreachable");
    }

    std::vector<std::size_t> sample_queries(int c, bool is_base,
                                            const std::vector<std::size_t>& support) {
        const std::vector<std::size_t>& pool =
            is_base ? base_query_pool(c) : splits_->novel_nodes.at(c);
        std::vector<std::size_t> eligible;
        eligible.reserve(pool.size());
        for (const std::size_t v : pool) {
            if (!std::binary_search(support.begin(), support.end(), v)) eligible.push_back(v);
        }
        return sample_nodes(eligible, query_k_, c, "query");
    }

    std::vector<std::size_t> sample_nodes(const std::vector<std::size_t>& pool, std::size_t k,
                                          int class_id, const char* what) {
        if (pool.size() < k) {
            throw std::invalid_argument("EpisodeSampler: class " + std::to_string(class_id) +
                                        " lacks " + std::to_string(k) + " disjoint " + what +
                                        " nodes (" + std::to_string(pool.size()) + " available)");
        }
        return rng_.sample(pool, k);
    }

    const DataSplits* splits_;
    Mode mode_;
    std::size_t n_way_;
    std::size_t k_shot_;
    std::size_t query_k_;
    Rng rng_;
    std::vector<int> base_classes_;
    std::vector<int> pool_;
    ClassRegistry registry_;
    std::size_t reset_count_ = 0;
};

/// The full evaluation (or validation) session sequence. Validates up front
/// that the held-out pool can supply T disjoint sessions.
inline std::vector<EpisodeTask> eval_session_stream(const DataSplits& splits,
                                                    EpisodeSampler::Mode mode, std::size_t n_way,
                                                    std::size_t k_shot, std::size_t query_k,
                                                    std::size_t sessions, std::uint64_t seed,
                                                    bool include_novel_tr_as_base = false) {
    if (mode == EpisodeSampler::Mode::MetaTrain) {
        throw std::invalid_argument("eval_session_stream: evaluation mode required");
    }
    const std::size_t pool = mode == EpisodeSampler::Mode::EvalTest
                                 ? splits.novel_test_classes.size()
                                 : splits.novel_val_classes.size();
    if (sessions * n_way > pool) {
        throw std::invalid_argument("eval_session_stream: " + std::to_string(sessions) +
                                    " sessions of " + std::to_string(n_way) +
                                    " classes exceed the " + std::to_string(pool) +
                                    "-class held-out pool");
    }
    EpisodeSampler sampler(splits, mode, n_way, k_shot, query_k, seed, include_novel_tr_as_base);
    std::vector<EpisodeTask> tasks;
    tasks.reserve(sessions);
    for (std::size_t t = 0; t < sessions; ++t) tasks.push_back(sampler.next());
    return tasks;
}

}  // namespace gfcl
