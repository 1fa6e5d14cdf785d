#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "gfcl/episodes.hpp"
#include "gfcl/graph.hpp"

using namespace gfcl;

namespace {

/// Labeled nodes in class-contiguous blocks; edges are irrelevant to the
/// sampling machinery.
Graph block_graph(std::size_t classes, std::size_t per_class) {
    const std::size_t n = classes * per_class;
    std::vector<int> labels(n);
    for (std::size_t v = 0; v < n; ++v) labels[v] = static_cast<int>(v / per_class);
    return Graph::build({}, Tensor({n, 2}), std::move(labels));
}

SplitSpec spec_of(std::size_t base, std::size_t tr, std::size_t val, std::size_t test,
                  std::size_t k, std::uint64_t seed) {
    SplitSpec spec;
    spec.n_base = base;
    spec.n_novel_tr = tr;
    spec.n_novel_val = val;
    spec.n_novel_test = test;
    spec.k_shot = k;
    spec.seed = seed;
    return spec;
}

bool same_splits(const DataSplits& a, const DataSplits& b) {
    return a.base_classes == b.base_classes && a.novel_tr_classes == b.novel_tr_classes &&
           a.novel_val_classes == b.novel_val_classes &&
           a.novel_test_classes == b.novel_test_classes && a.base_train == b.base_train &&
           a.base_val == b.base_val && a.base_test == b.base_test &&
           a.novel_nodes == b.novel_nodes && a.masked == b.masked;
}

bool same_task(const EpisodeTask& a, const EpisodeTask& b) {
    if (a.session_index != b.session_index || a.classes.size() != b.classes.size()) return false;
    for (std::size_t i = 0; i < a.classes.size(); ++i) {
        if (a.classes[i].class_id != b.classes[i].class_id ||
            a.classes[i].session != b.classes[i].session ||
            a.classes[i].support != b.classes[i].support ||
            a.classes[i].query != b.classes[i].query) {
            return false;
        }
    }
    return true;
}

}  // namespace

TEST_CASE("a 77-class graph splits into 20/30/27 with none left for validation") {
    const Graph g = block_graph(77, 5);
    const DataSplits splits = make_splits(g, spec_of(20, 30, 0, 27, 2, 1));
    REQUIRE(splits.base_classes.size() == 20);
    REQUIRE(splits.novel_tr_classes.size() == 30);
    REQUIRE(splits.novel_val_classes.empty());
    REQUIRE(splits.novel_test_classes.size() == 27);

    std::set<int> all;
    for (const auto* group : {&splits.base_classes, &splits.novel_tr_classes,
                              &splits.novel_test_classes}) {
        for (const int c : *group) REQUIRE(all.insert(c).second);
    }
    REQUIRE(all.size() == 77);

    // Masked nodes are exactly the evaluation-novel classes' nodes.
    for (const int c : splits.novel_test_classes) {
        for (const std::size_t v : g.nodes_of_class(c)) REQUIRE(splits.is_masked(v));
    }
    for (const int c : splits.base_classes) {
        for (const std::size_t v : g.nodes_of_class(c)) REQUIRE_FALSE(splits.is_masked(v));
    }
}

TEST_CASE("splits are deterministic per seed") {
    const Graph g = block_graph(12, 10);
    const SplitSpec spec = spec_of(4, 4, 0, 4, 2, 77);
    REQUIRE(same_splits(make_splits(g, spec), make_splits(g, spec)));
    const DataSplits other = make_splits(g, spec_of(4, 4, 0, 4, 2, 78));
    REQUIRE_FALSE(make_splits(g, spec).base_classes == other.base_classes);
}

TEST_CASE("split validation errors") {
    const Graph g = block_graph(77, 5);
    REQUIRE_THROWS_WITH(make_splits(g, spec_of(100, 0, 0, 0, 2, 1)),
                        Catch::Matchers::ContainsSubstring("77"));
    // k=3 needs 7 nodes per class but classes have 5.
    REQUIRE_THROWS_WITH(make_splits(g, spec_of(20, 30, 0, 27, 3, 1)),
                        Catch::Matchers::ContainsSubstring("labeled nodes"));
    SplitSpec bad = spec_of(4, 4, 0, 4, 2, 1);
    bad.base_train_fraction = 0.9;
    REQUIRE_THROWS_AS(make_splits(g, bad), std::invalid_argument);
}

TEST_CASE("base node pools are disjoint and cover every base class node") {
    const Graph g = block_graph(6, 20);
    const DataSplits splits = make_splits(g, spec_of(3, 2, 0, 1, 3, 5));
    for (const int c : splits.base_classes) {
        std::set<std::size_t> seen;
        for (const auto* pool : {&splits.base_train.at(c), &splits.base_val.at(c),
                                 &splits.base_test.at(c)}) {
            for (const std::size_t v : *pool) {
                REQUIRE(seen.insert(v).second);
                REQUIRE(g.label(v) == c);
            }
        }
        REQUIRE(seen.size() == 20);
        REQUIRE(splits.base_train.at(c).size() == 12);
        REQUIRE(splits.base_val.at(c).size() == 4);
        REQUIRE(splits.base_test.at(c).size() == 4);
    }
}

TEST_CASE("the registry partitions seen classes") {
    ClassRegistry registry;
    registry.reset({3, 1, 2});
    REQUIRE(registry.session_classes(0) == std::vector<int>{1, 2, 3});
    registry.append_session({9, 7}, {{7, {10, 11}}, {9, {12, 13}}});
    REQUIRE(registry.num_sessions() == 2);
    REQUIRE(registry.session_of(7) == 1);
    REQUIRE(registry.session_of(1) == 0);
    REQUIRE(registry.session_of(42) == -1);
    REQUIRE(registry.cached_support(1) == nullptr);
    REQUIRE(*registry.cached_support(9) == std::vector<std::size_t>{12, 13});
    REQUIRE(registry.seen_classes() == std::vector<int>{1, 2, 3, 7, 9});
    REQUIRE_THROWS_AS(registry.append_session({7}, {{7, {1}}}), std::invalid_argument);
}

TEST_CASE("meta episodes grow the label space by N per session until the pool recycles") {
    const Graph g = block_graph(34, 12);  // 4 base + 30 pseudo-novel
    const DataSplits splits = make_splits(g, spec_of(4, 30, 0, 0, 3, 9));
    EpisodeSampler sampler(splits, EpisodeSampler::Mode::MetaTrain, 3, 3, 3, 9);

    // 30 pseudo-novel classes at N=3 support ten sessions per cycle.
    for (int i = 1; i <= 10; ++i) {
        const EpisodeTask task = sampler.next();
        task.validate();
        REQUIRE(task.session_index == static_cast<std::size_t>(i));
        REQUIRE(task.classes.size() == 4 + 3 * static_cast<std::size_t>(i));
        REQUIRE(sampler.reset_count() == 0);
    }
    const EpisodeTask task = sampler.next();
    REQUIRE(sampler.reset_count() == 1);
    REQUIRE(task.session_index == 1);
    REQUIRE(task.classes.size() == 4 + 3);
}

TEST_CASE("cached supports are reused verbatim in later sessions") {
    const Graph g = block_graph(10, 12);
    const DataSplits splits = make_splits(g, spec_of(4, 6, 0, 0, 3, 11));
    EpisodeSampler sampler(splits, EpisodeSampler::Mode::MetaTrain, 2, 3, 3, 11);

    const EpisodeTask first = sampler.next();
    std::map<int, std::vector<std::size_t>> cached;
    for (const ClassSlot& slot : first.classes) {
        if (slot.session == 1) cached[slot.class_id] = slot.support;
    }
    const EpisodeTask second = sampler.next();
    for (const ClassSlot& slot : second.classes) {
        if (slot.session == 1) {
            REQUIRE(cached.count(slot.class_id) == 1);
            REQUIRE(slot.support == cached[slot.class_id]);
        }
    }
}

TEST_CASE("evaluation streams use disjoint novel classes and held-out base queries") {
    const Graph g = block_graph(12, 14);
    const DataSplits splits = make_splits(g, spec_of(4, 4, 0, 4, 3, 13));
    const auto tasks =
        eval_session_stream(splits, EpisodeSampler::Mode::EvalTest, 2, 3, 3, 2, 13);
    REQUIRE(tasks.size() == 2);

    std::set<int> novel_seen;
    for (const EpisodeTask& task : tasks) {
        task.validate();
        for (const ClassSlot& slot : task.classes) {
            if (slot.session == static_cast<int>(task.session_index)) {
                REQUIRE(novel_seen.insert(slot.class_id).second);
            }
            const bool is_base = std::binary_search(splits.base_classes.begin(),
                                                    splits.base_classes.end(), slot.class_id);
            if (is_base) {
                for (const std::size_t v : slot.query) {
                    const auto& pool = splits.base_test.at(slot.class_id);
                    REQUIRE(std::binary_search(pool.begin(), pool.end(), v));
                }
                for (const std::size_t v : slot.support) {
                    const auto& pool = splits.base_train.at(slot.class_id);
                    REQUIRE(std::binary_search(pool.begin(), pool.end(), v));
                }
            }
        }
    }
}

TEST_CASE("evaluation can fold the meta-training classes into the base session") {
    const Graph g = block_graph(12, 14);
    const DataSplits splits = make_splits(g, spec_of(4, 4, 0, 4, 3, 14));
    const auto tasks = eval_session_stream(splits, EpisodeSampler::Mode::EvalTest, 2, 3, 3, 1, 14,
                                           /*include_novel_tr_as_base=*/true);
    std::set<int> session0;
    for (const ClassSlot& slot : tasks[0].classes) {
        if (slot.session == 0) session0.insert(slot.class_id);
    }
    REQUIRE(session0.size() == 8);
    for (const int c : splits.novel_tr_classes) REQUIRE(session0.count(c) == 1);

    const auto plain = eval_session_stream(splits, EpisodeSampler::Mode::EvalTest, 2, 3, 3, 1, 14);
    std::size_t base_count = 0;
    for (const ClassSlot& slot : plain[0].classes) {
        if (slot.session == 0) ++base_count;
    }
    REQUIRE(base_count == 4);
}

TEST_CASE("the evaluation pool bounds the session count") {
    const Graph g = block_graph(31, 12);  // 4 base + 27 novel-test
    const DataSplits splits = make_splits(g, spec_of(4, 0, 0, 27, 3, 15));
    REQUIRE_NOTHROW(eval_session_stream(splits, EpisodeSampler::Mode::EvalTest, 3, 3, 3, 9, 15));
    REQUIRE_THROWS_AS(eval_session_stream(splits, EpisodeSampler::Mode::EvalTest, 3, 3, 3, 10, 15),
                      std::invalid_argument);
}

TEST_CASE("streams are a pure function of their inputs") {
    const Graph g = block_graph(12, 14);
    const DataSplits splits = make_splits(g, spec_of(4, 4, 0, 4, 3, 17));
    EpisodeSampler a(splits, EpisodeSampler::Mode::MetaTrain, 2, 3, 3, 99);
    EpisodeSampler b(splits, EpisodeSampler::Mode::MetaTrain, 2, 3, 3, 99);
    EpisodeSampler c(splits, EpisodeSampler::Mode::MetaTrain, 2, 3, 3, 100);
    bool any_difference = false;
    for (int i = 0; i < 8; ++i) {
        const EpisodeTask ta = a.next();
        REQUIRE(same_task(ta, b.next()));
        if (!same_task(ta, c.next())) any_difference = true;
    }
    REQUIRE(any_difference);
}

TEST_CASE("episode invariants and masking hold over many sampled episodes") {
    const Graph g = block_graph(14, 14);
    const DataSplits splits = make_splits(g, spec_of(4, 6, 0, 4, 3, 19));
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        EpisodeSampler sampler(splits, EpisodeSampler::Mode::MetaTrain, 2, 3, 3, seed);
        for (int ep = 0; ep < 100; ++ep) {
            const EpisodeTask task = sampler.next();
            task.validate();
            for (const ClassSlot& slot : task.classes) {
                for (const std::size_t v : slot.support) REQUIRE_FALSE(splits.is_masked(v));
                for (const std::size_t v : slot.query) REQUIRE_FALSE(splits.is_masked(v));
            }
        }
    }
}

TEST_CASE("a class without enough disjoint query nodes is reported") {
    // Classes have exactly 2K+1 nodes; K support + K query fit, but asking
    // for more queries than remain must fail loudly.
    const Graph g = block_graph(6, 7);
    const DataSplits splits = make_splits(g, spec_of(2, 4, 0, 0, 3, 21));
    EpisodeSampler sampler(splits, EpisodeSampler::Mode::MetaTrain, 2, 3, 5, 21);
    REQUIRE_THROWS_WITH(sampler.next(), Catch::Matchers::ContainsSubstring("query"));
}

TEST_CASE("split manifest lists every assignment") {
    const Graph g = block_graph(8, 10);
    const DataSplits splits = make_splits(g, spec_of(3, 2, 1, 2, 2, 23));
    const nlohmann::json manifest = split_manifest(splits);
    REQUIRE(manifest.at("classes").at("base").size() == 3);
    REQUIRE(manifest.at("classes").at("novel_val").size() == 1);
    REQUIRE(manifest.at("masked_nodes").size() == 20);
    const std::string key = std::to_string(splits.base_classes.front());
    REQUIRE(manifest.at("base_nodes").at(key).contains("train"));
}
