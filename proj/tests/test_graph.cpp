#include <catch2/catch_amalgamated.hpp>

#include "gfcl/graph.hpp"
#include "gfcl/rng.hpp"
#include "oracles.hpp"

using namespace gfcl;

namespace {

Tensor unit_features(std::size_t n, std::size_t dim = 2) { return Tensor({n, dim}); }

Graph random_graph(std::size_t n, double p, Rng& rng, std::size_t dim = 3) {
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (rng.uniform() < p) edges.emplace_back(i, j);
        }
    }
    return Graph::build(edges, oracles::random_tensor({n, dim}, rng));
}

}  // namespace

TEST_CASE("single edge gives unit degrees") {
    const Graph g = Graph::build({{0, 1}}, unit_features(2));
    REQUIRE(g.num_nodes() == 2);
    REQUIRE(g.degree(0) == 1);
    REQUIRE(g.degree(1) == 1);
    REQUIRE(g.num_edges() == 1);
}

TEST_CASE("duplicates, reversed orientations, and self-loops collapse") {
    const Graph g = Graph::build({{0, 1}, {1, 0}, {0, 0}}, unit_features(2));
    REQUIRE(g.num_edges() == 1);
    REQUIRE(g.degree(0) == 1);
    REQUIRE(g.degree(1) == 1);
}

TEST_CASE("triangle is symmetric with degree two everywhere") {
    const Graph g = Graph::build({{0, 1}, {1, 2}, {2, 0}}, unit_features(3));
    for (std::size_t v = 0; v < 3; ++v) {
        REQUIRE(g.degree(v) == 2);
        for (const std::size_t u : g.neighbors(v)) {
            const auto back = g.neighbors(u);
            REQUIRE(std::find(back.begin(), back.end(), v) != back.end());
        }
    }
}

TEST_CASE("construction errors") {
    REQUIRE_THROWS_AS(Graph::build({{0, 2}}, unit_features(2)), std::invalid_argument);
    REQUIRE_THROWS_AS(Graph::build({}, Tensor()), std::invalid_argument);
    REQUIRE_THROWS_AS(Graph::build({}, unit_features(2), {1}), std::invalid_argument);
}

TEST_CASE("propagate on a two-node path mixes the rows") {
    const Graph g = Graph::build({{0, 1}}, unit_features(2));
    const Tensor h({2, 2}, {1.0, 0.0, 0.0, 1.0});
    const Tensor out = propagate(g, h);
    const Tensor expected({2, 2}, {1.0, 1.0, 1.0, 1.0});
    REQUIRE(max_abs_diff(out, expected) < 1e-15);
}

TEST_CASE("propagate on a triangle normalizes by sqrt(d_j d_j')") {
    const Graph g = Graph::build({{0, 1}, {1, 2}, {2, 0}}, unit_features(3));
    const Tensor h({3, 2}, {1.0, 0.0, 0.0, 1.0, 0.0, 0.0});
    const Tensor out = propagate(g, h);
    REQUIRE(out.at(2, 0) == Catch::Approx(0.5).margin(1e-15));
    REQUIRE(out.at(2, 1) == Catch::Approx(0.5).margin(1e-15));
}

TEST_CASE("isolated nodes pass through unchanged") {
    const Graph g = Graph::build({{0, 1}}, unit_features(3));
    Rng rng(1);
    const Tensor h = oracles::random_tensor({3, 2}, rng);
    const Tensor out = propagate(g, h);
    REQUIRE(out.at(2, 0) == h.at(2, 0));
    REQUIRE(out.at(2, 1) == h.at(2, 1));
}

TEST_CASE("propagate rejects mismatched row counts") {
    const Graph g = Graph::build({{0, 1}}, unit_features(2));
    REQUIRE_THROWS_AS(propagate(g, Tensor({3, 2})), std::invalid_argument);
}

TEST_CASE("propagate is linear") {
    Rng rng(21);
    for (int trial = 0; trial < 10; ++trial) {
        const Graph g = random_graph(12, 0.3, rng);
        const Tensor h1 = oracles::random_tensor({12, 4}, rng);
        const Tensor h2 = oracles::random_tensor({12, 4}, rng);
        const double a = rng.normal(), b = rng.normal();
        Tensor combo({12, 4});
        for (std::size_t i = 0; i < combo.size(); ++i) combo[i] = a * h1[i] + b * h2[i];

        const Tensor lhs = propagate(g, combo);
        const Tensor p1 = propagate(g, h1);
        const Tensor p2 = propagate(g, h2);
        Tensor rhs({12, 4});
        for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] = a * p1[i] + b * p2[i];
        REQUIRE(max_abs_diff(lhs, rhs) < 1e-12);
    }
}

TEST_CASE("propagate matches the dense normalized-adjacency oracle") {
    Rng rng(22);
    for (const std::size_t n : {5, 17, 50}) {
        const Graph g = random_graph(n, 0.25, rng);
        const Tensor h = oracles::random_tensor({n, 6}, rng);
        REQUIRE(max_abs_diff(propagate(g, h), oracles::dense_propagate(g, h)) < 1e-10);
    }
}

TEST_CASE("propagate commutes with node relabeling") {
    Rng rng(23);
    for (int trial = 0; trial < 5; ++trial) {
        const std::size_t n = 14;
        const Graph g = random_graph(n, 0.3, rng);
        std::vector<std::size_t> perm(n);
        for (std::size_t v = 0; v < n; ++v) perm[v] = v;
        rng.shuffle(perm);

        const Graph pg = oracles::permute_graph(g, perm);
        const Tensor h = oracles::random_tensor({n, 3}, rng);
        const Tensor ph = oracles::permute_rows(h, perm);

        const Tensor expected = oracles::permute_rows(propagate(g, h), perm);
        REQUIRE(max_abs_diff(propagate(pg, ph), expected) < 1e-12);
    }
}

TEST_CASE("class queries") {
    Tensor x = unit_features(5);
    const Graph g = Graph::build({{0, 1}}, std::move(x), {2, 2, 5, kUnlabeled, 5});
    REQUIRE(g.class_ids() == std::vector<int>{2, 5});
    REQUIRE(g.nodes_of_class(5) == std::vector<std::size_t>{2, 4});
    REQUIRE(g.label(3) == kUnlabeled);
}
