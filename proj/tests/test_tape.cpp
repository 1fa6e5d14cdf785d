#include <catch2/catch_amalgamated.hpp>

#include "gfcl/grad_check.hpp"
#include "gfcl/graph.hpp"
#include "gfcl/rng.hpp"
#include "gfcl/tape.hpp"
#include "oracles.hpp"

using namespace gfcl;
using diff::NodeId;
using diff::Tape;

namespace {

ParamSet one_param(const std::string& name, Tensor value) {
    ParamSet params;
    params.add({name, std::move(value), true, true});
    return params;
}

/// Finite-difference check of a single-op composition; the op output is
/// contracted against fixed random coefficients so every entry of the
/// Jacobian participates.
template <typename OpBuilder>
double op_max_rel_err(const ParamSet& params, OpBuilder&& op, std::uint64_t seed = 99) {
    Rng rng(seed);
    const auto builder = [&](Tape& tape, const std::vector<NodeId>& nodes) {
        const NodeId out = op(tape, nodes);
        Tensor coeffs = Tensor::zeros_like(tape.value(out));
        Rng coeff_rng(seed + 1);
        for (auto& v : coeffs.values()) v = coeff_rng.normal();
        return tape.sum(tape.mul(out, tape.leaf(std::move(coeffs))));
    };
    return grad_check(params, builder, 1e-6, 1e-5).max_rel_err();
}

}  // namespace

TEST_CASE("linear loss has an all-ones gradient, exactly") {
    const ParamSet params = one_param("p", Tensor({4}, {1.0, -2.0, 0.5, 3.0}));
    const auto builder = [](Tape& tape, const std::vector<NodeId>& nodes) {
        return tape.sum(nodes[0]);
    };
    const auto fb = forward_backward(params, builder);
    REQUIRE(fb.loss == Catch::Approx(2.5));
    for (const double g : fb.grads.at("p").values()) REQUIRE(g == 1.0);

    const auto report = grad_check(params, builder, 1e-5, 1e-4);
    REQUIRE(report.max_rel_err() < 1e-10);
}

TEST_CASE("quadratic loss gradient equals the point itself") {
    const ParamSet params = one_param("p", Tensor({2}, {3.0, 4.0}));
    const auto builder = [](Tape& tape, const std::vector<NodeId>& nodes) {
        return tape.scale(tape.sum(tape.mul(nodes[0], nodes[0])), 0.5);
    };
    const auto fb = forward_backward(params, builder);
    REQUIRE(fb.loss == Catch::Approx(12.5));
    REQUIRE(fb.grads.at("p")[0] == Catch::Approx(3.0).margin(1e-12));
    REQUIRE(fb.grads.at("p")[1] == Catch::Approx(4.0).margin(1e-12));

    REQUIRE(grad_check(params, builder, 1e-5, 1e-4).max_rel_err() < 1e-8);
}

TEST_CASE("matmul gradients") {
    Rng rng(31);
    ParamSet params;
    params.add({"a", oracles::random_tensor({3, 4}, rng), true, true});
    params.add({"b", oracles::random_tensor({4, 2}, rng), true, true});
    const double err = op_max_rel_err(params, [](Tape& t, const std::vector<NodeId>& n) {
        return t.matmul(n[0], n[1]);
    });
    REQUIRE(err < 1e-5);
}

TEST_CASE("propagate gradients") {
    Rng rng(32);
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t i = 0; i < 8; ++i) {
        for (std::size_t j = i + 1; j < 8; ++j) {
            if (rng.uniform() < 0.4) edges.emplace_back(i, j);
        }
    }
    const Graph g = Graph::build(edges, oracles::random_tensor({8, 2}, rng));
    ParamSet params;
    params.add({"h", oracles::random_tensor({8, 3}, rng), true, true});
    const double err = op_max_rel_err(params, [&](Tape& t, const std::vector<NodeId>& n) {
        return t.propagate(g, n[0]);
    });
    REQUIRE(err < 1e-5);
}

TEST_CASE("elementwise op gradients") {
    Rng rng(33);
    ParamSet params;
    params.add({"a", oracles::random_tensor({3, 3}, rng), true, true});
    params.add({"b", oracles::random_tensor({3, 3}, rng), true, true});

    SECTION("relu") {
        REQUIRE(op_max_rel_err(params, [](Tape& t, const std::vector<NodeId>& n) {
                    return t.relu(n[0]);
                }) < 1e-5);
    }
    SECTION("sigmoid") {
        REQUIRE(op_max_rel_err(params, [](Tape& t, const std::vector<NodeId>& n) {
                    return t.sigmoid(n[0]);
                }) < 1e-5);
    }
    SECTION("add and scale and add_const") {
        REQUIRE(op_max_rel_err(params, [](Tape& t, const std::vector<NodeId>& n) {
                    return t.add_const(t.scale(t.add(n[0], n[1]), -1.7), 0.3);
                }) < 1e-5);
    }
    SECTION("mul") {
        REQUIRE(op_max_rel_err(params, [](Tape& t, const std::vector<NodeId>& n) {
                    return t.mul(n[0], n[1]);
                }) < 1e-5);
    }
    SECTION("div with denominator away from zero") {
        REQUIRE(op_max_rel_err(params, [](Tape& t, const std::vector<NodeId>& n) {
                    return t.div(n[0], t.add_const(t.mul(n[1], n[1]), 1.0));
                }) < 1e-5);
    }
    SECTION("log of a positive composition") {
        REQUIRE(op_max_rel_err(params, [](Tape& t, const std::vector<NodeId>& n) {
                    return t.log(t.add_const(t.mul(n[0], n[0]), 0.5));
                }) < 1e-5);
    }
    SECTION("mean") {
        REQUIRE(op_max_rel_err(params, [](Tape& t, const std::vector<NodeId>& n) {
                    return t.reshape(t.mean(n[0]), {std::size_t{1}});
                }) < 1e-5);
    }
}

TEST_CASE("relu and sigmoid backward match their analytic derivatives pointwise") {
    Rng rng(34);
    const Tensor x = oracles::random_tensor({40}, rng);

    Tape tape;
    const NodeId leaf = tape.leaf(x, true);
    const NodeId loss = tape.sum(tape.relu(leaf));
    tape.backward(loss);
    const Tensor g = tape.grad(leaf);
    for (std::size_t i = 0; i < x.size(); ++i) {
        REQUIRE(g[i] == (x[i] > 0.0 ? 1.0 : 0.0));
    }

    Tape tape2;
    const NodeId leaf2 = tape2.leaf(x, true);
    const NodeId loss2 = tape2.sum(tape2.sigmoid(leaf2));
    tape2.backward(loss2);
    const Tensor g2 = tape2.grad(leaf2);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double s = 1.0 / (1.0 + std::exp(-x[i]));
        REQUIRE(g2[i] == Catch::Approx(s * (1.0 - s)).margin(1e-12));
    }
}

TEST_CASE("softmax rows are positive and sum to one") {
    Rng rng(35);
    Tape tape;
    const NodeId x = tape.leaf(oracles::random_tensor({50, 7}, rng, 5.0));
    const Tensor p = tape.value(tape.softmax_rows(x));
    for (std::size_t r = 0; r < p.rows(); ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < p.cols(); ++c) {
            REQUIRE(p.at(r, c) > 0.0);
            sum += p.at(r, c);
        }
        REQUIRE(sum == Catch::Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("softmax gradients") {
    Rng rng(36);
    ParamSet params;
    params.add({"x", oracles::random_tensor({4, 5}, rng), true, true});
    REQUIRE(op_max_rel_err(params, [](Tape& t, const std::vector<NodeId>& n) {
                return t.softmax_rows(n[0]);
            }) < 1e-5);
}

TEST_CASE("pairwise squared distances match the naive oracle, and differentiate") {
    Rng rng(37);
    const Tensor q = oracles::random_tensor({6, 4}, rng);
    const Tensor p = oracles::random_tensor({3, 4}, rng);
    Tape tape;
    const Tensor d = tape.value(tape.pairwise_sqdist(tape.leaf(q), tape.leaf(p)));
    REQUIRE(max_abs_diff(d, oracles::naive_pairwise_sqdist(q, p)) < 1e-10);

    ParamSet params;
    params.add({"q", q, true, true});
    params.add({"p", p, true, true});
    REQUIRE(op_max_rel_err(params, [](Tape& t, const std::vector<NodeId>& n) {
                return t.pairwise_sqdist(n[0], n[1]);
            }) < 1e-5);
}

TEST_CASE("gather, pooling, and segment op gradients") {
    Rng rng(38);
    ParamSet params;
    params.add({"z", oracles::random_tensor({6, 3}, rng), true, true});
    params.add({"w", oracles::random_tensor({6}, rng), true, true});
    const diff::RowGroups groups{{0, 2}, {1, 3, 4}, {5}};

    SECTION("gather_rows with duplicate indices") {
        REQUIRE(op_max_rel_err(params, [](Tape& t, const std::vector<NodeId>& n) {
                    return t.gather_rows(n[0], {3, 1, 3, 0});
                }) < 1e-5);
    }
    SECTION("pool_rows") {
        REQUIRE(op_max_rel_err(params, [&](Tape& t, const std::vector<NodeId>& n) {
                    return t.pool_rows(n[0], n[1], groups);
                }) < 1e-5);
    }
    SECTION("segment_sum then expand_segments") {
        REQUIRE(op_max_rel_err(params, [&](Tape& t, const std::vector<NodeId>& n) {
                    return t.expand_segments(t.segment_sum(n[1], groups), groups, 6);
                }) < 1e-5);
    }
    SECTION("add_row bias broadcast") {
        ParamSet bias_params;
        Rng r2(39);
        bias_params.add({"m", oracles::random_tensor({4, 3}, r2), true, true});
        bias_params.add({"b", oracles::random_tensor({3}, r2), true, true});
        REQUIRE(op_max_rel_err(bias_params, [](Tape& t, const std::vector<NodeId>& n) {
                    return t.add_row(n[0], n[1]);
                }) < 1e-5);
    }
}

TEST_CASE("weighted cross-entropy value and gradients") {
    // Probabilities kept away from the simplex edges so finite differences
    // stay well-conditioned.
    ParamSet params;
    params.add({"probs", Tensor({2, 3}, {0.5, 0.3, 0.2, 0.25, 0.45, 0.3}), true, true});
    params.add({"w", Tensor({3}, {0.2, 0.5, 0.3}), true, true});
    const std::vector<std::size_t> labels{0, 1};

    const auto builder = [&](Tape& t, const std::vector<NodeId>& n) {
        return t.weighted_cross_entropy(n[0], labels, n[1]);
    };
    const auto fb = forward_backward(params, builder);
    const double expected =
        0.5 * (1.2 * -std::log(0.5) + 1.5 * -std::log(0.45));
    REQUIRE(fb.loss == Catch::Approx(expected).margin(1e-12));
    REQUIRE(grad_check(params, builder, 1e-6, 1e-5).max_rel_err() < 1e-5);

    const auto binary = [&](Tape& t, const std::vector<NodeId>& n) {
        return t.weighted_binary_cross_entropy(n[0], labels, n[1]);
    };
    REQUIRE(grad_check(params, binary, 1e-6, 1e-5).max_rel_err() < 1e-5);
}

TEST_CASE("label outside the class set is rejected") {
    Tape tape;
    const NodeId p = tape.leaf(Tensor({1, 2}, {0.5, 0.5}));
    const NodeId w = tape.leaf(Tensor({2}));
    REQUIRE_THROWS_AS(tape.weighted_cross_entropy(p, {2}, w), std::invalid_argument);
}

TEST_CASE("non-finite outputs name the offending op") {
    Tape tape;
    const NodeId x = tape.leaf(Tensor({2}, {-1.0, 2.0}));
    REQUIRE_THROWS_WITH(tape.log(x), Catch::Matchers::ContainsSubstring("log"));

    const NodeId num = tape.leaf(Tensor({2}, {1.0, 1.0}));
    const NodeId den = tape.leaf(Tensor({2}, {0.0, 1.0}));
    REQUIRE_THROWS_WITH(tape.div(num, den), Catch::Matchers::ContainsSubstring("div"));
}

TEST_CASE("reshape round-trips gradients") {
    Rng rng(40);
    ParamSet params;
    params.add({"x", oracles::random_tensor({2, 6}, rng), true, true});
    REQUIRE(op_max_rel_err(params, [](Tape& t, const std::vector<NodeId>& n) {
                return t.reshape(t.reshape(n[0], {12}), {3, 4});
            }) < 1e-5);
}

TEST_CASE("gradients flow through a two-arg op when only one side is trainable") {
    Tape tape;
    const NodeId a = tape.leaf(Tensor({2}, {1.0, 2.0}), true);
    const NodeId b = tape.leaf(Tensor({2}, {3.0, 4.0}), false);
    const NodeId loss = tape.sum(tape.mul(a, b));
    tape.backward(loss);
    REQUIRE(tape.grad(a)[0] == 3.0);
    REQUIRE(tape.grad(a)[1] == 4.0);
    REQUIRE_FALSE(tape.has_grad(b));
}
