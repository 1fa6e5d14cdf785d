#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "gfcl/adam.hpp"
#include "gfcl/grad_check.hpp"
#include "gfcl/params.hpp"
#include "oracles.hpp"

using namespace gfcl;

namespace {

ParamSet scalar_param(double v) {
    ParamSet p;
    p.add({"theta", Tensor({1}, {v}), true, true});
    return p;
}

}  // namespace

TEST_CASE("first Adam step matches the closed form") {
    ParamSet params = scalar_param(0.0);
    AdamConfig cfg;
    cfg.lr = 0.005;
    cfg.weight_decay = 0.0;
    AdamState adam(params, cfg);

    GradMap grads{{"theta", Tensor({1}, {0.1})}};
    adam.step(params, grads);

    // After one step m_hat = g and v_hat = g^2, so the update is
    // lr * g / (|g| + eps) = lr in magnitude.
    const double expected = -0.005 * 0.1 / (0.1 + cfg.eps);
    REQUIRE(params.at("theta").value[0] == Catch::Approx(expected).margin(1e-12));
    REQUIRE(adam.step_count() == 1);
}

TEST_CASE("zero gradient with zero decay leaves parameters unchanged") {
    ParamSet params = scalar_param(1.25);
    AdamConfig cfg;
    cfg.weight_decay = 0.0;
    AdamState adam(params, cfg);
    GradMap grads{{"theta", Tensor({1}, {0.0})}};
    for (int i = 0; i < 5; ++i) adam.step(params, grads);
    REQUIRE(params.at("theta").value[0] == 1.25);
}

TEST_CASE("identical state and gradients give identical updates") {
    Rng rng(4);
    ParamSet a;
    a.add({"w", oracles::random_tensor({4, 3}, rng), true, true});
    ParamSet b = a;
    AdamState adam_a(a, AdamConfig{});
    AdamState adam_b(b, AdamConfig{});
    GradMap grads{{"w", oracles::random_tensor({4, 3}, rng)}};
    for (int i = 0; i < 7; ++i) {
        adam_a.step(a, grads);
        adam_b.step(b, grads);
    }
    REQUIRE(exactly_equal(a.at("w").value, b.at("w").value));
}

TEST_CASE("lr zero freezes parameters") {
    Rng rng(5);
    ParamSet params;
    params.add({"w", oracles::random_tensor({3, 3}, rng), true, true});
    const Tensor before = params.at("w").value;
    AdamConfig cfg;
    cfg.lr = 0.0;
    AdamState adam(params, cfg);
    GradMap grads{{"w", oracles::random_tensor({3, 3}, rng)}};
    adam.step(params, grads);
    REQUIRE(exactly_equal(params.at("w").value, before));
}

TEST_CASE("weight decay skips flagged parameters by default") {
    ParamSet params;
    params.add({"w", Tensor({1}, {2.0}), true, true});
    params.add({"b", Tensor({1}, {2.0}), true, false});
    AdamConfig cfg;
    cfg.weight_decay = 0.5;
    AdamState adam(params, cfg);
    GradMap grads{{"w", Tensor({1}, {0.0})}, {"b", Tensor({1}, {0.0})}};
    adam.step(params, grads);
    // The bias sees a zero gradient and stays put; the weight decays.
    REQUIRE(params.at("b").value[0] == 2.0);
    REQUIRE(params.at("w").value[0] != 2.0);
    REQUIRE(params.at("w").value[0] < 2.0);
}

TEST_CASE("parameters absent from the gradient map are untouched") {
    ParamSet params;
    params.add({"w", Tensor({1}, {1.0}), true, true});
    params.add({"frozen", Tensor({1}, {5.0}), false, true});
    AdamState adam(params, AdamConfig{});
    GradMap grads{{"w", Tensor({1}, {1.0})}};
    adam.step(params, grads);
    REQUIRE(params.at("frozen").value[0] == 5.0);
    REQUIRE(params.at("w").value[0] != 1.0);

    GradMap bad{{"w", Tensor({2}, {1.0, 1.0})}};
    REQUIRE_THROWS_AS(adam.step(params, bad), std::invalid_argument);
}

TEST_CASE("glorot initialization is deterministic and bounded") {
    Rng a(9), b(9);
    const Tensor t1 = glorot_uniform(20, 30, a);
    const Tensor t2 = glorot_uniform(20, 30, b);
    REQUIRE(exactly_equal(t1, t2));
    const double bound = std::sqrt(6.0 / 50.0);
    for (const double v : t1.values()) {
        REQUIRE(std::abs(v) <= bound);
    }
}

TEST_CASE("checkpoint round-trip preserves everything") {
    Rng rng(10);
    ParamSet params;
    params.add({"encoder.layer0.W", oracles::random_tensor({5, 4}, rng), true, true});
    params.add({"encoder.layer0.b", oracles::random_tensor({4}, rng), true, false});
    params.add({"stats", oracles::random_tensor({2, 2}, rng), false, false});

    const auto path = std::filesystem::temp_directory_path() / "gfcl_ckpt_test.bin";
    save_checkpoint(path.string(), params, 123, 456);
    const Checkpoint loaded = load_checkpoint(path.string());
    std::filesystem::remove(path);

    REQUIRE(loaded.seed == 123);
    REQUIRE(loaded.step == 456);
    REQUIRE(loaded.params.size() == params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        REQUIRE(loaded.params[i].name == params[i].name);
        REQUIRE(loaded.params[i].trainable == params[i].trainable);
        REQUIRE(loaded.params[i].decays == params[i].decays);
        REQUIRE(exactly_equal(loaded.params[i].value, params[i].value));
    }
}

TEST_CASE("duplicate parameter names are rejected") {
    ParamSet params;
    params.add({"x", Tensor({1}), true, true});
    REQUIRE_THROWS_AS(params.add({"x", Tensor({1}), true, true}), std::invalid_argument);
    REQUIRE_THROWS_AS(params.at("missing"), std::invalid_argument);
}

TEST_CASE("grad_check subsampling never drops below 32 coordinates") {
    Rng rng(11);
    ParamSet params;
    params.add({"w", oracles::random_tensor({10, 10}, rng), true, true});
    const auto builder = [](diff::Tape& tape, const std::vector<diff::NodeId>& nodes) {
        return tape.sum(tape.mul(nodes[0], nodes[0]));
    };
    const GradCheckReport report = grad_check(params, builder, 1e-5, 1e-4, 5);
    REQUIRE(report.entries.size() == 1);
    REQUIRE(report.entries[0].coords_checked == 32);
    REQUIRE(report.all_pass());
}
