#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "gfcl/episodes.hpp"
#include "gfcl/graph.hpp"
#include "gfcl/grad_check.hpp"
#include "gfcl/model.hpp"
#include "gfcl/rng.hpp"

namespace gfcl {

/// The standard gradient-verification setup: a seeded 30-node graph with
/// four classes and a two-session episode (two base classes, two novel),
/// exercising every parameter group through the full session loss.
struct GradCheckFixture {
    Graph graph;
    EpisodeTask task;
    ModelState state;
};

inline GradCheckFixture make_gradcheck_fixture(std::uint64_t seed = 7,
                                               ModelConfig cfg = ModelConfig{}) {
    constexpr std::size_t kNodes = 30;
    constexpr std::size_t kFeatureDim = 8;
    const std::vector<std::size_t> class_sizes{8, 8, 7, 7};

    std::vector<int> labels(kNodes);
    std::size_t node = 0;
    for (std::size_t c = 0; c < class_sizes.size(); ++c) {
        for (std::size_t i = 0; i < class_sizes[c]; ++i) labels[node++] = static_cast<int>(c);
    }

    Rng rng(derive_seed(seed, "gradcheck-fixture"));
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t i = 0; i < kNodes; ++i) {
        for (std::size_t j = i + 1; j < kNodes; ++j) {
            const double p = labels[i] == labels[j] ? 0.35 : 0.05;
            if (rng.uniform() < p) edges.emplace_back(i, j);
        }
    }
    Tensor features({kNodes, kFeatureDim});
    for (std::size_t v = 0; v < kNodes; ++v) {
        for (std::size_t d = 0; d < kFeatureDim; ++d) {
            const double center = d == static_cast<std::size_t>(labels[v]) ? 2.0 : 0.0;
            features.at(v, d) = center + 0.5 * rng.normal();
        }
    }

    GradCheckFixture fixture{Graph::build(edges, std::move(features), std::move(labels)),
                             EpisodeTask{}, ModelState{}};

    // Session 0 holds classes 0 and 1; session 1 introduces classes 2 and 3.
    fixture.task.session_index = 1;
    fixture.task.n_way = 2;
    fixture.task.k_shot = 3;
    std::size_t offset = 0;
    for (std::size_t c = 0; c < class_sizes.size(); ++c) {
        ClassSlot slot;
        slot.class_id = static_cast<int>(c);
        slot.session = c < 2 ? 0 : 1;
        for (std::size_t i = 0; i < 3; ++i) slot.support.push_back(offset + i);
        for (std::size_t i = 3; i < 6; ++i) slot.query.push_back(offset + i);
        offset += class_sizes[c];
        fixture.task.classes.push_back(std::move(slot));
    }
    fixture.task.validate();

    fixture.state = init_model(kFeatureDim, std::move(cfg), seed);
    return fixture;
}

/// Central-difference check of the full session loss against the analytic
/// gradients, over every trainable parameter.
inline GradCheckReport episode_grad_check(const GradCheckFixture& fixture, double fd_step = 1e-5,
                                          double tol = 1e-4,
                                          std::size_t max_coords_per_param = 0) {
    const EpisodeBatch batch = make_batch(fixture.task);
    const auto builder = [&](diff::Tape& tape, const std::vector<diff::NodeId>& nodes) {
        return build_episode_loss(tape, fixture.graph, fixture.state.params, nodes,
                                  fixture.state.cfg, batch)
            .loss;
    };
    return grad_check(fixture.state.params, builder, fd_step, tol, max_coords_per_param);
}

}  // namespace gfcl
