#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "gfcl/episodes.hpp"
#include "gfcl/graph.hpp"
#include "gfcl/grad_check.hpp"
#include "gfcl/params.hpp"
#include "gfcl/protonet.hpp"
#include "gfcl/tape.hpp"

namespace gfcl {

// ---- task-level attention --------------------------------------------------
//
// Each session's class prototypes are mean-pooled into one task descriptor
// and passed through a shared 3-layer perceptron. Attention weights are a
// softmax over dot products between the current task's descriptor and every
// task's descriptor (the current one included). Mean pooling keeps the map
// defined for any class count and invariant to class order, and descriptors
// depend only on their own session, so extending the task list never changes
// earlier descriptors - only the softmax normalization.

struct TlaConfig {
    std::size_t input_dim = 16;  ///< prototype feature size h
    std::size_t hidden_dim = 16;
    std::size_t out_dim = 16;
};

inline void add_tla_params(ParamSet& params, const TlaConfig& cfg, Rng& rng) {
    add_linear(params, "tla.layer0", cfg.input_dim, cfg.hidden_dim, rng);
    add_linear(params, "tla.layer1", cfg.hidden_dim, cfg.hidden_dim, rng);
    add_linear(params, "tla.layer2", cfg.hidden_dim, cfg.out_dim, rng);
}

/// Shared perceptron applied row-wise; hidden layers rectified, output linear.
inline diff::NodeId tla_mlp(diff::Tape& tape, const ParamSet& params,
                            const std::vector<diff::NodeId>& param_nodes, diff::NodeId input) {
    auto layer = [&](diff::NodeId x, const std::string& prefix) {
        return tape.add_row(tape.matmul(x, param_nodes[params.index_of(prefix + ".W")]),
                            param_nodes[params.index_of(prefix + ".b")]);
    };
    diff::NodeId h = tape.relu(layer(input, "tla.layer0"));
    h = tape.relu(layer(h, "tla.layer1"));
    return layer(h, "tla.layer2");
}

/// Task descriptors from a prototype matrix whose rows are grouped by
/// session: u_j = MLP(mean of session j's prototype rows).
inline diff::NodeId task_descriptors_tape(diff::Tape& tape, const ParamSet& params,
                                          const std::vector<diff::NodeId>& param_nodes,
                                          diff::NodeId prototypes,
                                          const diff::RowGroups& session_groups) {
    const std::size_t rows = tape.value(prototypes).rows();
    Tensor weights({rows});
    for (const auto& group : session_groups) {
        if (group.empty()) {
            throw std::invalid_argument("task_descriptors: empty session");
        }
        for (const std::size_t r : group) weights[r] = 1.0 / static_cast<double>(group.size());
    }
    const diff::NodeId pooled =
        tape.pool_rows(prototypes, tape.leaf(std::move(weights)), session_groups);
    return tla_mlp(tape, params, param_nodes, pooled);
}

/// softmax over u_i . u_j for j in [0, i], i = `current`.
inline diff::NodeId task_attention_tape(diff::Tape& tape, diff::NodeId descriptors,
                                        std::size_t current) {
    // Copy the dimensions: node values move when the tape grows.
    const std::size_t n_tasks = tape.value(descriptors).rows();
    const std::size_t dim = tape.value(descriptors).cols();
    if (current >= n_tasks) {
        throw std::invalid_argument("task_attention: current task index out of range");
    }
    const diff::NodeId u_cur = tape.gather_rows(descriptors, {current});
    const diff::NodeId scores =
        tape.matmul(descriptors, tape.reshape(u_cur, {dim, std::size_t{1}}));
    const diff::NodeId w =
        tape.softmax_rows(tape.reshape(scores, {std::size_t{1}, n_tasks}));
    return tape.reshape(w, {n_tasks});
}

/// Constant expansion matrix E (sessions x classes) with E[j][k] = 1/|C_j|
/// for every class k of session j; W_C = w * E shares one task weight across
/// a task's classes and divides it by the task's class count.
inline Tensor class_weight_expansion(const std::vector<std::size_t>& session_sizes) {
    std::size_t total = 0;
    for (const std::size_t s : session_sizes) total += s;
    Tensor e({session_sizes.size(), total});
    std::size_t offset = 0;
    for (std::size_t j = 0; j < session_sizes.size(); ++j) {
        if (session_sizes[j] == 0) {
            throw std::invalid_argument("class_weight_expansion: empty session");
        }
        const double v = 1.0 / static_cast<double>(session_sizes[j]);
        for (std::size_t k = 0; k < session_sizes[j]; ++k) e.at(j, offset + k) = v;
        offset += session_sizes[j];
    }
    return e;
}

inline diff::NodeId expand_class_weights_tape(diff::Tape& tape, diff::NodeId task_weights,
                                              const std::vector<std::size_t>& session_sizes) {
    const Tensor e = class_weight_expansion(session_sizes);
    const std::size_t sessions = session_sizes.size();
    const diff::NodeId w_row = tape.reshape(task_weights, {std::size_t{1}, sessions});
    return tape.reshape(tape.matmul(w_row, tape.leaf(e)), {e.cols()});
}

/// One descriptor per session from its prototype set.
inline Tensor task_descriptors(const std::vector<PrototypeSet>& sessions, const ParamSet& params,
                               const TlaConfig& cfg) {
    if (sessions.empty()) throw std::invalid_argument("task_descriptors: no sessions");
    std::size_t total = 0;
    for (const auto& s : sessions) {
        if (s.class_ids.empty()) throw std::invalid_argument("task_descriptors: empty session");
        total += s.matrix.rows();
    }
    Tensor stacked({total, cfg.input_dim});
    diff::RowGroups groups(sessions.size());
    std::size_t row = 0;
    for (std::size_t j = 0; j < sessions.size(); ++j) {
        const Tensor& m = sessions[j].matrix;
        if (m.cols() != cfg.input_dim) {
            throw std::invalid_argument("task_descriptors: prototype width mismatch");
        }
        for (std::size_t r = 0; r < m.rows(); ++r, ++row) {
            std::copy(m.row_ptr(r), m.row_ptr(r) + m.cols(), stacked.row_ptr(row));
            groups[j].push_back(row);
        }
    }
    diff::Tape tape;
    const auto nodes = bind_params(tape, params);
    return tape.value(task_descriptors_tape(tape, params, nodes, tape.leaf(stacked), groups));
}

/// Attention of task `current` over tasks [0, current].
inline std::vector<double> task_attention(const Tensor& descriptors, std::size_t current) {
    diff::Tape tape;
    const Tensor w =
        tape.value(task_attention_tape(tape, tape.leaf(descriptors), current));
    return w.values();
}

/// Per-class scaling factors aligned with registry.seen_classes().
inline std::vector<double> expand_class_weights(const std::vector<double>& task_weights,
                                                const ClassRegistry& registry) {
    if (task_weights.size() != registry.num_sessions()) {
        throw std::invalid_argument("expand_class_weights: one weight per session required");
    }
    std::vector<double> out;
    for (std::size_t j = 0; j < registry.num_sessions(); ++j) {
        const auto& classes = registry.session_classes(j);
        if (classes.empty()) throw std::invalid_argument("expand_class_weights: empty session");
        for (std::size_t k = 0; k < classes.size(); ++k) {
            out.push_back(task_weights[j] / static_cast<double>(classes.size()));
        }
    }
    return out;
}

// ---- node-level attention ---------------------------------------------------
//
// A small graph network over the raw features scores every node, the score
// is scaled by log(degree + eps) and squashed (the centrality adjustment),
// and the scores of the support set are softmax-normalized into prototype
// weights. Aggregation layers share the encoder's propagation rule and carry
// no bias.

struct NlaConfig {
    std::size_t input_dim = 0;  ///< raw feature dimension
    std::size_t fc_dim = 32;
    std::vector<std::size_t> agg_dims{32, 16};
    double degree_eps = 1e-6;
};

inline void add_nla_params(ParamSet& params, const NlaConfig& cfg, Rng& rng) {
    if (cfg.input_dim == 0) throw std::invalid_argument("NlaConfig: input_dim unset");
    add_linear(params, "nla.fc", cfg.input_dim, cfg.fc_dim, rng);
    std::size_t in_dim = cfg.fc_dim;
    for (std::size_t l = 0; l < cfg.agg_dims.size(); ++l) {
        params.add({"nla.agg" + std::to_string(l) + ".W", glorot_uniform(in_dim, cfg.agg_dims[l], rng),
                    true, true});
        in_dim = cfg.agg_dims[l];
    }
    add_linear(params, "nla.out", in_dim, 1, rng);
}

/// Centrality-adjusted attention logits for every node (num_nodes x 1).
inline diff::NodeId nla_scores_tape(diff::Tape& tape, const Graph& graph, const ParamSet& params,
                                    const std::vector<diff::NodeId>& param_nodes,
                                    const NlaConfig& cfg) {
    diff::NodeId h = tape.leaf(graph.features());
    h = tape.relu(tape.add_row(tape.matmul(h, param_nodes[params.index_of("nla.fc.W")]),
                               param_nodes[params.index_of("nla.fc.b")]));
    for (std::size_t l = 0; l < cfg.agg_dims.size(); ++l) {
        const std::string name = "nla.agg" + std::to_string(l) + ".W";
        h = tape.relu(tape.matmul(tape.propagate(graph, h), param_nodes[params.index_of(name)]));
    }
    diff::NodeId lam = tape.add_row(tape.matmul(h, param_nodes[params.index_of("nla.out.W")]),
                                    param_nodes[params.index_of("nla.out.b")]);
    Tensor log_degree({graph.num_nodes(), 1});
    for (std::size_t v = 0; v < graph.num_nodes(); ++v) {
        log_degree.at(v, 0) = std::log(static_cast<double>(graph.degree(v)) + cfg.degree_eps);
    }
    return tape.sigmoid(tape.mul(lam, tape.leaf(std::move(log_degree))));
}

/// Prototype weights over the support set: softmax of the support nodes'
/// centrality-adjusted scores, in support order.
inline diff::NodeId node_attention_tape(diff::Tape& tape, const Graph& graph,
                                        const ParamSet& params,
                                        const std::vector<diff::NodeId>& param_nodes,
                                        const NlaConfig& cfg,
                                        const std::vector<std::size_t>& support_ids) {
    if (support_ids.empty()) throw std::invalid_argument("node_attention: empty support set");
    const diff::NodeId scores = nla_scores_tape(tape, graph, params, param_nodes, cfg);
    const diff::NodeId support = tape.gather_rows(scores, support_ids);
    const diff::NodeId w =
        tape.softmax_rows(tape.reshape(support, {std::size_t{1}, support_ids.size()}));
    return tape.reshape(w, {support_ids.size()});
}

inline std::vector<double> node_attention(const Graph& graph, const ParamSet& params,
                                          const NlaConfig& cfg,
                                          const std::vector<std::size_t>& support_ids) {
    diff::Tape tape;
    const auto nodes = bind_params(tape, params);
    return tape.value(node_attention_tape(tape, graph, params, nodes, cfg, support_ids)).values();
}

// ---- attention-weighted prototypes ------------------------------------------

enum class PrototypeMode {
    /// Weights renormalized within each class, making every prototype a
    /// convex combination of its supports. Uniform attention reduces to the
    /// plain mean.
    PerClass,
    /// Weights taken as-is from the support-wide softmax, so a class's
    /// prototype magnitude scales with its share of the attention mass.
    Paper,
};

/// p_k = sum over the class's support rows of lambda * z.
inline PrototypeSet weighted_prototypes(const Tensor& embeddings,
                                        const std::vector<double>& attention,
                                        const std::vector<std::vector<std::size_t>>& class_rows,
                                        const std::vector<int>& class_ids, PrototypeMode mode) {
    if (attention.size() != embeddings.rows()) {
        throw std::invalid_argument("weighted_prototypes: one weight per support row required");
    }
    if (class_rows.size() != class_ids.size()) {
        throw std::invalid_argument("weighted_prototypes: one row list per class required");
    }
    PrototypeSet protos;
    protos.class_ids = class_ids;
    protos.matrix = Tensor({class_rows.size(), embeddings.cols()});
    for (std::size_t k = 0; k < class_rows.size(); ++k) {
        double norm = 1.0;
        if (mode == PrototypeMode::PerClass) {
            double sum = 0.0;
            for (const std::size_t r : class_rows[k]) sum += attention[r];
            if (sum == 0.0) {
                throw std::invalid_argument("weighted_prototypes: class " +
                                            std::to_string(class_ids[k]) +
                                            " has zero attention mass");
            }
            norm = 1.0 / sum;
        }
        double* out = protos.matrix.row_ptr(k);
        for (const std::size_t r : class_rows[k]) {
            const double w = attention[r] * norm;
            const double* src = embeddings.row_ptr(r);
            for (std::size_t c = 0; c < embeddings.cols(); ++c) out[c] += w * src[c];
        }
    }
    return protos;
}

}  // namespace gfcl
