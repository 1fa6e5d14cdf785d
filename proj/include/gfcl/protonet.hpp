#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "gfcl/graph.hpp"
#include "gfcl/grad_check.hpp"
#include "gfcl/params.hpp"
#include "gfcl/tape.hpp"

namespace gfcl {

/// Graph-convolution encoder shape. Each layer is
/// relu(propagate(G, H) * W + b); the last width is the prototype feature
/// size.
struct EncoderConfig {
    std::vector<std::size_t> layer_dims{32, 16};

    std::size_t embedding_dim() const {
        if (layer_dims.empty()) throw std::invalid_argument("EncoderConfig: at least one layer");
        return layer_dims.back();
    }
};

inline void add_encoder_params(ParamSet& params, std::size_t feature_dim,
                               const EncoderConfig& cfg, Rng& rng) {
    std::size_t in_dim = feature_dim;
    for (std::size_t l = 0; l < cfg.layer_dims.size(); ++l) {
        add_linear(params, "encoder.layer" + std::to_string(l), in_dim, cfg.layer_dims[l], rng);
        in_dim = cfg.layer_dims[l];
    }
}

/// Full-graph encoder forward on the tape; returns node embeddings
/// (num_nodes x h).
inline diff::NodeId encoder_forward(diff::Tape& tape, const Graph& graph,
                                    const ParamSet& params,
                                    const std::vector<diff::NodeId>& param_nodes,
                                    const EncoderConfig& cfg) {
    diff::NodeId h = tape.leaf(graph.features(), false);
    for (std::size_t l = 0; l < cfg.layer_dims.size(); ++l) {
        const std::string prefix = "encoder.layer" + std::to_string(l);
        const diff::NodeId w = param_nodes[params.index_of(prefix + ".W")];
        const diff::NodeId b = param_nodes[params.index_of(prefix + ".b")];
        h = tape.relu(tape.add_row(tape.matmul(tape.propagate(graph, h), w), b));
    }
    return h;
}

/// Embeddings of the requested nodes: full-graph forward, then a row gather.
inline Tensor encode(const Graph& graph, const ParamSet& params, const EncoderConfig& cfg,
                     const std::vector<std::size_t>& node_ids) {
    diff::Tape tape;
    const auto nodes = bind_params(tape, params);
    const diff::NodeId z = encoder_forward(tape, graph, params, nodes, cfg);
    return tape.value(tape.gather_rows(z, node_ids));
}

/// Class representatives in embedding space, one row per class.
struct PrototypeSet {
    std::vector<int> class_ids;
    Tensor matrix;
};

/// p_k = mean of the class's support embeddings. `class_rows[k]` lists the
/// rows of `embeddings` belonging to class_ids[k].
inline PrototypeSet mean_prototypes(const Tensor& embeddings,
                                    const std::vector<std::vector<std::size_t>>& class_rows,
                                    const std::vector<int>& class_ids) {
    if (class_rows.size() != class_ids.size()) {
        throw std::invalid_argument("mean_prototypes: one row list per class required");
    }
    PrototypeSet protos;
    protos.class_ids = class_ids;
    protos.matrix = Tensor({class_rows.size(), embeddings.cols()});
    for (std::size_t k = 0; k < class_rows.size(); ++k) {
        if (class_rows[k].empty()) {
            throw std::invalid_argument("mean_prototypes: class " +
                                        std::to_string(class_ids[k]) + " has no support rows");
        }
        double* out = protos.matrix.row_ptr(k);
        for (const std::size_t r : class_rows[k]) {
            const double* src = embeddings.row_ptr(r);
            for (std::size_t c = 0; c < embeddings.cols(); ++c) out[c] += src[c];
        }
        const double inv = 1.0 / static_cast<double>(class_rows[k].size());
        for (std::size_t c = 0; c < embeddings.cols(); ++c) out[c] *= inv;
    }
    return protos;
}

/// Distribution over classes per query: softmax over negative squared
/// Euclidean distances to the prototypes.
inline Tensor classify(const Tensor& query_embeddings, const PrototypeSet& protos) {
    diff::Tape tape;
    const diff::NodeId q = tape.leaf(query_embeddings);
    const diff::NodeId p = tape.leaf(protos.matrix);
    return tape.value(tape.softmax_rows(tape.scale(tape.pairwise_sqdist(q, p), -1.0)));
}

/// Mean over queries of (1 + w[y]) * -log p(y); with all weights zero this
/// is plain cross-entropy.
inline double weighted_cross_entropy(const Tensor& distributions,
                                     const std::vector<std::size_t>& labels,
                                     const std::vector<double>& class_weights) {
    if (class_weights.size() != distributions.cols()) {
        throw std::invalid_argument("weighted_cross_entropy: one weight per class required");
    }
    diff::Tape tape;
    const diff::NodeId p = tape.leaf(distributions);
    const diff::NodeId w = tape.leaf(Tensor::vector(class_weights));
    return tape.value(tape.weighted_cross_entropy(p, labels, w))[0];
}

}  // namespace gfcl
