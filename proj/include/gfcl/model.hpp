#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "gfcl/attention.hpp"
#include "gfcl/episodes.hpp"
#include "gfcl/graph.hpp"
#include "gfcl/grad_check.hpp"
#include "gfcl/params.hpp"
#include "gfcl/protonet.hpp"
#include "gfcl/tape.hpp"

namespace gfcl {

enum class LossMode {
    /// Scaled categorical cross-entropy: mean over queries of
    /// (1 + w[y]) * -log p(y).
    Categorical,
    /// One-vs-rest reading of the scaled loss, kept for comparison runs.
    BinaryLiteral,
};

struct ModelConfig {
    EncoderConfig encoder;
    TlaConfig tla;
    NlaConfig nla;
    bool use_tla = true;
    bool use_nla = true;
    PrototypeMode prototype_mode = PrototypeMode::PerClass;
    LossMode loss_mode = LossMode::Categorical;
};

/// Every trainable parameter of the encoder and both attention modules, under
/// one name-prefixed set so a single optimizer and checkpoint cover them all.
struct ModelState {
    ModelConfig cfg;
    ParamSet params;
};

/// Fresh Glorot/zero initialization, deterministic per seed. The attention
/// input widths are wired from the data: TLA reads prototype embeddings, NLA
/// reads raw node features.
inline ModelState init_model(std::size_t feature_dim, ModelConfig cfg, std::uint64_t seed) {
    cfg.tla.input_dim = cfg.encoder.embedding_dim();
    if (cfg.tla.hidden_dim == 0) cfg.tla.hidden_dim = cfg.tla.input_dim;
    if (cfg.tla.out_dim == 0) cfg.tla.out_dim = cfg.tla.input_dim;
    cfg.nla.input_dim = feature_dim;

    ModelState state;
    state.cfg = cfg;
    Rng rng(derive_seed(seed, "model-init"));
    add_encoder_params(state.params, feature_dim, cfg.encoder, rng);
    if (cfg.use_nla) add_nla_params(state.params, cfg.nla, rng);
    if (cfg.use_tla) add_tla_params(state.params, cfg.tla, rng);
    return state;
}

/// Row bookkeeping derived from an EpisodeTask: node ids in slot order plus
/// the groupings the attention modules need.
struct EpisodeBatch {
    std::vector<std::size_t> support_ids;   ///< session-major, class-ascending
    diff::RowGroups class_slots;            ///< per class: rows of support_ids
    std::vector<std::size_t> query_ids;
    std::vector<std::size_t> query_targets; ///< class positions, aligned with query_ids
    diff::RowGroups session_groups;         ///< per session: class positions
    std::vector<std::size_t> session_sizes;
    std::vector<int> class_ids;             ///< aligned with class positions
    std::size_t current_session = 0;
    std::size_t n_way = 0;
};

inline EpisodeBatch make_batch(const EpisodeTask& task) {
    EpisodeBatch batch;
    batch.current_session = task.session_index;
    batch.n_way = task.n_way;
    batch.session_groups.resize(task.num_sessions());
    batch.session_sizes.assign(task.num_sessions(), 0);
    for (std::size_t k = 0; k < task.classes.size(); ++k) {
        const ClassSlot& slot = task.classes[k];
        batch.class_ids.push_back(slot.class_id);
        const auto session = static_cast<std::size_t>(slot.session);
        if (session >= task.num_sessions()) {
            throw std::invalid_argument("make_batch: slot session out of range");
        }
        batch.session_groups[session].push_back(k);
        ++batch.session_sizes[session];

        std::vector<std::size_t> rows;
        for (const std::size_t v : slot.support) {
            rows.push_back(batch.support_ids.size());
            batch.support_ids.push_back(v);
        }
        batch.class_slots.push_back(std::move(rows));

        for (const std::size_t v : slot.query) {
            batch.query_ids.push_back(v);
            batch.query_targets.push_back(k);
        }
    }
    for (const std::size_t size : batch.session_sizes) {
        if (size == 0) throw std::invalid_argument("make_batch: empty session in task");
    }
    return batch;
}

/// Handles into the assembled loss graph for diagnostics and prediction.
struct EpisodeGraph {
    diff::NodeId loss = 0;
    diff::NodeId probs = 0;
    diff::NodeId prototypes = 0;
    diff::NodeId attention = 0;     ///< support weights; set iff NLA is enabled
    diff::NodeId task_weights = 0;  ///< per-session attention; set iff TLA is enabled
    diff::NodeId class_weights = 0; ///< scaling factors (zeros when TLA is off)
    bool has_attention = false;
    bool has_task_weights = false;
};

/// Assembles one incremental session on the tape: encode everything, weight
/// the supports into prototypes, derive the per-class scaling factors from
/// the task descriptors, classify the queries, and scale the loss.
inline EpisodeGraph build_episode_loss(diff::Tape& tape, const Graph& graph,
                                       const ParamSet& params,
                                       const std::vector<diff::NodeId>& param_nodes,
                                       const ModelConfig& cfg, const EpisodeBatch& batch) {
    EpisodeGraph out;
    const std::size_t n_support = batch.support_ids.size();
    const std::size_t n_classes = batch.class_ids.size();

    const diff::NodeId z = encoder_forward(tape, graph, params, param_nodes, cfg.encoder);
    const diff::NodeId z_support = tape.gather_rows(z, batch.support_ids);

    diff::NodeId attention;
    if (cfg.use_nla) {
        attention = node_attention_tape(tape, graph, params, param_nodes, cfg.nla,
                                        batch.support_ids);
        out.attention = attention;
        out.has_attention = true;
    } else {
        attention = tape.leaf(
            Tensor::filled({n_support}, 1.0 / static_cast<double>(n_support)));
    }

    diff::NodeId prototypes;
    if (cfg.prototype_mode == PrototypeMode::PerClass) {
        const diff::NodeId class_mass = tape.segment_sum(attention, batch.class_slots);
        const diff::NodeId denom =
            tape.expand_segments(class_mass, batch.class_slots, n_support);
        prototypes =
            tape.pool_rows(z_support, tape.div(attention, denom), batch.class_slots);
    } else {
        prototypes = tape.pool_rows(z_support, attention, batch.class_slots);
    }
    out.prototypes = prototypes;

    diff::NodeId class_weights;
    if (cfg.use_tla) {
        const diff::NodeId descriptors =
            task_descriptors_tape(tape, params, param_nodes, prototypes, batch.session_groups);
        const diff::NodeId task_weights =
            task_attention_tape(tape, descriptors, batch.current_session);
        out.task_weights = task_weights;
        out.has_task_weights = true;
        class_weights = expand_class_weights_tape(tape, task_weights, batch.session_sizes);
    } else {
        class_weights = tape.leaf(Tensor({n_classes}));
    }
    out.class_weights = class_weights;

    const diff::NodeId z_query = tape.gather_rows(z, batch.query_ids);
    const diff::NodeId probs =
        tape.softmax_rows(tape.scale(tape.pairwise_sqdist(z_query, prototypes), -1.0));
    out.probs = probs;

    out.loss = cfg.loss_mode == LossMode::Categorical
                   ? tape.weighted_cross_entropy(probs, batch.query_targets, class_weights)
                   : tape.weighted_binary_cross_entropy(probs, batch.query_targets, class_weights);
    return out;
}

/// Linear classifier over the encoder output, used only during pre-training
/// and discarded afterwards.
inline void add_pretrain_head(ParamSet& params, const EncoderConfig& cfg, std::size_t n_classes,
                              Rng& rng) {
    add_linear(params, "pretrain.head", cfg.embedding_dim(), n_classes, rng);
}

inline diff::NodeId build_pretrain_loss(diff::Tape& tape, const Graph& graph,
                                        const ParamSet& params,
                                        const std::vector<diff::NodeId>& param_nodes,
                                        const EncoderConfig& cfg,
                                        const std::vector<std::size_t>& node_ids,
                                        const std::vector<std::size_t>& targets,
                                        std::size_t n_classes) {
    const diff::NodeId z = encoder_forward(tape, graph, params, param_nodes, cfg);
    const diff::NodeId logits =
        tape.add_row(tape.matmul(tape.gather_rows(z, node_ids),
                                 param_nodes[params.index_of("pretrain.head.W")]),
                     param_nodes[params.index_of("pretrain.head.b")]);
    const diff::NodeId probs = tape.softmax_rows(logits);
    return tape.weighted_cross_entropy(probs, targets, tape.leaf(Tensor({n_classes})));
}

inline std::vector<std::size_t> argmax_rows(const Tensor& probs) {
    std::vector<std::size_t> out(probs.rows());
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        const double* row = probs.row_ptr(r);
        std::size_t best = 0;
        for (std::size_t c = 1; c < probs.cols(); ++c) {
            if (row[c] > row[best]) best = c;
        }
        out[r] = best;
    }
    return out;
}

inline double accuracy(const Tensor& probs, const std::vector<std::size_t>& targets) {
    if (targets.size() != probs.rows() || targets.empty()) {
        throw std::invalid_argument("accuracy: one target per row required");
    }
    const std::vector<std::size_t> pred = argmax_rows(probs);
    std::size_t correct = 0;
    for (std::size_t r = 0; r < targets.size(); ++r) {
        if (pred[r] == targets[r]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(targets.size());
}

}  // namespace gfcl
