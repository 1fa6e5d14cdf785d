#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gfcl/adam.hpp"
#include "gfcl/config.hpp"
#include "gfcl/episodes.hpp"
#include "gfcl/grad_check.hpp"
#include "gfcl/io.hpp"
#include "gfcl/model.hpp"
#include "gfcl/sbm.hpp"

namespace gfcl {

// ---- one incremental session -------------------------------------------------

struct SessionOutcome {
    double accuracy = 0.0;  ///< fraction of queries classified correctly
    double loss = 0.0;      ///< loss of the final (post-update) forward pass
    std::map<int, double> per_class_accuracy;
    std::vector<double> task_weights;   ///< empty when TLA is disabled
    std::vector<double> class_weights;
};

/// Runs one session: encode supports and queries, form attention-weighted
/// prototypes, derive the per-class scaling factors, classify, and (when
/// training) take `steps` optimizer updates on the scaled loss. The reported
/// accuracy is measured after the updates. With train=false the state is not
/// touched.
inline SessionOutcome incremental_session(const Graph& graph, const EpisodeTask& task,
                                          ModelState& state, AdamState* optimizer, bool train,
                                          std::size_t steps) {
    const EpisodeBatch batch = make_batch(task);
    const auto builder = [&](diff::Tape& tape, const std::vector<diff::NodeId>& nodes) {
        return build_episode_loss(tape, graph, state.params, nodes, state.cfg, batch).loss;
    };

    if (train) {
        if (!optimizer) {
            throw std::invalid_argument("incremental_session: training requires an optimizer");
        }
        for (std::size_t s = 0; s < steps; ++s) {
            const ForwardBackwardResult fb = forward_backward(state.params, builder);
            optimizer->step(state.params, fb.grads);
        }
    }

    diff::Tape tape;
    std::vector<diff::NodeId> nodes;
    nodes.reserve(state.params.size());
    for (const Param& p : state.params) nodes.push_back(tape.leaf(p.value, false));
    const EpisodeGraph graph_out =
        build_episode_loss(tape, graph, state.params, nodes, state.cfg, batch);

    SessionOutcome outcome;
    outcome.loss = tape.value(graph_out.loss)[0];
    const Tensor& probs = tape.value(graph_out.probs);
    outcome.accuracy = accuracy(probs, batch.query_targets);

    const std::vector<std::size_t> pred = argmax_rows(probs);
    std::map<int, std::pair<std::size_t, std::size_t>> counts;  // class -> (correct, total)
    for (std::size_t r = 0; r < pred.size(); ++r) {
        auto& [correct, total] = counts[batch.class_ids[batch.query_targets[r]]];
        ++total;
        if (pred[r] == batch.query_targets[r]) ++correct;
    }
    for (const auto& [class_id, ct] : counts) {
        outcome.per_class_accuracy[class_id] =
            static_cast<double>(ct.first) / static_cast<double>(ct.second);
    }

    if (graph_out.has_task_weights) {
        outcome.task_weights = tape.value(graph_out.task_weights).values();
    }
    outcome.class_weights = tape.value(graph_out.class_weights).values();
    return outcome;
}

// ---- diagnostics ---------------------------------------------------------------

/// Per-episode dump of the task attention and the expanded class factors,
/// for offline inspection of forgetting behavior.
class DiagnosticsSink {
public:
    DiagnosticsSink() { csv_ << "phase,episode,session,task_weights,class_weights\n"; }

    void record(const std::string& phase, std::size_t episode, std::size_t session,
                const SessionOutcome& outcome) {
        csv_ << phase << ',' << episode << ',' << session << ',';
        join(outcome.task_weights);
        csv_ << ',';
        join(outcome.class_weights);
        csv_ << '\n';
    }

    std::string str() const { return csv_.str(); }

private:
    void join(const std::vector<double>& values) {
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (i) csv_ << ';';
            csv_ << values[i];
        }
    }

    std::ostringstream csv_;
};

// ---- pre-training ---------------------------------------------------------------

struct PretrainResult {
    ParamSet encoder;  ///< best-validation encoder weights, head stripped
    double best_val_accuracy = 0.0;
    std::size_t best_epoch = 0;
    std::size_t epochs_run = 0;
};

namespace detail {

inline double head_accuracy(const Graph& graph, const ParamSet& params, const EncoderConfig& cfg,
                            const std::vector<std::size_t>& node_ids,
                            const std::vector<std::size_t>& targets) {
    diff::Tape tape;
    std::vector<diff::NodeId> nodes;
    for (const Param& p : params) nodes.push_back(tape.leaf(p.value, false));
    const diff::NodeId z = encoder_forward(tape, graph, params, nodes, cfg);
    const diff::NodeId logits =
        tape.add_row(tape.matmul(tape.gather_rows(z, node_ids),
                                 nodes[params.index_of("pretrain.head.W")]),
                     nodes[params.index_of("pretrain.head.b")]);
    return accuracy(tape.value(logits), targets);
}

}  // namespace detail

/// Supervised node classification on the base-train pool with a throwaway
/// linear head, early-stopped on base-val accuracy. Returns the encoder from
/// the best validation epoch, not the last one.
inline PretrainResult pretrain(const Graph& graph, const DataSplits& splits,
                               const RunConfig& cfg) {
    Rng rng(derive_seed(cfg.seed, "pretrain-init"));
    ParamSet params;
    add_encoder_params(params, graph.feature_dim(), cfg.model.encoder, rng);
    add_pretrain_head(params, cfg.model.encoder, splits.base_classes.size(), rng);

    std::vector<std::size_t> train_ids, val_ids;
    std::vector<std::size_t> train_targets, val_targets;
    for (std::size_t k = 0; k < splits.base_classes.size(); ++k) {
        const int c = splits.base_classes[k];
        for (const std::size_t v : splits.base_train.at(c)) {
            train_ids.push_back(v);
            train_targets.push_back(k);
        }
        for (const std::size_t v : splits.base_val.at(c)) {
            val_ids.push_back(v);
            val_targets.push_back(k);
        }
    }
    if (train_ids.empty()) throw std::invalid_argument("pretrain: base-train pool is empty");

    const auto builder = [&](diff::Tape& tape, const std::vector<diff::NodeId>& nodes) {
        return build_pretrain_loss(tape, graph, params, nodes, cfg.model.encoder, train_ids,
                                   train_targets, splits.base_classes.size());
    };

    AdamState adam(params, cfg.optimizer);
    PretrainResult result;
    ParamSet best = params;
    std::size_t epochs_since_best = 0;

    for (std::size_t epoch = 1; epoch <= cfg.pretrain_max_epochs; ++epoch) {
        const ForwardBackwardResult fb = forward_backward(params, builder);
        adam.step(params, fb.grads);
        result.epochs_run = epoch;

        if (val_ids.empty()) {
            best = params;
            result.best_epoch = epoch;
            continue;
        }
        const double val_acc =
            detail::head_accuracy(graph, params, cfg.model.encoder, val_ids, val_targets);
        if (val_acc > result.best_val_accuracy) {
            result.best_val_accuracy = val_acc;
            result.best_epoch = epoch;
            best = params;
            epochs_since_best = 0;
        } else if (++epochs_since_best > cfg.patience) {
            break;
        }
    }

    for (const Param& p : best) {
        if (p.name.rfind("encoder.", 0) == 0) result.encoder.add(p);
    }
    return result;
}

// ---- meta-training -----------------------------------------------------------------

struct MetaResult {
    ModelState state;
    double a0 = 0.0;  ///< query accuracy of the last meta-training session (fraction)
    std::size_t episodes_run = 0;
    std::size_t reset_count = 0;
    std::vector<double> losses;
    double best_val_accuracy = -1.0;  ///< -1 when no validation stream exists
};

namespace detail {

/// Final-session accuracy after fine-tuning a copy of the state through the
/// validation session stream. The copy absorbs the fine-tuning; the caller's
/// state is untouched.
inline double validation_probe(const Graph& graph, const DataSplits& splits,
                               const ModelState& state, const RunConfig& cfg,
                               std::size_t sessions) {
    const std::vector<EpisodeTask> tasks = eval_session_stream(
        splits, EpisodeSampler::Mode::EvalVal, cfg.n_way, cfg.k_shot, cfg.query_k, sessions,
        derive_seed(cfg.seed, "meta-val"), cfg.eval_base_includes_novel_tr);
    ModelState probe = state;
    AdamState adam(probe.params, cfg.optimizer);
    double acc = 0.0;
    for (const EpisodeTask& task : tasks) {
        acc = incremental_session(graph, task, probe, &adam, true, cfg.finetune_steps).accuracy;
    }
    return acc;
}

}  // namespace detail

/// The pseudo-incremental meta-training loop: stream episodes whose novel
/// classes come from the meta-train pool, update all parameter groups on
/// each, and (when a validation pool exists) early-stop on the final-session
/// accuracy of a validation stream, checked every `meta_checkpoint_interval`
/// episodes with patience counted in checkpoints.
inline MetaResult meta_train(const Graph& graph, const DataSplits& splits,
                             const ParamSet& pretrained_encoder, const RunConfig& cfg,
                             DiagnosticsSink* diagnostics = nullptr) {
    MetaResult result;
    result.state = init_model(graph.feature_dim(), cfg.model, cfg.seed);
    result.state.params.adopt_values(pretrained_encoder);

    EpisodeSampler sampler(splits, EpisodeSampler::Mode::MetaTrain, cfg.n_way, cfg.k_shot,
                           cfg.query_k, derive_seed(cfg.seed, "meta-episodes"));

    if (cfg.meta_episodes == 0) {
        EpisodeTask task = sampler.next();
        result.a0 = incremental_session(graph, task, result.state, nullptr, false, 0).accuracy;
        return result;
    }

    std::size_t val_sessions = 0;
    if (splits.novel_val_classes.size() >= cfg.n_way) {
        val_sessions = cfg.val_sessions > 0
                           ? cfg.val_sessions
                           : std::min(cfg.eval_sessions, splits.novel_val_classes.size() / cfg.n_way);
    }

    AdamState adam(result.state.params, cfg.optimizer);
    std::optional<ModelState> best_state;
    std::size_t checkpoints_since_best = 0;

    for (std::size_t episode = 1; episode <= cfg.meta_episodes; ++episode) {
        EpisodeTask task = sampler.next();
        const SessionOutcome outcome =
            incremental_session(graph, task, result.state, &adam, true, cfg.meta_steps);
        result.a0 = outcome.accuracy;
        result.losses.push_back(outcome.loss);
        result.episodes_run = episode;
        if (diagnostics) diagnostics->record("meta", episode, task.session_index, outcome);

        if (val_sessions > 0 && episode % cfg.meta_checkpoint_interval == 0) {
            const double val_acc =
                detail::validation_probe(graph, splits, result.state, cfg, val_sessions);
            if (val_acc > result.best_val_accuracy) {
                result.best_val_accuracy = val_acc;
                best_state = result.state;
                checkpoints_since_best = 0;
            } else if (++checkpoints_since_best > cfg.patience) {
                break;
            }
        }
    }
    result.reset_count = sampler.reset_count();
    if (best_state) result.state = std::move(*best_state);
    return result;
}

// ---- evaluation --------------------------------------------------------------------

struct EvalOutcome {
    std::vector<double> accuracies;  ///< per session, fraction
    std::vector<std::map<int, double>> per_class;
};

/// Walks the held-out session stream, fine-tuning the state through each
/// session. Novel classes from earlier sessions stay in play via their
/// cached supports.
inline EvalOutcome evaluate(const Graph& graph, const DataSplits& splits, ModelState& state,
                            const RunConfig& cfg, DiagnosticsSink* diagnostics = nullptr) {
    const std::vector<EpisodeTask> tasks = eval_session_stream(
        splits, EpisodeSampler::Mode::EvalTest, cfg.n_way, cfg.k_shot, cfg.query_k,
        cfg.eval_sessions, derive_seed(cfg.seed, "eval-episodes"),
        cfg.eval_base_includes_novel_tr);

    EvalOutcome outcome;
    AdamState adam(state.params, cfg.optimizer);
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        const SessionOutcome session =
            incremental_session(graph, tasks[t], state, &adam, true, cfg.finetune_steps);
        outcome.accuracies.push_back(session.accuracy);
        outcome.per_class.push_back(session.per_class_accuracy);
        if (diagnostics) diagnostics->record("eval", t + 1, tasks[t].session_index, session);
    }
    return outcome;
}

// ---- metrics ------------------------------------------------------------------------

struct PdRpd {
    double pd = 0.0;   ///< accuracy drop A0 - AT, percentage points
    double rpd = 0.0;  ///< drop relative to A0, percent
};

/// `accuracy_percent` is the session series A0..AT in percent.
inline PdRpd compute_pd_rpd(const std::vector<double>& accuracy_percent) {
    if (accuracy_percent.empty()) {
        throw std::invalid_argument("compute_pd_rpd: empty accuracy series");
    }
    const double a0 = accuracy_percent.front();
    if (a0 <= 0.0) {
        throw std::invalid_argument("compute_pd_rpd: initial accuracy must be positive");
    }
    PdRpd out;
    out.pd = a0 - accuracy_percent.back();
    out.rpd = out.pd / a0 * 100.0;
    return out;
}

// ---- full pipeline -------------------------------------------------------------------

struct SeedRun {
    std::uint64_t seed = 0;
    std::vector<double> accuracy;  ///< percent, A0..AT
    double pd = 0.0;
    double rpd = 0.0;
    std::vector<std::map<int, double>> per_class;  ///< percent, eval sessions only
};

struct SessionReport {
    std::vector<SeedRun> runs;
    std::vector<double> mean_accuracy;
    std::vector<double> std_accuracy;
    double mean_pd = 0.0, std_pd = 0.0;
    double mean_rpd = 0.0, std_rpd = 0.0;
};

namespace detail {

inline std::pair<double, double> mean_std(const std::vector<double>& xs) {
    double mean = 0.0;
    for (const double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (const double x : xs) var += (x - mean) * (x - mean);
    var /= static_cast<double>(xs.size());
    return {mean, std::sqrt(var)};
}

template <typename F>
auto run_stage(const std::string& stage, F&& f) {
    try {
        return f();
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument("[" + stage + "] " + e.what());
    } catch (const std::exception& e) {
        throw std::runtime_error("[" + stage + "] " + e.what());
    }
}

}  // namespace detail

inline SessionReport aggregate_runs(std::vector<SeedRun> runs) {
    SessionReport report;
    if (runs.empty()) throw std::invalid_argument("aggregate_runs: no runs");
    const std::size_t sessions = runs.front().accuracy.size();
    for (const SeedRun& run : runs) {
        if (run.accuracy.size() != sessions) {
            throw std::invalid_argument("aggregate_runs: uneven accuracy series");
        }
    }
    for (std::size_t s = 0; s < sessions; ++s) {
        std::vector<double> xs;
        for (const SeedRun& run : runs) xs.push_back(run.accuracy[s]);
        const auto [mean, sd] = detail::mean_std(xs);
        report.mean_accuracy.push_back(mean);
        report.std_accuracy.push_back(sd);
    }
    std::vector<double> pds, rpds;
    for (const SeedRun& run : runs) {
        pds.push_back(run.pd);
        rpds.push_back(run.rpd);
    }
    std::tie(report.mean_pd, report.std_pd) = detail::mean_std(pds);
    std::tie(report.mean_rpd, report.std_rpd) = detail::mean_std(rpds);
    report.runs = std::move(runs);
    return report;
}

struct SingleRunResult {
    SeedRun run;
    DataSplits splits;
    ModelState meta_state;   ///< state returned by meta-training (checkpoint target)
    ModelState final_state;  ///< state after evaluation fine-tuning
    PretrainResult pretrain_info;
    MetaResult meta_info;
    std::string diagnostics_csv;  ///< empty unless diagnostics were requested
};

inline Graph build_run_graph(const RunConfig& cfg, std::uint64_t seed) {
    if (cfg.sbm) {
        SbmSpec spec = *cfg.sbm;
        spec.seed = derive_seed(seed, "sbm");
        return make_sbm_graph(spec);
    }
    return load_dataset(*cfg.dataset);
}

/// One seed's worth of the whole protocol: split, pre-train, meta-train,
/// evaluate. A0 is the last meta-training session's accuracy; the evaluation
/// sessions append A1..AT.
inline SingleRunResult run_single(const RunConfig& base_cfg, std::uint64_t seed) {
    RunConfig cfg = base_cfg;
    cfg.seed = seed;

    const Graph graph = detail::run_stage("data", [&] { return build_run_graph(cfg, seed); });

    SplitSpec split_spec = cfg.split;
    split_spec.seed = derive_seed(seed, "split");
    split_spec.k_shot = cfg.k_shot;
    SingleRunResult result;
    result.splits = detail::run_stage("split", [&] { return make_splits(graph, split_spec); });

    DiagnosticsSink sink;
    DiagnosticsSink* diag = cfg.diagnostics ? &sink : nullptr;

    result.pretrain_info =
        detail::run_stage("pretrain", [&] { return pretrain(graph, result.splits, cfg); });
    result.meta_info = detail::run_stage("meta-train", [&] {
        return meta_train(graph, result.splits, result.pretrain_info.encoder, cfg, diag);
    });
    result.meta_state = result.meta_info.state;

    result.final_state = result.meta_info.state;
    const EvalOutcome eval = detail::run_stage(
        "evaluate", [&] { return evaluate(graph, result.splits, result.final_state, cfg, diag); });

    result.run.seed = seed;
    result.run.accuracy.push_back(result.meta_info.a0 * 100.0);
    for (std::size_t t = 0; t < eval.accuracies.size(); ++t) {
        result.run.accuracy.push_back(eval.accuracies[t] * 100.0);
        std::map<int, double> per_class;
        for (const auto& [c, acc] : eval.per_class[t]) per_class[c] = acc * 100.0;
        result.run.per_class.push_back(std::move(per_class));
    }
    const PdRpd metrics = compute_pd_rpd(result.run.accuracy);
    result.run.pd = metrics.pd;
    result.run.rpd = metrics.rpd;
    if (cfg.diagnostics) result.diagnostics_csv = sink.str();
    return result;
}

inline nlohmann::json report_to_json(const RunConfig& cfg, const SessionReport& report) {
    nlohmann::json j;
    j["config"] = cfg;
    nlohmann::json seeds = nlohmann::json::array();
    nlohmann::json runs = nlohmann::json::array();
    for (const SeedRun& run : report.runs) {
        seeds.push_back(run.seed);
        nlohmann::json r = {{"seed", run.seed},
                            {"accuracy", run.accuracy},
                            {"pd", run.pd},
                            {"rpd", run.rpd}};
        nlohmann::json per_class = nlohmann::json::array();
        for (const auto& session : run.per_class) {
            nlohmann::json m;
            for (const auto& [c, acc] : session) m[std::to_string(c)] = acc;
            per_class.push_back(std::move(m));
        }
        r["per_class"] = std::move(per_class);
        runs.push_back(std::move(r));
    }
    j["seeds"] = std::move(seeds);
    j["runs"] = std::move(runs);
    j["mean_accuracy"] = report.mean_accuracy;
    j["std_accuracy"] = report.std_accuracy;
    j["mean_pd"] = report.mean_pd;
    j["std_pd"] = report.std_pd;
    j["mean_rpd"] = report.mean_rpd;
    j["std_rpd"] = report.std_rpd;
    return j;
}

/// Runs every seed and writes summary.json, sessions.csv, per_class.csv,
/// split manifests, and per-seed checkpoints into `out_dir`. No timestamps
/// anywhere: identical config and seed produce byte-identical outputs.
inline SessionReport run_pipeline(const RunConfig& cfg, const std::string& out_dir) {
    detail::run_stage("config", [&] {
        cfg.validate();
        return 0;
    });
    std::filesystem::create_directories(out_dir);
    const std::filesystem::path dir(out_dir);

    std::vector<SeedRun> runs;
    for (std::size_t i = 0; i < cfg.num_seeds; ++i) {
        const std::uint64_t seed = cfg.seed + i;
        SingleRunResult single = run_single(cfg, seed);
        const std::string tag = "seed" + std::to_string(seed);
        write_text_atomic((dir / ("manifest_" + tag + ".json")).string(),
                          split_manifest(single.splits).dump(2) + "\n");
        save_checkpoint((dir / ("checkpoint_" + tag + ".bin")).string(),
                        single.meta_state.params, seed, single.meta_info.episodes_run);
        if (!single.diagnostics_csv.empty()) {
            write_text_atomic((dir / ("diagnostics_" + tag + ".csv")).string(),
                              single.diagnostics_csv);
        }
        runs.push_back(std::move(single.run));
    }

    SessionReport report = aggregate_runs(std::move(runs));
    write_text_atomic((dir / "summary.json").string(),
                      report_to_json(cfg, report).dump(2) + "\n");

    std::ostringstream sessions_csv;
    sessions_csv << "seed,session,accuracy\n";
    std::ostringstream per_class_csv;
    per_class_csv << "seed,session,class_id,accuracy\n";
    for (const SeedRun& run : report.runs) {
        for (std::size_t s = 0; s < run.accuracy.size(); ++s) {
            sessions_csv << run.seed << ',' << s << ',' << run.accuracy[s] << '\n';
        }
        for (std::size_t t = 0; t < run.per_class.size(); ++t) {
            for (const auto& [c, acc] : run.per_class[t]) {
                per_class_csv << run.seed << ',' << t + 1 << ',' << c << ',' << acc << '\n';
            }
        }
    }
    write_text_atomic((dir / "sessions.csv").string(), sessions_csv.str());
    write_text_atomic((dir / "per_class.csv").string(), per_class_csv.str());
    return report;
}

// ---- embedding export ------------------------------------------------------------------

/// CSV of node id, true class, and the node's embedding under the state's
/// encoder. An empty node list yields a header-only file.
inline void export_embeddings(const ModelState& state, const Graph& graph,
                              const std::vector<std::size_t>& node_ids, const std::string& path) {
    const std::size_t h = state.cfg.encoder.embedding_dim();
    std::ostringstream os;
    os << "id,label";
    for (std::size_t d = 0; d < h; ++d) os << ",z" << d;
    os << '\n';
    if (!node_ids.empty()) {
        const Tensor z = encode(graph, state.params, state.cfg.encoder, node_ids);
        for (std::size_t r = 0; r < node_ids.size(); ++r) {
            os << node_ids[r] << ',' << graph.label(node_ids[r]);
            for (std::size_t d = 0; d < h; ++d) os << ',' << detail::format_double(z.at(r, d));
            os << '\n';
        }
    }
    write_text_atomic(path, os.str());
}

}  // namespace gfcl
