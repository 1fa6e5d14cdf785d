// Command-line front end: dataset generation, the training pipeline stages,
// gradient verification, and embedding export.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gfcl/gfcl.hpp"

namespace {

namespace fs = std::filesystem;

gfcl::RunConfig load_config(const std::string& path, std::optional<std::uint64_t> seed) {
    gfcl::RunConfig config = gfcl::parse_config(path);
    if (seed) config.seed = *seed;
    return config;
}

gfcl::Graph config_graph(const gfcl::RunConfig& config) {
    return gfcl::build_run_graph(config, config.seed);
}

gfcl::DataSplits config_splits(const gfcl::Graph& graph, const gfcl::RunConfig& config) {
    gfcl::SplitSpec spec = config.split;
    spec.seed = gfcl::derive_seed(config.seed, "split");
    spec.k_shot = config.k_shot;
    return gfcl::make_splits(graph, spec);
}

gfcl::ModelState state_from_checkpoint(const gfcl::RunConfig& config, const gfcl::Graph& graph,
                                       const std::string& path) {
    const gfcl::Checkpoint ckpt = gfcl::load_checkpoint(path);
    gfcl::ModelState state = gfcl::init_model(graph.feature_dim(), config.model, config.seed);
    for (const gfcl::Param& p : state.params) {
        if (!ckpt.params.contains(p.name)) {
            throw std::invalid_argument("checkpoint " + path + " is missing parameter '" + p.name +
                                        "'; does the config match the checkpointed model?");
        }
    }
    state.params.adopt_values(ckpt.params);
    return state;
}

std::vector<std::size_t> parse_node_list(const std::string& csv) {
    std::vector<std::size_t> out;
    std::istringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        out.push_back(static_cast<std::size_t>(std::stoull(item)));
    }
    return out;
}

void print_series(const std::string& label, const std::vector<double>& series) {
    std::cout << label;
    for (const double v : series) std::cout << ' ' << v;
    std::cout << '\n';
}

int cmd_generate(const gfcl::SbmSpec& spec, const std::string& out_dir) {
    const gfcl::DatasetBundle bundle = gfcl::generate_synthetic(spec, out_dir);
    std::cout << "wrote " << bundle.num_nodes << " nodes, " << bundle.num_classes
              << " classes to " << out_dir << '\n';
    return 0;
}

int cmd_pretrain(const gfcl::RunConfig& config, const std::string& out_dir) {
    config.validate();
    const gfcl::Graph graph = config_graph(config);
    const gfcl::DataSplits splits = config_splits(graph, config);
    const gfcl::PretrainResult result = gfcl::pretrain(graph, splits, config);

    fs::create_directories(out_dir);
    const std::string tag = "seed" + std::to_string(config.seed);
    gfcl::write_text_atomic((fs::path(out_dir) / ("manifest_" + tag + ".json")).string(),
                            gfcl::split_manifest(splits).dump(2) + "\n");
    const std::string ckpt = (fs::path(out_dir) / ("encoder_" + tag + ".bin")).string();
    gfcl::save_checkpoint(ckpt, result.encoder, config.seed, result.best_epoch);
    nlohmann::json info = {{"best_val_accuracy", result.best_val_accuracy * 100.0},
                           {"best_epoch", result.best_epoch},
                           {"epochs_run", result.epochs_run}};
    gfcl::write_text_atomic((fs::path(out_dir) / ("pretrain_" + tag + ".json")).string(),
                            info.dump(2) + "\n");
    std::cout << "pretrain: best validation accuracy " << result.best_val_accuracy * 100.0
              << "% at epoch " << result.best_epoch << " (" << result.epochs_run << " epochs)\n"
              << "checkpoint: " << ckpt << '\n';
    return 0;
}

int cmd_metatrain(const gfcl::RunConfig& config, const std::string& out_dir,
                  const std::string& encoder_ckpt) {
    config.validate();
    const gfcl::Graph graph = config_graph(config);
    const gfcl::DataSplits splits = config_splits(graph, config);

    gfcl::ParamSet encoder;
    if (encoder_ckpt.empty()) {
        encoder = gfcl::pretrain(graph, splits, config).encoder;
    } else {
        encoder = gfcl::load_checkpoint(encoder_ckpt).params;
    }
    gfcl::DiagnosticsSink sink;
    const gfcl::MetaResult result = gfcl::meta_train(graph, splits, encoder, config,
                                                     config.diagnostics ? &sink : nullptr);

    fs::create_directories(out_dir);
    const std::string tag = "seed" + std::to_string(config.seed);
    const std::string ckpt = (fs::path(out_dir) / ("checkpoint_" + tag + ".bin")).string();
    gfcl::save_checkpoint(ckpt, result.state.params, config.seed, result.episodes_run);
    nlohmann::json info = {{"a0", result.a0 * 100.0},
                           {"episodes_run", result.episodes_run},
                           {"reset_count", result.reset_count},
                           {"best_val_accuracy", result.best_val_accuracy * 100.0}};
    gfcl::write_text_atomic((fs::path(out_dir) / ("meta_" + tag + ".json")).string(),
                            info.dump(2) + "\n");
    if (config.diagnostics) {
        gfcl::write_text_atomic((fs::path(out_dir) / ("diagnostics_" + tag + ".csv")).string(),
                                sink.str());
    }
    std::cout << "meta-train: A0 " << result.a0 * 100.0 << "% after " << result.episodes_run
              << " episodes\ncheckpoint: " << ckpt << '\n';
    return 0;
}

int cmd_evaluate(const gfcl::RunConfig& config, const std::string& out_dir,
                 const std::string& checkpoint, std::optional<double> a0,
                 const std::string& meta_summary) {
    config.validate();
    if (!a0 && meta_summary.empty()) {
        throw std::invalid_argument("evaluate: provide --a0 or --meta-summary");
    }
    if (!a0) {
        const nlohmann::json j = nlohmann::json::parse(gfcl::read_text(meta_summary));
        a0 = j.at("a0").get<double>();
    }
    const gfcl::Graph graph = config_graph(config);
    const gfcl::DataSplits splits = config_splits(graph, config);
    gfcl::ModelState state = state_from_checkpoint(config, graph, checkpoint);

    const gfcl::EvalOutcome outcome = gfcl::evaluate(graph, splits, state, config);

    gfcl::SeedRun run;
    run.seed = config.seed;
    run.accuracy.push_back(*a0);
    for (std::size_t t = 0; t < outcome.accuracies.size(); ++t) {
        run.accuracy.push_back(outcome.accuracies[t] * 100.0);
        std::map<int, double> per_class;
        for (const auto& [c, acc] : outcome.per_class[t]) per_class[c] = acc * 100.0;
        run.per_class.push_back(std::move(per_class));
    }
    const gfcl::PdRpd metrics = gfcl::compute_pd_rpd(run.accuracy);
    run.pd = metrics.pd;
    run.rpd = metrics.rpd;

    fs::create_directories(out_dir);
    const std::string tag = "seed" + std::to_string(config.seed);
    const gfcl::SessionReport report = gfcl::aggregate_runs({run});
    gfcl::write_text_atomic((fs::path(out_dir) / ("eval_" + tag + ".json")).string(),
                            gfcl::report_to_json(config, report).dump(2) + "\n");
    print_series("accuracy:", run.accuracy);
    std::cout << "PD " << run.pd << "  RPD " << run.rpd << "%\n";
    return 0;
}

int cmd_run(const gfcl::RunConfig& config, const std::string& out_dir) {
    const gfcl::SessionReport report = gfcl::run_pipeline(config, out_dir);
    print_series("mean accuracy:", report.mean_accuracy);
    std::cout << "mean PD " << report.mean_pd << "  mean RPD " << report.mean_rpd << "%\n"
              << "outputs in " << out_dir << '\n';
    return 0;
}

int cmd_gradcheck(std::uint64_t seed, double fd_step, double tol, std::size_t max_coords) {
    const gfcl::GradCheckFixture fixture = gfcl::make_gradcheck_fixture(seed);
    const gfcl::GradCheckReport report =
        gfcl::episode_grad_check(fixture, fd_step, tol, max_coords);
    std::cout << report.to_string();
    std::cout << (report.all_pass() ? "PASS" : "FAIL") << " max relative error "
              << report.max_rel_err() << " (tolerance " << tol << ")\n";
    return report.all_pass() ? 0 : 1;
}

int cmd_export(const gfcl::RunConfig& config, const std::string& checkpoint,
               const std::string& nodes_csv, const std::string& out_path) {
    const gfcl::Graph graph = config_graph(config);
    const gfcl::ModelState state = state_from_checkpoint(config, graph, checkpoint);
    std::vector<std::size_t> nodes;
    if (nodes_csv.empty()) {
        for (std::size_t v = 0; v < graph.num_nodes(); ++v) nodes.push_back(v);
    } else {
        nodes = parse_node_list(nodes_csv);
    }
    gfcl::export_embeddings(state, graph, nodes, out_path);
    std::cout << "wrote " << nodes.size() << " embeddings to " << out_path << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Few-shot class-incremental node classification on graphs"};
    app.require_subcommand(1);

    // generate
    auto* generate = app.add_subcommand("generate", "Write a synthetic block-model dataset");
    gfcl::SbmSpec sbm;
    sbm.classes = 12;
    sbm.nodes_per_class = 50;
    std::string gen_out = "dataset";
    generate->add_option("--out", gen_out, "Output directory");
    generate->add_option("--classes", sbm.classes, "Number of classes");
    generate->add_option("--nodes-per-class", sbm.nodes_per_class, "Nodes per class");
    generate->add_option("--p-in", sbm.p_in, "Intra-class edge probability");
    generate->add_option("--p-out", sbm.p_out, "Inter-class edge probability");
    generate->add_option("--feature-dim", sbm.feature_dim, "Feature dimension");
    generate->add_option("--separation", sbm.class_center_separation, "Class center separation");
    generate->add_option("--noise", sbm.feature_noise, "Feature noise standard deviation");
    generate->add_option("--seed", sbm.seed, "Generator seed");

    // shared options for the training stages
    std::string config_path, out_dir = "out";
    std::optional<std::uint64_t> seed_override;
    auto add_common = [&](CLI::App* cmd, bool seed_required) {
        cmd->add_option("--config", config_path, "Run configuration JSON")->required();
        auto* seed_opt = cmd->add_option(
            "--seed", [&seed_override](const std::vector<std::string>& vals) {
                seed_override = std::stoull(vals.front());
                return true;
            },
            "Seed override");
        if (seed_required) seed_opt->required();
        cmd->add_option("--out", out_dir, "Output directory");
    };

    auto* pretrain_cmd = app.add_subcommand("pretrain", "Pre-train the encoder on base classes");
    add_common(pretrain_cmd, false);

    auto* metatrain_cmd =
        app.add_subcommand("metatrain", "Episodic pseudo-incremental meta-training");
    add_common(metatrain_cmd, false);
    std::string encoder_ckpt;
    metatrain_cmd->add_option("--encoder", encoder_ckpt,
                              "Pre-trained encoder checkpoint (pre-trains if omitted)");

    auto* evaluate_cmd = app.add_subcommand("evaluate", "Incremental evaluation session stream");
    add_common(evaluate_cmd, false);
    std::string eval_ckpt, meta_summary;
    std::optional<double> a0;
    evaluate_cmd->add_option("--checkpoint", eval_ckpt, "Meta-trained checkpoint")->required();
    evaluate_cmd->add_option("--a0",
                             [&a0](const std::vector<std::string>& vals) {
                                 a0 = std::stod(vals.front());
                                 return true;
                             },
                             "Last meta-training accuracy (percent)");
    evaluate_cmd->add_option("--meta-summary", meta_summary,
                             "meta_seed<N>.json emitted by metatrain (source of --a0)");

    auto* run_cmd = app.add_subcommand("run", "Full pipeline over all seeds");
    run_cmd->add_option("--config", config_path, "Run configuration JSON")->required();
    run_cmd
        ->add_option("--seed",
                     [&seed_override](const std::vector<std::string>& vals) {
                         seed_override = std::stoull(vals.front());
                         return true;
                     },
                     "Base seed")
        ->required();
    run_cmd->add_option("--out", out_dir, "Output directory");

    auto* gradcheck_cmd =
        app.add_subcommand("gradcheck", "Verify session-loss gradients by finite differences");
    std::uint64_t gc_seed = 7;
    double fd_step = 1e-5, tol = 1e-4;
    std::size_t max_coords = 0;
    gradcheck_cmd->add_option("--seed", gc_seed, "Fixture seed");
    gradcheck_cmd->add_option("--fd-step", fd_step, "Central-difference step");
    gradcheck_cmd->add_option("--tol", tol, "Relative-error tolerance");
    gradcheck_cmd->add_option("--max-coords", max_coords,
                              "Coordinates checked per parameter (0: all)");

    auto* export_cmd = app.add_subcommand("export-embeddings", "Dump node embeddings to CSV");
    add_common(export_cmd, false);
    std::string export_ckpt, nodes_csv, export_path = "embeddings.csv";
    export_cmd->add_option("--checkpoint", export_ckpt, "Model checkpoint")->required();
    export_cmd->add_option("--nodes", nodes_csv, "Comma-separated node ids (default: all)");
    export_cmd->add_option("--file", export_path, "Output CSV path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*generate) return cmd_generate(sbm, gen_out);
        if (*pretrain_cmd) return cmd_pretrain(load_config(config_path, seed_override), out_dir);
        if (*metatrain_cmd) {
            return cmd_metatrain(load_config(config_path, seed_override), out_dir, encoder_ckpt);
        }
        if (*evaluate_cmd) {
            return cmd_evaluate(load_config(config_path, seed_override), out_dir, eval_ckpt, a0,
                                meta_summary);
        }
        if (*run_cmd) return cmd_run(load_config(config_path, seed_override), out_dir);
        if (*gradcheck_cmd) return cmd_gradcheck(gc_seed, fd_step, tol, max_coords);
        if (*export_cmd) {
            return cmd_export(load_config(config_path, seed_override), export_ckpt, nodes_csv,
                              export_path);
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
