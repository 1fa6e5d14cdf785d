#pragma once

#include <optional>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "gfcl/adam.hpp"
#include "gfcl/episodes.hpp"
#include "gfcl/io.hpp"
#include "gfcl/model.hpp"
#include "gfcl/sbm.hpp"

namespace gfcl {

/// Everything one experiment needs. All randomness in a run derives from
/// `seed`; multi-seed reports use seed, seed+1, ... so a report is fully
/// described by its config.
struct RunConfig {
    std::size_t n_way = 2;
    std::size_t k_shot = 5;
    std::size_t query_k = 5;
    std::size_t meta_episodes = 1000;
    std::size_t eval_sessions = 2;
    std::size_t finetune_steps = 20;
    std::size_t meta_steps = 1;
    std::size_t pretrain_max_epochs = 200;
    std::size_t patience = 10;
    std::size_t meta_checkpoint_interval = 50;
    std::size_t val_sessions = 0;  ///< 0: as many as the validation pool allows, capped at eval_sessions
    AdamConfig optimizer;
    std::uint64_t seed = 1;
    std::size_t num_seeds = 10;
    ModelConfig model;
    SplitSpec split;  ///< seed and k_shot are wired from the run at use time
    bool eval_base_includes_novel_tr = false;
    std::optional<SbmSpec> sbm;
    std::optional<DatasetBundle> dataset;
    bool diagnostics = false;

    void validate() const {
        if (n_way == 0 || k_shot == 0 || query_k == 0) {
            throw std::invalid_argument("config: n_way, k_shot, query_k must be positive");
        }
        if (eval_sessions == 0) throw std::invalid_argument("config: eval_sessions must be positive");
        if (patience == 0) throw std::invalid_argument("config: patience must be at least 1");
        if (num_seeds == 0) throw std::invalid_argument("config: num_seeds must be positive");
        if (sbm.has_value() == dataset.has_value()) {
            throw std::invalid_argument("config: exactly one of 'sbm' or 'dataset' is required");
        }
        if (sbm) sbm->validate();
        if (n_way > split.n_novel_tr) {
            throw std::invalid_argument("config: n_way exceeds the " +
                                        std::to_string(split.n_novel_tr) +
                                        " meta-training novel classes");
        }
        if (eval_sessions * n_way > split.n_novel_test) {
            throw std::invalid_argument("config: eval_sessions * n_way exceeds the " +
                                        std::to_string(split.n_novel_test) +
                                        " evaluation novel classes");
        }
        if (model.encoder.layer_dims.empty()) {
            throw std::invalid_argument("config: encoder needs at least one layer");
        }
    }
};

inline void to_json(nlohmann::json& j, const AdamConfig& c) {
    j = {{"lr", c.lr},
         {"weight_decay", c.weight_decay},
         {"beta1", c.beta1},
         {"beta2", c.beta2},
         {"eps", c.eps},
         {"decoupled_decay", c.decoupled_decay},
         {"decay_biases", c.decay_biases}};
}

inline void from_json(const nlohmann::json& j, AdamConfig& c) {
    c.lr = j.value("lr", c.lr);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.eps = j.value("eps", c.eps);
    c.decoupled_decay = j.value("decoupled_decay", c.decoupled_decay);
    c.decay_biases = j.value("decay_biases", c.decay_biases);
}

inline void to_json(nlohmann::json& j, const SplitSpec& s) {
    j = {{"n_base", s.n_base},
         {"n_novel_tr", s.n_novel_tr},
         {"n_novel_val", s.n_novel_val},
         {"n_novel_test", s.n_novel_test},
         {"base_train_fraction", s.base_train_fraction},
         {"base_val_fraction", s.base_val_fraction},
         {"base_test_fraction", s.base_test_fraction}};
}

inline void from_json(const nlohmann::json& j, SplitSpec& s) {
    s.n_base = j.value("n_base", s.n_base);
    s.n_novel_tr = j.value("n_novel_tr", s.n_novel_tr);
    s.n_novel_val = j.value("n_novel_val", s.n_novel_val);
    s.n_novel_test = j.value("n_novel_test", s.n_novel_test);
    s.base_train_fraction = j.value("base_train_fraction", s.base_train_fraction);
    s.base_val_fraction = j.value("base_val_fraction", s.base_val_fraction);
    s.base_test_fraction = j.value("base_test_fraction", s.base_test_fraction);
}

inline void to_json(nlohmann::json& j, const SbmSpec& s) {
    j = {{"classes", s.classes},
         {"nodes_per_class", s.nodes_per_class},
         {"p_in", s.p_in},
         {"p_out", s.p_out},
         {"feature_dim", s.feature_dim},
         {"class_center_separation", s.class_center_separation},
         {"feature_noise", s.feature_noise}};
}

inline void from_json(const nlohmann::json& j, SbmSpec& s) {
    s.classes = j.value("classes", s.classes);
    s.nodes_per_class = j.value("nodes_per_class", s.nodes_per_class);
    s.p_in = j.value("p_in", s.p_in);
    s.p_out = j.value("p_out", s.p_out);
    s.feature_dim = j.value("feature_dim", s.feature_dim);
    s.class_center_separation = j.value("class_center_separation", s.class_center_separation);
    s.feature_noise = j.value("feature_noise", s.feature_noise);
}

inline void to_json(nlohmann::json& j, const ModelConfig& m) {
    j = {{"encoder_dims", m.encoder.layer_dims},
         {"tla_hidden_dim", m.tla.hidden_dim},
         {"tla_out_dim", m.tla.out_dim},
         {"nla_fc_dim", m.nla.fc_dim},
         {"nla_agg_dims", m.nla.agg_dims},
         {"nla_degree_eps", m.nla.degree_eps},
         {"use_tla", m.use_tla},
         {"use_nla", m.use_nla},
         {"prototype_mode", m.prototype_mode == PrototypeMode::PerClass ? "per_class" : "paper"},
         {"loss_mode", m.loss_mode == LossMode::Categorical ? "categorical" : "binary"}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& m) {
    m.encoder.layer_dims = j.value("encoder_dims", m.encoder.layer_dims);
    m.tla.hidden_dim = j.value("tla_hidden_dim", m.tla.hidden_dim);
    m.tla.out_dim = j.value("tla_out_dim", m.tla.out_dim);
    m.nla.fc_dim = j.value("nla_fc_dim", m.nla.fc_dim);
    m.nla.agg_dims = j.value("nla_agg_dims", m.nla.agg_dims);
    m.nla.degree_eps = j.value("nla_degree_eps", m.nla.degree_eps);
    m.use_tla = j.value("use_tla", m.use_tla);
    m.use_nla = j.value("use_nla", m.use_nla);
    const std::string proto = j.value("prototype_mode", std::string("per_class"));
    if (proto == "per_class") {
        m.prototype_mode = PrototypeMode::PerClass;
    } else if (proto == "paper") {
        m.prototype_mode = PrototypeMode::Paper;
    } else {
        throw std::invalid_argument("config: unknown prototype_mode '" + proto + "'");
    }
    const std::string loss = j.value("loss_mode", std::string("categorical"));
    if (loss == "categorical") {
        m.loss_mode = LossMode::Categorical;
    } else if (loss == "binary") {
        m.loss_mode = LossMode::BinaryLiteral;
    } else {
        throw std::invalid_argument("config: unknown loss_mode '" + loss + "'");
    }
}

inline void to_json(nlohmann::json& j, const RunConfig& c) {
    j = {{"n_way", c.n_way},
         {"k_shot", c.k_shot},
         {"query_k", c.query_k},
         {"meta_episodes", c.meta_episodes},
         {"eval_sessions", c.eval_sessions},
         {"finetune_steps", c.finetune_steps},
         {"meta_steps", c.meta_steps},
         {"pretrain_max_epochs", c.pretrain_max_epochs},
         {"patience", c.patience},
         {"meta_checkpoint_interval", c.meta_checkpoint_interval},
         {"val_sessions", c.val_sessions},
         {"optimizer", c.optimizer},
         {"seed", c.seed},
         {"num_seeds", c.num_seeds},
         {"model", c.model},
         {"split", c.split},
         {"eval_base_includes_novel_tr", c.eval_base_includes_novel_tr},
         {"diagnostics", c.diagnostics}};
    if (c.sbm) j["sbm"] = *c.sbm;
    if (c.dataset) j["dataset"] = *c.dataset;
}

inline void from_json(const nlohmann::json& j, RunConfig& c) {
    c.n_way = j.value("n_way", c.n_way);
    c.k_shot = j.value("k_shot", c.k_shot);
    c.query_k = j.value("query_k", c.query_k);
    c.meta_episodes = j.value("meta_episodes", c.meta_episodes);
    c.eval_sessions = j.value("eval_sessions", c.eval_sessions);
    c.finetune_steps = j.value("finetune_steps", c.finetune_steps);
    c.meta_steps = j.value("meta_steps", c.meta_steps);
    c.pretrain_max_epochs = j.value("pretrain_max_epochs", c.pretrain_max_epochs);
    c.patience = j.value("patience", c.patience);
    c.meta_checkpoint_interval = j.value("meta_checkpoint_interval", c.meta_checkpoint_interval);
    c.val_sessions = j.value("val_sessions", c.val_sessions);
    if (j.contains("optimizer")) c.optimizer = j.at("optimizer").get<AdamConfig>();
    c.seed = j.value("seed", c.seed);
    c.num_seeds = j.value("num_seeds", c.num_seeds);
    if (j.contains("model")) c.model = j.at("model").get<ModelConfig>();
    if (j.contains("split")) c.split = j.at("split").get<SplitSpec>();
    c.eval_base_includes_novel_tr =
        j.value("eval_base_includes_novel_tr", c.eval_base_includes_novel_tr);
    c.diagnostics = j.value("diagnostics", c.diagnostics);
    if (j.contains("sbm") && !j.at("sbm").is_null()) c.sbm = j.at("sbm").get<SbmSpec>();
    if (j.contains("dataset") && !j.at("dataset").is_null()) {
        c.dataset = j.at("dataset").get<DatasetBundle>();
    }
}

inline RunConfig parse_config(const std::string& path) {
    RunConfig config = nlohmann::json::parse(read_text(path)).get<RunConfig>();
    return config;
}

}  // namespace gfcl
