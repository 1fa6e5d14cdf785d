#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gfcl/graph.hpp"
#include "gfcl/params.hpp"
#include "gfcl/sbm.hpp"

namespace gfcl {

/// Write-temp-then-rename so readers never observe a partial file.
inline void write_text_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("write_text_atomic: cannot open " + tmp);
        os << content;
        if (!os) throw std::runtime_error("write_text_atomic: write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw std::runtime_error("write_text_atomic: rename to " + path + " failed");
    }
}

inline std::string read_text(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("read_text: cannot open " + path);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

namespace detail {

[[noreturn]] inline void parse_fail(const std::string& path, std::size_t line,
                                    const std::string& what) {
    throw std::runtime_error(path + ":" + std::to_string(line) + ": " + what);
}

inline std::string format_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

}  // namespace detail

/// One edge per line: two whitespace-separated node ids. Blank lines are
/// skipped.
inline std::vector<std::pair<std::size_t, std::size_t>> read_edge_list(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("read_edge_list: cannot open " + path);
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::istringstream ss(line);
        long long u = 0, v = 0;
        if (!(ss >> u)) {
            if (ss.eof()) continue;  // blank line
            detail::parse_fail(path, lineno, "expected integer node id");
        }
        if (!(ss >> v)) detail::parse_fail(path, lineno, "expected two node ids per edge");
        std::string extra;
        if (ss >> extra) detail::parse_fail(path, lineno, "unexpected trailing token '" + extra + "'");
        if (u < 0 || v < 0) detail::parse_fail(path, lineno, "negative node id");
        edges.emplace_back(static_cast<std::size_t>(u), static_cast<std::size_t>(v));
    }
    return edges;
}

/// One row per node, whitespace-separated decimals; all rows must have the
/// same width.
inline Tensor read_feature_matrix(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("read_feature_matrix: cannot open " + path);
    std::vector<double> data;
    std::size_t cols = 0, rows = 0, lineno = 0;
    std::string line;
    while (std::getline(is, line)) {
        ++lineno;
        std::istringstream ss(line);
        std::vector<double> row;
        double v = 0.0;
        while (ss >> v) row.push_back(v);
        if (!ss.eof()) detail::parse_fail(path, lineno, "expected decimal value");
        if (row.empty()) continue;
        if (cols == 0) {
            cols = row.size();
        } else if (row.size() != cols) {
            detail::parse_fail(path, lineno,
                               "ragged row: got " + std::to_string(row.size()) + " values, expected " +
                                   std::to_string(cols));
        }
        data.insert(data.end(), row.begin(), row.end());
        ++rows;
    }
    if (rows == 0) throw std::runtime_error(path + ": empty feature matrix");
    return Tensor({rows, cols}, std::move(data));
}

/// One integer class id per line; -1 marks an unlabeled node.
inline std::vector<int> read_labels(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("read_labels: cannot open " + path);
    std::vector<int> labels;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::istringstream ss(line);
        int v = 0;
        if (!(ss >> v)) {
            if (ss.eof()) continue;
            detail::parse_fail(path, lineno, "expected integer label");
        }
        std::string extra;
        if (ss >> extra) detail::parse_fail(path, lineno, "unexpected trailing token '" + extra + "'");
        labels.push_back(v);
    }
    return labels;
}

// Binary feature matrix, for graphs where the text format gets bulky. Same
// layout family as checkpoints: length-prefixed JSON header, then raw
// little-endian doubles.
inline void write_features_binary(const std::string& path, const Tensor& features) {
    if (features.rank() != 2) {
        throw std::invalid_argument("write_features_binary: matrix required");
    }
    nlohmann::json header = {{"format", "gfcl-features-v1"},
                             {"rows", features.rows()},
                             {"cols", features.cols()}};
    const std::string text = header.dump();
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("write_features_binary: cannot open " + tmp);
        detail::write_u64_le(os, text.size());
        os.write(text.data(), static_cast<std::streamsize>(text.size()));
        for (const double v : features.values()) detail::write_f64_le(os, v);
        if (!os) throw std::runtime_error("write_features_binary: write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw std::runtime_error("write_features_binary: rename to " + path + " failed");
    }
}

inline Tensor read_features_binary(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("read_features_binary: cannot open " + path);
    const std::uint64_t header_len = detail::read_u64_le(is);
    std::string text(header_len, '\0');
    is.read(text.data(), static_cast<std::streamsize>(header_len));
    if (!is) throw std::runtime_error("read_features_binary: truncated header in " + path);
    const nlohmann::json header = nlohmann::json::parse(text);
    if (header.value("format", "") != "gfcl-features-v1") {
        throw std::runtime_error("read_features_binary: unrecognized format in " + path);
    }
    Tensor out({header.at("rows").get<std::size_t>(), header.at("cols").get<std::size_t>()});
    for (auto& v : out.values()) v = detail::read_f64_le(is);
    if (!is) throw std::runtime_error("read_features_binary: truncated payload in " + path);
    return out;
}

inline bool has_suffix(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

struct DatasetBundle {
    std::string edge_path;
    std::string feature_path;  ///< .bin paths use the binary feature format
    std::string label_path;
    std::size_t num_nodes = 0;
    std::size_t feature_dim = 0;
    std::size_t num_classes = 0;
};

inline void to_json(nlohmann::json& j, const DatasetBundle& b) {
    j = {{"edge_path", b.edge_path},       {"feature_path", b.feature_path},
         {"label_path", b.label_path},     {"num_nodes", b.num_nodes},
         {"feature_dim", b.feature_dim},   {"num_classes", b.num_classes}};
}

inline void from_json(const nlohmann::json& j, DatasetBundle& b) {
    b.edge_path = j.at("edge_path").get<std::string>();
    b.feature_path = j.at("feature_path").get<std::string>();
    b.label_path = j.at("label_path").get<std::string>();
    b.num_nodes = j.at("num_nodes").get<std::size_t>();
    b.feature_dim = j.at("feature_dim").get<std::size_t>();
    b.num_classes = j.at("num_classes").get<std::size_t>();
}

inline Graph load_dataset(const DatasetBundle& bundle) {
    const auto edges = read_edge_list(bundle.edge_path);
    Tensor features = has_suffix(bundle.feature_path, ".bin")
                          ? read_features_binary(bundle.feature_path)
                          : read_feature_matrix(bundle.feature_path);
    std::vector<int> labels = read_labels(bundle.label_path);
    Graph graph = Graph::build(edges, std::move(features), std::move(labels));
    if (graph.num_nodes() != bundle.num_nodes) {
        throw std::runtime_error("load_dataset: bundle declares " +
                                 std::to_string(bundle.num_nodes) + " nodes, files contain " +
                                 std::to_string(graph.num_nodes()));
    }
    if (graph.feature_dim() != bundle.feature_dim) {
        throw std::runtime_error("load_dataset: bundle declares feature_dim " +
                                 std::to_string(bundle.feature_dim) + ", files contain " +
                                 std::to_string(graph.feature_dim()));
    }
    if (graph.class_ids().size() != bundle.num_classes) {
        throw std::runtime_error("load_dataset: bundle declares " +
                                 std::to_string(bundle.num_classes) + " classes, files contain " +
                                 std::to_string(graph.class_ids().size()));
    }
    return graph;
}

/// Writes a graph's text files into `dir` and returns the bundle describing
/// them. Edge lines carry each undirected edge once, smaller id first.
inline DatasetBundle write_dataset(const Graph& graph, const std::string& dir) {
    std::filesystem::create_directories(dir);
    DatasetBundle bundle;
    bundle.edge_path = (std::filesystem::path(dir) / "edges.tsv").string();
    bundle.feature_path = (std::filesystem::path(dir) / "features.txt").string();
    bundle.label_path = (std::filesystem::path(dir) / "labels.txt").string();
    bundle.num_nodes = graph.num_nodes();
    bundle.feature_dim = graph.feature_dim();
    bundle.num_classes = graph.class_ids().size();

    std::ostringstream edges;
    for (std::size_t v = 0; v < graph.num_nodes(); ++v) {
        for (const std::size_t u : graph.neighbors(v)) {
            if (v < u) edges << v << '\t' << u << '\n';
        }
    }
    write_text_atomic(bundle.edge_path, edges.str());

    std::ostringstream features;
    const Tensor& x = graph.features();
    for (std::size_t v = 0; v < x.rows(); ++v) {
        for (std::size_t d = 0; d < x.cols(); ++d) {
            if (d) features << ' ';
            features << detail::format_double(x.at(v, d));
        }
        features << '\n';
    }
    write_text_atomic(bundle.feature_path, features.str());

    std::ostringstream labels;
    for (std::size_t v = 0; v < graph.num_nodes(); ++v) labels << graph.label(v) << '\n';
    write_text_atomic(bundle.label_path, labels.str());

    return bundle;
}

/// Synthesizes the SBM dataset, writes it to `dir` (plus bundle.json), and
/// returns the bundle.
inline DatasetBundle generate_synthetic(const SbmSpec& spec, const std::string& dir) {
    const Graph graph = make_sbm_graph(spec);
    DatasetBundle bundle = write_dataset(graph, dir);
    nlohmann::json j = bundle;
    j["sbm"] = {{"classes", spec.classes},
                {"nodes_per_class", spec.nodes_per_class},
                {"p_in", spec.p_in},
                {"p_out", spec.p_out},
                {"feature_dim", spec.feature_dim},
                {"class_center_separation", spec.class_center_separation},
                {"feature_noise", spec.feature_noise},
                {"seed", spec.seed}};
    write_text_atomic((std::filesystem::path(dir) / "bundle.json").string(), j.dump(2) + "\n");
    return bundle;
}

inline DatasetBundle load_bundle(const std::string& json_path) {
    const nlohmann::json j = nlohmann::json::parse(read_text(json_path));
    return j.get<DatasetBundle>();
}

}  // namespace gfcl
