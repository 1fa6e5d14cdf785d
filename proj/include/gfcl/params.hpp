#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gfcl/rng.hpp"
#include "gfcl/tensor.hpp"

namespace gfcl {

struct Param {
    std::string name;
    Tensor value;
    bool trainable = true;
    /// Biases are excluded from weight decay unless the optimizer is told
    /// otherwise.
    bool decays = true;
};

/// Named parameter collection with stable insertion order. Names are unique
/// and shapes are fixed once added.
class ParamSet {
public:
    std::size_t add(Param p) {
        if (index_.count(p.name)) {
            throw std::invalid_argument("ParamSet: duplicate parameter name '" + p.name + "'");
        }
        index_.emplace(p.name, items_.size());
        items_.push_back(std::move(p));
        return items_.size() - 1;
    }

    std::size_t size() const { return items_.size(); }
    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    Param& operator[](std::size_t i) { return items_[i]; }
    const Param& operator[](std::size_t i) const { return items_[i]; }

    Param& at(const std::string& name) { return items_[index_of(name)]; }
    const Param& at(const std::string& name) const { return items_[index_of(name)]; }

    std::size_t index_of(const std::string& name) const {
        const auto it = index_.find(name);
        if (it == index_.end()) {
            throw std::invalid_argument("ParamSet: unknown parameter '" + name + "'");
        }
        return it->second;
    }

    /// Overwrites values of every parameter that also exists in `other`;
    /// shapes must match. Used to seed a model from a pretrained checkpoint.
    void adopt_values(const ParamSet& other) {
        for (std::size_t i = 0; i < other.size(); ++i) {
            const Param& src = other[i];
            if (!contains(src.name)) continue;
            Param& dst = at(src.name);
            if (!dst.value.same_shape(src.value)) {
                throw std::invalid_argument("ParamSet: shape mismatch adopting '" + src.name + "'");
            }
            dst.value = src.value;
        }
    }

    auto begin() { return items_.begin(); }
    auto end() { return items_.end(); }
    auto begin() const { return items_.begin(); }
    auto end() const { return items_.end(); }

private:
    std::vector<Param> items_;
    std::unordered_map<std::string, std::size_t> index_;
};

using GradMap = std::unordered_map<std::string, Tensor>;

inline Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t({fan_in, fan_out});
    for (auto& v : t.values()) v = rng.uniform(-bound, bound);
    return t;
}

/// Adds a dense layer's weight and zero bias under `prefix`.W / `prefix`.b.
inline void add_linear(ParamSet& params, const std::string& prefix, std::size_t in_dim,
                       std::size_t out_dim, Rng& rng) {
    params.add({prefix + ".W", glorot_uniform(in_dim, out_dim, rng), true, true});
    params.add({prefix + ".b", Tensor({out_dim}), true, false});
}

// ---- checkpoint file -------------------------------------------------------
//
// Layout: 8-byte little-endian header length, JSON header, then the raw
// tensor payload as little-endian IEEE-754 doubles in header order.

namespace detail {

inline void write_u64_le(std::ostream& os, std::uint64_t v) {
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    os.write(buf, 8);
}

inline std::uint64_t read_u64_le(std::istream& is) {
    char buf[8];
    is.read(buf, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
    }
    return v;
}

inline void write_f64_le(std::ostream& os, double d) {
    write_u64_le(os, std::bit_cast<std::uint64_t>(d));
}

inline double read_f64_le(std::istream& is) { return std::bit_cast<double>(read_u64_le(is)); }

}  // namespace detail

struct Checkpoint {
    ParamSet params;
    std::uint64_t seed = 0;
    std::uint64_t step = 0;
};

inline void save_checkpoint(const std::string& path, const ParamSet& params, std::uint64_t seed,
                            std::uint64_t step) {
    nlohmann::json header;
    header["format"] = "gfcl-checkpoint-v1";
    header["seed"] = seed;
    header["step"] = step;
    header["params"] = nlohmann::json::array();
    for (const Param& p : params) {
        header["params"].push_back({{"name", p.name},
                                    {"shape", p.value.shape()},
                                    {"trainable", p.trainable},
                                    {"decays", p.decays}});
    }
    const std::string text = header.dump();

    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("save_checkpoint: cannot open " + tmp);
        detail::write_u64_le(os, text.size());
        os.write(text.data(), static_cast<std::streamsize>(text.size()));
        for (const Param& p : params) {
            for (const double v : p.value.values()) detail::write_f64_le(os, v);
        }
        if (!os) throw std::runtime_error("save_checkpoint: write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw std::runtime_error("save_checkpoint: rename to " + path + " failed");
    }
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path);
    const std::uint64_t header_len = detail::read_u64_le(is);
    std::string text(header_len, '\0');
    is.read(text.data(), static_cast<std::streamsize>(header_len));
    if (!is) throw std::runtime_error("load_checkpoint: truncated header in " + path);

    nlohmann::json header = nlohmann::json::parse(text);
    if (header.value("format", "") != "gfcl-checkpoint-v1") {
        throw std::runtime_error("load_checkpoint: unrecognized format in " + path);
    }
    Checkpoint ckpt;
    ckpt.seed = header.value("seed", 0ULL);
    ckpt.step = header.value("step", 0ULL);
    for (const auto& entry : header.at("params")) {
        Param p;
        p.name = entry.at("name").get<std::string>();
        const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
        p.trainable = entry.value("trainable", true);
        p.decays = entry.value("decays", true);
        p.value = Tensor(shape);
        for (auto& v : p.value.values()) v = detail::read_f64_le(is);
        ckpt.params.add(std::move(p));
    }
    if (!is) throw std::runtime_error("load_checkpoint: truncated payload in " + path);
    return ckpt;
}

}  // namespace gfcl
