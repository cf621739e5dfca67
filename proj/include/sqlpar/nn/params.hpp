#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <memory>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sqlpar/nn/tensor.hpp"

namespace sqlpar::nn {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
};

/// Owns every trainable tensor. Addresses are stable for the lifetime of the store.
class ParameterStore {
public:
    ParameterStore() = default;
    ParameterStore(const ParameterStore&) = delete;
    ParameterStore& operator=(const ParameterStore&) = delete;
    ParameterStore(ParameterStore&&) = default;
    ParameterStore& operator=(ParameterStore&&) = default;

    Parameter& add(const std::string& name, std::size_t rows, std::size_t cols) {
        if (index_.count(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
        auto p = std::make_unique<Parameter>();
        p->name = name;
        p->value = Tensor(rows, cols);
        p->grad = Tensor(rows, cols);
        index_[name] = params_.size();
        params_.push_back(std::move(p));
        return *params_.back();
    }

    Parameter& get(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::out_of_range("no parameter '" + name + "'");
        return *params_[it->second];
    }
    const Parameter& get(const std::string& name) const { return const_cast<ParameterStore*>(this)->get(name); }
    bool contains(const std::string& name) const { return index_.count(name) > 0; }

    std::size_t size() const { return params_.size(); }
    Parameter& operator[](std::size_t i) { return *params_[i]; }
    const Parameter& operator[](std::size_t i) const { return *params_[i]; }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p->value.size();
        return n;
    }

    /// Uniform in [-scale, scale], drawn in registration order from one seeded engine.
    void init_uniform(std::uint64_t seed, double scale = 0.1) {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> dist(-scale, scale);
        for (auto& p : params_)
            for (double& v : p->value.data) v = dist(rng);
    }

    void zero_grad() {
        for (auto& p : params_) p->grad.zero();
    }

    double grad_norm() const {
        double s = 0;
        for (const auto& p : params_)
            for (double g : p->grad.data) s += g * g;
        return std::sqrt(s);
    }

    /// Rescales all gradients so the global L2 norm is at most max_norm. Returns the norm before clipping.
    double clip_grad_norm(double max_norm) {
        const double n = grad_norm();
        if (n > max_norm && n > 0) {
            const double k = max_norm / n;
            for (auto& p : params_)
                for (double& g : p->grad.data) g *= k;
        }
        return n;
    }

    void copy_values_from(const ParameterStore& o) {
        if (o.size() != size()) throw std::invalid_argument("parameter stores differ in size");
        for (std::size_t i = 0; i < size(); ++i) {
            if (!params_[i]->value.same_shape(o[i].value) || params_[i]->name != o[i].name)
                throw std::invalid_argument("parameter stores differ at '" + params_[i]->name + "'");
            params_[i]->value = o[i].value;
        }
    }

private:
    std::vector<std::unique_ptr<Parameter>> params_;
    std::map<std::string, std::size_t> index_;
};

// ---- checkpoint ---------------------------------------------------------
//
// "SQLPCKPT" u32 version, u32 meta count, (str key, str value)*, u32 record count,
// then per record: str name, u64 rows, u64 cols, rows*cols f64. All little-endian.

inline constexpr char kCheckpointMagic[8] = {'S', 'Q', 'L', 'P', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <class U>
void put_le(std::ostream& os, U v) {
    char buf[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(buf, sizeof(U));
}

template <class U>
U get_le(std::istream& is) {
    unsigned char buf[sizeof(U)];
    if (!is.read(reinterpret_cast<char*>(buf), sizeof(U))) throw CheckpointError("truncated checkpoint");
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
    return v;
}

inline void put_str(std::ostream& os, const std::string& s) {
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_str(std::istream& is) {
    auto n = get_le<std::uint32_t>(is);
    if (n > (1u << 24)) throw CheckpointError("corrupt checkpoint string length");
    std::string s(n, '\0');
    if (n && !is.read(s.data(), n)) throw CheckpointError("truncated checkpoint");
    return s;
}

}  // namespace detail

using CheckpointMeta = std::map<std::string, std::string>;

inline void save_checkpoint(std::ostream& os, const ParameterStore& ps, const CheckpointMeta& meta) {
    os.write(kCheckpointMagic, 8);
    detail::put_le<std::uint32_t>(os, kCheckpointVersion);
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(meta.size()));
    for (const auto& [k, v] : meta) {
        detail::put_str(os, k);
        detail::put_str(os, v);
    }
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(ps.size()));
    for (std::size_t i = 0; i < ps.size(); ++i) {
        const auto& p = ps[i];
        detail::put_str(os, p.name);
        detail::put_le<std::uint64_t>(os, p.value.rows);
        detail::put_le<std::uint64_t>(os, p.value.cols);
        for (double v : p.value.data) detail::put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
    }
}

/// Loads values into an already-shaped store. Names, order and shapes must match.
/// Returns the stored metadata so the caller can check the dims and grammar fingerprint.
inline CheckpointMeta load_checkpoint(std::istream& is, ParameterStore& ps) {
    char magic[8];
    if (!is.read(magic, 8) || !std::equal(magic, magic + 8, kCheckpointMagic))
        throw CheckpointError("not a checkpoint (bad magic)");
    auto version = detail::get_le<std::uint32_t>(is);
    if (version != kCheckpointVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    CheckpointMeta meta;
    auto nmeta = detail::get_le<std::uint32_t>(is);
    for (std::uint32_t i = 0; i < nmeta; ++i) {
        auto k = detail::get_str(is);
        meta[k] = detail::get_str(is);
    }
    auto count = detail::get_le<std::uint32_t>(is);
    if (count != ps.size())
        throw CheckpointError("checkpoint has " + std::to_string(count) + " tensors, model expects " +
                              std::to_string(ps.size()));
    for (std::uint32_t i = 0; i < count; ++i) {
        auto name = detail::get_str(is);
        auto& p = ps[i];
        if (name != p.name) throw CheckpointError("checkpoint tensor '" + name + "' where '" + p.name + "' expected");
        auto r = detail::get_le<std::uint64_t>(is);
        auto c = detail::get_le<std::uint64_t>(is);
        if (r != p.value.rows || c != p.value.cols)
            throw CheckpointError("shape mismatch for '" + name + "': checkpoint [" + std::to_string(r) + "x" +
                                  std::to_string(c) + "], model " + shape_str(p.value));
        for (double& v : p.value.data) v = std::bit_cast<double>(detail::get_le<std::uint64_t>(is));
    }
    return meta;
}

inline void save_checkpoint_file(const std::string& path, const ParameterStore& ps, const CheckpointMeta& meta) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw CheckpointError("cannot write " + path);
    save_checkpoint(os, ps, meta);
    if (!os) throw CheckpointError("write failed for " + path);
}

inline CheckpointMeta load_checkpoint_file(const std::string& path, ParameterStore& ps) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("cannot open checkpoint " + path);
    return load_checkpoint(is, ps);
}

inline CheckpointMeta read_checkpoint_meta(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("cannot open checkpoint " + path);
    char magic[8];
    if (!is.read(magic, 8) || !std::equal(magic, magic + 8, kCheckpointMagic))
        throw CheckpointError("not a checkpoint (bad magic)");
    if (detail::get_le<std::uint32_t>(is) != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version");
    CheckpointMeta meta;
    auto nmeta = detail::get_le<std::uint32_t>(is);
    for (std::uint32_t i = 0; i < nmeta; ++i) {
        auto k = detail::get_str(is);
        meta[k] = detail::get_str(is);
    }
    return meta;
}

}  // namespace sqlpar::nn
