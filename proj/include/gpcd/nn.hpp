#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "gpcd/errors.hpp"
#include "gpcd/rng.hpp"
#include "gpcd/tensor.hpp"

namespace gpcd {

// Named parameter tensors plus Adam state. std::map keeps iteration order
// (and therefore update order) independent of insertion history.
template <typename T>
class ParamStoreT {
public:
    TensorT<T> create(const std::string& name, std::vector<int> shape,
                      std::vector<T> values) {
        if (params_.count(name)) throw invalid_state("parameter already exists: " + name);
        auto t = TensorT<T>::leaf(std::move(shape), std::move(values), /*requires_grad=*/true);
        params_.emplace(name, t);
        return t;
    }

    // Uniform(-limit, limit) with limit = sqrt(1 / fan_in).
    TensorT<T> create_uniform(const std::string& name, std::vector<int> shape, int fan_in,
                              Rng& rng) {
        if (fan_in < 1) throw std::invalid_argument("init: fan_in must be positive");
        const double limit = std::sqrt(1.0 / fan_in);
        std::vector<T> values(static_cast<size_t>(TensorT<T>::numel(shape)));
        for (T& v : values) v = static_cast<T>(rng.uniform(-limit, limit));
        return create(name, std::move(shape), std::move(values));
    }

    TensorT<T>& at(const std::string& name) {
        auto it = params_.find(name);
        if (it == params_.end()) throw invalid_state("unknown parameter: " + name);
        return it->second;
    }
    const TensorT<T>& at(const std::string& name) const {
        auto it = params_.find(name);
        if (it == params_.end()) throw invalid_state("unknown parameter: " + name);
        return it->second;
    }
    bool contains(const std::string& name) const { return params_.count(name) != 0; }

    const std::map<std::string, TensorT<T>>& params() const { return params_; }

    int64_t param_count() const {
        int64_t n = 0;
        for (const auto& [name, t] : params_) n += t.size();
        return n;
    }

    void zero_grad() {
        for (auto& [name, t] : params_) t.zero_grad();
    }

    void fill_values(T value) {
        for (auto& [name, t] : params_) t.values().assign(t.values().size(), value);
    }

    int64_t step_count() const { return step_; }

    // One Adam update over every parameter; a parameter with no populated
    // gradient means the caller forgot a backward pass.
    void adam_step(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
        for (auto& [name, t] : params_)
            if (t.grad().size() != t.values().size())
                throw invalid_state("adam: gradient missing for parameter " + name);
        ++step_;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
        for (auto& [name, t] : params_) {
            auto& m = moment1_[name];
            auto& v = moment2_[name];
            if (m.size() != t.values().size()) m.assign(t.values().size(), T(0));
            if (v.size() != t.values().size()) v.assign(t.values().size(), T(0));
            for (size_t i = 0; i < t.values().size(); ++i) {
                const double g = static_cast<double>(t.grad()[i]);
                const double mi = beta1 * static_cast<double>(m[i]) + (1.0 - beta1) * g;
                const double vi = beta2 * static_cast<double>(v[i]) + (1.0 - beta2) * g * g;
                m[i] = static_cast<T>(mi);
                v[i] = static_cast<T>(vi);
                const double mhat = mi / bc1;
                const double vhat = vi / bc2;
                t.values()[i] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + eps));
            }
        }
    }

    void reset_optimizer() {
        moment1_.clear();
        moment2_.clear();
        step_ = 0;
    }

    const std::map<std::string, std::vector<T>>& moment1() const { return moment1_; }
    const std::map<std::string, std::vector<T>>& moment2() const { return moment2_; }

    void set_optimizer_state(int64_t step, std::map<std::string, std::vector<T>> m1,
                             std::map<std::string, std::vector<T>> m2) {
        if (step < 0) throw std::invalid_argument("optimizer state: negative step count");
        for (const auto* moments : {&m1, &m2})
            for (const auto& [name, m] : *moments) {
                auto it = params_.find(name);
                if (it == params_.end() || m.size() != it->second.values().size())
                    throw invalid_state("optimizer state does not match parameter: " + name);
            }
        step_ = step;
        moment1_ = std::move(m1);
        moment2_ = std::move(m2);
    }

private:
    std::map<std::string, TensorT<T>> params_;
    std::map<std::string, std::vector<T>> moment1_, moment2_;
    int64_t step_ = 0;
};

using ParamStore = ParamStoreT<float>;

// y = x W + b with W [in x out], b [out].
template <typename T>
struct LinearT {
    TensorT<T> w, b;

    static LinearT create(ParamStoreT<T>& store, const std::string& name, int in, int out,
                          Rng& rng) {
        LinearT layer;
        layer.w = store.create_uniform(name + ".w", {in, out}, in, rng);
        layer.b = store.create_uniform(name + ".b", {out}, in, rng);
        return layer;
    }

    static LinearT from_store(ParamStoreT<T>& store, const std::string& name) {
        return LinearT{store.at(name + ".w"), store.at(name + ".b")};
    }

    TensorT<T> operator()(const TensorT<T>& x) const { return add_bias(matmul(x, w), b); }
};

using Linear = LinearT<float>;

// Densely connected edge-convolution block stack. For each directed edge
// (i -> j-th neighbor of i) the edge feature is concat(f_i, f_j - f_i);
// block b sees the concat of the edge feature and all previous block
// outputs; the per-point output is the max over the point's k edges of the
// last block.
template <typename T>
struct DenseEdgeConvT {
    std::vector<LinearT<T>> blocks;

    static DenseEdgeConvT create(ParamStoreT<T>& store, const std::string& name, int in_c,
                                 const std::vector<int>& widths, Rng& rng) {
        if (widths.empty()) throw std::invalid_argument("edge conv: no block widths");
        DenseEdgeConvT conv;
        int carried = 2 * in_c;
        for (size_t b = 0; b < widths.size(); ++b) {
            conv.blocks.push_back(LinearT<T>::create(
                store, name + ".block" + std::to_string(b), carried, widths[b], rng));
            carried += widths[b];
        }
        return conv;
    }

    static DenseEdgeConvT from_store(ParamStoreT<T>& store, const std::string& name,
                                     size_t block_count) {
        DenseEdgeConvT conv;
        for (size_t b = 0; b < block_count; ++b)
            conv.blocks.push_back(
                LinearT<T>::from_store(store, name + ".block" + std::to_string(b)));
        return conv;
    }

    // features: [n x c]; neighbors: row-major [n x k] indices into features.
    TensorT<T> operator()(const TensorT<T>& features, const std::vector<int>& neighbors,
                          int k) const {
        const int n = features.rows();
        if (k < 1 || neighbors.size() != static_cast<size_t>(n) * k)
            throw std::invalid_argument("edge conv: neighbor table must be n*k");
        std::vector<int> self(static_cast<size_t>(n) * k);
        for (int i = 0; i < n; ++i)
            std::fill(self.begin() + static_cast<size_t>(i) * k,
                      self.begin() + static_cast<size_t>(i + 1) * k, i);
        auto fi = gather_rows(features, std::move(self));
        auto fj = gather_rows(features, neighbors);
        auto edge = concat_cols(fi, sub(fj, fi));

        std::vector<TensorT<T>> carried{edge};
        TensorT<T> out;
        for (const auto& block : blocks) {
            auto input = carried.size() == 1 ? carried[0] : concat_cols(carried);
            out = relu(block(input));
            carried.push_back(out);
        }
        return group_max(out, n);
    }
};

using DenseEdgeConv = DenseEdgeConvT<float>;

// Checkpoint container: named float tensors, written little-endian.
struct CheckpointTensor {
    std::vector<int> shape;
    std::vector<float> values;
};
using Checkpoint = std::map<std::string, CheckpointTensor>;

namespace checkpoint_detail {

constexpr char kMagic[8] = {'G', 'P', 'C', 'D', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

inline void write_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t read_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw io_error("checkpoint truncated: " + path);
    return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
           static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

}  // namespace checkpoint_detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    using namespace checkpoint_detail;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open checkpoint for writing: " + path);
    out.write(kMagic, sizeof(kMagic));
    write_u32(out, kVersion);
    write_u32(out, static_cast<uint32_t>(ckpt.size()));
    for (const auto& [name, tensor] : ckpt) {
        write_u32(out, static_cast<uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u32(out, static_cast<uint32_t>(tensor.shape.size()));
        int64_t numel = 1;
        for (int d : tensor.shape) {
            write_u32(out, static_cast<uint32_t>(d));
            numel *= d;
        }
        if (numel != static_cast<int64_t>(tensor.values.size()))
            throw invalid_state("checkpoint tensor shape does not match data: " + name);
        static_assert(sizeof(float) == 4);
        for (float v : tensor.values) {
            uint32_t bits;
            std::memcpy(&bits, &v, 4);
            write_u32(out, bits);
        }
    }
    if (!out) throw io_error("checkpoint write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    using namespace checkpoint_detail;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open checkpoint: " + path);
    char magic[sizeof(kMagic)];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw io_error("not a checkpoint file: " + path);
    const uint32_t version = read_u32(in, path);
    if (version != kVersion)
        throw io_error("unsupported checkpoint version " + std::to_string(version) + ": " +
                       path);
    const uint32_t count = read_u32(in, path);
    Checkpoint ckpt;
    for (uint32_t t = 0; t < count; ++t) {
        const uint32_t name_len = read_u32(in, path);
        std::string name(name_len, '\0');
        if (!in.read(name.data(), name_len)) throw io_error("checkpoint truncated: " + path);
        const uint32_t rank = read_u32(in, path);
        CheckpointTensor tensor;
        int64_t numel = 1;
        for (uint32_t d = 0; d < rank; ++d) {
            tensor.shape.push_back(static_cast<int>(read_u32(in, path)));
            numel *= tensor.shape.back();
        }
        tensor.values.resize(static_cast<size_t>(numel));
        for (float& v : tensor.values) {
            const uint32_t bits = read_u32(in, path);
            std::memcpy(&v, &bits, 4);
        }
        ckpt.emplace(std::move(name), std::move(tensor));
    }
    return ckpt;
}

// Store <-> checkpoint bridging for the production float instantiation.
inline Checkpoint snapshot_params(const ParamStore& store, const std::string& prefix = "") {
    Checkpoint ckpt;
    for (const auto& [name, t] : store.params())
        ckpt.emplace(prefix + name, CheckpointTensor{t.shape(), t.values()});
    return ckpt;
}

inline void restore_params(ParamStore& store, const Checkpoint& ckpt,
                           const std::string& prefix = "") {
    for (const auto& [name, t] : store.params()) {
        auto it = ckpt.find(prefix + name);
        if (it == ckpt.end()) throw io_error("checkpoint missing parameter: " + prefix + name);
        if (it->second.shape != t.shape())
            throw io_error("checkpoint shape mismatch for parameter: " + prefix + name);
        Tensor handle = t;  // shares the underlying node
        handle.values() = it->second.values;
    }
}

// Adam state as checkpoint records: a step scalar plus m./v. moment vectors
// per parameter, so a restarted run continues the step counter.
inline void append_optimizer_state(Checkpoint& ckpt, const ParamStore& store,
                                   const std::string& prefix) {
    ckpt.emplace(prefix + "step",
                 CheckpointTensor{{1}, {static_cast<float>(store.step_count())}});
    for (const auto& [name, m] : store.moment1())
        ckpt.emplace(prefix + "m." + name,
                     CheckpointTensor{{static_cast<int>(m.size())}, m});
    for (const auto& [name, v] : store.moment2())
        ckpt.emplace(prefix + "v." + name,
                     CheckpointTensor{{static_cast<int>(v.size())}, v});
}

// Returns false when the checkpoint carries no state under this prefix.
inline bool restore_optimizer_state(ParamStore& store, const Checkpoint& ckpt,
                                    const std::string& prefix) {
    auto step_it = ckpt.find(prefix + "step");
    if (step_it == ckpt.end()) return false;
    if (step_it->second.values.size() != 1)
        throw io_error("optimizer step record malformed: " + prefix + "step");
    std::map<std::string, std::vector<float>> m1, m2;
    for (const auto& [name, t] : store.params()) {
        auto m = ckpt.find(prefix + "m." + name);
        auto v = ckpt.find(prefix + "v." + name);
        if (m != ckpt.end()) m1.emplace(name, m->second.values);
        if (v != ckpt.end()) m2.emplace(name, v->second.values);
    }
    store.set_optimizer_state(static_cast<int64_t>(step_it->second.values[0]),
                              std::move(m1), std::move(m2));
    return true;
}

}  // namespace gpcd
