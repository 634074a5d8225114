#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dsf/tensor.hpp"

namespace dsf {

enum class Activation { linear, relu, tanh, sigmoid };

Tensor activate(Activation act, const Tensor& x);

// Glorot-uniform for rank-2 shapes (bound sqrt(6 / (fan_in + fan_out))),
// zeros for anything else (biases).
Array init_params(const Shape& shape, std::uint64_t seed);

struct DenseLayer {
    Parameter weights;  // [in x out]
    Parameter bias;     // [out]
    Activation activation = Activation::linear;

    static DenseLayer make(const std::string& name, std::size_t in, std::size_t out,
                           Activation act, std::uint64_t seed);

    std::size_t in_dim() const { return weights.value.shape[0]; }
    std::size_t out_dim() const { return weights.value.shape[1]; }
    Tensor forward(Graph& g, const Tensor& x);
};

Tensor mlp_forward(Graph& g, std::span<DenseLayer> layers, const Tensor& x);

class Mlp {
public:
    Mlp() = default;
    // widths lists every layer's output size; hidden layers use hidden_act and
    // the last layer uses out_act.
    Mlp(const std::string& name, std::size_t in_dim, const std::vector<std::size_t>& widths,
        Activation hidden_act, Activation out_act, std::uint64_t seed);

    Tensor forward(Graph& g, const Tensor& x);
    std::vector<Parameter*> parameters();
    std::size_t in_dim() const { return layers_.empty() ? 0 : layers_.front().in_dim(); }
    std::size_t out_dim() const { return layers_.empty() ? 0 : layers_.back().out_dim(); }
    std::vector<DenseLayer>& layers() { return layers_; }
    const std::vector<DenseLayer>& layers() const { return layers_; }

private:
    std::vector<DenseLayer> layers_;
};

struct AdamConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 1e-4;
};

// Adam with L2 weight decay folded into the gradient (g += decay * w) before
// the moment updates. Moments are keyed by position in the parameter list, so
// every step must pass the same parameters in the same order.
class Adam {
public:
    explicit Adam(AdamConfig config = {}) : config_(config) {}

    void step(std::span<Parameter* const> params);
    std::uint64_t steps() const { return t_; }
    const AdamConfig& config() const { return config_; }

private:
    AdamConfig config_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    std::uint64_t t_ = 0;
};

void zero_grads(std::span<Parameter* const> params);

// ---- named tensor container ("DSF1") --------------------------------------
//
// Little-endian layout:
//   "DSF1" | u32 version (=1) | u32 tensor count
//   per tensor: u32 name length | UTF-8 name | u32 rank | rank x u64 dims |
//               numel x f64 values

struct NamedArray {
    std::string name;
    Array array;
};

constexpr std::uint32_t kContainerVersion = 1;

std::vector<std::uint8_t> encode_container(std::span<const NamedArray> tensors);
std::vector<NamedArray> decode_container(std::span<const std::uint8_t> bytes);

void save_container(const std::filesystem::path& path, std::span<const NamedArray> tensors);
std::vector<NamedArray> load_container(const std::filesystem::path& path);

std::vector<NamedArray> snapshot(std::span<Parameter* const> params);
// Copies values into matching parameters; names and shapes must agree exactly.
void restore(std::span<Parameter* const> params, std::span<const NamedArray> tensors);

}  // namespace dsf
