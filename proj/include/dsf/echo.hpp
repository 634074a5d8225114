#pragma once

// Echo noise channel.
//
// The code is z = f(x) + s(x) ⊙ ε where the noise ε is built from the encoder
// itself applied to other samples of the batch:
//
//   ε_i = f(x⁽⁰⁾) + s(x⁽⁰⁾) ⊙ (f(x⁽¹⁾) + s(x⁽¹⁾) ⊙ (f(x⁽²⁾) + ...))
//
// Because z and ε then share a marginal, the channel's mutual information is
// exactly I(z : x) = -E_x log|det S(x)|, which for a diagonal S is
// -E_x Σ_j log s_j(x).

#include <cstdint>
#include <optional>

#include "dsf/nn.hpp"
#include "dsf/tensor.hpp"

namespace dsf {

struct EchoConfig {
    std::size_t dim = 32;
    double s_max = 0.9;
    double s_floor = 1e-6;
    std::size_t depth = 64;  // recursion terms; further capped at batch size - 1
};

struct EchoSample {
    Tensor z;       // [N x d]
    Array epsilon;  // [N x d], detached
    Tensor mi_nats; // scalar, -(1/N) Σ_i Σ_j log s_ij
};

// Per-level batch-mate indices: level l, anchor i draws from row
// sources[l][i], never i itself. Each level is a fresh bijection.
std::vector<std::vector<std::size_t>> echo_sources(std::size_t batch, std::size_t depth,
                                                   std::uint64_t seed);

// Builds the noise for every anchor from plain f and s arrays.
Array echo_noise(const Array& f, const Array& s, std::size_t depth, std::uint64_t seed);

// Exact compression rate in nats; differentiable w.r.t. s. Entries must be
// positive (s = 1 is accepted and contributes 0).
Tensor echo_mi(const Tensor& s);

// z = f + s ⊙ ε with ε from echo_noise (or the supplied frozen noise).
// Requires N >= 2 and every s entry strictly inside (0, 1).
EchoSample echo_sample(const EchoConfig& config, const Tensor& f, const Tensor& s,
                       std::uint64_t seed, const Array* frozen_epsilon = nullptr);

// Bounded mean head (tanh) and scale head (s_max · sigmoid, floored) on top of
// an encoder representation.
class EchoChannel {
public:
    EchoChannel() = default;
    EchoChannel(const std::string& name, std::size_t in_dim, EchoConfig config,
                std::uint64_t seed);

    const EchoConfig& config() const { return config_; }
    Tensor mean(Graph& g, const Tensor& h);
    Tensor scale(Graph& g, const Tensor& h);
    EchoSample encode(Graph& g, const Tensor& h, std::uint64_t seed,
                      const Array* frozen_epsilon = nullptr);
    std::vector<Parameter*> parameters();

private:
    EchoConfig config_;
    Mlp f_head_;
    Mlp s_head_;
};

}  // namespace dsf
