#include "dsf/echo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dsf/errors.hpp"
#include "dsf/rng.hpp"

namespace dsf {

std::vector<std::vector<std::size_t>> echo_sources(std::size_t batch, std::size_t depth,
                                                   std::uint64_t seed) {
    if (batch < 2) {
        throw BatchTooSmallError("echo noise needs at least 2 samples, got " +
                                 std::to_string(batch));
    }
    Rng rng(seed);
    std::vector<std::vector<std::size_t>> sources(depth, std::vector<std::size_t>(batch));
    std::vector<std::size_t> perm(batch);
    std::vector<std::size_t> pos(batch);
    for (std::size_t level = 0; level < depth; ++level) {
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        for (std::size_t i = batch - 1; i > 0; --i) {
            std::swap(perm[i], perm[uniform_index(rng, i + 1)]);
        }
        for (std::size_t j = 0; j < batch; ++j) pos[perm[j]] = j;
        // Stepping a nonzero offset around the shuffled cycle never lands on
        // the anchor itself.
        const std::size_t offset = 1 + uniform_index(rng, batch - 1);
        for (std::size_t i = 0; i < batch; ++i) {
            sources[level][i] = perm[(pos[i] + offset) % batch];
        }
    }
    return sources;
}

Array echo_noise(const Array& f, const Array& s, std::size_t depth, std::uint64_t seed) {
    if (f.shape.size() != 2 || f.shape != s.shape) {
        throw DimensionError("echo_noise: f " + shape_str(f.shape) + " and s " +
                             shape_str(s.shape) + " must be equal rank-2 shapes");
    }
    const std::size_t n = f.shape[0], d = f.shape[1];
    if (n < 2) {
        throw BatchTooSmallError("echo noise needs at least 2 samples, got " + std::to_string(n));
    }
    const std::size_t levels = std::min(depth, n - 1);
    const auto sources = echo_sources(n, levels, seed);
    Array eps(Shape{n, d});
    for (std::size_t i = 0; i < n; ++i) {
        double* out = eps.data.data() + i * d;
        for (std::size_t level = levels; level-- > 0;) {
            const std::size_t r = sources[level][i];
            const double* fr = f.data.data() + r * d;
            const double* sr = s.data.data() + r * d;
            for (std::size_t j = 0; j < d; ++j) out[j] = fr[j] + sr[j] * out[j];
        }
    }
    return eps;
}

Tensor echo_mi(const Tensor& s) {
    if (s.shape().size() != 2) {
        throw DimensionError("echo_mi: expected [N x d] scales, got " + shape_str(s.shape()));
    }
    for (double v : s.values()) {
        if (!(v > 0.0)) {
            throw DomainError("echo_mi: scale entry " + std::to_string(v) + " is not positive");
        }
    }
    const double n = static_cast<double>(s.shape()[0]);
    return scale(sum(log(s)), -1.0 / n);
}

EchoSample echo_sample(const EchoConfig& config, const Tensor& f, const Tensor& s,
                       std::uint64_t seed, const Array* frozen_epsilon) {
    if (f.shape().size() != 2 || f.shape() != s.shape()) {
        throw DimensionError("echo_sample: f " + shape_str(f.shape()) + " and s " +
                             shape_str(s.shape()) + " must be equal rank-2 shapes");
    }
    const std::size_t n = f.shape()[0];
    if (n < 2) {
        throw BatchTooSmallError("echo_sample needs at least 2 samples, got " + std::to_string(n));
    }
    for (double v : s.values()) {
        if (!(v > 0.0 && v < 1.0)) {
            throw ContractError("echo_sample: scale entry " + std::to_string(v) +
                                " outside (0, 1); the noise recursion would not converge");
        }
    }
    EchoSample out;
    if (frozen_epsilon != nullptr) {
        if (frozen_epsilon->shape != f.shape()) {
            throw DimensionError("echo_sample: frozen noise " + shape_str(frozen_epsilon->shape) +
                                 " does not match " + shape_str(f.shape()));
        }
        out.epsilon = *frozen_epsilon;
    } else {
        out.epsilon = echo_noise(f.value(), s.value(), config.depth, seed);
    }
    Graph& g = f.graph();
    out.z = add(f, mul(s, g.constant(out.epsilon)));
    out.mi_nats = echo_mi(s);
    return out;
}

EchoChannel::EchoChannel(const std::string& name, std::size_t in_dim, EchoConfig config,
                         std::uint64_t seed)
    : config_(config),
      f_head_(name + ".f", in_dim, {config.dim}, Activation::linear, Activation::tanh,
              derive_seed(seed, {0})),
      s_head_(name + ".s", in_dim, {config.dim}, Activation::linear, Activation::sigmoid,
              derive_seed(seed, {1})) {
    if (!(config.s_max > 0.0 && config.s_max < 1.0)) {
        throw ConfigError("echo s_max must lie in (0, 1), got " + std::to_string(config.s_max));
    }
    if (!(config.s_floor > 0.0 && config.s_floor < config.s_max)) {
        throw ConfigError("echo s_floor must lie in (0, s_max)");
    }
}

Tensor EchoChannel::mean(Graph& g, const Tensor& h) { return f_head_.forward(g, h); }

Tensor EchoChannel::scale(Graph& g, const Tensor& h) {
    return clamp(dsf::scale(s_head_.forward(g, h), config_.s_max), config_.s_floor,
                 config_.s_max);
}

EchoSample EchoChannel::encode(Graph& g, const Tensor& h, std::uint64_t seed,
                               const Array* frozen_epsilon) {
    return echo_sample(config_, mean(g, h), scale(g, h), seed, frozen_epsilon);
}

std::vector<Parameter*> EchoChannel::parameters() {
    auto out = f_head_.parameters();
    auto s = s_head_.parameters();
    out.insert(out.end(), s.begin(), s.end());
    return out;
}

}  // namespace dsf
