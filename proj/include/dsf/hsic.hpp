#pragma once

#include <optional>

#include "dsf/tensor.hpp"

namespace dsf {

struct KernelSpec {
    enum class Kind { gaussian, linear };

    Kind kind = Kind::gaussian;
    // Gaussian bandwidth σ; nullopt selects the median heuristic per call.
    std::optional<double> bandwidth;

    static KernelSpec gaussian(std::optional<double> sigma = std::nullopt) {
        return {Kind::gaussian, sigma};
    }
    static KernelSpec linear() { return {Kind::linear, std::nullopt}; }
};

// σ = median pairwise Euclidean distance / √2, so exp(-d²/(2σ²)) = exp(-d²/m²).
// Plain numbers: never part of a gradient graph.
double median_bandwidth(const Array& samples);

// The bandwidth a spec resolves to on these samples (median heuristic when unset).
double resolve_bandwidth(const KernelSpec& spec, const Array& samples);

// N x N Gram matrix, differentiable w.r.t. the samples. Requires N >= 2.
Tensor gram(const KernelSpec& spec, const Tensor& samples);

// Biased (V-statistic) HSIC, trace(K H L H) / N² with H = I - 11ᵀ/N.
// Requires N >= 4.
Tensor hsic_penalty(const Tensor& u, const Tensor& v, const KernelSpec& k, const KernelSpec& h);

// Gram matrix and V-statistic on plain arrays, for permutation tests.
Array gram_matrix(const KernelSpec& spec, const Array& samples);
Array center_gram(const Array& gram);
// Σ_ij Kc_ij · L_perm(i)perm(j) / N²  where Kc is a centered Gram matrix.
double hsic_from_grams(const Array& centered_k, const Array& l,
                       std::span<const std::size_t> perm = {});

namespace detail {
// Same statistic as hsic_penalty without the N >= 4 precondition.
Tensor hsic_statistic(const Tensor& u, const Tensor& v, const KernelSpec& k, const KernelSpec& h);
}  // namespace detail

}  // namespace dsf
