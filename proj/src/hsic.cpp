#include "dsf/hsic.hpp"

#include <algorithm>
#include <cmath>

#include "dsf/errors.hpp"

namespace dsf {

namespace {

void require_samples(const Shape& shape, const char* op) {
    if (shape.size() != 2) {
        throw DimensionError(std::string(op) + ": expected [N x d] samples, got " +
                             shape_str(shape));
    }
    if (shape[0] < 2) {
        throw BatchTooSmallError(std::string(op) + ": need at least 2 samples, got " +
                                 std::to_string(shape[0]));
    }
}

Array centering_matrix(std::size_t n) {
    Array h(Shape{n, n}, -1.0 / static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) h.at(i, i) += 1.0;
    return h;
}

}  // namespace

double median_bandwidth(const Array& samples) {
    require_samples(samples.shape, "median_bandwidth");
    const std::size_t n = samples.shape[0], d = samples.shape[1];
    std::vector<double> dist;
    dist.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double diff = samples.data[i * d + k] - samples.data[j * d + k];
                s += diff * diff;
            }
            dist.push_back(std::sqrt(s));
        }
    }
    const std::size_t mid = dist.size() / 2;
    std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(mid), dist.end());
    double median = dist[mid];
    if (dist.size() % 2 == 0) {
        const double lower = *std::max_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(mid));
        median = 0.5 * (median + lower);
    }
    if (!(median > 0.0)) {
        throw DegenerateInputError("median_bandwidth: median pairwise distance is zero");
    }
    return median / std::sqrt(2.0);
}

double resolve_bandwidth(const KernelSpec& spec, const Array& samples) {
    if (spec.kind != KernelSpec::Kind::gaussian) return 0.0;
    if (spec.bandwidth) {
        if (!(*spec.bandwidth > 0.0)) {
            throw ConfigError("gaussian bandwidth must be positive, got " +
                              std::to_string(*spec.bandwidth));
        }
        return *spec.bandwidth;
    }
    return median_bandwidth(samples);
}

Tensor gram(const KernelSpec& spec, const Tensor& samples) {
    require_samples(samples.shape(), "gram");
    if (spec.kind == KernelSpec::Kind::linear) return matmul(samples, transpose(samples));
    const double sigma = resolve_bandwidth(spec, samples.value());
    return exp(scale(pairwise_sq_dist(samples), -1.0 / (2.0 * sigma * sigma)));
}

namespace detail {

Tensor hsic_statistic(const Tensor& u, const Tensor& v, const KernelSpec& k, const KernelSpec& h) {
    require_samples(u.shape(), "hsic");
    require_samples(v.shape(), "hsic");
    const std::size_t n = u.shape()[0];
    if (v.shape()[0] != n) {
        throw DimensionError("hsic: sample counts differ, " + shape_str(u.shape()) + " vs " +
                             shape_str(v.shape()));
    }
    Graph& g = u.graph();
    const Tensor center = g.constant(centering_matrix(n));
    const Tensor kc = matmul(matmul(center, gram(k, u)), center);
    const Tensor l = gram(h, v);
    return scale(sum(mul(kc, l)), 1.0 / static_cast<double>(n * n));
}

}  // namespace detail

Tensor hsic_penalty(const Tensor& u, const Tensor& v, const KernelSpec& k, const KernelSpec& h) {
    if (u.shape().size() == 2 && u.shape()[0] < 4) {
        throw BatchTooSmallError("hsic_penalty needs at least 4 samples, got " +
                                 std::to_string(u.shape()[0]));
    }
    return detail::hsic_statistic(u, v, k, h);
}

Array gram_matrix(const KernelSpec& spec, const Array& samples) {
    require_samples(samples.shape, "gram_matrix");
    const std::size_t n = samples.shape[0], d = samples.shape[1];
    Array out(Shape{n, n});
    const bool linear = spec.kind == KernelSpec::Kind::linear;
    const double sigma = linear ? 0.0 : resolve_bandwidth(spec, samples);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                const double a = samples.data[i * d + c], b = samples.data[j * d + c];
                acc += linear ? a * b : (a - b) * (a - b);
            }
            const double value = linear ? acc : std::exp(-acc / (2.0 * sigma * sigma));
            out.at(i, j) = value;
            out.at(j, i) = value;
        }
    }
    return out;
}

Array center_gram(const Array& k) {
    const std::size_t n = k.rows();
    std::vector<double> row_mean(n, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) row_mean[i] += k.at(i, j);
        total += row_mean[i];
        row_mean[i] /= static_cast<double>(n);
    }
    const double grand = total / static_cast<double>(n * n);
    Array out(k.shape);
    // K symmetric: column means equal row means.
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) out.at(i, j) = k.at(i, j) - row_mean[i] - row_mean[j] + grand;
    }
    return out;
}

double hsic_from_grams(const Array& centered_k, const Array& l, std::span<const std::size_t> perm) {
    const std::size_t n = centered_k.rows();
    if (l.shape != centered_k.shape) {
        throw DimensionError("hsic_from_grams: Gram shapes differ");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t pi = perm.empty() ? i : perm[i];
        for (std::size_t j = 0; j < n; ++j) {
            const std::size_t pj = perm.empty() ? j : perm[j];
            acc += centered_k.at(i, j) * l.at(pi, pj);
        }
    }
    return acc / static_cast<double>(n * n);
}

}  // namespace dsf
