#pragma once

// Independent reference computations shared by the unit and acceptance tests.

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <vector>

#include "dsf/echo.hpp"
#include "dsf/hsic.hpp"
#include "support.hpp"

namespace dsf::test {

// Plug-in mutual information (nats) of a 2-d histogram with equal-width bins
// spanning each sample's range.
inline double binned_mi(const std::vector<double>& a, const std::vector<double>& b, std::size_t bins) {
    auto bin_of = [bins](const std::vector<double>& v) {
        const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
        const double width = (*hi - *lo) / static_cast<double>(bins);
        std::vector<std::size_t> out(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) {
            const auto k = static_cast<std::size_t>((v[i] - *lo) / width);
            out[i] = std::min(k, bins - 1);
        }
        return out;
    };
    const auto ba = bin_of(a), bb = bin_of(b);
    std::vector<double> joint(bins * bins, 0.0), pa(bins, 0.0), pb(bins, 0.0);
    const double w = 1.0 / static_cast<double>(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        joint[ba[i] * bins + bb[i]] += w;
        pa[ba[i]] += w;
        pb[bb[i]] += w;
    }
    double mi = 0.0;
    for (std::size_t i = 0; i < bins; ++i) {
        for (std::size_t j = 0; j < bins; ++j) {
            const double p = joint[i * bins + j];
            if (p > 0.0) mi += p * std::log(p / (pa[i] * pb[j]));
        }
    }
    return mi;
}

// 1-d echo channel with f(x) = 0.9·tanh(x), x ~ U(-2, 2) and a constant scale;
// returns (x, z) pairs gathered batch by batch.
struct ChannelDraws {
    std::vector<double> x, z;
};

inline ChannelDraws constant_scale_channel(double s, std::size_t samples, std::size_t batch,
                                           std::uint64_t seed) {
    ChannelDraws out;
    Rng rng(seed);
    for (std::size_t b = 0; out.x.size() < samples; ++b) {
        Array xs({batch, 1}), f({batch, 1}), sc({batch, 1}, s);
        for (std::size_t i = 0; i < batch; ++i) {
            xs.data[i] = -2.0 + 4.0 * uniform01(rng);
            f.data[i] = 0.9 * std::tanh(xs.data[i]);
        }
        const Array eps = echo_noise(f, sc, 64, derive_seed(seed, {b}));
        for (std::size_t i = 0; i < batch && out.x.size() < samples; ++i) {
            out.x.push_back(xs.data[i]);
            out.z.push_back(f.data[i] + s * eps.data[i]);
        }
    }
    return out;
}

struct MomentComparison {
    double mean_eps = 0, mean_z = 0, mean_se = 0;
    double sq_eps = 0, sq_z = 0, sq_se = 0;
    double mean_gap_in_se() const { return std::abs(mean_eps - mean_z) / mean_se; }
    double sq_gap_in_se() const { return std::abs(sq_eps - sq_z) / sq_se; }
};

// Draws ε and z from a heteroscedastic echo channel, f(x) = 0.8·tanh(x + 0.3),
// s(x) = 0.2 + 0.7·sigmoid(2x), x ~ N(0, 1); compares first and second moments.
inline MomentComparison echo_marginal_moments(std::size_t samples, std::size_t batch,
                                              std::size_t depth, std::uint64_t seed) {
    std::vector<double> eps_all, z_all;
    Rng rng(seed);
    for (std::size_t b = 0; z_all.size() < samples; ++b) {
        Array f({batch, 1}), s({batch, 1});
        for (std::size_t i = 0; i < batch; ++i) {
            const double x = normal(rng);
            f.data[i] = 0.8 * std::tanh(x + 0.3);
            s.data[i] = 0.2 + 0.7 / (1.0 + std::exp(-2.0 * x));
        }
        const Array eps = echo_noise(f, s, depth, derive_seed(seed, {b}));
        for (std::size_t i = 0; i < batch && z_all.size() < samples; ++i) {
            eps_all.push_back(eps.data[i]);
            z_all.push_back(f.data[i] + s.data[i] * eps.data[i]);
        }
    }
    auto stats = [](const std::vector<double>& v) {
        const double n = static_cast<double>(v.size());
        double m = 0, m2 = 0;
        for (double e : v) { m += e; m2 += e * e; }
        m /= n;
        m2 /= n;
        double var = 0, var_sq = 0;
        for (double e : v) {
            var += (e - m) * (e - m);
            var_sq += (e * e - m2) * (e * e - m2);
        }
        return std::array<double, 4>{m, m2, var / (n - 1), var_sq / (n - 1)};
    };
    const auto se = stats(eps_all), sz = stats(z_all);
    const double n = static_cast<double>(samples);
    MomentComparison c;
    c.mean_eps = se[0];
    c.mean_z = sz[0];
    c.mean_se = std::sqrt((se[2] + sz[2]) / n);
    c.sq_eps = se[1];
    c.sq_z = sz[1];
    c.sq_se = std::sqrt((se[3] + sz[3]) / n);
    return c;
}

// One permutation test: is HSIC(u, v) above the 95th percentile of the
// statistic under `perms` random row shuffles of v?
inline bool hsic_exceeds_null(const Array& u, const Array& v, std::size_t perms, Rng& rng) {
    const std::size_t n = u.shape[0];
    const Array kc = center_gram(gram_matrix(KernelSpec::gaussian(), u));
    const Array l = gram_matrix(KernelSpec::gaussian(), v);
    const double observed = hsic_from_grams(kc, l);
    std::vector<double> null(perms);
    std::vector<std::size_t> perm(n);
    for (auto& value : null) {
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[uniform_index(rng, i + 1)]);
        value = hsic_from_grams(kc, l, perm);
    }
    std::sort(null.begin(), null.end());
    const double q95 = null[static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(perms))) - 1];
    return observed > q95;
}

// Plain-loop reference for the biased HSIC V-statistic: the three-term form
// with the standard minus sign on the cross term.
inline double hsic_three_term(const Array& k, const Array& l) {
    const std::size_t n = k.shape[0];
    double t1 = 0, ksum = 0, lsum = 0, t3 = 0;
    std::vector<double> krow(n, 0.0), lrow(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            t1 += k.at(i, j) * l.at(i, j);
            ksum += k.at(i, j);
            lsum += l.at(i, j);
            krow[i] += k.at(i, j);
            lrow[i] += l.at(i, j);
        }
    }
    for (std::size_t i = 0; i < n; ++i) t3 += krow[i] * lrow[i];
    const double nn = static_cast<double>(n);
    return t1 / (nn * nn) + ksum * lsum / (nn * nn * nn * nn) - 2.0 * t3 / (nn * nn * nn);
}

}  // namespace dsf::test
