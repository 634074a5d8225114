#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dsf/data.hpp"
#include "dsf/nn.hpp"
#include "dsf/objectives.hpp"
#include "dsf/rng.hpp"

namespace dsf {

// ---- accuracy and relative improvement ------------------------------------

double accuracy(std::span<const int> predictions, std::span<const int> labels);

// Relative reduction in error rate from old to new. Without a chance level the
// error is 1 - acc (target accuracy); with one it is max(acc - chance, 0)
// (nuisance leakage).
double relative_improvement(double new_acc, double old_acc,
                            std::optional<double> chance = std::nullopt);

// ---- encoding a dataset ---------------------------------------------------

struct Embeddings {
    Array zp;  // [N x zp_dim]
    Array zn;  // [N x zn_dim], empty for DSF-E
    std::vector<int> predictions;
};

// Runs the encoder over images [N x D] in chunks of batch_size (a trailing
// chunk smaller than 2 joins its predecessor); chunk k draws its echo noise
// from derive_seed(seed, {k}).
Embeddings embed(DsfModel& model, const Array& images, std::size_t batch_size, std::uint64_t seed);

// ---- post-hoc probes ------------------------------------------------------

struct ProbeConfig {
    std::size_t hidden = 64;
    std::size_t epochs = 50;
    double learning_rate = 1e-3;
    std::size_t batch_size = 64;
    double holdout = 0.2;
};

struct ProbeResult {
    Mlp model;
    std::size_t classes = 0;
    std::size_t train_count = 0;
    std::size_t test_count = 0;
    std::vector<std::size_t> test_indices;  // rows held out from probe training
    double heldout_accuracy = 0.0;
};

// Two-layer relu/softmax classifier trained on frozen embeddings with a seeded
// 80/20 split; reports accuracy on the held-out part.
ProbeResult train_probe(const Array& embeddings, std::span<const int> labels, std::uint64_t seed,
                        const ProbeConfig& config = {});
std::vector<int> probe_predict(Mlp& probe, const Array& embeddings);

// ---- discrete mutual-information identities -------------------------------

// Joint table p(x, zp, zn) over alphabets of at most 8 states each.
class DiscreteJoint {
public:
    DiscreteJoint(std::size_t nx, std::size_t np, std::size_t nn, std::vector<double> table);

    // p(x) p(zp|x) p(zn|x); channels are row-stochastic [nx x np] and [nx x nn].
    static DiscreteJoint from_channels(std::span<const double> px, const Array& zp_given_x,
                                       const Array& zn_given_x);

    double operator()(std::size_t x, std::size_t a, std::size_t b) const {
        return table_[(x * np_ + a) * nn_ + b];
    }
    std::size_t nx() const { return nx_; }
    std::size_t np() const { return np_; }
    std::size_t nn() const { return nn_; }

private:
    std::size_t nx_, np_, nn_;
    std::vector<double> table_;
};

// Random factorized joint with alphabets drawn from [2, max_states].
DiscreteJoint random_factorized_joint(Rng& rng, std::size_t max_states = 6);

struct MiIdentityReport {
    double i_zp_zn = 0.0;        // I(zp:zn)
    double i_zp_x = 0.0;         // I(zp:x)
    double i_zn_x = 0.0;         // I(zn:x)
    double i_x_joint = 0.0;      // I(x:{zp,zn})
    double i_zp_x_given_zn = 0.0;
    double i_zp_zn_given_x = 0.0;
    double chain_rule_residual = 0.0;   // I(zp:zn) - [I(zp:x) - I(zp:x|zn) + I(zp:zn|x)]
    double separation_residual = 0.0;   // I(zp:zn) - [I(zp:x) + I(zn:x) - I(x:{zp,zn})]
    double conditional_residual = 0.0;  // I(zp:x|zn) - [I(x:{zp,zn}) - I(zn:x)]
    bool conditionally_independent = false;  // I(zp:zn|x) <= tol
    bool passed = false;
};

// All quantities in nats by direct summation over the table. The separation
// identity is only asserted when zp and zn are conditionally independent
// given x.
MiIdentityReport mi_identity_check(const DiscreteJoint& joint, double tol = 1e-12);

// ---- reports and exports --------------------------------------------------

struct MetricsReport {
    double y_acc_seen = 0.0;
    std::map<std::string, double> y_acc_unseen;  // angle set -> accuracy
    double s_probe_acc = 0.0;
    double s_chance = 0.0;
    std::vector<LossBreakdown> loss_curve;
    std::uint64_t run_seed = 0;
    std::map<std::string, std::string> config;

    bool operator==(const MetricsReport&) const;
};

// JSON with fields y-acc-seen, y-acc-unseen, s-probe-acc, s-chance,
// loss-curve, run-seed, config.
std::string to_json(const MetricsReport& report);
MetricsReport metrics_from_json(const std::string& text);

// CSV header id,y,s,zp_0..zp_{d-1}[,zn_0..zn_{d-1}], shortest round-trip doubles.
void write_embedding_csv(const std::filesystem::path& path, const Embeddings& emb,
                         std::span<const int> y, std::span<const int> s);
void export_embeddings(DsfModel& model, const LabeledImageBatch& batch,
                       const std::filesystem::path& path, std::size_t batch_size,
                       std::uint64_t seed);

std::string format_double(double v);

}  // namespace dsf
