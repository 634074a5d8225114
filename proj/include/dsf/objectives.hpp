#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dsf/echo.hpp"
#include "dsf/hsic.hpp"
#include "dsf/nn.hpp"
#include "dsf/tensor.hpp"

namespace dsf {

enum class Variant { dsf_e, dsf_c, dsf_h };

// How the per-pixel Bernoulli NLL is reduced over an image.
enum class ReconReduction { mean, sum };

std::string to_string(Variant v);       // "dsf-e", "dsf-c", "dsf-h"
Variant parse_variant(const std::string& text);
std::string to_string(ReconReduction r);  // "mean", "sum"
ReconReduction parse_recon_reduction(const std::string& text);

struct ObjectiveConfig {
    Variant variant = Variant::dsf_h;
    double alpha = 1.0;
    double lambda = 1e-2;
    double gamma = 1e-2;
    std::size_t input_dim = 784;
    std::size_t classes = 10;
    std::size_t zp_dim = 32;
    std::size_t zn_dim = 32;
    std::vector<std::size_t> encoder_widths{256, 128};
    std::vector<std::size_t> predictor_widths{64};
    std::vector<std::size_t> decoder_widths{128, 256, 784};
    double s_max = 0.9;
    std::size_t echo_depth = 64;
    ReconReduction recon_reduction = ReconReduction::mean;

    // Throws ConfigError on negative multipliers, zero sizes, a decoder that
    // does not end at input_dim, or a DSF-E config with zn_dim > 0.
    void validate() const;
    bool has_nuisance_code() const { return variant != Variant::dsf_e; }
    // True when the two configs describe the same network shapes.
    bool same_architecture(const ObjectiveConfig& other) const;
};

struct LossBreakdown {
    double total = 0.0;
    double pred_nll = 0.0;
    double recon_nll = 0.0;
    double comp_p = 0.0;
    double comp_n = 0.0;
    double hsic = 0.0;

    bool operator==(const LossBreakdown&) const = default;
};

// The variant's loss formula applied to stored parts:
//   DSF-E  α·pred + λ·comp_p
//   DSF-C  α·pred + (1+γ)·recon + (λ+γ)·comp_p + γ·comp_n
//   DSF-H  α·pred + recon + λ·comp_p + γ·hsic
double compose_total(const ObjectiveConfig& config, const LossBreakdown& parts);

// Mean softmax cross-entropy in nats.
Tensor predict_nll(const Tensor& logits, std::span<const int> labels);

// Mean over images of the per-image Bernoulli NLL, the pixel terms averaged
// or summed per reduction; decoded is clamped to [1e-7, 1 - 1e-7] first.
Tensor recon_nll(const Tensor& decoded, const Array& target,
                 ReconReduction reduction = ReconReduction::sum);

// Random draws a loss evaluation made. Passing them back freezes the
// stochastic parts (noise and kernel bandwidths) for gradient checking.
struct StochasticDraws {
    Array eps_p;
    Array eps_n;
    double bandwidth_p = 0.0;
    double bandwidth_n = 0.0;
};

struct Encoding {
    Tensor zp;
    Tensor zn;  // unset for DSF-E
    Tensor mi_p;
    Tensor mi_n;  // DSF-C only
    StochasticDraws draws;
};

class DsfModel {
public:
    DsfModel(ObjectiveConfig config, std::uint64_t seed);

    const ObjectiveConfig& config() const { return config_; }

    // x is [N x input_dim]. zp always passes through its echo channel; zn is
    // an echo code for DSF-C and a deterministic tanh head for DSF-H.
    Encoding encode(Graph& g, const Tensor& x, std::uint64_t seed,
                    const StochasticDraws* frozen = nullptr);
    Tensor predict_logits(Graph& g, const Tensor& zp);
    Tensor decode(Graph& g, const Tensor& zp, const Tensor& zn);

    std::vector<Parameter*> parameters();

private:
    ObjectiveConfig config_;
    Mlp encoder_p_;
    EchoChannel channel_p_;
    Mlp encoder_n_;
    EchoChannel channel_n_;
    Mlp zn_head_;
    Mlp predictor_;
    Mlp decoder_;
};

// Images and targets only: training never sees nuisance labels.
struct TrainingBatch {
    Array images;  // [N x D], values in [0, 1]
    std::vector<int> y;
};

struct LossResult {
    LossBreakdown parts;
    Tensor total;
    Encoding encoding;
};

// Builds the selected variant's minimization loss in g. The config supplies
// the multipliers; its architecture must match the model's.
LossResult dsf_loss(Graph& g, const ObjectiveConfig& config, const TrainingBatch& batch,
                    DsfModel& model, std::uint64_t seed, const StochasticDraws* frozen = nullptr);

}  // namespace dsf
