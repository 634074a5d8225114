#include "dsf/objectives.hpp"

#include <cmath>

#include "dsf/errors.hpp"
#include "dsf/rng.hpp"

namespace dsf {

namespace {

constexpr double kPixelClamp = 1e-7;

std::vector<std::size_t> with_output(std::vector<std::size_t> widths, std::size_t out) {
    widths.push_back(out);
    return widths;
}

}  // namespace

std::string to_string(Variant v) {
    switch (v) {
        case Variant::dsf_e: return "dsf-e";
        case Variant::dsf_c: return "dsf-c";
        case Variant::dsf_h: return "dsf-h";
    }
    return "unknown";
}

Variant parse_variant(const std::string& text) {
    if (text == "dsf-e" || text == "DSF-E") return Variant::dsf_e;
    if (text == "dsf-c" || text == "DSF-C") return Variant::dsf_c;
    if (text == "dsf-h" || text == "DSF-H") return Variant::dsf_h;
    throw ConfigError("unknown variant '" + text + "' (expected dsf-e, dsf-c or dsf-h)");
}

std::string to_string(ReconReduction r) {
    return r == ReconReduction::mean ? "mean" : "sum";
}

ReconReduction parse_recon_reduction(const std::string& text) {
    if (text == "mean") return ReconReduction::mean;
    if (text == "sum") return ReconReduction::sum;
    throw ConfigError("unknown recon reduction '" + text + "' (expected mean or sum)");
}

void ObjectiveConfig::validate() const {
    if (alpha < 0.0 || lambda < 0.0 || gamma < 0.0) {
        throw ConfigError("multipliers alpha, lambda, gamma must be non-negative");
    }
    if (input_dim == 0 || zp_dim == 0 || encoder_widths.empty()) {
        throw ConfigError("input_dim, zp_dim and encoder widths must be non-empty");
    }
    if (classes < 2) throw ConfigError("need at least 2 classes");
    for (auto w : encoder_widths) if (w == 0) throw ConfigError("zero-width encoder layer");
    for (auto w : predictor_widths) if (w == 0) throw ConfigError("zero-width predictor layer");
    if (!(s_max > 0.0 && s_max < 1.0)) throw ConfigError("s_max must lie in (0, 1)");
    if (echo_depth == 0) throw ConfigError("echo depth must be positive");
    if (variant == Variant::dsf_e) {
        if (zn_dim != 0) {
            throw ConfigError("dsf-e has no nuisance code; zn_dim must be 0, got " +
                              std::to_string(zn_dim));
        }
        return;
    }
    if (zn_dim == 0) throw ConfigError(to_string(variant) + " needs zn_dim > 0");
    if (decoder_widths.empty() || decoder_widths.back() != input_dim) {
        throw ConfigError("decoder widths must end at input_dim " + std::to_string(input_dim));
    }
}

bool ObjectiveConfig::same_architecture(const ObjectiveConfig& o) const {
    return variant == o.variant && input_dim == o.input_dim && classes == o.classes &&
           zp_dim == o.zp_dim && zn_dim == o.zn_dim && encoder_widths == o.encoder_widths &&
           predictor_widths == o.predictor_widths &&
           (variant == Variant::dsf_e || decoder_widths == o.decoder_widths);
}

double compose_total(const ObjectiveConfig& c, const LossBreakdown& p) {
    switch (c.variant) {
        case Variant::dsf_e:
            return c.alpha * p.pred_nll + c.lambda * p.comp_p;
        case Variant::dsf_c:
            return c.alpha * p.pred_nll + (1.0 + c.gamma) * p.recon_nll +
                   (c.lambda + c.gamma) * p.comp_p + c.gamma * p.comp_n;
        case Variant::dsf_h:
            return c.alpha * p.pred_nll + p.recon_nll + c.lambda * p.comp_p + c.gamma * p.hsic;
    }
    return 0.0;
}

Tensor predict_nll(const Tensor& logits, std::span<const int> labels) {
    return softmax_cross_entropy(logits, labels);
}

Tensor recon_nll(const Tensor& decoded, const Array& target, ReconReduction reduction) {
    if (decoded.shape() != target.shape || decoded.shape().size() != 2) {
        throw DimensionError("recon_nll: decoded " + shape_str(decoded.shape()) +
                             " vs target " + shape_str(target.shape));
    }
    Graph& g = decoded.graph();
    Array complement = target;
    for (double& v : complement.data) v = 1.0 - v;
    const Tensor p = clamp(decoded, kPixelClamp, 1.0 - kPixelClamp);
    const Tensor log_p = log(p);
    const Tensor log_q = log(add_constant(negate(p), 1.0));
    const Tensor ll = add(mul(g.constant(target), log_p), mul(g.constant(std::move(complement)), log_q));
    const std::size_t per_image = reduction == ReconReduction::mean ? target.shape[1] : 1;
    return scale(sum(ll), -1.0 / static_cast<double>(target.shape[0] * per_image));
}

DsfModel::DsfModel(ObjectiveConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    const auto& c = config_;
    const std::size_t hidden = c.encoder_widths.back();
    EchoConfig echo_p{c.zp_dim, c.s_max, 1e-6, c.echo_depth};
    encoder_p_ = Mlp("enc_p", c.input_dim, c.encoder_widths, Activation::relu, Activation::relu,
                     derive_seed(seed, {0}));
    channel_p_ = EchoChannel("echo_p", hidden, echo_p, derive_seed(seed, {1}));
    predictor_ = Mlp("pred", c.zp_dim, with_output(c.predictor_widths, c.classes),
                     Activation::relu, Activation::linear, derive_seed(seed, {2}));
    if (!c.has_nuisance_code()) return;
    encoder_n_ = Mlp("enc_n", c.input_dim, c.encoder_widths, Activation::relu, Activation::relu,
                     derive_seed(seed, {3}));
    if (c.variant == Variant::dsf_c) {
        EchoConfig echo_n{c.zn_dim, c.s_max, 1e-6, c.echo_depth};
        channel_n_ = EchoChannel("echo_n", hidden, echo_n, derive_seed(seed, {4}));
    } else {
        zn_head_ = Mlp("zn", hidden, {c.zn_dim}, Activation::linear, Activation::tanh,
                       derive_seed(seed, {4}));
    }
    decoder_ = Mlp("dec", c.zp_dim + c.zn_dim, c.decoder_widths, Activation::relu,
                   Activation::sigmoid, derive_seed(seed, {5}));
}

Encoding DsfModel::encode(Graph& g, const Tensor& x, std::uint64_t seed,
                          const StochasticDraws* frozen) {
    Encoding out;
    const EchoSample p = channel_p_.encode(g, encoder_p_.forward(g, x), derive_seed(seed, {0}),
                                           frozen ? &frozen->eps_p : nullptr);
    out.zp = p.z;
    out.mi_p = p.mi_nats;
    out.draws.eps_p = p.epsilon;
    if (!config_.has_nuisance_code()) return out;
    const Tensor hn = encoder_n_.forward(g, x);
    if (config_.variant == Variant::dsf_c) {
        const EchoSample n = channel_n_.encode(g, hn, derive_seed(seed, {1}),
                                               frozen ? &frozen->eps_n : nullptr);
        out.zn = n.z;
        out.mi_n = n.mi_nats;
        out.draws.eps_n = n.epsilon;
    } else {
        out.zn = zn_head_.forward(g, hn);
    }
    return out;
}

Tensor DsfModel::predict_logits(Graph& g, const Tensor& zp) { return predictor_.forward(g, zp); }

Tensor DsfModel::decode(Graph& g, const Tensor& zp, const Tensor& zn) {
    return decoder_.forward(g, concat_cols(zp, zn));
}

std::vector<Parameter*> DsfModel::parameters() {
    std::vector<Parameter*> out;
    auto append = [&out](std::vector<Parameter*> ps) { out.insert(out.end(), ps.begin(), ps.end()); };
    append(encoder_p_.parameters());
    append(channel_p_.parameters());
    append(predictor_.parameters());
    if (config_.has_nuisance_code()) {
        append(encoder_n_.parameters());
        append(config_.variant == Variant::dsf_c ? channel_n_.parameters() : zn_head_.parameters());
        append(decoder_.parameters());
    }
    return out;
}

LossResult dsf_loss(Graph& g, const ObjectiveConfig& config, const TrainingBatch& batch,
                    DsfModel& model, std::uint64_t seed, const StochasticDraws* frozen) {
    config.validate();
    if (!config.same_architecture(model.config())) {
        throw ConfigError("objective config does not match the model architecture");
    }
    const std::size_t n = batch.y.size();
    if (n < 4) throw BatchTooSmallError("dsf_loss needs at least 4 samples, got " + std::to_string(n));
    if (batch.images.shape != Shape{n, config.input_dim}) {
        throw DimensionError("dsf_loss: images " + shape_str(batch.images.shape) + " for " +
                             std::to_string(n) + " labels of dimension " +
                             std::to_string(config.input_dim));
    }

    LossResult out;
    const Tensor x = g.constant(batch.images);
    out.encoding = model.encode(g, x, seed, frozen);
    Encoding& enc = out.encoding;

    const Tensor pred = predict_nll(model.predict_logits(g, enc.zp), batch.y);
    out.parts.pred_nll = pred.item();
    out.parts.comp_p = enc.mi_p.item();
    Tensor total = add(scale(pred, config.alpha), scale(enc.mi_p, config.lambda));

    if (config.has_nuisance_code()) {
        const Tensor recon = recon_nll(model.decode(g, enc.zp, enc.zn), batch.images, config.recon_reduction);
        out.parts.recon_nll = recon.item();
        if (config.variant == Variant::dsf_c) {
            out.parts.comp_n = enc.mi_n.item();
            // λ·comp_p is already in; the γ terms complete (λ+γ)·comp_p.
            total = add(total, scale(recon, 1.0 + config.gamma));
            total = add(total, scale(enc.mi_p, config.gamma));
            total = add(total, scale(enc.mi_n, config.gamma));
        } else {
            const double bw_p = frozen ? frozen->bandwidth_p : median_bandwidth(enc.zp.value());
            const double bw_n = frozen ? frozen->bandwidth_n : median_bandwidth(enc.zn.value());
            enc.draws.bandwidth_p = bw_p;
            enc.draws.bandwidth_n = bw_n;
            const Tensor hsic = hsic_penalty(enc.zp, enc.zn, KernelSpec::gaussian(bw_p),
                                             KernelSpec::gaussian(bw_n));
            out.parts.hsic = hsic.item();
            total = add(total, recon);
            total = add(total, scale(hsic, config.gamma));
        }
    }
    out.total = total;
    out.parts.total = total.item();
    return out;
}

}  // namespace dsf
