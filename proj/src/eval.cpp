#include "dsf/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include <json.hpp>

#include "dsf/errors.hpp"

namespace dsf {

// ---- accuracy -------------------------------------------------------------

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
    if (predictions.size() != labels.size()) {
        throw DimensionError("accuracy: " + std::to_string(predictions.size()) +
                             " predictions for " + std::to_string(labels.size()) + " labels");
    }
    if (labels.empty()) throw DimensionError("accuracy: no samples");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i];
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double relative_improvement(double new_acc, double old_acc, std::optional<double> chance) {
    for (double a : {new_acc, old_acc}) {
        if (a < 0.0 || a > 1.0) throw ContractError("accuracy outside [0, 1]");
    }
    auto error = [&](double acc) {
        return chance ? std::max(acc - *chance, 0.0) : 1.0 - acc;
    };
    const double old_err = error(old_acc);
    if (old_err == 0.0) {
        throw UndefinedImprovementError("relative improvement undefined: reference error is zero");
    }
    return (old_err - error(new_acc)) / old_err;
}

// ---- embedding ------------------------------------------------------------

Embeddings embed(DsfModel& model, const Array& images, std::size_t batch_size, std::uint64_t seed) {
    const auto& config = model.config();
    if (images.shape.size() != 2 || images.shape[1] != config.input_dim) {
        throw DimensionError("embed: images " + shape_str(images.shape) + " for input dimension " +
                             std::to_string(config.input_dim));
    }
    const std::size_t n = images.shape[0];
    if (n < 2) throw BatchTooSmallError("embed needs at least 2 samples");
    batch_size = std::max<std::size_t>(batch_size, 2);

    Embeddings out;
    out.zp = Array(Shape{n, config.zp_dim});
    if (config.has_nuisance_code()) out.zn = Array(Shape{n, config.zn_dim});
    out.predictions.resize(n);

    std::size_t chunk = 0;
    for (std::size_t begin = 0; begin < n; ++chunk) {
        std::size_t end = std::min(n, begin + batch_size);
        if (n - end < 2) end = n;
        Graph g;
        const Tensor x = g.constant(images.row_slice(begin, end));
        const Encoding enc = model.encode(g, x, derive_seed(seed, {chunk}));
        const Tensor logits = model.predict_logits(g, enc.zp);
        std::copy(enc.zp.values().begin(), enc.zp.values().end(),
                  out.zp.data.begin() + static_cast<std::ptrdiff_t>(begin * config.zp_dim));
        if (config.has_nuisance_code()) {
            std::copy(enc.zn.values().begin(), enc.zn.values().end(),
                      out.zn.data.begin() + static_cast<std::ptrdiff_t>(begin * config.zn_dim));
        }
        const auto& lv = logits.values();
        for (std::size_t r = 0; r < end - begin; ++r) {
            const auto row = lv.begin() + static_cast<std::ptrdiff_t>(r * config.classes);
            out.predictions[begin + r] = static_cast<int>(
                std::max_element(row, row + static_cast<std::ptrdiff_t>(config.classes)) - row);
        }
        begin = end;
    }
    return out;
}

// ---- probes ---------------------------------------------------------------

std::vector<int> probe_predict(Mlp& probe, const Array& embeddings) {
    Graph g;
    const Tensor logits = probe.forward(g, g.constant(embeddings));
    const std::size_t n = embeddings.shape[0], c = probe.out_dim();
    std::vector<int> out(n);
    for (std::size_t r = 0; r < n; ++r) {
        const auto row = logits.values().begin() + static_cast<std::ptrdiff_t>(r * c);
        out[r] = static_cast<int>(std::max_element(row, row + static_cast<std::ptrdiff_t>(c)) - row);
    }
    return out;
}

ProbeResult train_probe(const Array& embeddings, std::span<const int> labels, std::uint64_t seed,
                        const ProbeConfig& config) {
    if (embeddings.shape.size() != 2 || embeddings.shape[0] != labels.size()) {
        throw DimensionError("train_probe: embeddings " + shape_str(embeddings.shape) + " for " +
                             std::to_string(labels.size()) + " labels");
    }
    const std::set<int> distinct(labels.begin(), labels.end());
    if (distinct.size() < 2) throw DegenerateInputError("probe labels contain a single class");
    if (*distinct.begin() < 0) throw DataError("probe labels must be non-negative");
    const auto classes = static_cast<std::size_t>(*distinct.rbegin()) + 1;
    const std::size_t n = labels.size();
    if (n < 10 * classes) {
        throw DataError("probe needs at least " + std::to_string(10 * classes) + " samples, got " +
                        std::to_string(n));
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, {0}));
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[uniform_index(rng, i + 1)]);
    const auto test_count = static_cast<std::size_t>(std::lround(config.holdout * static_cast<double>(n)));
    const std::size_t train_count = n - test_count;
    const std::size_t d = embeddings.shape[1];

    auto gather = [&](std::span<const std::size_t> idx, Array& x, std::vector<int>& y) {
        x = Array(Shape{idx.size(), d});
        y.resize(idx.size());
        for (std::size_t k = 0; k < idx.size(); ++k) {
            std::copy_n(embeddings.data.begin() + static_cast<std::ptrdiff_t>(idx[k] * d), d,
                        x.data.begin() + static_cast<std::ptrdiff_t>(k * d));
            y[k] = labels[idx[k]];
        }
    };

    ProbeResult result;
    result.classes = classes;
    result.train_count = train_count;
    result.test_count = test_count;
    result.model = Mlp("probe", d, {config.hidden, classes}, Activation::relu, Activation::linear,
                       derive_seed(seed, {1}));
    auto params = result.model.parameters();
    Adam adam(AdamConfig{config.learning_rate, 0.9, 0.999, 1e-8, 0.0});

    std::vector<std::size_t> train_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(train_count));
    const std::span<const std::size_t> test_idx(order.data() + train_count, test_count);
    Array xb;
    std::vector<int> yb;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        Rng shuffle(derive_seed(seed, {2, epoch}));
        for (std::size_t i = train_idx.size() - 1; i > 0; --i) {
            std::swap(train_idx[i], train_idx[uniform_index(shuffle, i + 1)]);
        }
        for (std::size_t begin = 0; begin < train_count; begin += config.batch_size) {
            const std::size_t end = std::min(train_count, begin + config.batch_size);
            gather(std::span(train_idx).subspan(begin, end - begin), xb, yb);
            zero_grads(params);
            Graph g;
            const Tensor loss = softmax_cross_entropy(result.model.forward(g, g.constant(xb)), yb);
            g.backward(loss);
            adam.step(params);
        }
    }
    result.test_indices.assign(test_idx.begin(), test_idx.end());
    if (test_count > 0) {
        gather(test_idx, xb, yb);
        result.heldout_accuracy = accuracy(probe_predict(result.model, xb), yb);
    }
    return result;
}

// ---- discrete MI ----------------------------------------------------------

DiscreteJoint::DiscreteJoint(std::size_t nx, std::size_t np, std::size_t nn,
                             std::vector<double> table)
    : nx_(nx), np_(np), nn_(nn), table_(std::move(table)) {
    if (nx == 0 || np == 0 || nn == 0 || nx > 8 || np > 8 || nn > 8) {
        throw ContractError("joint alphabets must have between 1 and 8 states");
    }
    if (table_.size() != nx * np * nn) throw ContractError("joint table size does not match alphabets");
    double total = 0.0;
    for (double p : table_) {
        if (!(p >= 0.0)) throw ContractError("joint table has a negative entry");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-12) {
        throw ContractError("joint table sums to " + format_double(total) + ", not 1");
    }
}

DiscreteJoint DiscreteJoint::from_channels(std::span<const double> px, const Array& zp_given_x,
                                           const Array& zn_given_x) {
    const std::size_t nx = px.size(), np = zp_given_x.cols(), nn = zn_given_x.cols();
    if (zp_given_x.rows() != nx || zn_given_x.rows() != nx) {
        throw DimensionError("channel rows must match the x alphabet");
    }
    std::vector<double> table(nx * np * nn);
    for (std::size_t x = 0; x < nx; ++x) {
        for (std::size_t a = 0; a < np; ++a) {
            for (std::size_t b = 0; b < nn; ++b) {
                table[(x * np + a) * nn + b] = px[x] * zp_given_x.at(x, a) * zn_given_x.at(x, b);
            }
        }
    }
    // Renormalize away the product's rounding so the table sums to 1 within 1e-12.
    const double total = std::accumulate(table.begin(), table.end(), 0.0);
    for (double& p : table) p /= total;
    return DiscreteJoint(nx, np, nn, std::move(table));
}

DiscreteJoint random_factorized_joint(Rng& rng, std::size_t max_states) {
    auto states = [&] { return 2 + static_cast<std::size_t>(uniform_index(rng, max_states - 1)); };
    const std::size_t nx = states(), np = states(), nn = states();
    auto simplex_rows = [&](std::size_t rows, std::size_t cols) {
        Array a(Shape{rows, cols});
        for (std::size_t r = 0; r < rows; ++r) {
            double total = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
                // Exponential weights give a uniform draw on the simplex.
                a.at(r, c) = -std::log(1.0 - uniform01(rng));
                total += a.at(r, c);
            }
            for (std::size_t c = 0; c < cols; ++c) a.at(r, c) /= total;
        }
        return a;
    };
    const Array px = simplex_rows(1, nx);
    const Array zp = simplex_rows(nx, np);
    const Array zn = simplex_rows(nx, nn);
    return DiscreteJoint::from_channels(px.data, zp, zn);
}

MiIdentityReport mi_identity_check(const DiscreteJoint& j, double tol) {
    const std::size_t nx = j.nx(), np = j.np(), nn = j.nn();
    std::vector<double> px(nx, 0.0), pa(np, 0.0), pb(nn, 0.0);
    std::vector<double> pxa(nx * np, 0.0), pxb(nx * nn, 0.0), pab(np * nn, 0.0);
    for (std::size_t x = 0; x < nx; ++x) {
        for (std::size_t a = 0; a < np; ++a) {
            for (std::size_t b = 0; b < nn; ++b) {
                const double p = j(x, a, b);
                px[x] += p;
                pa[a] += p;
                pb[b] += p;
                pxa[x * np + a] += p;
                pxb[x * nn + b] += p;
                pab[a * nn + b] += p;
            }
        }
    }

    MiIdentityReport r;
    for (std::size_t a = 0; a < np; ++a) {
        for (std::size_t b = 0; b < nn; ++b) {
            const double p = pab[a * nn + b];
            if (p > 0.0) r.i_zp_zn += p * std::log(p / (pa[a] * pb[b]));
        }
    }
    for (std::size_t x = 0; x < nx; ++x) {
        for (std::size_t a = 0; a < np; ++a) {
            const double p = pxa[x * np + a];
            if (p > 0.0) r.i_zp_x += p * std::log(p / (px[x] * pa[a]));
        }
        for (std::size_t b = 0; b < nn; ++b) {
            const double p = pxb[x * nn + b];
            if (p > 0.0) r.i_zn_x += p * std::log(p / (px[x] * pb[b]));
        }
    }
    for (std::size_t x = 0; x < nx; ++x) {
        for (std::size_t a = 0; a < np; ++a) {
            for (std::size_t b = 0; b < nn; ++b) {
                const double p = j(x, a, b);
                if (p <= 0.0) continue;
                r.i_x_joint += p * std::log(p / (px[x] * pab[a * nn + b]));
                r.i_zp_x_given_zn += p * std::log(p * pb[b] / (pxb[x * nn + b] * pab[a * nn + b]));
                r.i_zp_zn_given_x += p * std::log(p * px[x] / (pxa[x * np + a] * pxb[x * nn + b]));
            }
        }
    }

    r.chain_rule_residual = r.i_zp_zn - (r.i_zp_x - r.i_zp_x_given_zn + r.i_zp_zn_given_x);
    r.separation_residual = r.i_zp_zn - (r.i_zp_x + r.i_zn_x - r.i_x_joint);
    r.conditional_residual = r.i_zp_x_given_zn - (r.i_x_joint - r.i_zn_x);
    r.conditionally_independent = std::abs(r.i_zp_zn_given_x) <= tol;
    r.passed = std::abs(r.chain_rule_residual) <= tol && std::abs(r.conditional_residual) <= tol &&
               (!r.conditionally_independent || std::abs(r.separation_residual) <= tol);
    return r;
}

// ---- metrics JSON ---------------------------------------------------------

bool MetricsReport::operator==(const MetricsReport& o) const {
    return y_acc_seen == o.y_acc_seen && y_acc_unseen == o.y_acc_unseen &&
           s_probe_acc == o.s_probe_acc && s_chance == o.s_chance && loss_curve == o.loss_curve &&
           run_seed == o.run_seed && config == o.config;
}

std::string to_json(const MetricsReport& m) {
    nlohmann::ordered_json j;
    j["y-acc-seen"] = m.y_acc_seen;
    j["y-acc-unseen"] = m.y_acc_unseen;
    j["s-probe-acc"] = m.s_probe_acc;
    j["s-chance"] = m.s_chance;
    auto curve = nlohmann::ordered_json::array();
    for (const LossBreakdown& b : m.loss_curve) {
        curve.push_back({{"total", b.total},
                         {"pred_nll", b.pred_nll},
                         {"recon_nll", b.recon_nll},
                         {"comp_p", b.comp_p},
                         {"comp_n", b.comp_n},
                         {"hsic", b.hsic}});
    }
    j["loss-curve"] = std::move(curve);
    j["run-seed"] = m.run_seed;
    j["config"] = m.config;
    return j.dump(2) + "\n";
}

MetricsReport metrics_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("metrics JSON: ") + e.what(), e.byte);
    }
    MetricsReport m;
    try {
        m.y_acc_seen = j.at("y-acc-seen").get<double>();
        m.y_acc_unseen = j.at("y-acc-unseen").get<std::map<std::string, double>>();
        m.s_probe_acc = j.at("s-probe-acc").get<double>();
        m.s_chance = j.at("s-chance").get<double>();
        for (const auto& e : j.at("loss-curve")) {
            m.loss_curve.push_back({e.at("total").get<double>(), e.at("pred_nll").get<double>(),
                                    e.at("recon_nll").get<double>(), e.at("comp_p").get<double>(),
                                    e.at("comp_n").get<double>(), e.at("hsic").get<double>()});
        }
        m.run_seed = j.at("run-seed").get<std::uint64_t>();
        m.config = j.at("config").get<std::map<std::string, std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("metrics JSON: ") + e.what());
    }
    return m;
}

// ---- embedding CSV --------------------------------------------------------

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void write_embedding_csv(const std::filesystem::path& path, const Embeddings& emb,
                         std::span<const int> y, std::span<const int> s) {
    const std::size_t n = emb.zp.shape[0];
    const std::size_t dp = emb.zp.shape[1];
    const std::size_t dn = emb.zn.shape.size() == 2 ? emb.zn.shape[1] : 0;
    if (y.size() != n || (!s.empty() && s.size() != n)) {
        throw DimensionError("write_embedding_csv: label counts do not match embeddings");
    }
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << "id,y,s";
    for (std::size_t k = 0; k < dp; ++k) os << ",zp_" << k;
    for (std::size_t k = 0; k < dn; ++k) os << ",zn_" << k;
    os << '\n';
    for (std::size_t i = 0; i < n; ++i) {
        os << i << ',' << y[i] << ',' << (s.empty() ? -1 : s[i]);
        for (std::size_t k = 0; k < dp; ++k) os << ',' << format_double(emb.zp.data[i * dp + k]);
        for (std::size_t k = 0; k < dn; ++k) os << ',' << format_double(emb.zn.data[i * dn + k]);
        os << '\n';
    }
    if (!os) throw IoError("write failed for " + path.string());
}

void export_embeddings(DsfModel& model, const LabeledImageBatch& batch,
                       const std::filesystem::path& path, std::size_t batch_size,
                       std::uint64_t seed) {
    const Embeddings emb = embed(model, batch.flat(), batch_size, seed);
    write_embedding_csv(path, emb, batch.y, batch.s);
}

}  // namespace dsf
