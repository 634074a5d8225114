#include "dsf/run.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "dsf/errors.hpp"
#include "dsf/rng.hpp"

namespace dsf {

namespace {

// Stream ids under the run seed.
enum : std::uint64_t {
    kInitStream = 1,
    kShuffleStream = 2,
    kStepStream = 3,
    kEvalStream = 4,
    kProbeStream = 5,
    kDataStream = 6,
};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_real(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a real number, got '" + v + "'");
    }
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
        throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
    }
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<std::size_t> parse_sizes(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    for (const auto& item : split_list(v)) out.push_back(parse_uint(key, item));
    return out;
}

std::vector<double> parse_reals(const std::string& key, const std::string& v) {
    std::vector<double> out;
    for (const auto& item : split_list(v)) out.push_back(parse_real(key, item));
    return out;
}

template <typename T>
std::string join(const std::vector<T>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ",";
        if constexpr (std::is_floating_point_v<T>) {
            out += format_double(values[i]);
        } else {
            out += std::to_string(values[i]);
        }
    }
    return out;
}

std::string fixed3(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(3) << v;
    return os.str();
}

}  // namespace

// ---- configuration --------------------------------------------------------

void apply_setting(RunConfig& c, const std::string& key, const std::string& raw) {
    const std::string v = trim(raw);
    auto& o = c.objective;
    if (key == "variant") o.variant = parse_variant(v);
    else if (key == "alpha") o.alpha = parse_real(key, v);
    else if (key == "lambda") o.lambda = parse_real(key, v);
    else if (key == "gamma") o.gamma = parse_real(key, v);
    else if (key == "zp-dim") o.zp_dim = parse_uint(key, v);
    else if (key == "zn-dim") { o.zn_dim = parse_uint(key, v); c.zn_dim_set = true; }
    else if (key == "encoder-widths") o.encoder_widths = parse_sizes(key, v);
    else if (key == "predictor-widths") o.predictor_widths = parse_sizes(key, v);
    else if (key == "decoder-widths") o.decoder_widths = parse_sizes(key, v);
    else if (key == "s-max") o.s_max = parse_real(key, v);
    else if (key == "echo-depth") o.echo_depth = parse_uint(key, v);
    else if (key == "recon-reduction") o.recon_reduction = parse_recon_reduction(v);
    else if (key == "seed") c.seed = parse_uint(key, v);
    else if (key == "epochs") c.epochs = parse_uint(key, v);
    else if (key == "batch-size") c.batch_size = parse_uint(key, v);
    else if (key == "learning-rate") c.learning_rate = parse_real(key, v);
    else if (key == "weight-decay") c.weight_decay = parse_real(key, v);
    else if (key == "dataset") c.dataset = v;
    else if (key == "n-per-class") c.n_per_class = parse_uint(key, v);
    else if (key == "glyph-jitter") c.glyphs.jitter = parse_bool(key, v);
    else if (key == "idx-images") c.idx_images = v;
    else if (key == "idx-labels") c.idx_labels = v;
    else if (key == "train-size") c.sizes.train = parse_uint(key, v);
    else if (key == "eval-seen-size") c.sizes.eval_seen = parse_uint(key, v);
    else if (key == "eval-unseen-size") c.sizes.eval_unseen = parse_uint(key, v);
    else if (key == "dil-size") c.sizes.dil_transfer = parse_uint(key, v);
    else if (key == "out") c.out = v;
    else if (key == "data-dir") c.data_dir = v;
    else if (key == "lambda-grid") c.lambda_grid = parse_reals(key, v);
    else if (key == "gamma-grid") c.gamma_grid = parse_reals(key, v);
    else throw ConfigError("unknown setting '" + key + "'");
}

void parse_config_text(RunConfig& config, const std::string& text) {
    std::istringstream is(text);
    std::string line;
    std::size_t number = 0;
    while (std::getline(is, line)) {
        ++number;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(number) + ": expected 'key = value'");
        }
        try {
            apply_setting(config, trim(line.substr(0, eq)), line.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError("line " + std::to_string(number) + ": " + e.what());
        }
    }
}

void load_config_file(RunConfig& config, const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    parse_config_text(config, ss.str());
}

void RunConfig::finalize() {
    if (!zn_dim_set) objective.zn_dim = objective.variant == Variant::dsf_e ? 0 : 32;
    if (dataset != "glyphs" && dataset != "idx") {
        throw ConfigError("dataset must be 'glyphs' or 'idx', got '" + dataset + "'");
    }
    if (dataset == "glyphs") {
        if (n_per_class == 0) throw ConfigError("n-per-class must be positive");
        objective.input_dim = glyphs.canvas * glyphs.canvas;
        objective.classes = glyphs.classes;
        sizes.train = n_per_class * glyphs.classes;
    } else if (idx_images.empty() || idx_labels.empty()) {
        throw ConfigError("dataset 'idx' needs idx-images and idx-labels");
    }
    if (batch_size < 4) throw ConfigError("batch-size must be at least 4");
    if (epochs == 0) throw ConfigError("epochs must be positive");
    if (!(learning_rate > 0.0) || weight_decay < 0.0) {
        throw ConfigError("learning-rate must be positive and weight-decay non-negative");
    }
    objective.validate();
}

std::map<std::string, std::string> describe(const RunConfig& c) {
    const auto& o = c.objective;
    return {
        {"variant", to_string(o.variant)},
        {"alpha", format_double(o.alpha)},
        {"lambda", format_double(o.lambda)},
        {"gamma", format_double(o.gamma)},
        {"zp-dim", std::to_string(o.zp_dim)},
        {"zn-dim", std::to_string(o.zn_dim)},
        {"encoder-widths", join(o.encoder_widths)},
        {"predictor-widths", join(o.predictor_widths)},
        {"decoder-widths", join(o.decoder_widths)},
        {"s-max", format_double(o.s_max)},
        {"echo-depth", std::to_string(o.echo_depth)},
        {"recon-reduction", to_string(o.recon_reduction)},
        {"seed", std::to_string(c.seed)},
        {"epochs", std::to_string(c.epochs)},
        {"batch-size", std::to_string(c.batch_size)},
        {"learning-rate", format_double(c.learning_rate)},
        {"weight-decay", format_double(c.weight_decay)},
        {"dataset", c.dataset},
        {"n-per-class", std::to_string(c.n_per_class)},
        {"glyph-jitter", c.glyphs.jitter ? "true" : "false"},
        {"idx-images", c.idx_images},
        {"idx-labels", c.idx_labels},
        {"train-size", std::to_string(c.sizes.train)},
        {"eval-seen-size", std::to_string(c.sizes.eval_seen)},
        {"eval-unseen-size", std::to_string(c.sizes.eval_unseen)},
        {"dil-size", std::to_string(c.sizes.dil_transfer)},
        {"lambda-grid", join(c.lambda_grid)},
        {"gamma-grid", join(c.gamma_grid)},
    };
}

std::string render_config(const RunConfig& config) {
    std::string out;
    for (const auto& [k, v] : describe(config)) out += k + " = " + v + "\n";
    return out;
}

// ---- datasets -------------------------------------------------------------

RotProtocol build_protocol(const RunConfig& config) {
    LabeledImageBatch base;
    if (config.dataset == "idx") {
        base = load_idx(config.idx_images, config.idx_labels);
    } else {
        // Enough unrotated glyphs for every split, rendered once and then dealt out.
        const auto& z = config.sizes;
        const std::size_t total = z.train + z.eval_seen + 2 * z.eval_unseen + z.dil_transfer;
        const std::size_t per_class = (total + config.glyphs.classes - 1) / config.glyphs.classes;
        base = render_base(config.glyphs, per_class, derive_seed(config.seed, {kDataStream, 0}));
    }
    return make_rot_protocol(base, config.sizes, derive_seed(config.seed, {kDataStream, 1}));
}

void write_protocol(const RotProtocol& p, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    save_dataset(dir / DatasetFiles::kTrain, p.train);
    save_dataset(dir / DatasetFiles::kEvalSeen, p.eval_seen);
    save_dataset(dir / DatasetFiles::kUnseen55, p.unseen_55);
    save_dataset(dir / DatasetFiles::kUnseen65, p.unseen_65);
    save_dataset(dir / DatasetFiles::kDilTransfer, p.dil_transfer);
}

RotProtocol read_protocol(const std::filesystem::path& dir) {
    RotProtocol p;
    p.train = load_dataset(dir / DatasetFiles::kTrain);
    p.eval_seen = load_dataset(dir / DatasetFiles::kEvalSeen);
    p.unseen_55 = load_dataset(dir / DatasetFiles::kUnseen55);
    p.unseen_65 = load_dataset(dir / DatasetFiles::kUnseen65);
    p.dil_transfer = load_dataset(dir / DatasetFiles::kDilTransfer);
    return p;
}

TrainingBatch training_view(const LabeledImageBatch& batch) {
    return TrainingBatch{batch.flat(), batch.y};
}

// ---- training -------------------------------------------------------------

DsfModel train_model(const RunConfig& config, const TrainingBatch& train,
                     std::vector<LossBreakdown>* curve, const EpochCallback& on_epoch) {
    const ObjectiveConfig& objective = config.objective;
    DsfModel model(objective, derive_seed(config.seed, {kInitStream}));
    auto params = model.parameters();
    Adam adam(AdamConfig{config.learning_rate, 0.9, 0.999, 1e-8, config.weight_decay});

    const std::size_t n = train.y.size();
    if (n < 4) throw DataError("training set needs at least 4 samples");
    const std::size_t d = train.images.shape[1];
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainingBatch batch;
    std::uint64_t step = 0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        Rng rng(derive_seed(config.seed, {kShuffleStream, epoch}));
        for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[uniform_index(rng, i + 1)]);

        LossBreakdown sum;
        for (std::size_t begin = 0; begin < n;) {
            std::size_t end = std::min(n, begin + config.batch_size);
            if (n - end < 4) end = n;  // a short tail joins the last batch
            const std::size_t m = end - begin;
            batch.images = Array(Shape{m, d});
            batch.y.resize(m);
            for (std::size_t k = 0; k < m; ++k) {
                const std::size_t src = order[begin + k];
                std::copy_n(train.images.data.begin() + static_cast<std::ptrdiff_t>(src * d), d,
                            batch.images.data.begin() + static_cast<std::ptrdiff_t>(k * d));
                batch.y[k] = train.y[src];
            }
            Graph g(derive_seed(config.seed, {kStepStream, step}));
            const LossResult loss = dsf_loss(g, objective, batch, model, g.seed());
            if (!std::isfinite(loss.parts.total)) {
                throw TrainingDivergedError("loss became " + format_double(loss.parts.total),
                                            epoch + 1);
            }
            zero_grads(params);
            g.backward(loss.total);
            adam.step(params);
            ++step;

            const double w = static_cast<double>(m);
            sum.total += w * loss.parts.total;
            sum.pred_nll += w * loss.parts.pred_nll;
            sum.recon_nll += w * loss.parts.recon_nll;
            sum.comp_p += w * loss.parts.comp_p;
            sum.comp_n += w * loss.parts.comp_n;
            sum.hsic += w * loss.parts.hsic;
            begin = end;
        }
        const double inv = 1.0 / static_cast<double>(n);
        LossBreakdown mean{sum.total * inv, sum.pred_nll * inv, sum.recon_nll * inv,
                           sum.comp_p * inv, sum.comp_n * inv, sum.hsic * inv};
        if (curve) curve->push_back(mean);
        if (on_epoch) on_epoch(epoch + 1, mean);
    }
    return model;
}

double evaluate_accuracy(DsfModel& model, const LabeledImageBatch& batch, std::size_t batch_size,
                         std::uint64_t seed) {
    const Embeddings emb = embed(model, batch.flat(), batch_size, seed);
    return accuracy(emb.predictions, batch.y);
}

MetricsReport evaluate_run(const RunConfig& config, DsfModel& model, const RotProtocol& data,
                           std::vector<LossBreakdown> curve) {
    MetricsReport m;
    m.run_seed = config.seed;
    m.config = describe(config);
    m.loss_curve = std::move(curve);
    const Embeddings seen = embed(model, data.eval_seen.flat(), config.batch_size,
                                  derive_seed(config.seed, {kEvalStream, 0}));
    m.y_acc_seen = accuracy(seen.predictions, data.eval_seen.y);
    m.y_acc_unseen["±55"] = evaluate_accuracy(model, data.unseen_55, config.batch_size,
                                              derive_seed(config.seed, {kEvalStream, 1}));
    m.y_acc_unseen["±65"] = evaluate_accuracy(model, data.unseen_65, config.batch_size,
                                              derive_seed(config.seed, {kEvalStream, 2}));
    m.s_chance = 1.0 / static_cast<double>(data.eval_seen.angles.size());
    const ProbeResult probe = train_probe(seen.zp, data.eval_seen.s,
                                          derive_seed(config.seed, {kProbeStream}));
    m.s_probe_acc = probe.heldout_accuracy;
    return m;
}

const std::vector<int>& dilation_kappas() {
    static const std::vector<int> kKappas{-2, 2, 3, 4};
    return kKappas;
}

std::map<int, double> evaluate_dilation(const RunConfig& config, DsfModel& model,
                                        const LabeledImageBatch& dil) {
    std::map<int, double> out;
    for (int kappa : dilation_kappas()) {
        LabeledImageBatch morphed = dil;
        for (std::size_t i = 0; i < dil.size(); ++i) morphed.set_image(i, morph(dil.image(i), kappa));
        out[kappa] = evaluate_accuracy(model, morphed, config.batch_size,
                                       derive_seed(config.seed, {kEvalStream, 10 + static_cast<std::uint64_t>(kappa + 8)}));
    }
    return out;
}

// ---- commands -------------------------------------------------------------

void write_curve_csv(const std::filesystem::path& path, const std::vector<LossBreakdown>& curve) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << "epoch,total,pred_nll,recon_nll,comp_p,comp_n,hsic\n";
    for (std::size_t e = 0; e < curve.size(); ++e) {
        const auto& b = curve[e];
        os << e + 1 << ',' << format_double(b.total) << ',' << format_double(b.pred_nll) << ','
           << format_double(b.recon_nll) << ',' << format_double(b.comp_p) << ','
           << format_double(b.comp_n) << ',' << format_double(b.hsic) << '\n';
    }
    if (!os) throw IoError("write failed for " + path.string());
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << text;
    if (!os) throw IoError("write failed for " + path.string());
}

void ensure_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

RotProtocol require_protocol(const RunConfig& config) {
    const auto dir = config.resolved_data_dir();
    if (!std::filesystem::exists(dir / DatasetFiles::kTrain)) {
        throw IoError("no dataset in " + dir.string() + "; run 'dsf generate' first");
    }
    return read_protocol(dir);
}

// Trains into dir and writes checkpoint, curve, metrics and config snapshot.
MetricsReport train_into(const RunConfig& config, const RotProtocol& data,
                         const std::filesystem::path& dir, std::ostream& log) {
    ensure_dir(dir);
    std::vector<LossBreakdown> curve;
    DsfModel model = train_model(config, training_view(data.train), &curve,
                                 [&](std::size_t epoch, const LossBreakdown& b) {
                                     log << "epoch " << epoch << " total " << format_double(b.total)
                                         << " pred_nll " << format_double(b.pred_nll) << '\n';
                                 });
    const auto params = model.parameters();
    save_container(dir / kCheckpointFile, snapshot(params));
    write_curve_csv(dir / kCurveFile, curve);
    const MetricsReport metrics = evaluate_run(config, model, data, std::move(curve));
    write_text(dir / kMetricsFile, to_json(metrics));
    write_text(dir / kConfigFile, render_config(config));
    return metrics;
}

}  // namespace

void cmd_generate(const RunConfig& config, std::ostream& log) {
    const RotProtocol p = build_protocol(config);
    const auto dir = config.resolved_data_dir();
    write_protocol(p, dir);
    log << "train " << p.train.size() << "\n"
        << "eval-seen " << p.eval_seen.size() << "\n"
        << "unseen-55 " << p.unseen_55.size() << "\n"
        << "unseen-65 " << p.unseen_65.size() << "\n"
        << "dil-transfer " << p.dil_transfer.size() << "\n";
}

MetricsReport cmd_train(const RunConfig& config, std::ostream& log) {
    const RotProtocol data = require_protocol(config);
    const MetricsReport m = train_into(config, data, config.out, log);
    log << "y-acc-seen " << fixed3(m.y_acc_seen) << "\n";
    for (const auto& [k, v] : m.y_acc_unseen) log << "y-acc-unseen " << k << " " << fixed3(v) << "\n";
    log << "s-probe-acc " << fixed3(m.s_probe_acc) << " (chance " << fixed3(m.s_chance) << ")\n";
    return m;
}

std::vector<std::pair<double, double>> grid_cells(const RunConfig& config) {
    if (config.lambda_grid.empty()) throw ConfigError("lambda-grid must not be empty");
    std::vector<std::pair<double, double>> cells;
    if (config.objective.variant == Variant::dsf_e) {
        for (double l : config.lambda_grid) cells.emplace_back(l, config.objective.gamma);
        return cells;
    }
    if (config.gamma_grid.empty()) throw ConfigError("gamma-grid must not be empty");
    for (double l : config.lambda_grid) {
        for (double g : config.gamma_grid) cells.emplace_back(l, g);
    }
    return cells;
}

std::vector<GridCell> cmd_grid(const RunConfig& config, std::ostream& log) {
    const RotProtocol data = require_protocol(config);
    std::vector<GridCell> cells;
    for (const auto& [lambda, gamma] : grid_cells(config)) {
        RunConfig cell_config = config;
        cell_config.objective.lambda = lambda;
        cell_config.objective.gamma = gamma;
        GridCell cell{lambda, gamma, config.seed, false, {}, {}};
        const auto dir = config.out / ("lambda=" + format_double(lambda) + "_gamma=" + format_double(gamma));
        std::ostringstream cell_log;
        try {
            cell_config.out = dir;
            cell.metrics = train_into(cell_config, data, dir, cell_log);
            cell.ok = true;
        } catch (const Error& e) {
            cell.error = e.kind() + ": " + e.what();
        }
        log << "cell lambda=" << format_double(lambda) << " gamma=" << format_double(gamma) << " "
            << (cell.ok ? "ok y-acc-seen " + fixed3(cell.metrics.y_acc_seen) : "FAILED " + cell.error)
            << "\n";
        cells.push_back(std::move(cell));
    }
    std::vector<const GridCell*> ranked;
    for (const auto& c : cells) ranked.push_back(&c);
    std::stable_sort(ranked.begin(), ranked.end(), [](const GridCell* a, const GridCell* b) {
        if (a->ok != b->ok) return a->ok;
        return a->metrics.y_acc_seen > b->metrics.y_acc_seen;
    });
    std::ostringstream table;
    table << "rank,lambda,gamma,seed,y_acc_seen,s_probe_acc,status\n";
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        const GridCell& c = *ranked[i];
        table << i + 1 << ',' << format_double(c.lambda) << ',' << format_double(c.gamma) << ','
              << c.seed << ',' << (c.ok ? format_double(c.metrics.y_acc_seen) : "") << ','
              << (c.ok ? format_double(c.metrics.s_probe_acc) : "") << ','
              << (c.ok ? "ok" : "failed") << '\n';
    }
    ensure_dir(config.out);
    write_text(config.out / "leaderboard.csv", table.str());
    log << table.str();
    return cells;
}

DsfModel load_checkpoint(const RunConfig& config) {
    DsfModel model(config.objective, derive_seed(config.seed, {kInitStream}));
    const auto path = config.out / kCheckpointFile;
    if (!std::filesystem::exists(path)) throw IoError("no checkpoint at " + path.string());
    const auto params = model.parameters();
    restore(params, load_container(path));
    return model;
}

double cmd_probe(const RunConfig& config, std::ostream& log) {
    DsfModel model = load_checkpoint(config);
    const LabeledImageBatch seen = load_dataset(config.resolved_data_dir() / DatasetFiles::kEvalSeen);
    const Embeddings emb = embed(model, seen.flat(), config.batch_size,
                                 derive_seed(config.seed, {kEvalStream, 0}));
    const double chance = 1.0 / static_cast<double>(seen.angles.size());
    const double acc = train_probe(emb.zp, seen.s, derive_seed(config.seed, {kProbeStream})).heldout_accuracy;
    log << "s-probe-acc zp " << fixed3(acc) << "\n";
    if (config.objective.has_nuisance_code()) {
        const double zn_acc =
            train_probe(emb.zn, seen.s, derive_seed(config.seed, {kProbeStream})).heldout_accuracy;
        log << "s-probe-acc zn " << fixed3(zn_acc) << "\n";
    }
    log << "chance " << fixed3(chance) << "\n";
    return acc;
}

void cmd_eval(const RunConfig& config, std::ostream& log) {
    DsfModel model = load_checkpoint(config);
    const RotProtocol data = require_protocol(config);
    nlohmann::ordered_json j;
    const std::pair<const char*, const LabeledImageBatch*> splits[] = {
        {"eval-seen", &data.eval_seen}, {"unseen-55", &data.unseen_55}, {"unseen-65", &data.unseen_65}};
    std::uint64_t k = 0;
    for (const auto& [name, batch] : splits) {
        const double acc = evaluate_accuracy(model, *batch, config.batch_size,
                                             derive_seed(config.seed, {kEvalStream, k++}));
        j["y-acc"][name] = acc;
        log << "y-acc " << name << " " << fixed3(acc) << "\n";
    }
    for (const auto& [kappa, acc] : evaluate_dilation(config, model, data.dil_transfer)) {
        j["y-acc-dil"][std::to_string(kappa)] = acc;
        log << "y-acc kappa " << kappa << " " << fixed3(acc) << "\n";
    }
    ensure_dir(config.out);
    write_text(config.out / "eval.json", j.dump(2) + "\n");
}

void cmd_export(const RunConfig& config, std::ostream& log) {
    DsfModel model = load_checkpoint(config);
    const LabeledImageBatch seen = load_dataset(config.resolved_data_dir() / DatasetFiles::kEvalSeen);
    const auto path = config.out / "embeddings.csv";
    export_embeddings(model, seen, path, config.batch_size, derive_seed(config.seed, {kEvalStream, 0}));
    log << "wrote " << seen.size() << " rows to " << path.string() << "\n";
}

bool cmd_micheck(const RunConfig& config, std::ostream& log) {
    Rng rng(derive_seed(config.seed, {7}));
    std::size_t held = 0;
    constexpr std::size_t kTrials = 200;
    constexpr double kTol = 1e-12;
    for (std::size_t t = 0; t < kTrials; ++t) {
        held += mi_identity_check(random_factorized_joint(rng), kTol).passed;
    }
    log << held << "/" << kTrials << " identities hold (tol 1e-12)\n";

    const double q = 0.25;
    // x uniform on two bits, zp = first bit, zn = second bit.
    std::vector<double> bits(4 * 2 * 2, 0.0);
    for (std::size_t x = 0; x < 4; ++x) bits[(x * 2 + (x >> 1)) * 2 + (x & 1)] = q;
    const auto independent = mi_identity_check(DiscreteJoint(4, 2, 2, bits), kTol);
    // zp = zn = x, x uniform binary.
    const auto copies = mi_identity_check(DiscreteJoint(2, 2, 2, {0.5, 0, 0, 0, 0, 0, 0, 0.5}), kTol);
    log << "independent bits: I(zp:zn) = " << format_double(independent.i_zp_zn) << " "
        << (independent.passed ? "pass" : "FAIL") << "\n";
    log << "copies: I(zp:zn) = " << format_double(copies.i_zp_zn) << " "
        << (copies.passed ? "pass" : "FAIL") << "\n";
    return held == kTrials && independent.passed && copies.passed;
}

}  // namespace dsf
