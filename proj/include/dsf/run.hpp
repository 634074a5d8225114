#pragma once

// Run configuration, the training loop, and the command implementations
// behind the dsf command-line tool.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "dsf/data.hpp"
#include "dsf/eval.hpp"
#include "dsf/objectives.hpp"

namespace dsf {

struct RunConfig {
    ObjectiveConfig objective;
    bool zn_dim_set = false;  // otherwise 0 for dsf-e and 32 for the others

    std::uint64_t seed = 1;
    std::size_t epochs = 30;
    std::size_t batch_size = 128;
    double learning_rate = 1e-4;
    double weight_decay = 1e-4;

    std::string dataset = "glyphs";  // "glyphs" or "idx"
    std::size_t n_per_class = 1000;  // glyph train split size is n_per_class x classes
    GlyphSpec glyphs;
    std::string idx_images;
    std::string idx_labels;
    ProtocolSizes sizes;

    std::filesystem::path out = "dsf-out";
    std::filesystem::path data_dir;  // defaults to out

    std::vector<double> lambda_grid{1e-4, 1e-3, 1e-2, 1e-1};
    std::vector<double> gamma_grid{1e-4, 1e-3, 1e-2, 1e-1};

    std::filesystem::path resolved_data_dir() const { return data_dir.empty() ? out : data_dir; }
    // Resolves derived values and checks invariants; throws ConfigError.
    void finalize();
};

// Applies one `key = value` setting; unknown keys and bad values throw ConfigError.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);

// Parses `key = value` lines with `#` comments into config; errors name the line.
void parse_config_text(RunConfig& config, const std::string& text);
void load_config_file(RunConfig& config, const std::filesystem::path& path);

// Every setting as text, the snapshot stored in metrics and config.txt.
std::map<std::string, std::string> describe(const RunConfig& config);
std::string render_config(const RunConfig& config);

// ---- datasets -------------------------------------------------------------

struct DatasetFiles {
    static constexpr const char* kTrain = "train.dsf";
    static constexpr const char* kEvalSeen = "eval_seen.dsf";
    static constexpr const char* kUnseen55 = "unseen_55.dsf";
    static constexpr const char* kUnseen65 = "unseen_65.dsf";
    static constexpr const char* kDilTransfer = "dil_transfer.dsf";
};

RotProtocol build_protocol(const RunConfig& config);
void write_protocol(const RotProtocol& protocol, const std::filesystem::path& dir);
RotProtocol read_protocol(const std::filesystem::path& dir);

// Drops nuisance labels: the only view of data the training loop receives.
TrainingBatch training_view(const LabeledImageBatch& batch);

// ---- training -------------------------------------------------------------

using EpochCallback = std::function<void(std::size_t epoch, const LossBreakdown&)>;

// Trains the configured variant on images and targets only.
DsfModel train_model(const RunConfig& config, const TrainingBatch& train,
                     std::vector<LossBreakdown>* curve = nullptr,
                     const EpochCallback& on_epoch = {});

double evaluate_accuracy(DsfModel& model, const LabeledImageBatch& batch, std::size_t batch_size,
                         std::uint64_t seed);

// y accuracy on seen/unseen splits, s probe on eval-seen zp, chance level.
MetricsReport evaluate_run(const RunConfig& config, DsfModel& model, const RotProtocol& data,
                           std::vector<LossBreakdown> curve);

// y accuracy on dil_transfer after morphing with each kappa in {-2, 2, 3, 4}.
std::map<int, double> evaluate_dilation(const RunConfig& config, DsfModel& model,
                                        const LabeledImageBatch& dil);

const std::vector<int>& dilation_kappas();

// ---- commands -------------------------------------------------------------

struct GridCell {
    double lambda = 0.0;
    double gamma = 0.0;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    MetricsReport metrics;
};

void cmd_generate(const RunConfig& config, std::ostream& log);
MetricsReport cmd_train(const RunConfig& config, std::ostream& log);
std::vector<GridCell> cmd_grid(const RunConfig& config, std::ostream& log);
double cmd_probe(const RunConfig& config, std::ostream& log);
void cmd_eval(const RunConfig& config, std::ostream& log);
void cmd_export(const RunConfig& config, std::ostream& log);
// Returns true when every identity held.
bool cmd_micheck(const RunConfig& config, std::ostream& log);

// Grid cells actually run for a config: (λ, γ) pairs, γ fixed for dsf-e.
std::vector<std::pair<double, double>> grid_cells(const RunConfig& config);

constexpr const char* kCheckpointFile = "checkpoint.dsf";
constexpr const char* kCurveFile = "curve.csv";
constexpr const char* kMetricsFile = "metrics.json";
constexpr const char* kConfigFile = "config.txt";

void write_curve_csv(const std::filesystem::path& path, const std::vector<LossBreakdown>& curve);
DsfModel load_checkpoint(const RunConfig& config);

}  // namespace dsf
