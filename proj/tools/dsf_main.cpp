// dsf: generate data, train, grid-search, probe, evaluate and export.
//
// Settings come from --config, then --set key=value pairs, then the named
// flags, later sources overriding earlier ones. Errors print one line
//   error: <kind>: <message>
// and exit nonzero.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dsf/errors.hpp"
#include "dsf/eval.hpp"
#include "dsf/run.hpp"

namespace {

struct Flags {
    std::string config_path;
    std::vector<std::string> settings;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> variant;
    std::optional<double> lambda;
    std::optional<double> gamma;
    std::optional<std::string> out;
};

dsf::RunConfig resolve(const Flags& f) {
    dsf::RunConfig config;
    if (!f.config_path.empty()) dsf::load_config_file(config, f.config_path);
    for (const auto& kv : f.settings) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw dsf::ConfigError("--set expects key=value, got '" + kv + "'");
        dsf::apply_setting(config, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (f.seed) config.seed = *f.seed;
    if (f.variant) config.objective.variant = dsf::parse_variant(*f.variant);
    if (f.lambda) config.objective.lambda = *f.lambda;
    if (f.gamma) config.objective.gamma = *f.gamma;
    if (f.out) config.out = *f.out;
    config.finalize();
    return config;
}

std::string one_line(std::string s) {
    for (char& c : s) {
        if (c == '\n' || c == '\r') c = ' ';
    }
    return s;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Disentangled sufficient-feature learning with exact-information echo channels"};
    app.require_subcommand(1);
    Flags flags;

    const std::pair<const char*, const char*> commands[] = {
        {"generate", "Render the rotated glyph protocol (or split IDX data) into dataset files"},
        {"train", "Train one model; writes checkpoint, curve.csv, metrics.json"},
        {"grid", "Train every (lambda, gamma) grid cell and write leaderboard.csv"},
        {"probe", "Train a nuisance probe on a checkpoint's representation"},
        {"eval", "Target accuracy on every split and on morphed transfer data"},
        {"export", "Write embeddings.csv for the eval-seen split"},
        {"micheck", "Check the mutual-information identities on random discrete joints"},
    };
    for (const auto& [name, help] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", flags.config_path, "key = value settings file");
        sub->add_option("--set", flags.settings, "Override one setting, key=value (repeatable)");
        sub->add_option("--seed", flags.seed, "Run seed");
        sub->add_option("--variant", flags.variant, "dsf-e, dsf-c or dsf-h");
        sub->add_option("--lambda", flags.lambda, "Compression multiplier");
        sub->add_option("--gamma", flags.gamma, "Nuisance multiplier");
        sub->add_option("--out", flags.out, "Output directory");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: usage: " << one_line(e.what()) << "\n";
        return 2;
    }

    try {
        const dsf::RunConfig config = resolve(flags);
        const std::string cmd = app.get_subcommands().front()->get_name();
        if (cmd == "generate") dsf::cmd_generate(config, std::cout);
        else if (cmd == "train") dsf::cmd_train(config, std::cout);
        else if (cmd == "grid") dsf::cmd_grid(config, std::cout);
        else if (cmd == "probe") dsf::cmd_probe(config, std::cout);
        else if (cmd == "eval") dsf::cmd_eval(config, std::cout);
        else if (cmd == "export") dsf::cmd_export(config, std::cout);
        else if (cmd == "micheck") return dsf::cmd_micheck(config, std::cout) ? 0 : 1;
    } catch (const dsf::Error& e) {
        std::cerr << "error: " << e.kind() << ": " << one_line(e.what()) << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << one_line(e.what()) << "\n";
        return 1;
    }
    return 0;
}
