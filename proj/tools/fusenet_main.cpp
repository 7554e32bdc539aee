// fusenet command-line interface: split / train / fuse / eval / metrics.
//
// Exit codes: 0 success, 2 usage or configuration error, 3 I/O or data error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fusenet/fusenet.hpp"

namespace {

using nlohmann::json;

struct RunSettings {
    std::string manifest;
    fusenet::TrainConfig train;
    fusenet::LossConfig loss;
    std::string percep_weights;  // empty -> seeded-random net
    std::uint64_t percep_seed = 1337;
};

json default_config_json() {
    return json{{"manifest", ""},
                {"learning_rate", 0.0001},
                {"epochs", 100},
                {"batch_size", 4},
                {"seed", 0},
                {"checkpoint_dir", "runs"},
                {"crop_size", 0},
                {"ref_mode", "self"},
                {"lambda1", 0.2},
                {"lambda2", 0.2},
                {"percep_layer", 3},
                {"ablate_to_mse", false},
                {"percep_weights", ""},
                {"percep_seed", 1337}};
}

void merge_known_keys(json& base, const json& update, const std::string& source) {
    for (const auto& [key, value] : update.items()) {
        if (!base.contains(key)) {
            throw fusenet::ConfigError("unknown config key '" + key + "' in " + source);
        }
        base[key] = value;
    }
}

json parse_override(const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw fusenet::UsageError("override '" + kv + "' is not of the form key=value");
    }
    const std::string key = kv.substr(0, eq);
    const std::string value = kv.substr(eq + 1);
    json out;
    // Interpret the value as JSON when possible so numbers and booleans
    // keep their types; anything else stays a string.
    try {
        out[key] = json::parse(value);
    } catch (const json::exception&) {
        out[key] = value;
    }
    return out;
}

RunSettings settings_from_json(const json& j) {
    RunSettings s;
    try {
        s.manifest = j.at("manifest").get<std::string>();
        s.train.learning_rate = j.at("learning_rate").get<double>();
        s.train.epochs = j.at("epochs").get<std::size_t>();
        s.train.batch_size = j.at("batch_size").get<std::size_t>();
        s.train.seed = j.at("seed").get<std::uint64_t>();
        s.train.checkpoint_dir = j.at("checkpoint_dir").get<std::string>();
        s.train.crop_size = j.at("crop_size").get<std::size_t>();
        const std::string ref_mode = j.at("ref_mode").get<std::string>();
        if (ref_mode == "self") {
            s.train.ref_mode = fusenet::RefMode::self;
        } else if (ref_mode == "both") {
            s.train.ref_mode = fusenet::RefMode::both;
        } else {
            throw fusenet::ConfigError("ref_mode must be 'self' or 'both', got '" + ref_mode + "'");
        }
        s.loss.lambda1 = j.at("lambda1").get<double>();
        s.loss.lambda2 = j.at("lambda2").get<double>();
        s.loss.percep_layer = j.at("percep_layer").get<int>();
        s.loss.ablate_to_mse = j.at("ablate_to_mse").get<bool>();
        s.percep_weights = j.at("percep_weights").get<std::string>();
        s.percep_seed = j.at("percep_seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw fusenet::ConfigError(std::string("config value has the wrong type: ") + e.what());
    }
    if (s.manifest.empty()) throw fusenet::ConfigError("config needs a 'manifest' path");
    return s;
}

int cmd_split(const std::string& root, std::size_t n_test, double val_frac, std::uint64_t seed,
              const std::string& out_path) {
    fusenet::PairManifest manifest = fusenet::scan_pairs(root);
    manifest = fusenet::make_splits(manifest, n_test, val_frac, seed);
    fusenet::save_manifest(manifest, out_path);
    std::printf("wrote %s: %zu train / %zu val / %zu test\n", out_path.c_str(),
                manifest.count(fusenet::Split::train), manifest.count(fusenet::Split::val),
                manifest.count(fusenet::Split::test));
    return 0;
}

int cmd_train(const std::string& config_path, bool ablate_mse, const std::vector<std::string>& overrides) {
    json cfg = default_config_json();
    {
        std::ifstream in(config_path);
        if (!in) throw fusenet::IoError("cannot read config '" + config_path + "'");
        json file_cfg;
        try {
            in >> file_cfg;
        } catch (const json::exception& e) {
            throw fusenet::ConfigError("config '" + config_path + "' is not valid JSON: " + e.what());
        }
        merge_known_keys(cfg, file_cfg, "'" + config_path + "'");
    }
    for (const auto& kv : overrides) merge_known_keys(cfg, parse_override(kv), "--set override");

    RunSettings s = settings_from_json(cfg);
    if (ablate_mse) s.loss.ablate_to_mse = true;

    const fusenet::PairManifest manifest = fusenet::load_manifest(s.manifest);

    std::optional<fusenet::PerceptualFeatureNet<float>> percep;
    if (!s.loss.ablate_to_mse && s.loss.lambda2 != 0.0) {
        if (s.percep_weights.empty()) {
            percep.emplace(s.percep_seed);
        } else {
            percep.emplace(s.percep_weights);
        }
    }

    const fusenet::TrainResult result =
        fusenet::train<float>(manifest, s.train, s.loss, percep ? &*percep : nullptr);
    std::printf("trained %zu epochs; best val loss %.6e\n", result.curve.size(), result.best_val_loss);
    std::printf("checkpoints: %s, %s\nloss curve: %s\n", result.best_checkpoint.c_str(),
                result.last_checkpoint.c_str(), result.loss_csv.c_str());
    return 0;
}

int cmd_fuse(const std::string& model_path, const std::string& input_a, const std::string& input_b,
             const std::string& strategy_name, const std::string& out_path) {
    const fusenet::FusionStrategy strategy = fusenet::parse_strategy(strategy_name);
    const fusenet::FusionModel<float> model = fusenet::load_model<float>(model_path);
    const auto [a, b] = fusenet::load_pair(input_a, input_b);
    fusenet::FusionWeights weights;
    const fusenet::Image fused = fusenet::fuse_pair(model, a, b, strategy, &weights);
    if (weights.degenerate) {
        std::fprintf(stderr, "warning: degenerate feature aggregates; fell back to weights (0.5, 0.5)\n");
    }
    fusenet::save_png(fused, out_path);
    std::printf("wrote %s (w1=%.6f, w2=%.6f)\n", out_path.c_str(), weights.w1, weights.w2);
    return 0;
}

int cmd_eval(const std::string& model_path, const std::string& manifest_path, const std::string& strategy_name,
             const std::string& report_path, const std::string& plot_path) {
    const fusenet::FusionStrategy strategy = fusenet::parse_strategy(strategy_name);
    const fusenet::PairManifest manifest = fusenet::load_manifest(manifest_path);
    if (manifest.count(fusenet::Split::test) == 0) {
        throw fusenet::UsageError("manifest '" + manifest_path + "' has an empty test split");
    }
    const fusenet::FusionModel<float> model = fusenet::load_model<float>(model_path);
    const fusenet::BatchEvaluation eval = fusenet::evaluate_batch(manifest, model, strategy);
    fusenet::write_report_csv(eval, report_path);
    if (!plot_path.empty()) fusenet::plot::save_metric_bars(eval.mean, plot_path);
    std::printf("%s\n%s\n", fusenet::kReportHeader, fusenet::report_row(eval.mean).c_str());
    return 0;
}

int cmd_metrics(const std::string& fused_path, const std::string& src_a_path, const std::string& src_b_path) {
    const fusenet::Image fused = fusenet::load_png(fused_path);
    const fusenet::Image a = fusenet::load_png(src_a_path);
    const fusenet::Image b = fusenet::load_png(src_b_path);
    if (fused.height != a.height || fused.width != a.width || fused.height != b.height ||
        fused.width != b.width) {
        throw fusenet::ValidationError("metrics: the three images must share dimensions");
    }
    const std::string stem = std::filesystem::path(fused_path).stem().string();
    std::printf("%s\n", fusenet::report_row(fusenet::compute_metrics(stem, fused, a, b)).c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multimodal image fusion: dilated residual attention features with softmax/nuclear-norm fusion"};
    app.require_subcommand(1);

    auto* split = app.add_subcommand("split", "Scan <root>/a and <root>/b for pairs and assign splits");
    std::string split_root, split_out = "manifest.json";
    std::size_t split_n_test = 20;
    double split_val_frac = 0.2;
    std::uint64_t split_seed = 0;
    split->add_option("--root", split_root, "Data root containing a/ and b/")->required();
    split->add_option("--n-test", split_n_test, "Number of test pairs");
    split->add_option("--val-frac", split_val_frac, "Validation fraction of the remainder");
    split->add_option("--seed", split_seed, "Shuffle seed");
    split->add_option("--out", split_out, "Output manifest path");

    auto* train = app.add_subcommand("train", "Train the extractor and reconstructor");
    std::string train_config;
    bool train_ablate = false;
    std::vector<std::string> train_overrides;
    train->add_option("--config", train_config, "JSON config file")->required();
    train->add_flag("--ablate-mse", train_ablate, "Use only the MSE term of the loss");
    train->add_option("--set", train_overrides, "Override config keys as key=value (repeatable)");

    auto* fuse = app.add_subcommand("fuse", "Fuse one co-registered pair into an output image");
    std::string fuse_model, fuse_a, fuse_b, fuse_out, fuse_strategy = "sfnn-max";
    fuse->add_option("--model", fuse_model, "Checkpoint file")->required();
    fuse->add_option("--input-a", fuse_a, "First source image")->required();
    fuse->add_option("--input-b", fuse_b, "Second source image")->required();
    fuse->add_option("--strategy", fuse_strategy, "Fusion strategy (" + fusenet::strategy_grammar() + ")");
    fuse->add_option("--out", fuse_out, "Output PNG path")->required();

    auto* eval = app.add_subcommand("eval", "Fuse and score every pair in the manifest's test split");
    std::string eval_model, eval_manifest, eval_report, eval_plot, eval_strategy = "sfnn-max";
    eval->add_option("--model", eval_model, "Checkpoint file")->required();
    eval->add_option("--manifest", eval_manifest, "Manifest JSON")->required();
    eval->add_option("--strategy", eval_strategy, "Fusion strategy (" + fusenet::strategy_grammar() + ")");
    eval->add_option("--report", eval_report, "Output CSV path")->required();
    eval->add_option("--plot", eval_plot, "Optional PNG bar chart of the aggregate metrics");

    auto* metrics = app.add_subcommand("metrics", "Score one fused image against its two sources");
    std::string m_fused, m_a, m_b;
    metrics->add_option("--fused", m_fused, "Fused image")->required();
    metrics->add_option("--src-a", m_a, "First source image")->required();
    metrics->add_option("--src-b", m_b, "Second source image")->required();

    try {
        app.parse(argc, argv);
        if (split->parsed()) return cmd_split(split_root, split_n_test, split_val_frac, split_seed, split_out);
        if (train->parsed()) return cmd_train(train_config, train_ablate, train_overrides);
        if (fuse->parsed()) return cmd_fuse(fuse_model, fuse_a, fuse_b, fuse_strategy, fuse_out);
        if (eval->parsed()) return cmd_eval(eval_model, eval_manifest, eval_strategy, eval_report, eval_plot);
        if (metrics->parsed()) return cmd_metrics(m_fused, m_a, m_b);
        return 2;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const fusenet::UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const fusenet::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const fusenet::ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const fusenet::ShapeError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const fusenet::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
}
