// Self-reconstruction training of extractor + reconstructor. The fusion
// module takes no part in training: each image passes through
// extract -> reconstruct and is scored against its own reference(s).
#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "fusenet/checkpoint.hpp"
#include "fusenet/common.hpp"
#include "fusenet/dataio.hpp"
#include "fusenet/image.hpp"
#include "fusenet/losses.hpp"
#include "fusenet/network.hpp"
#include "fusenet/optim.hpp"

namespace fusenet {

/// How many references each reconstruction is scored against: Self trains
/// image -> itself (the default); Both also includes the pair's other
/// modality as a second reference.
enum class RefMode { self, both };

struct TrainConfig {
    double learning_rate = 0.0001;
    std::size_t epochs = 100;
    std::size_t batch_size = 4;
    std::uint64_t seed = 0;
    std::string checkpoint_dir = "runs";
    std::size_t crop_size = 0;  // 0 = full images; otherwise center crop
    RefMode ref_mode = RefMode::self;
};

struct EpochStats {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct TrainResult {
    std::vector<EpochStats> curve;
    std::string best_checkpoint;
    std::string last_checkpoint;
    std::string loss_csv;
    double best_val_loss = 0.0;
};

namespace detail {

struct TrainSample {
    Image image;
    const Image* other = nullptr;  // the pair's second modality, for RefMode::both
};

inline std::vector<std::pair<Image, Image>> load_split_pairs(const PairManifest& manifest, Split split,
                                                             std::size_t crop_size) {
    std::vector<std::pair<Image, Image>> pairs;
    for (const PairEntry* e : manifest.in_split(split)) {
        auto [a, b] = load_pair(e->path_a, e->path_b);
        if (crop_size) {
            a = center_crop(a, crop_size);
            b = center_crop(b, crop_size);
        }
        pairs.emplace_back(std::move(a), std::move(b));
    }
    return pairs;
}

}  // namespace detail

/// Runs the training loop and writes per-epoch losses to
/// <checkpoint_dir>/loss.csv plus best.ckpt / last.ckpt. Deterministic for a
/// fixed config: identical reruns produce bit-identical loss curves.
template <class S>
TrainResult train(const PairManifest& manifest, const TrainConfig& train_cfg, const LossConfig& loss_cfg,
                  const PerceptualFeatureNet<S>* percep_net, FusionModel<S>* model_out = nullptr) {
    if (train_cfg.batch_size == 0) throw ConfigError("batch_size must be positive");
    if (train_cfg.epochs == 0) throw ConfigError("epochs must be positive");
    if (loss_cfg.lambda2 != 0.0 && !loss_cfg.ablate_to_mse && percep_net == nullptr) {
        throw ConfigError("training with lambda2 != 0 needs a perceptual feature net");
    }

    // Everything is loaded and validated before any output file is touched.
    const auto train_pairs = detail::load_split_pairs(manifest, Split::train, train_cfg.crop_size);
    const auto val_pairs = detail::load_split_pairs(manifest, Split::val, train_cfg.crop_size);
    if (train_pairs.empty()) throw ConfigError("training split is empty");

    // Both modalities of a pair are independent self-reconstruction samples.
    std::vector<detail::TrainSample> samples;
    for (const auto& [a, b] : train_pairs) {
        samples.push_back({a, &b});
        samples.push_back({b, &a});
    }
    std::vector<const Image*> val_images;
    for (const auto& [a, b] : val_pairs) {
        val_images.push_back(&a);
        val_images.push_back(&b);
    }

    for (const auto& s : samples) check_extractor_input<S>(s.image.height, s.image.width);

    FusionModel<S> model(train_cfg.seed);
    std::vector<Variable<S>> params;
    for (const auto& [name, p] : model.named_parameters()) params.push_back(p);
    AdamOptimizer<S> adam(params, train_cfg.learning_rate);

    namespace fs = std::filesystem;
    fs::create_directories(train_cfg.checkpoint_dir);
    const std::string csv_path = (fs::path(train_cfg.checkpoint_dir) / "loss.csv").string();
    const std::string best_path = (fs::path(train_cfg.checkpoint_dir) / "best.ckpt").string();
    const std::string last_path = (fs::path(train_cfg.checkpoint_dir) / "last.ckpt").string();
    std::ofstream csv(csv_path);
    if (!csv) throw IoError("cannot write '" + csv_path + "'");
    csv << "epoch,train_loss,val_loss\n";

    const std::uint64_t config_hash =
        fnv1a64(std::to_string(train_cfg.learning_rate) + "," + std::to_string(train_cfg.epochs) + "," +
                std::to_string(train_cfg.batch_size) + "," + std::to_string(train_cfg.seed) + "," +
                std::to_string(loss_cfg.lambda1) + "," + std::to_string(loss_cfg.lambda2) + "," +
                std::to_string(loss_cfg.percep_layer) + "," + std::to_string(loss_cfg.ablate_to_mse));

    auto sample_loss = [&](const Image& img, const Image* other, bool with_grad, double scale) {
        const Variable<S> input = Variable<S>::constant(image_to_tensor<S>(img));
        std::vector<Variable<S>> refs{input};
        if (train_cfg.ref_mode == RefMode::both && other != nullptr) {
            refs.push_back(Variable<S>::constant(image_to_tensor<S>(*other)));
        }
        const Variable<S> out = model.reconstructor(model.extractor(input));
        const Variable<S> loss = total_loss(out, refs, loss_cfg, percep_net);
        if (with_grad) backward(loss, static_cast<S>(scale));
        return static_cast<double>(loss.value()[0]);
    };

    Rng shuffle_rng(train_cfg.seed ^ 0x9e3779b97f4a7c15ull);
    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    TrainResult result;
    result.loss_csv = csv_path;
    result.best_checkpoint = best_path;
    result.last_checkpoint = last_path;
    double best_val = std::numeric_limits<double>::infinity();

    for (std::size_t epoch = 1; epoch <= train_cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double train_sum = 0.0;
        std::size_t done = 0;
        while (done < order.size()) {
            const std::size_t batch = std::min(train_cfg.batch_size, order.size() - done);
            adam.zero_grad();
            for (std::size_t k = 0; k < batch; ++k) {
                const auto& s = samples[order[done + k]];
                train_sum += sample_loss(s.image, s.other, true, 1.0 / static_cast<double>(batch));
            }
            adam.step();
            done += batch;
        }
        const double train_loss = train_sum / static_cast<double>(order.size());

        // Validation runs with frozen parameters and no graph.
        double val_loss = 0.0;
        if (!val_images.empty()) {
            for (const Image* img : val_images) val_loss += sample_loss(*img, nullptr, false, 0.0);
            val_loss /= static_cast<double>(val_images.size());
        }

        result.curve.push_back({epoch, train_loss, val_loss});
        char line[128];
        std::snprintf(line, sizeof(line), "%zu,%.9e,%.9e\n", epoch, train_loss, val_loss);
        csv << line;
        csv.flush();

        const double selector = val_images.empty() ? train_loss : val_loss;
        if (selector < best_val) {
            best_val = selector;
            save_checkpoint(snapshot(model, {static_cast<std::int64_t>(epoch), selector, config_hash}), best_path);
        }
    }

    save_checkpoint(snapshot(model, {static_cast<std::int64_t>(train_cfg.epochs),
                                     result.curve.back().train_loss, config_hash}),
                    last_path);
    result.best_val_loss = best_val;
    if (model_out) *model_out = model;
    return result;
}

}  // namespace fusenet
