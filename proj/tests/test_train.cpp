#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "fusenet/train.hpp"
#include "support/synthetic.hpp"
#include "support/tempdir.hpp"

using fusenet::LossConfig;
using fusenet::PairManifest;
using fusenet::Split;
using fusenet::TrainConfig;
using testsupport::TempDir;

namespace {

/// Writes n synthetic pairs of the given size and returns a manifest with
/// n_test/val_fraction splits applied.
PairManifest build_corpus(const TempDir& tmp, std::size_t n, std::size_t size, std::size_t n_test,
                          double val_fraction, std::uint64_t seed) {
    namespace fs = std::filesystem;
    fs::create_directories(tmp.path() / "a");
    fs::create_directories(tmp.path() / "b");
    for (std::size_t i = 0; i < n; ++i) {
        const auto [a, b] = testsupport::make_phantom_pair(seed * 1000 + i, size);
        char name[32];
        std::snprintf(name, sizeof(name), "p%02zu.png", i);
        fusenet::save_png(a, (tmp.path() / "a" / name).string());
        fusenet::save_png(b, (tmp.path() / "b" / name).string());
    }
    return fusenet::make_splits(fusenet::scan_pairs(tmp.str()), n_test, val_fraction, seed);
}

}  // namespace

TEST_CASE("a tiny run trains, logs, and reproduces bit-identically") {
    TempDir tmp("train");
    const PairManifest manifest = build_corpus(tmp, 4, 16, 1, 0.4, 5);

    TrainConfig cfg;
    cfg.learning_rate = 1e-3;
    cfg.epochs = 3;
    cfg.batch_size = 2;
    cfg.seed = 9;
    cfg.checkpoint_dir = tmp.str("run1");

    LossConfig loss;  // full composite loss
    fusenet::PerceptualFeatureNet<float> percep(77);

    const auto r1 = fusenet::train<float>(manifest, cfg, loss, &percep);
    REQUIRE(r1.curve.size() == 3);
    CHECK(std::filesystem::exists(r1.best_checkpoint));
    CHECK(std::filesystem::exists(r1.last_checkpoint));
    CHECK(std::filesystem::exists(r1.loss_csv));

    std::ifstream csv(r1.loss_csv);
    std::string header;
    std::getline(csv, header);
    CHECK(header == "epoch,train_loss,val_loss");
    std::size_t rows = 0;
    for (std::string line; std::getline(csv, line);) {
        if (!line.empty()) ++rows;
    }
    CHECK(rows == 3);

    cfg.checkpoint_dir = tmp.str("run2");
    const auto r2 = fusenet::train<float>(manifest, cfg, loss, &percep);
    REQUIRE(r2.curve.size() == r1.curve.size());
    for (std::size_t e = 0; e < r1.curve.size(); ++e) {
        REQUIRE(r1.curve[e].train_loss == r2.curve[e].train_loss);
        REQUIRE(r1.curve[e].val_loss == r2.curve[e].val_loss);
    }

    // the saved checkpoint restores into a working model
    fusenet::FusionModel<float> model = fusenet::load_model<float>(r1.best_checkpoint);
    const auto [a, b] = testsupport::make_phantom_pair(123, 16);
    CHECK(fusenet::extract_features(model, a).all_finite());
}

TEST_CASE("validation is computed with frozen parameters") {
    TempDir tmp("train");
    const PairManifest manifest = build_corpus(tmp, 4, 16, 1, 0.4, 6);

    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.seed = 1;
    cfg.checkpoint_dir = tmp.str("run");
    LossConfig loss;
    loss.ablate_to_mse = true;  // keep it cheap

    fusenet::FusionModel<float> model;
    const auto result = fusenet::train<float>(manifest, cfg, loss, nullptr, &model);

    // recomputing the final val loss from the returned model matches the log
    double val = 0.0;
    std::size_t count = 0;
    for (const auto* e : manifest.in_split(Split::val)) {
        const auto [a, b] = fusenet::load_pair(e->path_a, e->path_b);
        for (const fusenet::Image* img : {&a, &b}) {
            const auto in = fusenet::Variable<float>::constant(fusenet::image_to_tensor<float>(*img));
            const auto out = model.reconstructor(model.extractor(in));
            val += fusenet::total_loss(out, {in}, loss, nullptr)
                       .value()[0];
            ++count;
        }
    }
    CHECK(result.curve.back().val_loss == Catch::Approx(val / count).margin(1e-7));
}

TEST_CASE("ref_mode both scores against the pair's second modality") {
    TempDir tmp("train");
    const PairManifest manifest = build_corpus(tmp, 3, 16, 1, 0.5, 7);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.seed = 2;
    cfg.checkpoint_dir = tmp.str("run");
    cfg.ref_mode = fusenet::RefMode::both;
    LossConfig loss;
    loss.ablate_to_mse = true;
    const auto result = fusenet::train<float>(manifest, cfg, loss, nullptr);
    CHECK(result.curve.size() == 1);
    CHECK(result.curve[0].train_loss > 0.0);
}

TEST_CASE("configuration errors are rejected before any output") {
    TempDir tmp("train");
    PairManifest manifest = build_corpus(tmp, 3, 16, 1, 0.5, 8);
    for (auto& e : manifest.entries) {
        if (e.split == Split::train) e.split = Split::test;
    }
    TrainConfig cfg;
    cfg.checkpoint_dir = tmp.str("never");
    LossConfig loss;
    CHECK_THROWS_AS(fusenet::train<float>(manifest, cfg, loss, nullptr), fusenet::ConfigError);
    CHECK_FALSE(std::filesystem::exists(cfg.checkpoint_dir));

    // lambda2 nonzero without a net
    PairManifest ok = build_corpus(tmp, 3, 16, 1, 0.5, 9);
    CHECK_THROWS_AS(fusenet::train<float>(ok, cfg, loss, nullptr), fusenet::ConfigError);
}

TEST_CASE("center crops flow through training") {
    TempDir tmp("train");
    const PairManifest manifest = build_corpus(tmp, 3, 32, 1, 0.5, 10);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.seed = 3;
    cfg.crop_size = 16;
    cfg.checkpoint_dir = tmp.str("run");
    LossConfig loss;
    loss.ablate_to_mse = true;
    CHECK(fusenet::train<float>(manifest, cfg, loss, nullptr).curve.size() == 1);
}
