#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "nfseg/errors.hpp"
#include "nfseg/potsdam.hpp"
#include "nfseg/trainer.hpp"

using namespace nfseg;
namespace fs = std::filesystem;

namespace {

// small but real end-to-end configuration
ExperimentConfig micro_config() {
    ExperimentConfig cfg;
    cfg.strategy = Strategy::concat;
    cfg.code_source = CodeSource::global;
    cfg.hidden = 16;
    cfg.heads = 4;
    cfg.stem_width = 4;
    cfg.stage_widths = {8, 16, 16};
    cfg.dataset = "synthetic";
    cfg.train_count = 6;
    cfg.val_count = 2;
    cfg.test_count = 2;
    cfg.image_size = 32;
    cfg.batch_size = 3;
    cfg.points = 32;
    cfg.max_epochs = 2;
    cfg.patience = 5;
    cfg.seed = 11;
    return cfg;
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("nfseg_harness_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("config defaults carry the published training values") {
    ExperimentConfig cfg;
    CHECK(cfg.lr == 1e-4);
    CHECK(cfg.points == 512);
    CHECK(cfg.embed_l == 4);
    CHECK(cfg.heads == 8);
    CHECK(cfg.patience == 10);
    CHECK(cfg.resolved_blocks() == 1);
    cfg.strategy = Strategy::cross_attention;
    CHECK(cfg.resolved_blocks() == 2);
}

TEST_CASE("config files parse, override, and round-trip") {
    const std::string text =
        "[model]\n"
        "strategy = film\n"
        "code_source = combined\n"
        "hidden = 32\n"
        "[train]\n"
        "lr = 3e-4\n"
        "seed = 99\n";
    ExperimentConfig cfg = parse_config_text(text);
    CHECK(cfg.strategy == Strategy::film);
    CHECK(cfg.code_source == CodeSource::combined);
    CHECK(cfg.hidden == 32);
    CHECK(cfg.lr == doctest::Approx(3e-4));
    CHECK(cfg.seed == 99);

    apply_overrides(cfg, {"--model.strategy", "concat", "--model.code_source", "local",
                          "--train.batch_size", "4"});
    CHECK(cfg.strategy == Strategy::concat);
    CHECK(cfg.batch_size == 4);

    const ExperimentConfig back = parse_config_text(serialize_config(cfg));
    CHECK(serialize_config(back) == serialize_config(cfg));

    CHECK_THROWS_AS(parse_config_text("nonsense\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[model]\nstrategy = swizzle\n"), ConfigError);
    CHECK_THROWS_AS(apply_overrides(cfg, {"--no.such.key", "1"}), ConfigError);
}

TEST_CASE("paper profile applies the published scale") {
    ExperimentConfig cfg = parse_config_text("profile = paper\n");
    CHECK(cfg.hidden == 512);
    CHECK(cfg.batch_size == 64);
    CHECK(cfg.image_size == 256);
    CHECK(cfg.encoder_config().downsample() == 32);
    CHECK(cfg.encoder_config().out_channels() == 512);
}

TEST_CASE("config validation catches indivisible image sizes") {
    ExperimentConfig cfg = micro_config();
    cfg.image_size = 40;  // not divisible by the 16x downsample
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("synthetic dataset splits are sized and disjoint by seed") {
    ExperimentConfig cfg = micro_config();
    const DatasetSplit data = build_dataset(cfg);
    CHECK(data.train.size() == 6u);
    CHECK(data.val.size() == 2u);
    CHECK(data.test.size() == 2u);
    CHECK(data.train[0].image.data != data.val[0].image.data);

    ExperimentConfig single = cfg;
    single.single_image = true;
    const DatasetSplit one = build_dataset(single);
    CHECK(one.train.size() == 1u);
    CHECK(one.train[0].image.data == one.val[0].image.data);
    CHECK(one.train[0].image.data == one.test[0].image.data);
}

TEST_CASE("training runs, logs every step, and validates every epoch") {
    const TrainResult res = train(micro_config());
    CHECK(res.log.steps.size() == 4u);  // ceil(6/3) steps x 2 epochs
    CHECK(res.log.epochs.size() == 2u);
    for (const auto& s : res.log.steps) CHECK(std::isfinite(s.loss));
    CHECK(res.best_epoch >= 0);
    CHECK(res.best.tensors.size() > 0u);
    CHECK(!res.best.config_text.empty());

    // the best checkpoint never reports a worse IoU than any logged epoch
    double best_logged = 0.0;
    for (const auto& e : res.log.epochs) best_logged = std::max(best_logged, e.val_iou);
    CHECK(res.best_val_iou == doctest::Approx(best_logged));
}

TEST_CASE("training is bit-deterministic given the seed") {
    const TrainResult a = train(micro_config());
    const TrainResult b = train(micro_config());
    CHECK(a.log.to_text() == b.log.to_text());
    REQUIRE(a.best.tensors.size() == b.best.tensors.size());
    for (std::size_t i = 0; i < a.best.tensors.size(); ++i) {
        CHECK(a.best.tensors[i].name == b.best.tensors[i].name);
        CHECK(a.best.tensors[i].value.data == b.best.tensors[i].value.data);
    }

    ExperimentConfig other = micro_config();
    other.seed = 12;
    const TrainResult c = train(other);
    CHECK(a.log.to_text() != c.log.to_text());
}

TEST_CASE("zero learning rate leaves parameters at initialization") {
    ExperimentConfig cfg = micro_config();
    cfg.lr = 0.0;
    cfg.max_epochs = 1;
    const DatasetSplit data = build_dataset(cfg);
    TrainOutput out = train_with_data(cfg, data);
    ModelPair fresh = build_models(cfg);
    for (auto& p : fresh.encoder.params()) {
        const auto* trained = out.models.encoder.params().find(p.name);
        REQUIRE(trained != nullptr);
        CHECK(trained->value->data == p.value->data);
    }
    // decoder weights also untouched (running stats do move with the data)
    for (auto& p : fresh.decoder.params()) {
        if (!p.trainable) continue;
        CHECK(out.models.decoder.params().find(p.name)->value->data == p.value->data);
    }
}

TEST_CASE("checkpoints survive a save/load round trip bit for bit") {
    TempDir tmp;
    const TrainResult res = train(micro_config());
    const std::string path = (tmp.path / "m.ckpt").string();
    save_checkpoint(path, res.best);
    const Checkpoint back = load_checkpoint(path);
    CHECK(back.config_text == res.best.config_text);
    CHECK(back.epoch == res.best.epoch);
    CHECK(back.best_val_iou == res.best.best_val_iou);
    CHECK(back.adam_t == res.best.adam_t);
    REQUIRE(back.tensors.size() == res.best.tensors.size());
    for (std::size_t i = 0; i < back.tensors.size(); ++i) {
        CHECK(back.tensors[i].name == res.best.tensors[i].name);
        CHECK(back.tensors[i].value.shape == res.best.tensors[i].value.shape);
        CHECK(back.tensors[i].value.data == res.best.tensors[i].value.data);
    }

    // evaluation through the reloaded checkpoint is bit-identical
    const MetricsReport r1 = evaluate(res.best, "val");
    const MetricsReport r2 = evaluate(back, "val");
    CHECK(r1.aggregate_iou == r2.aggregate_iou);
    CHECK(r1.mean_iou == r2.mean_iou);
    for (int t = 0; t < 6; ++t)
        for (int p = 0; p < 6; ++p) CHECK(r1.confusion.at(t, p) == r2.confusion.at(t, p));

    CHECK_THROWS_AS(load_checkpoint((tmp.path / "missing.ckpt").string()), LoadError);
}

TEST_CASE("evaluating the same checkpoint twice is deterministic") {
    const TrainResult res = train(micro_config());
    const MetricsReport a = evaluate(res.best, "test");
    const MetricsReport b = evaluate(res.best, "test");
    CHECK(a.csv_row().substr(a.csv_row().find(',', 0)) !=
          "");  // row is nonempty past the seed column
    for (int t = 0; t < 6; ++t)
        for (int p = 0; p < 6; ++p) CHECK(a.confusion.at(t, p) == b.confusion.at(t, p));
    CHECK(a.aggregate_iou == b.aggregate_iou);
}

TEST_CASE("ground truth replayed as prediction scores a perfect IoU") {
    const DatasetSplit data = build_dataset(micro_config());
    const MetricsReport rep = replay_ground_truth(data.val);
    CHECK(rep.aggregate_iou == doctest::Approx(1.0));
    CHECK(rep.aggregate_f == doctest::Approx(1.0));
}

TEST_CASE("prediction masks match the input geometry and render losslessly") {
    ExperimentConfig cfg = micro_config();
    const DatasetSplit data = build_dataset(cfg);
    TrainOutput out = train_with_data(cfg, data);
    const SegSample& s = data.test[0];
    const std::vector<std::uint8_t> mask = predict_mask(out.models, s, cfg);
    CHECK(mask.size() == static_cast<std::size_t>(s.height) * s.width);
    for (std::uint8_t m : mask) CHECK(m < 6);

    const RgbImage rendered = render_mask(mask, s.height, s.width);
    CHECK(rendered.width == s.width);
    CHECK(rendered.height == s.height);
    CHECK(decode_label_image(rendered) == mask);

    // uniform masks render as the uniform class color
    const std::vector<std::uint8_t> ones(static_cast<std::size_t>(4), 1);
    const RgbImage blue = render_mask(ones, 2, 2);
    for (int i = 0; i < 4; ++i) {
        CHECK(blue.pixels[static_cast<std::size_t>(3 * i)] == 0);
        CHECK(blue.pixels[static_cast<std::size_t>(3 * i) + 1] == 0);
        CHECK(blue.pixels[static_cast<std::size_t>(3 * i) + 2] == 255);
    }
}

TEST_CASE("compare produces seven rows per size with the metric identity") {
    ExperimentConfig cfg = micro_config();
    cfg.max_epochs = 1;
    cfg.train_count = 4;
    cfg.val_count = 1;
    cfg.test_count = 1;
    const CompareResult result = compare(cfg, {5}, {32});
    CHECK(result.runs.size() == 7u);
    CHECK(result.medians.size() == 7u);
    for (const auto& r : result.runs) {
        CHECK(std::abs(r.aggregate_f - f_from_iou(r.aggregate_iou)) < 1e-12);
        CHECK(r.params > 0);
    }
    const std::string csv = result.csv();
    CHECK(csv.find("cross_attention,tokens,32,5,") != std::string::npos);
    CHECK(csv.find("concat,global,32,median,") != std::string::npos);
    CHECK(result.table().find("image size 32") != std::string::npos);
}
