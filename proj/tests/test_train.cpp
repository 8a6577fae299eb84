#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "hmr/model.hpp"
#include "hmr/train.hpp"

using namespace hmr;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_model() {
    ModelConfig c;
    c.encoder.variant = EncoderVariant::kGhost;
    c.encoder.input_size = 32;
    c.encoder.stem_width = 4;
    c.encoder.stage_widths = {6, 8, 10};
    c.encoder.group2_width = 8;
    c.encoder.ce = 8;
    c.mapreg_hidden = 8;
    c.decoder_widths = {10, 6, 6, 6};
    return c;
}

TrainConfig tiny_train(const fs::path& dir) {
    TrainConfig c;
    c.model = tiny_model();
    c.seed = 7;
    c.train_samples = 4;
    c.heldout_samples = 2;
    c.epochs = 1;
    c.batch_size = 2;
    c.lr = 1e-3;
    c.cameras = 2;
    c.out_dir = dir.string();
    return c;
}

fs::path fresh_dir(const std::string& name) {
    auto d = fs::temp_directory_path() / name;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

}  // namespace

TEST_CASE("model forward produces full-resolution vertices and landmarks") {
    auto model = HmrModel::init(tiny_model(), 3);
    CHECK(model.chain.meshes.back().vertex_count() == 49);
    CHECK(model.lifting.shape == std::vector<int>{49, 21});

    Tensor img({3, 32, 32}, 0.25f);
    auto out = model.forward(img);
    CHECK(out.landmarks->value.shape == std::vector<int>{21, 2});
    CHECK(out.verts->value.shape == std::vector<int>{778, 3});
    for (std::int64_t i = 0; i < out.verts->value.numel(); ++i)
        CHECK(std::isfinite(out.verts->value[i]));
}

TEST_CASE("model config round trip and invalid decoder width") {
    auto cfg = tiny_model();
    nlohmann::json j = cfg;
    auto back = j.get<ModelConfig>();
    CHECK(back.decoder_widths == cfg.decoder_widths);
    CHECK(back.encoder.ce == cfg.encoder.ce);

    cfg.decoder_widths[0] = 5;  // != ce
    CHECK_THROWS_AS(HmrModel::init(cfg, 1), std::invalid_argument);
}

TEST_CASE("model checkpoint round trip restores parameters bit-exactly") {
    auto dir = fresh_dir("hmr_model_ckpt");
    auto a = HmrModel::init(tiny_model(), 11);
    save_model(dir, a);
    auto b = load_model(dir);
    auto pa = a.parameters(), pb = b.parameters();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        REQUIRE(pa[i]->shape == pb[i]->shape);
        for (std::int64_t k = 0; k < pa[i]->numel(); ++k) CHECK(pa[i]->data[k] == pb[i]->data[k]);
    }
}

TEST_CASE("one training epoch runs, logs, and checkpoints") {
    auto dir = fresh_dir("hmr_train_smoke");
    auto cfg = tiny_train(dir);
    auto rep = train_toy(cfg);
    CHECK_FALSE(rep.aborted);
    CHECK(rep.steps == 2);
    REQUIRE(rep.step_losses.size() == 2);
    for (double l : rep.step_losses) CHECK(std::isfinite(l));
    CHECK(rep.initial_loss == doctest::Approx(rep.step_losses[0]));
    CHECK(rep.untrained_pa > 0.0);

    CHECK(fs::exists(dir / "loss.csv"));
    std::ifstream csv(dir / "loss.csv");
    std::string header;
    std::getline(csv, header);
    CHECK(header == LossBundle::csv_header());
    int rows = 0;
    for (std::string line; std::getline(csv, line);)
        if (!line.empty()) ++rows;
    CHECK(rows == 2);

    CHECK(fs::exists(dir / "last" / "manifest.json"));
    CHECK(fs::exists(dir / "last" / "params.bin"));
    CHECK(fs::exists(dir / "last" / "adam_m.bin"));
}

TEST_CASE("resuming from a checkpoint reproduces the next step loss bit-exactly") {
    auto dir_a = fresh_dir("hmr_train_full");
    auto cfg_a = tiny_train(dir_a);
    cfg_a.max_steps = 2;
    auto rep_a = train_toy(cfg_a);
    REQUIRE(rep_a.step_losses.size() == 2);

    auto dir_b = fresh_dir("hmr_train_part");
    auto cfg_b = tiny_train(dir_b);
    cfg_b.max_steps = 1;
    auto rep_b = train_toy(cfg_b);
    REQUIRE(rep_b.step_losses.size() == 1);
    CHECK(rep_b.step_losses[0] == rep_a.step_losses[0]);

    auto cfg_c = tiny_train(dir_b);
    cfg_c.max_steps = 2;
    cfg_c.resume_from = (dir_b / "last").string();
    auto rep_c = train_toy(cfg_c);
    REQUIRE(rep_c.step_losses.size() == 1);
    CHECK(rep_c.step_losses[0] == rep_a.step_losses[1]);
}

TEST_CASE("train config JSON round trip") {
    auto cfg = tiny_train("somewhere");
    cfg.weights.con3d = 0.5;
    nlohmann::json j = cfg;
    auto back = j.get<TrainConfig>();
    CHECK(back.train_samples == cfg.train_samples);
    CHECK(back.weights.con3d == doctest::Approx(0.5));
    CHECK(back.model.encoder.input_size == 32);
}

TEST_CASE("trainer rejects impossible configurations") {
    auto cfg = tiny_train(fresh_dir("hmr_train_bad"));
    cfg.batch_size = 0;
    CHECK_THROWS_AS(train_toy(cfg), std::invalid_argument);
    cfg = tiny_train(fresh_dir("hmr_train_bad2"));
    cfg.heldout_samples = 0;
    CHECK_THROWS_AS(train_toy(cfg), std::invalid_argument);
}
