#include "doctest.h"

#include "../support/gradcheck.hpp"
#include "cyclemae/pretrain.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

using namespace cyclemae;
using namespace cyclemae::pretrain;

namespace {

std::vector<TrainingClip> tiny_clips(const backbone::ModelConfig& mc, int count, double noise) {
    video::CorpusSpec cs;
    cs.count = count;
    cs.frames = mc.frames;
    cs.height = mc.height;
    cs.width = mc.width;
    cs.periods = {4, 8};
    cs.noise_level = noise;
    cs.seed = 11;
    std::vector<video::VideoClip> clips;
    for (const auto& item : video::generate_corpus(cs)) clips.push_back(item.clip);
    return prepare_clips(clips, mc);
}

TrainConfig tiny_train() {
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 2;
    cfg.learning_rate = 1e-3;
    cfg.warmup_steps = 2;
    cfg.seed = 5;
    return cfg;
}

std::filesystem::path scratch(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("cyclemae_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("learning-rate schedule: linear warmup then cosine to zero") {
    CHECK(scheduled_lr(1.0, 0, 4, 20) == 0.25);
    CHECK(scheduled_lr(1.0, 3, 4, 20) == 1.0);
    CHECK(scheduled_lr(1.0, 4, 4, 20) == 1.0);
    CHECK(scheduled_lr(1.0, 12, 4, 20) == doctest::Approx(0.5));
    CHECK(scheduled_lr(1.0, 8, 4, 20) == doctest::Approx(0.5 * (1.0 + std::cos(std::numbers::pi / 4))));
    CHECK(scheduled_lr(1.0, 20, 4, 20) == doctest::Approx(0.0));
    CHECK(scheduled_lr(2.0, 0, 0, 10) == 2.0);
}

TEST_CASE("AdamW single step matches the closed form") {
    ParamSet ps;
    Mat w(1, 2);
    w << 1.0, -2.0;
    ps.add("w", w, true);
    ps.add("b", Mat::Constant(1, 1, 3.0), false);
    AdamWConfig cfg;
    cfg.weight_decay = 0.1;
    AdamW opt(ps, cfg);
    Mat gw(1, 2);
    gw << 0.5, -4.0;
    Gradients g(std::vector<Mat>{gw, Mat::Constant(1, 1, 2.0)});
    const double lr = 0.01;
    opt.step(ps, g, lr);
    // First step: m_hat = g, v_hat = g^2, so the update is lr * g / (|g| + eps).
    for (int j = 0; j < 2; ++j) {
        const double want = w(0, j) * (1.0 - lr * 0.1) - lr * gw(0, j) / (std::abs(gw(0, j)) + 1e-8);
        CHECK(ps[0].value(0, j) == doctest::Approx(want).epsilon(1e-15));
    }
    CHECK(ps[1].value(0, 0) == doctest::Approx(3.0 - lr * 2.0 / (2.0 + 1e-8)).epsilon(1e-15));
    CHECK(opt.updates() == 1);

    const std::vector<bool> active{false, true};
    const Mat before = ps[0].value;
    opt.step(ps, g, lr, &active);
    CHECK(ps[0].value == before);
    CHECK(opt.first_moment()[0] == (1.0 - 0.9) * gw);
}

TEST_CASE("epoch order is a seeded permutation") {
    const auto a = epoch_order(3, 0, 10);
    CHECK(a == epoch_order(3, 0, 10));
    CHECK(a != epoch_order(3, 1, 10));
    auto sorted = a;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < 10; ++i) CHECK(sorted[i] == i);
    TrainConfig cfg;
    cfg.batch_size = 4;
    CHECK(steps_per_epoch(cfg, 10) == 3);
}

TEST_CASE("seeded pretraining is bitwise reproducible and logs every update") {
    const backbone::ModelConfig mc = testing::tiny_config();
    const auto clips = tiny_clips(mc, 4, 0.05);
    const TrainConfig cfg = tiny_train();
    std::vector<StepRecord> log_a;
    std::vector<StepRecord> log_b;
    const TrainState a = run_pretraining(cfg, mc, clips, {}, &log_a);
    const TrainState b = run_pretraining(cfg, mc, clips, {}, &log_b);
    CHECK(a.model.params().identical(b.model.params()));
    REQUIRE(log_a.size() == 4);
    for (std::size_t i = 0; i < log_a.size(); ++i) {
        CHECK(log_a[i].loss.total == log_b[i].loss.total);
        CHECK(log_a[i].step == static_cast<std::int64_t>(i + 1));
        CHECK(log_a[i].loss.total == log_a[i].loss.reconstruction + log_a[i].loss.contrastive);
    }
    TrainConfig other = cfg;
    other.seed = 6;
    CHECK_FALSE(run_pretraining(other, mc, clips, {}).model.params().identical(a.model.params()));
}

TEST_CASE("checkpoint round trip is bitwise and rejects a different model") {
    const backbone::ModelConfig mc = testing::tiny_config();
    const auto clips = tiny_clips(mc, 4, 0.05);
    TrainConfig cfg = tiny_train();
    cfg.epochs = 1;
    const TrainState st = run_pretraining(cfg, mc, clips, {});
    const auto dir = scratch("ckpt");
    const auto path = dir / "a.ckpt";
    checkpoint::save(path, to_checkpoint(st, cfg));
    const checkpoint::Checkpoint loaded = checkpoint::load(path);
    CHECK(loaded.model_config == mc);
    CHECK(loaded.step == st.step);
    CHECK(loaded.params.identical(st.model.params()));
    TrainConfig cfg2;
    const TrainState back = from_checkpoint(loaded, &cfg2);
    CHECK(train_config_to_json(cfg2) == train_config_to_json(cfg));
    for (std::size_t i = 0; i < back.optimizer.first_moment().size(); ++i) {
        CHECK(back.optimizer.first_moment()[i] == st.optimizer.first_moment()[i]);
        CHECK(back.optimizer.second_moment()[i] == st.optimizer.second_moment()[i]);
    }
    checkpoint::save(dir / "b.ckpt", loaded);
    CHECK(slurp(path) == slurp(dir / "b.ckpt"));

    backbone::ModelConfig wider = mc;
    wider.patch.embed_dim = 12;
    CHECK_THROWS_WITH_AS(checkpoint::load_model(path, wider), doctest::Contains("patch_embed.weight"),
                         std::invalid_argument);
    backbone::ModelConfig other = mc;
    other.stop_proj_grad = !mc.stop_proj_grad;
    CHECK_THROWS_WITH_AS(checkpoint::load_model(path, other), doctest::Contains("stop_proj_grad"),
                         std::invalid_argument);

    std::string bytes = slurp(path);
    bytes[0] = 'X';
    std::ofstream(dir / "bad.ckpt", std::ios::binary) << bytes;
    CHECK_THROWS(checkpoint::load(dir / "bad.ckpt"));
    std::ofstream(dir / "trunc.ckpt", std::ios::binary) << slurp(path).substr(0, 100);
    CHECK_THROWS(checkpoint::load(dir / "trunc.ckpt"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("an interrupted and resumed run equals the uninterrupted run") {
    const backbone::ModelConfig mc = testing::tiny_config();
    const auto clips = tiny_clips(mc, 6, 0.05);
    TrainConfig cfg = tiny_train();
    const TrainState full = run_pretraining(cfg, mc, clips, {});

    const auto dir = scratch("resume");
    TrainConfig first = cfg;
    first.stop_after = 4;  // mid-epoch 2 (3 updates per epoch)
    const TrainState half = run_pretraining(first, mc, clips, {});
    CHECK(half.step == 4);
    checkpoint::save(dir / "half.ckpt", to_checkpoint(half, first));

    TrainConfig restored;
    TrainState resumed = from_checkpoint(checkpoint::load(dir / "half.ckpt"), &restored);
    restored.stop_after = 0;
    const auto rest = train(resumed, restored, clips, {});
    CHECK(rest.size() == 2);
    CHECK(resumed.step == full.step);
    CHECK(resumed.model.params().identical(full.model.params()));
    std::filesystem::remove_all(dir);
}

TEST_CASE("training writes a JSON-lines log and checkpoints") {
    const backbone::ModelConfig mc = testing::tiny_config();
    const auto clips = tiny_clips(mc, 4, 0.05);
    TrainConfig cfg = tiny_train();
    cfg.enable_contrastive = false;
    cfg.checkpoint_every = 2;
    const auto dir = scratch("log");
    int calls = 0;
    RunOptions opt;
    opt.output_dir = dir;
    opt.on_step = [&](const StepRecord&) { ++calls; };
    run_pretraining(cfg, mc, clips, opt);
    CHECK(calls == 4);
    CHECK(std::filesystem::exists(dir / "final.ckpt"));
    CHECK(std::filesystem::exists(dir / "checkpoint_step2.ckpt"));
    std::ifstream in(dir / "train_log.jsonl");
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) {
        ++lines;
        CHECK(line.find("\"L_c\":0.0") != std::string::npos);
        CHECK(line.rfind("{\"step\":", 0) == 0);
    }
    CHECK(lines == 4);
    std::filesystem::remove_all(dir);
}

TEST_CASE("reconstruction loss falls on a noiseless corpus") {
    const backbone::ModelConfig mc = testing::tiny_config();
    const auto clips = tiny_clips(mc, 16, 0.0);
    TrainConfig cfg;
    cfg.epochs = 40;
    cfg.batch_size = 4;
    cfg.learning_rate = 3e-3;
    cfg.warmup_steps = 10;
    cfg.seed = 1;
    std::vector<StepRecord> log;
    run_pretraining(cfg, mc, clips, {}, &log);
    REQUIRE(log.size() == 160);
    double first = 0.0;
    double last = 0.0;
    for (int i = 0; i < 16; ++i) {
        first += log[static_cast<std::size_t>(i)].loss.reconstruction;
        last += log[log.size() - 1 - static_cast<std::size_t>(i)].loss.reconstruction;
    }
    CHECK(last < 0.5 * first);
}

TEST_CASE("unusable clips are rejected by name") {
    const backbone::ModelConfig mc = testing::tiny_config();
    video::VideoClip wrong = video::VideoClip::zeros(mc.frames, mc.height + 8, mc.width);
    CHECK_THROWS_WITH_AS(check_training_clip(wrong, mc, "clip_7"), doctest::Contains("clip_7"),
                         std::invalid_argument);
    video::VideoClip gray = video::VideoClip::zeros(mc.frames, mc.height, mc.width, 1);
    CHECK_THROWS_AS(check_training_clip(gray, mc, "g"), std::invalid_argument);
    video::VideoClip slow = video::VideoClip::zeros(mc.frames, mc.height, mc.width);
    slow.period_hint = mc.frames + 1;
    CHECK_THROWS_WITH_AS(check_training_clip(slow, mc, "slow"), doctest::Contains("slow"),
                         std::invalid_argument);
    TrainConfig bad;
    bad.batch_size = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
