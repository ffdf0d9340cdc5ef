#include "cyclemae/pretrain.hpp"

#include "json_io.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace cyclemae::pretrain {

namespace {

constexpr std::uint64_t kInitTag = 0x494e4954;     // "INIT"
constexpr std::uint64_t kShuffleTag = 0x53485546;  // "SHUF"
constexpr std::uint64_t kSampleTag = 0x53414d50;   // "SAMP"

}  // namespace

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("pretrain.epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("pretrain.batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("pretrain.learning_rate must be > 0");
    if (weight_decay < 0.0) throw std::invalid_argument("pretrain.weight_decay must be >= 0");
    if (warmup_steps < 0) throw std::invalid_argument("pretrain.warmup_steps must be >= 0");
    if (checkpoint_every < 0) {
        throw std::invalid_argument("pretrain.checkpoint_every must be >= 0");
    }
    if (!(recon_warm_fraction >= 0.0 && recon_warm_fraction <= 1.0)) {
        throw std::invalid_argument("pretrain.recon_warm_fraction must lie in [0, 1]");
    }
    if (stop_after < 0) throw std::invalid_argument("pretrain.stop_after must be >= 0");
    try {
        objective().validate();
        AdamW(ParamSet{}, optimizer());
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(std::string("pretrain: ") + e.what());
    }
}

objective::ObjectiveConfig TrainConfig::objective() const {
    objective::ObjectiveConfig o;
    o.mask_ratio = mask_ratio;
    o.alpha = alpha;
    o.adjacency_window = adjacency_window;
    o.enable_contrastive = enable_contrastive;
    return o;
}

AdamWConfig TrainConfig::optimizer() const {
    AdamWConfig a;
    a.beta1 = beta1;
    a.beta2 = beta2;
    a.weight_decay = weight_decay;
    return a;
}

std::string to_json_line(const StepRecord& r) {
    nlohmann::ordered_json j;
    j["step"] = r.step;
    j["epoch"] = r.epoch;
    j["lr"] = r.lr;
    j["L_r"] = r.loss.reconstruction;
    j["L_c"] = r.loss.contrastive;
    j["L_total"] = r.loss.total;
    j["triplet_count"] = r.loss.triplet_count;
    j["skipped_anchors"] = r.loss.skipped_anchors;
    return j.dump();
}

TrainState initial_state(const TrainConfig& cfg, const backbone::ModelConfig& model_cfg) {
    backbone::Model model = backbone::Model::init(model_cfg, derive_seed(cfg.seed, kInitTag));
    AdamW opt(model.params(), cfg.optimizer());
    return TrainState{std::move(model), std::move(opt), 0};
}

void check_training_clip(const video::VideoClip& clip, const backbone::ModelConfig& cfg,
                         const std::string& id) {
    auto reject = [&](const std::string& why) {
        throw std::invalid_argument("clip '" + id + "' rejected: " + why);
    };
    try {
        clip.validate();
    } catch (const std::invalid_argument& e) {
        reject(e.what());
    }
    if (clip.channels != cfg.channels) {
        reject("expected " + std::to_string(cfg.channels) + " channels, got " +
               std::to_string(clip.channels));
    }
    if (clip.frames != cfg.frames || clip.height != cfg.height || clip.width != cfg.width) {
        reject("shape " + std::to_string(clip.frames) + "x" + std::to_string(clip.height) + "x" +
               std::to_string(clip.width) + " does not match the model input " +
               std::to_string(cfg.frames) + "x" + std::to_string(cfg.height) + "x" +
               std::to_string(cfg.width));
    }
    try {
        (void)tokenizer::grid_shape(clip.frames, clip.height, clip.width, cfg.patch);
    } catch (const std::invalid_argument& e) {
        reject(e.what());
    }
    if (clip.period_hint && *clip.period_hint > clip.frames) {
        reject("period " + std::to_string(*clip.period_hint) +
               " is longer than the clip; it does not hold a complete cycle");
    }
}

std::vector<TrainingClip> prepare_clips(const std::vector<video::VideoClip>& clips,
                                        const backbone::ModelConfig& cfg) {
    if (clips.empty()) {
        throw std::invalid_argument("pretraining needs at least one clip");
    }
    std::vector<TrainingClip> out;
    out.reserve(clips.size());
    for (std::size_t i = 0; i < clips.size(); ++i) {
        const std::string id =
            clips[i].source_id.empty() ? "#" + std::to_string(i) : clips[i].source_id;
        check_training_clip(clips[i], cfg, id);
        out.push_back({tokenizer::patchify(clips[i], cfg.patch), id});
    }
    return out;
}

std::int64_t steps_per_epoch(const TrainConfig& cfg, std::size_t clips) {
    const auto b = static_cast<std::int64_t>(cfg.batch_size);
    return (static_cast<std::int64_t>(clips) + b - 1) / b;
}

std::vector<std::size_t> epoch_order(std::uint64_t seed, int epoch, std::size_t n) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, kShuffleTag, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = n; i > 1; --i) {
        std::swap(order[i - 1], order[uniform_index(rng, i)]);
    }
    return order;
}

std::vector<StepRecord> train(TrainState& state, const TrainConfig& cfg,
                              const std::vector<TrainingClip>& clips, const RunOptions& options) {
    cfg.validate();
    if (clips.empty()) {
        throw std::invalid_argument("pretraining needs at least one clip");
    }
    const backbone::ModelConfig& mcfg = state.model.config();
    const tokenizer::GridShape shape = mcfg.grid();
    for (const TrainingClip& c : clips) {
        if (c.grid.groups != shape.groups || c.grid.positions != shape.positions() ||
            c.grid.patch_dim() != mcfg.patch.patch_dim(mcfg.channels)) {
            throw std::invalid_argument("clip '" + c.id + "' does not match the model grid");
        }
    }

    const std::int64_t per_epoch = steps_per_epoch(cfg, clips.size());
    const std::int64_t total = per_epoch * cfg.epochs;
    const std::int64_t limit = cfg.stop_after > 0 ? std::min(total, cfg.stop_after) : total;
    const auto warm_steps =
        static_cast<std::int64_t>(std::floor(cfg.recon_warm_fraction * static_cast<double>(total)));

    std::ofstream log;
    if (!options.output_dir.empty()) {
        std::filesystem::create_directories(options.output_dir);
        log.open(options.output_dir / "train_log.jsonl", std::ios::app);
        if (!log) {
            throw std::runtime_error("cannot open training log in " + options.output_dir.string());
        }
    }

    std::vector<StepRecord> records;
    Gradients grads(state.model.params());
    int cached_epoch = -1;
    std::vector<std::size_t> order;
    objective::ObjectiveConfig ocfg = cfg.objective();

    while (state.step < limit) {
        const std::int64_t s = state.step;
        const int epoch = static_cast<int>(s / per_epoch);
        if (epoch != cached_epoch) {
            order = epoch_order(cfg.seed, epoch, clips.size());
            cached_epoch = epoch;
        }
        const auto begin = static_cast<std::size_t>((s % per_epoch) * cfg.batch_size);
        const std::size_t end =
            std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
        ocfg.enable_contrastive = cfg.enable_contrastive && s >= warm_steps;

        grads.zero();
        StepRecord rec;
        rec.step = s + 1;
        rec.epoch = epoch;
        for (std::size_t k = begin; k < end; ++k) {
            const std::size_t idx = order[k];
            Rng rng(derive_seed(cfg.seed, kSampleTag, static_cast<std::uint64_t>(s), idx));
            const objective::LossReport r =
                objective::training_step(state.model, clips[idx].grid, ocfg, rng, &grads);
            rec.loss.reconstruction += r.reconstruction;
            rec.loss.contrastive += r.contrastive;
            rec.loss.masked_patch_count += r.masked_patch_count;
            rec.loss.triplet_count += r.triplet_count;
            rec.loss.skipped_anchors += r.skipped_anchors;
        }
        const double inv = 1.0 / static_cast<double>(end - begin);
        rec.loss.reconstruction *= inv;
        rec.loss.contrastive *= inv;
        rec.loss.total = rec.loss.reconstruction + rec.loss.contrastive;
        if (!std::isfinite(rec.loss.total)) {
            throw std::runtime_error("training diverged at step " + std::to_string(rec.step));
        }
        grads.scale(inv);
        rec.lr = scheduled_lr(cfg.learning_rate, s, cfg.warmup_steps, total);
        state.optimizer.step(state.model.params(), grads, rec.lr);
        state.step = s + 1;

        if (log.is_open()) {
            log << to_json_line(rec) << '\n';
        }
        if (options.on_step) {
            options.on_step(rec);
        }
        if (!options.output_dir.empty() && cfg.checkpoint_every > 0 &&
            state.step % cfg.checkpoint_every == 0) {
            checkpoint::save(options.output_dir /
                                 ("checkpoint_step" + std::to_string(state.step) + ".ckpt"),
                             to_checkpoint(state, cfg));
        }
        records.push_back(rec);
    }
    if (!options.output_dir.empty()) {
        log.flush();
        checkpoint::save(options.output_dir / "final.ckpt", to_checkpoint(state, cfg));
    }
    return records;
}

TrainState run_pretraining(const TrainConfig& cfg, const backbone::ModelConfig& model_cfg,
                           const std::vector<TrainingClip>& clips, const RunOptions& options,
                           std::vector<StepRecord>* log) {
    cfg.validate();
    TrainState state = initial_state(cfg, model_cfg);
    if (!options.output_dir.empty()) {
        std::filesystem::remove(options.output_dir / "train_log.jsonl");
    }
    std::vector<StepRecord> records = train(state, cfg, clips, options);
    if (log != nullptr) {
        *log = std::move(records);
    }
    return state;
}

checkpoint::Checkpoint to_checkpoint(const TrainState& state, const TrainConfig& cfg) {
    checkpoint::Checkpoint ckpt;
    ckpt.model_config = state.model.config();
    ckpt.params = state.model.params();
    ckpt.step = state.step;
    const ParamSet& params = state.model.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
        ckpt.extra.add("optimizer.m." + params[i].name, state.optimizer.first_moment()[i], false);
        ckpt.extra.add("optimizer.v." + params[i].name, state.optimizer.second_moment()[i], false);
    }
    ckpt.metadata["kind"] = "pretrain";
    ckpt.metadata["optimizer_updates"] = std::to_string(state.optimizer.updates());
    ckpt.metadata["train_config"] = train_config_to_json(cfg);
    return ckpt;
}

TrainState from_checkpoint(const checkpoint::Checkpoint& ckpt, TrainConfig* cfg) {
    const auto it = ckpt.metadata.find("train_config");
    if (it == ckpt.metadata.end()) {
        throw std::invalid_argument("checkpoint carries no training state");
    }
    const TrainConfig tcfg = train_config_from_json(it->second);
    backbone::Model model = checkpoint::to_model(ckpt);
    AdamW opt(model.params(), tcfg.optimizer());
    std::vector<Mat> m;
    std::vector<Mat> v;
    for (const Parameter& p : model.params()) {
        const auto mi = "optimizer.m." + p.name;
        const auto vi = "optimizer.v." + p.name;
        if (!ckpt.extra.contains(mi) || !ckpt.extra.contains(vi)) {
            throw std::invalid_argument("checkpoint lacks optimizer state for " + p.name);
        }
        m.push_back(ckpt.extra[ckpt.extra.index_of(mi)].value);
        v.push_back(ckpt.extra[ckpt.extra.index_of(vi)].value);
    }
    opt.restore(std::stoll(ckpt.metadata.at("optimizer_updates")), Gradients(std::move(m)),
                Gradients(std::move(v)));
    if (cfg != nullptr) {
        *cfg = tcfg;
    }
    return TrainState{std::move(model), std::move(opt), ckpt.step};
}

std::string train_config_to_json(const TrainConfig& cfg) {
    return detail::to_json(cfg).dump();
}

TrainConfig train_config_from_json(const std::string& text) {
    return detail::train_config_from_json(detail::json::parse(text), "pretrain");
}

}  // namespace cyclemae::pretrain
