#include "cyclemae/config.hpp"

#include "json_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cyclemae::config {

using detail::json;
using detail::ObjectReader;

video::Split DataConfig::split_of(int index) const {
    const int n = corpus.count;
    const int n_test = static_cast<int>(std::llround(test_fraction * n));
    const int n_val = static_cast<int>(std::llround(val_fraction * n));
    if (index >= n - n_test) return video::Split::test;
    if (index >= n - n_test - n_val) return video::Split::val;
    return video::Split::train;
}

namespace {

template <typename F>
void wrap(const std::string& path, F&& f) {
    try {
        f();
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        if (msg.find("config key") != std::string::npos ||
            msg.find("config section") != std::string::npos) {
            throw;
        }
        throw std::invalid_argument("config section '" + path + "': " + msg);
    }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    const std::filesystem::path path(p);
    if (path.is_absolute() || base.empty()) {
        return path;
    }
    return base / path;
}

DataConfig parse_data(const json& j, const std::filesystem::path& base) {
    DataConfig d;
    ObjectReader r(j, "data");
    std::string dir = d.dir.string();
    r.get("dir", dir);
    d.dir = resolve(base, dir);
    r.get("count", d.corpus.count);
    r.get("frames", d.corpus.frames);
    r.get("height", d.corpus.height);
    r.get("width", d.corpus.width);
    r.get("periods", d.corpus.periods);
    r.get("amplitude_min", d.corpus.amplitude_min);
    r.get("amplitude_max", d.corpus.amplitude_max);
    r.get("noise_level", d.corpus.noise_level);
    r.get("seed", d.corpus.seed);
    r.get("val_fraction", d.val_fraction);
    r.get("test_fraction", d.test_fraction);
    r.get("write_masks", d.write_masks);
    r.finish();
    wrap("data", [&] {
        d.corpus.validate();
        if (!(d.val_fraction >= 0.0 && d.test_fraction >= 0.0 &&
              d.val_fraction + d.test_fraction < 1.0)) {
            throw std::invalid_argument("val_fraction + test_fraction must lie in [0, 1)");
        }
    });
    return d;
}

adapt::AugmentConfig parse_augment(const json& j) {
    adapt::AugmentConfig a;
    ObjectReader r(j, "finetune.augment");
    r.get("rotate_deg", a.rotate_deg);
    r.get("translate_frac", a.translate_frac);
    r.get("scale_min", a.scale_min);
    r.get("scale_max", a.scale_max);
    r.get("erase_patch", a.erase_patch);
    r.get("erase_prob", a.erase_prob);
    r.get("hflip", a.hflip);
    r.get("vflip", a.vflip);
    r.get("flip_prob", a.flip_prob);
    std::string mode = adapt::to_string(a.mode);
    r.get("mode", mode);
    r.finish();
    wrap("finetune.augment", [&] {
        a.mode = adapt::parse_augment_mode(mode);
        a.validate();
    });
    return a;
}

adapt::FinetuneConfig parse_finetune(const json& j) {
    adapt::FinetuneConfig f;
    ObjectReader r(j, "finetune");
    std::string task = adapt::to_string(f.task);
    r.get("task", task);
    r.get("classes", f.classes);
    r.get("label_fraction", f.label_fraction);
    r.get("freeze_encoder", f.freeze_encoder);
    r.get("epochs", f.epochs);
    r.get("batch_size", f.batch_size);
    r.get("learning_rate", f.learning_rate);
    r.get("encoder_learning_rate", f.encoder_learning_rate);
    r.get("weight_decay", f.weight_decay);
    r.get("seed", f.seed);
    r.get("augment_enabled", f.augment_enabled);
    if (const json* a = r.section("augment")) {
        f.augment = parse_augment(*a);
    }
    r.finish();
    wrap("finetune", [&] {
        f.task = adapt::parse_task(task);
        f.validate();
    });
    return f;
}

OutputConfig parse_output(const json& j, const std::filesystem::path& base) {
    OutputConfig o;
    ObjectReader r(j, "output");
    std::string dir = o.dir.string();
    r.get("dir", dir);
    o.dir = resolve(base, dir);
    r.get("init_checkpoint", o.init_checkpoint);
    r.finish();
    if (!o.init_checkpoint.empty() && o.init_checkpoint != "random") {
        o.init_checkpoint = resolve(base, o.init_checkpoint).string();
    }
    return o;
}

AblationConfig parse_ablation(const json& j) {
    AblationConfig a;
    ObjectReader r(j, "ablation");
    r.get("mask_ratios", a.mask_ratios);
    r.get("patch_sizes", a.patch_sizes);
    r.get("reference_patch", a.reference_patch);
    r.get("reference_ratio", a.reference_ratio);
    r.finish();
    wrap("ablation", [&] {
        if (a.mask_ratios.empty() || a.patch_sizes.empty()) {
            throw std::invalid_argument("the sweep needs at least one ratio and one patch size");
        }
        for (const double m : a.mask_ratios) {
            (void)masking::masked_count(m, 1);
        }
        (void)masking::masked_count(a.reference_ratio, 1);
    });
    return a;
}

json to_json(const video::CorpusSpec& c) {
    return json{{"count", c.count},
                {"frames", c.frames},
                {"height", c.height},
                {"width", c.width},
                {"periods", c.periods},
                {"amplitude_min", c.amplitude_min},
                {"amplitude_max", c.amplitude_max},
                {"noise_level", c.noise_level},
                {"seed", c.seed}};
}

}  // namespace

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir) {
    json root;
    try {
        root = json::parse(text, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
    }
    RunConfig cfg;
    ObjectReader r(root, "");
    const json empty = json::object();
    const json* data = r.section("data");
    cfg.data = parse_data(data != nullptr ? *data : empty, base_dir);
    if (const json* s = r.section("model")) cfg.model = detail::model_config_from_json(*s, "model");
    if (const json* s = r.section("pretrain")) {
        wrap("pretrain", [&] { cfg.pretrain = detail::train_config_from_json(*s, "pretrain"); });
    }
    if (const json* s = r.section("finetune")) cfg.finetune = parse_finetune(*s);
    const json* output = r.section("output");
    cfg.output = parse_output(output != nullptr ? *output : empty, base_dir);
    if (const json* s = r.section("ablation")) cfg.ablation = parse_ablation(*s);
    r.finish();
    if (cfg.data.corpus.frames != cfg.model.frames || cfg.data.corpus.height != cfg.model.height ||
        cfg.data.corpus.width != cfg.model.width) {
        throw std::invalid_argument(
            "config key 'data.frames' (with data.height, data.width) must match the model input "
            "shape");
    }
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::invalid_argument("cannot read config file " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str(), path.parent_path());
}

std::string to_json(const RunConfig& cfg) {
    json j;
    j["data"] = to_json(cfg.data.corpus);
    j["data"]["dir"] = cfg.data.dir.string();
    j["data"]["val_fraction"] = cfg.data.val_fraction;
    j["data"]["test_fraction"] = cfg.data.test_fraction;
    j["data"]["write_masks"] = cfg.data.write_masks;
    j["model"] = detail::to_json(cfg.model);
    j["pretrain"] = detail::to_json(cfg.pretrain);
    const adapt::FinetuneConfig& f = cfg.finetune;
    const adapt::AugmentConfig& a = f.augment;
    j["finetune"] = json{{"task", adapt::to_string(f.task)},
                         {"classes", f.classes},
                         {"label_fraction", f.label_fraction},
                         {"freeze_encoder", f.freeze_encoder},
                         {"epochs", f.epochs},
                         {"batch_size", f.batch_size},
                         {"learning_rate", f.learning_rate},
                         {"encoder_learning_rate", f.encoder_learning_rate},
                         {"weight_decay", f.weight_decay},
                         {"seed", f.seed},
                         {"augment_enabled", f.augment_enabled},
                         {"augment",
                          {{"rotate_deg", a.rotate_deg},
                           {"translate_frac", a.translate_frac},
                           {"scale_min", a.scale_min},
                           {"scale_max", a.scale_max},
                           {"erase_patch", a.erase_patch},
                           {"erase_prob", a.erase_prob},
                           {"hflip", a.hflip},
                           {"vflip", a.vflip},
                           {"flip_prob", a.flip_prob},
                           {"mode", adapt::to_string(a.mode)}}}};
    j["output"] = json{{"dir", cfg.output.dir.string()},
                       {"init_checkpoint", cfg.output.init_checkpoint}};
    j["ablation"] = json{{"mask_ratios", cfg.ablation.mask_ratios},
                         {"patch_sizes", cfg.ablation.patch_sizes},
                         {"reference_patch", cfg.ablation.reference_patch},
                         {"reference_ratio", cfg.ablation.reference_ratio}};
    return j.dump(2);
}

void override_seed(RunConfig& cfg, std::uint64_t seed) {
    cfg.data.corpus.seed = seed;
    cfg.pretrain.seed = seed;
    cfg.finetune.seed = seed;
}

}  // namespace cyclemae::config
