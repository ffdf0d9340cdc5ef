#include "json_io.hpp"

namespace cyclemae::detail {

ObjectReader::ObjectReader(const json& object, std::string path)
    : object_(object), path_(std::move(path)) {
    if (!object_.is_object()) {
        throw std::invalid_argument("config section '" + path_ + "' must be an object");
    }
}

const json* ObjectReader::section(const char* key) {
    seen_.insert(key);
    const auto it = object_.find(key);
    if (it == object_.end()) {
        return nullptr;
    }
    return &*it;
}

std::string ObjectReader::child(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
}

void ObjectReader::finish() const {
    for (const auto& [key, value] : object_.items()) {
        if (!seen_.contains(key)) {
            throw std::invalid_argument("unknown config key '" + child(key) + "'");
        }
    }
}

json to_json(const backbone::ModelConfig& cfg) {
    return json{{"frames", cfg.frames},
                {"height", cfg.height},
                {"width", cfg.width},
                {"channels", cfg.channels},
                {"patch_h", cfg.patch.patch_h},
                {"patch_w", cfg.patch.patch_w},
                {"patch_t", cfg.patch.patch_t},
                {"embed_dim", cfg.patch.embed_dim},
                {"enc_depth", cfg.enc_depth},
                {"enc_heads", cfg.enc_heads},
                {"dec_width", cfg.dec_width},
                {"dec_depth", cfg.dec_depth},
                {"dec_heads", cfg.dec_heads},
                {"proj_depth", cfg.proj_depth},
                {"proj_heads", cfg.proj_heads},
                {"mlp_ratio", cfg.mlp_ratio},
                {"stop_proj_grad", cfg.stop_proj_grad}};
}

backbone::ModelConfig model_config_from_json(const json& j, const std::string& path) {
    backbone::ModelConfig cfg;
    ObjectReader r(j, path);
    r.get("frames", cfg.frames);
    r.get("height", cfg.height);
    r.get("width", cfg.width);
    r.get("channels", cfg.channels);
    r.get("patch_h", cfg.patch.patch_h);
    r.get("patch_w", cfg.patch.patch_w);
    r.get("patch_t", cfg.patch.patch_t);
    r.get("embed_dim", cfg.patch.embed_dim);
    r.get("enc_depth", cfg.enc_depth);
    r.get("enc_heads", cfg.enc_heads);
    r.get("dec_width", cfg.dec_width);
    r.get("dec_depth", cfg.dec_depth);
    r.get("dec_heads", cfg.dec_heads);
    r.get("proj_depth", cfg.proj_depth);
    r.get("proj_heads", cfg.proj_heads);
    r.get("mlp_ratio", cfg.mlp_ratio);
    r.get("stop_proj_grad", cfg.stop_proj_grad);
    r.finish();
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument("config section '" + path + "': " + e.what());
    }
    return cfg;
}

json to_json(const pretrain::TrainConfig& cfg) {
    return json{{"epochs", cfg.epochs},
                {"batch_size", cfg.batch_size},
                {"learning_rate", cfg.learning_rate},
                {"weight_decay", cfg.weight_decay},
                {"warmup_steps", cfg.warmup_steps},
                {"seed", cfg.seed},
                {"enable_contrastive", cfg.enable_contrastive},
                {"alpha", cfg.alpha},
                {"mask_ratio", cfg.mask_ratio},
                {"adjacency_window", cfg.adjacency_window},
                {"checkpoint_every", cfg.checkpoint_every},
                {"recon_warm_fraction", cfg.recon_warm_fraction},
                {"beta1", cfg.beta1},
                {"beta2", cfg.beta2},
                {"stop_after", cfg.stop_after}};
}

pretrain::TrainConfig train_config_from_json(const json& j, const std::string& path) {
    pretrain::TrainConfig cfg;
    ObjectReader r(j, path);
    r.get("epochs", cfg.epochs);
    r.get("batch_size", cfg.batch_size);
    r.get("learning_rate", cfg.learning_rate);
    r.get("weight_decay", cfg.weight_decay);
    r.get("warmup_steps", cfg.warmup_steps);
    r.get("seed", cfg.seed);
    r.get("enable_contrastive", cfg.enable_contrastive);
    r.get("alpha", cfg.alpha);
    r.get("mask_ratio", cfg.mask_ratio);
    r.get("adjacency_window", cfg.adjacency_window);
    r.get("checkpoint_every", cfg.checkpoint_every);
    r.get("recon_warm_fraction", cfg.recon_warm_fraction);
    r.get("beta1", cfg.beta1);
    r.get("beta2", cfg.beta2);
    r.get("stop_after", cfg.stop_after);
    r.finish();
    cfg.validate();
    return cfg;
}

}  // namespace cyclemae::detail
