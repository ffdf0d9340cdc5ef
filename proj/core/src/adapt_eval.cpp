#include "cyclemae/adapt_eval.hpp"

#include "cyclemae/autograd.hpp"
#include "cyclemae/optimizer.hpp"
#include "cyclemae/pretrain.hpp"

#include "json_io.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace cyclemae::adapt {

std::string to_string(Task task) {
    return task == Task::segmentation ? "segmentation" : "classification";
}

Task parse_task(const std::string& text) {
    if (text == "classification") return Task::classification;
    if (text == "segmentation") return Task::segmentation;
    throw std::invalid_argument("unknown task '" + text + "'");
}

namespace {

int cells_per_token(const backbone::ModelConfig& cfg) {
    return cfg.patch.patch_t * cfg.patch.patch_h * cfg.patch.patch_w;
}

int head_width(Task task, int classes, const backbone::ModelConfig& cfg) {
    return task == Task::classification ? classes : classes * cells_per_token(cfg);
}

}  // namespace

void TaskHead::validate(const backbone::ModelConfig& cfg) const {
    if (classes < 2) {
        throw std::invalid_argument("task head needs at least 2 classes");
    }
    const int width = head_width(task, classes, cfg);
    if (weight.rows() != cfg.embed_dim() || weight.cols() != width || bias.cols() != width) {
        throw std::invalid_argument("task head shape does not match " + std::to_string(classes) +
                                    " classes on embedding width " +
                                    std::to_string(cfg.embed_dim()));
    }
    if (task == Task::classification &&
        (feature_mean.cols() != cfg.embed_dim() || feature_scale.cols() != cfg.embed_dim())) {
        throw std::invalid_argument("classification head lacks feature standardisation");
    }
}

TaskHead zero_head(Task task, int classes, const backbone::ModelConfig& cfg) {
    TaskHead h;
    h.task = task;
    h.classes = classes;
    const int width = head_width(task, classes, cfg);
    h.weight = Mat::Zero(cfg.embed_dim(), width);
    h.bias = RowVec::Zero(width);
    if (task == Task::classification) {
        h.feature_mean = RowVec::Zero(cfg.embed_dim());
        h.feature_scale = RowVec::Ones(cfg.embed_dim());
    }
    return h;
}

namespace {

backbone::LatentTokens encode_full(const backbone::Model& model, const video::VideoClip& clip) {
    const tokenizer::PatchGrid grid = tokenizer::patchify(clip, model.config().patch);
    const masking::MaskPlan plan = masking::full_visibility(grid.groups, grid.positions);
    return backbone::encode(model, masking::apply_mask(backbone::embed(model, grid), plan));
}

RowVec pool(const backbone::LatentTokens& lat) {
    RowVec f = lat.latents.colwise().sum() + lat.global;
    return f / static_cast<double>(lat.latents.rows() + 1);
}

RowVec standardize(const RowVec& f, const TaskHead& head) {
    return (f - head.feature_mean).cwiseQuotient(head.feature_scale);
}

void check_clip(const backbone::Model& model, const video::VideoClip& clip) {
    const backbone::ModelConfig& c = model.config();
    if (clip.frames != c.frames || clip.height != c.height || clip.width != c.width ||
        clip.channels != c.channels) {
        throw std::invalid_argument("clip '" + clip.source_id +
                                    "' does not match the model input shape");
    }
}

}  // namespace

RowVec pooled_features(const backbone::Model& model, const video::VideoClip& clip) {
    check_clip(model, clip);
    return pool(encode_full(model, clip));
}

RowVec classify(const backbone::Model& model, const video::VideoClip& clip, const TaskHead& head) {
    if (head.task != Task::classification) {
        throw std::invalid_argument("classify needs a classification head");
    }
    head.validate(model.config());
    return standardize(pooled_features(model, clip), head) * head.weight + head.bias;
}

video::LabelMap ScoreVolume::argmax() const {
    video::LabelMap out = video::LabelMap::zeros(frames, height, width);
    for (std::size_t p = 0; p < out.data.size(); ++p) {
        const double* s = data.data() + p * static_cast<std::size_t>(classes);
        int best = 0;
        for (int k = 1; k < classes; ++k) {
            if (s[k] > s[best]) {
                best = k;
            }
        }
        out.data[p] = static_cast<std::uint8_t>(best);
    }
    return out;
}

namespace {

ScoreVolume unpatchify_logits(const Mat& logits, const backbone::ModelConfig& cfg, int classes) {
    const tokenizer::GridShape g = cfg.grid();
    const tokenizer::PatchConfig& p = cfg.patch;
    const int cells = cells_per_token(cfg);
    ScoreVolume v;
    v.frames = cfg.frames;
    v.height = cfg.height;
    v.width = cfg.width;
    v.classes = classes;
    v.data.assign(static_cast<std::size_t>(cfg.frames) * cfg.height * cfg.width * classes, 0.0);
    for (int group = 0; group < g.groups; ++group) {
        for (int i = 0; i < g.positions(); ++i) {
            const int r = group * g.positions() + i;
            const int ty = i / g.cols;
            const int tx = i % g.cols;
            for (int dt = 0; dt < p.patch_t; ++dt) {
                for (int dy = 0; dy < p.patch_h; ++dy) {
                    for (int dx = 0; dx < p.patch_w; ++dx) {
                        const int q = (dt * p.patch_h + dy) * p.patch_w + dx;
                        const std::size_t pixel =
                            (static_cast<std::size_t>(group * p.patch_t + dt) * cfg.height +
                             static_cast<std::size_t>(ty * p.patch_h + dy)) *
                                cfg.width +
                            static_cast<std::size_t>(tx * p.patch_w + dx);
                        for (int k = 0; k < classes; ++k) {
                            v.data[pixel * static_cast<std::size_t>(classes) +
                                   static_cast<std::size_t>(k)] = logits(r, k * cells + q);
                        }
                    }
                }
            }
        }
    }
    return v;
}

/// Per-token labels in the (token, cell) layout used by the segmentation head.
std::vector<int> token_labels(const video::LabelMap& mask, const backbone::ModelConfig& cfg) {
    const tokenizer::GridShape g = cfg.grid();
    const tokenizer::PatchConfig& p = cfg.patch;
    const int cells = cells_per_token(cfg);
    std::vector<int> out(static_cast<std::size_t>(g.groups * g.positions() * cells));
    for (int group = 0; group < g.groups; ++group) {
        for (int i = 0; i < g.positions(); ++i) {
            const int r = group * g.positions() + i;
            for (int dt = 0; dt < p.patch_t; ++dt) {
                for (int dy = 0; dy < p.patch_h; ++dy) {
                    for (int dx = 0; dx < p.patch_w; ++dx) {
                        const int q = (dt * p.patch_h + dy) * p.patch_w + dx;
                        out[static_cast<std::size_t>(r * cells + q)] =
                            mask.at(group * p.patch_t + dt, (i / g.cols) * p.patch_h + dy,
                                    (i % g.cols) * p.patch_w + dx);
                    }
                }
            }
        }
    }
    return out;
}

}  // namespace

ScoreVolume decode_segmentation(const backbone::Model& model, const video::VideoClip& clip,
                                const TaskHead& head) {
    if (head.task != Task::segmentation) {
        throw std::invalid_argument("decode_segmentation needs a segmentation head");
    }
    head.validate(model.config());
    check_clip(model, clip);
    const backbone::LatentTokens lat = encode_full(model, clip);
    const Mat logits = (lat.latents * head.weight).rowwise() + head.bias;
    return unpatchify_logits(logits, model.config(), head.classes);
}

// ---------------------------------------------------------------------------

void FinetuneConfig::validate() const {
    if (classes < 2) throw std::invalid_argument("finetune.classes must be >= 2");
    if (!(label_fraction > 0.0 && label_fraction <= 1.0)) {
        throw std::invalid_argument("finetune.label_fraction must lie in (0, 1]");
    }
    if (epochs < 1) throw std::invalid_argument("finetune.epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("finetune.batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("finetune.learning_rate must be > 0");
    if (!(encoder_learning_rate > 0.0)) {
        throw std::invalid_argument("finetune.encoder_learning_rate must be > 0");
    }
    if (weight_decay < 0.0) throw std::invalid_argument("finetune.weight_decay must be >= 0");
    augment.validate();
}

std::vector<std::size_t> label_subsample(const std::vector<LabeledClip>& samples,
                                         const std::vector<std::size_t>& indices,
                                         double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0)) {
        throw std::invalid_argument("label_fraction must lie in (0, 1]");
    }
    if (fraction == 1.0) {
        return indices;
    }
    std::map<int, std::vector<std::size_t>> strata;
    for (const std::size_t i : indices) {
        strata[samples.at(i).label.value_or(-1)].push_back(i);
    }
    std::vector<bool> keep(samples.size(), false);
    for (auto& [label, members] : strata) {
        Rng rng(derive_seed(seed, 0x4c414245, static_cast<std::uint64_t>(label + 1)));
        for (std::size_t i = members.size(); i > 1; --i) {
            std::swap(members[i - 1], members[uniform_index(rng, i)]);
        }
        const auto n = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(members.size()))));
        for (std::size_t k = 0; k < std::min(n, members.size()); ++k) {
            keep[members[k]] = true;
        }
    }
    std::vector<std::size_t> out;
    for (const std::size_t i : indices) {
        if (keep[i]) {
            out.push_back(i);
        }
    }
    return out;
}

std::optional<double> MetricReport::value(const std::string& name) const {
    for (const auto& [k, v] : values) {
        if (k == name) {
            return v;
        }
    }
    return std::nullopt;
}

std::string to_json(const MetricReport& r) {
    nlohmann::ordered_json j;
    j["task"] = to_string(r.task);
    j["split"] = r.split;
    j["label_fraction"] = r.label_fraction;
    j["samples"] = r.samples;
    nlohmann::ordered_json values = nlohmann::ordered_json::object();
    for (const auto& [k, v] : r.values) {
        values[k] = v;
    }
    j["values"] = values;
    nlohmann::ordered_json classes = nlohmann::ordered_json::array();
    for (const ClassMetrics& c : r.per_class) {
        nlohmann::ordered_json e;
        e["class"] = c.cls;
        e["dice"] = c.dice;
        e["iou"] = c.iou;
        e["hd95"] = c.hd95 ? nlohmann::ordered_json(*c.hd95) : nlohmann::ordered_json(nullptr);
        e["assd"] = c.assd ? nlohmann::ordered_json(*c.assd) : nlohmann::ordered_json(nullptr);
        e["surface_missing"] = c.surface_missing;
        classes.push_back(e);
    }
    j["per_class"] = classes;
    j["warnings"] = r.warnings;
    return j.dump(2);
}

std::string to_tsv(const MetricReport& r) {
    std::ostringstream out;
    out << std::setprecision(6) << std::fixed;
    auto opt = [&](const std::optional<double>& v) {
        std::ostringstream s;
        s << std::setprecision(4) << std::fixed;
        if (v) {
            s << *v;
        } else {
            s << "NA";
        }
        return s.str();
    };
    if (r.task == Task::classification) {
        out << "task\tsplit\tlabel_fraction\tsamples";
        for (const auto& [k, v] : r.values) {
            out << '\t' << k;
        }
        out << '\n' << to_string(r.task) << '\t' << r.split << '\t' << r.label_fraction << '\t'
            << r.samples;
        for (const auto& [k, v] : r.values) {
            out << '\t' << v;
        }
        out << '\n';
        return out.str();
    }
    out << "class\tDice [%]\tIoU [%]\tHD95\tASSD\n";
    out << std::setprecision(2);
    for (const ClassMetrics& c : r.per_class) {
        out << c.cls << '\t' << 100.0 * c.dice << '\t' << 100.0 * c.iou << '\t' << opt(c.hd95)
            << '\t' << opt(c.assd) << '\n';
    }
    out << "mean\t" << 100.0 * r.value("mDice").value_or(0.0) << '\t'
        << 100.0 * r.value("mIoU").value_or(0.0) << '\t' << opt(r.value("mHD95")) << '\t'
        << opt(r.value("mASSD")) << '\n';
    return out.str();
}

namespace {

void check_samples(const std::vector<LabeledClip>& samples, Task task, int classes,
                   const backbone::ModelConfig& cfg) {
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const LabeledClip& s = samples[i];
        const std::string id = s.clip.source_id.empty() ? "#" + std::to_string(i) : s.clip.source_id;
        if (s.clip.frames != cfg.frames || s.clip.height != cfg.height ||
            s.clip.width != cfg.width || s.clip.channels != cfg.channels) {
            throw std::invalid_argument("sample '" + id + "' does not match the model input shape");
        }
        if (task == Task::classification) {
            if (!s.label || *s.label < 0 || *s.label >= classes) {
                throw std::invalid_argument("sample '" + id + "' has no class label in [0, " +
                                            std::to_string(classes) + ")");
            }
        } else {
            if (!s.mask || s.mask->frames != s.clip.frames || s.mask->height != s.clip.height ||
                s.mask->width != s.clip.width) {
                throw std::invalid_argument("sample '" + id +
                                            "' has no label map matching the clip");
            }
            for (const std::uint8_t v : s.mask->data) {
                if (v >= classes) {
                    throw std::invalid_argument("sample '" + id + "' has label " +
                                                std::to_string(v) + " outside [0, " +
                                                std::to_string(classes) + ")");
                }
            }
        }
    }
}

int argmax_row(const RowVec& scores) {
    int best = 0;
    for (int k = 1; k < scores.cols(); ++k) {
        if (scores(k) > scores(best)) {
            best = k;
        }
    }
    return best;
}

}  // namespace

MetricReport evaluate(const backbone::Model& model, const TaskHead& head,
                      const std::vector<LabeledClip>& samples, const std::string& split,
                      double label_fraction) {
    head.validate(model.config());
    check_samples(samples, head.task, head.classes, model.config());
    if (samples.empty()) {
        throw std::invalid_argument("evaluate: no samples in split '" + split + "'");
    }
    MetricReport r;
    r.task = head.task;
    r.split = split;
    r.label_fraction = label_fraction;
    r.samples = static_cast<int>(samples.size());

    if (head.task == Task::classification) {
        std::vector<int> pred;
        std::vector<int> labels;
        std::vector<double> positive_prob;
        for (const LabeledClip& s : samples) {
            const RowVec scores = classify(model, s.clip, head);
            pred.push_back(argmax_row(scores));
            labels.push_back(*s.label);
            if (head.classes == 2) {
                positive_prob.push_back(1.0 / (1.0 + std::exp(scores(0) - scores(1))));
            }
        }
        const metrics::ClassificationMetrics m =
            metrics::classification_metrics(pred, labels, head.classes);
        r.values = {{"accuracy", m.accuracy},
                    {"precision", m.precision},
                    {"recall", m.recall},
                    {"f1", m.f1}};
        if (m.zero_division) {
            r.warnings.push_back("zero division in precision/recall/f1; affected terms set to 0");
        }
        if (head.classes == 2) {
            const bool both = std::find(labels.begin(), labels.end(), 0) != labels.end() &&
                              std::find(labels.begin(), labels.end(), 1) != labels.end();
            if (both) {
                r.values.emplace_back("auroc", metrics::roc_auc(positive_prob, labels));
            } else {
                r.warnings.push_back("auroc undefined: only one class in split");
            }
        }
        return r;
    }

    const int regions = head.classes - 1;
    std::vector<ClassMetrics> per(static_cast<std::size_t>(regions));
    std::vector<double> hd_sum(per.size(), 0.0);
    std::vector<double> as_sum(per.size(), 0.0);
    std::vector<int> defined(per.size(), 0);
    for (const LabeledClip& s : samples) {
        const video::LabelMap pred = decode_segmentation(model, s.clip, head).argmax();
        for (int k = 1; k <= regions; ++k) {
            ClassMetrics& c = per[static_cast<std::size_t>(k - 1)];
            const metrics::Overlap o = metrics::overlap_metrics(pred, *s.mask, k);
            c.dice += o.dice;
            c.iou += o.iou;
            if (const auto sd = metrics::surface_metrics(pred, *s.mask, k)) {
                hd_sum[static_cast<std::size_t>(k - 1)] += sd->hd95;
                as_sum[static_cast<std::size_t>(k - 1)] += sd->assd;
                ++defined[static_cast<std::size_t>(k - 1)];
            } else {
                ++c.surface_missing;
            }
        }
    }
    double mdice = 0.0, miou = 0.0, mhd = 0.0, mas = 0.0;
    int surface_classes = 0;
    for (int k = 1; k <= regions; ++k) {
        const auto i = static_cast<std::size_t>(k - 1);
        ClassMetrics& c = per[i];
        c.cls = k;
        c.dice /= static_cast<double>(samples.size());
        c.iou /= static_cast<double>(samples.size());
        mdice += c.dice / regions;
        miou += c.iou / regions;
        if (defined[i] > 0) {
            c.hd95 = hd_sum[i] / defined[i];
            c.assd = as_sum[i] / defined[i];
            mhd += *c.hd95;
            mas += *c.assd;
            ++surface_classes;
        }
        if (c.surface_missing > 0) {
            r.warnings.push_back("class " + std::to_string(k) + ": surface distance missing for " +
                                 std::to_string(c.surface_missing) + " sample(s)");
        }
    }
    r.values = {{"mDice", mdice}, {"mIoU", miou}};
    if (surface_classes > 0) {
        r.values.emplace_back("mHD95", mhd / surface_classes);
        r.values.emplace_back("mASSD", mas / surface_classes);
    }
    r.per_class = std::move(per);
    return r;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::uint64_t kOrderTag = 0x4f524452;    // "ORDR"
constexpr std::uint64_t kAugmentTag = 0x41554731;  // "AUG1"

bool is_encoder_param(const std::string& name) {
    return name.rfind("patch_embed.", 0) == 0 || name.rfind("encoder.", 0) == 0;
}

/// Training-set feature statistics folded into the classification head.
void fit_standardization(const backbone::Model& model, const std::vector<LabeledClip>& train,
                         const std::vector<std::size_t>& idx, TaskHead& head) {
    const int d = model.config().embed_dim();
    Mat feats(static_cast<Eigen::Index>(idx.size()), d);
    for (std::size_t k = 0; k < idx.size(); ++k) {
        feats.row(static_cast<Eigen::Index>(k)) = pooled_features(model, train[idx[k]].clip);
    }
    head.feature_mean = feats.colwise().mean();
    const Mat centered = feats.rowwise() - head.feature_mean;
    head.feature_scale =
        (centered.cwiseProduct(centered).colwise().sum() / static_cast<double>(idx.size()))
            .cwiseSqrt();
    for (Eigen::Index c = 0; c < head.feature_scale.cols(); ++c) {
        head.feature_scale(c) = std::max(head.feature_scale(c), 1e-6);
    }
}

}  // namespace

FinetuneResult finetune(const backbone::Model& pretrained, const std::vector<LabeledClip>& train,
                        const std::vector<LabeledClip>& test, const FinetuneConfig& cfg) {
    cfg.validate();
    const backbone::ModelConfig& mcfg = pretrained.config();
    check_samples(train, cfg.task, cfg.classes, mcfg);
    check_samples(test, cfg.task, cfg.classes, mcfg);
    if (train.empty()) {
        throw std::invalid_argument("finetune: empty training split");
    }

    std::vector<std::size_t> all(train.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    const std::vector<std::size_t> idx = label_subsample(train, all, cfg.label_fraction, cfg.seed);

    FinetuneResult result{pretrained, zero_head(cfg.task, cfg.classes, mcfg), {}, {}, idx.size()};
    backbone::Model& model = result.model;
    TaskHead& head = result.head;
    if (cfg.task == Task::classification) {
        fit_standardization(model, train, idx, head);
    }

    ParamSet head_params;
    head_params.add("head.weight", head.weight, true);
    head_params.add("head.bias", head.bias, false);
    AdamWConfig hcfg;
    hcfg.weight_decay = cfg.weight_decay;
    AdamW head_opt(head_params, hcfg);
    AdamW enc_opt(model.params(), hcfg);
    std::vector<bool> enc_active;
    for (const Parameter& p : model.params()) {
        enc_active.push_back(is_encoder_param(p.name));
    }

    const int cells = cells_per_token(mcfg);
    const int groups = cfg.task == Task::classification ? 1 : cells;
    const auto per_epoch = static_cast<std::int64_t>(
        (idx.size() + static_cast<std::size_t>(cfg.batch_size) - 1) /
        static_cast<std::size_t>(cfg.batch_size));
    const std::int64_t total = per_epoch * cfg.epochs;

    // Frozen encoder without augmentation: encoder outputs never change.
    std::map<std::size_t, backbone::LatentTokens> cache;
    const bool cacheable = cfg.freeze_encoder && !cfg.augment_enabled;

    std::int64_t step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const std::vector<std::size_t> order =
            pretrain::epoch_order(derive_seed(cfg.seed, kOrderTag), epoch, idx.size());
        double epoch_loss = 0.0;
        for (std::int64_t b = 0; b < per_epoch; ++b, ++step) {
            const auto begin = static_cast<std::size_t>(b * cfg.batch_size);
            const std::size_t end =
                std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
            Gradients head_grads(head_params);
            Gradients enc_grads(model.params());
            double batch_loss = 0.0;
            for (std::size_t k = begin; k < end; ++k) {
                const std::size_t i = idx[order[k]];
                LabeledClip sample;
                const LabeledClip* src = &train[i];
                if (cfg.augment_enabled) {
                    Rng rng(derive_seed(cfg.seed, kAugmentTag, static_cast<std::uint64_t>(epoch), i));
                    sample = augment(train[i], cfg.augment, rng);
                    src = &sample;
                }
                std::vector<int> labels;
                if (cfg.task == Task::classification) {
                    labels.push_back(*src->label);
                } else {
                    labels = token_labels(*src->mask, mcfg);
                }

                ad::Tape tape(&model.params());
                ad::Var features;
                if (cfg.freeze_encoder) {
                    const backbone::LatentTokens* lat = nullptr;
                    backbone::LatentTokens fresh;
                    if (cacheable) {
                        auto it = cache.find(i);
                        if (it == cache.end()) {
                            it = cache.emplace(i, encode_full(model, src->clip)).first;
                        }
                        lat = &it->second;
                    } else {
                        fresh = encode_full(model, src->clip);
                        lat = &fresh;
                    }
                    features = tape.constant(cfg.task == Task::classification
                                                 ? Mat(standardize(pool(*lat), head))
                                                 : lat->latents);
                } else {
                    const tokenizer::PatchGrid grid = tokenizer::patchify(src->clip, mcfg.patch);
                    std::vector<int> rows(static_cast<std::size_t>(grid.token_count()));
                    std::iota(rows.begin(), rows.end(), 0);
                    const backbone::EncoderOutput enc =
                        backbone::encode(tape, model, backbone::embed_rows(tape, model, grid, rows));
                    if (cfg.task == Task::classification) {
                        const ad::Var parts[] = {enc.latents, enc.global};
                        ad::Var f = ad::mean_rows(tape, ad::concat_rows(tape, parts));
                        f = ad::add_row(tape, f, tape.constant(-head.feature_mean));
                        const Mat inv = head.feature_scale.cwiseInverse().asDiagonal();
                        features = ad::matmul(tape, f, tape.constant(inv));
                    } else {
                        features = enc.latents;
                    }
                }
                const ad::Var w = tape.push(head_params[0].value, true, {});
                const ad::Var bias = tape.push(head_params[1].value, true, {});
                const ad::Var logits = ad::affine(tape, features, w, bias);
                const ad::Var loss =
                    ad::grouped_cross_entropy(tape, logits, labels, cfg.classes, groups);
                batch_loss += tape.value(loss)(0, 0);
                tape.backward(loss);
                if (tape.grad(w).size() > 0) head_grads[0] += tape.grad(w);
                if (tape.grad(bias).size() > 0) head_grads[1] += tape.grad(bias);
                if (!cfg.freeze_encoder) {
                    tape.accumulate(enc_grads);
                }
            }
            const double inv = 1.0 / static_cast<double>(end - begin);
            head_grads.scale(inv);
            head_opt.step(head_params, head_grads, scheduled_lr(cfg.learning_rate, step, 0, total));
            if (!cfg.freeze_encoder) {
                enc_grads.scale(inv);
                enc_opt.step(model.params(), enc_grads,
                             scheduled_lr(cfg.encoder_learning_rate, step, 0, total), &enc_active);
            }
            epoch_loss += batch_loss * inv;
        }
        result.epoch_loss.push_back(epoch_loss / static_cast<double>(per_epoch));
    }
    head.weight = head_params[0].value;
    head.bias = head_params[1].value;
    if (!test.empty()) {
        result.report = evaluate(model, head, test, "test", cfg.label_fraction);
    }
    return result;
}

checkpoint::Checkpoint to_checkpoint(const FinetuneResult& result, const FinetuneConfig& cfg) {
    checkpoint::Checkpoint ckpt;
    ckpt.model_config = result.model.config();
    ckpt.params = result.model.params();
    ckpt.extra.add("head.weight", result.head.weight, true);
    ckpt.extra.add("head.bias", result.head.bias, false);
    if (result.head.task == Task::classification) {
        ckpt.extra.add("head.feature_mean", result.head.feature_mean, false);
        ckpt.extra.add("head.feature_scale", result.head.feature_scale, false);
    }
    ckpt.metadata["kind"] = "finetune";
    ckpt.metadata["task"] = to_string(result.head.task);
    ckpt.metadata["classes"] = std::to_string(result.head.classes);
    ckpt.metadata["label_fraction"] = detail::json(cfg.label_fraction).dump();
    ckpt.metadata["freeze_encoder"] = cfg.freeze_encoder ? "true" : "false";
    ckpt.metadata["train_count"] = std::to_string(result.train_count);
    return ckpt;
}

TaskHead head_from_checkpoint(const checkpoint::Checkpoint& ckpt) {
    const auto kind = ckpt.metadata.find("kind");
    if (kind == ckpt.metadata.end() || kind->second != "finetune") {
        throw std::invalid_argument("checkpoint does not hold a fine-tuned task head");
    }
    TaskHead h;
    h.task = parse_task(ckpt.metadata.at("task"));
    h.classes = std::stoi(ckpt.metadata.at("classes"));
    auto tensor = [&](const char* name) -> const Mat& {
        if (!ckpt.extra.contains(name)) {
            throw std::invalid_argument(std::string("checkpoint lacks tensor '") + name + "'");
        }
        return ckpt.extra[ckpt.extra.index_of(name)].value;
    };
    h.weight = tensor("head.weight");
    h.bias = tensor("head.bias");
    if (h.task == Task::classification) {
        h.feature_mean = tensor("head.feature_mean");
        h.feature_scale = tensor("head.feature_scale");
    }
    h.validate(ckpt.model_config);
    return h;
}

std::vector<LabeledClip> to_labeled(const std::vector<video::StoredSample>& samples,
                                    video::Split split) {
    std::vector<LabeledClip> out;
    for (const video::StoredSample& s : samples) {
        if (s.split != split) {
            continue;
        }
        out.push_back({s.clip, s.meta.class_label, s.mask});
    }
    return out;
}

}  // namespace cyclemae::adapt
