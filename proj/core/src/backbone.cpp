#include "cyclemae/backbone.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace cyclemae::backbone {

void ModelConfig::validate() const {
    if (channels != 3) {
        throw std::invalid_argument("ModelConfig: channels must be 3");
    }
    patch.validate();
    (void)grid();
    auto positive = [](int v, const char* name) {
        if (v < 1) {
            throw std::invalid_argument(std::string("ModelConfig: ") + name + " must be >= 1");
        }
    };
    positive(enc_depth, "enc_depth");
    positive(enc_heads, "enc_heads");
    positive(dec_width, "dec_width");
    positive(dec_depth, "dec_depth");
    positive(dec_heads, "dec_heads");
    positive(proj_depth, "proj_depth");
    positive(proj_heads, "proj_heads");
    positive(mlp_ratio, "mlp_ratio");
    if (embed_dim() % enc_heads != 0) {
        throw std::invalid_argument("ModelConfig: embed_dim must be divisible by enc_heads");
    }
    if (embed_dim() % proj_heads != 0) {
        throw std::invalid_argument("ModelConfig: embed_dim must be divisible by proj_heads");
    }
    if (dec_width % dec_heads != 0) {
        throw std::invalid_argument("ModelConfig: dec_width must be divisible by dec_heads");
    }
}

tokenizer::GridShape ModelConfig::grid() const {
    return tokenizer::grid_shape(frames, height, width, patch);
}

namespace {

class Builder {
public:
    Builder(ParamSet& params, std::uint64_t seed) : params_(params), rng_(seed) {}

    std::size_t xavier(const std::string& name, int fan_in, int fan_out) {
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        Mat w(fan_in, fan_out);
        for (Eigen::Index i = 0; i < w.size(); ++i) {
            w.data()[i] = (2.0 * uniform_unit(rng_) - 1.0) * limit;
        }
        return params_.add(name, std::move(w), true);
    }
    std::size_t normal(const std::string& name, int rows, int cols, double stddev) {
        Mat w(rows, cols);
        for (Eigen::Index i = 0; i < w.size(); ++i) {
            w.data()[i] = stddev * standard_normal(rng_);
        }
        return params_.add(name, std::move(w), false);
    }
    std::size_t constant(const std::string& name, int cols, double value) {
        return params_.add(name, Mat::Constant(1, cols, value), false);
    }

    BlockLayout block(const std::string& prefix, int width, int heads, int mlp_ratio) {
        BlockLayout b{};
        b.heads = heads;
        b.norm1_w = constant(prefix + ".norm1.weight", width, 1.0);
        b.norm1_b = constant(prefix + ".norm1.bias", width, 0.0);
        b.qkv_w = xavier(prefix + ".attn.qkv.weight", width, 3 * width);
        b.qkv_b = constant(prefix + ".attn.qkv.bias", 3 * width, 0.0);
        b.out_w = xavier(prefix + ".attn.proj.weight", width, width);
        b.out_b = constant(prefix + ".attn.proj.bias", width, 0.0);
        b.norm2_w = constant(prefix + ".norm2.weight", width, 1.0);
        b.norm2_b = constant(prefix + ".norm2.bias", width, 0.0);
        b.fc1_w = xavier(prefix + ".mlp.fc1.weight", width, mlp_ratio * width);
        b.fc1_b = constant(prefix + ".mlp.fc1.bias", mlp_ratio * width, 0.0);
        b.fc2_w = xavier(prefix + ".mlp.fc2.weight", mlp_ratio * width, width);
        b.fc2_b = constant(prefix + ".mlp.fc2.bias", width, 0.0);
        return b;
    }

private:
    ParamSet& params_;
    Rng rng_;
};

ModelLayout build(const ModelConfig& cfg, ParamSet& params, std::uint64_t seed) {
    cfg.validate();
    Builder b(params, seed);
    const int D = cfg.embed_dim();
    const int P = cfg.patch.patch_dim(cfg.channels);
    const int N = cfg.token_count();
    constexpr double kTokenStd = 0.02;

    ModelLayout L{};
    L.patch_embed = b.xavier("patch_embed.weight", P, D);
    L.enc_pos = b.normal("encoder.pos_embed", N, D, kTokenStd);
    L.enc_cls = b.normal("encoder.cls_token", 1, D, kTokenStd);
    for (int i = 0; i < cfg.enc_depth; ++i) {
        L.enc_blocks.push_back(
            b.block("encoder.blocks." + std::to_string(i), D, cfg.enc_heads, cfg.mlp_ratio));
    }
    L.enc_norm_w = b.constant("encoder.norm.weight", D, 1.0);
    L.enc_norm_b = b.constant("encoder.norm.bias", D, 0.0);

    const int W = cfg.dec_width;
    L.dec_embed_w = b.xavier("decoder.embed.weight", D, W);
    L.dec_embed_b = b.constant("decoder.embed.bias", W, 0.0);
    L.dec_miss = b.normal("decoder.miss_token", 1, W, kTokenStd);
    L.dec_pos = b.normal("decoder.pos_embed", N, W, kTokenStd);
    for (int i = 0; i < cfg.dec_depth; ++i) {
        L.dec_blocks.push_back(
            b.block("decoder.blocks." + std::to_string(i), W, cfg.dec_heads, cfg.mlp_ratio));
    }
    L.dec_norm_w = b.constant("decoder.norm.weight", W, 1.0);
    L.dec_norm_b = b.constant("decoder.norm.bias", W, 0.0);
    L.dec_head_w = b.xavier("decoder.head.weight", W, P);
    L.dec_head_b = b.constant("decoder.head.bias", P, 0.0);

    L.proj_cls = b.normal("projector.cls_token", 1, D, kTokenStd);
    for (int i = 0; i < cfg.proj_depth; ++i) {
        L.proj_blocks.push_back(
            b.block("projector.blocks." + std::to_string(i), D, cfg.proj_heads, cfg.mlp_ratio));
    }
    L.proj_norm_w = b.constant("projector.norm.weight", D, 1.0);
    L.proj_norm_b = b.constant("projector.norm.bias", D, 0.0);
    return L;
}

}  // namespace

Model::Model(ModelConfig cfg, ParamSet params, ModelLayout layout)
    : cfg_(std::move(cfg)), params_(std::move(params)), layout_(std::move(layout)) {}

Model Model::init(const ModelConfig& cfg, std::uint64_t seed) {
    ParamSet params;
    ModelLayout layout = build(cfg, params, seed);
    return Model(cfg, std::move(params), std::move(layout));
}

Model Model::from_params(const ModelConfig& cfg, ParamSet params) {
    ParamSet reference;
    ModelLayout layout = build(cfg, reference, 0);
    for (std::size_t i = 0; i < reference.size(); ++i) {
        const Parameter& want = reference[i];
        if (i >= params.size()) {
            throw std::invalid_argument("parameter '" + want.name + "' missing");
        }
        const Parameter& got = params[i];
        if (got.name != want.name) {
            throw std::invalid_argument("parameter #" + std::to_string(i) + ": expected '" +
                                        want.name + "', found '" + got.name + "'");
        }
        if (got.value.rows() != want.value.rows() || got.value.cols() != want.value.cols()) {
            throw std::invalid_argument(
                "parameter '" + want.name + "': expected shape " +
                std::to_string(want.value.rows()) + "x" + std::to_string(want.value.cols()) +
                ", found " + std::to_string(got.value.rows()) + "x" +
                std::to_string(got.value.cols()));
        }
    }
    if (params.size() != reference.size()) {
        throw std::invalid_argument("unexpected extra parameter '" +
                                    params[reference.size()].name + "'");
    }
    return Model(cfg, std::move(params), std::move(layout));
}

tokenizer::EmbedParams Model::embed_params() const {
    return tokenizer::EmbedParams{params_[layout_.patch_embed].value,
                                  params_[layout_.enc_pos].value};
}

// ---------------------------------------------------------------------------

namespace {

ad::Var run_block(ad::Tape& t, const BlockLayout& b, ad::Var x) {
    ad::Var h = ad::layer_norm(t, x, t.param(b.norm1_w), t.param(b.norm1_b));
    h = ad::affine(t, h, t.param(b.qkv_w), t.param(b.qkv_b));
    h = ad::attention(t, h, b.heads);
    h = ad::affine(t, h, t.param(b.out_w), t.param(b.out_b));
    x = ad::add(t, x, h);
    h = ad::layer_norm(t, x, t.param(b.norm2_w), t.param(b.norm2_b));
    h = ad::affine(t, h, t.param(b.fc1_w), t.param(b.fc1_b));
    h = ad::gelu(t, h);
    h = ad::affine(t, h, t.param(b.fc2_w), t.param(b.fc2_b));
    return ad::add(t, x, h);
}

std::vector<int> iota_rows(int begin, int end) {
    std::vector<int> rows(static_cast<std::size_t>(end - begin));
    std::iota(rows.begin(), rows.end(), begin);
    return rows;
}

}  // namespace

ad::Var embed_rows(ad::Tape& tape, const Model& model, const tokenizer::PatchGrid& grid,
                   std::span<const int> rows) {
    const ModelLayout& L = model.layout();
    const auto& cfg = model.config();
    const auto shape = cfg.grid();
    if (grid.groups != shape.groups || grid.positions != shape.positions() ||
        grid.patch_dim() != cfg.patch.patch_dim(cfg.channels)) {
        throw std::invalid_argument("embed_rows: patch grid does not match the model geometry");
    }
    Mat selected(static_cast<Eigen::Index>(rows.size()), grid.patch_dim());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        selected.row(static_cast<Eigen::Index>(k)) = grid.patches.row(rows[k]);
    }
    ad::Var projected = ad::matmul(tape, tape.constant(std::move(selected)),
                                   tape.param(L.patch_embed));
    ad::Var pos = ad::gather_rows(tape, tape.param(L.enc_pos), rows);
    return ad::add(tape, projected, pos);
}

EncoderOutput encode(ad::Tape& tape, const Model& model, ad::Var visible_tokens) {
    const ModelLayout& L = model.layout();
    if (tape.value(visible_tokens).rows() == 0) {
        throw std::invalid_argument("encode: no visible tokens");
    }
    if (tape.value(visible_tokens).cols() != model.config().embed_dim()) {
        throw std::invalid_argument("encode: token width does not match embed_dim");
    }
    const int V = static_cast<int>(tape.value(visible_tokens).rows());
    const ad::Var parts[] = {tape.param(L.enc_cls), visible_tokens};
    ad::Var x = ad::concat_rows(tape, parts);
    for (const auto& b : L.enc_blocks) {
        x = run_block(tape, b, x);
    }
    x = ad::layer_norm(tape, x, tape.param(L.enc_norm_w), tape.param(L.enc_norm_b));
    const auto latent_rows = iota_rows(1, V + 1);
    const int cls_row[] = {0};
    return EncoderOutput{ad::gather_rows(tape, x, latent_rows), ad::gather_rows(tape, x, cls_row)};
}

ad::Var decode(ad::Tape& tape, const Model& model, ad::Var latents,
               const masking::VisibleIndex& index, std::span<const int> output_rows) {
    const ModelLayout& L = model.layout();
    const int N = model.config().token_count();
    if (index.groups * index.positions != N ||
        tape.value(latents).rows() != static_cast<Eigen::Index>(index.rows.size())) {
        throw std::invalid_argument("decode: latents do not match the coordinate map");
    }
    ad::Var y = ad::affine(tape, latents, tape.param(L.dec_embed_w), tape.param(L.dec_embed_b));
    y = ad::assemble_rows(tape, y, tape.param(L.dec_miss), index.rows, N);
    y = ad::add(tape, y, tape.param(L.dec_pos));
    for (const auto& b : L.dec_blocks) {
        y = run_block(tape, b, y);
    }
    y = ad::layer_norm(tape, y, tape.param(L.dec_norm_w), tape.param(L.dec_norm_b));
    bool all_rows = static_cast<int>(output_rows.size()) == N;
    for (int r = 0; all_rows && r < N; ++r) {
        all_rows = output_rows[static_cast<std::size_t>(r)] == r;
    }
    if (!all_rows) {
        y = ad::gather_rows(tape, y, output_rows);
    }
    return ad::affine(tape, y, tape.param(L.dec_head_w), tape.param(L.dec_head_b));
}

ad::Var project_groups(ad::Tape& tape, const Model& model, ad::Var latents,
                       const masking::VisibleIndex& index, std::span<const int> groups) {
    const ModelLayout& L = model.layout();
    if (model.config().stop_proj_grad) {
        latents = ad::detach(tape, latents);
    }
    std::vector<ad::Var> outputs;
    outputs.reserve(groups.size());
    const int cls_row[] = {0};
    for (const int g : groups) {
        if (g < 0 || g >= index.groups) {
            throw std::out_of_range("project_groups: group " + std::to_string(g) +
                                    " out of range");
        }
        const int begin = index.group_offsets[static_cast<std::size_t>(g)];
        const int end = index.group_offsets[static_cast<std::size_t>(g) + 1];
        if (end == begin) {
            throw std::invalid_argument("project_groups: temporal group " + std::to_string(g) +
                                        " has no visible tokens");
        }
        const auto rows = iota_rows(begin, end);
        const ad::Var parts[] = {tape.param(L.proj_cls), ad::gather_rows(tape, latents, rows)};
        ad::Var x = ad::concat_rows(tape, parts);
        for (const auto& b : L.proj_blocks) {
            x = run_block(tape, b, x);
        }
        x = ad::layer_norm(tape, x, tape.param(L.proj_norm_w), tape.param(L.proj_norm_b));
        outputs.push_back(ad::gather_rows(tape, x, cls_row));
    }
    return ad::concat_rows(tape, outputs);
}

// ---------------------------------------------------------------------------

tokenizer::TokenGrid embed(const Model& model, const tokenizer::PatchGrid& grid) {
    return tokenizer::embed_tokens(grid, model.embed_params());
}

LatentTokens encode(const Model& model, const masking::VisibleTokens& visible) {
    ad::Tape tape(&model.params());
    const EncoderOutput out = encode(tape, model, tape.constant(visible.tokens));
    return LatentTokens{tape.value(out.latents), tape.value(out.global), visible.index};
}

tokenizer::PatchGrid reconstruct(const Model& model, const LatentTokens& latents,
                                 const masking::MaskPlan& plan) {
    const auto expected = masking::visible_index(plan);
    if (expected.rows != latents.index.rows) {
        throw std::invalid_argument("reconstruct: latent coordinates do not match the mask plan");
    }
    ad::Tape tape(&model.params());
    const int N = model.config().token_count();
    const auto all_rows = iota_rows(0, N);
    const ad::Var pred =
        decode(tape, model, tape.constant(latents.latents), latents.index, all_rows);
    tokenizer::PatchGrid grid;
    grid.groups = plan.groups;
    grid.positions = plan.positions;
    grid.channels = model.config().channels;
    grid.patches = tape.value(pred);
    return grid;
}

FrameEmbeddings project_frames(const Model& model, const LatentTokens& latents) {
    ad::Tape tape(&model.params());
    const auto groups = iota_rows(0, latents.index.groups);
    const ad::Var z =
        project_groups(tape, model, tape.constant(latents.latents), latents.index, groups);
    return tape.value(z);
}

}  // namespace cyclemae::backbone
