#pragma once

#include "cyclemae/autograd.hpp"
#include "cyclemae/masking.hpp"
#include "cyclemae/params.hpp"
#include "cyclemae/tokenizer.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace cyclemae::backbone {

/// Network geometry. Input dimensions are part of the configuration because
/// the learned positional tables are sized per token grid.
struct ModelConfig {
    int frames = 32;
    int height = 64;
    int width = 64;
    int channels = 3;
    tokenizer::PatchConfig patch{};
    int enc_depth = 2;
    int enc_heads = 4;
    int dec_width = 32;
    int dec_depth = 1;
    int dec_heads = 4;
    int proj_depth = 1;
    int proj_heads = 4;
    int mlp_ratio = 4;
    /// Block gradients of the contrastive loss at the projector input.
    bool stop_proj_grad = false;

    void validate() const;
    int embed_dim() const { return patch.embed_dim; }
    tokenizer::GridShape grid() const;
    int token_count() const { return grid().groups * grid().positions(); }
    bool operator==(const ModelConfig&) const = default;
};

/// Parameter indices of one pre-norm transformer block.
struct BlockLayout {
    std::size_t norm1_w, norm1_b, qkv_w, qkv_b, out_w, out_b;
    std::size_t norm2_w, norm2_b, fc1_w, fc1_b, fc2_w, fc2_b;
    int heads;
};

struct ModelLayout {
    std::size_t patch_embed;
    std::size_t enc_pos, enc_cls;
    std::vector<BlockLayout> enc_blocks;
    std::size_t enc_norm_w, enc_norm_b;
    std::size_t dec_embed_w, dec_embed_b, dec_miss, dec_pos;
    std::vector<BlockLayout> dec_blocks;
    std::size_t dec_norm_w, dec_norm_b, dec_head_w, dec_head_b;
    std::size_t proj_cls;
    std::vector<BlockLayout> proj_blocks;
    std::size_t proj_norm_w, proj_norm_b;
};

class Model {
public:
    /// Deterministic random initialisation from `seed`.
    static Model init(const ModelConfig& cfg, std::uint64_t seed);
    /// Adopts an existing parameter set after checking every name and shape
    /// against the layout `cfg` implies. Throws naming the first mismatch.
    static Model from_params(const ModelConfig& cfg, ParamSet params);

    const ModelConfig& config() const { return cfg_; }
    const ModelLayout& layout() const { return layout_; }
    const ParamSet& params() const { return params_; }
    ParamSet& params() { return params_; }

    tokenizer::EmbedParams embed_params() const;

private:
    Model(ModelConfig cfg, ParamSet params, ModelLayout layout);

    ModelConfig cfg_;
    ParamSet params_;
    ModelLayout layout_;
};

// ---------------------------------------------------------------------------
// Graph builders (differentiable).

/// Embedded tokens for the listed flat token indices: patch rows times the
/// projection plus positional rows. Only the listed rows enter the graph.
ad::Var embed_rows(ad::Tape& tape, const Model& model, const tokenizer::PatchGrid& grid,
                   std::span<const int> rows);

struct EncoderOutput {
    ad::Var latents;  // V x D, same order as the input tokens
    ad::Var global;   // 1 x D, encoder [CLS] state
};

/// Joint self-attention over [CLS] + visible tokens.
EncoderOutput encode(ad::Tape& tape, const Model& model, ad::Var visible_tokens);

/// Decoder predictions (one patch per row) for the flat token indices in
/// `output_rows`. Visible latents are placed at index.rows, [MISS] elsewhere.
ad::Var decode(ad::Tape& tape, const Model& model, ad::Var latents,
               const masking::VisibleIndex& index, std::span<const int> output_rows);

/// Projector [CLS] output for each listed temporal group (|groups| x D).
ad::Var project_groups(ad::Tape& tape, const Model& model, ad::Var latents,
                       const masking::VisibleIndex& index, std::span<const int> groups);

// ---------------------------------------------------------------------------
// Inference wrappers.

struct LatentTokens {
    Mat latents;  // V x D grouped by temporal group
    RowVec global;
    masking::VisibleIndex index;
};

/// Per temporal group [CLS] embedding, N_T x D.
using FrameEmbeddings = Mat;

tokenizer::TokenGrid embed(const Model& model, const tokenizer::PatchGrid& grid);
LatentTokens encode(const Model& model, const masking::VisibleTokens& visible);
tokenizer::PatchGrid reconstruct(const Model& model, const LatentTokens& latents,
                                 const masking::MaskPlan& plan);
FrameEmbeddings project_frames(const Model& model, const LatentTokens& latents);

}  // namespace cyclemae::backbone
