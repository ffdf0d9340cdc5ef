#include "cyclemae/objective.hpp"

#include <cmath>
#include <cstdlib>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>

namespace cyclemae::objective {

double reconstruction_loss(const tokenizer::PatchGrid& pred, const tokenizer::PatchGrid& target,
                           const masking::MaskPlan& plan) {
    if (pred.patches.rows() != target.patches.rows() ||
        pred.patches.cols() != target.patches.cols() ||
        pred.token_count() != plan.groups * plan.positions ||
        target.token_count() != plan.groups * plan.positions) {
        throw std::invalid_argument("reconstruction_loss: prediction, target and plan disagree");
    }
    double total = 0.0;
    int count = 0;
    for (int g = 0; g < plan.groups; ++g) {
        for (int i = 0; i < plan.positions; ++i) {
            if (!plan.is_masked(g, i)) {
                continue;
            }
            const int r = g * plan.positions + i;
            total += (pred.patches.row(r) - target.patches.row(r)).squaredNorm() /
                     static_cast<double>(pred.patch_dim());
            ++count;
        }
    }
    if (count == 0) {
        throw std::invalid_argument("reconstruction_loss: no masked patches");
    }
    return total / count;
}

namespace {

Mat normalize_rows(const Mat& z) {
    Mat out = z;
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
        const double n = z.row(r).norm();
        if (!(n > 0.0)) {
            throw std::invalid_argument("embedding row " + std::to_string(r) +
                                        " has zero norm and cannot be normalised");
        }
        out.row(r) /= n;
    }
    return out;
}

}  // namespace

Mat self_similarity(const Mat& z) {
    if (z.rows() < 2) {
        throw std::invalid_argument("self_similarity: need at least 2 temporal groups");
    }
    const Mat u = normalize_rows(z);
    const Eigen::Index n = u.rows();
    Mat S = Mat::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double d = (u.row(i) - u.row(j)).norm();
            S(i, j) = d;
            S(j, i) = d;
        }
    }
    return S;
}

void check_similarity_matrix(const Mat& S) {
    if (S.rows() != S.cols()) {
        throw std::logic_error("similarity matrix is not square");
    }
    for (Eigen::Index i = 0; i < S.rows(); ++i) {
        if (S(i, i) != 0.0) {
            throw std::logic_error("similarity matrix has a nonzero diagonal");
        }
        for (Eigen::Index j = 0; j < i; ++j) {
            if (S(i, j) != S(j, i) || S(i, j) < 0.0) {
                throw std::logic_error("similarity matrix is not a symmetric distance");
            }
        }
    }
}

AnchorCandidates anchor_candidates(const Mat& S, int anchor, int adjacency_window) {
    const int n = static_cast<int>(S.rows());
    AnchorCandidates c;
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
        if (j != anchor) {
            sum += S(anchor, j);
        }
    }
    c.threshold = sum / (n - 1);
    for (int j = 0; j < n; ++j) {
        if (j == anchor) {
            continue;
        }
        const double s = S(anchor, j);
        if (s < c.threshold) {
            c.positives.push_back(j);
        } else if (std::abs(j - anchor) > adjacency_window) {
            c.negatives.push_back(j);
        }
    }
    return c;
}

TripletSet mine_triplets(const Mat& S, int adjacency_window, Rng& rng) {
    if (S.rows() != S.cols() || S.rows() < 3) {
        throw std::invalid_argument("mine_triplets: need a square matrix with >= 3 rows");
    }
    if (adjacency_window < 1) {
        throw std::invalid_argument("mine_triplets: adjacency_window must be >= 1");
    }
    TripletSet set;
    set.adjacency_window = adjacency_window;
    const int n = static_cast<int>(S.rows());
    for (int a = 0; a < n; ++a) {
        const AnchorCandidates c = anchor_candidates(S, a, adjacency_window);
        set.thresholds.push_back(c.threshold);
        if (c.positives.empty() || c.negatives.empty()) {
            ++set.skipped_anchors;
            continue;
        }
        const std::size_t k = uniform_index(rng, c.positives.size() * c.negatives.size());
        set.triples.push_back(Triplet{a, c.positives[k / c.negatives.size()],
                                      c.negatives[k % c.negatives.size()]});
    }
    return set;
}

void check_triplets(const Mat& S, const TripletSet& set) {
    for (const Triplet& t : set.triples) {
        const double thres = set.thresholds.at(static_cast<std::size_t>(t.anchor));
        const bool ok = t.positive != t.anchor && t.negative != t.anchor &&
                        S(t.anchor, t.positive) < thres && thres <= S(t.anchor, t.negative) &&
                        std::abs(t.anchor - t.negative) > set.adjacency_window;
        if (!ok) {
            throw std::logic_error("triplet (" + std::to_string(t.anchor) + ", " +
                                   std::to_string(t.positive) + ", " +
                                   std::to_string(t.negative) + ") violates the mining rules");
        }
    }
}

double triplet_loss(const Mat& z, const TripletSet& set, double alpha) {
    if (set.triples.empty()) {
        throw std::invalid_argument("triplet_loss: no triples");
    }
    if (alpha < 0.0) {
        throw std::invalid_argument("triplet_loss: margin must be >= 0");
    }
    const Mat u = normalize_rows(z);
    double total = 0.0;
    for (const Triplet& t : set.triples) {
        for (const int r : {t.anchor, t.positive, t.negative}) {
            if (r < 0 || r >= u.rows()) {
                throw std::out_of_range("triplet_loss: index " + std::to_string(r) +
                                        " out of range");
            }
        }
        const double dap = (u.row(t.anchor) - u.row(t.positive)).norm();
        const double dan = (u.row(t.anchor) - u.row(t.negative)).norm();
        total += std::max(0.0, dap - dan + alpha);
    }
    return total / static_cast<double>(set.triples.size());
}

double total_loss(double reconstruction, double contrastive) {
    if (!std::isfinite(reconstruction) || !std::isfinite(contrastive)) {
        throw std::invalid_argument("total_loss: non-finite loss component");
    }
    return reconstruction + contrastive;
}

void ObjectiveConfig::validate() const {
    (void)masking::masked_count(mask_ratio, 1);
    if (alpha < 0.0) {
        throw std::invalid_argument("alpha must be >= 0");
    }
    if (adjacency_window < 1) {
        throw std::invalid_argument("adjacency_window must be >= 1");
    }
}

namespace {

struct PassOne {
    ad::Var reconstruction;
    backbone::EncoderOutput encoded;
    masking::VisibleIndex index;
    int masked = 0;
};

PassOne run_pass_one(ad::Tape& tape, const backbone::Model& model,
                     const tokenizer::PatchGrid& clip, const masking::MaskPlan& plan) {
    PassOne p;
    p.index = masking::visible_index(plan);
    const ad::Var tokens = backbone::embed_rows(tape, model, clip, p.index.rows);
    p.encoded = backbone::encode(tape, model, tokens);

    std::vector<int> masked_rows;
    for (int r = 0; r < plan.groups * plan.positions; ++r) {
        if (plan.masked[static_cast<std::size_t>(r)]) {
            masked_rows.push_back(r);
        }
    }
    if (masked_rows.empty()) {
        throw std::invalid_argument("training_step: mask ratio leaves no masked patches");
    }
    p.masked = static_cast<int>(masked_rows.size());
    Mat target(p.masked, clip.patch_dim());
    for (int k = 0; k < p.masked; ++k) {
        target.row(k) = clip.patches.row(masked_rows[static_cast<std::size_t>(k)]);
    }
    const ad::Var pred = backbone::decode(tape, model, p.encoded.latents, p.index, masked_rows);
    p.reconstruction = ad::mse(tape, pred, target);
    return p;
}

ad::Var run_pass_two(ad::Tape& tape, const backbone::Model& model,
                     const tokenizer::PatchGrid& clip, const masking::MaskPlan& plan,
                     const TripletSet& triplets, double alpha) {
    std::vector<ad::Var> terms;
    terms.reserve(triplets.triples.size());
    const ad::Var margin = tape.constant(Mat::Constant(1, 1, alpha));
    for (const Triplet& t : triplets.triples) {
        const int partners[] = {t.positive, t.negative};
        const masking::MaskPlan consistent = masking::replicate_mask_rows(plan, t.anchor, partners);
        const masking::VisibleIndex index = masking::visible_index(consistent);
        const ad::Var tokens = backbone::embed_rows(tape, model, clip, index.rows);
        const backbone::EncoderOutput enc = backbone::encode(tape, model, tokens);
        const int groups[] = {t.anchor, t.positive, t.negative};
        ad::Var z = backbone::project_groups(tape, model, enc.latents, index, groups);
        z = ad::l2_normalize_rows(tape, z);
        const ad::Var dap = ad::row_distance(tape, z, 0, 1);
        const ad::Var dan = ad::row_distance(tape, z, 0, 2);
        const ad::Var parts[] = {dap, ad::scale(tape, dan, -1.0), margin};
        terms.push_back(ad::relu(tape, ad::sum(tape, parts)));
    }
    return ad::scale(tape, ad::sum(tape, terms), 1.0 / static_cast<double>(terms.size()));
}

LossReport finish(ad::Tape& tape, const PassOne& one, std::optional<ad::Var> contrastive,
                  const TripletSet& triplets, Gradients* grads) {
    LossReport report;
    report.masked_patch_count = one.masked;
    report.triplet_count = static_cast<int>(triplets.triples.size());
    report.skipped_anchors = triplets.skipped_anchors;
    report.reconstruction = tape.value(one.reconstruction)(0, 0);
    ad::Var total = one.reconstruction;
    if (contrastive) {
        report.contrastive = tape.value(*contrastive)(0, 0);
        total = ad::add(tape, one.reconstruction, *contrastive);
    }
    report.total = total_loss(report.reconstruction, report.contrastive);
    if (grads != nullptr) {
        tape.backward(total);
        tape.accumulate(*grads);
    }
    return report;
}

}  // namespace

LossReport training_step(const backbone::Model& model, const tokenizer::PatchGrid& clip,
                         const ObjectiveConfig& cfg, Rng& rng, Gradients* grads,
                         StepTrace* trace) {
    cfg.validate();
    const masking::MaskPlan plan =
        masking::sample_uniform_frame_mask(clip.groups, clip.positions, cfg.mask_ratio, rng);

    ad::Tape tape(&model.params());
    const PassOne one = run_pass_one(tape, model, clip, plan);

    TripletSet triplets;
    triplets.adjacency_window = cfg.adjacency_window;
    std::optional<ad::Var> contrastive;
    if (cfg.enable_contrastive && clip.groups >= 3) {
        // Mining sees values only; the decision is a constant for the graph.
        const backbone::LatentTokens latents{tape.value(one.encoded.latents),
                                             tape.value(one.encoded.global), one.index};
        const Mat S = self_similarity(backbone::project_frames(model, latents));
        triplets = mine_triplets(S, cfg.adjacency_window, rng);
        if (cfg.debug_checks) {
            check_similarity_matrix(S);
            check_triplets(S, triplets);
        }
        if (!triplets.triples.empty()) {
            contrastive = run_pass_two(tape, model, clip, plan, triplets, cfg.alpha);
        }
    } else if (cfg.enable_contrastive) {
        triplets.skipped_anchors = clip.groups;
    }

    if (trace != nullptr) {
        trace->plan = plan;
        trace->triplets = triplets;
    }
    return finish(tape, one, contrastive, triplets, grads);
}

LossReport replay_step(const backbone::Model& model, const tokenizer::PatchGrid& clip,
                       const ObjectiveConfig& cfg, const StepTrace& trace, Gradients* grads) {
    cfg.validate();
    ad::Tape tape(&model.params());
    const PassOne one = run_pass_one(tape, model, clip, trace.plan);
    std::optional<ad::Var> contrastive;
    if (cfg.enable_contrastive && !trace.triplets.triples.empty()) {
        contrastive = run_pass_two(tape, model, clip, trace.plan, trace.triplets, cfg.alpha);
    }
    return finish(tape, one, contrastive, trace.triplets, grads);
}

}  // namespace cyclemae::objective
