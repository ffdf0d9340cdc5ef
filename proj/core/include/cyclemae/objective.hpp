#pragma once

#include "cyclemae/backbone.hpp"
#include "cyclemae/masking.hpp"
#include "cyclemae/params.hpp"
#include "cyclemae/tokenizer.hpp"

#include <vector>

namespace cyclemae::objective {

/// Mean over masked patches of the per-patch mean squared pixel error.
/// Visible patches do not contribute. Throws when nothing is masked.
double reconstruction_loss(const tokenizer::PatchGrid& pred, const tokenizer::PatchGrid& target,
                           const masking::MaskPlan& plan);

/// Pairwise Euclidean distances between unit-normalised rows of z (N_T x N_T).
/// Symmetric with an exactly zero diagonal; bounded by [0, 2].
Mat self_similarity(const Mat& z);

/// Throws unless S is square, symmetric and has a zero diagonal.
void check_similarity_matrix(const Mat& S);

struct Triplet {
    int anchor = 0;
    int positive = 0;
    int negative = 0;
    bool operator==(const Triplet&) const = default;
};

struct TripletSet {
    std::vector<Triplet> triples;
    std::vector<double> thresholds;  // one per anchor row of S
    int adjacency_window = 1;
    int skipped_anchors = 0;
};

/// Threshold and candidate sets of one anchor.
struct AnchorCandidates {
    double threshold = 0.0;
    std::vector<int> positives;  // S[a, j] < threshold, j != a
    std::vector<int> negatives;  // S[a, j] >= threshold, |j - a| > window
};

AnchorCandidates anchor_candidates(const Mat& S, int anchor, int adjacency_window);

/// For each anchor in ascending order, draws one (positive, negative) pair
/// uniformly from P x N: k = uniform_index(rng, |P| * |N|),
/// p = P[k / |N|], n = N[k % |N|]. Anchors with an empty set are skipped.
TripletSet mine_triplets(const Mat& S, int adjacency_window, Rng& rng);

/// Throws unless every triple satisfies S[a,p] < thres(a) <= S[a,n],
/// |a - n| > window, p != a, n != a.
void check_triplets(const Mat& S, const TripletSet& set);

/// Mean over triples of max(0, d(a,p) - d(a,n) + alpha), with d the distance
/// between unit-normalised rows of z (the metric of self_similarity).
double triplet_loss(const Mat& z, const TripletSet& set, double alpha);

/// L_r + L_c; rejects non-finite inputs.
double total_loss(double reconstruction, double contrastive);

struct ObjectiveConfig {
    double mask_ratio = 0.75;
    double alpha = 0.5;
    int adjacency_window = 1;
    bool enable_contrastive = true;
    /// Validate S and mined triples on every step.
    bool debug_checks = false;

    void validate() const;
};

struct LossReport {
    double reconstruction = 0.0;  // L_r
    double contrastive = 0.0;     // L_c
    double total = 0.0;           // L_r + L_c
    int masked_patch_count = 0;
    int triplet_count = 0;
    int skipped_anchors = 0;
};

/// Mask and mined triples used by one step; lets a caller replay the step
/// with the discrete choices frozen.
struct StepTrace {
    masking::MaskPlan plan;
    TripletSet triplets;
};

/// One self-supervised step on a single clip.
///
/// Pass 1 samples a uniform-frame mask, encodes, reconstructs (L_r) and
/// projects every temporal group to build S and mine triplets. Mining is a
/// discrete choice and carries no gradient. Pass 2 encodes once per triple
/// with the anchor row replicated onto its positive and negative rows and
/// evaluates the triplet hinge on the projected groups (L_c). Gradients of
/// L_r + L_c are added into `grads` when it is non-null.
LossReport training_step(const backbone::Model& model, const tokenizer::PatchGrid& clip,
                         const ObjectiveConfig& cfg, Rng& rng, Gradients* grads,
                         StepTrace* trace = nullptr);

/// Replays a step with the trace's mask and triples. Forward only unless
/// `grads` is given.
LossReport replay_step(const backbone::Model& model, const tokenizer::PatchGrid& clip,
                       const ObjectiveConfig& cfg, const StepTrace& trace,
                       Gradients* grads = nullptr);

}  // namespace cyclemae::objective
