#pragma once

#include "xmae/model.hpp"
#include "xmae/numerics.hpp"

namespace xmae::losses {

/// Multipliers for the four objective terms plus the ranking margin.
struct LossWeights {
  double recons = 1.0;
  double joint = 0.0;
  double cross = 1.0;
  double rank = 1.0;
  double margin = 0.5;
  /// Use ‖r‖² instead of ‖r‖ in the reconstruction/joint/cross terms.
  bool squared_norms = false;

  /// Throws InvalidArgument on negative weights, all-zero weights or a
  /// non-positive margin.
  void validate() const;
};

struct LossComponents {
  double recons = 0.0;
  double joint = 0.0;
  double cross = 0.0;
  double rank = 0.0;
};

// ‖v_recon − v‖ + ‖t_recon − t‖
double recons_loss(const Vec& v, const Vec& t, const Vec& v_recon, const Vec& t_recon,
                   bool squared = false);
// ‖z_v − z_t‖
double joint_loss(const Vec& z_v, const Vec& z_t, bool squared = false);
// ‖t_cross − t‖ + ‖v_cross − v‖
double cross_loss(const Vec& v, const Vec& t, const Vec& v_cross, const Vec& t_cross,
                  bool squared = false);
/// Hinge on the paired vs unpaired latent cosine:
/// max(0, margin − (cos(z_v, z_t) − cos(z_v_neg, z_t_neg))).
double rank_loss(const Vec& z_v, const Vec& z_t, const Vec& z_v_neg, const Vec& z_t_neg,
                 double margin);
/// Hinge on precomputed similarities.
double rank_loss(double s_pos, double s_neg, double margin);

struct LossResult {
  double total = 0.0;
  LossComponents components;  // unweighted
  PairGrads grads;            // d total / d outputs
};

/// Weighted objective for one example and its gradient w.r.t. every
/// PairForward output. `negative` is required when weights.rank > 0.
/// Subgradients: 0 at the hinge kink, 0 for ‖r‖ at r = 0.
LossResult total_loss(const PairForward& pf, const NegativeLatents* negative,
                      const LossWeights& weights);

/// Gradient of a norm term w.r.t. its residual r = a - b.
Vec norm_gradient(const Vec& residual, bool squared);

/// d cos(a, b) / d a. Zero if either norm is zero.
Vec cosine_gradient(const Vec& a, const Vec& b);

}  // namespace xmae::losses
