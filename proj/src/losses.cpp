#include "xmae/losses.hpp"

#include <cmath>

namespace xmae::losses {

namespace {

double norm_term(const Vec& a, const Vec& b, bool squared, const char* what) {
  require_same_dim(a, b, what);
  const double d = l2_distance(a, b);
  return squared ? d * d : d;
}

}  // namespace

void LossWeights::validate() const {
  for (double a : {recons, joint, cross, rank}) {
    if (!(a >= 0.0) || !std::isfinite(a)) {
      throw InvalidArgument("loss weights must be finite and nonnegative");
    }
  }
  if (recons == 0.0 && joint == 0.0 && cross == 0.0 && rank == 0.0) {
    throw InvalidArgument("all loss weights are zero; nothing to train");
  }
  if (!(margin > 0.0) || !std::isfinite(margin)) {
    throw InvalidArgument("ranking margin must be positive");
  }
}

double recons_loss(const Vec& v, const Vec& t, const Vec& v_recon, const Vec& t_recon,
                   bool squared) {
  return norm_term(v_recon, v, squared, "recons_loss") +
         norm_term(t_recon, t, squared, "recons_loss");
}

double joint_loss(const Vec& z_v, const Vec& z_t, bool squared) {
  return norm_term(z_v, z_t, squared, "joint_loss");
}

double cross_loss(const Vec& v, const Vec& t, const Vec& v_cross, const Vec& t_cross,
                  bool squared) {
  return norm_term(t_cross, t, squared, "cross_loss") +
         norm_term(v_cross, v, squared, "cross_loss");
}

double rank_loss(double s_pos, double s_neg, double margin) {
  if (!(margin > 0.0)) throw InvalidArgument("rank_loss: margin must be positive");
  return std::max(0.0, margin - (s_pos - s_neg));
}

double rank_loss(const Vec& z_v, const Vec& z_t, const Vec& z_v_neg, const Vec& z_t_neg,
                 double margin) {
  require_same_dim(z_v, z_t, "rank_loss");
  require_same_dim(z_v, z_v_neg, "rank_loss");
  require_same_dim(z_v, z_t_neg, "rank_loss");
  return rank_loss(cosine_similarity(z_v, z_t), cosine_similarity(z_v_neg, z_t_neg), margin);
}

Vec norm_gradient(const Vec& residual, bool squared) {
  if (squared) return 2.0 * residual;
  const double n = l2_norm(residual);
  if (n == 0.0) return Vec(residual.dim());
  return (1.0 / n) * residual;
}

Vec cosine_gradient(const Vec& a, const Vec& b) {
  require_same_dim(a, b, "cosine_gradient");
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) return Vec(a.dim());
  const double c = dot(a.span(), b.span()) / (na * nb);
  Vec g(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) g[i] = b[i] / (na * nb) - c * a[i] / (na * na);
  return g;
}

LossResult total_loss(const PairForward& pf, const NegativeLatents* negative,
                      const LossWeights& w) {
  w.validate();
  const bool sq = w.squared_norms;
  LossResult r;
  auto& c = r.components;
  auto& g = r.grads;

  if (w.recons > 0.0) {
    c.recons = recons_loss(pf.v, pf.t, pf.v_recon, pf.t_recon, sq);
    g.v_recon = w.recons * norm_gradient(pf.v_recon - pf.v, sq);
    g.t_recon = w.recons * norm_gradient(pf.t_recon - pf.t, sq);
  }
  if (w.cross > 0.0) {
    c.cross = cross_loss(pf.v, pf.t, pf.v_cross, pf.t_cross, sq);
    g.v_cross = w.cross * norm_gradient(pf.v_cross - pf.v, sq);
    g.t_cross = w.cross * norm_gradient(pf.t_cross - pf.t, sq);
  }
  g.z_v = Vec(pf.z_v.dim());
  g.z_t = Vec(pf.z_t.dim());
  if (w.joint > 0.0) {
    c.joint = joint_loss(pf.z_v, pf.z_t, sq);
    const Vec d = w.joint * norm_gradient(pf.z_v - pf.z_t, sq);
    g.z_v += d;
    g.z_t -= d;
  }
  if (w.rank > 0.0) {
    if (negative == nullptr) {
      throw InvalidArgument("total_loss: ranking weight is positive but no negative was given");
    }
    const double s_pos = cosine_similarity(pf.z_v, pf.z_t);
    const double s_neg = cosine_similarity(negative->z_v, negative->z_t);
    c.rank = rank_loss(s_pos, s_neg, w.margin);
    if (c.rank > 0.0) {
      // d/ds_pos = -1, d/ds_neg = +1 while the hinge is active.
      g.z_v -= w.rank * cosine_gradient(pf.z_v, pf.z_t);
      g.z_t -= w.rank * cosine_gradient(pf.z_t, pf.z_v);
      g.z_v_neg = w.rank * cosine_gradient(negative->z_v, negative->z_t);
      g.z_t_neg = w.rank * cosine_gradient(negative->z_t, negative->z_v);
    }
  }
  r.total = w.recons * c.recons + w.joint * c.joint + w.cross * c.cross + w.rank * c.rank;
  return r;
}

}  // namespace xmae::losses
