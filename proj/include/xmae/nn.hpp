#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "xmae/numerics.hpp"

namespace xmae::nn {

enum class Mode { Train, Eval };

struct LinearLayer {
  Mat weight;  // out_dim x in_dim
  Vec bias;    // out_dim

  std::size_t in_dim() const noexcept { return weight.cols(); }
  std::size_t out_dim() const noexcept { return weight.rows(); }
};

/// One scaled keep-mask per hidden activation. Entries are 0 or 1/(1-p).
using DropoutMasks = std::vector<Vec>;

/// Affine layers with ReLU (and dropout in Train mode) between them.
/// The autoencoder maps use three layers; the ff baseline uses two.
struct Mlp {
  std::vector<LinearLayer> layers;
  double dropout_rate = 0.0;
  bool relu_on_output = false;
  Mode mode = Mode::Train;

  std::size_t in_dim() const;
  std::size_t out_dim() const;
  /// in_dim followed by every layer's out_dim.
  std::vector<std::size_t> sizes() const;
  std::size_t parameter_count() const;

  /// Throws InvalidArgument if layer dims do not chain or values are bad.
  void validate() const;
};

struct ForwardCache {
  std::vector<Vec> inputs;  // input to layer i (post-activation, post-dropout)
  std::vector<Vec> pre;     // pre-activation of layer i
  DropoutMasks masks;       // empty when no dropout was applied
  std::vector<std::size_t> shape;

  bool valid() const noexcept { return !shape.empty() && inputs.size() == pre.size(); }
};

struct ForwardResult {
  Vec y;
  ForwardCache cache;
};

struct MlpGrads {
  std::vector<LinearLayer> layers;
};

struct BackwardResult {
  Vec grad_x;
  MlpGrads grads;
};

/// Geometric interpolation from `in` to `out` over `layers` steps, rounded;
/// e.g. (64, 16, 3) -> {64, 40, 25, 16}.
std::vector<std::size_t> interpolated_sizes(std::size_t in, std::size_t out,
                                            std::size_t layers = 3);

/// Glorot-uniform weights, zero biases, Train mode.
Mlp init_mlp(std::span<const std::size_t> sizes, double dropout_rate, Rng& rng,
             bool relu_on_output = false);
Mlp init_mlp(std::size_t in_dim, std::size_t out_dim, double dropout_rate, Rng& rng);

/// Forward pass in the network's current mode. Train mode with a positive
/// dropout rate samples fresh masks from `rng`; Eval mode ignores it.
ForwardResult forward(const Mlp& mlp, const Vec& x, Rng& rng);
/// Forward pass replaying fixed masks (empty = no dropout).
ForwardResult forward_with_masks(const Mlp& mlp, const Vec& x, const DropoutMasks& masks);
/// Deterministic inference: no dropout regardless of mode.
Vec infer(const Mlp& mlp, const Vec& x);

/// Backpropagates grad_y through the pass recorded in `cache`, adding
/// parameter gradients into `accum` and returning the input gradient.
Vec backward(const Mlp& mlp, const ForwardCache& cache, const Vec& grad_y, MlpGrads& accum);
BackwardResult backward(const Mlp& mlp, const ForwardCache& cache, const Vec& grad_y);

MlpGrads zero_grads(const Mlp& mlp);
void add_scaled(MlpGrads& into, const MlpGrads& other, double scale);
void scale(MlpGrads& grads, double s);

/// Parameter / gradient views in serialization order (per layer: weight
/// row-major, then bias).
void append_parameters(Mlp& mlp, std::vector<std::span<double>>& out);
void append_gradients(MlpGrads& grads, std::vector<std::span<double>>& out);

// Serialization.
nlohmann::json describe(const Mlp& mlp);
void append_payload(const Mlp& mlp, std::vector<double>& out);
/// Rebuilds a network from describe() output, consuming values from the
/// front of `payload`.
Mlp restore(const nlohmann::json& description, std::span<const double>& payload);

void save_mlp(const std::string& path, const Mlp& mlp, std::uint64_t seed);
Mlp load_mlp(const std::string& path);

}  // namespace xmae::nn
