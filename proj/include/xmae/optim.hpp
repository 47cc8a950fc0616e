#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "xmae/data.hpp"
#include "xmae/losses.hpp"
#include "xmae/model.hpp"

namespace xmae::optim {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;
  // false: decay added to the gradient (Adam + L2).
  // true: parameters shrink by lr * decay before the Adam update.
  bool decoupled_weight_decay = false;

  void validate() const;
};

struct AdamState {
  std::vector<std::vector<double>> m;  // first moments
  std::vector<std::vector<double>> u;  // second moments
  std::uint64_t step = 0;
};

/// One Adam update over parallel lists of parameter and gradient tensors.
/// State is lazily sized on the first call; shapes must agree afterwards.
void adam_step(std::span<const std::span<double>> params,
               std::span<const std::span<double>> grads, AdamState& state,
               const AdamConfig& config);

/// Draws negatives for the ranking loss: a uniformly random class other
/// than the positive one, then a uniformly random record of that class.
class NegativeSampler {
 public:
  explicit NegativeSampler(std::span<const data::PairedRecord> records);

  std::size_t class_count() const noexcept { return classes_.size(); }
  const data::PairedRecord& sample(std::string_view positive_class, Rng& rng) const;

 private:
  std::span<const data::PairedRecord> records_;
  std::vector<std::string> classes_;
  std::vector<std::vector<std::size_t>> members_;
  std::unordered_map<std::string, std::size_t> class_index_;
};

inline const data::PairedRecord& sample_negative(const NegativeSampler& sampler,
                                                 std::string_view positive_class, Rng& rng) {
  return sampler.sample(positive_class, rng);
}

struct TrainConfig {
  AdamConfig adam;
  losses::LossWeights weights;
  std::size_t batch_size = 64;
  std::size_t epochs = 300;
  std::uint64_t seed = 0;
  // Step decay: multiply the rate by lr_step_gamma every lr_step_epochs
  // epochs. 0 disables it.
  std::size_t lr_step_epochs = 0;
  double lr_step_gamma = 0.1;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  losses::LossComponents train_components;
  losses::LossComponents val_components;
  double latent_variance = 0.0;
  double learning_rate = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 1-based; 0 if no epoch ran

  double best_val_loss() const;
  /// CSV with one row per epoch; doubles in shortest round-trip form.
  void write_csv(std::ostream& out) const;
};

struct TrainResult {
  CrossModalAutoencoder best_model;
  TrainHistory history;
};

struct LossSummary {
  double total = 0.0;
  losses::LossComponents components;
};

/// Mean loss and gradient over a batch. `negatives` is aligned with
/// `batch` and may be empty when the ranking weight is 0.
struct BatchResult {
  LossSummary loss;
  ModelGrads grads;  // mean of per-example gradients
};

BatchResult batch_gradient(const CrossModalAutoencoder& model,
                           std::span<const data::PairedRecord* const> batch,
                           std::span<const data::PairedRecord* const> negatives,
                           const losses::LossWeights& weights, Rng& rng);

/// One negative per record, drawn once from `seed`.
std::vector<const data::PairedRecord*> fixed_negatives(std::span<const data::PairedRecord> records,
                                                       const NegativeSampler& sampler,
                                                       std::uint64_t seed);

/// Mean objective with dropout off.
LossSummary mean_loss(const CrossModalAutoencoder& model,
                      std::span<const data::PairedRecord> records,
                      std::span<const data::PairedRecord* const> negatives,
                      const losses::LossWeights& weights);

/// Mean over latent dims of the per-dim variance of the encoded inputs,
/// averaged over the video and text encoders (dropout off).
double latent_variance(const CrossModalAutoencoder& model,
                       std::span<const data::PairedRecord> records);

/// The validation set and its fixed negatives as train() builds them.
struct ValidationPlan {
  std::vector<const data::PairedRecord*> negatives;
};
ValidationPlan plan_validation(const data::SplitDataset& dataset, const TrainConfig& config);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Minibatch Adam over the training split. Returns the snapshot with the
/// lowest validation objective.
TrainResult train(CrossModalAutoencoder model, const data::SplitDataset& dataset,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

}  // namespace xmae::optim
