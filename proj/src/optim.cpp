#include "xmae/optim.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

namespace xmae::optim {

void AdamConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw InvalidArgument("learning_rate must be finite and nonnegative");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw InvalidArgument("Adam betas must be in [0, 1)");
  }
  if (!(eps > 0.0)) throw InvalidArgument("Adam eps must be positive");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
    throw InvalidArgument("weight_decay must be finite and nonnegative");
  }
}

void adam_step(std::span<const std::span<double>> params,
               std::span<const std::span<double>> grads, AdamState& state,
               const AdamConfig& config) {
  if (params.size() != grads.size()) {
    throw ContractViolation("adam_step: " + std::to_string(params.size()) + " parameter tensors, " +
                            std::to_string(grads.size()) + " gradient tensors");
  }
  if (state.step == 0 && state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.size(), 0.0);
      state.u.emplace_back(p.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw ContractViolation("adam_step: state shape mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size() != grads[i].size() || state.m[i].size() != params[i].size()) {
      throw ContractViolation("adam_step: tensor " + std::to_string(i) + " shape mismatch");
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  const double lr = config.learning_rate;
  const double wd = config.weight_decay;

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i];
    auto g = grads[i];
    auto& m = state.m[i];
    auto& u = state.u[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      double gj = g[j];
      if (config.decoupled_weight_decay) {
        p[j] -= lr * wd * p[j];
      } else {
        gj += wd * p[j];
      }
      m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * gj;
      u[j] = config.beta2 * u[j] + (1.0 - config.beta2) * gj * gj;
      const double m_hat = m[j] / c1;
      const double u_hat = u[j] / c2;
      p[j] -= lr * m_hat / (std::sqrt(u_hat) + config.eps);
    }
  }
}

NegativeSampler::NegativeSampler(std::span<const data::PairedRecord> records) : records_(records) {
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& name = records[i].label.name;
    auto [it, inserted] = class_index_.emplace(name, classes_.size());
    if (inserted) {
      classes_.push_back(name);
      members_.emplace_back();
    }
    members_[it->second].push_back(i);
  }
}

const data::PairedRecord& NegativeSampler::sample(std::string_view positive_class, Rng& rng) const {
  if (classes_.size() < 2) {
    throw InvalidArgument("sample_negative: need at least two classes, have " +
                          std::to_string(classes_.size()));
  }
  auto it = class_index_.find(std::string(positive_class));
  std::size_t pick;
  if (it == class_index_.end()) {
    pick = static_cast<std::size_t>(rng.below(classes_.size()));
  } else {
    // Draw from the other classes by skipping over the positive index.
    pick = static_cast<std::size_t>(rng.below(classes_.size() - 1));
    if (pick >= it->second) ++pick;
  }
  const auto& members = members_[pick];
  return records_[members[static_cast<std::size_t>(rng.below(members.size()))]];
}

void TrainConfig::validate() const {
  adam.validate();
  if (!(adam.learning_rate > 0.0)) throw InvalidArgument("learning_rate must be positive");
  weights.validate();
  if (batch_size == 0) throw InvalidArgument("batch_size must be at least 1");
  if (epochs == 0) throw InvalidArgument("epochs must be at least 1");
  if (lr_step_epochs > 0 && !(lr_step_gamma > 0.0)) {
    throw InvalidArgument("lr_step_gamma must be positive");
  }
}

double TrainHistory::best_val_loss() const {
  if (best_epoch == 0) return std::numeric_limits<double>::infinity();
  return epochs.at(best_epoch - 1).val_loss;
}

void TrainHistory::write_csv(std::ostream& out) const {
  using data::format_double;
  out << "epoch,train_loss,val_loss,train_recons,train_joint,train_cross,train_rank,"
         "val_recons,val_joint,val_cross,val_rank,latent_variance,learning_rate\n";
  for (const auto& e : epochs) {
    out << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.val_loss);
    for (const auto* c : {&e.train_components, &e.val_components}) {
      out << ',' << format_double(c->recons) << ',' << format_double(c->joint) << ','
          << format_double(c->cross) << ',' << format_double(c->rank);
    }
    out << ',' << format_double(e.latent_variance) << ',' << format_double(e.learning_rate) << '\n';
  }
}

namespace {

void add_components(losses::LossComponents& into, const losses::LossComponents& c, double s) {
  into.recons += s * c.recons;
  into.joint += s * c.joint;
  into.cross += s * c.cross;
  into.rank += s * c.rank;
}

std::string describe_components(const losses::LossComponents& c) {
  std::ostringstream s;
  s << "recons=" << c.recons << " joint=" << c.joint << " cross=" << c.cross
    << " rank=" << c.rank;
  return s.str();
}

void check_dims(const CrossModalAutoencoder& model, std::span<const data::PairedRecord> records,
                const char* split) {
  for (const auto& r : records) {
    if (r.video.dim() != model.dims().video || r.text.dim() != model.dims().text) {
      throw InvalidArgument(std::string(split) + " record " + std::to_string(r.id) + " has dims (" +
                            std::to_string(r.video.dim()) + ", " + std::to_string(r.text.dim()) +
                            "), model expects (" + std::to_string(model.dims().video) + ", " +
                            std::to_string(model.dims().text) + ")");
    }
  }
}

}  // namespace

BatchResult batch_gradient(const CrossModalAutoencoder& model,
                           std::span<const data::PairedRecord* const> batch,
                           std::span<const data::PairedRecord* const> negatives,
                           const losses::LossWeights& weights, Rng& rng) {
  if (batch.empty()) throw InvalidArgument("batch_gradient: empty batch");
  const bool use_rank = weights.rank > 0.0;
  if (use_rank && negatives.size() != batch.size()) {
    throw InvalidArgument("batch_gradient: need one negative per example");
  }
  BatchResult result;
  result.grads = zero_grads(model);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& r = *batch[i];
    PairForward pf = pair_forward(model, r.video, r.text, rng);
    std::optional<NegativeLatents> neg;
    if (use_rank) neg = encode_negative(model, negatives[i]->video, negatives[i]->text, rng);
    auto loss = losses::total_loss(pf, neg ? &*neg : nullptr, weights);
    if (!std::isfinite(loss.total)) {
      throw TrainingError("non-finite loss on record " + std::to_string(r.id) + " (" +
                          describe_components(loss.components) + ")");
    }
    backward(model, pf, neg ? &*neg : nullptr, loss.grads, result.grads);
    result.loss.total += loss.total;
    add_components(result.loss.components, loss.components, 1.0);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  ModelGrads scaled = zero_grads(model);
  add_scaled(scaled, result.grads, inv);
  result.grads = std::move(scaled);
  result.loss.total *= inv;
  losses::LossComponents mean;
  add_components(mean, result.loss.components, inv);
  result.loss.components = mean;
  return result;
}

std::vector<const data::PairedRecord*> fixed_negatives(std::span<const data::PairedRecord> records,
                                                       const NegativeSampler& sampler,
                                                       std::uint64_t seed) {
  Rng rng(seed);
  std::vector<const data::PairedRecord*> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(&sampler.sample(r.label.name, rng));
  return out;
}

LossSummary mean_loss(const CrossModalAutoencoder& model,
                      std::span<const data::PairedRecord> records,
                      std::span<const data::PairedRecord* const> negatives,
                      const losses::LossWeights& weights) {
  if (records.empty()) throw InvalidArgument("mean_loss: no records");
  const bool use_rank = weights.rank > 0.0;
  if (use_rank && negatives.size() != records.size()) {
    throw InvalidArgument("mean_loss: need one negative per record");
  }
  const PairMasks no_masks;
  LossSummary s;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    PairForward pf = pair_forward(model, r.video, r.text, no_masks);
    std::optional<NegativeLatents> neg;
    if (use_rank) neg = encode_negative(model, negatives[i]->video, negatives[i]->text, {}, {});
    auto loss = losses::total_loss(pf, neg ? &*neg : nullptr, weights);
    s.total += loss.total;
    add_components(s.components, loss.components, 1.0);
  }
  const double inv = 1.0 / static_cast<double>(records.size());
  s.total *= inv;
  losses::LossComponents mean;
  add_components(mean, s.components, inv);
  s.components = mean;
  return s;
}

double latent_variance(const CrossModalAutoencoder& model,
                       std::span<const data::PairedRecord> records) {
  if (records.size() < 2) return 0.0;
  auto variance_of = [&](auto encode) {
    const std::size_t z = model.dims().latent;
    Vec mean(z);
    std::vector<Vec> codes;
    codes.reserve(records.size());
    for (const auto& r : records) {
      codes.push_back(encode(r));
      mean += codes.back();
    }
    mean *= 1.0 / static_cast<double>(codes.size());
    double total = 0.0;
    for (const auto& c : codes) {
      for (std::size_t k = 0; k < z; ++k) total += (c[k] - mean[k]) * (c[k] - mean[k]);
    }
    return total / static_cast<double>(codes.size() * z);
  };
  const double vv = variance_of([&](const data::PairedRecord& r) {
    return nn::infer(model.video_encoder(), r.video);
  });
  const double vt = variance_of([&](const data::PairedRecord& r) {
    return nn::infer(model.text_encoder(), r.text);
  });
  return 0.5 * (vv + vt);
}

ValidationPlan plan_validation(const data::SplitDataset& dataset, const TrainConfig& config) {
  ValidationPlan plan;
  if (config.weights.rank > 0.0) {
    NegativeSampler val_sampler(dataset.validation);
    NegativeSampler train_sampler(dataset.train);
    const NegativeSampler& pool = val_sampler.class_count() >= 2 ? val_sampler : train_sampler;
    const std::uint64_t seed = Rng(config.seed).split("validation_negatives").next_u64();
    plan.negatives = fixed_negatives(dataset.validation, pool, seed);
  }
  return plan;
}

TrainResult train(CrossModalAutoencoder model, const data::SplitDataset& dataset,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (dataset.train.empty()) throw InvalidArgument("train: empty training split");
  if (dataset.validation.empty()) throw InvalidArgument("train: empty validation split");
  check_dims(model, dataset.train, "train");
  check_dims(model, dataset.validation, "validation");

  model.class_manifest = dataset.train_classes();
  model.seed = config.seed;

  const bool use_rank = config.weights.rank > 0.0;
  NegativeSampler train_sampler(dataset.train);
  if (use_rank && train_sampler.class_count() < 2) {
    throw InvalidArgument("train: the ranking loss needs at least two training classes");
  }
  const ValidationPlan validation = plan_validation(dataset, config);

  const Rng root = Rng(config.seed).split("train");
  AdamState adam;
  AdamConfig adam_config = config.adam;

  TrainResult result{model, {}};
  double best = std::numeric_limits<double>::infinity();

  std::vector<std::size_t> order(dataset.train.size());
  std::vector<const data::PairedRecord*> batch, negatives;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    if (config.lr_step_epochs > 0) {
      const double steps = std::floor(static_cast<double>(epoch - 1) /
                                      static_cast<double>(config.lr_step_epochs));
      adam_config.learning_rate = config.adam.learning_rate * std::pow(config.lr_step_gamma, steps);
    }
    Rng shuffle_rng = root.split("shuffle").split(epoch);
    Rng dropout_rng = root.split("dropout").split(epoch);
    Rng negative_rng = root.split("negatives").split(epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle(std::span<std::size_t>(order), shuffle_rng);

    model.set_mode(nn::Mode::Train);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.learning_rate = adam_config.learning_rate;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      negatives.clear();
      for (std::size_t k = start; k < end; ++k) {
        const auto& r = dataset.train[order[k]];
        batch.push_back(&r);
        if (use_rank) negatives.push_back(&train_sampler.sample(r.label.name, negative_rng));
      }
      BatchResult br;
      try {
        br = batch_gradient(model, batch, negatives, config.weights, dropout_rng);
      } catch (const TrainingError& e) {
        throw TrainingError("epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch_index) + ": " + e.what());
      }
      auto params = model.parameters();
      auto grads = br.grads.views();
      adam_step(params, grads, adam, adam_config);
      for (const auto& p : params) {
        if (!all_finite(p)) {
          throw TrainingError("epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(batch_index) +
                              ": parameters became non-finite (" +
                              describe_components(br.loss.components) + ")");
        }
      }
      const double w = static_cast<double>(end - start);
      rec.train_loss += w * br.loss.total;
      add_components(rec.train_components, br.loss.components, w);
    }
    const double inv = 1.0 / static_cast<double>(order.size());
    rec.train_loss *= inv;
    losses::LossComponents mean;
    add_components(mean, rec.train_components, inv);
    rec.train_components = mean;

    model.set_mode(nn::Mode::Eval);
    const LossSummary val = mean_loss(model, dataset.validation, validation.negatives, config.weights);
    if (!std::isfinite(val.total)) {
      throw TrainingError("epoch " + std::to_string(epoch) + ": non-finite validation loss (" +
                          describe_components(val.components) + ")");
    }
    rec.val_loss = val.total;
    rec.val_components = val.components;
    rec.latent_variance = latent_variance(model, dataset.validation);
    result.history.epochs.push_back(rec);
    if (val.total < best) {
      best = val.total;
      result.best_model = model;
      result.history.best_epoch = epoch;
    }
    if (on_epoch) on_epoch(rec);
  }
  result.best_model.set_mode(nn::Mode::Eval);
  return result;
}

}  // namespace xmae::optim
