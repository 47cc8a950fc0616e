#include "xmae/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "xmae/container.hpp"

namespace xmae::eval {

Vocabulary::Vocabulary(const data::EmbeddingTable& table)
    : Vocabulary(table.words(), table.vectors()) {}

Vocabulary::Vocabulary(std::vector<std::string> words, std::vector<Vec> vectors)
    : words_(std::move(words)), vectors_(std::move(vectors)) {
  if (words_.size() != vectors_.size()) throw InvalidArgument("Vocabulary: words/vectors size mismatch");
  std::set<std::string> unique(words_.begin(), words_.end());
  if (unique.size() != words_.size()) throw InvalidArgument("Vocabulary: duplicate words");
  for (const auto& v : vectors_) {
    if (v.dim() != vectors_.front().dim()) throw InvalidArgument("Vocabulary: ragged vectors");
  }
}

std::string to_string(Direction d) { return d == Direction::VideoToText ? "V->T" : "T->V"; }

std::vector<std::size_t> retrieve(const Vec& query, const Vocabulary& vocabulary, std::size_t n) {
  if (vocabulary.size() == 0) throw InvalidArgument("retrieve: empty vocabulary");
  if (n == 0) throw InvalidArgument("retrieve: n must be at least 1");
  return top_k_indices(query, vocabulary.vectors(), std::min(n, vocabulary.size()));
}

bool is_hit(std::span<const std::size_t> retrieved, const data::ClassLabel& label,
            const Vocabulary& vocabulary) {
  for (std::size_t idx : retrieved) {
    const auto& word = vocabulary.words().at(idx);
    if (std::find(label.words.begin(), label.words.end(), word) != label.words.end()) return true;
  }
  return false;
}

namespace {

void check_n_list(std::span<const std::size_t> n_list) {
  if (n_list.empty()) throw InvalidArgument("evaluation needs at least one N");
  for (std::size_t n : n_list) {
    if (n == 0) throw InvalidArgument("top-N requires N >= 1");
  }
}

EvalReport ranked_eval(const CrossModalAutoencoder& model,
                       std::span<const data::PairedRecord> records, const Vocabulary& vocabulary,
                       std::span<const std::size_t> n_list, std::string split) {
  if (records.empty()) throw InvalidArgument("evaluation: empty record set");
  if (vocabulary.size() == 0) throw InvalidArgument("evaluation: empty vocabulary");
  check_n_list(n_list);
  if (vocabulary.dim() != model.dims().text) {
    throw InvalidArgument("evaluation: vocabulary dim " + std::to_string(vocabulary.dim()) +
                          " != model text dim " + std::to_string(model.dims().text));
  }
  const std::size_t max_n = *std::max_element(n_list.begin(), n_list.end());
  std::vector<std::vector<char>> hits(records.size());
  parallel_for(records.size(), eval_threads(), [&](std::size_t i) {
    const Vec decoded = video_to_text(model, records[i].video);
    const auto ranked = retrieve(decoded, vocabulary, max_n);
    auto& h = hits[i];
    for (std::size_t n : n_list) {
      const std::size_t k = std::min(n, ranked.size());
      h.push_back(is_hit(std::span(ranked).first(k), records[i].label, vocabulary) ? 1 : 0);
    }
  });
  EvalReport report;
  report.split = std::move(split);
  report.records = records.size();
  report.vocabulary_size = vocabulary.size();
  report.n_list.assign(n_list.begin(), n_list.end());
  report.accuracy.assign(n_list.size(), 0.0);
  for (const auto& h : hits) {
    for (std::size_t j = 0; j < h.size(); ++j) report.accuracy[j] += h[j];
  }
  for (double& a : report.accuracy) a /= static_cast<double>(records.size());
  return report;
}

}  // namespace

double top_n_accuracy(const CrossModalAutoencoder& model,
                      std::span<const data::PairedRecord> records, const Vocabulary& vocabulary,
                      std::size_t n) {
  const std::size_t ns[] = {n};
  return ranked_eval(model, records, vocabulary, ns, "seen").accuracy.front();
}

EvalReport seen_eval(const CrossModalAutoencoder& model,
                     std::span<const data::PairedRecord> records, const Vocabulary& vocabulary,
                     std::span<const std::size_t> n_list) {
  return ranked_eval(model, records, vocabulary, n_list, "seen");
}

EvalReport zero_shot_eval(const CrossModalAutoencoder& model,
                          std::span<const data::PairedRecord> unseen_records,
                          const Vocabulary& vocabulary, std::span<const std::size_t> n_list) {
  if (model.class_manifest.empty()) {
    throw InvalidArgument("zero_shot_eval: model has no training class manifest to check against");
  }
  std::set<std::string> trained(model.class_manifest.begin(), model.class_manifest.end());
  for (const auto& r : unseen_records) {
    if (trained.count(r.label.name)) {
      throw InvalidArgument("zero_shot_eval: class '" + r.label.name +
                            "' was seen in training; not a zero-shot record");
    }
  }
  return ranked_eval(model, unseen_records, vocabulary, n_list, "unseen");
}

std::vector<std::size_t> nearest_neighbors(std::span<const Vec> set, std::size_t i, std::size_t K,
                                           NeighborMetric metric) {
  if (i >= set.size()) throw InvalidArgument("nearest_neighbors: index out of range");
  if (K == 0 || K >= set.size()) {
    throw InvalidArgument("nearest_neighbors: K=" + std::to_string(K) + " needs K < N=" +
                          std::to_string(set.size()));
  }
  // Larger score = closer.
  std::vector<double> score(set.size());
  for (std::size_t j = 0; j < set.size(); ++j) {
    if (j == i) continue;
    score[j] = metric == NeighborMetric::Cosine ? cosine_similarity(set[i], set[j])
                                                : -l2_distance(set[i], set[j]);
  }
  std::vector<std::size_t> order;
  order.reserve(set.size() - 1);
  for (std::size_t j = 0; j < set.size(); ++j) {
    if (j != i) order.push_back(j);
  }
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(K), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (score[a] != score[b]) return score[a] > score[b];
                      return a < b;
                    });
  order.resize(K);
  return order;
}

double mnno(std::span<const Vec> a, std::span<const Vec> b, std::size_t K, NeighborMetric metric) {
  if (a.size() != b.size()) {
    throw InvalidArgument("mnno: sets have different sizes " + std::to_string(a.size()) + " and " +
                          std::to_string(b.size()));
  }
  const std::size_t n = a.size();
  if (K == 0 || K >= n) {
    throw InvalidArgument("mnno: K=" + std::to_string(K) + " needs 1 <= K < N=" + std::to_string(n));
  }
  std::vector<std::size_t> overlap(n);
  parallel_for(n, eval_threads(), [&](std::size_t i) {
    auto na = nearest_neighbors(a, i, K, metric);
    auto nb = nearest_neighbors(b, i, K, metric);
    std::sort(na.begin(), na.end());
    std::sort(nb.begin(), nb.end());
    std::vector<std::size_t> common;
    std::set_intersection(na.begin(), na.end(), nb.begin(), nb.end(), std::back_inserter(common));
    overlap[i] = common.size();
  });
  const std::size_t total = std::accumulate(overlap.begin(), overlap.end(), std::size_t{0});
  return static_cast<double>(total) / static_cast<double>(K * n);
}

MnnoEntry mnno_entry(const std::string& name, const Mapper& f, Direction direction,
                     std::span<const data::PairedRecord> records, std::size_t K,
                     NeighborMetric metric) {
  std::vector<Vec> x, y, fx;
  const bool v2t = direction == Direction::VideoToText;
  for (const auto& r : records) {
    x.push_back(v2t ? r.video : r.text);
    y.push_back(v2t ? r.text : r.video);
  }
  fx.resize(x.size());
  parallel_for(x.size(), eval_threads(), [&](std::size_t i) { fx[i] = f(x[i]); });
  return {name, direction, mnno(x, fx, K, metric), mnno(y, fx, K, metric)};
}

std::vector<MnnoEntry> mnno_report(const CrossModalAutoencoder& model,
                                   std::span<const data::PairedRecord> records, std::size_t K,
                                   NeighborMetric metric) {
  return {mnno_entry("AE", [&](const Vec& v) { return video_to_text(model, v); },
                     Direction::VideoToText, records, K, metric),
          mnno_entry("AE", [&](const Vec& t) { return text_to_video(model, t); },
                     Direction::TextToVideo, records, K, metric)};
}

Vec apply(const FfBaseline& baseline, const Vec& x) { return nn::infer(baseline.net, x); }

MnnoEntry mnno_entry(const FfBaseline& baseline, std::span<const data::PairedRecord> records,
                     std::size_t K, NeighborMetric metric) {
  return mnno_entry("ff", [&](const Vec& x) { return apply(baseline, x); }, baseline.direction,
                    records, K, metric);
}

namespace {

const Vec& source_of(const data::PairedRecord& r, Direction d) {
  return d == Direction::VideoToText ? r.video : r.text;
}
const Vec& target_of(const data::PairedRecord& r, Direction d) {
  return d == Direction::VideoToText ? r.text : r.video;
}

double mean_squared_error(const nn::Mlp& net, std::span<const data::PairedRecord> records,
                          Direction d) {
  double total = 0.0;
  for (const auto& r : records) {
    const double e = l2_distance(nn::infer(net, source_of(r, d)), target_of(r, d));
    total += e * e;
  }
  return total / static_cast<double>(records.size());
}

}  // namespace

FfBaseline fit_ff_baseline(std::span<const data::PairedRecord> train, Direction direction,
                           const FfConfig& config, std::span<const data::PairedRecord> validation) {
  if (train.empty()) throw InvalidArgument("fit_ff_baseline: empty training split");
  config.adam.validate();
  if (config.epochs == 0 || config.batch_size == 0) {
    throw InvalidArgument("fit_ff_baseline: epochs and batch_size must be positive");
  }
  const std::size_t in = source_of(train.front(), direction).dim();
  const std::size_t out = target_of(train.front(), direction).dim();
  const std::size_t hidden = (in + out + 1) / 2;
  const std::size_t sizes[] = {in, hidden, out};
  const Rng root = Rng(config.seed).split("ff_baseline").split(to_string(direction));
  Rng init = root.split("init");
  FfBaseline ff{nn::init_mlp(sizes, 0.0, init), direction};

  optim::AdamState adam;
  std::vector<std::size_t> order(train.size());
  double best = std::numeric_limits<double>::infinity();
  FfBaseline best_ff = ff;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng shuffle_rng = root.split("shuffle").split(epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle(std::span<std::size_t>(order), shuffle_rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      nn::MlpGrads grads = nn::zero_grads(ff.net);
      for (std::size_t k = start; k < end; ++k) {
        const auto& r = train[order[k]];
        auto fwd = nn::forward_with_masks(ff.net, source_of(r, direction), {});
        const Vec residual = fwd.y - target_of(r, direction);
        nn::backward(ff.net, fwd.cache, 2.0 * residual, grads);
      }
      nn::scale(grads, 1.0 / static_cast<double>(end - start));
      std::vector<std::span<double>> params, gviews;
      nn::append_parameters(ff.net, params);
      nn::append_gradients(grads, gviews);
      optim::adam_step(params, gviews, adam, config.adam);
    }
    if (!validation.empty()) {
      const double err = mean_squared_error(ff.net, validation, direction);
      if (!std::isfinite(err)) throw TrainingError("ff baseline: non-finite validation error");
      if (err < best) {
        best = err;
        best_ff = ff;
      }
    }
  }
  FfBaseline result = validation.empty() ? std::move(ff) : std::move(best_ff);
  result.net.mode = nn::Mode::Eval;
  return result;
}

void save_baseline(const std::string& path, const FfBaseline& baseline, std::uint64_t seed) {
  nlohmann::json header = nn::describe(baseline.net);
  header["format"] = "xmae-ff-baseline";
  header["direction"] = to_string(baseline.direction);
  header["seed"] = seed;
  std::vector<double> payload;
  nn::append_payload(baseline.net, payload);
  write_container_file(path, kMlpMagic, header, payload);
}

FfBaseline load_baseline(const std::string& path) {
  Container c = read_container_file(path, kMlpMagic);
  const std::string dir = c.header.value("direction", std::string());
  if (dir != "V->T" && dir != "T->V") throw ParseError(path, 0, "missing or bad direction");
  std::span<const double> payload = c.payload;
  FfBaseline ff;
  try {
    ff.net = nn::restore(c.header, payload);
  } catch (const InvalidArgument& e) {
    throw ParseError(path, 0, e.what());
  }
  if (!payload.empty()) throw ParseError(path, 0, "trailing payload values");
  ff.direction = dir == "V->T" ? Direction::VideoToText : Direction::TextToVideo;
  return ff;
}

namespace {

std::string fixed(double x, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << x;
  return s.str();
}

}  // namespace

void write_eval_csv(std::ostream& out, std::span<const EvalReport> reports) {
  out << "split,records,vocabulary_size,n,accuracy\n";
  for (const auto& r : reports) {
    for (std::size_t i = 0; i < r.n_list.size(); ++i) {
      out << r.split << ',' << r.records << ',' << r.vocabulary_size << ',' << r.n_list[i] << ','
          << data::format_double(r.accuracy[i]) << '\n';
    }
  }
}

void write_eval_table(std::ostream& out, std::span<const EvalReport> reports) {
  for (const auto& r : reports) {
    const std::string title = r.split == "unseen" ? "Unseen classes" : "Seen classes";
    out << title << " (" << r.records << " records, vocabulary " << r.vocabulary_size
        << " words), accuracy in %\n";
    for (std::size_t n : r.n_list) out << std::setw(10) << ("top-" + std::to_string(n));
    out << '\n';
    for (double a : r.accuracy) out << std::setw(10) << fixed(100.0 * a, 2);
    out << "\n\n";
  }
}

void write_mnno_csv(std::ostream& out, std::span<const MnnoEntry> entries, std::size_t K) {
  out << "direction,mapper,K,x_fx,y_fx\n";
  for (const auto& e : entries) {
    out << to_string(e.direction) << ',' << e.mapper << ',' << K << ','
        << data::format_double(e.input_overlap) << ',' << data::format_double(e.target_overlap)
        << '\n';
  }
}

void write_mnno_table(std::ostream& out, std::span<const MnnoEntry> entries, std::size_t K) {
  out << "Mean nearest neighbor overlap (K=" << K << ")\n";
  out << std::left << std::setw(8) << "" << std::setw(6) << "" << std::right << std::setw(10)
      << "X,f(X)" << std::setw(10) << "Y,f(X)" << '\n';
  for (Direction d : {Direction::VideoToText, Direction::TextToVideo}) {
    for (const auto& e : entries) {
      if (e.direction != d) continue;
      out << std::left << std::setw(8) << to_string(d) << std::setw(6) << e.mapper << std::right
          << std::setw(10) << fixed(e.input_overlap, 3) << std::setw(10)
          << fixed(e.target_overlap, 3) << '\n';
    }
  }
}

}  // namespace xmae::eval
