#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "xmae/data.hpp"
#include "xmae/model.hpp"
#include "xmae/nn.hpp"
#include "xmae/optim.hpp"

namespace xmae::eval {

/// Global word space used for retrieval, in file order.
class Vocabulary {
 public:
  explicit Vocabulary(const data::EmbeddingTable& table);
  Vocabulary(std::vector<std::string> words, std::vector<Vec> vectors);

  std::size_t size() const noexcept { return words_.size(); }
  std::size_t dim() const noexcept { return vectors_.empty() ? 0 : vectors_.front().dim(); }
  const std::vector<std::string>& words() const noexcept { return words_; }
  const std::vector<Vec>& vectors() const noexcept { return vectors_; }

 private:
  std::vector<std::string> words_;
  std::vector<Vec> vectors_;
};

enum class Direction { VideoToText, TextToVideo };
std::string to_string(Direction d);  // "V->T" / "T->V"

/// Top-n vocabulary indices for `query`, most similar first. n larger than
/// the vocabulary retrieves every word.
std::vector<std::size_t> retrieve(const Vec& query, const Vocabulary& vocabulary, std::size_t n);

/// A retrieval is a hit when any word of the class phrase is among the
/// retrieved words.
bool is_hit(std::span<const std::size_t> retrieved, const data::ClassLabel& label,
            const Vocabulary& vocabulary);

/// Fraction of records whose decoded text vector G_T(E_V(v)) retrieves a
/// word of the record's class among the top n.
double top_n_accuracy(const CrossModalAutoencoder& model,
                      std::span<const data::PairedRecord> records, const Vocabulary& vocabulary,
                      std::size_t n);

struct EvalReport {
  std::string split;  // "seen" or "unseen"
  std::size_t records = 0;
  std::size_t vocabulary_size = 0;
  std::vector<std::size_t> n_list;
  std::vector<double> accuracy;  // aligned with n_list
};

/// Top-n accuracies for every n in n_list from a single ranking pass.
EvalReport seen_eval(const CrossModalAutoencoder& model,
                     std::span<const data::PairedRecord> records, const Vocabulary& vocabulary,
                     std::span<const std::size_t> n_list);

/// Same metric over unseen classes only. Throws InvalidArgument if any
/// record's class is in the model's training class manifest, or if the
/// model carries no manifest.
EvalReport zero_shot_eval(const CrossModalAutoencoder& model,
                          std::span<const data::PairedRecord> unseen_records,
                          const Vocabulary& vocabulary, std::span<const std::size_t> n_list);

enum class NeighborMetric { Cosine, Euclidean };

/// K nearest neighbors of set[i] within `set`, excluding i itself. Ties
/// go to the lower index.
std::vector<std::size_t> nearest_neighbors(std::span<const Vec> set, std::size_t i, std::size_t K,
                                           NeighborMetric metric = NeighborMetric::Cosine);

/// Mean nearest-neighbor overlap of two index-paired sets: the average,
/// over i, of |NN_K(a_i) ∩ NN_K(b_i)| / K.
double mnno(std::span<const Vec> a, std::span<const Vec> b, std::size_t K,
            NeighborMetric metric = NeighborMetric::Cosine);

using Mapper = std::function<Vec(const Vec&)>;

struct MnnoEntry {
  std::string mapper;  // "ff" or "AE"
  Direction direction = Direction::VideoToText;
  double input_overlap = 0.0;   // mNNO(X, f(X))
  double target_overlap = 0.0;  // mNNO(Y, f(X))
};

/// X is the source modality of each record, Y the target, f(X) the mapped
/// source.
MnnoEntry mnno_entry(const std::string& name, const Mapper& f, Direction direction,
                     std::span<const data::PairedRecord> records, std::size_t K,
                     NeighborMetric metric = NeighborMetric::Cosine);

/// Autoencoder rows for both directions (V->T, T->V).
std::vector<MnnoEntry> mnno_report(const CrossModalAutoencoder& model,
                                   std::span<const data::PairedRecord> records, std::size_t K,
                                   NeighborMetric metric = NeighborMetric::Cosine);

/// Single-hidden-layer feed-forward mapper between modalities.
struct FfBaseline {
  nn::Mlp net;
  Direction direction = Direction::VideoToText;
};

struct FfConfig {
  optim::AdamConfig adam;
  std::size_t epochs = 300;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
};

/// Hidden size ⌈(in + out) / 2⌉, ReLU, squared-error loss, Adam. When
/// `validation` is nonempty the snapshot with the lowest validation error
/// is returned.
FfBaseline fit_ff_baseline(std::span<const data::PairedRecord> train, Direction direction,
                           const FfConfig& config,
                           std::span<const data::PairedRecord> validation = {});

Vec apply(const FfBaseline& baseline, const Vec& x);
MnnoEntry mnno_entry(const FfBaseline& baseline, std::span<const data::PairedRecord> records,
                     std::size_t K, NeighborMetric metric = NeighborMetric::Cosine);

void save_baseline(const std::string& path, const FfBaseline& baseline, std::uint64_t seed);
FfBaseline load_baseline(const std::string& path);

// Report writers. Tables mirror the layout of the published result tables.
void write_eval_csv(std::ostream& out, std::span<const EvalReport> reports);
void write_eval_table(std::ostream& out, std::span<const EvalReport> reports);
void write_mnno_csv(std::ostream& out, std::span<const MnnoEntry> entries, std::size_t K);
void write_mnno_table(std::ostream& out, std::span<const MnnoEntry> entries, std::size_t K);

}  // namespace xmae::eval
