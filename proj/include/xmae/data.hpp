#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "xmae/numerics.hpp"

namespace xmae::data {

/// Word vectors in file order. Words are unique.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(std::size_t dim) : dim_(dim) {}

  /// Adds a word; returns false (and keeps the existing entry) for a
  /// duplicate. The first insertion fixes the dim if it was unset.
  bool add(std::string word, Vec vector);
  const Vec* find(std::string_view word) const;

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return words_.size(); }
  const std::vector<std::string>& words() const noexcept { return words_; }
  const std::vector<Vec>& vectors() const noexcept { return vectors_; }

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> words_;
  std::vector<Vec> vectors_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// GloVe text format: `word v1 ... vD` per line. D comes from the first
/// line. Blank lines are skipped; duplicates keep the first entry with a
/// warning.
EmbeddingTable parse_embeddings(const std::string& path);
EmbeddingTable parse_embeddings(std::istream& in, const std::string& source);
void write_embeddings(std::ostream& out, const EmbeddingTable& table);
void write_embeddings(const std::string& path, const EmbeddingTable& table);

/// Shortest text form that parses back to the same double.
std::string format_double(double x);

struct ClassLabel {
  std::string name;                // e.g. "playing piano"
  std::vector<std::string> words;  // {"playing", "piano"}

  friend bool operator==(const ClassLabel&, const ClassLabel&) = default;
};

/// Splits a phrase on whitespace. Throws on an empty phrase.
ClassLabel make_class_label(std::string_view phrase);

/// Mean of the in-vocabulary word vectors of the phrase. OOV words are
/// skipped with a warning; throws InvalidArgument if none remain.
Vec class_phrase_vector(const ClassLabel& label, const EmbeddingTable& table);

struct FeatureRow {
  std::string class_phrase;
  Vec features;
};

/// Reads a feature file: CSV with header `class,f0,...,f{C-1}`, or the
/// binary variant starting with the bytes "XMAE".
std::vector<FeatureRow> load_features(const std::string& path);
std::vector<FeatureRow> load_features_csv(std::istream& in, const std::string& source);
void write_features_csv(const std::string& path, std::span<const FeatureRow> rows);
void write_features_binary(const std::string& path, std::span<const FeatureRow> rows);

struct PairedRecord {
  std::size_t id = 0;  // row index in the feature file
  Vec video;
  ClassLabel label;
  Vec text;  // class_phrase_vector(label)
};

std::vector<PairedRecord> build_records(std::span<const FeatureRow> rows,
                                        const EmbeddingTable& table);
/// Throws if any record's text vector differs from its recomputed phrase
/// vector.
void verify_records(std::span<const PairedRecord> records, const EmbeddingTable& table);

struct SplitFractions {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

/// Record ids per split plus the held-out classes; enough to replay a split.
struct SplitManifest {
  std::uint64_t seed = 0;
  std::vector<std::string> unseen_classes;
  std::vector<std::size_t> train, validation, test, unseen;

  nlohmann::json to_json() const;
  static SplitManifest from_json(const nlohmann::json& j);
};

struct SplitDataset {
  std::vector<PairedRecord> train, validation, test, unseen;
  SplitManifest manifest;

  /// Distinct classes of the training split, in first-appearance order.
  std::vector<std::string> train_classes() const;
};

/// Splits n into integer parts proportional to `fractions` (summing to 1),
/// giving leftover units to the largest remainders, ties to the lower index.
std::vector<std::size_t> largest_remainder(std::size_t n, std::span<const double> fractions);

/// Picks unseen classes first, then splits the remaining records.
SplitManifest plan_splits(std::span<const PairedRecord> records, std::uint64_t seed,
                          std::size_t n_unseen_classes, const SplitFractions& fractions);
SplitDataset apply_manifest(std::span<const PairedRecord> records, const SplitManifest& manifest);
SplitDataset make_splits(std::span<const PairedRecord> records, std::uint64_t seed,
                         std::size_t n_unseen_classes, const SplitFractions& fractions);

void write_manifest(const std::string& path, const SplitManifest& manifest);
SplitManifest read_manifest(const std::string& path);

struct SynthData {
  std::vector<FeatureRow> features;
  EmbeddingTable embeddings;  // one word per class: "class_<i>"
  Mat ground_truth;           // C x D map from text prototype to video prototype
};

/// Text prototypes are uniform on the unit D-sphere; video prototypes are
/// M·t for a fixed Gaussian M (entries N(0, 1/D)); each video record adds
/// N(0, noise_sigma²) per component. Text vectors are the prototypes.
SynthData synth_generate(std::size_t n_classes, std::size_t per_class, std::size_t video_dim,
                         std::size_t text_dim, double noise_sigma, std::uint64_t seed);

}  // namespace xmae::data
