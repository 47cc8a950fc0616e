#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "xmae/eval.hpp"
#include "xmae/losses.hpp"
#include "xmae/optim.hpp"

namespace xmae::cli {

enum ExitCode : int { kSuccess = 0, kValidationError = 1, kRuntimeError = 2 };

/// Every user-facing setting. Config files use the key names below
/// (`key = value`); command-line flags use the same names with dashes.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string config_name = "default";
  std::string out_dir = "out";

  // Dataset files.
  std::string features;
  std::string embeddings;
  std::string manifest;

  // Trained artifacts.
  std::string model;
  std::string baseline_v2t;
  std::string baseline_t2v;

  // Standalone mNNO between two index-paired vector sets (feature CSVs).
  std::string set_a;
  std::string set_b;

  // Synthetic data.
  std::size_t classes = 20;
  std::size_t per_class = 30;
  std::size_t c = 0;  // video dim; 0 = infer from data (synth requires it)
  std::size_t d = 0;  // text dim; 0 = infer from data (synth requires it)
  double noise = 0.05;

  // Splits.
  std::size_t unseen_classes = 0;
  data::SplitFractions fractions;

  // Model.
  std::size_t z = 0;  // 0 = min(C, D)
  double dropout = 0.5;
  bool relu_on_output = false;
  std::vector<std::size_t> hidden;  // two encoder hidden widths; empty = geometric
  double hidden_bias = 0.0;

  // Training.
  optim::TrainConfig train;

  // Evaluation.
  std::vector<std::size_t> eval_n{1, 5, 10, 30};
  std::size_t mnno_k = 3;
  eval::NeighborMetric mnno_metric = eval::NeighborMetric::Cosine;
};

/// Sorted list of accepted keys.
std::vector<std::string> known_keys();

/// Reads `key = value` lines; '#' starts a comment. Throws ParseError on
/// lines without '='.
std::map<std::string, std::string> parse_config_text(std::istream& in, const std::string& source);

/// Applies values over the defaults. Every problem (unknown key, bad value,
/// failed cross-field check) is appended to `errors`.
RunConfig build_config(const std::map<std::string, std::string>& values,
                       std::vector<std::string>& errors);

/// Canonical `key = value` text for every key; parses back to `config`.
std::string render_config(const RunConfig& config);

int cmd_synth(const RunConfig& config, std::ostream& out);
int cmd_train(const RunConfig& config, std::ostream& out);
int cmd_baseline(const RunConfig& config, std::ostream& out);
int cmd_eval(const RunConfig& config, std::ostream& out);
int cmd_mnno(const RunConfig& config, std::ostream& out);
int cmd_inspect(const RunConfig& config, std::ostream& out);

/// Entry point behind the `xmae` executable.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace xmae::cli
