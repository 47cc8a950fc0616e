// Acceptance suite: one PASS/FAIL line per headline criterion. Exit status
// is nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "support/gradcheck.hpp"
#include "support/oracles.hpp"
#include "support/reference_adam.hpp"
#include "xmae/cli.hpp"
#include "xmae/data.hpp"
#include "xmae/errors.hpp"
#include "xmae/eval.hpp"
#include "xmae/optim.hpp"

#ifndef XMAE_FIXTURE_DIR
#error "XMAE_FIXTURE_DIR must point at tests/fixtures"
#endif

namespace fs = std::filesystem;
using namespace xmae;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, const std::function<Verdict()>& criterion) {
  const auto start = Clock::now();
  Verdict v;
  try {
    v = criterion();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  if (!v.pass) ++failures;
  std::cout << (v.pass ? "PASS" : "FAIL") << "  " << name << "  (" << v.detail << "; "
            << std::fixed << std::setprecision(1) << seconds_since(start) << " s)" << std::endl;
}

std::string fmt(double x, int precision = 4) {
  std::ostringstream s;
  s << std::setprecision(precision) << x;
  return s.str();
}

// ---------------------------------------------------------------------------

Verdict gradient_integrity() {
  const auto start = Clock::now();
  const losses::LossWeights weights{1.0, 0.5, 0.75, 1.25, 0.5, false};
  double worst = 0.0;
  std::size_t params = 0;
  constexpr int kConfigs = 20;
  for (int i = 0; i < kConfigs; ++i) {
    const auto r = testing::gradient_check(1000 + static_cast<std::uint64_t>(i), weights);
    worst = std::max(worst, r.max_rel_error);
    params += r.parameters;
  }
  const double elapsed = seconds_since(start);
  return {worst <= 1e-4 && elapsed < 60.0,
          std::to_string(kConfigs) + " configs, " + std::to_string(params) +
              " parameters, max rel. error " + fmt(worst, 3) + ", " + fmt(elapsed, 3) + " s"};
}

std::vector<Vec> fixture(const std::string& name) {
  std::vector<Vec> out;
  for (auto& row : data::load_features(std::string(XMAE_FIXTURE_DIR) + "/" + name)) {
    out.push_back(std::move(row.features));
  }
  return out;
}

Verdict mnno_exactness() {
  const double cat = eval::mnno(fixture("cat_video.csv"), fixture("cat_latent.csv"), 3);
  bool ok = cat == 2.0 / 3.0;
  Rng rng(77);
  std::size_t matched = 0;
  constexpr int kInstances = 25;
  for (int t = 0; t < kInstances; ++t) {
    const std::size_t n = 2 + rng.below(14);                               // N <= 15
    const std::size_t K = 1 + rng.below(std::min<std::size_t>(5, n - 1));  // K <= 5, K < N
    std::vector<Vec> a, b;
    for (std::size_t i = 0; i < n; ++i) {
      a.push_back(testing::random_vec(2 + rng.below(4), rng));
      b.push_back(testing::random_vec(2 + rng.below(4), rng));
    }
    // Ragged dims are not allowed within a set; redraw with a fixed dim.
    const std::size_t da = a[0].dim(), db = b[0].dim();
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = testing::random_vec(da, rng);
      b[i] = testing::random_vec(db, rng);
    }
    if (eval::mnno(a, b, K) == testing::brute_mnno(a, b, K)) ++matched;
  }
  ok = ok && matched == kInstances;
  return {ok, "cat fixture " + fmt(cat, 17) + ", brute-force oracle matched " +
                  std::to_string(matched) + "/" + std::to_string(kInstances)};
}

Verdict adam_oracle() {
  // f1: separable quadratic; f2: coupled quadratic 0.5 w'Aw - b'w.
  const std::vector<double> target{1.5, -0.25, 3.0};
  const double A[3][3] = {{3.0, 1.0, 0.0}, {1.0, 2.0, 0.5}, {0.0, 0.5, 1.0}};
  const double bvec[3] = {1.0, -2.0, 0.5};
  const std::vector<std::function<void(const std::vector<double>&, std::vector<double>&)>> grads{
      [&](const std::vector<double>& w, std::vector<double>& g) {
        for (std::size_t i = 0; i < 3; ++i) g[i] = 2.0 * (w[i] - target[i]);
      },
      [&](const std::vector<double>& w, std::vector<double>& g) {
        for (std::size_t i = 0; i < 3; ++i) {
          g[i] = -bvec[i];
          for (std::size_t j = 0; j < 3; ++j) g[i] += A[i][j] * w[j];
        }
      }};
  double worst = 0.0;
  for (const auto& grad : grads) {
    for (double wd : {0.0, 1e-2}) {
      std::vector<double> w{0.3, -0.7, 0.1}, ref = w, g(3), ref_g(3);
      testing::ReferenceAdam oracle(3, 0.05, 0.9, 0.999, 1e-8, wd);
      optim::AdamConfig cfg;
      cfg.learning_rate = 0.05;
      cfg.weight_decay = wd;
      optim::AdamState state;
      for (int step = 0; step < 100; ++step) {
        grad(w, g);
        grad(ref, ref_g);
        std::vector<std::span<double>> p{w}, gs{g};
        optim::adam_step(p, gs, state, cfg);
        oracle.step(ref, ref_g);
        for (std::size_t i = 0; i < 3; ++i) worst = std::max(worst, std::abs(w[i] - ref[i]));
      }
    }
  }
  return {worst <= 1e-10, "2 quadratics x 2 decay settings, 100 steps, max |diff| " +
                              fmt(worst, 3)};
}

// ---------------------------------------------------------------------------
// Synthetic end-to-end. The training configuration mirrors
// configs/synthetic.cfg and the `train` command.

// XMAE_ACCEPTANCE_SEED overrides the fixed seed for robustness sweeps.
const std::uint64_t kSeed = [] {
  const char* s = std::getenv("XMAE_ACCEPTANCE_SEED");
  return s ? std::strtoull(s, nullptr, 10) : std::uint64_t{1};
}();

struct SyntheticSetup {
  data::SynthData synth;
  std::vector<data::PairedRecord> records;
  data::SplitDataset splits;
};

const SyntheticSetup& synthetic_setup() {
  static const SyntheticSetup setup = [] {
    SyntheticSetup s;
    s.synth = data::synth_generate(20, 30, 64, 16, 0.05, kSeed);
    s.records = data::build_records(s.synth.features, s.synth.embeddings);
    s.splits = data::make_splits(s.records, kSeed, 4, {});
    return s;
  }();
  return setup;
}

ModelOptions synthetic_options() {
  ModelOptions o;
  o.dropout_rate = 0.0;
  o.hidden_bias = 1.0;
  o.video_encoder_sizes = {64, 128, 128, 16};
  o.text_encoder_sizes = {16, 128, 128, 16};
  return o;
}

optim::TrainConfig synthetic_train_config() {
  optim::TrainConfig tc;
  tc.weights = {1.0, 0.0, 1.0, 1.0, 0.5, false};
  tc.adam.learning_rate = 1e-4;
  tc.batch_size = 64;
  tc.epochs = 100;
  tc.seed = kSeed;
  return tc;
}

CrossModalAutoencoder fresh_model(std::uint64_t seed, const ModelOptions& options) {
  Rng root(seed);
  Rng model_rng = root.split("model");
  return CrossModalAutoencoder::create({64, 16, 16}, options, model_rng);
}

const CrossModalAutoencoder& trained_synthetic_model() {
  static const CrossModalAutoencoder model = [] {
    const auto& s = synthetic_setup();
    return optim::train(fresh_model(kSeed, synthetic_options()), s.splits,
                        synthetic_train_config())
        .best_model;
  }();
  return model;
}

Verdict synthetic_end_to_end() {
  const auto start = Clock::now();
  const auto& s = synthetic_setup();
  const auto& model = trained_synthetic_model();
  const double train_seconds = seconds_since(start);
  const eval::Vocabulary vocabulary(s.synth.embeddings);
  const std::vector<std::size_t> ns{1, 5};
  const auto seen = eval::seen_eval(model, s.splits.test, vocabulary, ns);
  const auto unseen = eval::zero_shot_eval(model, s.splits.unseen, vocabulary, ns);

  // Chance: untrained models of the same architecture on the same unseen
  // split, averaged over 20 initializations; never below 1/|vocabulary|.
  double simulated = 0.0;
  constexpr int kRandomModels = 20;
  for (int i = 0; i < kRandomModels; ++i) {
    auto random = fresh_model(10'000 + static_cast<std::uint64_t>(i), synthetic_options());
    random.set_mode(nn::Mode::Eval);
    random.class_manifest = model.class_manifest;
    simulated += eval::zero_shot_eval(random, s.splits.unseen, vocabulary, ns).accuracy[0];
  }
  simulated /= kRandomModels;
  const double uniform = 1.0 / static_cast<double>(vocabulary.size());
  const double chance = std::max(simulated, uniform);

  const bool ok = seen.accuracy[0] >= 0.90 && seen.accuracy[1] >= 0.98 &&
                  unseen.accuracy[0] >= 3.0 * chance && train_seconds < 300.0;
  return {ok, "seen top-1 " + fmt(seen.accuracy[0]) + ", top-5 " + fmt(seen.accuracy[1]) +
                  "; zero-shot top-1 " + fmt(unseen.accuracy[0]) + " vs 3 x chance " +
                  fmt(3.0 * chance) + " (simulated " + fmt(simulated) + ", 1/V " +
                  fmt(uniform) + "); training " + fmt(train_seconds, 3) + " s"};
}

Verdict joint_collapse() {
  const auto& s = synthetic_setup();
  ModelOptions o;
  o.dropout_rate = 0.0;
  auto run = [&](double joint) {
    optim::TrainConfig tc;
    tc.weights = {0.1, joint, 0.0, 0.0, 0.5, false};
    tc.adam.learning_rate = 1e-3;
    tc.epochs = 40;
    tc.seed = kSeed;
    auto result = optim::train(fresh_model(kSeed, o), s.splits, tc);
    return optim::latent_variance(result.best_model, s.splits.test);
  };
  const double dominant = run(10.0);
  const double reference = run(0.0);
  return {dominant * 10.0 <= reference,
          "latent variance " + fmt(dominant, 3) + " (0.1/10/0/0) vs " + fmt(reference, 3) +
              " (0.1/0/0/0), ratio " + fmt(reference / std::max(dominant, 1e-300), 3)};
}

// One seed of the ff-vs-AE comparison: gap = mNNO(X,f(X)) - mNNO(Y,f(X)) in
// the V->T direction on the test split, K = 3.
struct DirectionGaps {
  double ff = 0.0;
  double ae = 0.0;
};

DirectionGaps direction_gaps(std::uint64_t seed, const data::SplitDataset& splits,
                             const CrossModalAutoencoder& ae) {
  eval::FfConfig fc;
  fc.epochs = 100;
  fc.seed = seed;
  const auto ff =
      eval::fit_ff_baseline(splits.train, eval::Direction::VideoToText, fc, splits.validation);
  const auto f = eval::mnno_entry(ff, splits.test, 3);
  const auto a = eval::mnno_report(ae, splits.test, 3)[0];
  return {f.input_overlap - f.target_overlap, a.input_overlap - a.target_overlap};
}

// A single seed's gaps sit within sampling noise of each other (about 60
// test records, neighborhoods of 3), so the comparison is made on the mean
// gap over ten seeds of the synthetic end-to-end setup.
Verdict mnno_directionality() {
  constexpr std::uint64_t kSeeds = 10;
  double ff_sum = 0.0, ae_sum = 0.0;
  std::size_t holds = 0;
  for (std::uint64_t i = 0; i < kSeeds; ++i) {
    const std::uint64_t seed = kSeed + i;
    DirectionGaps g;
    if (seed == kSeed) {
      g = direction_gaps(seed, synthetic_setup().splits, trained_synthetic_model());
    } else {
      const auto synth = data::synth_generate(20, 30, 64, 16, 0.05, seed);
      const auto records = data::build_records(synth.features, synth.embeddings);
      const auto splits = data::make_splits(records, seed, 4, {});
      auto tc = synthetic_train_config();
      tc.seed = seed;
      const auto ae = optim::train(fresh_model(seed, synthetic_options()), splits, tc).best_model;
      g = direction_gaps(seed, splits, ae);
    }
    ff_sum += g.ff;
    ae_sum += g.ae;
    if (g.ff > 0.0 && g.ae < g.ff) ++holds;
  }
  const double ff_gap = ff_sum / kSeeds;
  const double ae_gap = ae_sum / kSeeds;
  const bool ok = ff_gap > 0.0 && ae_gap < ff_gap;
  return {ok, "V->T mean gap mNNO(X,f(X)) - mNNO(Y,f(X)) over " + std::to_string(kSeeds) +
                  " seeds: ff " + fmt(ff_gap) + ", AE " + fmt(ae_gap) + "; holds on " +
                  std::to_string(holds) + "/" + std::to_string(kSeeds) + " seeds individually"};
}

// ---------------------------------------------------------------------------

int cli_run(std::vector<std::string> args) {
  args.insert(args.begin(), "xmae");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  return cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Verdict determinism() {
  const auto root = fs::temp_directory_path() / "xmae_acceptance_determinism";
  fs::remove_all(root);
  std::vector<fs::path> dirs{root / "a", root / "b"};
  for (const auto& d : dirs) {
    const auto data = d / "data";
    const std::vector<std::string> inputs{
        "--features", (data / "features.csv").string(), "--embeddings",
        (data / "embeddings.txt").string(),       "--manifest",
        (data / "manifest.json").string(),       "--out-dir", d.string(), "--seed", "5",
        "--epochs", "5"};
    auto with = [&](std::vector<std::string> a) {
      a.insert(a.end(), inputs.begin(), inputs.end());
      return a;
    };
    if (cli_run({"synth", "--out-dir", data.string(), "--classes", "8", "--per-class", "12",
                 "--c", "12", "--d", "6", "--unseen-classes", "2", "--seed", "5"}) != 0 ||
        cli_run(with({"train"})) != 0 || cli_run(with({"baseline"})) != 0 ||
        cli_run(with({"eval", "--model", (d / "model.xmae").string()})) != 0 ||
        cli_run(with({"mnno", "--model", (d / "model.xmae").string(), "--baseline-v2t",
                      (d / "ff_v2t.xmae").string(), "--baseline-t2v",
                      (d / "ff_t2v.xmae").string()})) != 0) {
      return {false, "a command failed"};
    }
  }
  const std::vector<std::string> files{
      "data/features.csv", "data/embeddings.txt", "data/manifest.json", "data/ground_truth.csv",
      "model.xmae",        "history.csv",         "ff_v2t.xmae",        "ff_t2v.xmae",
      "eval_report.csv",   "eval_report.txt",     "mnno_report.csv",    "mnno_report.txt"};
  std::vector<std::string> differing;
  for (const auto& f : files) {
    if (slurp(dirs[0] / f) != slurp(dirs[1] / f) || slurp(dirs[0] / f).empty()) {
      differing.push_back(f);
    }
  }
  fs::remove_all(root);
  std::string detail = std::to_string(files.size() - differing.size()) + "/" +
                       std::to_string(files.size()) + " artifacts byte-identical";
  for (const auto& f : differing) detail += "; differs: " + f;
  return {differing.empty(), detail};
}

Verdict top_n_hit_rule() {
  Rng rng(404);
  std::size_t checks = 0, violations = 0;
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::string> words;
    std::vector<Vec> vectors;
    for (int w = 0; w < 15; ++w) {
      words.push_back("w" + std::to_string(w));
      vectors.push_back(testing::random_vec(5, rng));
    }
    const eval::Vocabulary vocabulary(words, vectors);
    Rng mrng(static_cast<std::uint64_t>(trial));
    ModelOptions o;
    o.dropout_rate = 0.0;
    auto model = CrossModalAutoencoder::create({7, 5, 3}, o, mrng);
    model.set_mode(nn::Mode::Eval);
    std::vector<data::PairedRecord> records;  // 20-record fixture
    for (std::size_t i = 0; i < 20; ++i) {
      data::PairedRecord r;
      r.id = i;
      r.video = testing::random_vec(7, rng);
      r.text = Vec(5);
      std::string phrase = words[rng.below(15)];
      if (rng.bernoulli(0.5)) phrase += " " + words[rng.below(15)];
      r.label = data::make_class_label(phrase);
      records.push_back(std::move(r));
    }
    double previous = 0.0;
    for (std::size_t n = 1; n <= 15; ++n) {
      const double got = eval::top_n_accuracy(model, records, vocabulary, n);
      std::size_t hits = 0;
      for (const auto& r : records) {
        const auto ranked = testing::brute_rank(video_to_text(model, r.video), vectors, n);
        // Any-match: a hit if any word of the phrase is among the retrieved.
        bool hit = false;
        for (auto idx : ranked) {
          for (const auto& w : r.label.words) hit = hit || words[idx] == w;
        }
        hits += hit ? 1 : 0;
      }
      checks += 2;
      if (got != static_cast<double>(hits) / 20.0) ++violations;
      if (got < previous) ++violations;
      previous = got;
    }
    ++checks;
    if (previous != 1.0) ++violations;  // N = |vocabulary| always hits
  }
  // Multi-word any-match on a hand-built case.
  const eval::Vocabulary v({"playing", "piano", "guitar"}, {Vec{1, 0}, Vec{0, 1}, Vec{1, 1}});
  const auto label = data::make_class_label("playing piano");
  const std::vector<std::size_t> second{1}, third{2};
  checks += 2;
  if (!eval::is_hit(second, label, v)) ++violations;
  if (eval::is_hit(third, label, v)) ++violations;
  return {violations == 0, std::to_string(checks) + " checks (oracle, monotone in N, any-match), " +
                               std::to_string(violations) + " violations"};
}

}  // namespace

int main() {
  set_warning_sink([](std::string_view) {});
  report("gradient integrity", gradient_integrity);
  report("mNNO exactness", mnno_exactness);
  report("Adam oracle", adam_oracle);
  report("synthetic end-to-end", synthetic_end_to_end);
  report("joint-loss collapse", joint_collapse);
  report("mNNO directionality (ff vs AE, V->T)", mnno_directionality);
  report("determinism", determinism);
  report("top-N hit rule", top_n_hit_rule);
  std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << std::endl;
  return failures == 0 ? 0 : 1;
}
