#include "xmae/cli.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "xmae/data.hpp"
#include "xmae/model.hpp"

namespace xmae::cli {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::uint64_t to_u64(const std::string& s) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) {
    throw std::invalid_argument("expected a nonnegative integer, got '" + s + "'");
  }
  return v;
}

std::size_t to_size(const std::string& s) { return static_cast<std::size_t>(to_u64(s)); }

double to_double(const std::string& s) {
  double v = 0.0;
  std::string_view t = s;
  if (!t.empty() && t.front() == '+') t.remove_prefix(1);
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size() || t.empty() || !std::isfinite(v)) {
    throw std::invalid_argument("expected a finite number, got '" + s + "'");
  }
  return v;
}

bool to_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw std::invalid_argument("expected true/false, got '" + s + "'");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

std::vector<std::size_t> to_size_list(const std::string& s) {
  std::vector<std::size_t> out;
  if (trim(s).empty()) return out;
  for (const auto& p : split_list(s)) out.push_back(to_size(p));
  return out;
}

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string num(double x) { return data::format_double(x); }

struct Field {
  const char* key;
  const char* help;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define XMAE_STR_FIELD(name, help)                                             \
  Field {                                                                      \
    #name, help, [](RunConfig& c, const std::string& v) { c.name = v; },       \
        [](const RunConfig& c) { return c.name; }                              \
  }
#define XMAE_SIZE_FIELD(name, member, help)                                            \
  Field {                                                                              \
    #name, help, [](RunConfig& c, const std::string& v) { c.member = to_size(v); },    \
        [](const RunConfig& c) { return std::to_string(c.member); }                    \
  }
#define XMAE_DOUBLE_FIELD(name, member, help)                                          \
  Field {                                                                              \
    #name, help, [](RunConfig& c, const std::string& v) { c.member = to_double(v); },  \
        [](const RunConfig& c) { return num(c.member); }                               \
  }
#define XMAE_BOOL_FIELD(name, member, help)                                            \
  Field {                                                                              \
    #name, help, [](RunConfig& c, const std::string& v) { c.member = to_bool(v); },    \
        [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); }    \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"seed", "top-level seed; every random stream derives from it",
            [](RunConfig& c, const std::string& v) { c.seed = to_u64(v); },
            [](const RunConfig& c) { return std::to_string(c.seed); }},
      XMAE_STR_FIELD(config_name, "name stored in the model header"),
      XMAE_STR_FIELD(out_dir, "output directory"),
      XMAE_STR_FIELD(features, "feature file (CSV or XMAE binary)"),
      XMAE_STR_FIELD(embeddings, "word embeddings in GloVe text format"),
      XMAE_STR_FIELD(manifest, "split manifest JSON (optional)"),
      XMAE_STR_FIELD(model, "trained autoencoder file"),
      XMAE_STR_FIELD(baseline_v2t, "ff baseline file, video to text"),
      XMAE_STR_FIELD(baseline_t2v, "ff baseline file, text to video"),
      XMAE_STR_FIELD(set_a, "mnno: first index-paired vector set (feature CSV)"),
      XMAE_STR_FIELD(set_b, "mnno: second index-paired vector set (feature CSV)"),
      XMAE_SIZE_FIELD(classes, classes, "synth: number of classes"),
      XMAE_SIZE_FIELD(per_class, per_class, "synth: records per class"),
      XMAE_SIZE_FIELD(c, c, "video feature dim"),
      XMAE_SIZE_FIELD(d, d, "text embedding dim"),
      XMAE_DOUBLE_FIELD(noise, noise, "synth: video noise standard deviation"),
      XMAE_SIZE_FIELD(unseen_classes, unseen_classes, "classes held out for zero-shot evaluation"),
      XMAE_DOUBLE_FIELD(train_fraction, fractions.train, "fraction of seen records for training"),
      XMAE_DOUBLE_FIELD(val_fraction, fractions.validation, "fraction for validation"),
      XMAE_DOUBLE_FIELD(test_fraction, fractions.test, "fraction for test"),
      XMAE_SIZE_FIELD(z, z, "latent dim (0 = min(C, D))"),
      XMAE_DOUBLE_FIELD(dropout, dropout, "dropout rate between layers"),
      XMAE_BOOL_FIELD(relu_on_output, relu_on_output, "ReLU after the last decoder layer"),
      Field{"hidden", "two encoder hidden widths h1,h2 (empty = geometric interpolation)",
            [](RunConfig& c, const std::string& v) {
              c.hidden = to_size_list(v);
              if (!c.hidden.empty() && c.hidden.size() != 2) {
                throw std::invalid_argument("expected two comma-separated widths, got '" + v + "'");
              }
            },
            [](const RunConfig& c) { return join(c.hidden); }},
      XMAE_DOUBLE_FIELD(hidden_bias, hidden_bias, "initial bias of hidden layers"),
      XMAE_DOUBLE_FIELD(learning_rate, train.adam.learning_rate, "Adam learning rate"),
      XMAE_DOUBLE_FIELD(weight_decay, train.adam.weight_decay, "weight decay"),
      XMAE_DOUBLE_FIELD(beta1, train.adam.beta1, "Adam beta1"),
      XMAE_DOUBLE_FIELD(beta2, train.adam.beta2, "Adam beta2"),
      XMAE_DOUBLE_FIELD(eps, train.adam.eps, "Adam epsilon"),
      XMAE_BOOL_FIELD(decoupled_weight_decay, train.adam.decoupled_weight_decay,
                      "decoupled (AdamW-style) decay instead of L2 in the gradient"),
      XMAE_SIZE_FIELD(batch_size, train.batch_size, "minibatch size"),
      XMAE_SIZE_FIELD(epochs, train.epochs, "training epochs"),
      XMAE_SIZE_FIELD(lr_step_epochs, train.lr_step_epochs, "step decay period (0 = off)"),
      XMAE_DOUBLE_FIELD(lr_step_gamma, train.lr_step_gamma, "step decay factor"),
      Field{"weights", "loss weights recons,joint,cross,rank",
            [](RunConfig& c, const std::string& v) {
              auto parts = split_list(v);
              if (parts.size() != 4) {
                throw std::invalid_argument("expected 4 comma-separated weights, got '" + v + "'");
              }
              auto& w = c.train.weights;
              w.recons = to_double(parts[0]);
              w.joint = to_double(parts[1]);
              w.cross = to_double(parts[2]);
              w.rank = to_double(parts[3]);
            },
            [](const RunConfig& c) {
              const auto& w = c.train.weights;
              return num(w.recons) + "," + num(w.joint) + "," + num(w.cross) + "," + num(w.rank);
            }},
      XMAE_DOUBLE_FIELD(margin, train.weights.margin, "ranking loss margin"),
      XMAE_BOOL_FIELD(squared_norms, train.weights.squared_norms, "square the norm losses"),
      Field{"eval_n", "comma-separated N values for top-N accuracy",
            [](RunConfig& c, const std::string& v) { c.eval_n = to_size_list(v); },
            [](const RunConfig& c) { return join(c.eval_n); }},
      XMAE_SIZE_FIELD(mnno_k, mnno_k, "neighborhood size K for mNNO"),
      Field{"mnno_metric", "cosine or euclidean",
            [](RunConfig& c, const std::string& v) {
              if (v == "cosine") {
                c.mnno_metric = eval::NeighborMetric::Cosine;
              } else if (v == "euclidean") {
                c.mnno_metric = eval::NeighborMetric::Euclidean;
              } else {
                throw std::invalid_argument("expected cosine or euclidean, got '" + v + "'");
              }
            },
            [](const RunConfig& c) {
              return std::string(c.mnno_metric == eval::NeighborMetric::Cosine ? "cosine"
                                                                               : "euclidean");
            }},
  };
  return table;
}

#undef XMAE_STR_FIELD
#undef XMAE_SIZE_FIELD
#undef XMAE_DOUBLE_FIELD
#undef XMAE_BOOL_FIELD

std::string flag_name(const std::string& key) {
  std::string s = key;
  std::replace(s.begin(), s.end(), '_', '-');
  return "--" + s;
}

/// Thrown for problems the user can fix by changing the configuration.
class ConfigProblem : public std::runtime_error {
 public:
  explicit ConfigProblem(std::vector<std::string> problems)
      : std::runtime_error(problems.empty() ? "" : problems.front()),
        problems_(std::move(problems)) {}
  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  std::vector<std::string> problems_;
};

void require_keys(const RunConfig& config, std::initializer_list<const char*> keys) {
  std::vector<std::string> missing;
  std::map<std::string, std::string> values;
  for (const auto& f : fields()) values[f.key] = f.get(config);
  for (const char* k : keys) {
    if (values[k].empty()) missing.push_back(std::string("missing required setting '") + k + "'");
  }
  if (!missing.empty()) throw ConfigProblem(std::move(missing));
}

void prepare_out_dir(const RunConfig& config) {
  std::error_code ec;
  fs::create_directories(config.out_dir, ec);
  if (ec || !fs::is_directory(config.out_dir)) {
    throw std::runtime_error("cannot create output directory " + config.out_dir + ": " +
                             ec.message());
  }
  const auto path = fs::path(config.out_dir) / "config.txt";
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("output directory is not writable: " + config.out_dir);
  out << render_config(config);
}

std::string out_path(const RunConfig& config, const std::string& name) {
  return (fs::path(config.out_dir) / name).string();
}

template <typename Fn>
void write_file(const std::string& path, Fn&& fn) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  fn(out);
  if (!out) throw std::runtime_error("write failed: " + path);
}

struct LoadedData {
  data::EmbeddingTable table;
  std::vector<data::PairedRecord> records;
  data::SplitDataset splits;
};

LoadedData load_data(const RunConfig& config) {
  require_keys(config, {"features", "embeddings"});
  LoadedData d;
  d.table = data::parse_embeddings(config.embeddings);
  const auto rows = data::load_features(config.features);
  if (rows.empty()) throw InvalidArgument(config.features + ": no records");
  const std::size_t c = rows.front().features.dim();
  if (config.c != 0 && config.c != c) {
    throw InvalidArgument("configured video dim c=" + std::to_string(config.c) +
                          " but " + config.features + " has C=" + std::to_string(c));
  }
  if (config.d != 0 && config.d != d.table.dim()) {
    throw InvalidArgument("configured text dim d=" + std::to_string(config.d) + " but " +
                          config.embeddings + " has D=" + std::to_string(d.table.dim()));
  }
  d.records = data::build_records(rows, d.table);
  if (!config.manifest.empty()) {
    d.splits = data::apply_manifest(d.records, data::read_manifest(config.manifest));
  } else {
    d.splits = data::make_splits(d.records, config.seed, config.unseen_classes, config.fractions);
  }
  return d;
}

void check_model_dims(const CrossModalAutoencoder& m, const LoadedData& d) {
  const std::size_t c = d.records.front().video.dim();
  const std::size_t dd = d.table.dim();
  if (m.dims().video != c || m.dims().text != dd) {
    throw InvalidArgument("model dims (C=" + std::to_string(m.dims().video) +
                          ", D=" + std::to_string(m.dims().text) + ") do not match dataset (C=" +
                          std::to_string(c) + ", D=" + std::to_string(dd) + ")");
  }
}

std::vector<Vec> load_vector_set(const std::string& path) {
  std::vector<Vec> out;
  for (auto& row : data::load_features(path)) out.push_back(std::move(row.features));
  return out;
}

}  // namespace

std::vector<std::string> known_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.emplace_back(f.key);
  std::sort(keys.begin(), keys.end());
  return keys;
}

std::map<std::string, std::string> parse_config_text(std::istream& in, const std::string& source) {
  std::map<std::string, std::string> values;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(source, line_no, "expected key = value");
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError(source, line_no, "empty key");
    values[key] = trim(line.substr(eq + 1));
  }
  return values;
}

RunConfig build_config(const std::map<std::string, std::string>& values,
                       std::vector<std::string>& errors) {
  RunConfig config;
  std::map<std::string, const Field*> by_key;
  for (const auto& f : fields()) by_key[f.key] = &f;
  for (const auto& [key, value] : values) {
    auto it = by_key.find(key);
    if (it == by_key.end()) {
      errors.push_back("unknown key '" + key + "'");
      continue;
    }
    try {
      it->second->set(config, value);
    } catch (const std::exception& e) {
      errors.push_back(key + ": " + e.what());
    }
  }
  auto check = [&](auto&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      errors.push_back(e.what());
    }
  };
  check([&] { config.train.validate(); });
  check([&] {
    const double f[] = {config.fractions.train, config.fractions.validation, config.fractions.test};
    data::largest_remainder(0, f);
  });
  if (!(config.dropout >= 0.0 && config.dropout < 1.0)) errors.push_back("dropout must be in [0, 1)");
  if (!(config.noise >= 0.0)) errors.push_back("noise must be nonnegative");
  if (config.eval_n.empty()) errors.push_back("eval_n must list at least one N");
  for (std::size_t n : config.eval_n) {
    if (n == 0) errors.push_back("eval_n entries must be at least 1");
  }
  if (config.mnno_k == 0) errors.push_back("mnno_k must be at least 1");
  for (std::size_t h : config.hidden) {
    if (h == 0) errors.push_back("hidden widths must be at least 1");
  }
  return config;
}

std::string render_config(const RunConfig& config) {
  std::ostringstream out;
  std::vector<const Field*> sorted;
  for (const auto& f : fields()) sorted.push_back(&f);
  std::sort(sorted.begin(), sorted.end(),
            [](const Field* a, const Field* b) { return std::string(a->key) < b->key; });
  for (const Field* f : sorted) out << f->key << " = " << f->get(config) << '\n';
  return out.str();
}

int cmd_synth(const RunConfig& config, std::ostream& out) {
  if (config.c == 0 || config.d == 0) {
    throw ConfigProblem({"synth needs positive c and d"});
  }
  auto synth = data::synth_generate(config.classes, config.per_class, config.c, config.d,
                                    config.noise, config.seed);
  prepare_out_dir(config);
  const auto features = out_path(config, "features.csv");
  const auto embeddings = out_path(config, "embeddings.txt");
  const auto manifest = out_path(config, "manifest.json");
  data::write_features_csv(features, synth.features);
  data::write_embeddings(embeddings, synth.embeddings);
  const auto records = data::build_records(synth.features, synth.embeddings);
  data::write_manifest(manifest, data::plan_splits(records, config.seed, config.unseen_classes,
                                                   config.fractions));
  write_file(out_path(config, "ground_truth.csv"), [&](std::ostream& o) {
    const auto& m = synth.ground_truth;
    for (std::size_t r = 0; r < m.rows(); ++r) {
      for (std::size_t c = 0; c < m.cols(); ++c) o << (c ? "," : "") << num(m(r, c));
      o << '\n';
    }
  });
  out << "wrote " << synth.features.size() << " records (" << config.classes << " classes, C="
      << config.c << ", D=" << config.d << ") to " << config.out_dir << '\n';
  return kSuccess;
}

int cmd_train(const RunConfig& config, std::ostream& out) {
  LoadedData d = load_data(config);
  const ModelDims dims{d.records.front().video.dim(), d.table.dim(),
                       config.z ? config.z : std::min(d.records.front().video.dim(), d.table.dim())};
  ModelOptions options;
  options.dropout_rate = config.dropout;
  options.relu_on_output = config.relu_on_output;
  options.hidden_bias = config.hidden_bias;
  if (!config.hidden.empty()) {
    options.video_encoder_sizes = {dims.video, config.hidden[0], config.hidden[1], dims.latent};
    options.text_encoder_sizes = {dims.text, config.hidden[0], config.hidden[1], dims.latent};
  }
  Rng root(config.seed);
  Rng model_rng = root.split("model");
  auto model = CrossModalAutoencoder::create(dims, options, model_rng);
  model.config_name = config.config_name;

  optim::TrainConfig tc = config.train;
  tc.seed = config.seed;
  prepare_out_dir(config);
  auto result = optim::train(std::move(model), d.splits, tc);
  save_model(out_path(config, "model.xmae"), result.best_model);
  write_file(out_path(config, "history.csv"),
             [&](std::ostream& o) { result.history.write_csv(o); });
  out << "trained " << result.history.epochs.size() << " epochs; best epoch "
      << result.history.best_epoch << ", validation loss "
      << num(result.history.best_val_loss()) << '\n';
  return kSuccess;
}

int cmd_baseline(const RunConfig& config, std::ostream& out) {
  LoadedData d = load_data(config);
  eval::FfConfig fc;
  fc.adam = config.train.adam;
  fc.epochs = config.train.epochs;
  fc.batch_size = config.train.batch_size;
  fc.seed = config.seed;
  prepare_out_dir(config);
  for (auto dir : {eval::Direction::VideoToText, eval::Direction::TextToVideo}) {
    auto ff = eval::fit_ff_baseline(d.splits.train, dir, fc, d.splits.validation);
    const auto name = dir == eval::Direction::VideoToText ? "ff_v2t.xmae" : "ff_t2v.xmae";
    eval::save_baseline(out_path(config, name), ff, config.seed);
    out << "wrote " << out_path(config, name) << '\n';
  }
  return kSuccess;
}

int cmd_eval(const RunConfig& config, std::ostream& out) {
  require_keys(config, {"model"});
  auto model = load_model(config.model);
  LoadedData d = load_data(config);
  check_model_dims(model, d);
  const eval::Vocabulary vocabulary(d.table);
  std::vector<eval::EvalReport> reports;
  if (d.splits.test.empty()) throw InvalidArgument("eval: the test split is empty");
  reports.push_back(eval::seen_eval(model, d.splits.test, vocabulary, config.eval_n));
  if (!d.splits.unseen.empty()) {
    reports.push_back(eval::zero_shot_eval(model, d.splits.unseen, vocabulary, config.eval_n));
  }
  prepare_out_dir(config);
  write_file(out_path(config, "eval_report.csv"),
             [&](std::ostream& o) { eval::write_eval_csv(o, reports); });
  write_file(out_path(config, "eval_report.txt"),
             [&](std::ostream& o) { eval::write_eval_table(o, reports); });
  eval::write_eval_table(out, reports);
  return kSuccess;
}

int cmd_mnno(const RunConfig& config, std::ostream& out) {
  std::vector<eval::MnnoEntry> entries;
  prepare_out_dir(config);
  if (!config.set_a.empty() || !config.set_b.empty()) {
    require_keys(config, {"set_a", "set_b"});
    const auto a = load_vector_set(config.set_a);
    const auto b = load_vector_set(config.set_b);
    const double score = eval::mnno(a, b, config.mnno_k, config.mnno_metric);
    write_file(out_path(config, "mnno_sets.csv"), [&](std::ostream& o) {
      o << "set_a,set_b,K,mnno\n"
        << config.set_a << ',' << config.set_b << ',' << config.mnno_k << ',' << num(score) << '\n';
    });
    out << "mNNO(K=" << config.mnno_k << ") = " << num(score) << '\n';
    return kSuccess;
  }
  if (config.model.empty() && config.baseline_v2t.empty() && config.baseline_t2v.empty()) {
    throw ConfigProblem({"missing artifact: set model, baseline_v2t and/or baseline_t2v"});
  }
  LoadedData d = load_data(config);
  if (d.splits.test.empty()) throw InvalidArgument("mnno: the test split is empty");
  std::optional<CrossModalAutoencoder> model;
  if (!config.model.empty()) {
    model = load_model(config.model);
    check_model_dims(*model, d);
  }
  for (auto dir : {eval::Direction::VideoToText, eval::Direction::TextToVideo}) {
    const auto& path =
        dir == eval::Direction::VideoToText ? config.baseline_v2t : config.baseline_t2v;
    if (!path.empty()) {
      auto ff = eval::load_baseline(path);
      if (ff.direction != dir) {
        throw InvalidArgument(path + " is a " + eval::to_string(ff.direction) +
                              " baseline, expected " + eval::to_string(dir));
      }
      entries.push_back(eval::mnno_entry(ff, d.splits.test, config.mnno_k, config.mnno_metric));
    }
    if (model) {
      auto rows = eval::mnno_report(*model, d.splits.test, config.mnno_k, config.mnno_metric);
      entries.push_back(rows[dir == eval::Direction::VideoToText ? 0 : 1]);
    }
  }
  write_file(out_path(config, "mnno_report.csv"),
             [&](std::ostream& o) { eval::write_mnno_csv(o, entries, config.mnno_k); });
  write_file(out_path(config, "mnno_report.txt"),
             [&](std::ostream& o) { eval::write_mnno_table(o, entries, config.mnno_k); });
  eval::write_mnno_table(out, entries, config.mnno_k);
  return kSuccess;
}

int cmd_inspect(const RunConfig& config, std::ostream& out) {
  require_keys(config, {"model"});
  out << read_model_header(config.model).dump(2) << '\n';
  return kSuccess;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Two-way cross-modal autoencoder: synthetic data, training and evaluation"};
  app.require_subcommand(1);

  struct Command {
    const char* name;
    const char* help;
    int (*fn)(const RunConfig&, std::ostream&);
  };
  const Command commands[] = {
      {"synth", "generate a synthetic paired dataset", cmd_synth},
      {"train", "train the autoencoder and write the best checkpoint", cmd_train},
      {"baseline", "fit feed-forward baselines in both directions", cmd_baseline},
      {"eval", "top-N accuracy on the test and unseen splits", cmd_eval},
      {"mnno", "mean nearest neighbor overlap report", cmd_mnno},
      {"inspect", "print a model file header", cmd_inspect},
  };

  std::string config_file;
  std::map<std::string, std::string> flag_values;
  std::vector<std::pair<CLI::App*, const Command*>> subs;
  for (const auto& cmd : commands) {
    CLI::App* sub = app.add_subcommand(cmd.name, cmd.help);
    sub->add_option("--config", config_file, "key = value configuration file");
    for (const auto& f : fields()) {
      sub->add_option_function<std::string>(
          flag_name(f.key), [&flag_values, key = std::string(f.key)](const std::string& v) {
            flag_values[key] = v;
          },
          f.help);
    }
    subs.emplace_back(sub, &cmd);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kValidationError;
  }

  const Command* chosen = nullptr;
  for (auto& [sub, cmd] : subs) {
    if (sub->parsed()) chosen = cmd;
  }

  std::map<std::string, std::string> values;
  std::vector<std::string> errors;
  if (!config_file.empty()) {
    std::ifstream in(config_file);
    if (!in) {
      err << "error: cannot open config file " << config_file << '\n';
      return kValidationError;
    }
    try {
      values = parse_config_text(in, config_file);
    } catch (const ParseError& e) {
      err << "error: " << e.what() << '\n';
      return kValidationError;
    }
  }
  for (const auto& [k, v] : flag_values) values[k] = v;
  const RunConfig config = build_config(values, errors);
  if (!errors.empty()) {
    for (const auto& e : errors) err << "config error: " << e << '\n';
    return kValidationError;
  }

  try {
    return chosen->fn(config, out);
  } catch (const ConfigProblem& e) {
    for (const auto& p : e.problems()) err << "config error: " << p << '\n';
    return kValidationError;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    return kValidationError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
}

}  // namespace xmae::cli
