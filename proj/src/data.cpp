#include "xmae/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "xmae/container.hpp"

namespace xmae::data {

namespace {

constexpr std::string_view kFeatureMagic = "XMAE";
constexpr std::uint32_t kFeatureVersion = 1;

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

std::vector<std::string_view> split_whitespace(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && is_space(line[i])) ++i;
    std::size_t j = i;
    while (j < line.size() && !is_space(line[j])) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

bool parse_double(std::string_view token, double& out) {
  token = trim(token);
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  const char* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, out);
  return ec == std::errc() && ptr == end && !token.empty();
}

// Splits one CSV line into fields; the class field may be double-quoted.
std::vector<std::string> split_csv(std::string_view line, const std::string& source,
                                   std::size_t line_no) {
  std::vector<std::string> fields;
  std::size_t i = 0;
  while (true) {
    std::string field;
    if (i < line.size() && line[i] == '"') {
      ++i;
      bool closed = false;
      while (i < line.size()) {
        if (line[i] == '"') {
          if (i + 1 < line.size() && line[i + 1] == '"') {
            field += '"';
            i += 2;
            continue;
          }
          ++i;
          closed = true;
          break;
        }
        field += line[i++];
      }
      if (!closed) throw ParseError(source, line_no, "unterminated quoted field");
      if (i < line.size() && line[i] != ',') {
        throw ParseError(source, line_no, "unexpected text after quoted field");
      }
    } else {
      const std::size_t j = line.find(',', i);
      field = std::string(line.substr(i, j == std::string_view::npos ? line.npos : j - i));
      i = j == std::string_view::npos ? line.size() : j;
    }
    fields.push_back(std::move(field));
    if (i >= line.size()) break;
    ++i;  // comma
    if (i == line.size()) {
      fields.emplace_back();
      break;
    }
  }
  return fields;
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

bool EmbeddingTable::add(std::string word, Vec vector) {
  if (dim_ == 0) dim_ = vector.dim();
  if (vector.dim() != dim_ || dim_ == 0) {
    throw InvalidArgument("EmbeddingTable: vector for '" + word + "' has dim " +
                          std::to_string(vector.dim()) + ", table dim is " + std::to_string(dim_));
  }
  require_finite(vector.span(), "EmbeddingTable");
  if (index_.count(word)) return false;
  index_.emplace(word, words_.size());
  words_.push_back(std::move(word));
  vectors_.push_back(std::move(vector));
  return true;
}

const Vec* EmbeddingTable::find(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? nullptr : &vectors_[it->second];
}

EmbeddingTable parse_embeddings(std::istream& in, const std::string& source) {
  EmbeddingTable table;
  std::string line;
  std::size_t line_no = 0;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto tokens = split_whitespace(line);
    if (tokens.empty()) continue;
    if (tokens.size() < 2) throw ParseError(source, line_no, "expected a word and a vector");
    const std::size_t d = tokens.size() - 1;
    if (dim == 0) {
      dim = d;
    } else if (d != dim) {
      throw ParseError(source, line_no,
                       "expected " + std::to_string(dim) + " values, got " + std::to_string(d));
    }
    Vec v(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      if (!parse_double(tokens[i + 1], v[i])) {
        throw ParseError(source, line_no, "bad number '" + std::string(tokens[i + 1]) + "'");
      }
      if (!std::isfinite(v[i])) throw ParseError(source, line_no, "non-finite value");
    }
    std::string word(tokens[0]);
    if (!table.add(word, std::move(v))) {
      warn(source + ":" + std::to_string(line_no) + ": duplicate word '" + word +
           "', keeping the first entry");
    }
  }
  if (table.size() == 0) throw ParseError(source, 0, "no embeddings found");
  return table;
}

EmbeddingTable parse_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, 0, "cannot open file");
  return parse_embeddings(in, path);
}

std::string format_double(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, ptr);
}

void write_embeddings(std::ostream& out, const EmbeddingTable& table) {
  for (std::size_t i = 0; i < table.size(); ++i) {
    out << table.words()[i];
    for (double x : table.vectors()[i]) out << ' ' << format_double(x);
    out << '\n';
  }
}

void write_embeddings(const std::string& path, const EmbeddingTable& table) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_embeddings(out, table);
}

ClassLabel make_class_label(std::string_view phrase) {
  ClassLabel label;
  for (auto w : split_whitespace(phrase)) label.words.emplace_back(w);
  if (label.words.empty()) throw InvalidArgument("empty class phrase");
  label.name = label.words.front();
  for (std::size_t i = 1; i < label.words.size(); ++i) label.name += " " + label.words[i];
  return label;
}

Vec class_phrase_vector(const ClassLabel& label, const EmbeddingTable& table) {
  Vec sum(table.dim());
  std::size_t found = 0;
  for (const auto& w : label.words) {
    if (const Vec* v = table.find(w)) {
      sum += *v;
      ++found;
    } else {
      warn("class '" + label.name + "': word '" + w + "' not in vocabulary, skipped");
    }
  }
  if (found == 0) {
    throw InvalidArgument("class '" + label.name + "': no word of the phrase is in the vocabulary");
  }
  sum *= 1.0 / static_cast<double>(found);
  return sum;
}

std::vector<FeatureRow> load_features_csv(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(source, 1, "missing header");
  auto header = split_csv(trim(line), source, 1);
  if (header.size() < 2 || trim(header[0]) != "class") {
    throw ParseError(source, 1, "header must be class,f0,...,f{C-1}");
  }
  const std::size_t dim = header.size() - 1;
  for (std::size_t i = 0; i < dim; ++i) {
    if (trim(header[i + 1]) != "f" + std::to_string(i)) {
      throw ParseError(source, 1, "header column " + std::to_string(i + 2) + " should be f" +
                                      std::to_string(i));
    }
  }
  std::vector<FeatureRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_csv(trim(line), source, line_no);
    if (fields.size() != dim + 1) {
      throw ParseError(source, line_no,
                       "expected " + std::to_string(dim) + " features, got " +
                           std::to_string(fields.size() - 1));
    }
    FeatureRow row;
    row.class_phrase = std::string(trim(fields[0]));
    if (row.class_phrase.empty()) throw ParseError(source, line_no, "empty class field");
    row.features = Vec(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      if (!parse_double(fields[i + 1], row.features[i]) || !std::isfinite(row.features[i])) {
        throw ParseError(source, line_no,
                         "column " + std::to_string(i + 2) + ": bad value '" + fields[i + 1] + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

std::vector<FeatureRow> load_features_binary(std::istream& in, const std::string& source) {
  std::uint32_t version = 0;
  std::uint64_t n = 0, dim = 0;
  if (!read_u32_le(in, version) || version != kFeatureVersion) {
    throw ParseError(source, 0, "unsupported binary feature version");
  }
  if (!read_u64_le(in, n) || !read_u64_le(in, dim) || dim == 0) {
    throw ParseError(source, 0, "truncated binary feature header");
  }
  std::vector<FeatureRow> rows;
  for (std::uint64_t r = 0; r < n; ++r) {
    std::uint32_t len = 0;
    if (!read_u32_le(in, len) || len > (1u << 20)) {
      throw ParseError(source, 0, "row " + std::to_string(r) + ": bad class name length");
    }
    FeatureRow row;
    row.class_phrase.resize(len);
    if (!in.read(row.class_phrase.data(), len)) {
      throw ParseError(source, 0, "row " + std::to_string(r) + ": truncated class name");
    }
    row.features = Vec(dim);
    for (double& x : row.features) {
      if (!read_f64_le(in, x)) throw ParseError(source, 0, "row " + std::to_string(r) + ": truncated");
      if (!std::isfinite(x)) throw ParseError(source, 0, "row " + std::to_string(r) + ": non-finite value");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

std::vector<FeatureRow> load_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path, 0, "cannot open file");
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() == 4 && std::string_view(magic, 4) == kFeatureMagic) {
    return load_features_binary(in, path);
  }
  in.clear();
  in.seekg(0);
  return load_features_csv(in, path);
}

void write_features_csv(const std::string& path, std::span<const FeatureRow> rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  const std::size_t dim = rows.empty() ? 0 : rows.front().features.dim();
  out << "class";
  for (std::size_t i = 0; i < dim; ++i) out << ",f" << i;
  out << '\n';
  for (const auto& row : rows) {
    if (row.features.dim() != dim) throw InvalidArgument("write_features_csv: ragged rows");
    out << csv_quote(row.class_phrase);
    for (double x : row.features) out << ',' << format_double(x);
    out << '\n';
  }
}

void write_features_binary(const std::string& path, std::span<const FeatureRow> rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  const std::size_t dim = rows.empty() ? 0 : rows.front().features.dim();
  out.write(kFeatureMagic.data(), 4);
  write_u32_le(out, kFeatureVersion);
  write_u64_le(out, rows.size());
  write_u64_le(out, dim);
  for (const auto& row : rows) {
    if (row.features.dim() != dim) throw InvalidArgument("write_features_binary: ragged rows");
    write_u32_le(out, static_cast<std::uint32_t>(row.class_phrase.size()));
    out.write(row.class_phrase.data(), static_cast<std::streamsize>(row.class_phrase.size()));
    for (double x : row.features) write_f64_le(out, x);
  }
}

std::vector<PairedRecord> build_records(std::span<const FeatureRow> rows,
                                        const EmbeddingTable& table) {
  std::unordered_map<std::string, std::pair<ClassLabel, Vec>> by_phrase;
  std::vector<PairedRecord> records;
  records.reserve(rows.size());
  const std::size_t dim = rows.empty() ? 0 : rows.front().features.dim();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].features.dim() != dim) {
      throw InvalidArgument("build_records: row " + std::to_string(i) + " has a different dim");
    }
    auto it = by_phrase.find(rows[i].class_phrase);
    if (it == by_phrase.end()) {
      ClassLabel label = make_class_label(rows[i].class_phrase);
      Vec text = class_phrase_vector(label, table);
      it = by_phrase.emplace(rows[i].class_phrase, std::make_pair(std::move(label), std::move(text)))
               .first;
    }
    records.push_back({i, rows[i].features, it->second.first, it->second.second});
  }
  return records;
}

void verify_records(std::span<const PairedRecord> records, const EmbeddingTable& table) {
  for (const auto& r : records) {
    if (!(class_phrase_vector(r.label, table) == r.text)) {
      throw InvalidArgument("record " + std::to_string(r.id) +
                            ": text vector does not match its class phrase");
    }
  }
}

nlohmann::json SplitManifest::to_json() const {
  return {{"seed", seed},
          {"unseen_classes", unseen_classes},
          {"record_ids",
           {{"train", train}, {"validation", validation}, {"test", test}, {"unseen", unseen}}}};
}

SplitManifest SplitManifest::from_json(const nlohmann::json& j) {
  SplitManifest m;
  try {
    m.seed = j.at("seed").get<std::uint64_t>();
    m.unseen_classes = j.at("unseen_classes").get<std::vector<std::string>>();
    const auto& ids = j.at("record_ids");
    m.train = ids.at("train").get<std::vector<std::size_t>>();
    m.validation = ids.at("validation").get<std::vector<std::size_t>>();
    m.test = ids.at("test").get<std::vector<std::size_t>>();
    m.unseen = ids.at("unseen").get<std::vector<std::size_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("split manifest: ") + e.what());
  }
  return m;
}

std::vector<std::string> SplitDataset::train_classes() const {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& r : train) {
    if (seen.insert(r.label.name).second) out.push_back(r.label.name);
  }
  return out;
}

std::vector<std::size_t> largest_remainder(std::size_t n, std::span<const double> fractions) {
  double total = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0)) throw InvalidArgument("split fractions must be nonnegative");
    total += f;
  }
  if (fractions.empty() || std::abs(total - 1.0) > 1e-9) {
    throw InvalidArgument("split fractions must sum to 1");
  }
  std::vector<std::size_t> counts(fractions.size());
  std::vector<double> rem(fractions.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    const double q = static_cast<double>(n) * fractions[i];
    counts[i] = static_cast<std::size_t>(std::floor(q));
    rem[i] = q - std::floor(q);
    assigned += counts[i];
  }
  std::vector<std::size_t> order(fractions.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++counts[order[k % order.size()]];
  return counts;
}

SplitManifest plan_splits(std::span<const PairedRecord> records, std::uint64_t seed,
                          std::size_t n_unseen_classes, const SplitFractions& fractions) {
  std::vector<std::string> classes;
  std::set<std::string> seen;
  for (const auto& r : records) {
    if (seen.insert(r.label.name).second) classes.push_back(r.label.name);
  }
  if (n_unseen_classes >= classes.size()) {
    throw InvalidArgument("make_splits: asked for " + std::to_string(n_unseen_classes) +
                          " unseen classes but the data has only " + std::to_string(classes.size()) +
                          " classes (at least one must stay seen)");
  }
  Rng root(seed);
  Rng class_rng = root.split("unseen_classes");
  Rng record_rng = root.split("records");

  std::vector<std::string> shuffled = classes;
  shuffle(std::span<std::string>(shuffled), class_rng);
  std::set<std::string> unseen(shuffled.begin(),
                               shuffled.begin() + static_cast<std::ptrdiff_t>(n_unseen_classes));

  SplitManifest m;
  m.seed = seed;
  for (const auto& c : classes) {
    if (unseen.count(c)) m.unseen_classes.push_back(c);
  }
  std::vector<std::size_t> pool;
  for (const auto& r : records) {
    if (unseen.count(r.label.name)) {
      m.unseen.push_back(r.id);
    } else {
      pool.push_back(r.id);
    }
  }
  shuffle(std::span<std::size_t>(pool), record_rng);
  const double f[] = {fractions.train, fractions.validation, fractions.test};
  const auto counts = largest_remainder(pool.size(), f);
  if (counts[0] == 0) {
    throw InvalidArgument("make_splits: " + std::to_string(pool.size()) +
                          " seen records give an empty training split");
  }
  auto it = pool.begin();
  auto take = [&](std::size_t k, std::vector<std::size_t>& dst) {
    dst.assign(it, it + static_cast<std::ptrdiff_t>(k));
    it += static_cast<std::ptrdiff_t>(k);
  };
  take(counts[0], m.train);
  take(counts[1], m.validation);
  take(counts[2], m.test);
  return m;
}

SplitDataset apply_manifest(std::span<const PairedRecord> records, const SplitManifest& manifest) {
  std::unordered_map<std::size_t, const PairedRecord*> by_id;
  for (const auto& r : records) by_id[r.id] = &r;
  SplitDataset ds;
  ds.manifest = manifest;
  std::set<std::size_t> used;
  auto fill = [&](const std::vector<std::size_t>& ids, std::vector<PairedRecord>& dst,
                  const char* name) {
    for (std::size_t id : ids) {
      auto it = by_id.find(id);
      if (it == by_id.end()) {
        throw InvalidArgument(std::string("manifest ") + name + " split: unknown record id " +
                              std::to_string(id));
      }
      if (!used.insert(id).second) {
        throw InvalidArgument("manifest: record " + std::to_string(id) + " appears in two splits");
      }
      dst.push_back(*it->second);
    }
  };
  fill(manifest.train, ds.train, "train");
  fill(manifest.validation, ds.validation, "validation");
  fill(manifest.test, ds.test, "test");
  fill(manifest.unseen, ds.unseen, "unseen");

  std::set<std::string> unseen(manifest.unseen_classes.begin(), manifest.unseen_classes.end());
  for (const auto* split : {&ds.train, &ds.validation, &ds.test}) {
    for (const auto& r : *split) {
      if (unseen.count(r.label.name)) {
        throw InvalidArgument("manifest: unseen class '" + r.label.name +
                              "' appears in a seen split");
      }
    }
  }
  for (const auto& r : ds.unseen) {
    if (!unseen.count(r.label.name)) {
      throw InvalidArgument("manifest: unseen split holds seen class '" + r.label.name + "'");
    }
  }
  return ds;
}

SplitDataset make_splits(std::span<const PairedRecord> records, std::uint64_t seed,
                         std::size_t n_unseen_classes, const SplitFractions& fractions) {
  return apply_manifest(records, plan_splits(records, seed, n_unseen_classes, fractions));
}

void write_manifest(const std::string& path, const SplitManifest& manifest) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << manifest.to_json().dump(2) << '\n';
}

SplitManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, 0, "cannot open file");
  try {
    return SplitManifest::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path, 0, e.what());
  } catch (const InvalidArgument& e) {
    throw ParseError(path, 0, e.what());
  }
}

SynthData synth_generate(std::size_t n_classes, std::size_t per_class, std::size_t video_dim,
                         std::size_t text_dim, double noise_sigma, std::uint64_t seed) {
  if (n_classes == 0 || per_class == 0 || video_dim == 0 || text_dim == 0) {
    throw InvalidArgument("synth_generate: sizes must be positive");
  }
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw InvalidArgument("synth_generate: noise_sigma must be finite and nonnegative");
  }
  Rng root(seed);
  Rng text_rng = root.split("text_prototypes");
  Rng map_rng = root.split("cross_modal_map");
  Rng noise_rng = root.split("video_noise");

  SynthData out;
  out.embeddings = EmbeddingTable(text_dim);
  std::vector<Vec> prototypes;
  for (std::size_t c = 0; c < n_classes; ++c) {
    Vec t(text_dim);
    double n = 0.0;
    while (n < 1e-12) {
      for (double& x : t) x = text_rng.normal();
      n = l2_norm(t);
    }
    t *= 1.0 / n;
    out.embeddings.add("class_" + std::to_string(c), t);
    prototypes.push_back(std::move(t));
  }
  out.ground_truth = Mat(video_dim, text_dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(text_dim));
  for (double& x : out.ground_truth.span()) x = scale * map_rng.normal();

  for (std::size_t c = 0; c < n_classes; ++c) {
    const Vec video_proto = matvec(out.ground_truth, prototypes[c]);
    for (std::size_t k = 0; k < per_class; ++k) {
      Vec v = video_proto;
      if (noise_sigma > 0.0) {
        for (double& x : v) x += noise_sigma * noise_rng.normal();
      }
      out.features.push_back({"class_" + std::to_string(c), std::move(v)});
    }
  }
  return out;
}

}  // namespace xmae::data
