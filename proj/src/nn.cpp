#include "xmae/nn.hpp"

#include <cmath>

#include "xmae/container.hpp"

namespace xmae::nn {

namespace {

void apply_relu(Vec& x) {
  for (double& v : x) v = v > 0.0 ? v : 0.0;
}

bool has_activation(const Mlp& mlp, std::size_t layer) {
  return layer + 1 < mlp.layers.size() || mlp.relu_on_output;
}

Vec affine(const LinearLayer& layer, const Vec& x) {
  Vec y = matvec(layer.weight, x);
  y += layer.bias;
  return y;
}

}  // namespace

std::size_t Mlp::in_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
std::size_t Mlp::out_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }

std::vector<std::size_t> Mlp::sizes() const {
  std::vector<std::size_t> s;
  if (layers.empty()) return s;
  s.push_back(in_dim());
  for (const auto& l : layers) s.push_back(l.out_dim());
  return s;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.rows() * l.weight.cols() + l.bias.dim();
  return n;
}

void Mlp::validate() const {
  if (layers.empty()) throw InvalidArgument("Mlp: no layers");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw InvalidArgument("Mlp: dropout rate must be in [0, 1)");
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.in_dim() == 0 || l.out_dim() == 0 || l.bias.dim() != l.out_dim()) {
      throw InvalidArgument("Mlp: layer " + std::to_string(i) + " has inconsistent dims");
    }
    if (i > 0 && layers[i - 1].out_dim() != l.in_dim()) {
      throw InvalidArgument("Mlp: layer " + std::to_string(i) + " input dim " +
                            std::to_string(l.in_dim()) + " != previous output dim " +
                            std::to_string(layers[i - 1].out_dim()));
    }
    if (!all_finite(l.weight.span()) || !all_finite(l.bias.span())) {
      throw InvalidArgument("Mlp: layer " + std::to_string(i) + " has non-finite parameters");
    }
  }
}

std::vector<std::size_t> interpolated_sizes(std::size_t in, std::size_t out, std::size_t layers) {
  if (in == 0 || out == 0 || layers == 0) {
    throw InvalidArgument("interpolated_sizes: dims and layer count must be positive");
  }
  std::vector<std::size_t> sizes{in};
  const double ratio = static_cast<double>(out) / static_cast<double>(in);
  for (std::size_t i = 1; i < layers; ++i) {
    const double s = static_cast<double>(in) *
                     std::pow(ratio, static_cast<double>(i) / static_cast<double>(layers));
    sizes.push_back(std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(s))));
  }
  sizes.push_back(out);
  return sizes;
}

Mlp init_mlp(std::span<const std::size_t> sizes, double dropout_rate, Rng& rng,
             bool relu_on_output) {
  if (sizes.size() < 2) throw InvalidArgument("init_mlp: need at least two sizes");
  for (std::size_t s : sizes) {
    if (s == 0) throw InvalidArgument("init_mlp: dimensions must be positive");
  }
  Mlp mlp;
  mlp.dropout_rate = dropout_rate;
  mlp.relu_on_output = relu_on_output;
  mlp.mode = Mode::Train;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    const std::size_t fan_in = sizes[i];
    const std::size_t fan_out = sizes[i + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    LinearLayer layer{Mat(fan_out, fan_in), Vec(fan_out)};
    for (double& w : layer.weight.span()) w = rng.uniform(-bound, bound);
    mlp.layers.push_back(std::move(layer));
  }
  mlp.validate();
  return mlp;
}

Mlp init_mlp(std::size_t in_dim, std::size_t out_dim, double dropout_rate, Rng& rng) {
  const auto sizes = interpolated_sizes(in_dim, out_dim, 3);
  return init_mlp(sizes, dropout_rate, rng);
}

ForwardResult forward_with_masks(const Mlp& mlp, const Vec& x, const DropoutMasks& masks) {
  if (mlp.layers.empty()) throw InvalidArgument("forward: empty network");
  if (x.dim() != mlp.in_dim()) {
    throw InvalidArgument("forward: input dim " + std::to_string(x.dim()) + " != network input " +
                          std::to_string(mlp.in_dim()));
  }
  const std::size_t n = mlp.layers.size();
  if (!masks.empty() && masks.size() != n - 1) {
    throw ContractViolation("forward: expected " + std::to_string(n - 1) + " dropout masks");
  }
  ForwardResult result;
  auto& cache = result.cache;
  cache.shape = mlp.sizes();
  cache.masks = masks;
  Vec h = x;
  for (std::size_t i = 0; i < n; ++i) {
    cache.inputs.push_back(h);
    Vec a = affine(mlp.layers[i], h);
    cache.pre.push_back(a);
    if (has_activation(mlp, i)) apply_relu(a);
    if (i + 1 < n && !masks.empty()) {
      const Vec& m = masks[i];
      if (m.dim() != a.dim()) throw ContractViolation("forward: dropout mask has wrong dim");
      for (std::size_t j = 0; j < a.dim(); ++j) a[j] *= m[j];
    }
    h = std::move(a);
  }
  result.y = std::move(h);
  return result;
}

ForwardResult forward(const Mlp& mlp, const Vec& x, Rng& rng) {
  DropoutMasks masks;
  if (mlp.mode == Mode::Train && mlp.dropout_rate > 0.0) {
    const double keep = 1.0 - mlp.dropout_rate;
    const double scale = 1.0 / keep;
    for (std::size_t i = 0; i + 1 < mlp.layers.size(); ++i) {
      Vec m(mlp.layers[i].out_dim());
      for (double& v : m) v = rng.bernoulli(keep) ? scale : 0.0;
      masks.push_back(std::move(m));
    }
  }
  return forward_with_masks(mlp, x, masks);
}

Vec infer(const Mlp& mlp, const Vec& x) { return forward_with_masks(mlp, x, {}).y; }

Vec backward(const Mlp& mlp, const ForwardCache& cache, const Vec& grad_y, MlpGrads& accum) {
  if (!cache.valid()) throw ContractViolation("backward: missing forward cache");
  if (cache.shape != mlp.sizes()) {
    throw ContractViolation("backward: cache was produced by a different network shape");
  }
  if (grad_y.dim() != mlp.out_dim()) {
    throw InvalidArgument("backward: grad_y dim " + std::to_string(grad_y.dim()) +
                          " != output dim " + std::to_string(mlp.out_dim()));
  }
  if (accum.layers.size() != mlp.layers.size()) accum = zero_grads(mlp);

  Vec g = grad_y;
  for (std::size_t i = mlp.layers.size(); i-- > 0;) {
    // g currently holds d/d(output of layer i after activation and dropout).
    if (i + 1 < mlp.layers.size() && !cache.masks.empty()) {
      const Vec& m = cache.masks[i];
      for (std::size_t j = 0; j < g.dim(); ++j) g[j] *= m[j];
    }
    if (has_activation(mlp, i)) {
      const Vec& pre = cache.pre[i];
      for (std::size_t j = 0; j < g.dim(); ++j) {
        if (pre[j] <= 0.0) g[j] = 0.0;
      }
    }
    const Vec& input = cache.inputs[i];
    auto& gl = accum.layers[i];
    for (std::size_t r = 0; r < g.dim(); ++r) {
      const double gr = g[r];
      gl.bias[r] += gr;
      if (gr == 0.0) continue;
      auto row = gl.weight.row(r);
      for (std::size_t c = 0; c < input.dim(); ++c) row[c] += gr * input[c];
    }
    g = matvec_transposed(mlp.layers[i].weight, g);
  }
  return g;
}

BackwardResult backward(const Mlp& mlp, const ForwardCache& cache, const Vec& grad_y) {
  BackwardResult r;
  r.grads = zero_grads(mlp);
  r.grad_x = backward(mlp, cache, grad_y, r.grads);
  return r;
}

MlpGrads zero_grads(const Mlp& mlp) {
  MlpGrads g;
  for (const auto& l : mlp.layers) {
    g.layers.push_back({Mat(l.out_dim(), l.in_dim()), Vec(l.out_dim())});
  }
  return g;
}

void add_scaled(MlpGrads& into, const MlpGrads& other, double s) {
  if (into.layers.size() != other.layers.size()) {
    throw ContractViolation("add_scaled: gradient shapes differ");
  }
  for (std::size_t i = 0; i < into.layers.size(); ++i) {
    auto dst = into.layers[i].weight.span();
    auto src = other.layers[i].weight.span();
    if (dst.size() != src.size()) throw ContractViolation("add_scaled: gradient shapes differ");
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += s * src[j];
    for (std::size_t j = 0; j < into.layers[i].bias.dim(); ++j) {
      into.layers[i].bias[j] += s * other.layers[i].bias[j];
    }
  }
}

void scale(MlpGrads& grads, double s) {
  for (auto& l : grads.layers) {
    for (double& w : l.weight.span()) w *= s;
    l.bias *= s;
  }
}

void append_parameters(Mlp& mlp, std::vector<std::span<double>>& out) {
  for (auto& l : mlp.layers) {
    out.push_back(l.weight.span());
    out.push_back(l.bias.span());
  }
}

void append_gradients(MlpGrads& grads, std::vector<std::span<double>>& out) {
  for (auto& l : grads.layers) {
    out.push_back(l.weight.span());
    out.push_back(l.bias.span());
  }
}

nlohmann::json describe(const Mlp& mlp) {
  return {{"sizes", mlp.sizes()},
          {"dropout", mlp.dropout_rate},
          {"relu_on_output", mlp.relu_on_output}};
}

void append_payload(const Mlp& mlp, std::vector<double>& out) {
  for (const auto& l : mlp.layers) {
    auto w = l.weight.span();
    out.insert(out.end(), w.begin(), w.end());
    out.insert(out.end(), l.bias.begin(), l.bias.end());
  }
}

Mlp restore(const nlohmann::json& description, std::span<const double>& payload) {
  Mlp mlp;
  std::vector<std::size_t> sizes;
  try {
    sizes = description.at("sizes").get<std::vector<std::size_t>>();
    mlp.dropout_rate = description.at("dropout").get<double>();
    mlp.relu_on_output = description.value("relu_on_output", false);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("network description: ") + e.what());
  }
  if (sizes.size() < 2) throw InvalidArgument("network description: need at least two sizes");
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    LinearLayer layer{Mat(sizes[i + 1], sizes[i]), Vec(sizes[i + 1])};
    const std::size_t need = layer.weight.rows() * layer.weight.cols() + layer.bias.dim();
    if (payload.size() < need) throw InvalidArgument("network payload is truncated");
    auto w = layer.weight.span();
    std::copy_n(payload.begin(), w.size(), w.begin());
    std::copy_n(payload.begin() + static_cast<std::ptrdiff_t>(w.size()), layer.bias.dim(),
                layer.bias.begin());
    payload = payload.subspan(need);
    mlp.layers.push_back(std::move(layer));
  }
  mlp.mode = Mode::Eval;
  mlp.validate();
  return mlp;
}

void save_mlp(const std::string& path, const Mlp& mlp, std::uint64_t seed) {
  nlohmann::json header = describe(mlp);
  header["format"] = "xmae-mlp";
  header["seed"] = seed;
  std::vector<double> payload;
  append_payload(mlp, payload);
  write_container_file(path, kMlpMagic, header, payload);
}

Mlp load_mlp(const std::string& path) {
  Container c = read_container_file(path, kMlpMagic);
  std::span<const double> payload = c.payload;
  Mlp mlp = restore(c.header, payload);
  if (!payload.empty()) throw ParseError(path, 0, "trailing payload values");
  return mlp;
}

}  // namespace xmae::nn
