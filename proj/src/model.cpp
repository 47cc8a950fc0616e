#include "xmae/model.hpp"

#include <cmath>

#include <algorithm>

#include "xmae/container.hpp"

namespace xmae {

namespace {

void require_sizes(const std::vector<std::size_t>& sizes, std::size_t in, std::size_t out,
                   const char* what) {
  if (sizes.size() != 4 || sizes.front() != in || sizes.back() != out) {
    throw InvalidArgument(std::string(what) + ": explicit sizes must be 4 entries from " +
                          std::to_string(in) + " to " + std::to_string(out));
  }
}

void require_no_dropout_sampling(const nn::Mlp& mlp, const char* what) {
  if (mlp.mode == nn::Mode::Train && mlp.dropout_rate > 0.0) {
    throw ContractViolation(std::string(what) +
                            ": Train-mode dropout needs an Rng; use the Rng overload");
  }
}

Vec eval_pass(const nn::Mlp& mlp, const Vec& x, const char* what) {
  require_no_dropout_sampling(mlp, what);
  return nn::infer(mlp, x);
}

}  // namespace

CrossModalAutoencoder::CrossModalAutoencoder(nn::Mlp video_encoder, nn::Mlp video_decoder,
                                             nn::Mlp text_encoder, nn::Mlp text_decoder)
    : video_encoder_(std::move(video_encoder)),
      video_decoder_(std::move(video_decoder)),
      text_encoder_(std::move(text_encoder)),
      text_decoder_(std::move(text_decoder)) {
  for (const nn::Mlp* n : {&video_encoder_, &video_decoder_, &text_encoder_, &text_decoder_}) {
    n->validate();
    if (n->layers.size() != 3) {
      throw InvalidArgument("CrossModalAutoencoder: each map must have exactly 3 layers");
    }
  }
  dims_ = {video_encoder_.in_dim(), text_encoder_.in_dim(), video_encoder_.out_dim()};
  const std::size_t z = dims_.latent;
  if (text_encoder_.out_dim() != z || video_decoder_.in_dim() != z ||
      text_decoder_.in_dim() != z) {
    throw InvalidArgument("CrossModalAutoencoder: encoders and decoders disagree on latent dim");
  }
  if (video_decoder_.out_dim() != dims_.video || text_decoder_.out_dim() != dims_.text) {
    throw InvalidArgument("CrossModalAutoencoder: decoder output dims do not match inputs");
  }
  const std::size_t bound = std::min(dims_.video, dims_.text);
  if (z > bound) {
    throw InvalidArgument("CrossModalAutoencoder: latent dim " + std::to_string(z) +
                          " exceeds min(C, D) = " + std::to_string(bound));
  }
  if (z == bound) {
    warn("latent dim " + std::to_string(z) + " equals min(C, D); the text side is not compressed");
  }
  set_mode(video_encoder_.mode);
}

CrossModalAutoencoder CrossModalAutoencoder::create(ModelDims dims, const ModelOptions& options,
                                                    Rng& rng) {
  if (dims.video == 0 || dims.text == 0 || dims.latent == 0) {
    throw InvalidArgument("CrossModalAutoencoder: dims must be positive");
  }
  if (!std::isfinite(options.hidden_bias)) {
    throw InvalidArgument("CrossModalAutoencoder: hidden_bias must be finite");
  }
  if (dims.latent > std::min(dims.video, dims.text)) {
    throw InvalidArgument("CrossModalAutoencoder: latent dim " + std::to_string(dims.latent) +
                          " exceeds min(C, D) = " + std::to_string(std::min(dims.video, dims.text)));
  }
  auto ve = options.video_encoder_sizes.empty()
                ? nn::interpolated_sizes(dims.video, dims.latent)
                : options.video_encoder_sizes;
  auto te = options.text_encoder_sizes.empty() ? nn::interpolated_sizes(dims.text, dims.latent)
                                               : options.text_encoder_sizes;
  require_sizes(ve, dims.video, dims.latent, "video encoder");
  require_sizes(te, dims.text, dims.latent, "text encoder");
  std::vector<std::size_t> vd(ve.rbegin(), ve.rend());
  std::vector<std::size_t> td(te.rbegin(), te.rend());

  Rng init = rng.split("init");
  Rng r_ve = init.split("video_encoder");
  Rng r_vd = init.split("video_decoder");
  Rng r_te = init.split("text_encoder");
  Rng r_td = init.split("text_decoder");
  const double p = options.dropout_rate;
  auto init_net = [&](const std::vector<std::size_t>& sizes, Rng& r, bool relu_out) {
    nn::Mlp net = nn::init_mlp(sizes, p, r, relu_out);
    for (std::size_t l = 0; l + 1 < net.layers.size(); ++l) {
      for (double& b : net.layers[l].bias) b = options.hidden_bias;
    }
    return net;
  };
  return CrossModalAutoencoder(init_net(ve, r_ve, false), init_net(vd, r_vd, options.relu_on_output),
                               init_net(te, r_te, false), init_net(td, r_td, options.relu_on_output));
}

void CrossModalAutoencoder::set_mode(nn::Mode mode) noexcept {
  video_encoder_.mode = mode;
  video_decoder_.mode = mode;
  text_encoder_.mode = mode;
  text_decoder_.mode = mode;
}

std::vector<std::span<double>> CrossModalAutoencoder::parameters() {
  std::vector<std::span<double>> views;
  nn::append_parameters(video_encoder_, views);
  nn::append_parameters(video_decoder_, views);
  nn::append_parameters(text_encoder_, views);
  nn::append_parameters(text_decoder_, views);
  return views;
}

std::size_t CrossModalAutoencoder::parameter_count() const {
  return video_encoder_.parameter_count() + video_decoder_.parameter_count() +
         text_encoder_.parameter_count() + text_decoder_.parameter_count();
}

Vec encode_video(const CrossModalAutoencoder& m, const Vec& v, Rng& rng) {
  return nn::forward(m.video_encoder(), v, rng).y;
}
Vec encode_text(const CrossModalAutoencoder& m, const Vec& t, Rng& rng) {
  return nn::forward(m.text_encoder(), t, rng).y;
}
Vec decode_video(const CrossModalAutoencoder& m, const Vec& z, Rng& rng) {
  return nn::forward(m.video_decoder(), z, rng).y;
}
Vec decode_text(const CrossModalAutoencoder& m, const Vec& z, Rng& rng) {
  return nn::forward(m.text_decoder(), z, rng).y;
}

Vec encode_video(const CrossModalAutoencoder& m, const Vec& v) {
  return eval_pass(m.video_encoder(), v, "encode_video");
}
Vec encode_text(const CrossModalAutoencoder& m, const Vec& t) {
  return eval_pass(m.text_encoder(), t, "encode_text");
}
Vec decode_video(const CrossModalAutoencoder& m, const Vec& z) {
  return eval_pass(m.video_decoder(), z, "decode_video");
}
Vec decode_text(const CrossModalAutoencoder& m, const Vec& z) {
  return eval_pass(m.text_decoder(), z, "decode_text");
}

Vec video_to_text(const CrossModalAutoencoder& m, const Vec& v) {
  return nn::infer(m.text_decoder(), nn::infer(m.video_encoder(), v));
}

Vec text_to_video(const CrossModalAutoencoder& m, const Vec& t) {
  return nn::infer(m.video_decoder(), nn::infer(m.text_encoder(), t));
}

PairMasks PairForward::masks() const {
  return {video_encoder.masks, text_encoder.masks, video_recon.masks,
          text_recon.masks,    text_cross.masks,   video_cross.masks};
}

namespace {

PairForward assemble(const Vec& v, const Vec& t, nn::ForwardResult ev, nn::ForwardResult et,
                     nn::ForwardResult vr, nn::ForwardResult tr, nn::ForwardResult tc,
                     nn::ForwardResult vc) {
  PairForward pf;
  pf.v = v;
  pf.t = t;
  pf.z_v = std::move(ev.y);
  pf.z_t = std::move(et.y);
  pf.v_recon = std::move(vr.y);
  pf.t_recon = std::move(tr.y);
  pf.t_cross = std::move(tc.y);
  pf.v_cross = std::move(vc.y);
  pf.video_encoder = std::move(ev.cache);
  pf.text_encoder = std::move(et.cache);
  pf.video_recon = std::move(vr.cache);
  pf.text_recon = std::move(tr.cache);
  pf.text_cross = std::move(tc.cache);
  pf.video_cross = std::move(vc.cache);
  return pf;
}

void check_pair_dims(const CrossModalAutoencoder& m, const Vec& v, const Vec& t) {
  if (v.dim() != m.dims().video || t.dim() != m.dims().text) {
    throw InvalidArgument("pair_forward: got (" + std::to_string(v.dim()) + ", " +
                          std::to_string(t.dim()) + "), model expects (" +
                          std::to_string(m.dims().video) + ", " + std::to_string(m.dims().text) +
                          ")");
  }
}

}  // namespace

PairForward pair_forward(const CrossModalAutoencoder& m, const Vec& v, const Vec& t, Rng& rng) {
  check_pair_dims(m, v, t);
  const Rng call = rng.split(rng.next_u64());
  Rng r_ev = call.split("ev"), r_et = call.split("et"), r_vr = call.split("vr"),
      r_tr = call.split("tr"), r_tc = call.split("tc"), r_vc = call.split("vc");
  auto ev = nn::forward(m.video_encoder(), v, r_ev);
  auto et = nn::forward(m.text_encoder(), t, r_et);
  auto vr = nn::forward(m.video_decoder(), ev.y, r_vr);
  auto tr = nn::forward(m.text_decoder(), et.y, r_tr);
  auto tc = nn::forward(m.text_decoder(), ev.y, r_tc);
  auto vc = nn::forward(m.video_decoder(), et.y, r_vc);
  return assemble(v, t, std::move(ev), std::move(et), std::move(vr), std::move(tr), std::move(tc),
                  std::move(vc));
}

PairForward pair_forward(const CrossModalAutoencoder& m, const Vec& v, const Vec& t,
                         const PairMasks& masks) {
  check_pair_dims(m, v, t);
  auto ev = nn::forward_with_masks(m.video_encoder(), v, masks.video_encoder);
  auto et = nn::forward_with_masks(m.text_encoder(), t, masks.text_encoder);
  auto vr = nn::forward_with_masks(m.video_decoder(), ev.y, masks.video_recon);
  auto tr = nn::forward_with_masks(m.text_decoder(), et.y, masks.text_recon);
  auto tc = nn::forward_with_masks(m.text_decoder(), ev.y, masks.text_cross);
  auto vc = nn::forward_with_masks(m.video_decoder(), et.y, masks.video_cross);
  return assemble(v, t, std::move(ev), std::move(et), std::move(vr), std::move(tr), std::move(tc),
                  std::move(vc));
}

NegativeLatents encode_negative(const CrossModalAutoencoder& m, const Vec& v_n, const Vec& t_n,
                                Rng& rng) {
  check_pair_dims(m, v_n, t_n);
  const Rng call = rng.split(rng.next_u64());
  Rng r_v = call.split("neg_v"), r_t = call.split("neg_t");
  auto ev = nn::forward(m.video_encoder(), v_n, r_v);
  auto et = nn::forward(m.text_encoder(), t_n, r_t);
  return {std::move(ev.y), std::move(et.y), std::move(ev.cache), std::move(et.cache)};
}

NegativeLatents encode_negative(const CrossModalAutoencoder& m, const Vec& v_n, const Vec& t_n,
                                const nn::DropoutMasks& video_masks,
                                const nn::DropoutMasks& text_masks) {
  check_pair_dims(m, v_n, t_n);
  auto ev = nn::forward_with_masks(m.video_encoder(), v_n, video_masks);
  auto et = nn::forward_with_masks(m.text_encoder(), t_n, text_masks);
  return {std::move(ev.y), std::move(et.y), std::move(ev.cache), std::move(et.cache)};
}

std::vector<std::span<double>> ModelGrads::views() {
  std::vector<std::span<double>> out;
  nn::append_gradients(video_encoder, out);
  nn::append_gradients(video_decoder, out);
  nn::append_gradients(text_encoder, out);
  nn::append_gradients(text_decoder, out);
  return out;
}

ModelGrads zero_grads(const CrossModalAutoencoder& m) {
  return {nn::zero_grads(m.video_encoder()), nn::zero_grads(m.video_decoder()),
          nn::zero_grads(m.text_encoder()), nn::zero_grads(m.text_decoder())};
}

void add_scaled(ModelGrads& into, const ModelGrads& other, double s) {
  nn::add_scaled(into.video_encoder, other.video_encoder, s);
  nn::add_scaled(into.video_decoder, other.video_decoder, s);
  nn::add_scaled(into.text_encoder, other.text_encoder, s);
  nn::add_scaled(into.text_decoder, other.text_decoder, s);
}

void backward(const CrossModalAutoencoder& m, const PairForward& pf,
              const NegativeLatents* negative, const PairGrads& g, ModelGrads& accum) {
  const std::size_t z = m.dims().latent;
  Vec dz_v = g.z_v.empty() ? Vec(z) : g.z_v;
  Vec dz_t = g.z_t.empty() ? Vec(z) : g.z_t;

  if (!g.v_recon.empty()) dz_v += nn::backward(m.video_decoder(), pf.video_recon, g.v_recon, accum.video_decoder);
  if (!g.t_cross.empty()) dz_v += nn::backward(m.text_decoder(), pf.text_cross, g.t_cross, accum.text_decoder);
  if (!g.t_recon.empty()) dz_t += nn::backward(m.text_decoder(), pf.text_recon, g.t_recon, accum.text_decoder);
  if (!g.v_cross.empty()) dz_t += nn::backward(m.video_decoder(), pf.video_cross, g.v_cross, accum.video_decoder);

  nn::backward(m.video_encoder(), pf.video_encoder, dz_v, accum.video_encoder);
  nn::backward(m.text_encoder(), pf.text_encoder, dz_t, accum.text_encoder);

  if (!g.z_v_neg.empty() || !g.z_t_neg.empty()) {
    if (negative == nullptr) {
      throw ContractViolation("backward: negative gradients given without negative latents");
    }
    if (!g.z_v_neg.empty()) {
      nn::backward(m.video_encoder(), negative->video_encoder, g.z_v_neg, accum.video_encoder);
    }
    if (!g.z_t_neg.empty()) {
      nn::backward(m.text_encoder(), negative->text_encoder, g.z_t_neg, accum.text_encoder);
    }
  }
}

namespace {

nlohmann::json model_header(const CrossModalAutoencoder& m) {
  return {{"format", "xmae-model"},
          {"version", 1},
          {"C", m.dims().video},
          {"D", m.dims().text},
          {"Z", m.dims().latent},
          {"config_name", m.config_name},
          {"seed", m.seed},
          {"class_manifest", m.class_manifest},
          {"networks",
           {{"video_encoder", nn::describe(m.video_encoder())},
            {"video_decoder", nn::describe(m.video_decoder())},
            {"text_encoder", nn::describe(m.text_encoder())},
            {"text_decoder", nn::describe(m.text_decoder())}}}};
}

}  // namespace

void save_model(const std::string& path, const CrossModalAutoencoder& m) {
  std::vector<double> payload;
  payload.reserve(m.parameter_count());
  nn::append_payload(m.video_encoder(), payload);
  nn::append_payload(m.video_decoder(), payload);
  nn::append_payload(m.text_encoder(), payload);
  nn::append_payload(m.text_decoder(), payload);
  write_container_file(path, kModelMagic, model_header(m), payload);
}

CrossModalAutoencoder load_model(const std::string& path) {
  Container c = read_container_file(path, kModelMagic);
  try {
    const auto& nets = c.header.at("networks");
    std::span<const double> payload = c.payload;
    auto ve = nn::restore(nets.at("video_encoder"), payload);
    auto vd = nn::restore(nets.at("video_decoder"), payload);
    auto te = nn::restore(nets.at("text_encoder"), payload);
    auto td = nn::restore(nets.at("text_decoder"), payload);
    if (!payload.empty()) throw ParseError(path, 0, "trailing payload values");
    CrossModalAutoencoder m(std::move(ve), std::move(vd), std::move(te), std::move(td));
    const ModelDims stated{c.header.at("C").get<std::size_t>(), c.header.at("D").get<std::size_t>(),
                           c.header.at("Z").get<std::size_t>()};
    if (!(stated == m.dims())) throw ParseError(path, 0, "header dims disagree with networks");
    m.class_manifest = c.header.value("class_manifest", std::vector<std::string>{});
    m.config_name = c.header.value("config_name", std::string());
    m.seed = c.header.value("seed", std::uint64_t{0});
    m.set_mode(nn::Mode::Eval);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path, 0, std::string("bad model header: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ParseError(path, 0, e.what());
  }
}

nlohmann::json read_model_header(const std::string& path) {
  return read_container_file(path, kModelMagic).header;
}

}  // namespace xmae
