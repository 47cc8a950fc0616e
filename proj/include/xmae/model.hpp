#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "xmae/nn.hpp"
#include "xmae/numerics.hpp"

namespace xmae {

struct ModelDims {
  std::size_t video = 0;   // C
  std::size_t text = 0;    // D
  std::size_t latent = 0;  // Z

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

struct ModelOptions {
  double dropout_rate = 0.5;
  bool relu_on_output = false;
  // Initial bias of every hidden (non-output) layer in all four networks. A
  // small positive value keeps ReLU units in their active region at the
  // start of training; 0 gives the standard zero-bias initialization.
  double hidden_bias = 0.0;
  // Explicit size lists override the geometric default; each must start and
  // end at the right modality / latent dims.
  std::vector<std::size_t> video_encoder_sizes;
  std::vector<std::size_t> text_encoder_sizes;
};

/// Two autoencoders (video, text) whose encoders share one latent space:
/// E_V: C->Z, G_V: Z->C, E_T: D->Z, G_T: Z->D.
class CrossModalAutoencoder {
 public:
  CrossModalAutoencoder(nn::Mlp video_encoder, nn::Mlp video_decoder, nn::Mlp text_encoder,
                        nn::Mlp text_decoder);

  /// Fresh Glorot-initialized model. Decoders mirror the encoder sizes.
  static CrossModalAutoencoder create(ModelDims dims, const ModelOptions& options, Rng& rng);

  const ModelDims& dims() const noexcept { return dims_; }

  const nn::Mlp& video_encoder() const noexcept { return video_encoder_; }
  const nn::Mlp& video_decoder() const noexcept { return video_decoder_; }
  const nn::Mlp& text_encoder() const noexcept { return text_encoder_; }
  const nn::Mlp& text_decoder() const noexcept { return text_decoder_; }
  nn::Mlp& video_encoder() noexcept { return video_encoder_; }
  nn::Mlp& video_decoder() noexcept { return video_decoder_; }
  nn::Mlp& text_encoder() noexcept { return text_encoder_; }
  nn::Mlp& text_decoder() noexcept { return text_decoder_; }

  void set_mode(nn::Mode mode) noexcept;
  nn::Mode mode() const noexcept { return video_encoder_.mode; }

  /// Views over every parameter, in file order (E_V, G_V, E_T, G_T).
  std::vector<std::span<double>> parameters();
  std::size_t parameter_count() const;

  // Metadata carried in the model file.
  std::vector<std::string> class_manifest;  // classes seen in training
  std::string config_name;
  std::uint64_t seed = 0;

 private:
  ModelDims dims_;
  nn::Mlp video_encoder_;
  nn::Mlp video_decoder_;
  nn::Mlp text_encoder_;
  nn::Mlp text_decoder_;
};

// Single-network passes in the model's current mode.
Vec encode_video(const CrossModalAutoencoder& m, const Vec& v, Rng& rng);
Vec encode_text(const CrossModalAutoencoder& m, const Vec& t, Rng& rng);
Vec decode_video(const CrossModalAutoencoder& m, const Vec& z, Rng& rng);
Vec decode_text(const CrossModalAutoencoder& m, const Vec& z, Rng& rng);

// Same, for callers without a generator. Throws ContractViolation if the
// model would sample dropout (Train mode with a positive rate).
Vec encode_video(const CrossModalAutoencoder& m, const Vec& v);
Vec encode_text(const CrossModalAutoencoder& m, const Vec& t);
Vec decode_video(const CrossModalAutoencoder& m, const Vec& z);
Vec decode_text(const CrossModalAutoencoder& m, const Vec& z);

/// G_T(E_V(v)) with dropout off.
Vec video_to_text(const CrossModalAutoencoder& m, const Vec& v);
/// G_V(E_T(t)) with dropout off.
Vec text_to_video(const CrossModalAutoencoder& m, const Vec& t);

struct PairMasks {
  nn::DropoutMasks video_encoder, text_encoder;
  nn::DropoutMasks video_recon, text_recon;  // G_V(z_v), G_T(z_t)
  nn::DropoutMasks text_cross, video_cross;  // G_T(z_v), G_V(z_t)
};

/// All six passes needed for one paired training example.
struct PairForward {
  Vec v, t;  // inputs
  Vec z_v, z_t;
  Vec v_recon, t_recon;
  Vec v_cross, t_cross;  // G_V(z_t), G_T(z_v)

  nn::ForwardCache video_encoder, text_encoder;
  nn::ForwardCache video_recon, text_recon;
  nn::ForwardCache text_cross, video_cross;

  PairMasks masks() const;
};

/// Runs the six passes, each with its own dropout draw in Train mode.
PairForward pair_forward(const CrossModalAutoencoder& m, const Vec& v, const Vec& t, Rng& rng);
/// Replays fixed masks (for gradient checks).
PairForward pair_forward(const CrossModalAutoencoder& m, const Vec& v, const Vec& t,
                         const PairMasks& masks);

/// Encoded latents of an unpaired (v_n, t_n) used by the ranking loss.
struct NegativeLatents {
  Vec z_v, z_t;
  nn::ForwardCache video_encoder, text_encoder;
};

NegativeLatents encode_negative(const CrossModalAutoencoder& m, const Vec& v_n, const Vec& t_n,
                                Rng& rng);
NegativeLatents encode_negative(const CrossModalAutoencoder& m, const Vec& v_n, const Vec& t_n,
                                const nn::DropoutMasks& video_masks,
                                const nn::DropoutMasks& text_masks);

/// Loss gradient w.r.t. each PairForward / NegativeLatents output. Empty
/// vectors mean "no gradient".
struct PairGrads {
  Vec z_v, z_t;
  Vec v_recon, t_recon;
  Vec v_cross, t_cross;
  Vec z_v_neg, z_t_neg;
};

struct ModelGrads {
  nn::MlpGrads video_encoder, video_decoder, text_encoder, text_decoder;

  std::vector<std::span<double>> views();
};

ModelGrads zero_grads(const CrossModalAutoencoder& m);
void add_scaled(ModelGrads& into, const ModelGrads& other, double scale);

/// Backpropagates output gradients through every pass, accumulating into
/// `accum`. `negative` may be null when the negative gradients are empty.
void backward(const CrossModalAutoencoder& m, const PairForward& pf,
              const NegativeLatents* negative, const PairGrads& grads, ModelGrads& accum);

void save_model(const std::string& path, const CrossModalAutoencoder& m);
CrossModalAutoencoder load_model(const std::string& path);
/// Just the JSON header of a model file.
nlohmann::json read_model_header(const std::string& path);

}  // namespace xmae
