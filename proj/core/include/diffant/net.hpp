#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "diffant/codec.hpp"
#include "diffant/params.hpp"
#include "diffant/schedule.hpp"
#include "diffant/tape.hpp"

namespace diffant {

struct ObservedFeatures {
  Eigen::MatrixXd F;              // L x K
  std::vector<int> frame_labels;  // length L when supervision is available
};

struct EncodedObservation {
  Eigen::MatrixXd E;             // L x D
  Eigen::MatrixXd frame_logits;  // L x C
};

struct AttentionMaskSpec {
  enum class Kind { global, local };
  Kind kind = Kind::global;
  // per-encoder-layer odd window sizes; deeper layers widen (last entry reused
  // when there are more layers than windows)
  std::vector<int> windows = {9, 33, 129, 513};
};

struct ModelConfig {
  int input_dim = 32;  // K
  int enc_dim = 64;    // D
  int dec_dim = 64;    // D'
  int enc_layers = 2;
  int dec_layers = 2;
  int heads = 4;
  int ffn_mult = 4;
  int queries = 8;          // M action slots
  int classes = 13;         // C including EOS
  int eos_id = -1;          // -1: last class
  int schedule_steps = 100; // S; bounds the step-embedding input
  double dropout = 0.0;
  bool multilabel = false;
  AttentionMaskSpec mask;

  int resolved_eos() const { return eos_id >= 0 ? eos_id : classes - 1; }
  void validate() const;
};

// Standard transformer sinusoids; row p encodes position p.
Eigen::MatrixXd sinusoid_table(int positions, int dim);
Eigen::RowVectorXd sinusoid_row(double position, int dim);

// Additive attention mask: 0 inside the window, -1e9 outside.
Eigen::MatrixXd local_window_mask(int len, int window);

struct ForwardHooks {
  // filled with one softmax matrix per (encoder layer, head), layer-major
  std::vector<Eigen::MatrixXd>* encoder_attention = nullptr;
  bool zero_cross_values = false;  // ablation probe: wipe cross-attention values
};

struct ForwardOptions {
  bool training = false;
  RngStream* rng = nullptr;  // dropout stream, needed when training with dropout > 0
  ForwardHooks hooks;
};

// Conditional denoiser f(z_s, s, E): feature encoder with a frame
// classification head, plus a query-based decoder that turns noisy latents
// into a clean-latent estimate under cross-attention to the encoding.
// All trainable tensors (including the action codec) live in one ParamStore.
class Model {
public:
  Model(ModelConfig cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // graph builders shared between training and inference
  Var build_encoder(Tape& t, const Eigen::MatrixXd& features, Var* frame_logits,
                    const ForwardOptions& opts = {}) const;
  Var build_step_embed(Tape& t, int s) const;  // 1 x D'
  Var build_denoiser(Tape& t, Var z_s, int s, Var encoded,
                     const ForwardOptions& opts = {}) const;  // M x D'
  Var build_embed_actions(Tape& t, const ActionSequence& a) const;
  // (class logits, durations post-exp); durations invalid in multilabel mode
  std::pair<Var, Var> build_predict(Tape& t, Var z0) const;

  // tape-free conveniences for inference and tools
  EncodedObservation encode(const ObservedFeatures& obs, const ForwardOptions& opts = {}) const;
  LatentSeq denoise(const LatentSeq& z_s, const EncodedObservation& enc,
                    const ForwardOptions& opts = {}) const;
  CodecParams codec() const;

private:
  int idx(const std::string& name) const;
  Var affine(Tape& t, Var x, const std::string& name) const;
  Var layer_norm(Tape& t, Var x, const std::string& name) const;
  Var feed_forward(Tape& t, Var x, const std::string& prefix, const ForwardOptions& opts) const;
  Var attention(Tape& t, Var q_in, Var kv_in, const std::string& prefix,
                const Eigen::MatrixXd* mask, const ForwardOptions& opts, bool zero_values,
                bool capture, Var q_add = {}, Var k_add = {}) const;

  ModelConfig cfg_;
  ParamStore params_;
};

// Self-describing archive: version line, config echo, named f32 tensors.
void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const std::vector<std::pair<std::string, std::string>>& extra_echo = {});

struct Checkpoint {
  Model model;
  std::vector<std::pair<std::string, std::string>> echo;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace diffant
