#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dancegen/dsp.hpp"
#include "dancegen/motion.hpp"
#include "dancegen/nn.hpp"

#include <json.hpp>

namespace dancegen::model {

struct ConvSpec {
  std::size_t channels;
  std::size_t kw;
  std::size_t kh;
  std::size_t stride = 1;
};

/// Network topology. Defaults follow the full-size architecture; tests and
/// desk-scale training shrink the widths, the shape contracts scale with it.
struct ModelConfig {
  std::size_t input_bins = dsp::kBins;
  std::size_t input_frames = dsp::kFramesPerSlice;
  std::vector<ConvSpec> convs = {{16, 3, 2}, {32, 3, 2}, {64, 3, 2}, {65, 3, 2}};
  std::size_t encoder_lstm_layers = 3;
  std::size_t decoder_lstm_layers = 3;
  std::size_t lstm_width = 500;
  std::size_t encoder_out = 65;
  std::size_t motion_dim = motion::kMotionDim;
  // Ablation switch: feed ground truth motion at every training step instead
  // of only the first one.
  bool teacher_forced = false;

  std::size_t decoder_in() const { return encoder_out + motion_dim; }
  std::pair<std::size_t, std::size_t> conv_output_dims() const;
  std::size_t flatten_dim() const;
  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& cfg);
void from_json(const nlohmann::json& j, ModelConfig& cfg);

struct EncoderState {
  std::vector<nn::LstmState> lstm;
};

struct DecoderState {
  std::vector<nn::LstmState> lstm;
  Tensor last_output;  // [N, motion_dim], starts at zero
  std::size_t step = 0;
};

struct GenerateStats {
  double mean_ms = 0.0;
  double max_ms = 0.0;
  std::size_t frames = 0;
};

/// Mean over all entries of the squared difference.
double mse_loss(const Tensor& target, const Tensor& output);

/// One transition of the music-motion regulation term:
/// 0.5 * (d * g^2 + (1 - d) * max(1 - g, 0)^2) with g the squared distance
/// between the two feature vectors.
double contrastive_loss(std::span<const double> g_t, std::span<const double> g_t1,
                        int label);

double combined_loss(double mse, double contrastive);

/// CLDNN encoder (convs + stacked LSTMs + projection) and auto-conditioned
/// recurrent decoder. Inference entry points are const and keep all state in
/// caller-owned EncoderState/DecoderState, so one frozen model can serve
/// concurrent generate calls. The *_train entry points additionally stack
/// per-step caches for backpropagation through time.
class Seq2SeqModel {
 public:
  explicit Seq2SeqModel(ModelConfig cfg);

  void init_params(std::uint64_t seed);
  const ModelConfig& config() const { return cfg_; }

  EncoderState make_encoder_state(std::size_t batch) const;
  DecoderState make_decoder_state(std::size_t batch) const;

  Tensor encode_step(const Tensor& x, EncoderState& state) const;
  Tensor decode_step(const Tensor& g, DecoderState& state,
                     const Tensor* teacher = nullptr) const;

  Tensor encode_step_train(const Tensor& x, EncoderState& state, nn::ForwardMode mode);
  Tensor decode_step_train(const Tensor& g, DecoderState& state, const Tensor* teacher,
                           nn::ForwardMode mode);

  // Reverse-order BPTT. decode_backward_step returns the gradient w.r.t. the
  // concatenated decoder input [N, decoder_in]; encode_backward_step consumes
  // the gradient w.r.t. the encoder output of the matching step.
  Tensor decode_backward_step(const Tensor& dm);
  void encode_backward_step(const Tensor& dg);

  void begin_sequence();
  void zero_grads();

  struct NamedTensor {
    std::string name;
    Tensor* value;
    Tensor* grad;  // null for running statistics
    bool trainable;
  };
  std::vector<NamedTensor> named_tensors();
  std::vector<std::pair<std::string, Param*>> trainable_params();

  /// Free-run generation: zero initial motion, self feedback afterwards.
  /// One output frame per feature block.
  motion::MotionSequence generate(const std::vector<dsp::SpectralBlock>& features,
                                  GenerateStats* stats = nullptr) const;

  static Tensor block_to_tensor(const dsp::SpectralBlock& block);

 private:
  Tensor run_encoder_convs(const Tensor& x, std::optional<nn::ForwardMode> mode);

  ModelConfig cfg_;
  std::vector<nn::Conv2d> convs_;
  std::vector<nn::BatchNorm> bns_;
  std::vector<nn::Elu> conv_elus_;
  std::vector<nn::Lstm> enc_lstms_;
  nn::Linear enc_fc_;
  nn::Elu enc_elu_;
  std::vector<nn::Lstm> dec_lstms_;
  nn::Linear dec_fc_;
  nn::Elu dec_elu_;
};

/// Aligned slices for one training window across a batch of picks.
struct WindowBatch {
  std::vector<Tensor> features;  // T tensors [N, 1, bins, frames]
  Tensor initial_motion;         // [N, motion_dim] ground truth at window start
  std::vector<Tensor> targets;   // T tensors [N, motion_dim], y_{t+1}
  // Per transition (T-1 entries), per batch item: 1, 0, or -1 when the weak
  // label is undefined at that track position.
  std::vector<std::vector<int>> labels;
};

struct WindowLoss {
  double mse = 0.0;
  double contrastive = 0.0;
  double combined = 0.0;
  std::size_t pairs = 0;
};

/// Forward + backward over one window; gradients accumulate into the model.
WindowLoss train_window(Seq2SeqModel& model, const WindowBatch& batch,
                        bool use_contrastive);

/// Pure loss evaluation reproducing training-mode numerics (batch statistics)
/// without touching caches, gradients or running statistics.
WindowLoss eval_window(Seq2SeqModel& model, const WindowBatch& batch,
                       bool use_contrastive);

}  // namespace dancegen::model
