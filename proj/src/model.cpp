#include "dancegen/model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace dancegen::model {

std::pair<std::size_t, std::size_t> ModelConfig::conv_output_dims() const {
  std::size_t w = input_bins;
  std::size_t h = input_frames;
  for (const ConvSpec& c : convs) {
    if (w < c.kw || h < c.kh)
      throw ShapeError("model config: conv kernel larger than its input");
    w = (w - c.kw) / c.stride + 1;
    h = (h - c.kh) / c.stride + 1;
  }
  return {w, h};
}

std::size_t ModelConfig::flatten_dim() const {
  const auto [w, h] = conv_output_dims();
  const std::size_t channels = convs.empty() ? 1 : convs.back().channels;
  return channels * w * h;
}

void ModelConfig::validate() const {
  if (input_bins == 0 || input_frames == 0)
    throw InvalidInputError("model config: input dims must be positive");
  if (lstm_width == 0 || encoder_out == 0 || motion_dim == 0)
    throw InvalidInputError("model config: widths must be positive");
  if (encoder_lstm_layers == 0 || decoder_lstm_layers == 0)
    throw InvalidInputError("model config: need at least one LSTM layer per block");
  for (const ConvSpec& c : convs)
    if (c.channels == 0 || c.kw == 0 || c.kh == 0 || c.stride == 0)
      throw InvalidInputError("model config: bad conv spec");
  conv_output_dims();  // throws if the stack does not fit
}

void to_json(nlohmann::json& j, const ModelConfig& cfg) {
  nlohmann::json convs = nlohmann::json::array();
  for (const ConvSpec& c : cfg.convs)
    convs.push_back({{"channels", c.channels},
                     {"kw", c.kw},
                     {"kh", c.kh},
                     {"stride", c.stride}});
  j = {{"input_bins", cfg.input_bins},
       {"input_frames", cfg.input_frames},
       {"convs", convs},
       {"encoder_lstm_layers", cfg.encoder_lstm_layers},
       {"decoder_lstm_layers", cfg.decoder_lstm_layers},
       {"lstm_width", cfg.lstm_width},
       {"encoder_out", cfg.encoder_out},
       {"motion_dim", cfg.motion_dim},
       {"teacher_forced", cfg.teacher_forced}};
}

void from_json(const nlohmann::json& j, ModelConfig& cfg) {
  cfg.input_bins = j.at("input_bins").get<std::size_t>();
  cfg.input_frames = j.at("input_frames").get<std::size_t>();
  cfg.convs.clear();
  for (const auto& c : j.at("convs")) {
    cfg.convs.push_back({c.at("channels").get<std::size_t>(),
                         c.at("kw").get<std::size_t>(), c.at("kh").get<std::size_t>(),
                         c.at("stride").get<std::size_t>()});
  }
  cfg.encoder_lstm_layers = j.at("encoder_lstm_layers").get<std::size_t>();
  cfg.decoder_lstm_layers = j.at("decoder_lstm_layers").get<std::size_t>();
  cfg.lstm_width = j.at("lstm_width").get<std::size_t>();
  cfg.encoder_out = j.at("encoder_out").get<std::size_t>();
  cfg.motion_dim = j.at("motion_dim").get<std::size_t>();
  cfg.teacher_forced = j.value("teacher_forced", false);
}

// ---------------------------------------------------------------------------
// Losses

double mse_loss(const Tensor& target, const Tensor& output) {
  if (!target.same_shape(output)) throw ShapeError("mse_loss: shape mismatch");
  if (target.size() == 0) throw ShapeError("mse_loss: empty tensors");
  double acc = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double d = target[i] - output[i];
    acc += d * d;
  }
  return acc / static_cast<double>(target.size());
}

double contrastive_loss(std::span<const double> g_t, std::span<const double> g_t1,
                        int label) {
  if (g_t.size() != g_t1.size()) throw ShapeError("contrastive_loss: size mismatch");
  if (label != 0 && label != 1)
    throw InvalidInputError("contrastive_loss: label must be 0 or 1");
  double g = 0.0;
  for (std::size_t i = 0; i < g_t.size(); ++i) {
    const double d = g_t1[i] - g_t[i];
    g += d * d;
  }
  const double margin = std::max(1.0 - g, 0.0);
  return 0.5 * (label * g * g + (1 - label) * margin * margin);
}

double combined_loss(double mse, double contrastive) {
  return mse + std::max(contrastive, 0.0);
}

// ---------------------------------------------------------------------------
// Seq2SeqModel

namespace {

std::size_t conv_in_channels(const std::vector<ConvSpec>& convs, std::size_t index) {
  return index == 0 ? 1 : convs[index - 1].channels;
}

}  // namespace

Seq2SeqModel::Seq2SeqModel(ModelConfig cfg)
    : cfg_(std::move(cfg)),
      enc_fc_(cfg_.flatten_dim(), cfg_.encoder_out),
      dec_fc_(cfg_.lstm_width, cfg_.motion_dim) {
  cfg_.validate();
  for (std::size_t i = 0; i < cfg_.convs.size(); ++i) {
    const ConvSpec& c = cfg_.convs[i];
    convs_.emplace_back(conv_in_channels(cfg_.convs, i), c.channels, c.kw, c.kh,
                        c.stride);
    bns_.emplace_back(c.channels);
    conv_elus_.emplace_back();
  }
  // The first encoder LSTM reads the flattened conv stack unless there are no
  // convs, in which case it reads the flattened input block.
  std::size_t enc_in = cfg_.flatten_dim();
  for (std::size_t l = 0; l < cfg_.encoder_lstm_layers; ++l) {
    enc_lstms_.emplace_back(l == 0 ? enc_in : cfg_.lstm_width, cfg_.lstm_width);
  }
  enc_fc_ = nn::Linear(cfg_.lstm_width, cfg_.encoder_out);
  for (std::size_t l = 0; l < cfg_.decoder_lstm_layers; ++l) {
    dec_lstms_.emplace_back(l == 0 ? cfg_.decoder_in() : cfg_.lstm_width,
                            cfg_.lstm_width);
  }
  dec_fc_ = nn::Linear(cfg_.lstm_width, cfg_.motion_dim);
}

void Seq2SeqModel::init_params(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& c : convs_) c.init(rng);
  for (auto& l : enc_lstms_) l.init(rng);
  enc_fc_.init(rng);
  for (auto& l : dec_lstms_) l.init(rng);
  dec_fc_.init(rng);
}

EncoderState Seq2SeqModel::make_encoder_state(std::size_t batch) const {
  EncoderState s;
  for (const auto& l : enc_lstms_) s.lstm.push_back(l.make_state(batch));
  return s;
}

DecoderState Seq2SeqModel::make_decoder_state(std::size_t batch) const {
  DecoderState s;
  for (const auto& l : dec_lstms_) s.lstm.push_back(l.make_state(batch));
  s.last_output = Tensor({batch, cfg_.motion_dim});
  return s;
}

namespace {

void check_block_shape(const Tensor& x, const ModelConfig& cfg) {
  if (x.ndim() != 4 || x.dim(1) != 1 || x.dim(2) != cfg.input_bins ||
      x.dim(3) != cfg.input_frames)
    throw ShapeError("encode_step: expected input of shape [N, 1, bins, frames]");
}

}  // namespace

Tensor Seq2SeqModel::encode_step_train(const Tensor& x, EncoderState& state,
                                       nn::ForwardMode mode) {
  check_block_shape(x, cfg_);
  const std::size_t n = x.dim(0);
  Tensor y = x;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    y = convs_[i].forward(y, mode);
    y = bns_[i].forward(y, mode);
    y = conv_elus_[i].forward(y, mode);
  }
  y.reshape({n, cfg_.flatten_dim()});
  for (std::size_t l = 0; l < enc_lstms_.size(); ++l)
    y = enc_lstms_[l].step(y, state.lstm[l], mode);
  y = enc_fc_.forward(y, mode);
  return enc_elu_.forward(y, mode);
}

Tensor Seq2SeqModel::encode_step(const Tensor& x, EncoderState& state) const {
  check_block_shape(x, cfg_);
  const std::size_t n = x.dim(0);
  Tensor y = x;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    y = convs_[i].infer(y);
    y = bns_[i].infer(y);
    y = conv_elus_[i].infer(y);
  }
  y.reshape({n, cfg_.flatten_dim()});
  for (std::size_t l = 0; l < enc_lstms_.size(); ++l)
    y = enc_lstms_[l].step_infer(y, state.lstm[l]);
  y = enc_fc_.infer(y);
  return enc_elu_.infer(y);
}

namespace {

Tensor concat_decoder_input(const Tensor& g, const Tensor& prev, std::size_t enc_out,
                            std::size_t motion_dim) {
  const std::size_t n = g.dim(0);
  Tensor in({n, enc_out + motion_dim});
  for (std::size_t b = 0; b < n; ++b) {
    double* row = in.data() + b * (enc_out + motion_dim);
    const double* gr = g.data() + b * enc_out;
    const double* pr = prev.data() + b * motion_dim;
    std::copy(gr, gr + enc_out, row);
    std::copy(pr, pr + motion_dim, row + enc_out);
  }
  return in;
}

}  // namespace

Tensor Seq2SeqModel::decode_step_train(const Tensor& g, DecoderState& state,
                                       const Tensor* teacher, nn::ForwardMode mode) {
  if (g.ndim() != 2 || g.dim(1) != cfg_.encoder_out)
    throw ShapeError("decode_step: encoder feature shape mismatch");
  if (teacher && state.step > 0 && !cfg_.teacher_forced)
    throw StateError("decode_step: ground truth is only consumed at the first step");

  const Tensor& prev = teacher ? *teacher : state.last_output;
  Tensor y = concat_decoder_input(g, prev, cfg_.encoder_out, cfg_.motion_dim);
  for (std::size_t l = 0; l < dec_lstms_.size(); ++l)
    y = dec_lstms_[l].step(y, state.lstm[l], mode);
  y = dec_fc_.forward(y, mode);
  y = dec_elu_.forward(y, mode);
  state.last_output = y;
  ++state.step;
  return y;
}

Tensor Seq2SeqModel::decode_step(const Tensor& g, DecoderState& state,
                                 const Tensor* teacher) const {
  if (g.ndim() != 2 || g.dim(1) != cfg_.encoder_out)
    throw ShapeError("decode_step: encoder feature shape mismatch");
  if (teacher && state.step > 0 && !cfg_.teacher_forced)
    throw StateError("decode_step: ground truth is only consumed at the first step");

  const Tensor& prev = teacher ? *teacher : state.last_output;
  Tensor y = concat_decoder_input(g, prev, cfg_.encoder_out, cfg_.motion_dim);
  for (std::size_t l = 0; l < dec_lstms_.size(); ++l)
    y = dec_lstms_[l].step_infer(y, state.lstm[l]);
  y = dec_fc_.infer(y);
  y = dec_elu_.infer(y);
  state.last_output = y;
  ++state.step;
  return y;
}

Tensor Seq2SeqModel::decode_backward_step(const Tensor& dm) {
  Tensor d = dec_elu_.backward(dm);
  d = dec_fc_.backward(d);
  for (std::size_t l = dec_lstms_.size(); l-- > 0;)
    d = dec_lstms_[l].backward_step(d);
  return d;  // [N, decoder_in]
}

void Seq2SeqModel::encode_backward_step(const Tensor& dg) {
  Tensor d = enc_elu_.backward(dg);
  d = enc_fc_.backward(d);
  for (std::size_t l = enc_lstms_.size(); l-- > 0;)
    d = enc_lstms_[l].backward_step(d);
  if (!convs_.empty()) {
    const auto [w, h] = cfg_.conv_output_dims();
    d.reshape({d.dim(0), cfg_.convs.back().channels, w, h});
    for (std::size_t i = convs_.size(); i-- > 0;) {
      d = conv_elus_[i].backward(d);
      d = bns_[i].backward(d);
      d = convs_[i].backward(d);
    }
  }
  // Gradient w.r.t. the input block is discarded.
}

void Seq2SeqModel::begin_sequence() {
  for (auto& c : convs_) c.clear_cache();
  for (auto& b : bns_) b.clear_cache();
  for (auto& e : conv_elus_) e.clear_cache();
  for (auto& l : enc_lstms_) l.begin_sequence();
  enc_fc_.clear_cache();
  enc_elu_.clear_cache();
  for (auto& l : dec_lstms_) l.begin_sequence();
  dec_fc_.clear_cache();
  dec_elu_.clear_cache();
}

void Seq2SeqModel::zero_grads() {
  for (auto& [name, p] : trainable_params()) p->zero_grad();
}

std::vector<Seq2SeqModel::NamedTensor> Seq2SeqModel::named_tensors() {
  std::vector<NamedTensor> out;
  auto add_param = [&](const std::string& name, Param& p) {
    out.push_back({name, &p.value, &p.grad, true});
  };
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    const std::string tag = std::to_string(i + 1);
    add_param("conv" + tag + ".kernel", convs_[i].kernel());
    add_param("bn" + tag + ".gamma", bns_[i].gamma());
    add_param("bn" + tag + ".beta", bns_[i].beta());
    out.push_back({"bn" + tag + ".running_mean", &bns_[i].running_mean(), nullptr, false});
    out.push_back({"bn" + tag + ".running_var", &bns_[i].running_var(), nullptr, false});
  }
  for (std::size_t l = 0; l < enc_lstms_.size(); ++l) {
    const std::string tag = "enc_lstm" + std::to_string(l + 1);
    add_param(tag + ".wx", enc_lstms_[l].weight_x());
    add_param(tag + ".wh", enc_lstms_[l].weight_h());
    add_param(tag + ".b", enc_lstms_[l].bias());
  }
  add_param("fc01.weight", enc_fc_.weight());
  add_param("fc01.bias", enc_fc_.bias());
  for (std::size_t l = 0; l < dec_lstms_.size(); ++l) {
    const std::string tag = "dec_lstm" + std::to_string(l + 1);
    add_param(tag + ".wx", dec_lstms_[l].weight_x());
    add_param(tag + ".wh", dec_lstms_[l].weight_h());
    add_param(tag + ".b", dec_lstms_[l].bias());
  }
  add_param("out.weight", dec_fc_.weight());
  add_param("out.bias", dec_fc_.bias());
  return out;
}

std::vector<std::pair<std::string, Param*>> Seq2SeqModel::trainable_params() {
  std::vector<std::pair<std::string, Param*>> out;
  auto add = [&](const std::string& name, Param& p) { out.emplace_back(name, &p); };
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    const std::string tag = std::to_string(i + 1);
    add("conv" + tag + ".kernel", convs_[i].kernel());
    add("bn" + tag + ".gamma", bns_[i].gamma());
    add("bn" + tag + ".beta", bns_[i].beta());
  }
  for (std::size_t l = 0; l < enc_lstms_.size(); ++l) {
    const std::string tag = "enc_lstm" + std::to_string(l + 1);
    add(tag + ".wx", enc_lstms_[l].weight_x());
    add(tag + ".wh", enc_lstms_[l].weight_h());
    add(tag + ".b", enc_lstms_[l].bias());
  }
  add("fc01.weight", enc_fc_.weight());
  add("fc01.bias", enc_fc_.bias());
  for (std::size_t l = 0; l < dec_lstms_.size(); ++l) {
    const std::string tag = "dec_lstm" + std::to_string(l + 1);
    add(tag + ".wx", dec_lstms_[l].weight_x());
    add(tag + ".wh", dec_lstms_[l].weight_h());
    add(tag + ".b", dec_lstms_[l].bias());
  }
  add("out.weight", dec_fc_.weight());
  add("out.bias", dec_fc_.bias());
  return out;
}

Tensor Seq2SeqModel::block_to_tensor(const dsp::SpectralBlock& block) {
  Tensor x({1, 1, static_cast<std::size_t>(block.bins),
            static_cast<std::size_t>(block.frames)});
  std::copy(block.power.begin(), block.power.end(), x.data());
  return x;
}

motion::MotionSequence Seq2SeqModel::generate(
    const std::vector<dsp::SpectralBlock>& features, GenerateStats* stats) const {
  if (features.empty()) throw InvalidInputError("generate: no feature blocks");

  EncoderState enc = make_encoder_state(1);
  DecoderState dec = make_decoder_state(1);

  motion::MotionSequence seq;
  seq.fps = motion::kDefaultFps;
  seq.frames.reserve(features.size());

  double total_ms = 0.0, max_ms = 0.0;
  for (const dsp::SpectralBlock& block : features) {
    const auto start = std::chrono::steady_clock::now();
    const Tensor x = block_to_tensor(block);
    const Tensor g = encode_step(x, enc);
    const Tensor m = decode_step(g, dec);
    const auto stop = std::chrono::steady_clock::now();
    const double ms = std::chrono::duration<double, std::milli>(stop - start).count();
    total_ms += ms;
    max_ms = std::max(max_ms, ms);
    seq.frames.emplace_back(m.data(), m.data() + m.size());
  }
  if (stats) {
    stats->frames = features.size();
    stats->mean_ms = total_ms / static_cast<double>(features.size());
    stats->max_ms = max_ms;
  }
  return seq;
}

// ---------------------------------------------------------------------------
// Window-level training

namespace {

struct WindowForward {
  std::vector<Tensor> g;  // encoder outputs per step
  std::vector<Tensor> m;  // decoder outputs per step
  WindowLoss loss;
};

void check_window(const WindowBatch& batch, const ModelConfig& cfg) {
  if (batch.features.empty()) throw InvalidInputError("window: no steps");
  if (batch.targets.size() != batch.features.size())
    throw ShapeError("window: features/targets length mismatch");
  if (batch.labels.size() + 1 != batch.features.size())
    throw ShapeError("window: need one label row per transition");
  if (batch.initial_motion.ndim() != 2 ||
      batch.initial_motion.dim(1) != cfg.motion_dim)
    throw ShapeError("window: initial motion shape mismatch");
}

WindowForward window_forward(Seq2SeqModel& model, const WindowBatch& batch,
                             bool use_contrastive, nn::ForwardMode mode) {
  const ModelConfig& cfg = model.config();
  check_window(batch, cfg);
  const std::size_t steps = batch.features.size();
  const std::size_t n = batch.initial_motion.dim(0);

  EncoderState enc = model.make_encoder_state(n);
  DecoderState dec = model.make_decoder_state(n);

  WindowForward fwd;
  fwd.g.reserve(steps);
  fwd.m.reserve(steps);

  double mse_acc = 0.0;
  for (std::size_t t = 0; t < steps; ++t) {
    const Tensor g = model.encode_step_train(batch.features[t], enc, mode);
    const Tensor* teacher = nullptr;
    if (t == 0)
      teacher = &batch.initial_motion;
    else if (cfg.teacher_forced)
      teacher = &batch.targets[t - 1];
    const Tensor m = model.decode_step_train(g, dec, teacher, mode);
    mse_acc += mse_loss(batch.targets[t], m);
    fwd.g.push_back(g);
    fwd.m.push_back(m);
  }
  fwd.loss.mse = mse_acc / static_cast<double>(steps);

  if (use_contrastive) {
    double acc = 0.0;
    std::size_t pairs = 0;
    for (std::size_t t = 0; t + 1 < steps; ++t) {
      for (std::size_t b = 0; b < n; ++b) {
        const int label = batch.labels[t][b];
        if (label < 0) continue;
        std::span<const double> a(fwd.g[t].data() + b * cfg.encoder_out,
                                  cfg.encoder_out);
        std::span<const double> c(fwd.g[t + 1].data() + b * cfg.encoder_out,
                                  cfg.encoder_out);
        acc += contrastive_loss(a, c, label);
        ++pairs;
      }
    }
    fwd.loss.pairs = pairs;
    fwd.loss.contrastive = pairs > 0 ? acc / static_cast<double>(pairs) : 0.0;
  }
  fwd.loss.combined = combined_loss(fwd.loss.mse, fwd.loss.contrastive);
  return fwd;
}

}  // namespace

WindowLoss eval_window(Seq2SeqModel& model, const WindowBatch& batch,
                       bool use_contrastive) {
  return window_forward(model, batch, use_contrastive, nn::ForwardMode::kFrozenStats)
      .loss;
}

WindowLoss train_window(Seq2SeqModel& model, const WindowBatch& batch,
                        bool use_contrastive) {
  const ModelConfig& cfg = model.config();
  model.begin_sequence();
  WindowForward fwd = window_forward(model, batch, use_contrastive,
                                     nn::ForwardMode::kTrain);
  const std::size_t steps = batch.features.size();
  const std::size_t n = batch.initial_motion.dim(0);

  // Contrastive gradient w.r.t. each step's encoder output. Each transition
  // (t, t+1) contributes +-2 * dL/dg_sq * diff to the two steps involved.
  std::vector<Tensor> dg_extra(steps);
  if (use_contrastive && fwd.loss.pairs > 0) {
    const double scale = 1.0 / static_cast<double>(fwd.loss.pairs);
    for (std::size_t t = 0; t + 1 < steps; ++t) {
      for (std::size_t b = 0; b < n; ++b) {
        const int label = batch.labels[t][b];
        if (label < 0) continue;
        const double* ga = fwd.g[t].data() + b * cfg.encoder_out;
        const double* gc = fwd.g[t + 1].data() + b * cfg.encoder_out;
        double gsq = 0.0;
        for (std::size_t k = 0; k < cfg.encoder_out; ++k) {
          const double d = gc[k] - ga[k];
          gsq += d * d;
        }
        const double dl_dgsq = label == 1 ? gsq : -std::max(1.0 - gsq, 0.0);
        if (dl_dgsq == 0.0) continue;
        if (dg_extra[t].empty()) dg_extra[t] = Tensor({n, cfg.encoder_out});
        if (dg_extra[t + 1].empty()) dg_extra[t + 1] = Tensor({n, cfg.encoder_out});
        for (std::size_t k = 0; k < cfg.encoder_out; ++k) {
          const double d = 2.0 * dl_dgsq * (gc[k] - ga[k]) * scale;
          dg_extra[t + 1].at(b, k) += d;
          dg_extra[t].at(b, k) -= d;
        }
      }
    }
  }

  const double mse_scale =
      2.0 / (static_cast<double>(steps) * static_cast<double>(n) *
             static_cast<double>(cfg.motion_dim));

  Tensor feedback;  // gradient flowing into m_t through the next step's input
  for (std::size_t t = steps; t-- > 0;) {
    Tensor dm({n, cfg.motion_dim});
    const Tensor& m = fwd.m[t];
    const Tensor& y = batch.targets[t];
    for (std::size_t i = 0; i < dm.size(); ++i)
      dm[i] = mse_scale * (m[i] - y[i]);
    if (!feedback.empty())
      for (std::size_t i = 0; i < dm.size(); ++i) dm[i] += feedback[i];

    Tensor d_in = model.decode_backward_step(dm);

    // Split the concatenated input gradient.
    Tensor dg({n, cfg.encoder_out});
    Tensor dprev({n, cfg.motion_dim});
    for (std::size_t b = 0; b < n; ++b) {
      const double* row = d_in.data() + b * cfg.decoder_in();
      std::copy(row, row + cfg.encoder_out, dg.data() + b * cfg.encoder_out);
      std::copy(row + cfg.encoder_out, row + cfg.decoder_in(),
                dprev.data() + b * cfg.motion_dim);
    }
    // The previous-motion input is the model's own output except at the first
    // step (and always ground truth in teacher-forced mode).
    if (t > 0 && !cfg.teacher_forced)
      feedback = std::move(dprev);
    else
      feedback = Tensor();

    if (!dg_extra[t].empty())
      for (std::size_t i = 0; i < dg.size(); ++i) dg[i] += dg_extra[t][i];
    model.encode_backward_step(dg);
  }
  return fwd.loss;
}

}  // namespace dancegen::model
