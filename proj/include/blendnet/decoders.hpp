#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "blendnet/checkpoint.hpp"
#include "blendnet/gnnm.hpp"
#include "blendnet/sample.hpp"
#include "blendnet/tape.hpp"

namespace blendnet {

struct DecoderConfig {
  Task task = Task::open_ended;
  std::size_t d = 512;
  std::size_t answers = 2;  // |A|, open_ended only
  Activation activation = Activation::elu;

  void validate() const;
  friend bool operator==(const DecoderConfig&, const DecoderConfig&) = default;
};

// Weights are W (rows x cols), biases are columns. Members a task does not
// use stay empty and are skipped by visit().
//
//   open_ended / count, regular: y = s(fuse [Y; q_proj q + b] + b), y' = s(hidden y + b), out y' + b
//   open_ended / count, warm-up: y~ = s(warm_fuse Y + b), warm_out y~ + b
//   multi_choice, regular: y = [video_proj Y + b; q_proj q + b; answer_proj a + b],
//                          y' = s(hidden y + b), out y' + b
//   multi_choice, warm-up: y = [video_proj Y + b; answer_proj a + b], y~ = s(warm_hidden y + b),
//                          warm_out y~ + b
template <typename T>
struct DecoderParameters {
  Matrix<T> q_proj, q_bias;
  Matrix<T> video_proj, video_bias;
  Matrix<T> answer_proj, answer_bias;
  Matrix<T> fuse, fuse_bias;
  Matrix<T> hidden, hidden_bias;
  Matrix<T> out, out_bias;
  Matrix<T> warm_fuse, warm_fuse_bias;
  Matrix<T> warm_hidden, warm_hidden_bias;
  Matrix<T> warm_out, warm_out_bias;

  // All weights and biases zero.
  static DecoderParameters zeros(const DecoderConfig& config);
  // Weights uniform in +-1/sqrt(fan_in), biases zero.
  static DecoderParameters initialized(const DecoderConfig& config, std::mt19937_64& rng);

  template <typename F>
  void visit(F&& f) { visit_all(*this, f); }
  template <typename F>
  void visit(F&& f) const { visit_all(*this, f); }

  std::size_t scalar_count() const;

 private:
  template <typename Self, typename F>
  static void visit_all(Self& self, F& f) {
    auto each = [&f](const char* name, auto& m) {
      if (!m.empty()) f(std::string(name), m);
    };
    each("q_proj", self.q_proj);
    each("q_bias", self.q_bias);
    each("video_proj", self.video_proj);
    each("video_bias", self.video_bias);
    each("answer_proj", self.answer_proj);
    each("answer_bias", self.answer_bias);
    each("fuse", self.fuse);
    each("fuse_bias", self.fuse_bias);
    each("hidden", self.hidden);
    each("hidden_bias", self.hidden_bias);
    each("out", self.out);
    each("out_bias", self.out_bias);
    each("warm_fuse", self.warm_fuse);
    each("warm_fuse_bias", self.warm_fuse_bias);
    each("warm_hidden", self.warm_hidden);
    each("warm_hidden_bias", self.warm_hidden_bias);
    each("warm_out", self.warm_out);
    each("warm_out_bias", self.warm_out_bias);
  }
};

// Tape handles for a bound DecoderParameters, keyed by the same names.
template <typename T>
struct DecoderVars {
  std::vector<std::pair<std::string, Var<T>>> entries;

  // Throws UsageError when the decoder was built without this member.
  Var<T> operator[](const std::string& name) const;
};

template <typename T>
DecoderVars<T> bind(Tape<T>& tape, const DecoderParameters<T>& params, bool trainable = true);
template <typename T>
DecoderParameters<T> gradients(const DecoderVars<T>& vars, const DecoderParameters<T>& like);

// Label logits over the answer space (|A| x 1). Warm-up never reads `question`.
template <typename T>
Var<T> open_ended_logits(Var<T> video, Var<T> question, const DecoderVars<T>& vars,
                         const DecoderConfig& config, bool warm_up);
// softmax of open_ended_logits.
template <typename T>
Var<T> decode_open_ended(Var<T> video, Var<T> question, const DecoderVars<T>& vars,
                         const DecoderConfig& config, bool warm_up);
// Unrounded count (1 x 1).
template <typename T>
Var<T> decode_count(Var<T> video, Var<T> question, const DecoderVars<T>& vars, const DecoderConfig& config,
                    bool warm_up);
// Score of one candidate (1 x 1); `video` is the embedding computed under that candidate.
template <typename T>
Var<T> decode_multi_choice(Var<T> video, Var<T> question, Var<T> answer, const DecoderVars<T>& vars,
                           const DecoderConfig& config, bool warm_up);

// Half away from zero, then clamped at 0.
std::int64_t rounded_count(double raw);

// Task prediction for one sample: probabilities (|A| x 1), raw count (1 x 1)
// or candidate scores (K x 1). `embeddings` come from network_embeddings.
template <typename T>
Var<T> decoder_prediction(Tape<T>& tape, const DecoderVars<T>& vars, const DecoderConfig& config,
                          const std::vector<Var<T>>& embeddings, const VideoSample& sample, bool warm_up);

// Differentiable training loss for one sample: cross-entropy, squared error on
// the raw count, or hinge over candidate scores.
template <typename T>
Var<T> decoder_loss(Tape<T>& tape, const DecoderVars<T>& vars, const DecoderConfig& config,
                    const std::vector<Var<T>>& embeddings, const VideoSample& sample, bool warm_up);

// Predicted answer: argmax label, rounded count, or argmax candidate.
std::int64_t predicted_answer(const Matrix<double>& prediction, Task task);

enum class LossKind { cross_entropy, mse, hinge };
std::string to_string(LossKind k);

struct LossValue {
  double value = 0.0;
  LossKind kind = LossKind::cross_entropy;
};

// cross_entropy: -log p[label]; mse: (raw - label)^2 with prediction = {raw};
// hinge: sum over k != label of max(0, 1 + s_k - s_label).
LossValue loss(const std::vector<double>& prediction, std::int64_t label, LossKind kind);

template <typename T>
void write_decoder(Checkpoint& ck, const DecoderConfig& config, const DecoderParameters<T>& params);
template <typename T>
DecoderParameters<T> read_decoder(const Checkpoint& ck, const DecoderConfig& config);

}  // namespace blendnet
