#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dvqa/docgen.hpp"
#include "dvqa/preprocess.hpp"
#include "dvqa/tensor.hpp"
#include "dvqa/vocab.hpp"

namespace dvqa {

enum class QuestionMode { Headered, Prompted };
enum class EncoderKind { Mixer, Attention };
enum class LossKind { Nll, LogitMargin };

struct ModelConfig {
  int patch = 8;
  int embed_dim = 64;
  int encoder_layers = 2;
  int decoder_layers = 2;
  int max_answer_len = 24;   // decoding bound, includes the EOS position
  int max_question_len = 48; // prompt-token capacity (Prompted)
  int hidden_dim = 0;        // 0 picks 2 * embed_dim
  QuestionMode question_mode = QuestionMode::Headered;
  EncoderKind encoder_kind = EncoderKind::Mixer;
  // Cross-attention keys built from the position tables instead of the
  // encoder output. Attention then addresses cells by location only, which
  // forces answers to come out of the attended content.
  bool positional_cross_keys = false;
  PreprocessSpec preprocess;

  static ModelConfig headered_default();
  static ModelConfig prompted_default();

  int hidden() const { return hidden_dim > 0 ? hidden_dim : 2 * embed_dim; }
  int grid_rows() const { return preprocess.target_height / patch; }
  int grid_cols() const { return preprocess.target_width / patch; }
  int num_patches() const { return grid_rows() * grid_cols(); }
  void validate() const;
};

struct ModelParams {
  ModelConfig config;
  std::uint64_t seed = 0;
  // Declaration order is the serialization order.
  std::vector<std::pair<std::string, Tensorf>> tensors;

  Tensorf& find(const std::string& name);
  const Tensorf& find(const std::string& name) const;
};

ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

// Single binary file: magic, version, config echo, weight blobs in
// declaration order as little-endian 32-bit floats.
void save_params(const ModelParams& params, const std::string& path);
ModelParams load_params(const std::string& path);

// Question characters followed by the delimiter token, the prompt form the
// Prompted encoder consumes.
std::vector<int> question_tokens(const std::string& question);

// H = encoder(preprocessed [, prompt tokens]); shape [N, d].
Tensorf encode(const ModelParams& params, const Tensorf& preprocessed,
               const std::vector<int>* prompt_tokens);

// Logits over the vocabulary for the next position after the prefix.
Tensorf decode_step(const ModelParams& params, std::span<const int> prefix_tokens,
                    const Tensorf& H);

// Greedy argmax decoding until EOS or the length bound; ties pick the lowest
// token index. Returns the detokenized string.
std::string greedy_decode(const ModelParams& params, const Tensorf& preprocessed,
                          const std::vector<int>* prompt_tokens);

// Teacher-forced token-level negative log-likelihood of the target sequence
// (which must end with EOS).
double nll_loss(const ModelParams& params, const Tensorf& preprocessed,
                const std::vector<int>* prompt_tokens, std::span<const int> target_tokens);

// Reference-pipeline preprocess + greedy decode for one question.
std::string answer(const ModelParams& params, const ImageU8& image, const std::string& question);

struct TrainOptions {
  int epochs = 2000;
  double learning_rate = 1e-3;
  int batch_size = 8;
  enum class Optimizer { Sgd, Adam } optimizer = Optimizer::Sgd;
  double grad_clip = 1.0;     // global-norm cap per batch; 0 disables
  double weight_decay = 0.0;  // decoupled decay on rank-2 weights
  bool cosine_decay = true;   // anneal the rate to a tenth over the epoch budget
  // random page translation (pixels, both axes) applied per sample per epoch;
  // evaluation always runs on the unshifted documents. Shifts are drawn from
  // multiples of augment_stride so they can be kept patch-aligned.
  int augment_shift = 0;
  int augment_stride = 1;
  // continue from these weights instead of a fresh initialization
  const ModelParams* warm_start = nullptr;
  // Stop once the epoch-mean sample loss drops this low; 0 disables.
  double stop_loss = 0.0;
  int workers = 0;  // 0 = hardware concurrency
  std::function<void(int, double)> on_epoch;
};

struct TrainLog {
  std::vector<double> epoch_loss;
  std::vector<double> epoch_grad_norm;  // batch-mean pre-clip global norm
  int epochs_run = 0;
  bool early_stopped = false;
};

// Trains from scratch on every QA pair of every document. Deterministic for a
// fixed seed, including under worker parallelism. Throws std::runtime_error
// naming the epoch if the loss turns non-finite.
ModelParams train_model(const ModelConfig& config, const std::vector<RasterDocument>& dataset,
                        const TrainOptions& options, std::uint64_t seed, TrainLog* log = nullptr);

// Fraction of QA pairs answered with an exact string match.
double exact_match_rate(const ModelParams& params, const std::vector<RasterDocument>& docs);

}  // namespace dvqa
