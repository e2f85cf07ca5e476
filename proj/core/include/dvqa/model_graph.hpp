#pragma once

#include <cmath>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "dvqa/autodiff.hpp"
#include "dvqa/model.hpp"

namespace dvqa {

// Creates param nodes on demand and binds their current values, recording the
// order of first use so gradients can be accumulated by name.
template <typename Real>
class ParamBinder {
 public:
  ParamBinder(ad::Tape<Real>& tape, ad::Bindings<Real>& bindings, const ModelParams& params)
      : tape_(tape), bindings_(bindings), params_(params) {}

  ad::NodeId operator()(const std::string& name) {
    auto it = cache_.find(name);
    if (it != cache_.end()) return it->second;
    const Tensorf& value = params_.find(name);
    ad::NodeId id = tape_.param(value.shape, name);
    bindings_.emplace(id, tensor_cast<Real>(value));
    cache_.emplace(name, id);
    order_.emplace_back(name, id);
    return id;
  }

  const std::vector<std::pair<std::string, ad::NodeId>>& bound() const { return order_; }

 private:
  ad::Tape<Real>& tape_;
  ad::Bindings<Real>& bindings_;
  const ModelParams& params_;
  std::unordered_map<std::string, ad::NodeId> cache_;
  std::vector<std::pair<std::string, ad::NodeId>> order_;
};

template <typename Real>
Tensor<Real> onehot_rows(std::span<const int> tokens, int vocab) {
  Tensor<Real> t({static_cast<int>(tokens.size()), vocab});
  for (std::size_t r = 0; r < tokens.size(); ++r) {
    if (tokens[r] < 0 || tokens[r] >= vocab)
      throw std::invalid_argument("token " + std::to_string(tokens[r]) + " outside vocabulary");
    t.data[r * static_cast<std::size_t>(vocab) + static_cast<std::size_t>(tokens[r])] = Real(1);
  }
  return t;
}

namespace graph_detail {

template <typename Real>
ad::NodeId add_rows(ad::Tape<Real>& tape, ad::NodeId m, ad::NodeId bias) {
  const Shape& ms = tape.shape_of(m);
  return tape.add(m, tape.broadcast_axis(tape.reshape(bias, {1, ms[1]}), 0, ms[0]));
}

template <typename Real>
ad::NodeId linear(ad::Tape<Real>& tape, ParamBinder<Real>& p, ad::NodeId x, const std::string& w,
                  const std::string& b) {
  return add_rows(tape, tape.matmul(x, p(w)), p(b));
}

// softmax(q k^T / sqrt(d) [+ bias]) v
template <typename Real>
ad::NodeId attention(ad::Tape<Real>& tape, ad::NodeId q, ad::NodeId k, ad::NodeId v,
                     ad::NodeId additive_mask = -1) {
  const int d = tape.shape_of(q)[1];
  ad::NodeId scores = tape.scale(tape.matmul(q, tape.transpose2d(k)), 1.0 / std::sqrt(d));
  if (additive_mask >= 0) scores = tape.add(scores, additive_mask);
  return tape.matmul(tape.softmax_rows(scores), v);
}

}  // namespace graph_detail

// Encoder: patch embedding with learned positions, then either mean-pooled
// MLP mixing blocks or single-head self-attention blocks. In the Prompted
// mode, embedded prompt tokens are concatenated ahead of the image tokens.
template <typename Real>
ad::NodeId build_encoder(ad::Tape<Real>& tape, ParamBinder<Real>& p, ad::NodeId preprocessed,
                         const std::vector<int>* prompt_tokens, const ModelConfig& cfg) {
  cfg.validate();
  const bool prompted = cfg.question_mode == QuestionMode::Prompted;
  if (prompted != (prompt_tokens != nullptr))
    throw std::invalid_argument("encoder: prompt tokens must be given exactly in Prompted mode");

  ad::NodeId x = tape.patchify(preprocessed, cfg.patch);
  ad::NodeId h = graph_detail::linear(tape, p, x, "embed.patch.w", "embed.patch.b");
  h = tape.add(h, p("embed.pos_img"));

  if (prompted) {
    const int tq = static_cast<int>(prompt_tokens->size());
    if (tq < 1 || tq > cfg.max_question_len)
      throw std::invalid_argument("encoder: prompt length " + std::to_string(tq) +
                                  " outside [1," + std::to_string(cfg.max_question_len) + "]");
    ad::NodeId onehot =
        tape.constant(onehot_rows<Real>(*prompt_tokens, Vocabulary::standard().size()), "prompt");
    ad::NodeId q = tape.matmul(onehot, p("embed.token"));
    q = tape.add(q, tape.slice(p("embed.pos_q"), {0, 0}, {tq, cfg.embed_dim}));
    h = tape.concat(0, {q, h});
  }

  const int n = tape.shape_of(h)[0];
  for (int layer = 0; layer < cfg.encoder_layers; ++layer) {
    const std::string base = "enc." + std::to_string(layer) + ".";
    if (cfg.encoder_kind == EncoderKind::Mixer) {
      ad::NodeId t = tape.tanh_(graph_detail::linear(tape, p, h, base + "w1", base + "b1"));
      ad::NodeId pooled = tape.broadcast_axis(tape.mean_axis(t, 0), 0, n);
      ad::NodeId mixed = tape.add(t, pooled);
      h = tape.add(h, graph_detail::linear(tape, p, mixed, base + "w2", base + "b2"));
    } else {
      ad::NodeId q = tape.matmul(h, p(base + "wq"));
      ad::NodeId k = tape.matmul(h, p(base + "wk"));
      ad::NodeId v = tape.matmul(h, p(base + "wv"));
      h = tape.add(h, tape.matmul(graph_detail::attention(tape, q, k, v), p(base + "wo")));
      ad::NodeId t = tape.tanh_(graph_detail::linear(tape, p, h, base + "w1", base + "b1"));
      h = tape.add(h, graph_detail::linear(tape, p, t, base + "w2", base + "b2"));
    }
  }
  return h;
}

// Teacher-forced decoder over the whole input sequence: causal self-attention,
// cross-attention into H, MLP, residuals throughout. Returns [T, |V|] logits.
template <typename Real>
ad::NodeId build_decoder_logits(ad::Tape<Real>& tape, ParamBinder<Real>& p, ad::NodeId H,
                                std::span<const int> input_tokens, const ModelConfig& cfg) {
  const int t_len = static_cast<int>(input_tokens.size());
  if (t_len < 1 || t_len > cfg.max_answer_len)
    throw std::invalid_argument("decoder: sequence length " + std::to_string(t_len) +
                                " outside [1," + std::to_string(cfg.max_answer_len) + "]");

  const int vocab = Vocabulary::standard().size();
  ad::NodeId onehot = tape.constant(onehot_rows<Real>(input_tokens, vocab), "decoder_input");
  ad::NodeId h = tape.matmul(onehot, p("embed.token"));
  h = tape.add(h, tape.slice(p("dec.pos"), {0, 0}, {t_len, cfg.embed_dim}));

  Tensor<Real> causal({t_len, t_len});
  for (int i = 0; i < t_len; ++i)
    for (int j = i + 1; j < t_len; ++j) causal.at2(i, j) = Real(-1e9);
  ad::NodeId causal_mask = tape.constant(std::move(causal), "causal_mask");

  // Positional addressing splits the encoder rows into a where and a what:
  // keys from the position tables alone, values from the rows with those
  // positions subtracted out. Attention can then only route by location and
  // answers have to come out of the attended cell content.
  ad::NodeId key_src = H;
  ad::NodeId value_src = H;
  if (cfg.positional_cross_keys) {
    const int n = tape.shape_of(H)[0];
    const int prompt_len = n - cfg.num_patches();
    if (prompt_len < 0)
      throw std::invalid_argument("decoder: encoder rows fall short of the patch grid");
    if (prompt_len == 0) {
      key_src = p("embed.pos_img");
    } else {
      ad::NodeId qpos = tape.slice(p("embed.pos_q"), {0, 0}, {prompt_len, cfg.embed_dim});
      key_src = tape.concat(0, {qpos, p("embed.pos_img")});
    }
    value_src = tape.sub(H, key_src);
  }

  for (int layer = 0; layer < cfg.decoder_layers; ++layer) {
    const std::string base = "dec." + std::to_string(layer) + ".";
    ad::NodeId q = tape.matmul(h, p(base + "wq"));
    ad::NodeId k = tape.matmul(h, p(base + "wk"));
    ad::NodeId v = tape.matmul(h, p(base + "wv"));
    h = tape.add(h, tape.matmul(graph_detail::attention(tape, q, k, v, causal_mask), p(base + "wo")));

    ad::NodeId cq = tape.matmul(h, p(base + "cq"));
    ad::NodeId ck = tape.matmul(key_src, p(base + "ck"));
    ad::NodeId cv = tape.matmul(value_src, p(base + "cv"));
    ad::NodeId cross_bias = -1;
    if (cfg.positional_cross_keys) {
      // direct step-to-cell scores; prompt rows, when present, get none
      ad::NodeId bias = tape.slice(p(base + "cpos"), {0, 0}, {t_len, cfg.num_patches()});
      const int prompt_len = tape.shape_of(H)[0] - cfg.num_patches();
      if (prompt_len > 0)
        bias = tape.concat(1, {tape.constant(Tensor<Real>({t_len, prompt_len})), bias});
      cross_bias = bias;
    }
    h = tape.add(h, tape.matmul(graph_detail::attention(tape, cq, ck, cv, cross_bias),
                                p(base + "co")));

    ad::NodeId t = tape.tanh_(graph_detail::linear(tape, p, h, base + "m1", base + "mb1"));
    h = tape.add(h, graph_detail::linear(tape, p, t, base + "m2", base + "mb2"));
  }
  return graph_detail::linear(tape, p, h, "out.w", "out.b");
}

// -sum_t log softmax(z_t)[y_t]
template <typename Real>
ad::NodeId nll_from_logits(ad::Tape<Real>& tape, ad::NodeId logits,
                           std::span<const int> target_tokens) {
  const Shape& s = tape.shape_of(logits);
  if (static_cast<int>(target_tokens.size()) != s[0])
    throw std::invalid_argument("nll: target length does not match logit rows");
  ad::NodeId onehot = tape.constant(onehot_rows<Real>(target_tokens, s[1]), "nll_targets");
  return tape.neg(tape.sum_all(tape.mul(tape.log_softmax_rows(logits), onehot)));
}

// sum_t (max_k z_t[k] - z_t[y_t]). A position contributes zero exactly when
// the target token already carries the top logit.
template <typename Real>
ad::NodeId margin_from_logits(ad::Tape<Real>& tape, ad::NodeId logits,
                              std::span<const int> target_tokens) {
  const Shape& s = tape.shape_of(logits);
  if (static_cast<int>(target_tokens.size()) != s[0])
    throw std::invalid_argument("margin: target length does not match logit rows");
  ad::NodeId onehot = tape.constant(onehot_rows<Real>(target_tokens, s[1]), "margin_targets");
  ad::NodeId top = tape.sum_all(tape.row_max(logits));
  ad::NodeId picked = tape.sum_all(tape.mul(logits, onehot));
  return tape.sub(top, picked);
}

// Full teacher-forced loss for one QA pair, decoder conditioned on the target
// prefix. target_tokens must end with EOS.
template <typename Real>
ad::NodeId build_qa_loss(ad::Tape<Real>& tape, ParamBinder<Real>& p, ad::NodeId preprocessed,
                         const std::vector<int>* prompt_tokens, std::span<const int> target_tokens,
                         LossKind loss, const ModelConfig& cfg) {
  if (target_tokens.empty() || target_tokens.back() != Vocabulary::kEos)
    throw std::invalid_argument("qa loss: target must end with EOS");
  std::vector<int> input(target_tokens.size());
  input[0] = Vocabulary::kBos;
  for (std::size_t i = 1; i < input.size(); ++i) input[i] = target_tokens[i - 1];

  ad::NodeId H = build_encoder(tape, p, preprocessed, prompt_tokens, cfg);
  ad::NodeId logits = build_decoder_logits(tape, p, H, input, cfg);
  return loss == LossKind::Nll ? nll_from_logits(tape, logits, target_tokens)
                               : margin_from_logits(tape, logits, target_tokens);
}

}  // namespace dvqa
