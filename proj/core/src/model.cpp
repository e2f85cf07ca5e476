#include "dvqa/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

#include "dvqa/model_graph.hpp"
#include "dvqa/parallel.hpp"
#include "dvqa/rng.hpp"

static_assert(std::endian::native == std::endian::little, "serialization assumes little-endian");

namespace dvqa {

ModelConfig ModelConfig::headered_default() {
  ModelConfig c;
  c.question_mode = QuestionMode::Headered;
  c.preprocess = PreprocessSpec::headered();
  return c;
}

ModelConfig ModelConfig::prompted_default() {
  ModelConfig c;
  c.question_mode = QuestionMode::Prompted;
  c.preprocess = PreprocessSpec::padded();
  return c;
}

void ModelConfig::validate() const {
  preprocess.validate();
  if (patch <= 0 || preprocess.target_width % patch != 0 || preprocess.target_height % patch != 0)
    throw std::invalid_argument("model: patch size must divide the preprocessed extents");
  if (embed_dim <= 0) throw std::invalid_argument("model: embed_dim must be positive");
  if (decoder_layers < 1) throw std::invalid_argument("model: need at least one decoder layer");
  if (encoder_layers < 0) throw std::invalid_argument("model: encoder layer count is negative");
  if (max_answer_len < 2) throw std::invalid_argument("model: max_answer_len too small");
  if (max_question_len < 1) throw std::invalid_argument("model: max_question_len too small");
  const bool headered = question_mode == QuestionMode::Headered;
  if (headered != (preprocess.style == PreprocessStyle::Headered))
    throw std::invalid_argument("model: question mode and preprocess style disagree");
}

Tensorf& ModelParams::find(const std::string& name) {
  for (auto& [n, t] : tensors)
    if (n == name) return t;
  throw std::invalid_argument("params: no tensor named " + name);
}

const Tensorf& ModelParams::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw std::invalid_argument("params: no tensor named " + name);
}

namespace {

void declare_params(ModelParams& p) {
  const ModelConfig& c = p.config;
  const int d = c.embed_dim, h = c.hidden(), v = Vocabulary::standard().size();
  auto add = [&](const std::string& name, Shape shape) {
    p.tensors.emplace_back(name, Tensorf(std::move(shape)));
  };

  add("embed.patch.w", {c.patch * c.patch * 3, d});
  add("embed.patch.b", {d});
  add("embed.pos_img", {c.num_patches(), d});
  add("embed.token", {v, d});
  if (c.question_mode == QuestionMode::Prompted) add("embed.pos_q", {c.max_question_len, d});

  for (int l = 0; l < c.encoder_layers; ++l) {
    const std::string base = "enc." + std::to_string(l) + ".";
    if (c.encoder_kind == EncoderKind::Attention) {
      add(base + "wq", {d, d});
      add(base + "wk", {d, d});
      add(base + "wv", {d, d});
      add(base + "wo", {d, d});
    }
    add(base + "w1", {d, h});
    add(base + "b1", {h});
    add(base + "w2", {h, d});
    add(base + "b2", {d});
  }

  add("dec.pos", {c.max_answer_len, d});
  for (int l = 0; l < c.decoder_layers; ++l) {
    const std::string base = "dec." + std::to_string(l) + ".";
    add(base + "wq", {d, d});
    add(base + "wk", {d, d});
    add(base + "wv", {d, d});
    add(base + "wo", {d, d});
    add(base + "cq", {d, d});
    add(base + "ck", {d, d});
    add(base + "cv", {d, d});
    add(base + "co", {d, d});
    if (c.positional_cross_keys) add(base + "cpos", {c.max_answer_len, c.num_patches()});
    add(base + "m1", {d, h});
    add(base + "mb1", {h});
    add(base + "m2", {h, d});
    add(base + "mb2", {d});
  }
  add("out.w", {d, v});
  add("out.b", {v});
}

}  // namespace

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelParams p;
  p.config = config;
  p.seed = seed;
  declare_params(p);

  Rng rng(Rng::mix(seed, 0x706172616dULL));
  for (auto& [name, t] : p.tensors) {
    if (t.rank() != 2) continue;  // biases start at zero
    if (name.size() > 4 && name.compare(name.size() - 4, 4, "cpos") == 0)
      continue;  // attention position bias starts flat
    const double limit = std::sqrt(6.0 / (t.shape[0] + t.shape[1]));
    for (auto& w : t.data) w = static_cast<float>(rng.uniform(-limit, limit));
  }
  // position tables start from a sinusoidal code so spatial routing has a
  // strong signal from the first step; they stay trainable
  auto sinusoidal = [](Tensorf& t, double base_scale) {
    const int rows = t.shape[0], dims = t.shape[1];
    for (int r = 0; r < rows; ++r)
      for (int d2 = 0; d2 < dims; ++d2) {
        const double rate = std::pow(10000.0, -2.0 * (d2 / 2) / dims);
        const double angle = r * rate;
        t.at2(r, d2) =
            static_cast<float>(base_scale * (d2 % 2 == 0 ? std::sin(angle) : std::cos(angle)));
      }
  };
  sinusoidal(p.find("dec.pos"), 0.5);
  if (config.question_mode == QuestionMode::Prompted) sinusoidal(p.find("embed.pos_q"), 0.5);
  {
    // image tokens get separable row/col codes, half the width each
    Tensorf& pos = p.find("embed.pos_img");
    const int cols = config.grid_cols(), dims = config.embed_dim;
    const int half = dims / 2;
    for (int r = 0; r < pos.shape[0]; ++r) {
      const int gy = r / cols, gx = r % cols;
      for (int d2 = 0; d2 < dims; ++d2) {
        const int axis_pos = d2 < half ? gy : gx;
        const int k = d2 < half ? d2 : d2 - half;
        const double rate = std::pow(10000.0, -2.0 * (k / 2) / std::max(1, half));
        const double angle = axis_pos * rate;
        pos.at2(r, d2) =
            static_cast<float>(0.5 * (k % 2 == 0 ? std::sin(angle) : std::cos(angle)));
      }
    }
  }
  return p;
}

// --- serialization ---------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'D', 'V', 'Q', 'M'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("params: truncated file");
  return v;
}

void put_string(std::ostream& os, const std::string& s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is) {
  const auto n = get<std::uint32_t>(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw std::runtime_error("params: truncated file");
  return s;
}

}  // namespace

void save_params(const ModelParams& params, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("params: cannot open " + path + " for writing");
  f.write(kMagic, 4);
  put<std::uint32_t>(f, kVersion);

  const ModelConfig& c = params.config;
  put<std::int32_t>(f, c.patch);
  put<std::int32_t>(f, c.embed_dim);
  put<std::int32_t>(f, c.encoder_layers);
  put<std::int32_t>(f, c.decoder_layers);
  put<std::int32_t>(f, c.max_answer_len);
  put<std::int32_t>(f, c.max_question_len);
  put<std::int32_t>(f, c.hidden_dim);
  put<std::uint8_t>(f, c.question_mode == QuestionMode::Prompted);
  put<std::uint8_t>(f, c.encoder_kind == EncoderKind::Attention);
  put<std::uint8_t>(f, c.positional_cross_keys);
  put<std::uint8_t>(f, c.preprocess.style == PreprocessStyle::Padded);
  put<std::int32_t>(f, c.preprocess.target_width);
  put<std::int32_t>(f, c.preprocess.target_height);
  put<std::int32_t>(f, c.preprocess.header_height);
  put<std::uint8_t>(f, c.preprocess.norm == NormMode::Fixed);
  for (double m : c.preprocess.fixed_mean) put<double>(f, m);
  for (double s : c.preprocess.fixed_std) put<double>(f, s);
  put<std::uint8_t>(f, c.preprocess.header_in_stats);
  put<double>(f, c.preprocess.std_floor);
  put<std::uint64_t>(f, params.seed);

  put<std::uint32_t>(f, static_cast<std::uint32_t>(params.tensors.size()));
  for (const auto& [name, t] : params.tensors) {
    put_string(f, name);
    put<std::uint32_t>(f, static_cast<std::uint32_t>(t.shape.size()));
    for (int e : t.shape) put<std::int32_t>(f, e);
    f.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  }
  if (!f) throw std::runtime_error("params: write failed for " + path);
}

ModelParams load_params(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("params: cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("params: " + path + " is not a model file");
  if (get<std::uint32_t>(f) != kVersion)
    throw std::runtime_error("params: unsupported version in " + path);

  ModelParams p;
  ModelConfig& c = p.config;
  c.patch = get<std::int32_t>(f);
  c.embed_dim = get<std::int32_t>(f);
  c.encoder_layers = get<std::int32_t>(f);
  c.decoder_layers = get<std::int32_t>(f);
  c.max_answer_len = get<std::int32_t>(f);
  c.max_question_len = get<std::int32_t>(f);
  c.hidden_dim = get<std::int32_t>(f);
  c.question_mode = get<std::uint8_t>(f) ? QuestionMode::Prompted : QuestionMode::Headered;
  c.encoder_kind = get<std::uint8_t>(f) ? EncoderKind::Attention : EncoderKind::Mixer;
  c.positional_cross_keys = get<std::uint8_t>(f) != 0;
  c.preprocess.style = get<std::uint8_t>(f) ? PreprocessStyle::Padded : PreprocessStyle::Headered;
  c.preprocess.target_width = get<std::int32_t>(f);
  c.preprocess.target_height = get<std::int32_t>(f);
  c.preprocess.header_height = get<std::int32_t>(f);
  c.preprocess.norm = get<std::uint8_t>(f) ? NormMode::Fixed : NormMode::Samplewise;
  for (double& m : c.preprocess.fixed_mean) m = get<double>(f);
  for (double& s : c.preprocess.fixed_std) s = get<double>(f);
  c.preprocess.header_in_stats = get<std::uint8_t>(f);
  c.preprocess.std_floor = get<double>(f);
  p.seed = get<std::uint64_t>(f);
  c.validate();

  ModelParams expected;
  expected.config = c;
  declare_params(expected);

  const auto count = get<std::uint32_t>(f);
  if (count != expected.tensors.size())
    throw std::runtime_error("params: tensor count mismatch in " + path);
  for (auto& [name, t] : expected.tensors) {
    const std::string got = get_string(f);
    if (got != name) throw std::runtime_error("params: unexpected tensor " + got + " in " + path);
    const auto rank = get<std::uint32_t>(f);
    Shape shape(rank);
    for (auto& e : shape) e = get<std::int32_t>(f);
    if (shape != t.shape) throw std::runtime_error("params: shape mismatch for " + name);
    f.read(reinterpret_cast<char*>(t.data.data()),
           static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    if (!f) throw std::runtime_error("params: truncated tensor " + name);
  }
  p.tensors = std::move(expected.tensors);
  return p;
}

// --- inference ---------------------------------------------------------------

std::vector<int> question_tokens(const std::string& question) {
  std::vector<int> t = Vocabulary::standard().tokenize(question);
  t.push_back(Vocabulary::kSep);
  return t;
}

Tensorf encode(const ModelParams& params, const Tensorf& preprocessed,
               const std::vector<int>* prompt_tokens) {
  ad::Tape<float> tape;
  ad::Bindings<float> bind;
  ParamBinder<float> p(tape, bind, params);
  ad::NodeId pre = tape.constant(preprocessed, "preprocessed");
  ad::NodeId h = build_encoder(tape, p, pre, prompt_tokens, params.config);
  return ad::forward(tape, bind).value(h);
}

Tensorf decode_step(const ModelParams& params, std::span<const int> prefix_tokens,
                    const Tensorf& H) {
  if (prefix_tokens.empty() || prefix_tokens.front() != Vocabulary::kBos)
    throw std::invalid_argument("decode_step: prefix must begin with BOS");
  ad::Tape<float> tape;
  ad::Bindings<float> bind;
  ParamBinder<float> p(tape, bind, params);
  ad::NodeId h = tape.constant(H, "H");
  ad::NodeId logits = build_decoder_logits(tape, p, h, prefix_tokens, params.config);
  const int t_len = static_cast<int>(prefix_tokens.size());
  ad::NodeId last = tape.slice(logits, {t_len - 1, 0}, {1, Vocabulary::standard().size()});
  Tensorf row = ad::forward(tape, bind).value(last);
  row.shape = {Vocabulary::standard().size()};
  return row;
}

namespace {

int argmax_lowest(const Tensorf& v) {
  int arg = 0;
  for (int i = 1; i < static_cast<int>(v.data.size()); ++i)
    if (v.data[static_cast<std::size_t>(i)] > v.data[static_cast<std::size_t>(arg)]) arg = i;
  return arg;
}

}  // namespace

std::string greedy_decode(const ModelParams& params, const Tensorf& preprocessed,
                          const std::vector<int>* prompt_tokens) {
  const Tensorf H = encode(params, preprocessed, prompt_tokens);
  std::vector<int> prefix{Vocabulary::kBos};
  std::vector<int> answer;
  while (static_cast<int>(answer.size()) < params.config.max_answer_len) {
    const Tensorf logits = decode_step(params, prefix, H);
    const int token = argmax_lowest(logits);
    if (token == Vocabulary::kEos) break;
    answer.push_back(token);
    prefix.push_back(token);
    if (static_cast<int>(prefix.size()) > params.config.max_answer_len) break;
  }
  return Vocabulary::standard().detokenize(answer);
}

double nll_loss(const ModelParams& params, const Tensorf& preprocessed,
                const std::vector<int>* prompt_tokens, std::span<const int> target_tokens) {
  ad::Tape<float> tape;
  ad::Bindings<float> bind;
  ParamBinder<float> p(tape, bind, params);
  ad::NodeId pre = tape.constant(preprocessed, "preprocessed");
  ad::NodeId loss =
      build_qa_loss(tape, p, pre, prompt_tokens, target_tokens, LossKind::Nll, params.config);
  return static_cast<double>(ad::forward(tape, bind).value(loss).data[0]);
}

std::string answer(const ModelParams& params, const ImageU8& image, const std::string& question) {
  const ModelConfig& c = params.config;
  if (c.question_mode == QuestionMode::Headered) {
    PreprocessResult pre = reference_headered(image, question, c.preprocess);
    return greedy_decode(params, pre.tensor, nullptr);
  }
  PreprocessResult pre = reference_padded(image, c.preprocess);
  const std::vector<int> prompt = question_tokens(question);
  return greedy_decode(params, pre.tensor, &prompt);
}

double exact_match_rate(const ModelParams& params, const std::vector<RasterDocument>& docs) {
  int total = 0, hit = 0;
  for (const RasterDocument& doc : docs)
    for (const QAPair& qa : doc.qa) {
      ++total;
      if (answer(params, doc.image, qa.question) == qa.answer) ++hit;
    }
  return total == 0 ? 0.0 : static_cast<double>(hit) / total;
}

// --- training ----------------------------------------------------------------

namespace {

struct Sample {
  const RasterDocument* doc = nullptr;
  std::string question;
  Tensorf preprocessed;     // clean-page cache, used when augmentation is off
  std::vector<int> prompt;  // Prompted only
  std::vector<int> target;
};

ImageU8 shift_page(const ImageU8& src, int dx, int dy) {
  ImageU8 out(src.height, src.width, 255);
  for (int y = 0; y < src.height; ++y) {
    const int sy = y - dy;
    if (sy < 0 || sy >= src.height) continue;
    for (int x = 0; x < src.width; ++x) {
      const int sx = x - dx;
      if (sx < 0 || sx >= src.width) continue;
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = src.at(sy, sx, c);
    }
  }
  return out;
}

struct SampleGrad {
  double loss = 0.0;
  std::vector<Tensorf> grads;  // aligned with ModelParams::tensors
};

SampleGrad sample_gradient(const ModelParams& params, const Sample& s, int shift_dx,
                           int shift_dy) {
  ad::Tape<float> tape;
  ad::Bindings<float> bind;
  ParamBinder<float> p(tape, bind, params);

  ad::NodeId pre;
  if (shift_dx == 0 && shift_dy == 0 && s.preprocessed.numel() > 0) {
    pre = tape.constant(s.preprocessed, "preprocessed");
  } else {
    const ImageU8 page = shift_page(s.doc->image, shift_dx, shift_dy);
    pre = tape.constant(reference_preprocess(page, s.question, params.config.preprocess).tensor,
                        "preprocessed");
  }
  const std::vector<int>* prompt =
      params.config.question_mode == QuestionMode::Prompted ? &s.prompt : nullptr;
  ad::NodeId loss = build_qa_loss(tape, p, pre, prompt, s.target, LossKind::Nll, params.config);

  // divergence is caught on the batch loss; skip the per-node finite scan
  ad::EvalOptions eval_opts;
  eval_opts.check_finite = false;
  ad::Forward<float> fwd = ad::forward(tape, bind, eval_opts);
  std::vector<ad::NodeId> wrt;
  wrt.reserve(p.bound().size());
  for (const auto& [name, id] : p.bound()) wrt.push_back(id);
  std::vector<Tensorf> grads = ad::gradient(tape, fwd, loss, wrt);

  SampleGrad out;
  out.loss = static_cast<double>(fwd.value(loss).data[0]);
  out.grads.resize(params.tensors.size());
  for (std::size_t i = 0; i < params.tensors.size(); ++i) out.grads[i] = Tensorf();
  for (std::size_t bi = 0; bi < p.bound().size(); ++bi) {
    const std::string& name = p.bound()[bi].first;
    for (std::size_t ti = 0; ti < params.tensors.size(); ++ti)
      if (params.tensors[ti].first == name) {
        out.grads[ti] = std::move(grads[bi]);
        break;
      }
  }
  return out;
}

}  // namespace

ModelParams train_model(const ModelConfig& config, const std::vector<RasterDocument>& dataset,
                        const TrainOptions& options, std::uint64_t seed, TrainLog* log) {
  config.validate();
  if (dataset.empty()) throw std::invalid_argument("train: dataset is empty");
  const Vocabulary& vocab = Vocabulary::standard();

  std::vector<Sample> samples;
  for (const RasterDocument& doc : dataset) {
    for (const QAPair& qa : doc.qa) {
      Sample s;
      s.doc = &doc;
      s.question = qa.question;
      if (options.augment_shift == 0)
        s.preprocessed = reference_preprocess(doc.image, qa.question, config.preprocess).tensor;
      if (config.question_mode == QuestionMode::Prompted) s.prompt = question_tokens(qa.question);
      s.target = vocab.tokenize_target(qa.answer);
      if (static_cast<int>(s.target.size()) > config.max_answer_len)
        throw std::invalid_argument("train: answer \"" + qa.answer + "\" exceeds max_answer_len");
      samples.push_back(std::move(s));
    }
  }

  ModelParams params = options.warm_start ? *options.warm_start : init_params(config, seed);

  // Adam state, allocated lazily
  std::vector<Tensorf> m1, m2;
  if (options.optimizer == TrainOptions::Optimizer::Adam) {
    for (const auto& [name, t] : params.tensors) {
      m1.emplace_back(t.shape);
      m2.emplace_back(t.shape);
    }
  }
  std::int64_t adam_t = 0;

  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  if (log) *log = TrainLog{};

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    Rng shuffle_rng(Rng::mix(seed, 0xe70c0000ULL + static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double lr = options.learning_rate;
    if (options.cosine_decay && options.epochs > 1) {
      const double t = static_cast<double>(epoch) / (options.epochs - 1);
      lr = options.learning_rate * (0.1 + 0.9 * 0.5 * (1.0 + std::cos(t * 3.14159265358979)));
    }

    double epoch_loss = 0.0;
    double epoch_grad_norm = 0.0;
    int epoch_batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += options.batch_size) {
      const std::size_t end = std::min(order.size(), begin + options.batch_size);
      const int count = static_cast<int>(end - begin);

      std::vector<SampleGrad> grads(static_cast<std::size_t>(count));
      parallel_for(count, options.workers, [&](int i) {
        const std::size_t si = order[begin + static_cast<std::size_t>(i)];
        int dx = 0, dy = 0;
        if (options.augment_shift > 0) {
          Rng r(Rng::mix(seed, 0xa06e000000ULL + static_cast<std::uint64_t>(epoch) * 100003ULL +
                                   si));
          const int stride = std::max(1, options.augment_stride);
          const int steps_each_way = options.augment_shift / stride;
          const int span = 2 * steps_each_way + 1;
          dx = (static_cast<int>(r.uniform_int(span)) - steps_each_way) * stride;
          dy = (static_cast<int>(r.uniform_int(span)) - steps_each_way) * stride;
        }
        grads[static_cast<std::size_t>(i)] = sample_gradient(params, samples[si], dx, dy);
      });

      const double inv = 1.0 / count;
      double batch_loss = 0.0;
      for (const SampleGrad& g : grads) batch_loss += g.loss;
      epoch_loss += batch_loss;
      if (!std::isfinite(batch_loss))
        throw std::runtime_error("train: loss diverged at epoch " + std::to_string(epoch));

      // batch-mean gradients, in declaration order
      std::vector<Tensorf> mean_grads;
      mean_grads.reserve(params.tensors.size());
      for (std::size_t ti = 0; ti < params.tensors.size(); ++ti) {
        Tensorf acc(params.tensors[ti].second.shape);
        for (const SampleGrad& g : grads) {
          if (g.grads[ti].data.empty()) continue;
          for (std::size_t k = 0; k < acc.data.size(); ++k) acc.data[k] += g.grads[ti].data[k];
        }
        for (auto& v : acc.data) v = static_cast<float>(v * inv);
        mean_grads.push_back(std::move(acc));
      }

      if (options.grad_clip > 0.0) {
        double sq = 0.0;
        for (const Tensorf& g : mean_grads)
          for (float v : g.data) sq += static_cast<double>(v) * v;
        const double norm = std::sqrt(sq);
        epoch_grad_norm += norm;
        ++epoch_batches;
        if (norm > options.grad_clip) {
          const float scale = static_cast<float>(options.grad_clip / norm);
          for (Tensorf& g : mean_grads)
            for (auto& v : g.data) v *= scale;
        }
      }

      if (options.weight_decay > 0.0) {
        const float keep = static_cast<float>(1.0 - lr * options.weight_decay);
        for (auto& [name, w] : params.tensors)
          if (w.rank() == 2 && name.find("pos") == std::string::npos)
            for (auto& v : w.data) v *= keep;
      }

      if (options.optimizer == TrainOptions::Optimizer::Sgd) {
        for (std::size_t ti = 0; ti < params.tensors.size(); ++ti) {
          Tensorf& w = params.tensors[ti].second;
          for (std::size_t k = 0; k < w.data.size(); ++k)
            w.data[k] -= static_cast<float>(lr) * mean_grads[ti].data[k];
        }
      } else {
        ++adam_t;
        const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(adam_t));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(adam_t));
        for (std::size_t ti = 0; ti < params.tensors.size(); ++ti) {
          Tensorf& w = params.tensors[ti].second;
          for (std::size_t k = 0; k < w.data.size(); ++k) {
            const double gk = mean_grads[ti].data[k];
            const double m_new = b1 * m1[ti].data[k] + (1.0 - b1) * gk;
            const double v_new = b2 * m2[ti].data[k] + (1.0 - b2) * gk * gk;
            m1[ti].data[k] = static_cast<float>(m_new);
            m2[ti].data[k] = static_cast<float>(v_new);
            w.data[k] -= static_cast<float>(lr * (m_new / c1) / (std::sqrt(v_new / c2) + eps));
          }
        }
      }
    }

    const double mean_loss = epoch_loss / static_cast<double>(samples.size());
    if (log) {
      log->epoch_loss.push_back(mean_loss);
      log->epoch_grad_norm.push_back(epoch_batches ? epoch_grad_norm / epoch_batches : 0.0);
      log->epochs_run = epoch + 1;
    }
    if (options.on_epoch) options.on_epoch(epoch, mean_loss);
    if (options.stop_loss > 0.0 && mean_loss <= options.stop_loss) {
      if (log) log->early_stopped = true;
      break;
    }
  }
  return params;
}

}  // namespace dvqa
