#include "kiresh/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kiresh/error.hpp"
#include "kiresh/metrics.hpp"

namespace kiresh {

double default_learning_rate(BackendKind kind) {
  return kind == BackendKind::linear_bof ? 0.5 : 0.2;
}

double TrainConfig::effective_learning_rate(BackendKind kind) const {
  return learning_rate > 0.0 ? learning_rate : default_learning_rate(kind);
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
  if (learning_rate < 0.0 || !std::isfinite(learning_rate))
    throw ConfigError("learning rate must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (!(clip_norm >= 0.0) || !std::isfinite(clip_norm)) throw ConfigError("clip_norm must be >= 0");
  double sum = 0;
  for (double p : variant_probs) {
    if (!(p >= 0.0)) throw ConfigError("variant probabilities must be non-negative");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("variant probabilities must sum to 1");
}

namespace {

double mean_macro_f1(const ModelParams& params, const std::vector<LabeledInput>& inputs,
                     double& presence_f1, double& period_f1) {
  ConfusionMatrix cp(kNumPresence), cq(kNumPeriod);
  for (const auto& item : inputs) {
    const Logits z = forward(params, item.input);
    cp.add(static_cast<std::size_t>(item.gold.code(Task::presence)),
           static_cast<std::size_t>(argmax(std::span<const double>(z.presence))));
    cq.add(static_cast<std::size_t>(item.gold.code(Task::period)),
           static_cast<std::size_t>(argmax(std::span<const double>(z.period))));
  }
  presence_f1 = macro_prf(cp).f1;
  period_f1 = macro_prf(cq).f1;
  return 0.5 * (presence_f1 + period_f1);
}

}  // namespace

TrainedModel train(const Dataset& dataset, const BackendSpec& backend, const TrainConfig& config,
                   Mode mode, const SbdhProvider& provider) {
  config.validate();
  const auto train_ex = dataset.in_split(Split::train);
  const auto eval_ex = dataset.in_split(Split::eval);
  if (train_ex.empty()) throw InputError("training split is empty");
  if (eval_ex.empty()) throw InputError("eval split is empty");

  std::vector<std::string> texts;
  texts.reserve(train_ex.size());
  for (const auto* ex : train_ex) texts.push_back(build_model_text(*ex, mode, provider));

  TrainedModel model;
  model.mode = mode;
  model.vocab = Vocabulary::build(texts);
  ModelParams params = ModelParams::initialize(backend, model.vocab.size());

  std::vector<LabeledInput> base;
  base.reserve(train_ex.size());
  for (std::size_t i = 0; i < train_ex.size(); ++i)
    base.push_back({encode(texts[i], model.vocab, backend.max_len), train_ex[i]->gold});
  std::vector<LabeledInput> eval_inputs;
  eval_inputs.reserve(eval_ex.size());
  for (const auto* ex : eval_ex)
    eval_inputs.push_back(
        {encode(build_model_text(*ex, mode, provider), model.vocab, backend.max_len), ex->gold});

  Rng order_rng(derive_seed(config.seed, fnv1a("order")));
  Rng variant_rng(derive_seed(config.seed, fnv1a("variant")));
  Rng dropout_rng(derive_seed(config.seed, fnv1a("dropout")));
  const double lr = config.effective_learning_rate(backend.kind);
  const bool prompt = mode_has_prompt(mode);

  std::vector<std::size_t> order(base.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<LabeledInput> batch;
  std::vector<double> g;
  double best_score = -1.0;
  ModelParams best = params;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    order_rng.shuffle(order);
    double loss_sum = 0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t k = start; k < end; ++k) {
        const auto& item = base[order[k]];
        if (prompt) {
          const Variant v = sample_variant(variant_rng, config.variant_probs);
          batch.push_back({with_variant(item.input, v, item.gold, model.vocab), item.gold});
        } else {
          batch.push_back(item);
        }
      }
      loss_sum += loss_and_grad(params, batch, g, {&dropout_rng, config.dropout});
      ++batches;
      if (config.clip_norm > 0.0) {
        double sq = 0;
        for (double v : g) sq += v * v;
        const double norm = std::sqrt(sq);
        if (norm > config.clip_norm)
          for (auto& v : g) v *= config.clip_norm / norm;
      }
      auto w = params.values();
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = loss_sum / static_cast<double>(batches);
    entry.eval_macro_f1 = mean_macro_f1(params, eval_inputs, entry.eval_presence_macro_f1,
                                        entry.eval_period_macro_f1);
    model.log.push_back(entry);
    if (entry.eval_macro_f1 > best_score) {
      best_score = entry.eval_macro_f1;
      best = params;
      model.best_epoch = epoch;
    }
  }
  model.params = std::move(best);
  return model;
}

EncodedInput inference_input(const TrainedModel& model, const Example& example,
                             const SbdhProvider& provider, std::optional<Reveal> reveal) {
  if (reveal && !mode_has_prompt(model.mode))
    throw ContractError("label reveal needs a model trained with the prompt (mode " +
                        std::string(mode_name(model.mode)) + ")");
  EncodedInput in = encode(build_model_text(example, model.mode, provider), model.vocab,
                           model.params.spec().max_len);
  if (reveal) in = with_reveal(in, *reveal, model.vocab);
  return in;
}

ProbRecord predict(const TrainedModel& model, const Example& example,
                   const SbdhProvider& provider, std::optional<Reveal> reveal) {
  const Logits z = forward(model.params, inference_input(model, example, provider, reveal));
  return {example.id, z.presence, z.period, example.gold};
}

std::vector<ProbRecord> predict_all(const TrainedModel& model,
                                    const std::vector<const Example*>& examples,
                                    const SbdhProvider& provider, std::optional<Reveal> reveal) {
  std::vector<ProbRecord> out;
  out.reserve(examples.size());
  for (const auto* ex : examples) out.push_back(predict(model, *ex, provider, reveal));
  return out;
}

BackendSpec backend_from_keyvalue(const KeyValue& kv) {
  BackendSpec spec;
  const std::string kind = kv.get_string("backend", std::string(backend_name(spec.kind)));
  const auto k = parse_backend(kind);
  if (!k) throw ConfigError("unknown backend '" + kind + "'");
  spec.kind = *k;
  spec.dim = static_cast<std::size_t>(kv.get_uint("dim", spec.dim));
  spec.max_len = static_cast<std::size_t>(kv.get_uint("max_len", spec.max_len));
  spec.seed = kv.get_uint("seed", spec.seed);
  if (spec.dim < 2) throw ConfigError("dim must be >= 2");
  return spec;
}

TrainConfig train_config_from_keyvalue(const KeyValue& kv) {
  TrainConfig c;
  c.batch_size = static_cast<std::size_t>(kv.get_uint("batch_size", c.batch_size));
  c.learning_rate = kv.get_double("lr", c.learning_rate);
  c.max_epochs = static_cast<std::size_t>(kv.get_uint("epochs", c.max_epochs));
  c.dropout = kv.get_double("dropout", c.dropout);
  c.clip_norm = kv.get_double("clip_norm", c.clip_norm);
  c.seed = kv.get_uint("seed", c.seed);
  const auto probs = kv.get_double_list("variant_probs", {1, 1, 1});
  if (probs.size() != 3) throw ConfigError("variant_probs needs three entries");
  const double sum = probs[0] + probs[1] + probs[2];
  if (!(sum > 0)) throw ConfigError("variant_probs must not all be zero");
  for (std::size_t i = 0; i < 3; ++i) c.variant_probs[i] = probs[i] / sum;
  c.validate();
  return c;
}

SbdhProvider provider_from_keyvalue(const KeyValue& kv) {
  const std::string name = kv.get_string("provider", "gold");
  const auto kind = parse_provider(name);
  if (!kind) throw ConfigError("unknown provider '" + name + "'");
  SbdhProvider p = SbdhProvider::of_kind(*kind);
  p.flip_rate = kv.get_double("noisy.flip_rate", 0.0);
  p.drop_rate = kv.get_double("noisy.drop_rate", 0.0);
  p.seed = kv.get_uint("noisy.seed", 0);
  if (kv.has("lexicon"))
    p.lexicon = std::make_shared<const Lexicon>(Lexicon::load(kv.get_string("lexicon", "")));
  return p;
}

}  // namespace kiresh
