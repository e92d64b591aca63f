#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "kiresh/corpus.hpp"
#include "kiresh/encoding.hpp"
#include "kiresh/keyvalue.hpp"
#include "kiresh/model.hpp"
#include "kiresh/records.hpp"

namespace kiresh {

struct TrainConfig {
  std::size_t batch_size = 8;
  double learning_rate = 0.0;  // 0: backend default
  std::size_t max_epochs = 20;
  double dropout = 0.3;
  // Rescale the batch gradient to at most this L2 norm; 0 disables.
  double clip_norm = 5.0;
  VariantProbabilities variant_probs = kUniformVariants;
  std::uint64_t seed = 0;

  double effective_learning_rate(BackendKind kind) const;
  void validate() const;
};

double default_learning_rate(BackendKind kind);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0;
  double eval_presence_macro_f1 = 0;
  double eval_period_macro_f1 = 0;
  double eval_macro_f1 = 0;  // mean of the two tasks; selects the checkpoint
};

// Everything needed to reproduce predictions: parameters, vocabulary, and
// the input pipeline the parameters were trained with.
struct TrainedModel {
  ModelParams params;
  Vocabulary vocab;
  Mode mode = Mode::plain;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
};

// Mini-batch gradient descent; the epoch with the best eval Macro-F1 wins.
// Throws InputError when the train or eval split is empty.
TrainedModel train(const Dataset& dataset, const BackendSpec& backend, const TrainConfig& config,
                   Mode mode, const SbdhProvider& provider);

std::vector<ProbRecord> predict_all(const TrainedModel& model,
                                    const std::vector<const Example*>& examples,
                                    const SbdhProvider& provider,
                                    std::optional<Reveal> reveal = std::nullopt);

// Throws ContractError when `reveal` is set for a model without the prompt.
ProbRecord predict(const TrainedModel& model, const Example& example,
                   const SbdhProvider& provider, std::optional<Reveal> reveal = std::nullopt);

// The encoded input predict() feeds the model.
EncodedInput inference_input(const TrainedModel& model, const Example& example,
                             const SbdhProvider& provider, std::optional<Reveal> reveal);

// Checkpoint: "KIRESHCK", format version, backend kind, mode, dims, vocab
// hash, the vocabulary, then the weights as little-endian float64.
// load_checkpoint refuses files whose vocabulary does not match the hash.
inline constexpr std::uint32_t kCheckpointVersion = 1;
void save_checkpoint(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_checkpoint(const std::filesystem::path& path);
// Rejects the checkpoint unless its vocabulary hash equals `expected_vocab_hash`.
TrainedModel load_checkpoint(const std::filesystem::path& path, std::uint64_t expected_vocab_hash);

// Reads backend/training keys (backend, dim, max_len, lr, batch_size, epochs,
// dropout, variant_probs, seed) from a flat config.
BackendSpec backend_from_keyvalue(const KeyValue& kv);
TrainConfig train_config_from_keyvalue(const KeyValue& kv);
SbdhProvider provider_from_keyvalue(const KeyValue& kv);

}  // namespace kiresh
