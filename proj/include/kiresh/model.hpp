#pragma once

// Classifier backends with two softmax heads (presence, period).
//
// linear_bof:   h = [mean of token embeddings ; revealed-label indicators],
//               shared by both heads.
// tiny_encoder: one single-head self-attention layer with a residual over
//               token + position embeddings. Each head reads the row at its
//               prompt slot; inputs without a prompt read [CLS] for both.
//
// logits_t = W_t h_t + b_t. Parameters live in one flat double vector so
// gradients, finite-difference checks and checkpoints share one layout.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "kiresh/encoding.hpp"
#include "kiresh/rng.hpp"
#include "kiresh/taxonomy.hpp"

namespace kiresh {

enum class BackendKind : std::uint8_t { linear_bof, tiny_encoder };

std::string_view backend_name(BackendKind k);
std::optional<BackendKind> parse_backend(std::string_view name);

struct BackendSpec {
  BackendKind kind = BackendKind::tiny_encoder;
  std::size_t dim = 64;
  std::size_t max_len = kDefaultMaxLen;
  std::uint64_t seed = 0;
  friend bool operator==(const BackendSpec&, const BackendSpec&) = default;
};

// Offsets into the flat parameter vector. Blocks a backend does not use are
// empty.
struct ParamLayout {
  std::size_t embedding = 0;  // vocab x dim
  std::size_t position = 0;   // max_len x dim
  std::size_t wq = 0, wk = 0, wv = 0;  // dim x dim each
  std::size_t w1 = 0, b1 = 0;  // presence head: 6 x feature_dim, 6
  std::size_t w2 = 0, b2 = 0;  // period head: 5 x feature_dim, 5
  std::size_t total = 0;
  std::size_t feature_dim = 0;

  static ParamLayout make(const BackendSpec& spec, std::size_t vocab_size);
  friend bool operator==(const ParamLayout&, const ParamLayout&) = default;
};

inline constexpr std::size_t kIndicatorDim = kNumPresence + kNumPeriod;

class ModelParams {
public:
  ModelParams() = default;
  // Weights uniform in [-1/sqrt(dim), 1/sqrt(dim)] from spec.seed; biases 0.
  static ModelParams initialize(const BackendSpec& spec, std::size_t vocab_size);
  static ModelParams zeros(const BackendSpec& spec, std::size_t vocab_size);

  const BackendSpec& spec() const { return spec_; }
  std::size_t vocab_size() const { return vocab_size_; }
  const ParamLayout& layout() const { return layout_; }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }

  // Rows x cols view of the head weights for a task.
  std::span<double> head(Task t);
  std::span<const double> head(Task t) const;
  std::span<double> bias(Task t);
  std::span<const double> bias(Task t) const;

  bool all_finite() const;
  friend bool operator==(const ModelParams&, const ModelParams&) = default;

private:
  ModelParams(const BackendSpec& spec, std::size_t vocab_size);
  BackendSpec spec_{};
  std::size_t vocab_size_ = 0;
  ParamLayout layout_{};
  std::vector<double> values_;
};

struct Logits {
  std::array<double, kNumPresence> presence{};
  std::array<double, kNumPeriod> period{};

  std::span<const double> of(Task t) const {
    return t == Task::presence ? std::span<const double>(presence)
                               : std::span<const double>(period);
  }
};

// Deterministic, dropout off. Throws ContractError when the input does not
// fit the parameters (unknown ids, longer than max_len).
Logits forward(const ModelParams& params, const EncodedInput& input);

struct LabeledInput {
  EncodedInput input;
  LabelPair gold;
};

// Dropout on the head representations, training only.
struct DropoutState {
  Rng* rng = nullptr;
  double rate = 0.0;
};

// Mean over the batch of the summed cross-entropies of the masked slots.
// Inputs without a prompt supervise both tasks.
double loss(const ModelParams& params, std::span<const LabeledInput> batch);

// Loss plus its gradient w.r.t. every parameter, written into `grad`
// (resized and overwritten).
double loss_and_grad(const ModelParams& params, std::span<const LabeledInput> batch,
                     std::vector<double>& grad, DropoutState dropout = {});

std::vector<double> grad(const ModelParams& params, std::span<const LabeledInput> batch);

}  // namespace kiresh
