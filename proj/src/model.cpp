#include "kiresh/model.hpp"

#include <algorithm>
#include <cmath>

#include "kiresh/error.hpp"

namespace kiresh {

std::string_view backend_name(BackendKind k) {
  return k == BackendKind::linear_bof ? "linear_bof" : "tiny_encoder";
}

std::optional<BackendKind> parse_backend(std::string_view name) {
  if (name == "linear_bof") return BackendKind::linear_bof;
  if (name == "tiny_encoder") return BackendKind::tiny_encoder;
  return std::nullopt;
}

ParamLayout ParamLayout::make(const BackendSpec& spec, std::size_t vocab_size) {
  if (spec.dim < 2) throw ConfigError("backend dim must be >= 2");
  if (spec.max_len < 2) throw ConfigError("max_len must be >= 2");
  const std::size_t d = spec.dim;
  ParamLayout l;
  std::size_t off = 0;
  l.embedding = off;
  off += vocab_size * d;
  l.position = off;
  if (spec.kind == BackendKind::tiny_encoder) {
    off += spec.max_len * d;
    l.wq = off;
    off += d * d;
    l.wk = off;
    off += d * d;
    l.wv = off;
    off += d * d;
    l.feature_dim = d;
  } else {
    l.wq = l.wk = l.wv = off;
    l.feature_dim = d + kIndicatorDim;
  }
  l.w1 = off;
  off += kNumPresence * l.feature_dim;
  l.b1 = off;
  off += kNumPresence;
  l.w2 = off;
  off += kNumPeriod * l.feature_dim;
  l.b2 = off;
  off += kNumPeriod;
  l.total = off;
  return l;
}

ModelParams::ModelParams(const BackendSpec& spec, std::size_t vocab_size)
    : spec_(spec),
      vocab_size_(vocab_size),
      layout_(ParamLayout::make(spec, vocab_size)),
      values_(layout_.total, 0.0) {}

ModelParams ModelParams::zeros(const BackendSpec& spec, std::size_t vocab_size) {
  return ModelParams(spec, vocab_size);
}

ModelParams ModelParams::initialize(const BackendSpec& spec, std::size_t vocab_size) {
  ModelParams p(spec, vocab_size);
  const double bound = 1.0 / std::sqrt(static_cast<double>(spec.dim));
  Rng rng(derive_seed(spec.seed, fnv1a("init")));
  const auto& l = p.layout_;
  auto fill = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) p.values_[i] = bound * (2.0 * rng.uniform() - 1.0);
  };
  fill(l.embedding, l.w1);  // embeddings, positions, attention
  fill(l.w1, l.b1);
  fill(l.w2, l.b2);
  return p;
}

std::span<double> ModelParams::head(Task t) {
  const std::size_t rows = num_classes(t);
  return {values_.data() + (t == Task::presence ? layout_.w1 : layout_.w2),
          rows * layout_.feature_dim};
}
std::span<const double> ModelParams::head(Task t) const {
  const std::size_t rows = num_classes(t);
  return {values_.data() + (t == Task::presence ? layout_.w1 : layout_.w2),
          rows * layout_.feature_dim};
}
std::span<double> ModelParams::bias(Task t) {
  return {values_.data() + (t == Task::presence ? layout_.b1 : layout_.b2), num_classes(t)};
}
std::span<const double> ModelParams::bias(Task t) const {
  return {values_.data() + (t == Task::presence ? layout_.b1 : layout_.b2), num_classes(t)};
}

bool ModelParams::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

namespace {


// Head input for one readout position, with what backward needs.
struct Readout {
  std::size_t index = 0;
  std::vector<double> q, u, a, c;  // tiny_encoder attention intermediates
  std::vector<double> h;           // representation before dropout
  std::vector<double> mask;        // dropout multipliers (empty: none)
  std::vector<double> g;           // gradient w.r.t. h after dropout
};

struct Pass {
  std::size_t n = 0;
  std::vector<double> x;  // n x d embeddings (tiny_encoder)
  std::vector<Readout> readouts;
  std::array<std::size_t, 2> task_readout{0, 0};
  Logits logits;
};

void check_input(const ModelParams& params, const EncodedInput& in) {
  if (in.ids.empty()) throw ContractError("empty input");
  if (in.ids.size() > params.spec().max_len)
    throw ContractError("input length " + std::to_string(in.ids.size()) + " exceeds max_len " +
                        std::to_string(params.spec().max_len));
  for (auto id : in.ids)
    if (id < 0 || static_cast<std::size_t>(id) >= params.vocab_size())
      throw ContractError("token id " + std::to_string(id) + " outside vocabulary of size " +
                          std::to_string(params.vocab_size()));
  for (auto t : kTasks)
    if (const auto& s = in.slot(t); s && s->index >= in.ids.size())
      throw ContractError("slot index outside input");
}

void attend(const ModelParams& params, Pass& pass, Readout& r) {
  const auto& l = params.layout();
  const std::size_t d = params.spec().dim;
  const std::size_t n = pass.n;
  const double* W = params.values().data();
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  const double* xs = pass.x.data() + r.index * d;

  r.q.assign(d, 0.0);
  for (std::size_t k = 0; k < d; ++k) {
    const double* row = W + l.wq + k * d;
    double acc = 0;
    for (std::size_t i = 0; i < d; ++i) acc += row[i] * xs[i];
    r.q[k] = acc;
  }
  r.u.assign(d, 0.0);
  for (std::size_t k = 0; k < d; ++k) {
    const double* row = W + l.wk + k * d;
    const double qk = r.q[k];
    for (std::size_t i = 0; i < d; ++i) r.u[i] += row[i] * qk;
  }
  r.a.assign(n, 0.0);
  double mx = -INFINITY;
  for (std::size_t j = 0; j < n; ++j) {
    const double* xj = pass.x.data() + j * d;
    double acc = 0;
    for (std::size_t i = 0; i < d; ++i) acc += xj[i] * r.u[i];
    r.a[j] = acc * scale;
    mx = std::max(mx, r.a[j]);
  }
  double z = 0;
  for (auto& v : r.a) z += (v = std::exp(v - mx));
  for (auto& v : r.a) v /= z;
  r.c.assign(d, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    const double* xj = pass.x.data() + j * d;
    const double aj = r.a[j];
    for (std::size_t i = 0; i < d; ++i) r.c[i] += aj * xj[i];
  }
  r.h.assign(xs, xs + d);
  for (std::size_t k = 0; k < d; ++k) {
    const double* row = W + l.wv + k * d;
    double acc = 0;
    for (std::size_t i = 0; i < d; ++i) acc += row[i] * r.c[i];
    r.h[k] += acc;
  }
}

// Prompt tail tokens take right-aligned positions so slot queries do not
// depend on the text length.
std::size_t position_of(const EncodedInput& in, std::size_t j, std::size_t max_len) {
  if (!in.presence_slot) return j;
  const std::size_t tail = in.presence_slot->index - 5;
  return j < tail ? j : max_len - (in.ids.size() - j);
}

void run_forward(const ModelParams& params, const EncodedInput& in, Pass& pass,
                 DropoutState dropout) {
  const auto& l = params.layout();
  const std::size_t d = params.spec().dim;
  const double* W = params.values().data();
  pass.n = in.ids.size();
  pass.readouts.clear();

  if (params.spec().kind == BackendKind::tiny_encoder) {
    pass.x.assign(pass.n * d, 0.0);
    for (std::size_t j = 0; j < pass.n; ++j) {
      const double* e = W + l.embedding + static_cast<std::size_t>(in.ids[j]) * d;
      const double* p = W + l.position + position_of(in, j, params.spec().max_len) * d;
      double* x = pass.x.data() + j * d;
      for (std::size_t i = 0; i < d; ++i) x[i] = e[i] + p[i];
    }
    if (in.has_prompt()) {
      pass.readouts.resize(2);
      pass.readouts[0].index = in.presence_slot->index;
      pass.readouts[1].index = in.period_slot->index;
      pass.task_readout = {0, 1};
    } else {
      pass.readouts.resize(1);
      pass.readouts[0].index = 0;
      pass.task_readout = {0, 0};
    }
    for (auto& r : pass.readouts) attend(params, pass, r);
  } else {
    pass.readouts.resize(1);
    pass.task_readout = {0, 0};
    auto& h = pass.readouts[0].h;
    h.assign(l.feature_dim, 0.0);
    for (auto id : in.ids) {
      const double* e = W + l.embedding + static_cast<std::size_t>(id) * d;
      for (std::size_t i = 0; i < d; ++i) h[i] += e[i];
    }
    const double inv = 1.0 / static_cast<double>(pass.n);
    for (std::size_t i = 0; i < d; ++i) h[i] *= inv;
    if (in.presence_slot && in.presence_slot->state == SlotState::revealed)
      h[d + static_cast<std::size_t>(in.presence_slot->label)] = 1.0;
    if (in.period_slot && in.period_slot->state == SlotState::revealed)
      h[d + kNumPresence + static_cast<std::size_t>(in.period_slot->label)] = 1.0;
  }

  for (auto& r : pass.readouts) {
    r.mask.clear();
    if (dropout.rng && dropout.rate > 0.0) {
      const double keep_scale = 1.0 / (1.0 - dropout.rate);
      r.mask.resize(r.h.size());
      for (auto& m : r.mask) m = dropout.rng->uniform() < dropout.rate ? 0.0 : keep_scale;
    }
  }

  const std::size_t f = l.feature_dim;
  for (auto t : kTasks) {
    const auto& r = pass.readouts[pass.task_readout[t == Task::presence ? 0 : 1]];
    const auto w = params.head(t);
    const auto b = params.bias(t);
    double* out = t == Task::presence ? pass.logits.presence.data() : pass.logits.period.data();
    for (std::size_t k = 0; k < num_classes(t); ++k) {
      double acc = b[k];
      const double* row = w.data() + k * f;
      if (r.mask.empty()) {
        for (std::size_t i = 0; i < f; ++i) acc += row[i] * r.h[i];
      } else {
        for (std::size_t i = 0; i < f; ++i) acc += row[i] * r.h[i] * r.mask[i];
      }
      out[k] = acc;
    }
  }
}

// Returns cross-entropy and writes softmax - onehot into dz.
double cross_entropy(std::span<const double> z, int gold, std::span<double> dz) {
  const double mx = *std::max_element(z.begin(), z.end());
  double sum = 0;
  for (std::size_t k = 0; k < z.size(); ++k) sum += (dz[k] = std::exp(z[k] - mx));
  for (auto& v : dz) v /= sum;
  dz[static_cast<std::size_t>(gold)] -= 1.0;
  return std::log(sum) + mx - z[static_cast<std::size_t>(gold)];
}

void backward_readout(const ModelParams& params, const EncodedInput& in, Pass& pass, Readout& r,
                      double* G) {
  const auto& l = params.layout();
  const std::size_t d = params.spec().dim;
  const double* W = params.values().data();
  std::vector<double> gh = r.g;
  if (!r.mask.empty())
    for (std::size_t i = 0; i < gh.size(); ++i) gh[i] *= r.mask[i];

  if (params.spec().kind == BackendKind::linear_bof) {
    const double inv = 1.0 / static_cast<double>(pass.n);
    for (auto id : in.ids) {
      double* ge = G + l.embedding + static_cast<std::size_t>(id) * d;
      for (std::size_t i = 0; i < d; ++i) ge[i] += gh[i] * inv;
    }
    return;
  }

  const std::size_t n = pass.n;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> gx(n * d, 0.0);
  const double* xs = pass.x.data() + r.index * d;

  // h = x_s + Wv c
  for (std::size_t i = 0; i < d; ++i) gx[r.index * d + i] += gh[i];
  std::vector<double> gc(d, 0.0);
  for (std::size_t k = 0; k < d; ++k) {
    const double* row = W + l.wv + k * d;
    double* grow = G + l.wv + k * d;
    const double g = gh[k];
    for (std::size_t i = 0; i < d; ++i) {
      grow[i] += g * r.c[i];
      gc[i] += row[i] * g;
    }
  }
  // c = sum_j a_j x_j
  std::vector<double> ga(n, 0.0);
  double dot = 0;
  for (std::size_t j = 0; j < n; ++j) {
    const double* xj = pass.x.data() + j * d;
    double* gxj = gx.data() + j * d;
    double acc = 0;
    for (std::size_t i = 0; i < d; ++i) {
      acc += gc[i] * xj[i];
      gxj[i] += r.a[j] * gc[i];
    }
    ga[j] = acc;
    dot += r.a[j] * acc;
  }
  // a = softmax(scale * x_j . u)
  std::vector<double> gu(d, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    const double gs = r.a[j] * (ga[j] - dot) * scale;
    const double* xj = pass.x.data() + j * d;
    double* gxj = gx.data() + j * d;
    for (std::size_t i = 0; i < d; ++i) {
      gxj[i] += gs * r.u[i];
      gu[i] += gs * xj[i];
    }
  }
  // u = Wk^T q
  std::vector<double> gq(d, 0.0);
  for (std::size_t k = 0; k < d; ++k) {
    const double* row = W + l.wk + k * d;
    double* grow = G + l.wk + k * d;
    double acc = 0;
    for (std::size_t i = 0; i < d; ++i) {
      grow[i] += r.q[k] * gu[i];
      acc += row[i] * gu[i];
    }
    gq[k] = acc;
  }
  // q = Wq x_s
  for (std::size_t k = 0; k < d; ++k) {
    const double* row = W + l.wq + k * d;
    double* grow = G + l.wq + k * d;
    const double g = gq[k];
    double* gxs = gx.data() + r.index * d;
    for (std::size_t i = 0; i < d; ++i) {
      grow[i] += g * xs[i];
      gxs[i] += row[i] * g;
    }
  }
  // x_j = E[id_j] + P[j]
  for (std::size_t j = 0; j < n; ++j) {
    double* ge = G + l.embedding + static_cast<std::size_t>(in.ids[j]) * d;
    double* gp = G + l.position + position_of(in, j, params.spec().max_len) * d;
    const double* gxj = gx.data() + j * d;
    for (std::size_t i = 0; i < d; ++i) {
      ge[i] += gxj[i];
      gp[i] += gxj[i];
    }
  }
}

double example_loss(const ModelParams& params, const LabeledInput& item, Pass& pass,
                    double* G, double weight, DropoutState dropout) {
  run_forward(params, item.input, pass, dropout);
  const std::size_t f = params.layout().feature_dim;
  double total = 0;
  bool any = false;
  for (auto& r : pass.readouts) r.g.assign(r.h.size(), 0.0);
  for (auto t : kTasks) {
    if (!item.input.task_masked(t)) continue;
    std::array<double, kNumPresence> dz_buf{};
    const std::span<double> dz(dz_buf.data(), num_classes(t));
    total += cross_entropy(pass.logits.of(t), item.gold.code(t), dz);
    any = true;
    if (!G) continue;
    auto& r = pass.readouts[pass.task_readout[t == Task::presence ? 0 : 1]];
    const auto& l = params.layout();
    const auto w = params.head(t);
    double* gw = G + (t == Task::presence ? l.w1 : l.w2);
    double* gb = G + (t == Task::presence ? l.b1 : l.b2);
    for (std::size_t k = 0; k < num_classes(t); ++k) {
      const double g = dz[k] * weight;
      gb[k] += g;
      const double* row = w.data() + k * f;
      double* grow = gw + k * f;
      for (std::size_t i = 0; i < f; ++i) {
        const double hi = r.mask.empty() ? r.h[i] : r.h[i] * r.mask[i];
        grow[i] += g * hi;
        r.g[i] += row[i] * g;
      }
    }
  }
  if (G && any)
    for (auto& r : pass.readouts) backward_readout(params, item.input, pass, r, G);
  return total;
}

}  // namespace

Logits forward(const ModelParams& params, const EncodedInput& input) {
  check_input(params, input);
  Pass pass;
  run_forward(params, input, pass, {});
  return pass.logits;
}

double loss(const ModelParams& params, std::span<const LabeledInput> batch) {
  if (batch.empty()) throw ContractError("loss of an empty batch");
  Pass pass;
  double total = 0;
  for (const auto& item : batch) {
    check_input(params, item.input);
    total += example_loss(params, item, pass, nullptr, 0.0, {});
  }
  return total / static_cast<double>(batch.size());
}

double loss_and_grad(const ModelParams& params, std::span<const LabeledInput> batch,
                     std::vector<double>& grad, DropoutState dropout) {
  if (batch.empty()) throw ContractError("gradient of an empty batch");
  grad.assign(params.size(), 0.0);
  const double weight = 1.0 / static_cast<double>(batch.size());
  Pass pass;
  double total = 0;
  for (const auto& item : batch) {
    check_input(params, item.input);
    total += example_loss(params, item, pass, grad.data(), weight, dropout);
  }
  return total * weight;
}

std::vector<double> grad(const ModelParams& params, std::span<const LabeledInput> batch) {
  std::vector<double> g;
  loss_and_grad(params, batch, g);
  return g;
}

}  // namespace kiresh
