#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "kiresh/error.hpp"
#include "kiresh/train.hpp"

namespace kiresh {

namespace {

constexpr char kMagic[8] = {'K', 'I', 'R', 'E', 'S', 'H', 'C', 'K'};

class Writer {
public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  const std::string& data() const { return buf_; }

private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string buf_;
};

class Reader {
public:
  explicit Reader(std::string data) : buf_(std::move(data)) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(get(8)); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string out = buf_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  bool done() const { return pos_ == buf_.size(); }

private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw InputError("checkpoint is truncated");
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + static_cast<std::size_t>(i)])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::string buf_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const TrainedModel& model, const std::filesystem::path& path) {
  const auto& spec = model.params.spec();
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(spec.kind));
  w.u32(static_cast<std::uint32_t>(model.mode));
  w.u64(spec.dim);
  w.u64(spec.max_len);
  w.u64(spec.seed);
  w.u64(model.vocab.size());
  w.u64(model.vocab.hash());
  for (const auto& tok : model.vocab.tokens()) {
    w.u32(static_cast<std::uint32_t>(tok.size()));
    w.bytes(tok.data(), tok.size());
  }
  const auto values = model.params.values();
  w.u64(values.size());
  for (double v : values) w.f64(v);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write checkpoint '" + path.string() + "'");
  out.write(w.data().data(), static_cast<std::streamsize>(w.data().size()));
}

TrainedModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  Reader r(ss.str());

  if (r.bytes(sizeof kMagic) != std::string(kMagic, sizeof kMagic))
    throw InputError("'" + path.string() + "' is not a checkpoint");
  const auto version = r.u32();
  if (version != kCheckpointVersion)
    throw InputError("unsupported checkpoint version " + std::to_string(version));
  BackendSpec spec;
  const auto kind = r.u32();
  if (kind > static_cast<std::uint32_t>(BackendKind::tiny_encoder))
    throw InputError("unknown backend in checkpoint");
  spec.kind = static_cast<BackendKind>(kind);
  const auto mode = r.u32();
  if (mode > static_cast<std::uint32_t>(Mode::kiresh_prompt))
    throw InputError("unknown mode in checkpoint");
  spec.dim = r.u64();
  spec.max_len = r.u64();
  spec.seed = r.u64();
  const auto vocab_size = r.u64();
  const auto vocab_hash = r.u64();
  std::vector<std::string> tokens;
  tokens.reserve(vocab_size);
  for (std::uint64_t i = 0; i < vocab_size; ++i) tokens.push_back(r.bytes(r.u32()));

  TrainedModel model;
  model.mode = static_cast<Mode>(mode);
  model.vocab = Vocabulary::from_tokens(std::move(tokens));
  if (model.vocab.hash() != vocab_hash)
    throw InputError("checkpoint vocabulary does not match its hash");
  model.params = ModelParams::zeros(spec, model.vocab.size());
  const auto count = r.u64();
  if (count != model.params.size())
    throw InputError("checkpoint weight count does not match its dimensions");
  auto values = model.params.values();
  for (auto& v : values) v = r.f64();
  if (!r.done()) throw InputError("trailing bytes in checkpoint");
  return model;
}

TrainedModel load_checkpoint(const std::filesystem::path& path, std::uint64_t expected_vocab_hash) {
  TrainedModel model = load_checkpoint(path);
  if (model.vocab.hash() != expected_vocab_hash)
    throw InputError("checkpoint vocabulary hash mismatch");
  return model;
}

}  // namespace kiresh
