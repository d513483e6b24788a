#include "cegm/harness/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "cegm/error.hpp"

namespace cegm::harness {

namespace {

constexpr char kMagic[5] = {'C', 'E', 'G', 'M', '1'};

class Writer {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename T>
  void le(T v) {
    static_assert(std::is_integral_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    le(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  void tensor(const Tensor& t) {
    le(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) le(static_cast<std::uint64_t>(e));
    for (double v : t.data()) f64(v);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw FormatError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  void raw(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, in_.data() + pos_, n);
    pos_ += n;
  }
  template <typename T>
  T le() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(in_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return v;
  }
  double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
  std::string str() {
    const auto n = le<std::uint32_t>();
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  Tensor tensor() {
    const auto rank = le<std::uint32_t>();
    if (rank > 8) throw FormatError("checkpoint tensor rank " + std::to_string(rank) + " is implausible");
    Shape shape(rank);
    std::size_t numel = 1;
    for (auto& e : shape) {
      e = static_cast<std::size_t>(le<std::uint64_t>());
      if (e == 0) throw FormatError("checkpoint tensor has a zero extent");
      numel *= e;
    }
    need(numel * 8);
    std::vector<double> data(numel);
    for (double& v : data) v = f64();
    return Tensor(std::move(shape), std::move(data));
  }
  bool done() const noexcept { return pos_ == in_.size(); }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.le(kCheckpointVersion);
  w.le(static_cast<std::uint64_t>(ck.model.vocab_size));
  w.le(static_cast<std::uint64_t>(ck.model.embed_dim));
  w.le(static_cast<std::uint64_t>(ck.model.window));
  w.le(static_cast<std::uint64_t>(ck.model.hidden));
  w.le(ck.seed);
  w.raw(ck.config_hash.data(), ck.config_hash.size());
  w.le(ck.epochs_completed);
  w.le(static_cast<std::uint32_t>(ck.params.size()));
  for (const auto& p : ck.params) {
    w.str(p.name);
    w.le(static_cast<std::uint8_t>(p.role == Role::kEmbeddingAligned ? 1 : 0));
    w.tensor(p.value);
  }
  const OptimizerSnapshot& o = ck.optimizer;
  w.le(static_cast<std::uint8_t>(o.kind));
  w.f64(o.lambda);
  w.le(static_cast<std::uint8_t>(o.prev_loss ? 1 : 0));
  w.f64(o.prev_loss.value_or(0.0));
  w.le(o.step);
  w.le(static_cast<std::uint32_t>(o.slots.size()));
  for (const auto& [name, tensors] : o.slots) {
    w.str(name);
    w.le(static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [tname, t] : tensors) {
      w.str(tname);
      w.tensor(t);
    }
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  char magic[5];
  r.raw(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw FormatError("not a checkpoint (bad magic)");
  const auto version = r.le<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  ck.model.vocab_size = r.le<std::uint64_t>();
  ck.model.embed_dim = r.le<std::uint64_t>();
  ck.model.window = r.le<std::uint64_t>();
  ck.model.hidden = r.le<std::uint64_t>();
  ck.seed = r.le<std::uint64_t>();
  r.raw(ck.config_hash.data(), ck.config_hash.size());
  ck.epochs_completed = r.le<std::uint64_t>();
  const auto nparams = r.le<std::uint32_t>();
  for (std::uint32_t i = 0; i < nparams; ++i) {
    std::string name = r.str();
    const auto role = r.le<std::uint8_t>();
    if (role > 1) throw FormatError("bad role tag for parameter '" + name + "'");
    Tensor t = r.tensor();
    ck.params.add(std::move(name), std::move(t), role == 1 ? Role::kEmbeddingAligned : Role::kGeneric);
  }
  OptimizerSnapshot& o = ck.optimizer;
  const auto kind = r.le<std::uint8_t>();
  if (kind > static_cast<std::uint8_t>(OptimizerKind::kNormGd)) throw FormatError("bad optimizer kind");
  o.kind = static_cast<OptimizerKind>(kind);
  o.lambda = r.f64();
  const auto has_prev = r.le<std::uint8_t>();
  const double prev = r.f64();
  if (has_prev) o.prev_loss = prev;
  o.step = r.le<std::uint64_t>();
  const auto nslots = r.le<std::uint32_t>();
  for (std::uint32_t s = 0; s < nslots; ++s) {
    std::string name = r.str();
    NamedTensors tensors;
    const auto count = r.le<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
      std::string tname = r.str();
      tensors.insert(std::move(tname), r.tensor());
    }
    o.slots.emplace_back(std::move(name), std::move(tensors));
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint payload");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  const auto bytes = encode_checkpoint(ck);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace cegm::harness
