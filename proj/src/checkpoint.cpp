#include "refldiff/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace refldiff {

namespace {

constexpr std::array<char, 8> kMagic = {'R', 'F', 'L', 'D', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void i32(std::int32_t v) { put(static_cast<std::uint32_t>(v), 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void i64(std::int64_t v) { put(static_cast<std::uint64_t>(v), 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void f64s(const std::vector<double>& v) {
    for (double x : v) f64(x);
  }
  void raw(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }
  const std::vector<char>& bytes() const { return bytes_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::vector<char> bytes_;
};

class Reader {
 public:
  explicit Reader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  std::uint64_t u64() { return get(8); }
  std::int64_t i64() { return static_cast<std::int64_t>(get(8)); }
  double f64() { return std::bit_cast<double>(get(8)); }
  std::vector<double> f64s(std::size_t n) {
    if (remaining() < n * 8) throw CheckpointError("checkpoint truncated");
    std::vector<double> out(n);
    for (auto& x : out) x = f64();
    return out;
  }
  void raw(char* p, std::size_t n) {
    if (remaining() < n) throw CheckpointError("checkpoint truncated");
    std::memcpy(p, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::uint64_t get(int n) {
    if (remaining() < static_cast<std::size_t>(n)) throw CheckpointError("checkpoint truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_++])) << (8 * i);
    return v;
  }
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

Domain make_domain(std::uint32_t kind, std::uint32_t dim) {
  switch (kind) {
    case 0:
      if (dim != 1) throw CheckpointError("checkpoint: interval domain must have dim 1");
      return Domain::interval();
    case 1:
      return Domain::hypercube(static_cast<int>(dim));
    case 2:
      return Domain::simplex(static_cast<int>(dim));
    default:
      throw CheckpointError("checkpoint: unknown domain kind " + std::to_string(kind));
  }
}

}  // namespace

Checkpoint snapshot(Trainer& trainer, const Domain& domain, double smoothed_loss) {
  Checkpoint c;
  c.domain = domain;
  c.shape = trainer.network().shape();
  c.schedule = trainer.schedule();
  c.train = trainer.config();
  c.smoothed_loss = smoothed_loss;
  c.step = trainer.step();
  const auto p = trainer.network().parameters();
  c.parameters.assign(p.begin(), p.end());
  c.ema_parameters = trainer.ema_parameters();
  c.adam_m = trainer.optimizer().first_moment();
  c.adam_v = trainer.optimizer().second_moment();
  return c;
}

Trainer restore_trainer(const Checkpoint& ckpt) {
  Trainer trainer(ScoreNetwork(ckpt.shape, ckpt.parameters), ckpt.schedule, ckpt.train);
  trainer.ema_parameters() = ckpt.ema_parameters;
  trainer.optimizer().first_moment() = ckpt.adam_m;
  trainer.optimizer().second_moment() = ckpt.adam_v;
  trainer.optimizer().set_steps_taken(ckpt.step);
  return trainer;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  const std::size_t n = c.parameters.size();
  if (c.ema_parameters.size() != n || c.adam_m.size() != n || c.adam_v.size() != n) {
    throw CheckpointError("checkpoint: parameter blocks differ in size");
  }
  Writer w;
  w.raw(kMagic.data(), kMagic.size());
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(c.domain.kind()));
  w.u32(static_cast<std::uint32_t>(c.domain.dim()));
  w.i32(c.shape.input_dim);
  w.i32(c.shape.embed_dim);
  w.i32(c.shape.hidden_width);
  w.i32(c.shape.hidden_layers);
  w.u32(c.shape.scale_by_sigma ? 1 : 0);
  w.f64(c.schedule.sigma0());
  w.f64(c.schedule.sigma1());
  w.f64(c.schedule.t_min());
  w.f64(c.train.learning_rate);
  w.f64(c.train.ema_rate);
  w.f64(c.train.beta1);
  w.f64(c.train.beta2);
  w.f64(c.train.adam_eps);
  w.f64(c.smoothed_loss);
  w.i32(c.train.batch_size);
  w.i32(c.train.total_steps);
  w.u64(c.train.seed);
  w.i64(c.step);
  w.u64(n);
  w.f64s(c.parameters);
  w.f64s(c.ema_parameters);
  w.f64s(c.adam_m);
  w.f64s(c.adam_v);

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    if (!out) throw CheckpointError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  Reader r(std::vector<char>(std::istreambuf_iterator<char>(in), {}));

  std::array<char, 8> magic{};
  r.raw(magic.data(), magic.size());
  if (magic != kMagic) throw CheckpointError(path.string() + " is not a checkpoint (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint c;
  const std::uint32_t kind = r.u32();
  const std::uint32_t dim = r.u32();
  c.domain = make_domain(kind, dim);
  c.shape.input_dim = r.i32();
  c.shape.embed_dim = r.i32();
  c.shape.hidden_width = r.i32();
  c.shape.hidden_layers = r.i32();
  c.shape.scale_by_sigma = r.u32() != 0;
  const double sigma0 = r.f64();
  const double sigma1 = r.f64();
  const double t_min = r.f64();
  c.schedule = NoiseSchedule(sigma0, sigma1, t_min);
  c.train.learning_rate = r.f64();
  c.train.ema_rate = r.f64();
  c.train.beta1 = r.f64();
  c.train.beta2 = r.f64();
  c.train.adam_eps = r.f64();
  c.smoothed_loss = r.f64();
  c.train.batch_size = r.i32();
  c.train.total_steps = r.i32();
  c.train.seed = r.u64();
  c.step = r.i64();
  const std::uint64_t n = r.u64();
  if (n != ScoreNetwork::parameter_count_for(c.shape)) {
    throw CheckpointError("checkpoint parameter count does not match its network shape");
  }
  c.parameters = r.f64s(n);
  c.ema_parameters = r.f64s(n);
  c.adam_m = r.f64s(n);
  c.adam_v = r.f64s(n);
  if (r.remaining() != 0) throw CheckpointError("trailing bytes after checkpoint payload");
  return c;
}

}  // namespace refldiff
