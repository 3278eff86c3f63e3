#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "poperm/matrix.hpp"
#include "poperm/rng.hpp"

namespace poperm {

struct Tensor {
  std::vector<std::size_t> dims;
  std::vector<double> values;

  static Tensor zeros(std::vector<std::size_t> shape) {
    std::size_t total = 1;
    for (std::size_t d : shape) total *= d;
    Tensor t;
    t.dims = std::move(shape);
    t.values.assign(total, 0.0);
    return t;
  }
  static Tensor scalar(double v) {
    Tensor t;
    t.dims = {1};
    t.values = {v};
    return t;
  }
  static Tensor from_matrix(const DenseMatrix& m) {
    Tensor t;
    t.dims = {m.rows(), m.cols()};
    t.values.assign(m.data(), m.data() + m.size());
    return t;
  }
  static Tensor from_vector(const std::vector<double>& v) {
    Tensor t;
    t.dims = {v.size()};
    t.values = v;
    return t;
  }

  std::size_t size() const { return values.size(); }
  bool same_shape(const Tensor& other) const { return dims == other.dims; }

  DenseMatrix as_matrix() const {
    if (dims.size() != 2) throw std::invalid_argument("Tensor: not a matrix");
    DenseMatrix m(dims[0], dims[1]);
    std::memcpy(m.data(), values.data(), values.size() * sizeof(double));
    return m;
  }
  double as_scalar() const {
    if (values.size() != 1) throw std::invalid_argument("Tensor: not a scalar");
    return values[0];
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.dims == b.dims && a.values == b.values;
  }
};

// Uniform on +-sqrt(6 / (fan_in + fan_out)); for rank-1 shapes both fans are
// the length. Deterministic under seed.
inline Tensor xavier_init(const std::vector<std::size_t>& dims, std::uint64_t seed) {
  if (dims.empty()) throw std::invalid_argument("xavier_init: shape needs >= 1 dimension");
  std::size_t total = 1;
  for (std::size_t d : dims) {
    if (d == 0) throw std::invalid_argument("xavier_init: zero-size shape");
    total *= d;
  }
  const std::size_t fan_out = dims.front();
  const std::size_t fan_in =
      dims.size() == 1 ? dims.front()
                       : std::accumulate(dims.begin() + 1, dims.end(), std::size_t{1},
                                         std::multiplies<>());
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t;
  t.dims = dims;
  t.values.resize(total);
  Rng rng(seed);
  for (double& v : t.values) v = rng.uniform(-bound, bound);
  return t;
}

// Named parameter tensors in insertion order, with Adam moment buffers and a
// shared step counter.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    Tensor m;
    Tensor v;
  };

  void add(const std::string& name, Tensor value) {
    if (index_.count(name)) throw std::invalid_argument("ParamStore: duplicate name " + name);
    if (name.empty() || name == "step" || name.ends_with(".m") || name.ends_with(".v"))
      throw std::invalid_argument("ParamStore: reserved name " + name);
    Entry e;
    e.name = name;
    e.m = Tensor::zeros(value.dims);
    e.v = Tensor::zeros(value.dims);
    e.value = std::move(value);
    index_[name] = entries_.size();
    entries_.push_back(std::move(e));
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Tensor& at(const std::string& name) { return entry(name).value; }
  const Tensor& at(const std::string& name) const { return entry(name).value; }

  Entry& entry(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("ParamStore: unknown parameter " + name);
    return entries_[it->second];
  }
  const Entry& entry(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("ParamStore: unknown parameter " + name);
    return entries_[it->second];
  }

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }

  std::uint64_t step() const { return step_; }
  void set_step(std::uint64_t s) { step_ = s; }
  void increment_step() { ++step_; }

  friend bool operator==(const ParamStore& a, const ParamStore& b) {
    if (a.step_ != b.step_ || a.entries_.size() != b.entries_.size()) return false;
    for (std::size_t i = 0; i < a.entries_.size(); ++i) {
      const Entry& x = a.entries_[i];
      const Entry& y = b.entries_[i];
      if (x.name != y.name || !(x.value == y.value) || !(x.m == y.m) || !(x.v == y.v))
        return false;
    }
    return true;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  std::uint64_t step_ = 0;
};

// Ordered name -> gradient tensor accumulator; accumulation happens in a
// caller-controlled order so reductions stay bit-reproducible.
class GradientMap {
 public:
  void accumulate(const std::string& name, const Tensor& grad) {
    auto it = index_.find(name);
    if (it == index_.end()) {
      index_[name] = grads_.size();
      grads_.emplace_back(name, grad);
      return;
    }
    Tensor& existing = grads_[it->second].second;
    if (!existing.same_shape(grad)) throw std::invalid_argument("GradientMap: shape mismatch");
    for (std::size_t i = 0; i < existing.values.size(); ++i)
      existing.values[i] += grad.values[i];
  }
  void accumulate_scaled(const GradientMap& other, double scale) {
    for (const auto& [name, grad] : other.grads_) {
      Tensor scaled_grad = grad;
      for (double& v : scaled_grad.values) v *= scale;
      accumulate(name, scaled_grad);
    }
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Tensor& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("GradientMap: unknown name " + name);
    return grads_[it->second].second;
  }
  Tensor& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("GradientMap: unknown name " + name);
    return grads_[it->second].second;
  }
  const std::vector<std::pair<std::string, Tensor>>& items() const { return grads_; }
  void scale(double s) {
    for (auto& [name, grad] : grads_)
      for (double& v : grad.values) v *= s;
  }

 private:
  std::vector<std::pair<std::string, Tensor>> grads_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 32;
  std::size_t epochs = 1;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: lr must be > 0");
    if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0))
      throw std::invalid_argument("TrainConfig: betas must be in (0, 1)");
  }
};

// Standard bias-corrected Adam; one shared step counter incremented per call.
inline void adam_step(ParamStore& store, const GradientMap& grads, const TrainConfig& cfg) {
  cfg.validate();
  for (const auto& [name, grad] : grads.items()) {
    const ParamStore::Entry& e = store.entry(name);  // throws on unknown name
    if (!e.value.same_shape(grad))
      throw std::invalid_argument("adam_step: gradient shape mismatch for " + name);
    for (double g : grad.values) {
      if (std::isnan(g))
        throw std::runtime_error("adam_step: NaN gradient for parameter " + name);
    }
  }

  store.increment_step();
  const double t = static_cast<double>(store.step());
  const double m_corr = 1.0 - std::pow(cfg.beta1, t);
  const double v_corr = 1.0 - std::pow(cfg.beta2, t);
  for (const auto& [name, grad] : grads.items()) {
    ParamStore::Entry& e = store.entry(name);
    for (std::size_t i = 0; i < grad.values.size(); ++i) {
      const double g = grad.values[i];
      e.m.values[i] = cfg.beta1 * e.m.values[i] + (1.0 - cfg.beta1) * g;
      e.v.values[i] = cfg.beta2 * e.v.values[i] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = e.m.values[i] / m_corr;
      const double v_hat = e.v.values[i] / v_corr;
      e.value.values[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

// --- checkpoint format ------------------------------------------------------
// magic "POPT", u32 version=1, u32 tensor count; per tensor: u32 name length,
// name bytes, u32 ndim, u32 dims[], raw little-endian f64 data. Parameter
// tensors first (store order), then the Adam moments as "<name>.m"/"<name>.v",
// then a scalar "step". All integers little-endian.

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
  out.push_back(static_cast<char>((v >> 16) & 0xFF));
  out.push_back(static_cast<char>((v >> 24) & 0xFF));
}

inline void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
}

class ByteReader {
 public:
  ByteReader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(data_[pos_ + b]) << (8 * b);
    pos_ += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(data_[pos_ + b]) << (8 * b);
    pos_ += 8;
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }
  std::string bytes(std::size_t count) {
    need(count);
    std::string s(reinterpret_cast<const char*>(data_ + pos_), count);
    pos_ += count;
    return s;
  }
  bool exhausted() const { return pos_ == size_; }

 private:
  void need(std::size_t count) const {
    if (pos_ + count > size_) throw std::runtime_error("checkpoint: truncated file");
  }
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

inline void encode_tensor(std::string& out, const std::string& name, const Tensor& t) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out.append(name);
  put_u32(out, static_cast<std::uint32_t>(t.dims.size()));
  for (std::size_t d : t.dims) put_u32(out, static_cast<std::uint32_t>(d));
  for (double v : t.values) put_f64(out, v);
}

}  // namespace detail

inline std::string encode_checkpoint(const ParamStore& store) {
  std::string out;
  out.append("POPT");
  detail::put_u32(out, 1);  // version
  detail::put_u32(out, static_cast<std::uint32_t>(3 * store.entries().size() + 1));
  for (const auto& e : store.entries()) detail::encode_tensor(out, e.name, e.value);
  for (const auto& e : store.entries()) {
    detail::encode_tensor(out, e.name + ".m", e.m);
    detail::encode_tensor(out, e.name + ".v", e.v);
  }
  detail::encode_tensor(out, "step", Tensor::scalar(static_cast<double>(store.step())));
  return out;
}

inline ParamStore decode_checkpoint(const std::uint8_t* data, std::size_t size) {
  detail::ByteReader reader(data, size);
  if (reader.bytes(4) != "POPT") throw std::runtime_error("checkpoint: bad magic");
  const std::uint32_t version = reader.u32();
  if (version != 1)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  const std::uint32_t count = reader.u32();

  std::vector<std::pair<std::string, Tensor>> tensors;
  tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = reader.u32();
    std::string name = reader.bytes(name_len);
    const std::uint32_t ndim = reader.u32();
    Tensor t;
    std::size_t total = 1;
    for (std::uint32_t k = 0; k < ndim; ++k) {
      const std::uint32_t dim = reader.u32();
      t.dims.push_back(dim);
      total *= dim;
    }
    t.values.resize(total);
    for (std::size_t k = 0; k < total; ++k) t.values[k] = reader.f64();
    tensors.emplace_back(std::move(name), std::move(t));
  }
  if (!reader.exhausted()) throw std::runtime_error("checkpoint: trailing bytes");

  ParamStore store;
  auto ends_with = [](const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  for (auto& [name, tensor] : tensors) {
    if (name == "step" || ends_with(name, ".m") || ends_with(name, ".v")) continue;
    store.add(name, std::move(tensor));
  }
  bool saw_step = false;
  for (auto& [name, tensor] : tensors) {
    if (name == "step") {
      store.set_step(static_cast<std::uint64_t>(tensor.as_scalar()));
      saw_step = true;
    } else if (ends_with(name, ".m") || ends_with(name, ".v")) {
      const std::string base = name.substr(0, name.size() - 2);
      if (!store.contains(base))
        throw std::runtime_error("checkpoint: moment tensor without parameter: " + name);
      auto& e = store.entry(base);
      if (!e.value.same_shape(tensor)) throw std::runtime_error("checkpoint: moment shape mismatch");
      (ends_with(name, ".m") ? e.m : e.v) = std::move(tensor);
    }
  }
  if (!saw_step) throw std::runtime_error("checkpoint: missing step counter");
  return store;
}

inline void save_checkpoint(const ParamStore& store, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path.string() + " for writing");
  const std::string encoded = encode_checkpoint(store);
  out.write(encoded.data(), static_cast<std::streamsize>(encoded.size()));
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

inline ParamStore load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes.data(), bytes.size());
}

}  // namespace poperm
