#include "warpcore/nn/optim.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include "warpcore/error.hpp"
#include "warpcore/fileutil.hpp"

namespace warpcore::nn {

void adam_step(ParamStore& store, const ParamStore& grads, AdamState& state) {
  if (state.m.size() == 0) {
    state.m = store.zeros_like();
    state.v = store.zeros_like();
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (auto& [name, param] : store.entries()) {
    const Tensor& g = grads.at(name);
    Tensor& m = state.m.at(name);
    Tensor& v = state.v.at(name);
    if (g.size() != param.size()) throw Error(ErrorKind::kShapeMismatch, "gradient of " + name);
    for (std::size_t i = 0; i < param.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      param[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
    if (!param.all_finite()) throw Error(ErrorKind::kInvalidParams, "non-finite update of " + name);
  }
}

GradCheckResult grad_check(const LossFn& f, ParamStore& store, double h, double floor) {
  ParamStore analytic;
  {
    Graph g;
    const Var loss = f(g, store);
    g.backward(loss);
    analytic = g.param_grads(store);
  }
  auto eval = [&] {
    Graph g;
    return g.value(f(g, store))[0];
  };

  GradCheckResult result;
  for (auto& [name, param] : store.entries()) {
    const Tensor& a = analytic.at(name);
    for (std::size_t i = 0; i < param.size(); ++i) {
      const double saved = param[i];
      param[i] = saved + h;
      const double up = eval();
      param[i] = saved - h;
      const double down = eval();
      param[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double denom = std::max({std::abs(a[i]), std::abs(numeric), floor});
      const double err = std::abs(a[i] - numeric) / denom;
      ++result.coordinates;
      if (err > result.max_rel_error || std::isnan(err)) {
        result.max_rel_error = std::isnan(err) ? INFINITY : err;
        result.worst_param = name;
        result.worst_index = i;
      }
    }
  }
  return result;
}

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void put(std::string& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& data) : data_(data) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, data_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw Error(ErrorKind::kUnsupportedFormat, "truncated weights file");
  }

  const std::string& data_;
  std::size_t pos_ = 0;
};

constexpr char kMagic[4] = {'W', 'C', 'W', 'T'};
constexpr std::uint8_t kVersion = 1;

}  // namespace

void save_weights(const ParamStore& store, const std::filesystem::path& path) {
  std::string out(kMagic, 4);
  put<std::uint8_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(store.size()));
  for (const auto& [name, t] : store.entries()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (double v : t.values()) put<double>(out, v);
  }
  write_file_atomic(path, out);
}

ParamStore load_weights(const std::filesystem::path& path) {
  const std::string data = read_file(path);
  Reader in(data);
  if (in.bytes(4) != std::string(kMagic, 4)) {
    throw Error(ErrorKind::kUnsupportedFormat, path.string() + " is not a weights file");
  }
  if (in.get<std::uint8_t>() != kVersion) {
    throw Error(ErrorKind::kUnsupportedFormat, "unsupported weights version");
  }
  ParamStore store;
  const std::uint32_t count = in.get<std::uint32_t>();
  for (std::uint32_t r = 0; r < count; ++r) {
    const std::string name = in.bytes(in.get<std::uint32_t>());
    const std::uint32_t rank = in.get<std::uint32_t>();
    if (rank > 8) throw Error(ErrorKind::kUnsupportedFormat, "implausible tensor rank");
    Shape shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      const std::uint32_t dim = in.get<std::uint32_t>();
      if (dim > (1u << 24)) throw Error(ErrorKind::kUnsupportedFormat, "implausible tensor dim");
      d = static_cast<int>(dim);
      n *= dim;
      if (n > in.remaining() / sizeof(double)) {
        throw Error(ErrorKind::kUnsupportedFormat, "truncated weights file");
      }
    }
    std::vector<double> values(n);
    for (double& v : values) v = in.get<double>();
    if (store.contains(name)) throw Error(ErrorKind::kUnsupportedFormat, "duplicate tensor " + name);
    store.add(name, Tensor(std::move(shape), std::move(values)));
  }
  if (!in.done()) throw Error(ErrorKind::kUnsupportedFormat, "trailing bytes in weights file");
  return store;
}

}  // namespace warpcore::nn
