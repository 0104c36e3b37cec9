#include "skelforge/nn.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace skelforge {

Tensor& ParamStore::create(const std::string& name, Shape shape, double init_scale, std::mt19937_64& rng) {
  if (params_.count(name)) throw TensorError("duplicate parameter name: " + name);
  Tensor t = Tensor::zeros(shape, true);
  std::normal_distribution<double> dist(0.0, init_scale);
  for (Eigen::Index i = 0; i < t.values().size(); ++i) t.values()(i) = dist(rng);
  auto [it, ok] = params_.emplace(name, t);
  return it->second;
}

Tensor& ParamStore::create_zeros(const std::string& name, Shape shape) {
  if (params_.count(name)) throw TensorError("duplicate parameter name: " + name);
  auto [it, ok] = params_.emplace(name, Tensor::zeros(std::move(shape), true));
  return it->second;
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw TensorError("unknown parameter: " + name);
  return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw TensorError("unknown parameter: " + name);
  return it->second;
}

void ParamStore::adam_step(double lr) {
  std::string missing;
  for (auto& [name, p] : params_)
    if (!p.has_grad()) missing += missing.empty() ? name : (", " + name);
  if (!missing.empty()) throw TensorError("adam_step: missing grads for: " + missing);

  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ++step_;
  const double c1 = 1.0 - std::pow(b1, double(step_));
  const double c2 = 1.0 - std::pow(b2, double(step_));
  for (auto& [name, p] : params_) {
    const Eigen::VectorXd& g = p.grad();
    auto& m = m_[name];
    auto& v = v_[name];
    if (m.size() == 0) m = Eigen::VectorXd::Zero(g.size());
    if (v.size() == 0) v = Eigen::VectorXd::Zero(g.size());
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    Eigen::VectorXd mh = m / c1;
    Eigen::VectorXd vh = v / c2;
    p.values().array() -= lr * mh.array() / (vh.array().sqrt() + eps);
  }
  zero_grad();
}

void ParamStore::zero_grad() {
  for (auto& [name, p] : params_) p.node()->grad.resize(0);
}

namespace {

template <class T>
void put(std::ofstream& f, T v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T take(std::ifstream& f) {
  T v{};
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

}  // namespace

void ParamStore::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw TensorError("cannot open checkpoint for writing: " + path);
  f.write("SKF1", 4);
  put<std::uint32_t>(f, std::uint32_t(params_.size()));
  for (const auto& [name, p] : params_) {
    put<std::uint32_t>(f, std::uint32_t(name.size()));
    f.write(name.data(), std::streamsize(name.size()));
    put<std::uint32_t>(f, std::uint32_t(p.ndim()));
    for (std::size_t d : p.shape()) put<std::uint64_t>(f, std::uint64_t(d));
    f.write(reinterpret_cast<const char*>(p.values().data()), std::streamsize(p.size() * sizeof(double)));
  }
}

void ParamStore::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw TensorError("cannot open checkpoint: " + path);
  char magic[4];
  f.read(magic, 4);
  if (std::memcmp(magic, "SKF1", 4) != 0) throw TensorError("bad checkpoint magic in " + path);
  const auto count = take<std::uint32_t>(f);
  params_.clear();
  m_.clear();
  v_.clear();
  step_ = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto nlen = take<std::uint32_t>(f);
    std::string name(nlen, '\0');
    f.read(name.data(), nlen);
    const auto ndim = take<std::uint32_t>(f);
    Shape shape(ndim);
    for (auto& d : shape) d = std::size_t(take<std::uint64_t>(f));
    Tensor t = Tensor::zeros(shape, true);
    f.read(reinterpret_cast<char*>(t.values().data()), std::streamsize(t.size() * sizeof(double)));
    if (!f) throw TensorError("truncated checkpoint: " + path);
    params_.emplace(std::move(name), std::move(t));
  }
}

Dense Dense::create(ParamStore& ps, const std::string& name, std::size_t in, std::size_t out,
                    std::mt19937_64& rng, double w_scale) {
  if (w_scale < 0) w_scale = std::sqrt(2.0 / double(in));
  Dense d;
  d.w = ps.create(name + ".w", {in, out}, w_scale, rng);
  d.b = ps.create_zeros(name + ".b", {out});
  return d;
}

Dense Dense::fetch(ParamStore& ps, const std::string& name) {
  return Dense{ps.get(name + ".w"), ps.get(name + ".b")};
}

Conv3d Conv3d::create(ParamStore& ps, const std::string& name, std::size_t cin, std::size_t cout,
                      std::array<int, 3> kernel, ops::ConvSpec spec, std::mt19937_64& rng, bool transpose) {
  const std::size_t kvol = std::size_t(kernel[0]) * kernel[1] * kernel[2];
  const double scale = std::sqrt(2.0 / double(cin * kvol));
  Conv3d c;
  Shape ws = transpose ? Shape{cin, cout, std::size_t(kernel[0]), std::size_t(kernel[1]), std::size_t(kernel[2])}
                       : Shape{cout, cin, std::size_t(kernel[0]), std::size_t(kernel[1]), std::size_t(kernel[2])};
  c.w = ps.create(name + ".w", ws, scale, rng);
  c.b = ps.create_zeros(name + ".b", {cout});
  c.spec = spec;
  c.transpose = transpose;
  return c;
}

Conv3d Conv3d::fetch(ParamStore& ps, const std::string& name, ops::ConvSpec spec, bool transpose) {
  return Conv3d{ps.get(name + ".w"), ps.get(name + ".b"), spec, transpose};
}

namespace {

// mean over spatial dims of [C,1,H,W] -> [1,C]
Tensor channel_mean(const Tensor& x) {
  const std::size_t c = x.dim(0);
  const std::size_t sp = x.size() / c;
  Eigen::VectorXd y(c);
  for (std::size_t i = 0; i < c; ++i) y(i) = x.values().segment(i * sp, sp).mean();
  return make_op({1, c}, std::move(y), {x}, [c, sp](TensorNode& self) {
    if (!self.parents[0]->requires_grad) return;
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < c; ++i) g.segment(i * sp, sp).array() += self.grad(i) / double(sp);
  });
}

const std::array<std::size_t, 6> kEncChannels{16, 32, 64, 128, 128, 128};
const std::array<int, 6> kEncStride{2, 2, 2, 2, 1, 2};

}  // namespace

ImageEncoder ImageEncoder::create(ParamStore& ps, const std::string& prefix, std::size_t code_dim,
                                  std::mt19937_64& rng) {
  ImageEncoder e;
  e.code_dim = code_dim;
  std::size_t cin = 3;
  for (std::size_t i = 0; i < kEncChannels.size(); ++i) {
    ops::ConvSpec spec;
    spec.stride = {1, kEncStride[i], kEncStride[i]};
    spec.pad = {0, 1, 1};
    e.convs.push_back(Conv3d::create(ps, prefix + ".conv" + std::to_string(i), cin, kEncChannels[i],
                                     {1, 3, 3}, spec, rng));
    cin = kEncChannels[i];
  }
  e.head = Dense::create(ps, prefix + ".head", kEncChannels.back(), code_dim, rng);
  return e;
}

ImageEncoder ImageEncoder::fetch(ParamStore& ps, const std::string& prefix, std::size_t code_dim) {
  ImageEncoder e;
  e.code_dim = code_dim;
  for (std::size_t i = 0; i < kEncChannels.size(); ++i) {
    ops::ConvSpec spec;
    spec.stride = {1, kEncStride[i], kEncStride[i]};
    spec.pad = {0, 1, 1};
    e.convs.push_back(Conv3d::fetch(ps, prefix + ".conv" + std::to_string(i), spec));
  }
  e.head = Dense::fetch(ps, prefix + ".head");
  return e;
}

EncoderOutput ImageEncoder::operator()(const Tensor& image) const {
  if (image.ndim() != 3) throw TensorError("encoder: expected [C,H,W], got " + shape_str(image.shape()));
  const std::size_t h = image.dim(1), w = image.dim(2);
  if (h != w) throw TensorError("encoder: image must be square, got " + shape_str(image.shape()));
  if (h % 16 != 0) throw TensorError("encoder: image side must be divisible by 16");

  Tensor x = ops::reshape(image, {image.dim(0), 1, h, w});
  EncoderOutput out;
  for (std::size_t i = 0; i < convs.size(); ++i) {
    x = ops::relu(convs[i](x));
    if (i < 3) out.feature_maps.push_back({1 << int(i + 1), ops::reshape(x, {x.dim(0), x.dim(2), x.dim(3)})});
  }
  Tensor pooled = channel_mean(x);
  out.global_code = ops::reshape(head(pooled), {code_dim});
  return out;
}

}  // namespace skelforge
