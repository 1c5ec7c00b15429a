#include "pairnet/nn.hpp"

#include <cmath>
#include <numbers>

#include "pairnet/errors.hpp"

namespace pairnet {

std::size_t ParameterSet::add(std::string name, Mat init) {
  if (contains(name)) throw ContractError("duplicate parameter name: " + name);
  params_.push_back({std::move(name), std::move(init), false});
  return params_.size() - 1;
}

std::size_t ParameterSet::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name == name) return i;
  throw ContractError("unknown parameter: " + std::string(name));
}

bool ParameterSet::contains(std::string_view name) const {
  for (const auto& p : params_)
    if (p.name == name) return true;
  return false;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

Gradients::Gradients(const ParameterSet& params) {
  tensors.reserve(params.size());
  for (const auto& p : params) tensors.push_back(Mat::Zero(p.value.rows(), p.value.cols()));
}

void Gradients::zero() {
  for (auto& t : tensors) t.setZero();
}

Gradients& Gradients::operator+=(const Gradients& other) {
  for (std::size_t i = 0; i < tensors.size(); ++i) tensors[i] += other.tensors[i];
  return *this;
}

double Gradients::squared_norm() const {
  double s = 0.0;
  for (const auto& t : tensors) s += t.squaredNorm();
  return s;
}

Mat Initializer::normal(Eigen::Index rows, Eigen::Index cols, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng_);
  return m;
}

Mat Initializer::scaled(Eigen::Index fan_in, Eigen::Index cols, double gain) {
  return normal(fan_in, cols, std::sqrt(gain / static_cast<double>(fan_in)));
}

// ---------------------------------------------------------------- Linear

Linear::Linear(ParameterSet& params, Initializer& init, const std::string& name, int in, int out,
               double gain) {
  weight = params.add(name + ".weight", init.scaled(in, out, gain));
  bias = params.add(name + ".bias", Mat::Zero(1, out));
}

Mat Linear::forward(const ParameterSet& params, const Mat& x) const {
  Mat y = x * params[weight].value;
  y.rowwise() += params[bias].value.row(0);
  return y;
}

Mat Linear::backward(const ParameterSet& params, const Mat& x, const Mat& dy,
                     Gradients& grads) const {
  if (!params[weight].frozen) grads.tensors[weight].noalias() += x.transpose() * dy;
  if (!params[bias].frozen) grads.tensors[bias].row(0) += dy.colwise().sum();
  return dy * params[weight].value.transpose();
}

// ------------------------------------------------------------- LayerNorm

LayerNorm::LayerNorm(ParameterSet& params, const std::string& name, int dim) {
  gamma = params.add(name + ".gamma", Mat::Ones(1, dim));
  beta = params.add(name + ".beta", Mat::Zero(1, dim));
}

Mat LayerNorm::forward(const ParameterSet& params, const Mat& x, Cache& cache) const {
  const auto n = x.cols();
  cache.normalized.resize(x.rows(), n);
  cache.inv_std.resize(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().mean();
    const double inv = 1.0 / std::sqrt(var + kEps);
    cache.inv_std(r) = inv;
    cache.normalized.row(r) = (x.row(r).array() - mean) * inv;
  }
  Mat y = cache.normalized.array().rowwise() * params[gamma].value.row(0).array();
  y.rowwise() += params[beta].value.row(0);
  return y;
}

Mat LayerNorm::backward(const ParameterSet& params, const Cache& cache, const Mat& dy,
                        Gradients& grads) const {
  if (!params[gamma].frozen)
    grads.tensors[gamma].row(0) += (dy.array() * cache.normalized.array()).colwise().sum().matrix();
  if (!params[beta].frozen) grads.tensors[beta].row(0) += dy.colwise().sum();
  const Mat dxhat = dy.array().rowwise() * params[gamma].value.row(0).array();
  Mat dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double mean_d = dxhat.row(r).mean();
    const double mean_dx = dxhat.row(r).dot(cache.normalized.row(r)) / dy.cols();
    dx.row(r) = cache.inv_std(r) *
                (dxhat.row(r).array() - mean_d - cache.normalized.row(r).array() * mean_dx).matrix();
  }
  return dx;
}

// ------------------------------------------------------------ activations

Mat gelu(const Mat& x) {
  return x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)); });
}

Mat gelu_backward(const Mat& x, const Mat& dy) {
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  Mat d = x.unaryExpr([&](double v) {
    const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
    return cdf + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
  });
  return d.cwiseProduct(dy);
}

Mat softmax_rows(const Mat& logits) {
  Mat out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    out.row(r) = (logits.row(r).array() - mx).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

// ---------------------------------------------------------- SelfAttention

SelfAttention::SelfAttention(ParameterSet& params, Initializer& init, const std::string& name,
                             int dim_, int heads_)
    : qkv(params, init, name + ".qkv", dim_, 3 * dim_),
      out(params, init, name + ".out", dim_, dim_),
      dim(dim_),
      heads(heads_) {}

Mat SelfAttention::forward(const ParameterSet& params, const Mat& x, Cache& cache) const {
  const Eigen::Index T = x.rows();
  const int d = dim / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  cache.input = x;
  cache.qkv = qkv.forward(params, x);
  cache.probs.resize(heads);
  cache.merged.resize(T, dim);
  for (int h = 0; h < heads; ++h) {
    const auto q = cache.qkv.middleCols(h * d, d);
    const auto k = cache.qkv.middleCols(dim + h * d, d);
    const auto v = cache.qkv.middleCols(2 * dim + h * d, d);
    Mat scores = (q * k.transpose()) * scale;
    cache.probs[h] = softmax_rows(scores);
    cache.merged.middleCols(h * d, d).noalias() = cache.probs[h] * v;
  }
  return out.forward(params, cache.merged);
}

Mat SelfAttention::backward(const ParameterSet& params, const Cache& cache, const Mat& dy,
                            Gradients& grads) const {
  const Eigen::Index T = cache.input.rows();
  const int d = dim / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  const Mat dmerged = out.backward(params, cache.merged, dy, grads);
  Mat dqkv(T, 3 * dim);
  for (int h = 0; h < heads; ++h) {
    const auto q = cache.qkv.middleCols(h * d, d);
    const auto k = cache.qkv.middleCols(dim + h * d, d);
    const auto v = cache.qkv.middleCols(2 * dim + h * d, d);
    const Mat& a = cache.probs[h];
    const auto dout = dmerged.middleCols(h * d, d);
    const Mat da = dout * v.transpose();
    dqkv.middleCols(2 * dim + h * d, d).noalias() = a.transpose() * dout;
    Mat ds = a.cwiseProduct(da);
    const Eigen::VectorXd row_dot = ds.rowwise().sum();
    ds -= (a.array().colwise() * row_dot.array()).matrix();
    dqkv.middleCols(h * d, d).noalias() = (ds * k) * scale;
    dqkv.middleCols(dim + h * d, d).noalias() = (ds.transpose() * q) * scale;
  }
  return qkv.backward(params, cache.input, dqkv, grads);
}

// -------------------------------------------------------------------- Mlp

Mlp::Mlp(ParameterSet& params, Initializer& init, const std::string& name, int dim, int hidden)
    : fc1(params, init, name + ".fc1", dim, hidden), fc2(params, init, name + ".fc2", hidden, dim) {}

Mat Mlp::forward(const ParameterSet& params, const Mat& x, Cache& cache) const {
  cache.input = x;
  cache.hidden = fc1.forward(params, x);
  cache.activated = gelu(cache.hidden);
  return fc2.forward(params, cache.activated);
}

Mat Mlp::backward(const ParameterSet& params, const Cache& cache, const Mat& dy,
                  Gradients& grads) const {
  const Mat dact = fc2.backward(params, cache.activated, dy, grads);
  return fc1.backward(params, cache.input, gelu_backward(cache.hidden, dact), grads);
}

// ------------------------------------------------------- TransformerBlock

TransformerBlock::TransformerBlock(ParameterSet& params, Initializer& init, const std::string& name,
                                   int dim, int heads, double mlp_ratio)
    : ln1(params, name + ".ln1", dim),
      attn(params, init, name + ".attn", dim, heads),
      ln2(params, name + ".ln2", dim),
      mlp(params, init, name + ".mlp", dim,
          std::max(1, static_cast<int>(std::lround(dim * mlp_ratio)))) {}

Mat TransformerBlock::forward(const ParameterSet& params, const Mat& x, Cache& cache) const {
  Mat h = x + attn.forward(params, ln1.forward(params, x, cache.ln1), cache.attn);
  return h + mlp.forward(params, ln2.forward(params, h, cache.ln2), cache.mlp);
}

Mat TransformerBlock::backward(const ParameterSet& params, const Cache& cache, const Mat& dy,
                               Gradients& grads) const {
  Mat dh = dy + ln2.backward(params, cache.ln2, mlp.backward(params, cache.mlp, dy, grads), grads);
  return dh + ln1.backward(params, cache.ln1, attn.backward(params, cache.attn, dh, grads), grads);
}

std::vector<std::size_t> TransformerBlock::parameter_indices() const {
  return {ln1.gamma,      ln1.beta,     attn.qkv.weight, attn.qkv.bias, attn.out.weight,
          attn.out.bias,  ln2.gamma,    ln2.beta,        mlp.fc1.weight, mlp.fc1.bias,
          mlp.fc2.weight, mlp.fc2.bias};
}

// ---------------------------------------------------------- convolutions

std::size_t conv_output_length(std::size_t length, std::size_t kernel, std::size_t stride,
                               std::size_t pad) {
  if (stride == 0) throw ContractError("convolution stride must be >= 1");
  if (length + 2 * pad < kernel)
    throw DimensionError("input length " + std::to_string(length) +
                         " is shorter than the receptive field (kernel " + std::to_string(kernel) +
                         ", pad " + std::to_string(pad) + ")");
  return (length + 2 * pad - kernel) / stride + 1;
}

Conv2d::Conv2d(ParameterSet& params, Initializer& init, const std::string& name, int in_ch,
               int out_ch, int kernel_, int stride_, int pad_, double gain)
    : in_channels(in_ch), out_channels(out_ch), kernel(kernel_), stride(stride_), pad(pad_) {
  weight = params.add(name + ".weight", init.scaled(kernel * kernel * in_ch, out_ch, gain));
  bias = params.add(name + ".bias", Mat::Zero(1, out_ch));
}

Conv2d::Shape Conv2d::output_shape(const Shape& in) const {
  return {in.batch, conv_output_length(in.height, kernel, stride, pad),
          conv_output_length(in.width, kernel, stride, pad),
          static_cast<std::size_t>(out_channels)};
}

Mat Conv2d::forward(const ParameterSet& params, const Mat& x, const Shape& in, Cache& cache) const {
  if (in.channels != static_cast<std::size_t>(in_channels) ||
      static_cast<std::size_t>(x.rows()) != in.batch * in.height * in.width)
    throw DimensionError("conv2d input does not match (batch, height, width, channels)");
  const Shape o = output_shape(in);
  const Eigen::Index C = in_channels;
  cache.in = in;
  cache.columns.setZero(o.batch * o.height * o.width, kernel * kernel * C);
  for (std::size_t n = 0; n < o.batch; ++n) {
    for (std::size_t oy = 0; oy < o.height; ++oy) {
      for (std::size_t ox = 0; ox < o.width; ++ox) {
        const Eigen::Index row = static_cast<Eigen::Index>((n * o.height + oy) * o.width + ox);
        for (int ky = 0; ky < kernel; ++ky) {
          const long iy = static_cast<long>(oy * stride) - pad + ky;
          if (iy < 0 || iy >= static_cast<long>(in.height)) continue;
          for (int kx = 0; kx < kernel; ++kx) {
            const long ix = static_cast<long>(ox * stride) - pad + kx;
            if (ix < 0 || ix >= static_cast<long>(in.width)) continue;
            const Eigen::Index src = static_cast<Eigen::Index>((n * in.height + iy) * in.width + ix);
            cache.columns.block(row, (ky * kernel + kx) * C, 1, C) = x.row(src);
          }
        }
      }
    }
  }
  Mat y = cache.columns * params[weight].value;
  y.rowwise() += params[bias].value.row(0);
  return y;
}

Mat Conv2d::backward(const ParameterSet& params, const Cache& cache, const Mat& dy,
                     Gradients& grads, bool need_input_grad) const {
  if (!params[weight].frozen) grads.tensors[weight].noalias() += cache.columns.transpose() * dy;
  if (!params[bias].frozen) grads.tensors[bias].row(0) += dy.colwise().sum();
  if (!need_input_grad) return {};
  const Mat dcols = dy * params[weight].value.transpose();
  const Shape& in = cache.in;
  const Shape o = output_shape(in);
  const Eigen::Index C = in_channels;
  Mat dx = Mat::Zero(in.batch * in.height * in.width, C);
  for (std::size_t n = 0; n < o.batch; ++n) {
    for (std::size_t oy = 0; oy < o.height; ++oy) {
      for (std::size_t ox = 0; ox < o.width; ++ox) {
        const Eigen::Index row = static_cast<Eigen::Index>((n * o.height + oy) * o.width + ox);
        for (int ky = 0; ky < kernel; ++ky) {
          const long iy = static_cast<long>(oy * stride) - pad + ky;
          if (iy < 0 || iy >= static_cast<long>(in.height)) continue;
          for (int kx = 0; kx < kernel; ++kx) {
            const long ix = static_cast<long>(ox * stride) - pad + kx;
            if (ix < 0 || ix >= static_cast<long>(in.width)) continue;
            const Eigen::Index dst = static_cast<Eigen::Index>((n * in.height + iy) * in.width + ix);
            dx.row(dst) += dcols.block(row, (ky * kernel + kx) * C, 1, C);
          }
        }
      }
    }
  }
  return dx;
}

Conv1d::Conv1d(ParameterSet& params, Initializer& init, const std::string& name, int in_ch,
               int out_ch, int kernel_, int stride_, int pad_, double gain)
    : in_channels(in_ch), out_channels(out_ch), kernel(kernel_), stride(stride_), pad(pad_) {
  weight = params.add(name + ".weight", init.scaled(kernel * in_ch, out_ch, gain));
  bias = params.add(name + ".bias", Mat::Zero(1, out_ch));
}

Mat Conv1d::forward(const ParameterSet& params, const Mat& x, Cache& cache) const {
  if (x.cols() != in_channels)
    throw DimensionError("conv1d expects " + std::to_string(in_channels) + " channels, got " +
                         std::to_string(x.cols()));
  const std::size_t L = static_cast<std::size_t>(x.rows());
  const std::size_t out_len = output_length(L);
  cache.length = L;
  cache.columns.setZero(out_len, kernel * in_channels);
  for (std::size_t t = 0; t < out_len; ++t) {
    for (int k = 0; k < kernel; ++k) {
      const long src = static_cast<long>(t * stride) - pad + k;
      if (src < 0 || src >= static_cast<long>(L)) continue;
      cache.columns.block(t, k * in_channels, 1, in_channels) = x.row(src);
    }
  }
  Mat y = cache.columns * params[weight].value;
  y.rowwise() += params[bias].value.row(0);
  return y;
}

Mat Conv1d::backward(const ParameterSet& params, const Cache& cache, const Mat& dy,
                     Gradients& grads, bool need_input_grad) const {
  if (!params[weight].frozen) grads.tensors[weight].noalias() += cache.columns.transpose() * dy;
  if (!params[bias].frozen) grads.tensors[bias].row(0) += dy.colwise().sum();
  if (!need_input_grad) return {};
  const Mat dcols = dy * params[weight].value.transpose();
  Mat dx = Mat::Zero(cache.length, in_channels);
  for (Eigen::Index t = 0; t < dy.rows(); ++t) {
    for (int k = 0; k < kernel; ++k) {
      const long src = static_cast<long>(t * stride) - pad + k;
      if (src < 0 || src >= static_cast<long>(cache.length)) continue;
      dx.row(src) += dcols.block(t, k * in_channels, 1, in_channels);
    }
  }
  return dx;
}

}  // namespace pairnet
