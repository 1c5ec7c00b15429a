#pragma once

// Minimal layer library with explicit forward/backward passes. Activations
// are row-major matrices with one row per timestep (or per pixel, for the
// image convolutions, which use NHWC order: row = (n * H + y) * W + x).

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace pairnet {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Parameter {
  std::string name;
  Mat value;
  bool frozen = false;
};

class ParameterSet {
 public:
  std::size_t add(std::string name, Mat init);

  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  std::size_t size() const { return params_.size(); }

  /// Index of a parameter by its hierarchical name; throws ContractError if absent.
  std::size_t index_of(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::size_t scalar_count() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<Parameter> params_;
};

/// Gradient buffers aligned index-for-index with a ParameterSet.
struct Gradients {
  std::vector<Mat> tensors;

  Gradients() = default;
  explicit Gradients(const ParameterSet& params);
  void zero();
  Gradients& operator+=(const Gradients& other);
  double squared_norm() const;
};

/// Deterministic initializer: variance-scaled normals for weights, zeros for
/// biases.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}
  Mat normal(Eigen::Index rows, Eigen::Index cols, double stddev);
  Mat scaled(Eigen::Index fan_in, Eigen::Index cols, double gain);

 private:
  std::mt19937_64 rng_;
};

class Linear {
 public:
  Linear() = default;
  Linear(ParameterSet& params, Initializer& init, const std::string& name, int in, int out,
         double gain = 1.0);

  Mat forward(const ParameterSet& params, const Mat& x) const;
  /// Accumulates parameter gradients and returns dL/dx.
  Mat backward(const ParameterSet& params, const Mat& x, const Mat& dy, Gradients& grads) const;

  std::size_t weight = 0;
  std::size_t bias = 0;
};

class LayerNorm {
 public:
  struct Cache {
    Mat normalized;
    Eigen::VectorXd inv_std;
  };

  LayerNorm() = default;
  LayerNorm(ParameterSet& params, const std::string& name, int dim);

  Mat forward(const ParameterSet& params, const Mat& x, Cache& cache) const;
  Mat backward(const ParameterSet& params, const Cache& cache, const Mat& dy,
               Gradients& grads) const;

  static constexpr double kEps = 1e-5;
  std::size_t gamma = 0;
  std::size_t beta = 0;
};

Mat gelu(const Mat& x);
Mat gelu_backward(const Mat& x, const Mat& dy);

/// Row-wise softmax with max subtraction.
Mat softmax_rows(const Mat& logits);

class SelfAttention {
 public:
  struct Cache {
    Mat input;
    Mat qkv;
    std::vector<Mat> probs;  // one [T x T] matrix per head
    Mat merged;
  };

  SelfAttention() = default;
  SelfAttention(ParameterSet& params, Initializer& init, const std::string& name, int dim,
                int heads);

  Mat forward(const ParameterSet& params, const Mat& x, Cache& cache) const;
  Mat backward(const ParameterSet& params, const Cache& cache, const Mat& dy,
               Gradients& grads) const;

  Linear qkv;
  Linear out;
  int dim = 0;
  int heads = 1;
};

class Mlp {
 public:
  struct Cache {
    Mat input;
    Mat hidden;
    Mat activated;
  };

  Mlp() = default;
  Mlp(ParameterSet& params, Initializer& init, const std::string& name, int dim, int hidden);

  Mat forward(const ParameterSet& params, const Mat& x, Cache& cache) const;
  Mat backward(const ParameterSet& params, const Cache& cache, const Mat& dy,
               Gradients& grads) const;

  Linear fc1;
  Linear fc2;
};

/// Pre-norm transformer block: x + Attn(LN(x)), then x + MLP(LN(x)).
class TransformerBlock {
 public:
  struct Cache {
    LayerNorm::Cache ln1;
    SelfAttention::Cache attn;
    LayerNorm::Cache ln2;
    Mlp::Cache mlp;
  };

  TransformerBlock() = default;
  TransformerBlock(ParameterSet& params, Initializer& init, const std::string& name, int dim,
                   int heads, double mlp_ratio);

  Mat forward(const ParameterSet& params, const Mat& x, Cache& cache) const;
  Mat backward(const ParameterSet& params, const Cache& cache, const Mat& dy,
               Gradients& grads) const;

  /// Names of every parameter owned by this block.
  std::vector<std::size_t> parameter_indices() const;

  LayerNorm ln1;
  SelfAttention attn;
  LayerNorm ln2;
  Mlp mlp;
};

/// Output length of a convolution along one axis.
std::size_t conv_output_length(std::size_t length, std::size_t kernel, std::size_t stride,
                               std::size_t pad);

/// 2-D convolution over a batch of NHWC images.
class Conv2d {
 public:
  struct Shape {
    std::size_t batch = 0, height = 0, width = 0, channels = 0;
  };
  struct Cache {
    Shape in;
    Mat columns;
  };

  Conv2d() = default;
  Conv2d(ParameterSet& params, Initializer& init, const std::string& name, int in_channels,
         int out_channels, int kernel, int stride, int pad, double gain);

  Shape output_shape(const Shape& in) const;
  Mat forward(const ParameterSet& params, const Mat& x, const Shape& in, Cache& cache) const;
  /// Returns dL/dx, or an empty matrix when `need_input_grad` is false.
  Mat backward(const ParameterSet& params, const Cache& cache, const Mat& dy, Gradients& grads,
               bool need_input_grad = true) const;

  std::size_t weight = 0;
  std::size_t bias = 0;
  int in_channels = 0, out_channels = 0, kernel = 1, stride = 1, pad = 0;
};

/// 1-D convolution over time; input rows are timesteps, columns channels.
class Conv1d {
 public:
  struct Cache {
    std::size_t length = 0;
    Mat columns;
  };

  Conv1d() = default;
  Conv1d(ParameterSet& params, Initializer& init, const std::string& name, int in_channels,
         int out_channels, int kernel, int stride, int pad, double gain);

  std::size_t output_length(std::size_t length) const {
    return conv_output_length(length, kernel, stride, pad);
  }
  Mat forward(const ParameterSet& params, const Mat& x, Cache& cache) const;
  Mat backward(const ParameterSet& params, const Cache& cache, const Mat& dy, Gradients& grads,
               bool need_input_grad = true) const;

  std::size_t weight = 0;
  std::size_t bias = 0;
  int in_channels = 0, out_channels = 0, kernel = 1, stride = 1, pad = 0;
};

}  // namespace pairnet
