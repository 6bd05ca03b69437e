// Convolutional autoencoder over 44x64 trajectory images, written from
// scratch: valid convolutions, transposed convolutions, fully connected
// layers, ReLU / sigmoid, binary cross-entropy and Adam.
//
// Architecture (input zero-padded to 44x64x1, rows = video index, cols = day):
//   Conv1   44x64x1   -> 22x32x16   k 2x2 s2
//   Conv2   22x32x16  -> 11x16x32   k 2x2 s2
//   Conv3   11x16x32  -> 5x8x64     k 2x2 s2
//   Conv4   5x8x64    -> 2x4x128    k 2x2 s2
//   Fc1     1024      -> 10         (bottleneck, linear)
//   Fc2     10        -> 1024
//   ConvT1  2x4x128   -> 5x8x64     k 3x2 s2
//   ConvT2  5x8x64    -> 11x16x32   k 3x2 s2
//   ConvT3  11x16x32  -> 22x32x16   k 2x2 s2
//   ConvT4  22x32x16  -> 44x64x1    k 2x2 s2, sigmoid
// Every other layer is followed by ReLU.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <type_traits>
#include <variant>
#include <optional>
#include <vector>

#include "dattk/core.hpp"
#include "dattk/io.hpp"

namespace dattk::cnn {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Shape {
  int rows = 1;
  int cols = 1;
  int channels = 1;

  std::size_t size() const {
    return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) *
           static_cast<std::size_t>(channels);
  }
  std::string str() const {
    return std::to_string(rows) + "x" + std::to_string(cols) + "x" + std::to_string(channels);
  }
  friend bool operator==(const Shape&, const Shape&) = default;
};

/// Row-major (row, col, channel) tensor; flat vectors use shape 1x1xlen.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(s), data(s.size(), 0.0) {}
  static Tensor flat(std::size_t len) { return Tensor(Shape{1, 1, static_cast<int>(len)}); }

  double& at(int r, int c, int ch) {
    return data[(static_cast<std::size_t>(r) * shape.cols + c) * shape.channels + ch];
  }
  double at(int r, int c, int ch) const {
    return data[(static_cast<std::size_t>(r) * shape.cols + c) * shape.channels + ch];
  }
};

inline constexpr int kImageRows = 44;
inline constexpr int kImageCols = 64;
inline constexpr int kCodeSize = 10;

struct Image {
  Tensor pixels;
  std::size_t dropped_entries = 0;  // accesses on day >= 64
};

/// Rasterizes a video trajectory: pixel (component, day) is 1 for every access.
inline Image dat_to_image(const Dat& dat) {
  Image img{Tensor(Shape{kImageRows, kImageCols, 1}), 0};
  for (const Entry& e : dat.entries()) {
    if (e.component >= kImageRows)
      throw ShapeError("component index " + std::to_string(e.component) +
                       " does not fit the " + std::to_string(kImageRows) + "-row input");
    if (e.day >= kImageCols) {
      ++img.dropped_entries;
      continue;
    }
    img.pixels.at(e.component, e.day, 0) = 1.0;
  }
  return img;
}

// ---------------------------------------------------------------------------
// Layers. Each layer owns its weights; gradients are written into a separate
// buffer of the same layout so several workers can share one model.

struct ParamShape {
  std::size_t weights = 0;
  std::size_t bias = 0;
};

/// Valid (unpadded) strided convolution. Weights laid out [out][kr][kc][in].
struct Conv2D {
  std::string name;
  int in_channels, out_channels, kernel_rows, kernel_cols, stride;

  ParamShape params() const {
    return {static_cast<std::size_t>(out_channels * kernel_rows * kernel_cols * in_channels),
            static_cast<std::size_t>(out_channels)};
  }

  Shape output_shape(const Shape& in) const {
    if (in.channels != in_channels || in.rows < kernel_rows || in.cols < kernel_cols)
      throw ShapeError(name + ": input " + in.str() + " incompatible with kernel " +
                       std::to_string(kernel_rows) + "x" + std::to_string(kernel_cols) + "x" +
                       std::to_string(in_channels));
    return {(in.rows - kernel_rows) / stride + 1, (in.cols - kernel_cols) / stride + 1,
            out_channels};
  }

  Tensor forward(const Tensor& in, std::span<const double> w, std::span<const double> b) const {
    Tensor out(output_shape(in.shape));
    const int ci = in_channels;
    for (int r = 0; r < out.shape.rows; ++r)
      for (int c = 0; c < out.shape.cols; ++c)
        for (int o = 0; o < out_channels; ++o) {
          double sum = b[static_cast<std::size_t>(o)];
          for (int kr = 0; kr < kernel_rows; ++kr)
            for (int kc = 0; kc < kernel_cols; ++kc) {
              const double* x = &in.data[(static_cast<std::size_t>(r * stride + kr) * in.shape.cols +
                                          static_cast<std::size_t>(c * stride + kc)) * ci];
              const double* wk =
                  &w[((static_cast<std::size_t>(o) * kernel_rows + kr) * kernel_cols + kc) * ci];
              for (int i = 0; i < ci; ++i) sum += x[i] * wk[i];
            }
          out.at(r, c, o) = sum;
        }
    return out;
  }

  /// Accumulates weight / bias gradients and returns dL/d(input).
  Tensor backward(const Tensor& in, const Tensor& grad_out, std::span<const double> w,
                  std::span<double> gw, std::span<double> gb) const {
    Tensor grad_in(in.shape);
    const int ci = in_channels;
    for (int r = 0; r < grad_out.shape.rows; ++r)
      for (int c = 0; c < grad_out.shape.cols; ++c)
        for (int o = 0; o < out_channels; ++o) {
          const double g = grad_out.at(r, c, o);
          if (g == 0.0) continue;
          gb[static_cast<std::size_t>(o)] += g;
          for (int kr = 0; kr < kernel_rows; ++kr)
            for (int kc = 0; kc < kernel_cols; ++kc) {
              const std::size_t xoff = (static_cast<std::size_t>(r * stride + kr) * in.shape.cols +
                                        static_cast<std::size_t>(c * stride + kc)) * ci;
              const std::size_t woff =
                  ((static_cast<std::size_t>(o) * kernel_rows + kr) * kernel_cols + kc) * ci;
              for (int i = 0; i < ci; ++i) {
                gw[woff + i] += g * in.data[xoff + i];
                grad_in.data[xoff + i] += g * w[woff + i];
              }
            }
        }
    return grad_in;
  }
};

/// Strided transposed convolution, output (in - 1) * stride + kernel.
/// Weights laid out [in][kr][kc][out].
struct ConvTranspose2D {
  std::string name;
  int in_channels, out_channels, kernel_rows, kernel_cols, stride;

  ParamShape params() const {
    return {static_cast<std::size_t>(in_channels * kernel_rows * kernel_cols * out_channels),
            static_cast<std::size_t>(out_channels)};
  }

  Shape output_shape(const Shape& in) const {
    if (in.channels != in_channels)
      throw ShapeError(name + ": input " + in.str() + " has " + std::to_string(in.channels) +
                       " channels, expected " + std::to_string(in_channels));
    return {(in.rows - 1) * stride + kernel_rows, (in.cols - 1) * stride + kernel_cols,
            out_channels};
  }

  Tensor forward(const Tensor& in, std::span<const double> w, std::span<const double> b) const {
    Tensor out(output_shape(in.shape));
    const int co = out_channels;
    for (std::size_t p = 0; p < static_cast<std::size_t>(out.shape.rows) * out.shape.cols; ++p)
      for (int o = 0; o < co; ++o) out.data[p * co + o] = b[static_cast<std::size_t>(o)];
    for (int r = 0; r < in.shape.rows; ++r)
      for (int c = 0; c < in.shape.cols; ++c)
        for (int i = 0; i < in_channels; ++i) {
          const double a = in.at(r, c, i);
          if (a == 0.0) continue;
          for (int kr = 0; kr < kernel_rows; ++kr)
            for (int kc = 0; kc < kernel_cols; ++kc) {
              double* y = &out.data[(static_cast<std::size_t>(r * stride + kr) * out.shape.cols +
                                     static_cast<std::size_t>(c * stride + kc)) * co];
              const double* wk =
                  &w[((static_cast<std::size_t>(i) * kernel_rows + kr) * kernel_cols + kc) * co];
              for (int o = 0; o < co; ++o) y[o] += a * wk[o];
            }
        }
    return out;
  }

  Tensor backward(const Tensor& in, const Tensor& grad_out, std::span<const double> w,
                  std::span<double> gw, std::span<double> gb) const {
    Tensor grad_in(in.shape);
    const int co = out_channels;
    for (std::size_t p = 0; p < static_cast<std::size_t>(grad_out.shape.rows) * grad_out.shape.cols;
         ++p)
      for (int o = 0; o < co; ++o) gb[static_cast<std::size_t>(o)] += grad_out.data[p * co + o];
    for (int r = 0; r < in.shape.rows; ++r)
      for (int c = 0; c < in.shape.cols; ++c)
        for (int i = 0; i < in_channels; ++i) {
          const double a = in.at(r, c, i);
          double acc = 0.0;
          for (int kr = 0; kr < kernel_rows; ++kr)
            for (int kc = 0; kc < kernel_cols; ++kc) {
              const double* g =
                  &grad_out.data[(static_cast<std::size_t>(r * stride + kr) * grad_out.shape.cols +
                                  static_cast<std::size_t>(c * stride + kc)) * co];
              const std::size_t woff =
                  ((static_cast<std::size_t>(i) * kernel_rows + kr) * kernel_cols + kc) * co;
              for (int o = 0; o < co; ++o) {
                acc += g[o] * w[woff + o];
                gw[woff + o] += a * g[o];
              }
            }
          grad_in.at(r, c, i) = acc;
        }
    return grad_in;
  }
};

/// Fully connected layer on the flattened input. Weights laid out [out][in].
struct Dense {
  std::string name;
  int inputs, outputs;
  Shape out_shape;  // shape given to the output (1x1xoutputs unless reshaped)

  ParamShape params() const {
    return {static_cast<std::size_t>(inputs * outputs), static_cast<std::size_t>(outputs)};
  }

  Shape output_shape(const Shape& in) const {
    if (in.size() != static_cast<std::size_t>(inputs))
      throw ShapeError(name + ": input " + in.str() + " has " + std::to_string(in.size()) +
                       " values, expected " + std::to_string(inputs));
    return out_shape;
  }

  Tensor forward(const Tensor& in, std::span<const double> w, std::span<const double> b) const {
    Tensor out(output_shape(in.shape));
    for (int o = 0; o < outputs; ++o) {
      double sum = b[static_cast<std::size_t>(o)];
      const double* wr = &w[static_cast<std::size_t>(o) * inputs];
      for (int i = 0; i < inputs; ++i) sum += wr[i] * in.data[static_cast<std::size_t>(i)];
      out.data[static_cast<std::size_t>(o)] = sum;
    }
    return out;
  }

  Tensor backward(const Tensor& in, const Tensor& grad_out, std::span<const double> w,
                  std::span<double> gw, std::span<double> gb) const {
    Tensor grad_in(in.shape);
    for (int o = 0; o < outputs; ++o) {
      const double g = grad_out.data[static_cast<std::size_t>(o)];
      gb[static_cast<std::size_t>(o)] += g;
      if (g == 0.0) continue;
      const std::size_t off = static_cast<std::size_t>(o) * inputs;
      for (int i = 0; i < inputs; ++i) {
        gw[off + i] += g * in.data[static_cast<std::size_t>(i)];
        grad_in.data[static_cast<std::size_t>(i)] += g * w[off + i];
      }
    }
    return grad_in;
  }
};

inline Tensor relu(Tensor t) {
  for (double& v : t.data) v = v > 0.0 ? v : 0.0;
  return t;
}

/// Gradient of ReLU given its input `pre`.
inline Tensor relu_backward(const Tensor& pre, Tensor grad) {
  for (std::size_t i = 0; i < grad.data.size(); ++i)
    if (!(pre.data[i] > 0.0)) grad.data[i] = 0.0;
  return grad;
}

inline double sigmoid(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

inline Tensor sigmoid(Tensor t) {
  for (double& v : t.data) v = sigmoid(v);
  return t;
}

/// Gradient of the sigmoid given its output `out`.
inline Tensor sigmoid_backward(const Tensor& out, Tensor grad) {
  for (std::size_t i = 0; i < grad.data.size(); ++i)
    grad.data[i] *= out.data[i] * (1.0 - out.data[i]);
  return grad;
}

// ---------------------------------------------------------------------------
// Network

enum class Activation { relu, linear, sigmoid };

struct LayerSpec {
  std::variant<Conv2D, ConvTranspose2D, Dense> layer;
  Activation activation;

  const std::string& name() const {
    return std::visit([](const auto& l) -> const std::string& { return l.name; }, layer);
  }
  ParamShape params() const {
    return std::visit([](const auto& l) { return l.params(); }, layer);
  }
  Shape output_shape(const Shape& in) const {
    return std::visit([&](const auto& l) { return l.output_shape(in); }, layer);
  }
};

/// The fixed ten-layer architecture.
inline std::vector<LayerSpec> network_spec() {
  return {
      {Conv2D{"conv1", 1, 16, 2, 2, 2}, Activation::relu},
      {Conv2D{"conv2", 16, 32, 2, 2, 2}, Activation::relu},
      {Conv2D{"conv3", 32, 64, 2, 2, 2}, Activation::relu},
      {Conv2D{"conv4", 64, 128, 2, 2, 2}, Activation::relu},
      {Dense{"fc1", 1024, kCodeSize, Shape{1, 1, kCodeSize}}, Activation::linear},
      {Dense{"fc2", kCodeSize, 1024, Shape{2, 4, 128}}, Activation::relu},
      {ConvTranspose2D{"convT1", 128, 64, 3, 2, 2}, Activation::relu},
      {ConvTranspose2D{"convT2", 64, 32, 3, 2, 2}, Activation::relu},
      {ConvTranspose2D{"convT3", 32, 16, 2, 2, 2}, Activation::relu},
      {ConvTranspose2D{"convT4", 16, 1, 2, 2, 2}, Activation::sigmoid},
  };
}

inline constexpr std::size_t kBottleneckLayer = 4;  // fc1

/// Output shape after each layer for a given input shape.
inline std::vector<Shape> shape_chain(const std::vector<LayerSpec>& layers, Shape input) {
  std::vector<Shape> chain;
  for (const auto& l : layers) {
    input = l.output_shape(input);
    chain.push_back(input);
  }
  return chain;
}

/// Expected per-layer output shapes for the 44x64x1 input.
inline const std::vector<Shape>& reference_shape_chain() {
  static const std::vector<Shape> chain{
      {22, 32, 16}, {11, 16, 32}, {5, 8, 64}, {2, 4, 128}, {1, 1, 10},
      {2, 4, 128},  {5, 8, 64},   {11, 16, 32}, {22, 32, 16}, {44, 64, 1}};
  return chain;
}

/// One buffer per layer holding weights followed by biases.
struct Parameters {
  std::vector<std::vector<double>> layers;

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.size();
    return n;
  }
  void zero() {
    for (auto& l : layers) std::fill(l.begin(), l.end(), 0.0);
  }
  void add(const Parameters& other) {
    for (std::size_t i = 0; i < layers.size(); ++i)
      for (std::size_t j = 0; j < layers[i].size(); ++j) layers[i][j] += other.layers[i][j];
  }
  friend bool operator==(const Parameters&, const Parameters&) = default;
};

enum class Loss { bce, mse };

inline constexpr double kProbClip = 1e-7;

/// Mean per-pixel loss between sigmoid output `y` and target `x`.
inline double pixel_loss(const Tensor& y, const Tensor& x, Loss loss) {
  double total = 0.0;
  for (std::size_t i = 0; i < y.data.size(); ++i) {
    if (loss == Loss::bce) {
      const double p = std::clamp(y.data[i], kProbClip, 1.0 - kProbClip);
      total -= x.data[i] * std::log(p) + (1.0 - x.data[i]) * std::log(1.0 - p);
    } else {
      const double d = y.data[i] - x.data[i];
      total += d * d;
    }
  }
  return total / static_cast<double>(y.data.size());
}

class Autoencoder {
 public:
  /// Builds the network and checks its shape chain against the reference.
  Autoencoder() : layers_(network_spec()) {
    const auto chain = shape_chain(layers_, Shape{kImageRows, kImageCols, 1});
    if (chain != reference_shape_chain()) throw ShapeError("autoencoder shape chain mismatch");
    params_.layers.resize(layers_.size());
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto p = layers_[i].params();
      params_.layers[i].assign(p.weights + p.bias, 0.0);
    }
  }

  /// He-normal weights (std sqrt(2 / fan_in)), zero biases.
  static Autoencoder he_initialized(std::uint64_t seed) {
    Autoencoder m;
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < m.layers_.size(); ++i) {
      const double fan_in = std::visit(
          [](const auto& l) -> double {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, Dense>) return l.inputs;
            else return static_cast<double>(l.in_channels * l.kernel_rows * l.kernel_cols);
          },
          m.layers_[i].layer);
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
      const auto p = m.layers_[i].params();
      for (std::size_t k = 0; k < p.weights; ++k) m.params_.layers[i][k] = dist(rng);
    }
    return m;
  }

  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  const Parameters& parameters() const noexcept { return params_; }
  Parameters& parameters() noexcept { return params_; }

  Parameters zero_gradients() const {
    Parameters g = params_;
    g.zero();
    return g;
  }

  /// Activations kept for backpropagation: pre[i] is the input to layer i,
  /// z[i] its linear output, post[i] its activated output.
  struct Trace {
    std::vector<Tensor> input;
    std::vector<Tensor> linear;
    std::vector<Tensor> output;
  };

  Trace forward_trace(const Tensor& image) const {
    check_input(image);
    Trace t;
    Tensor x = image;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto [w, b] = split(i);
      Tensor z = std::visit([&](const auto& l) { return l.forward(x, w, b); }, layers_[i].layer);
      Tensor y = activate(z, layers_[i].activation);
      t.input.push_back(std::move(x));
      t.linear.push_back(std::move(z));
      x = y;
      t.output.push_back(std::move(y));
    }
    return t;
  }

  Tensor reconstruct(const Tensor& image) const { return forward_trace(image).output.back(); }

  /// Bottleneck code (linear output of fc1).
  std::vector<double> encode(const Tensor& image) const {
    check_input(image);
    Tensor x = image;
    for (std::size_t i = 0; i <= kBottleneckLayer; ++i) {
      const auto [w, b] = split(i);
      x = std::visit([&](const auto& l) { return l.forward(x, w, b); }, layers_[i].layer);
      x = activate(std::move(x), layers_[i].activation);
    }
    return x.data;
  }

  /// Loss of one image; gradients of that loss are added to `grads`.
  double accumulate_gradients(const Tensor& image, Loss loss, double scale,
                              Parameters& grads) const {
    const Trace t = forward_trace(image);
    const Tensor& y = t.output.back();
    const double value = pixel_loss(y, image, loss);
    const double n = static_cast<double>(y.data.size());
    // dL/dz at the sigmoid output. For BCE this is (y - x) / n.
    Tensor grad(y.shape);
    for (std::size_t i = 0; i < y.data.size(); ++i) {
      const double d = y.data[i] - image.data[i];
      grad.data[i] = loss == Loss::bce ? d / n : 2.0 * d * y.data[i] * (1.0 - y.data[i]) / n;
      grad.data[i] *= scale;
    }
    for (std::size_t i = layers_.size(); i-- > 0;) {
      if (i + 1 < layers_.size()) grad = activation_backward(t, i, std::move(grad));
      const auto [w, b] = split(i);
      auto& g = grads.layers[i];
      const auto p = layers_[i].params();
      std::span<double> gw(g.data(), p.weights);
      std::span<double> gb(g.data() + p.weights, p.bias);
      grad = std::visit([&](const auto& l) { return l.backward(t.input[i], grad, w, gw, gb); },
                        layers_[i].layer);
    }
    return value;
  }

  double loss(const Tensor& image, Loss l = Loss::bce) const {
    return pixel_loss(reconstruct(image), image, l);
  }

 private:
  std::pair<std::span<const double>, std::span<const double>> split(std::size_t i) const {
    const auto p = layers_[i].params();
    const auto& v = params_.layers[i];
    return {std::span<const double>(v.data(), p.weights),
            std::span<const double>(v.data() + p.weights, p.bias)};
  }

  static Tensor activate(Tensor z, Activation a) {
    switch (a) {
      case Activation::relu: return relu(std::move(z));
      case Activation::sigmoid: return sigmoid(std::move(z));
      case Activation::linear: return z;
    }
    return z;
  }

  Tensor activation_backward(const Trace& t, std::size_t i, Tensor grad) const {
    switch (layers_[i].activation) {
      case Activation::relu: return relu_backward(t.linear[i], std::move(grad));
      case Activation::sigmoid: return sigmoid_backward(t.output[i], std::move(grad));
      case Activation::linear: return grad;
    }
    return grad;
  }

  static void check_input(const Tensor& image) {
    if (image.shape != Shape{kImageRows, kImageCols, 1})
      throw ShapeError("autoencoder input must be 44x64x1, got " + image.shape.str());
  }

  std::vector<LayerSpec> layers_;
  Parameters params_;
};

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  int epochs = 50;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  Loss loss = Loss::bce;
  /// Stop after this many optimizer steps (0 = no cap).
  std::int64_t max_steps = 0;
  /// Workers for data-parallel gradient accumulation. With threads > 1 each
  /// worker sums its share of the batch and the partial sums are added in
  /// worker order, so results are reproducible for a fixed thread count but
  /// may differ from the single-threaded run in low-order bits.
  unsigned threads = 1;
};

struct TrainResult {
  Autoencoder model;
  std::vector<double> epoch_loss;  // mean training loss per epoch
  std::int64_t steps = 0;
};

class Adam {
 public:
  Adam(const Parameters& shape, const TrainConfig& cfg) : cfg_(cfg), m_(shape), v_(shape) {
    m_.zero();
    v_.zero();
  }

  void step(Parameters& params, const Parameters& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t l = 0; l < params.layers.size(); ++l)
      for (std::size_t k = 0; k < params.layers[l].size(); ++k) {
        const double g = grads.layers[l][k];
        double& m = m_.layers[l][k];
        double& v = v_.layers[l][k];
        m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
        v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g * g;
        params.layers[l][k] -=
            cfg_.learning_rate * (m / c1) / (std::sqrt(v / c2) + cfg_.epsilon);
      }
  }

 private:
  TrainConfig cfg_;
  Parameters m_;
  Parameters v_;
  std::int64_t t_ = 0;
};

/// Mini-batch Adam on the reconstruction loss. Batches are drawn from a
/// per-epoch shuffle seeded by `cfg.seed`.
inline TrainResult train(std::span<const Tensor> images, const TrainConfig& cfg,
                         std::optional<Autoencoder> initial = std::nullopt) {
  if (images.empty()) throw TrainingError("train: need at least one image");
  if (cfg.epochs <= 0 || cfg.batch_size <= 0 || !(cfg.learning_rate > 0.0))
    throw TrainingError("train: epochs, batch_size and learning_rate must be positive");

  TrainResult out{initial ? *initial : Autoencoder::he_initialized(cfg.seed), {}, 0};
  Adam adam(out.model.parameters(), cfg);
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);
  const unsigned workers = std::max(1u, cfg.threads);
  std::vector<Parameters> partial(workers, out.model.zero_gradients());
  Parameters grads = out.model.zero_gradients();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_total = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const double scale = 1.0 / static_cast<double>(end - start);
      std::vector<double> losses(end - start, 0.0);
      auto run = [&](unsigned w) {
        partial[w].zero();
        for (std::size_t k = start + w; k < end; k += workers)
          losses[k - start] =
              out.model.accumulate_gradients(images[order[k]], cfg.loss, scale, partial[w]);
      };
      if (workers == 1) {
        run(0);
      } else {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(run, w);
      }
      grads.zero();
      for (const auto& p : partial) grads.add(p);
      for (double l : losses) {
        if (!std::isfinite(l))
          throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                              std::to_string(out.steps));
        epoch_total += l;
      }
      seen += end - start;
      adam.step(out.model.parameters(), grads);
      ++out.steps;
      if (cfg.max_steps > 0 && out.steps >= cfg.max_steps) break;
    }
    out.epoch_loss.push_back(epoch_total / static_cast<double>(seen));
    if (cfg.max_steps > 0 && out.steps >= cfg.max_steps) break;
  }
  return out;
}

inline double mean_loss(const Autoencoder& model, std::span<const Tensor> images,
                        Loss loss = Loss::bce) {
  double total = 0.0;
  for (const auto& img : images) total += model.loss(img, loss);
  return total / static_cast<double>(images.size());
}

// ---------------------------------------------------------------------------
// Checkpoints: magic "DATCNNAE", u32 version (1), u32 layer count, then per
// layer: string name, u64 value count, values as little-endian doubles
// (weights then biases).

inline constexpr std::string_view kCheckpointMagic = "DATCNNAE";
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::string serialize_model(const Autoencoder& model) {
  io::BinaryWriter w;
  w.bytes(kCheckpointMagic);
  w.integer(kCheckpointVersion);
  w.integer(static_cast<std::uint32_t>(model.layers().size()));
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    w.string(model.layers()[i].name());
    const auto& v = model.parameters().layers[i];
    w.integer(static_cast<std::uint64_t>(v.size()));
    for (double x : v) w.f64(x);
  }
  return w.data();
}

inline Autoencoder deserialize_model(std::string_view data) {
  io::BinaryReader r(data);
  if (r.bytes(kCheckpointMagic.size()) != kCheckpointMagic)
    throw io::FormatError("not an autoencoder checkpoint");
  if (const auto v = r.integer<std::uint32_t>(); v != kCheckpointVersion)
    throw io::FormatError("unsupported checkpoint version " + std::to_string(v));
  Autoencoder model;
  const auto n = r.integer<std::uint32_t>();
  if (n != model.layers().size()) throw io::FormatError("checkpoint layer count mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    const auto name = r.string();
    if (name != model.layers()[i].name())
      throw io::FormatError("checkpoint layer " + std::to_string(i) + " is '" + name +
                            "', expected '" + model.layers()[i].name() + "'");
    auto& v = model.parameters().layers[i];
    if (r.integer<std::uint64_t>() != v.size())
      throw io::FormatError("checkpoint size mismatch in layer '" + name + "'");
    for (double& x : v) x = r.f64();
  }
  if (!r.at_end()) throw io::FormatError("trailing bytes after checkpoint");
  return model;
}

}  // namespace dattk::cnn
