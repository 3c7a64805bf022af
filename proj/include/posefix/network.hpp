#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace posefix {

struct LayerSpec {
  enum class Kind { conv, upsample2x };

  Kind kind = Kind::conv;
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  bool relu = true;
};

/// Feed-forward stack of convolutions (zero "same" padding) and nearest
/// 2x upsampling on channel-major tensors.
struct Architecture {
  int in_channels = 0;
  int in_height = 0;
  int in_width = 0;
  std::vector<LayerSpec> layers;

  struct Shape {
    int channels, height, width;
  };
  /// Shapes after each layer; entry 0 is the input.
  std::vector<Shape> shapes() const;
  Shape output_shape() const { return shapes().back(); }
  std::size_t num_params() const;
  void validate() const;

  nlohmann::json to_json() const;
  static Architecture from_json(const nlohmann::json& doc);

  friend bool operator==(const Architecture& a, const Architecture& b) {
    return a.to_json() == b.to_json();
  }
};

/// Two stride-2 convolutions, two same-resolution convolutions, then
/// `upsample_count` rounds of (nearest 2x upsample + conv) and a 1x1 head.
Architecture toy_architecture(int in_channels, int joints, int in_width, int in_height,
                              int narrow_width, int wide_width, int upsample_count);

/// Two convolutions on small maps, for gradient checks.
Architecture miniature_architecture(int in_channels, int joints, int width, int height,
                                    int hidden = 4);

/// Output cells (row-major over the output map) whose value can depend on
/// input pixel (x, y), propagated layer by layer through kernel footprints.
std::vector<std::uint8_t> influence_mask(const Architecture& arch, int x, int y);

template <class T>
class ConvNet {
 public:
  ConvNet() = default;
  explicit ConvNet(Architecture arch);

  const Architecture& architecture() const { return arch_; }
  std::size_t num_params() const { return params_.size(); }
  std::span<T> params() { return params_; }
  std::span<const T> params() const { return params_; }

  /// Zero-mean Gaussian weights, zero biases.
  void init_gaussian(std::mt19937_64& rng, double sigma);

  /// Per-call scratch: activations and im2col buffers kept for backward.
  struct Workspace {
    std::vector<std::vector<T>> activations;  // [0] = input
    std::vector<std::vector<T>> columns;
    std::vector<T> grad_a;
    std::vector<T> grad_b;
  };

  /// Runs the stack; the output is ws.activations.back().
  void forward(std::span<const T> input, Workspace& ws) const;

  /// Accumulates d(loss)/d(params) into grad_params given d(loss)/d(output).
  void backward(Workspace& ws, std::span<const T> grad_output, std::span<T> grad_params) const;

 private:
  struct Offsets {
    std::size_t weights = 0;
    std::size_t bias = 0;
  };

  Architecture arch_;
  std::vector<Architecture::Shape> shapes_;
  std::vector<Offsets> offsets_;
  std::vector<T> params_;
};

extern template class ConvNet<float>;
extern template class ConvNet<double>;

}  // namespace posefix
