#pragma once

#include "lanmdp/common.hpp"

#include <json.hpp>

#include <string>
#include <string_view>
#include <vector>

namespace lanmdp::nn {

enum class Activation { identity, swish, leaky_relu };

inline constexpr double kLeakySlope = 0.01;

std::string_view activation_name(Activation act);
Activation activation_from_name(std::string_view name);

/// Fully connected network. weights[l] maps layer l (width layer_dims[l]) to layer l+1.
/// The activation is applied to every hidden layer; the output layer is always linear.
struct Mlp {
  std::vector<int> layer_dims;
  Activation activation = Activation::identity;
  std::vector<Mat> weights;
  std::vector<Vec> biases;

  int input_dim() const { return layer_dims.front(); }
  int output_dim() const { return layer_dims.back(); }
  std::size_t num_layers() const { return weights.size(); }
  std::size_t parameter_count() const;

  /// Flat view over parameters, layer by layer: row-major weights then bias.
  double parameter(std::size_t index) const;
  double& parameter(std::size_t index);

  /// Same shape, every parameter zero. Used as a gradient accumulator.
  Mlp zeros_like() const;

  /// this += scale * other (shapes must match).
  void add_scaled(const Mlp& other, double scale);
  void scale(double factor);
  bool all_finite() const;
  bool same_shape(const Mlp& other) const;
};

/// Throws std::invalid_argument on an empty dimension list or a non-positive width.
Mlp mlp_init(std::vector<int> layer_dims, Activation activation, std::uint64_t seed);

Vec forward(const Mlp& net, const Vec& input);

struct MlpGrad {
  Mlp params;
  Vec input;
};

/// Reverse-mode derivatives of cotangent . forward(net, input).
MlpGrad backward(const Mlp& net, const Vec& input, const Vec& cotangent);

/// Input gradient only; skips parameter-gradient bookkeeping.
Vec input_gradient(const Mlp& net, const Vec& input, const Vec& cotangent);

/// Forward value and input gradient for a scalar-output network in one pass.
double scalar_value_and_input_grad(const Mlp& net, const Vec& input, Vec& input_grad);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled (AdamW) when nonzero
};

struct AdamState {
  AdamConfig config;
  Mlp first_moment;
  Mlp second_moment;
  long step = 0;

  AdamState() = default;
  AdamState(const Mlp& like, AdamConfig cfg);
};

/// One Adam/AdamW update in place. Throws NumericalError naming the offending tensor
/// when a gradient entry is not finite; parameters are left untouched in that case.
void optim_step(AdamState& state, Mlp& params, const Mlp& grads);

nlohmann::json to_json(const Mlp& net);
Mlp mlp_from_json(const nlohmann::json& doc);

}  // namespace lanmdp::nn
