#include "lanmdp/nn.hpp"

#include <cmath>
#include <string>

namespace lanmdp::nn {

namespace {

double apply(Activation act, double z) {
  switch (act) {
    case Activation::identity:
      return z;
    case Activation::swish:
      return z / (1.0 + std::exp(-z));
    case Activation::leaky_relu:
      return z > 0.0 ? z : kLeakySlope * z;
  }
  return z;
}

double derivative(Activation act, double z) {
  switch (act) {
    case Activation::identity:
      return 1.0;
    case Activation::swish: {
      const double s = 1.0 / (1.0 + std::exp(-z));
      return s + z * s * (1.0 - s);
    }
    case Activation::leaky_relu:
      return z > 0.0 ? 1.0 : kLeakySlope;
  }
  return 1.0;
}

void check_input(const Mlp& net, const Vec& input) {
  if (input.size() != net.input_dim()) {
    throw std::invalid_argument("mlp input has " + std::to_string(input.size()) +
                                " entries, network expects " +
                                std::to_string(net.input_dim()));
  }
}

// Pre-activations of every layer; the input is kept separately.
struct Tape {
  std::vector<Vec> pre;   // pre[l] = W_l h_l + b_l
  std::vector<Vec> post;  // post[0] = input, post[l+1] = act(pre[l]) (identity on last)
};

Tape run_forward(const Mlp& net, const Vec& input) {
  Tape tape;
  const std::size_t n = net.num_layers();
  tape.pre.reserve(n);
  tape.post.reserve(n + 1);
  tape.post.push_back(input);
  for (std::size_t l = 0; l < n; ++l) {
    Vec z = net.weights[l] * tape.post.back() + net.biases[l];
    Vec h = z;
    if (l + 1 < n) {
      for (Eigen::Index i = 0; i < h.size(); ++i) h[i] = apply(net.activation, z[i]);
    }
    tape.pre.push_back(std::move(z));
    tape.post.push_back(std::move(h));
  }
  return tape;
}

// Walks the tape backwards. When param_grads is null only the input adjoint is formed.
Vec run_backward(const Mlp& net, const Tape& tape, const Vec& cotangent, Mlp* param_grads) {
  const std::size_t n = net.num_layers();
  Vec delta = cotangent;
  for (std::size_t l = n; l-- > 0;) {
    if (l + 1 < n) {
      for (Eigen::Index i = 0; i < delta.size(); ++i) {
        delta[i] *= derivative(net.activation, tape.pre[l][i]);
      }
    }
    if (param_grads != nullptr) {
      param_grads->weights[l].noalias() = delta * tape.post[l].transpose();
      param_grads->biases[l] = delta;
    }
    delta = net.weights[l].transpose() * delta;
  }
  return delta;
}

}  // namespace

std::string_view activation_name(Activation act) {
  switch (act) {
    case Activation::identity:
      return "identity";
    case Activation::swish:
      return "swish";
    case Activation::leaky_relu:
      return "leaky_relu";
  }
  return "identity";
}

Activation activation_from_name(std::string_view name) {
  if (name == "identity") return Activation::identity;
  if (name == "swish") return Activation::swish;
  if (name == "leaky_relu") return Activation::leaky_relu;
  throw ValidationError("unknown activation '" + std::string(name) + "'");
}

std::size_t Mlp::parameter_count() const {
  std::size_t count = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    count += static_cast<std::size_t>(weights[l].size() + biases[l].size());
  }
  return count;
}

double& Mlp::parameter(std::size_t index) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    const auto nw = static_cast<std::size_t>(weights[l].size());
    if (index < nw) {
      const auto cols = static_cast<std::size_t>(weights[l].cols());
      return weights[l](static_cast<Eigen::Index>(index / cols),
                        static_cast<Eigen::Index>(index % cols));
    }
    index -= nw;
    const auto nb = static_cast<std::size_t>(biases[l].size());
    if (index < nb) return biases[l][static_cast<Eigen::Index>(index)];
    index -= nb;
  }
  throw std::out_of_range("parameter index out of range");
}

double Mlp::parameter(std::size_t index) const {
  return const_cast<Mlp&>(*this).parameter(index);
}

Mlp Mlp::zeros_like() const {
  Mlp out;
  out.layer_dims = layer_dims;
  out.activation = activation;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.weights.push_back(Mat::Zero(weights[l].rows(), weights[l].cols()));
    out.biases.push_back(Vec::Zero(biases[l].size()));
  }
  return out;
}

bool Mlp::same_shape(const Mlp& other) const {
  if (layer_dims != other.layer_dims || weights.size() != other.weights.size()) return false;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows() != other.weights[l].rows() ||
        weights[l].cols() != other.weights[l].cols() ||
        biases[l].size() != other.biases[l].size()) {
      return false;
    }
  }
  return true;
}

void Mlp::add_scaled(const Mlp& other, double factor) {
  if (!same_shape(other)) throw std::invalid_argument("add_scaled: shape mismatch");
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l] += factor * other.weights[l];
    biases[l] += factor * other.biases[l];
  }
}

void Mlp::scale(double factor) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l] *= factor;
    biases[l] *= factor;
  }
}

bool Mlp::all_finite() const {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
  }
  return true;
}

Mlp mlp_init(std::vector<int> layer_dims, Activation activation, std::uint64_t seed) {
  if (layer_dims.size() < 2) {
    throw std::invalid_argument("mlp needs at least an input and an output width");
  }
  for (int d : layer_dims) {
    if (d < 1) throw std::invalid_argument("mlp layer widths must be positive");
  }
  Rng rng(seed);
  Mlp net;
  net.layer_dims = std::move(layer_dims);
  net.activation = activation;
  for (std::size_t l = 0; l + 1 < net.layer_dims.size(); ++l) {
    const int fan_in = net.layer_dims[l];
    const int fan_out = net.layer_dims[l + 1];
    // Glorot-uniform bound.
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> unif(-bound, bound);
    Mat w(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r) {
      for (int c = 0; c < fan_in; ++c) w(r, c) = unif(rng);
    }
    net.weights.push_back(std::move(w));
    net.biases.push_back(Vec::Zero(fan_out));
  }
  return net;
}

Vec forward(const Mlp& net, const Vec& input) {
  check_input(net, input);
  Vec h = input;
  const std::size_t n = net.num_layers();
  for (std::size_t l = 0; l < n; ++l) {
    Vec z = net.weights[l] * h + net.biases[l];
    if (l + 1 < n) {
      for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = apply(net.activation, z[i]);
    }
    h = std::move(z);
  }
  return h;
}

MlpGrad backward(const Mlp& net, const Vec& input, const Vec& cotangent) {
  check_input(net, input);
  if (cotangent.size() != net.output_dim()) {
    throw std::invalid_argument("cotangent size does not match network output");
  }
  const Tape tape = run_forward(net, input);
  MlpGrad out{net.zeros_like(), Vec()};
  out.input = run_backward(net, tape, cotangent, &out.params);
  return out;
}

Vec input_gradient(const Mlp& net, const Vec& input, const Vec& cotangent) {
  check_input(net, input);
  if (cotangent.size() != net.output_dim()) {
    throw std::invalid_argument("cotangent size does not match network output");
  }
  const Tape tape = run_forward(net, input);
  return run_backward(net, tape, cotangent, nullptr);
}

double scalar_value_and_input_grad(const Mlp& net, const Vec& input, Vec& input_grad) {
  check_input(net, input);
  if (net.output_dim() != 1) throw std::invalid_argument("network output is not scalar");
  const Tape tape = run_forward(net, input);
  input_grad = run_backward(net, tape, Vec::Ones(1), nullptr);
  return tape.post.back()[0];
}

AdamState::AdamState(const Mlp& like, AdamConfig cfg)
    : config(cfg), first_moment(like.zeros_like()), second_moment(like.zeros_like()) {}

void optim_step(AdamState& state, Mlp& params, const Mlp& grads) {
  if (!params.same_shape(grads) || !params.same_shape(state.first_moment)) {
    throw std::invalid_argument("optim_step: parameter, gradient and state shapes differ");
  }
  for (std::size_t l = 0; l < grads.num_layers(); ++l) {
    if (!grads.weights[l].allFinite()) {
      throw NumericalError("non-finite gradient in weights[" + std::to_string(l) + "]");
    }
    if (!grads.biases[l].allFinite()) {
      throw NumericalError("non-finite gradient in biases[" + std::to_string(l) + "]");
    }
  }
  const AdamConfig& c = state.config;
  state.step += 1;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));

  auto update = [&](auto& p, auto& m, auto& v, const auto& g) {
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseProduct(g);
    if (c.weight_decay != 0.0) p *= (1.0 - c.lr * c.weight_decay);
    p.array() -= c.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + c.eps);
  };
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    update(params.weights[l], state.first_moment.weights[l], state.second_moment.weights[l],
           grads.weights[l]);
    update(params.biases[l], state.first_moment.biases[l], state.second_moment.biases[l],
           grads.biases[l]);
  }
}

nlohmann::json to_json(const Mlp& net) {
  nlohmann::json doc;
  doc["format"] = "lanmdp.mlp";
  doc["version"] = 1;
  doc["layer_dims"] = net.layer_dims;
  doc["activation"] = std::string(activation_name(net.activation));
  auto weights = nlohmann::json::array();
  auto biases = nlohmann::json::array();
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(net.weights[l].size()));
    for (Eigen::Index r = 0; r < net.weights[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < net.weights[l].cols(); ++c) flat.push_back(net.weights[l](r, c));
    }
    weights.push_back(flat);
    biases.push_back(std::vector<double>(net.biases[l].data(),
                                         net.biases[l].data() + net.biases[l].size()));
  }
  doc["weights"] = std::move(weights);
  doc["biases"] = std::move(biases);
  return doc;
}

Mlp mlp_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("format").get<std::string>() != "lanmdp.mlp") {
      throw ValidationError("not an mlp document");
    }
    if (doc.at("version").get<int>() != 1) throw ValidationError("unsupported mlp version");
    Mlp net;
    net.layer_dims = doc.at("layer_dims").get<std::vector<int>>();
    net.activation = activation_from_name(doc.at("activation").get<std::string>());
    if (net.layer_dims.size() < 2) throw ValidationError("mlp needs at least two layer widths");
    for (int d : net.layer_dims) {
      if (d < 1) throw ValidationError("mlp layer widths must be positive");
    }
    const auto& weights = doc.at("weights");
    const auto& biases = doc.at("biases");
    const std::size_t n = net.layer_dims.size() - 1;
    if (weights.size() != n || biases.size() != n) {
      throw ValidationError("mlp layer count does not match layer_dims");
    }
    for (std::size_t l = 0; l < n; ++l) {
      const int rows = net.layer_dims[l + 1];
      const int cols = net.layer_dims[l];
      const auto flat = weights[l].get<std::vector<double>>();
      const auto b = biases[l].get<std::vector<double>>();
      if (flat.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols)) {
        throw ValidationError("weights[" + std::to_string(l) + "] has wrong size");
      }
      if (b.size() != static_cast<std::size_t>(rows)) {
        throw ValidationError("biases[" + std::to_string(l) + "] has wrong size");
      }
      Mat w(rows, cols);
      for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
          w(r, c) = flat[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) +
                         static_cast<std::size_t>(c)];
        }
      }
      net.weights.push_back(std::move(w));
      net.biases.push_back(Eigen::Map<const Vec>(b.data(), static_cast<Eigen::Index>(b.size())));
    }
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed mlp document: ") + e.what());
  }
}

}  // namespace lanmdp::nn
