#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "offirl/common.hpp"

namespace offirl {

enum class Activation { tanh, relu };
// linear: vector-valued affine output (e.g. categorical logits).
enum class Head { scalar_sigmoid, scalar_linear, gaussian, linear };

// Clamp applied to every sigmoid head so log-terms and E/(1-E) stay finite.
inline constexpr double kSigmoidFloor = 1e-6;
inline constexpr double kSigmoidCeil = 1.0 - 1e-6;
// Floor added to softplus scales; keeps the scale strictly positive even
// when softplus underflows.
inline constexpr double kScaleFloor = 1e-6;

struct MlpSpec {
  int input_dim = 1;
  int output_dim = 1;
  std::vector<int> hidden{64, 64, 64};
  Activation activation = Activation::tanh;
  Head head = Head::scalar_linear;
  double init_scale = 0.05;

  // Width of the last linear layer: 2*output_dim for gaussian heads.
  int raw_output_dim() const;
  void validate() const;
};

struct ParamBlock {
  Vec values;
  long steps = 0;
};

// Cached forward pass. Columns are samples.
struct Forward {
  std::vector<Mat> activations;  // [0] is the input
  Mat raw;
  Mat value;  // sigmoid/linear output (1 x B) or gaussian mean (d x B)
  Mat scale;  // gaussian only
};

class Mlp {
 public:
  Mlp() = default;
  Mlp(MlpSpec spec, Rng& rng);
  static Mlp zeros(MlpSpec spec);

  const MlpSpec& spec() const { return spec_; }
  ParamBlock& params() { return params_; }
  const ParamBlock& params() const { return params_; }
  Eigen::Index n_params() const { return params_.values.size(); }

  Forward forward(const Mat& x) const;
  Mat predict(const Mat& x) const { return forward(x).value; }
  double predict_one(const Vec& x) const;

  // Reverse pass. d_value has the shape of fw.value, d_scale the shape of
  // fw.scale (gaussian heads, may be null). Gradient is accumulated into
  // grad; the input gradient is written to d_input when requested.
  void backward(const Forward& fw, const Mat& d_value, const Mat* d_scale, Vec& grad,
                Mat* d_input = nullptr) const;

  // Versioned JSON checkpoint: spec metadata plus the flat parameter array.
  std::string serialize() const;
  static Mlp deserialize(const std::string& text);

 private:
  struct Layer {
    Eigen::Index w_offset, b_offset;
    int in, out;
  };
  explicit Mlp(MlpSpec spec);
  Eigen::Map<const Mat> weight(const Layer& l) const;
  Eigen::Map<const Vec> bias(const Layer& l) const;

  MlpSpec spec_;
  std::vector<Layer> layers_;
  ParamBlock params_;
};

enum class OptimizerKind { sgd, adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Descent step. A non-finite gradient throws NumericalError and leaves the
// parameters untouched.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg = {}) : cfg_(cfg) {}
  void step(ParamBlock& params, const Vec& grad);
  const OptimizerConfig& config() const { return cfg_; }

 private:
  OptimizerConfig cfg_;
  Vec m_, v_;
  long t_ = 0;
};

void opt_step(ParamBlock& params, const Vec& grad, Optimizer& opt);

// Central finite differences of f at x.
Vec numeric_gradient(const std::function<double(const Vec&)>& f, const Vec& x, double h = 1e-5);
// ||a - b|| / max(||a||, ||b||, floor)
double relative_error(const Vec& a, const Vec& b, double floor = 1e-8);

std::string to_string(Activation a);
std::string to_string(Head h);
Activation parse_activation(const std::string& s);
Head parse_head(const std::string& s);

inline double sigmoid(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}
inline double softplus(double z) {
  return z > 30 ? z : std::log1p(std::exp(z));
}

}  // namespace offirl
