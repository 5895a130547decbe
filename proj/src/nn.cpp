#include "offirl/nn.hpp"

#include <json.hpp>

namespace offirl {

int MlpSpec::raw_output_dim() const { return head == Head::gaussian ? 2 * output_dim : output_dim; }

void MlpSpec::validate() const {
  if (input_dim <= 0 || output_dim <= 0) throw InvalidParameter("mlp: dims must be positive");
  for (int h : hidden)
    if (h <= 0) throw InvalidParameter("mlp: hidden widths must be positive");
  if ((head == Head::scalar_sigmoid || head == Head::scalar_linear) && output_dim != 1)
    throw InvalidParameter("mlp: scalar heads need output_dim 1");
  if (!(init_scale >= 0)) throw InvalidParameter("mlp: init_scale must be >= 0");
}

Mlp::Mlp(MlpSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  Eigen::Index offset = 0;
  int in = spec_.input_dim;
  std::vector<int> widths = spec_.hidden;
  widths.push_back(spec_.raw_output_dim());
  for (int out : widths) {
    Layer l{offset, offset + static_cast<Eigen::Index>(in) * out, in, out};
    offset = l.b_offset + out;
    layers_.push_back(l);
    in = out;
  }
  params_.values = Vec::Zero(offset);
}

Mlp Mlp::zeros(MlpSpec spec) { return Mlp(std::move(spec)); }

Mlp::Mlp(MlpSpec spec, Rng& rng) : Mlp(std::move(spec)) {
  for (Eigen::Index i = 0; i < params_.values.size(); ++i)
    params_.values[i] = spec_.init_scale * (2.0 * uniform01(rng) - 1.0);
}

Eigen::Map<const Mat> Mlp::weight(const Layer& l) const {
  return {params_.values.data() + l.w_offset, l.out, l.in};
}
Eigen::Map<const Vec> Mlp::bias(const Layer& l) const {
  return {params_.values.data() + l.b_offset, l.out};
}

Forward Mlp::forward(const Mat& x) const {
  if (x.rows() != spec_.input_dim)
    throw DimensionMismatch("mlp: input has " + std::to_string(x.rows()) + " rows, expected " +
                            std::to_string(spec_.input_dim));
  Forward fw;
  fw.activations.reserve(layers_.size());
  fw.activations.push_back(x);
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) {
    Mat z = weight(layers_[i]) * fw.activations.back();
    z.colwise() += bias(layers_[i]);
    if (spec_.activation == Activation::tanh)
      z = z.array().tanh();
    else
      z = z.cwiseMax(0.0);
    fw.activations.push_back(std::move(z));
  }
  fw.raw = weight(layers_.back()) * fw.activations.back();
  fw.raw.colwise() += bias(layers_.back());

  switch (spec_.head) {
    case Head::scalar_linear:
    case Head::linear:
      fw.value = fw.raw;
      break;
    case Head::scalar_sigmoid:
      fw.value = fw.raw.unaryExpr([](double z) { return std::clamp(sigmoid(z), kSigmoidFloor, kSigmoidCeil); });
      break;
    case Head::gaussian: {
      const int d = spec_.output_dim;
      fw.value = fw.raw.topRows(d);
      fw.scale = fw.raw.bottomRows(d).unaryExpr([](double z) { return softplus(z) + kScaleFloor; });
      break;
    }
  }
  return fw;
}

double Mlp::predict_one(const Vec& x) const { return forward(Mat(x)).value(0, 0); }

void Mlp::backward(const Forward& fw, const Mat& d_value, const Mat* d_scale, Vec& grad, Mat* d_input) const {
  if (grad.size() != n_params()) grad = Vec::Zero(n_params());
  if (d_value.rows() != fw.value.rows() || d_value.cols() != fw.value.cols())
    throw DimensionMismatch("mlp backward: d_value shape mismatch");

  Mat d_raw(fw.raw.rows(), fw.raw.cols());
  switch (spec_.head) {
    case Head::scalar_linear:
    case Head::linear:
      d_raw = d_value;
      break;
    case Head::scalar_sigmoid:
      for (Eigen::Index j = 0; j < d_raw.cols(); ++j) {
        const double v = fw.value(0, j);
        // Derivative is zero where the clamp is active.
        const bool clamped = v <= kSigmoidFloor || v >= kSigmoidCeil;
        d_raw(0, j) = clamped ? 0.0 : d_value(0, j) * v * (1.0 - v);
      }
      break;
    case Head::gaussian: {
      const int d = spec_.output_dim;
      d_raw.topRows(d) = d_value;
      if (d_scale) {
        if (d_scale->rows() != d || d_scale->cols() != fw.raw.cols())
          throw DimensionMismatch("mlp backward: d_scale shape mismatch");
        d_raw.bottomRows(d) = d_scale->cwiseProduct(fw.raw.bottomRows(d).unaryExpr(
            [](double z) { return sigmoid(z); }));
      } else {
        d_raw.bottomRows(d).setZero();
      }
      break;
    }
  }

  Mat delta = std::move(d_raw);
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const Layer& l = layers_[k];
    const Mat& input = fw.activations[k];
    Eigen::Map<Mat> gw(grad.data() + l.w_offset, l.out, l.in);
    Eigen::Map<Vec> gb(grad.data() + l.b_offset, l.out);
    gw.noalias() += delta * input.transpose();
    gb += delta.rowwise().sum();
    if (k == 0 && !d_input) break;
    Mat d_in = weight(l).transpose() * delta;
    if (k == 0) {
      *d_input = std::move(d_in);
      break;
    }
    if (spec_.activation == Activation::tanh)
      delta = d_in.array() * (1.0 - input.array().square());
    else
      delta = d_in.array() * (input.array() > 0.0).cast<double>();
  }
}

std::string to_string(Activation a) { return a == Activation::tanh ? "tanh" : "relu"; }
std::string to_string(Head h) {
  switch (h) {
    case Head::scalar_sigmoid: return "scalar-sigmoid";
    case Head::scalar_linear: return "scalar-linear";
    case Head::gaussian: return "gaussian";
    case Head::linear: return "linear";
  }
  return "?";
}
Activation parse_activation(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  throw InvalidParameter("unknown activation '" + s + "' (valid: tanh, relu)");
}
Head parse_head(const std::string& s) {
  if (s == "scalar-sigmoid") return Head::scalar_sigmoid;
  if (s == "scalar-linear") return Head::scalar_linear;
  if (s == "gaussian") return Head::gaussian;
  if (s == "linear") return Head::linear;
  throw InvalidParameter("unknown head '" + s + "' (valid: scalar-sigmoid, scalar-linear, gaussian, linear)");
}

std::string Mlp::serialize() const {
  nlohmann::json j;
  j["version"] = 1;
  j["input_dim"] = spec_.input_dim;
  j["output_dim"] = spec_.output_dim;
  j["hidden"] = spec_.hidden;
  j["activation"] = to_string(spec_.activation);
  j["head"] = to_string(spec_.head);
  j["init_scale"] = spec_.init_scale;
  j["steps"] = params_.steps;
  j["params"] = std::vector<double>(params_.values.data(), params_.values.data() + params_.values.size());
  return j.dump();
}

Mlp Mlp::deserialize(const std::string& text) {
  try {
    const nlohmann::json j = nlohmann::json::parse(text);
    if (!j.is_object() || j.value("version", 0) != 1) throw ParseError("mlp checkpoint: unsupported version");
    MlpSpec spec;
    spec.input_dim = j.at("input_dim").get<int>();
    spec.output_dim = j.at("output_dim").get<int>();
    spec.hidden = j.at("hidden").get<std::vector<int>>();
    spec.activation = parse_activation(j.at("activation").get<std::string>());
    spec.head = parse_head(j.at("head").get<std::string>());
    spec.init_scale = j.value("init_scale", 0.05);
    Mlp net(spec);
    auto p = j.at("params").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(p.size()) != net.n_params())
      throw ParseError("mlp checkpoint: parameter count does not match spec");
    net.params_.values = Eigen::Map<Vec>(p.data(), static_cast<Eigen::Index>(p.size()));
    net.params_.steps = j.value("steps", 0L);
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("mlp checkpoint: ") + e.what());
  }
}

void Optimizer::step(ParamBlock& params, const Vec& grad) {
  if (grad.size() != params.values.size()) throw DimensionMismatch("optimizer: gradient size mismatch");
  if (!grad.allFinite()) throw NumericalError("optimizer: non-finite gradient rejected");
  if (cfg_.kind == OptimizerKind::sgd) {
    params.values -= cfg_.lr * grad;
  } else {
    if (m_.size() != grad.size()) {
      m_ = Vec::Zero(grad.size());
      v_ = Vec::Zero(grad.size());
      t_ = 0;
    }
    ++t_;
    m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * grad;
    v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    params.values.array() -= cfg_.lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + cfg_.eps);
  }
  ++params.steps;
}

void opt_step(ParamBlock& params, const Vec& grad, Optimizer& opt) { opt.step(params, grad); }

Vec numeric_gradient(const std::function<double(const Vec&)>& f, const Vec& x, double h) {
  Vec g(x.size());
  Vec xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = xp[i];
    xp[i] = orig + h;
    const double fp = f(xp);
    xp[i] = orig - h;
    const double fm = f(xp);
    xp[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

double relative_error(const Vec& a, const Vec& b, double floor) {
  const double scale = std::max({a.norm(), b.norm(), floor});
  return (a - b).norm() / scale;
}

}  // namespace offirl
