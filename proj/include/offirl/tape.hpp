#pragma once

#include <cmath>
#include <vector>

namespace offirl::ad {

class Tape;

// Handle to a scalar node on a Tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;
  double value() const;
};

// Minimal scalar reverse-mode tape used to combine network outputs into
// losses. Leaves are the network head outputs; backward() returns the
// adjoint of every node so callers can read the leaves they care about.
class Tape {
 public:
  Var leaf(double v) { return push(v, -1, 0.0, -1, 0.0); }
  Var constant(double v) { return push(v, -1, 0.0, -1, 0.0); }
  // Value passes through, derivative does not.
  Var stop_gradient(Var x) { return constant(x.value()); }

  double value(Var x) const { return nodes_[x.id].value; }
  std::vector<double> backward(Var out) const;
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  Var push(double v, int a, double da, int b, double db) {
    nodes_.push_back({v, a, da, b, db});
    return Var{this, static_cast<int>(nodes_.size()) - 1};
  }

 private:
  struct Node {
    double value;
    int a;
    double da;
    int b;
    double db;
  };
  std::vector<Node> nodes_;
};

inline double Var::value() const { return tape->value(*this); }

inline Var operator+(Var x, Var y) { return x.tape->push(x.value() + y.value(), x.id, 1.0, y.id, 1.0); }
inline Var operator-(Var x, Var y) { return x.tape->push(x.value() - y.value(), x.id, 1.0, y.id, -1.0); }
inline Var operator*(Var x, Var y) {
  return x.tape->push(x.value() * y.value(), x.id, y.value(), y.id, x.value());
}
inline Var operator/(Var x, Var y) {
  const double yv = y.value();
  return x.tape->push(x.value() / yv, x.id, 1.0 / yv, y.id, -x.value() / (yv * yv));
}
inline Var operator+(Var x, double c) { return x.tape->push(x.value() + c, x.id, 1.0, -1, 0.0); }
inline Var operator+(double c, Var x) { return x + c; }
inline Var operator-(Var x, double c) { return x.tape->push(x.value() - c, x.id, 1.0, -1, 0.0); }
inline Var operator-(double c, Var x) { return x.tape->push(c - x.value(), x.id, -1.0, -1, 0.0); }
inline Var operator*(Var x, double c) { return x.tape->push(x.value() * c, x.id, c, -1, 0.0); }
inline Var operator*(double c, Var x) { return x * c; }
inline Var operator/(Var x, double c) { return x * (1.0 / c); }
inline Var operator-(Var x) { return x * -1.0; }

inline Var log(Var x) { return x.tape->push(std::log(x.value()), x.id, 1.0 / x.value(), -1, 0.0); }
inline Var exp(Var x) {
  const double e = std::exp(x.value());
  return x.tape->push(e, x.id, e, -1, 0.0);
}
inline Var square(Var x) { return x.tape->push(x.value() * x.value(), x.id, 2.0 * x.value(), -1, 0.0); }

inline std::vector<double> Tape::backward(Var out) const {
  std::vector<double> adj(nodes_.size(), 0.0);
  adj[out.id] = 1.0;
  for (int i = out.id; i >= 0; --i) {
    const Node& n = nodes_[i];
    if (adj[i] == 0.0) continue;
    if (n.a >= 0) adj[n.a] += adj[i] * n.da;
    if (n.b >= 0) adj[n.b] += adj[i] * n.db;
  }
  return adj;
}

}  // namespace offirl::ad
