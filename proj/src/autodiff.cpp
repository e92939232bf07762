#include "vidode/autodiff.hpp"

#include "vidode/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace vidode::ad {

namespace {

thread_local bool g_grad_enabled = true;

using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

void require(bool cond, const std::string& what) {
  if (!cond) throw ShapeError(what);
}

void require_same(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

// Creates an op output node. The backward closure is only kept when some input
// needs gradients and recording is on.
Var make_node(std::vector<double> value, Shape shape, std::vector<Var> inputs,
              std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->shape = std::move(shape);
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.node());
    node->backward_fn = std::move(backward_fn);
  }
  return Var(std::move(node));
}

Node& in(Node& self, std::size_t i) { return *self.inputs[i]; }

// Adds g (indexed like the input) into input i's gradient if it needs one.
template <typename F>
void accumulate(Node& self, std::size_t i, F&& f) {
  Node& x = in(self, i);
  if (!x.requires_grad) return;
  x.ensure_grad();
  f(x.grad);
}

template <typename Fwd, typename Deriv>
Var unary(const Var& a, Fwd fwd, Deriv deriv) {
  std::vector<double> out(a.size());
  const auto& v = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(v[i]);
  return make_node(out, a.shape(), {a}, [deriv](Node& self) {
    accumulate(self, 0, [&](std::vector<double>& g) {
      const auto& x = in(self, 0).value;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * deriv(x[i], self.value[i]);
    });
  });
}

}  // namespace

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t acc, int d) { return acc * static_cast<std::size_t>(d); });
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Parameter::Parameter(std::string n, Shape s)
    : name(std::move(n)), shape(std::move(s)), value(numel(shape), 0.0), grad(value.size(), 0.0) {}

void Parameter::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

Var Var::constant(std::vector<double> value, Shape shape) {
  require(value.size() == numel(shape), "constant: value size does not match shape");
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->shape = std::move(shape);
  return Var(std::move(node));
}

Var Var::constant(double scalar) { return constant({scalar}, {1}); }

Var Var::zeros(const Shape& shape) { return constant(std::vector<double>(numel(shape), 0.0), shape); }

Var Var::variable(std::vector<double> value, Shape shape) {
  Var v = constant(std::move(value), std::move(shape));
  v.node_->requires_grad = true;
  return v;
}

Var Var::leaf(Parameter& p) {
  Var v = constant(p.value, p.shape);
  if (g_grad_enabled) {
    v.node_->requires_grad = true;
    v.node_->param = &p;
  }
  return v;
}

double Var::item() const {
  require(size() == 1, "item: tensor is not a scalar " + shape_str(shape()));
  return node_->value[0];
}

void backward(const Var& output) {
  require(output.size() == 1, "backward: output must be a scalar");
  if (!output.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{output.node().get(), 0}};
  visited.insert(output.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  Node* root = output.node().get();
  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
  for (Node* n : order) {
    if (n->param && !n->grad.empty()) {
      auto& pg = n->param->grad;
      if (pg.size() != n->grad.size()) pg.assign(n->grad.size(), 0.0);
      for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += n->grad[i];
    }
  }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var add(const Var& a, const Var& b) {
  require_same(a, b, "add");
  std::vector<double> out(a.value());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return make_node(std::move(out), a.shape(), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      accumulate(self, k, [&](std::vector<double>& g) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      });
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same(a, b, "sub");
  std::vector<double> out(a.value());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return make_node(std::move(out), a.shape(), {a, b}, [](Node& self) {
    accumulate(self, 0, [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
    accumulate(self, 1, [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    });
  });
}

Var mul(const Var& a, const Var& b) {
  require_same(a, b, "mul");
  std::vector<double> out(a.value());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return make_node(std::move(out), a.shape(), {a, b}, [](Node& self) {
    const auto& av = in(self, 0).value;
    const auto& bv = in(self, 1).value;
    accumulate(self, 0, [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bv[i];
    });
    accumulate(self, 1, [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * av[i];
    });
  });
}

Var operator+(const Var& a, const Var& b) { return add(a, b); }
Var operator-(const Var& a, const Var& b) { return sub(a, b); }
Var operator*(const Var& a, const Var& b) { return mul(a, b); }

Var scale(const Var& a, double s) {
  return unary(a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Var add_scalar(const Var& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var sigmoid(const Var& a) {
  return unary(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(const Var& a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var silu(const Var& a) {
  return unary(
      a, [](double x) { return x / (1.0 + std::exp(-x)); },
      [](double x, double) {
        const double s = 1.0 / (1.0 + std::exp(-x));
        return s * (1.0 + x * (1.0 - s));
      });
}

Var gelu(const Var& a) {
  constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double c = 0.044715;
  return unary(
      a,
      [](double x) { return 0.5 * x * (1.0 + std::tanh(k * (x + c * x * x * x))); },
      [](double x, double) {
        const double u = k * (x + c * x * x * x);
        const double t = std::tanh(u);
        const double du = k * (1.0 + 3.0 * c * x * x);
        return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
      });
}

Var square(const Var& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sqrt(const Var& a) {
  return unary(
      a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Var clamp(const Var& a, double lo, double hi) {
  return unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Var select(const std::vector<bool>& take_a, const Var& a, const Var& b) {
  require_same(a, b, "select");
  require(take_a.size() == a.size(), "select: mask size mismatch");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = take_a[i] ? a[i] : b[i];
  return make_node(std::move(out), a.shape(), {a, b}, [take_a](Node& self) {
    accumulate(self, 0, [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i)
        if (take_a[i]) g[i] += self.grad[i];
    });
    accumulate(self, 1, [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i)
        if (!take_a[i]) g[i] += self.grad[i];
    });
  });
}

Var mul_scalar(const Var& a, const Var& s) {
  require(s.size() == 1, "mul_scalar: expected scalar");
  const double sv = s[0];
  std::vector<double> out(a.value());
  for (auto& x : out) x *= sv;
  return make_node(std::move(out), a.shape(), {a, s}, [](Node& self) {
    const auto& av = in(self, 0).value;
    const double sv = in(self, 1).value[0];
    accumulate(self, 0, [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * sv;
    });
    accumulate(self, 1, [&](std::vector<double>& g) {
      double acc = 0.0;
      for (std::size_t i = 0; i < av.size(); ++i) acc += self.grad[i] * av[i];
      g[0] += acc;
    });
  });
}

Var div_scalar(const Var& a, const Var& s) {
  require(s.size() == 1, "div_scalar: expected scalar");
  const double sv = s[0];
  std::vector<double> out(a.value());
  for (auto& x : out) x /= sv;
  return make_node(std::move(out), a.shape(), {a, s}, [](Node& self) {
    const double sv = in(self, 1).value[0];
    accumulate(self, 0, [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / sv;
    });
    accumulate(self, 1, [&](std::vector<double>& g) {
      double acc = 0.0;
      for (std::size_t i = 0; i < self.value.size(); ++i) acc += self.grad[i] * self.value[i];
      g[0] -= acc / sv;
    });
  });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double x : a.value()) s += x;
  return make_node({s}, {1}, {a}, [](Node& self) {
    accumulate(self, 0, [&](std::vector<double>& g) {
      for (auto& x : g) x += self.grad[0];
    });
  });
}

Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Var dot(const Var& a, const Var& b) {
  require(a.size() == b.size(), "dot: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return make_node({s}, {1}, {a, b}, [](Node& self) {
    const auto& av = in(self, 0).value;
    const auto& bv = in(self, 1).value;
    const double g0 = self.grad[0];
    accumulate(self, 0, [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += g0 * bv[i];
    });
    accumulate(self, 1, [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += g0 * av[i];
    });
  });
}

Var norm(const Var& a) {
  double s = 0.0;
  for (double x : a.value()) s += x * x;
  const double n = std::sqrt(s);
  return make_node({n}, {1}, {a}, [](Node& self) {
    const double n = self.value[0];
    if (n <= 0.0) return;
    const auto& av = in(self, 0).value;
    const double g0 = self.grad[0] / n;
    accumulate(self, 0, [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += g0 * av[i];
    });
  });
}

Var normalize(const Var& a, double eps) {
  double s = 0.0;
  for (double x : a.value()) s += x * x;
  const double n = std::sqrt(s);
  const double d = std::max(n, eps);
  std::vector<double> out(a.value());
  for (auto& x : out) x /= d;
  const bool clipped = n < eps;
  return make_node(std::move(out), a.shape(), {a}, [d, clipped](Node& self) {
    accumulate(self, 0, [&](std::vector<double>& g) {
      if (clipped) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / d;
        return;
      }
      // d(a/|a|) = (I - u u^T) / |a|
      double proj = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) proj += self.grad[i] * self.value[i];
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += (self.grad[i] - proj * self.value[i]) / d;
    });
  });
}

Var normalize_rows(const Var& a, double eps) {
  require(a.rank() == 2, "normalize_rows: expected 2-D");
  const int r = a.dim(0), c = a.dim(1);
  std::vector<double> out(a.value()), denom(r);
  for (int i = 0; i < r; ++i) {
    double s = 0.0;
    for (int j = 0; j < c; ++j) s += out[static_cast<std::size_t>(i) * c + j] * out[static_cast<std::size_t>(i) * c + j];
    denom[i] = std::max(std::sqrt(s), eps);
    for (int j = 0; j < c; ++j) out[static_cast<std::size_t>(i) * c + j] /= denom[i];
  }
  return make_node(std::move(out), a.shape(), {a}, [r, c, eps, denom = std::move(denom)](Node& self) {
    accumulate(self, 0, [&](std::vector<double>& g) {
      for (int i = 0; i < r; ++i) {
        const std::size_t off = static_cast<std::size_t>(i) * c;
        double proj = 0.0;
        if (denom[i] > eps) {
          for (int j = 0; j < c; ++j) proj += self.grad[off + j] * self.value[off + j];
        }
        for (int j = 0; j < c; ++j) g[off + j] += (self.grad[off + j] - proj * self.value[off + j]) / denom[i];
      }
    });
  });
}

Var mean_rows(const Var& a) {
  require(a.rank() == 2, "mean_rows: expected 2-D");
  const int n = a.dim(0), m = a.dim(1);
  std::vector<double> out(m, 0.0);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < m; ++c) out[c] += a[static_cast<std::size_t>(r) * m + c];
  for (auto& x : out) x /= n;
  return make_node(std::move(out), {m}, {a}, [n, m](Node& self) {
    accumulate(self, 0, [&](std::vector<double>& g) {
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < m; ++c) g[static_cast<std::size_t>(r) * m + c] += self.grad[c] / n;
    });
  });
}

Var linear_combination(const std::vector<Var>& xs, const std::vector<double>& coefs) {
  require(!xs.empty() && xs.size() == coefs.size(), "linear_combination: bad arguments");
  std::vector<double> out(xs[0].size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = coefs[0] * xs[0][i];
  for (std::size_t k = 1; k < xs.size(); ++k) {
    require(xs[k].shape() == xs[0].shape(), "linear_combination: shape mismatch");
    const double c = coefs[k];
    const auto& v = xs[k].value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += c * v[i];
  }
  return make_node(std::move(out), xs[0].shape(), xs, [coefs](Node& self) {
    for (std::size_t k = 0; k < coefs.size(); ++k) {
      const double c = coefs[k];
      accumulate(self, k, [&](std::vector<double>& g) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += c * self.grad[i];
      });
    }
  });
}

Var sum_all(const std::vector<Var>& xs) {
  require(!xs.empty(), "sum_all: empty list");
  Var acc = xs.front();
  for (std::size_t i = 1; i < xs.size(); ++i) acc = add(acc, xs[i]);
  return acc;
}

Var reshape(const Var& a, Shape shape) {
  require(numel(shape) == a.size(), "reshape: size mismatch " + shape_str(shape));
  return make_node(a.value(), std::move(shape), {a}, [](Node& self) {
    accumulate(self, 0, [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
  });
}

Var transpose(const Var& a) {
  require(a.rank() == 2, "transpose: expected 2-D");
  const int r = a.dim(0), c = a.dim(1);
  std::vector<double> out(a.size());
  MutMap(out.data(), c, r) = ConstMap(a.value().data(), r, c).transpose();
  return make_node(std::move(out), {c, r}, {a}, [r, c](Node& self) {
    accumulate(self, 0, [&](std::vector<double>& g) {
      MutMap(g.data(), r, c) += ConstMap(self.grad.data(), c, r).transpose();
    });
  });
}

Var slice_rows(const Var& a, int r0, int r1) {
  require(a.rank() >= 1 && r0 >= 0 && r1 <= a.dim(0) && r0 < r1, "slice_rows: bad range");
  const std::size_t inner = a.size() / static_cast<std::size_t>(a.dim(0));
  Shape shape = a.shape();
  shape[0] = r1 - r0;
  std::vector<double> out(a.value().begin() + r0 * inner, a.value().begin() + r1 * inner);
  const std::size_t off = r0 * inner;
  return make_node(std::move(out), std::move(shape), {a}, [off](Node& self) {
    accumulate(self, 0, [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[off + i] += self.grad[i];
    });
  });
}

Var slice_last(const Var& a, int c0, int c1) {
  const int last = a.shape().back();
  require(c0 >= 0 && c1 <= last && c0 < c1, "slice_last: bad range");
  const std::size_t outer = a.size() / last;
  const int w = c1 - c0;
  Shape shape = a.shape();
  shape.back() = w;
  std::vector<double> out(outer * w);
  for (std::size_t r = 0; r < outer; ++r)
    for (int c = 0; c < w; ++c) out[r * w + c] = a[r * last + c0 + c];
  return make_node(std::move(out), std::move(shape), {a}, [outer, last, c0, w](Node& self) {
    accumulate(self, 0, [&](std::vector<double>& g) {
      for (std::size_t r = 0; r < outer; ++r)
        for (int c = 0; c < w; ++c) g[r * last + c0 + c] += self.grad[r * w + c];
    });
  });
}

Var concat_rows(const std::vector<Var>& xs) {
  require(!xs.empty(), "concat_rows: empty list");
  Shape shape = xs.front().shape();
  std::vector<double> out;
  int rows = 0;
  for (const auto& x : xs) {
    Shape tail(x.shape().begin() + 1, x.shape().end());
    require(Shape(shape.begin() + 1, shape.end()) == tail, "concat_rows: trailing shape mismatch");
    rows += x.dim(0);
    out.insert(out.end(), x.value().begin(), x.value().end());
  }
  shape[0] = rows;
  return make_node(std::move(out), std::move(shape), xs, [](Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      const std::size_t n = in(self, k).value.size();
      accumulate(self, k, [&](std::vector<double>& g) {
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[off + i];
      });
      off += n;
    }
  });
}

Var concat_last(const std::vector<Var>& xs) {
  require(!xs.empty(), "concat_last: empty list");
  const std::size_t outer = xs.front().size() / xs.front().shape().back();
  std::vector<int> widths;
  int total = 0;
  for (const auto& x : xs) {
    const int w = x.shape().back();
    require(x.size() / w == outer, "concat_last: leading size mismatch");
    widths.push_back(w);
    total += w;
  }
  std::vector<double> out(outer * total);
  int c0 = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const int w = widths[k];
    for (std::size_t r = 0; r < outer; ++r)
      for (int c = 0; c < w; ++c) out[r * total + c0 + c] = xs[k][r * w + c];
    c0 += w;
  }
  Shape shape = xs.front().shape();
  shape.back() = total;
  return make_node(std::move(out), std::move(shape), xs, [outer, widths, total](Node& self) {
    int c0 = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      const int w = widths[k];
      accumulate(self, k, [&](std::vector<double>& g) {
        for (std::size_t r = 0; r < outer; ++r)
          for (int c = 0; c < w; ++c) g[r * w + c] += self.grad[r * total + c0 + c];
      });
      c0 += w;
    }
  });
}

Var matmul(const Var& a, const Var& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
          "matmul: incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(static_cast<std::size_t>(m) * n);
  MutMap(out.data(), m, n).noalias() = ConstMap(a.value().data(), m, k) * ConstMap(b.value().data(), k, n);
  return make_node(std::move(out), {m, n}, {a, b}, [m, k, n](Node& self) {
    ConstMap go(self.grad.data(), m, n);
    accumulate(self, 0, [&](std::vector<double>& g) {
      MutMap(g.data(), m, k).noalias() += go * ConstMap(in(self, 1).value.data(), k, n).transpose();
    });
    accumulate(self, 1, [&](std::vector<double>& g) {
      MutMap(g.data(), k, n).noalias() += ConstMap(in(self, 0).value.data(), m, k).transpose() * go;
    });
  });
}

Var add_bias(const Var& x, const Var& b) {
  const int m = x.shape().back();
  require(b.size() == static_cast<std::size_t>(m), "add_bias: bias width mismatch");
  std::vector<double> out(x.value());
  const std::size_t rows = out.size() / m;
  for (std::size_t r = 0; r < rows; ++r)
    for (int c = 0; c < m; ++c) out[r * m + c] += b[c];
  return make_node(std::move(out), x.shape(), {x, b}, [rows, m](Node& self) {
    accumulate(self, 0, [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
    accumulate(self, 1, [&](std::vector<double>& g) {
      for (std::size_t r = 0; r < rows; ++r)
        for (int c = 0; c < m; ++c) g[c] += self.grad[r * m + c];
    });
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  if (x.rank() == 1) return reshape(add_bias(matmul(reshape(x, {1, x.dim(0)}), w), b), {w.dim(1)});
  return add_bias(matmul(x, w), b);
}

Var affine_frozen(const RowMatrix& w, const Eigen::VectorXd* bias, const Var& x) {
  require(static_cast<std::size_t>(w.cols()) == x.size(), "affine_frozen: input size mismatch");
  const int out_dim = static_cast<int>(w.rows());
  std::vector<double> out(out_dim);
  Eigen::Map<Eigen::VectorXd> o(out.data(), out_dim);
  o.noalias() = w * Eigen::Map<const Eigen::VectorXd>(x.value().data(), x.size());
  if (bias) o += *bias;
  const RowMatrix* wp = &w;
  return make_node(std::move(out), {out_dim}, {x}, [wp](Node& self) {
    accumulate(self, 0, [&](std::vector<double>& g) {
      Eigen::Map<Eigen::VectorXd>(g.data(), g.size()).noalias() +=
          wp->transpose() * Eigen::Map<const Eigen::VectorXd>(self.grad.data(), self.grad.size());
    });
  });
}

Var softmax_rows(const Var& a) {
  require(a.rank() == 2, "softmax_rows: expected 2-D");
  const int r = a.dim(0), c = a.dim(1);
  std::vector<double> out(a.size());
  for (int i = 0; i < r; ++i) {
    const double* row = a.value().data() + static_cast<std::size_t>(i) * c;
    double* o = out.data() + static_cast<std::size_t>(i) * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (int j = 0; j < c; ++j) z += (o[j] = std::exp(row[j] - mx));
    for (int j = 0; j < c; ++j) o[j] /= z;
  }
  return make_node(std::move(out), a.shape(), {a}, [r, c](Node& self) {
    accumulate(self, 0, [&](std::vector<double>& g) {
      for (int i = 0; i < r; ++i) {
        const std::size_t off = static_cast<std::size_t>(i) * c;
        double d = 0.0;
        for (int j = 0; j < c; ++j) d += self.grad[off + j] * self.value[off + j];
        for (int j = 0; j < c; ++j) g[off + j] += self.value[off + j] * (self.grad[off + j] - d);
      }
    });
  });
}

Var layer_norm_rows(const Var& x, const Var& gain, const Var& bias, double eps) {
  const int m = x.shape().back();
  require(gain.size() == static_cast<std::size_t>(m) && bias.size() == static_cast<std::size_t>(m),
          "layer_norm_rows: parameter width mismatch");
  const std::size_t rows = x.size() / m;
  std::vector<double> xhat(x.size()), inv_std(rows), out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = x.value().data() + r * m;
    double mu = 0.0;
    for (int c = 0; c < m; ++c) mu += row[c];
    mu /= m;
    double var = 0.0;
    for (int c = 0; c < m; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= m;
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (int c = 0; c < m; ++c) {
      xhat[r * m + c] = (row[c] - mu) * inv_std[r];
      out[r * m + c] = xhat[r * m + c] * gain[c] + bias[c];
    }
  }
  return make_node(std::move(out), x.shape(), {x, gain, bias},
                   [rows, m, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                     const auto& gv = in(self, 1).value;
                     accumulate(self, 0, [&](std::vector<double>& g) {
                       for (std::size_t r = 0; r < rows; ++r) {
                         double s1 = 0.0, s2 = 0.0;
                         for (int c = 0; c < m; ++c) {
                           const double gh = self.grad[r * m + c] * gv[c];
                           s1 += gh;
                           s2 += gh * xhat[r * m + c];
                         }
                         for (int c = 0; c < m; ++c) {
                           const double gh = self.grad[r * m + c] * gv[c];
                           g[r * m + c] += inv_std[r] * (gh - s1 / m - xhat[r * m + c] * s2 / m);
                         }
                       }
                     });
                     accumulate(self, 1, [&](std::vector<double>& g) {
                       for (std::size_t r = 0; r < rows; ++r)
                         for (int c = 0; c < m; ++c) g[c] += self.grad[r * m + c] * xhat[r * m + c];
                     });
                     accumulate(self, 2, [&](std::vector<double>& g) {
                       for (std::size_t r = 0; r < rows; ++r)
                         for (int c = 0; c < m; ++c) g[c] += self.grad[r * m + c];
                     });
                   });
}

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  require(x.rank() == 3 && w.rank() == 4, "conv2d: expected x [H,W,C] and w [kh,kw,Cin,Cout]");
  const int h = x.dim(0), wd = x.dim(1), cin = x.dim(2);
  const int kh = w.dim(0), kw = w.dim(1), cout = w.dim(3);
  require(w.dim(2) == cin, "conv2d: channel mismatch " + shape_str(x.shape()) + " vs " + shape_str(w.shape()));
  require(b.size() == static_cast<std::size_t>(cout), "conv2d: bias size mismatch");
  const int ho = (h + 2 * pad - kh) / stride + 1;
  const int wo = (wd + 2 * pad - kw) / stride + 1;
  require(ho > 0 && wo > 0, "conv2d: empty output");
  const int patch = kh * kw * cin;
  const int npos = ho * wo;

  // im2col: rows are output positions, columns (ky, kx, ci).
  RowMatrix cols = RowMatrix::Zero(npos, patch);
  for (int oy = 0; oy < ho; ++oy)
    for (int ox = 0; ox < wo; ++ox) {
      double* dst = cols.data() + static_cast<std::size_t>(oy * wo + ox) * patch;
      for (int ky = 0; ky < kh; ++ky) {
        const int iy = oy * stride - pad + ky;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < kw; ++kx) {
          const int ix = ox * stride - pad + kx;
          if (ix < 0 || ix >= wd) continue;
          const double* src = x.value().data() + (static_cast<std::size_t>(iy) * wd + ix) * cin;
          std::copy(src, src + cin, dst + (ky * kw + kx) * cin);
        }
      }
    }
  std::vector<double> out(static_cast<std::size_t>(npos) * cout);
  MutMap o(out.data(), npos, cout);
  o.noalias() = cols * ConstMap(w.value().data(), patch, cout);
  o.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.value().data(), cout);

  return make_node(std::move(out), {ho, wo, cout}, {x, w, b},
                   [=, cols = std::move(cols)](Node& self) {
                     ConstMap go(self.grad.data(), npos, cout);
                     accumulate(self, 1, [&](std::vector<double>& g) {
                       MutMap(g.data(), patch, cout).noalias() += cols.transpose() * go;
                     });
                     accumulate(self, 2, [&](std::vector<double>& g) {
                       Eigen::Map<Eigen::RowVectorXd>(g.data(), cout) += go.colwise().sum();
                     });
                     accumulate(self, 0, [&](std::vector<double>& g) {
                       RowMatrix dcols = go * ConstMap(in(self, 1).value.data(), patch, cout).transpose();
                       for (int oy = 0; oy < ho; ++oy)
                         for (int ox = 0; ox < wo; ++ox) {
                           const double* src = dcols.data() + static_cast<std::size_t>(oy * wo + ox) * patch;
                           for (int ky = 0; ky < kh; ++ky) {
                             const int iy = oy * stride - pad + ky;
                             if (iy < 0 || iy >= h) continue;
                             for (int kx = 0; kx < kw; ++kx) {
                               const int ix = ox * stride - pad + kx;
                               if (ix < 0 || ix >= wd) continue;
                               double* dst = g.data() + (static_cast<std::size_t>(iy) * wd + ix) * cin;
                               const double* s = src + (ky * kw + kx) * cin;
                               for (int ci = 0; ci < cin; ++ci) dst[ci] += s[ci];
                             }
                           }
                         }
                     });
                   });
}

Var avg_pool2d(const Var& x, int ph, int pw) {
  require(x.rank() == 3, "avg_pool2d: expected [H,W,C]");
  const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
  require(ph > 0 && pw > 0 && h % ph == 0 && w % pw == 0, "avg_pool2d: window must divide input");
  const int ho = h / ph, wo = w / pw;
  const double inv = 1.0 / (ph * pw);
  std::vector<double> out(static_cast<std::size_t>(ho) * wo * c, 0.0);
  for (int y = 0; y < h; ++y)
    for (int xx = 0; xx < w; ++xx)
      for (int ch = 0; ch < c; ++ch)
        out[(static_cast<std::size_t>(y / ph) * wo + xx / pw) * c + ch] +=
            x[(static_cast<std::size_t>(y) * w + xx) * c + ch] * inv;
  return make_node(std::move(out), {ho, wo, c}, {x}, [=](Node& self) {
    accumulate(self, 0, [&](std::vector<double>& g) {
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx)
          for (int ch = 0; ch < c; ++ch)
            g[(static_cast<std::size_t>(y) * w + xx) * c + ch] +=
                self.grad[(static_cast<std::size_t>(y / ph) * wo + xx / pw) * c + ch] * inv;
    });
  });
}

}  // namespace vidode::ad
