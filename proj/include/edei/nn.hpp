#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <new>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "edei/core.hpp"

namespace edei::nn {

/// Row-major dense matrix of doubles.
/// Training allocates and frees the same large buffers every update; keeping
/// freed memory in the heap instead of returning it to the OS avoids
/// re-faulting those pages each time.
inline void retain_freed_memory() {
#ifdef __GLIBC__
  static const bool once = [] { return mallopt(M_TRIM_THRESHOLD, 256 << 20) == 1; }();
  (void)once;
#endif
}

// Vectorised loops peel unaligned leading elements into scalar code, so the
// rounding of a result would depend on where the heap put the buffer. Every
// buffer starts on a 64-byte boundary to keep runs bit-identical.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t alignment{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, alignment); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Buffer data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  Matrix(std::size_t r, std::size_t c, const std::vector<double>& values) : rows(r), cols(c), data(values.begin(), values.end()) {
    if (data.size() != r * c) throw ShapeError("matrix: value count does not match shape");
  }

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
  std::size_t size() const { return data.size(); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
  void fill(double v) { std::fill(data.begin(), data.end(), v); }

  bool operator==(const Matrix&) const = default;
};

inline std::string shape_str(const Matrix& m) { return std::to_string(m.rows) + "x" + std::to_string(m.cols); }

using RowMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstRowMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

inline ConstRowMap view(const Matrix& m) {
  return ConstRowMap(m.data.data(), static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols));
}
inline RowMap view(Matrix& m) { return RowMap(m.data.data(), static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols)); }

// C += A * B
inline void gemm_acc(const Matrix& a, const Matrix& b, Matrix& c) { view(c).noalias() += view(a) * view(b); }

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) t.data[j * a.rows + i] = a.data[i * a.cols + j];
  return t;
}

// C += A * B^T
inline void gemm_nt_acc(const Matrix& a, const Matrix& b, Matrix& c) { view(c).noalias() += view(a) * view(b).transpose(); }

// C += A^T * B
inline void gemm_tn_acc(const Matrix& a, const Matrix& b, Matrix& c) { view(c).noalias() += view(a).transpose() * view(b); }

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
};

/// Named parameter tensors. Shapes are fixed once added.
class ParameterStore {
 public:
  std::size_t add(std::string name, std::size_t rows, std::size_t cols) {
    for (const auto& p : params_)
      if (p.name == name) throw ShapeError("parameter store: duplicate name " + name);
    params_.push_back({std::move(name), Matrix(rows, cols), Matrix(rows, cols)});
    return params_.size() - 1;
  }

  Parameter& operator[](std::size_t i) { return params_.at(i); }
  const Parameter& operator[](std::size_t i) const { return params_.at(i); }
  std::size_t size() const { return params_.size(); }
  std::vector<Parameter>& all() { return params_; }
  const std::vector<Parameter>& all() const { return params_; }

  std::size_t find(const std::string& name) const {
    for (std::size_t i = 0; i < params_.size(); ++i)
      if (params_[i].name == name) return i;
    throw ShapeError("parameter store: no parameter named " + name);
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.grad.fill(0.0);
  }

  bool all_finite() const {
    for (const auto& p : params_)
      for (double v : p.value.data)
        if (!std::isfinite(v)) return false;
    return true;
  }

  /// Copies values from a store with identical layout.
  void assign_values(const ParameterStore& other) {
    check_same_layout(other);
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i].value = other.params_[i].value;
  }

  void check_same_layout(const ParameterStore& other) const {
    if (other.params_.size() != params_.size()) throw ShapeError("parameter store: layouts differ in tensor count");
    for (std::size_t i = 0; i < params_.size(); ++i)
      if (!params_[i].value.same_shape(other.params_[i].value) || params_[i].name != other.params_[i].name)
        throw ShapeError("parameter store: layouts differ at " + params_[i].name);
  }

 private:
  std::vector<Parameter> params_;
};

class Tape;

/// Handle to a value recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;
  const Matrix& value() const;
};

/// Records a forward computation so one scalar loss can be differentiated.
/// A tape supports exactly one backward pass.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Var constant(Matrix value) { return push(std::move(value), false, nullptr, {}); }

  Var parameter(Parameter& p) { return push(p.value, true, &p, {}); }

  Var record(Matrix value, bool requires_grad, BackwardFn backward) {
    return push(std::move(value), requires_grad, nullptr, std::move(backward));
  }

  const Matrix& value(Var v) const { return entries_.at(v.id).value; }
  Matrix& grad(Var v) { return grad(v.id); }
  Matrix& grad(std::size_t id) {
    auto& e = entries_[id];
    if (e.grad.size() != e.value.size()) e.grad = Matrix(e.value.rows, e.value.cols);
    return e.grad;
  }
  bool requires_grad(Var v) const { return entries_.at(v.id).requires_grad; }
  std::size_t size() const { return entries_.size(); }

  /// Back-propagates d(loss)/d(.) and accumulates into parameter gradients.
  void backward(Var loss) {
    if (backward_done_) throw Error("tape: backward called twice without a new forward pass");
    if (value(loss).size() != 1) throw ShapeError("tape: loss must be a scalar");
    backward_done_ = true;
    grad(loss).data[0] = 1.0;
    for (std::size_t id = loss.id + 1; id-- > 0;) {
      auto& e = entries_[id];
      if (!e.requires_grad || e.grad.size() == 0) continue;
      if (e.backward) e.backward(*this, id);
      if (e.param) {
        auto& g = e.param->grad.data;
        for (std::size_t k = 0; k < g.size(); ++k) g[k] += e.grad.data[k];
      }
    }
  }

 private:
  struct Entry {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };

  Var push(Matrix value, bool requires_grad, Parameter* param, BackwardFn fn) {
    entries_.push_back({std::move(value), Matrix(), requires_grad, param, std::move(fn)});
    return {this, entries_.size() - 1};
  }

  std::vector<Entry> entries_;
  bool backward_done_ = false;
};

inline const Matrix& Var::value() const { return tape->value(*this); }

// ---- operations -----------------------------------------------------------

inline Var matmul(Var a, Var b) {
  Tape& t = *a.tape;
  const Matrix& A = a.value();
  const Matrix& B = b.value();
  if (A.cols != B.rows) throw ShapeError("matmul: " + shape_str(A) + " * " + shape_str(B));
  Matrix C(A.rows, B.cols);
  gemm_acc(A, B, C);
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.record(std::move(C), rg, [a, b](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    if (tp.requires_grad(a)) gemm_nt_acc(g, tp.value(b), tp.grad(a));
    if (tp.requires_grad(b)) gemm_tn_acc(tp.value(a), g, tp.grad(b));
  });
}

/// X + b with b a 1 x cols row broadcast over rows.
inline Var add_row(Var x, Var b) {
  Tape& t = *x.tape;
  const Matrix& X = x.value();
  const Matrix& B = b.value();
  if (B.rows != 1 || B.cols != X.cols) throw ShapeError("add_row: " + shape_str(X) + " + " + shape_str(B));
  Matrix Y = X;
  for (std::size_t i = 0; i < Y.rows; ++i)
    for (std::size_t j = 0; j < Y.cols; ++j) Y(i, j) += B.data[j];
  const bool rg = t.requires_grad(x) || t.requires_grad(b);
  return t.record(std::move(Y), rg, [x, b](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    if (tp.requires_grad(x)) {
      auto& gx = tp.grad(x).data;
      for (std::size_t k = 0; k < gx.size(); ++k) gx[k] += g.data[k];
    }
    if (tp.requires_grad(b)) {
      auto& gb = tp.grad(b);
      for (std::size_t i = 0; i < g.rows; ++i)
        for (std::size_t j = 0; j < g.cols; ++j) gb.data[j] += g(i, j);
    }
  });
}

namespace detail {

template <class Fwd, class Dfa, class Dfb>
Var binary(Var a, Var b, const char* name, Fwd fwd, Dfa dfa, Dfb dfb) {
  Tape& t = *a.tape;
  const Matrix& A = a.value();
  const Matrix& B = b.value();
  if (!A.same_shape(B)) throw ShapeError(std::string(name) + ": " + shape_str(A) + " vs " + shape_str(B));
  Matrix Y(A.rows, A.cols);
  for (std::size_t k = 0; k < Y.size(); ++k) Y.data[k] = fwd(A.data[k], B.data[k]);
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.record(std::move(Y), rg, [a, b, dfa, dfb](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    const Matrix& A = tp.value(a);
    const Matrix& B = tp.value(b);
    if (tp.requires_grad(a)) {
      auto& ga = tp.grad(a).data;
      for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += g.data[k] * dfa(A.data[k], B.data[k]);
    }
    if (tp.requires_grad(b)) {
      auto& gb = tp.grad(b).data;
      for (std::size_t k = 0; k < gb.size(); ++k) gb[k] += g.data[k] * dfb(A.data[k], B.data[k]);
    }
  });
}

// Records y = f(x) given precomputed y; the derivative is expressed through y.
template <class DfY>
Var record_unary_y(Var x, Matrix Y, DfY dfy) {
  Tape& t = *x.tape;
  return t.record(std::move(Y), t.requires_grad(x), [x, dfy](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    const auto& y = tp.value(Var{&tp, self}).data;
    auto& gx = tp.grad(x).data;
    for (std::size_t k = 0; k < gx.size(); ++k) gx[k] += g.data[k] * dfy(y[k]);
  });
}

template <class Fwd, class DfY>
Var unary_y(Var x, Fwd fwd, DfY dfy) {
  const Matrix& X = x.value();
  Matrix Y(X.rows, X.cols);
  for (std::size_t k = 0; k < Y.size(); ++k) Y.data[k] = fwd(X.data[k]);
  return record_unary_y(x, std::move(Y), dfy);
}

}  // namespace detail

inline Var add(Var a, Var b) {
  return detail::binary(a, b, "add", [](double p, double q) { return p + q; }, [](double, double) { return 1.0; },
                        [](double, double) { return 1.0; });
}
inline Var sub(Var a, Var b) {
  return detail::binary(a, b, "sub", [](double p, double q) { return p - q; }, [](double, double) { return 1.0; },
                        [](double, double) { return -1.0; });
}
inline Var mul(Var a, Var b) {
  return detail::binary(a, b, "mul", [](double p, double q) { return p * q; }, [](double, double q) { return q; },
                        [](double p, double) { return p; });
}

inline double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Vectorised in-place maps over a whole matrix. exp overflow saturates to
// the correct limits.
inline void tanh_inplace(Matrix& m) {
  auto a = Eigen::Map<Eigen::ArrayXd>(m.data.data(), static_cast<Eigen::Index>(m.data.size()));
  a = 1.0 - 2.0 / ((2.0 * a).exp() + 1.0);
}

inline void logistic_inplace(Matrix& m) {
  auto a = Eigen::Map<Eigen::ArrayXd>(m.data.data(), static_cast<Eigen::Index>(m.data.size()));
  a = 1.0 / (1.0 + (-a).exp());
}

inline Var sigmoid(Var x) {
  Matrix y = x.value();
  logistic_inplace(y);
  return detail::record_unary_y(x, std::move(y), [](double v) { return v * (1.0 - v); });
}
inline Var tanh(Var x) {
  Matrix y = x.value();
  tanh_inplace(y);
  return detail::record_unary_y(x, std::move(y), [](double v) { return 1.0 - v * v; });
}
inline Var one_minus(Var x) {
  return detail::unary_y(x, [](double v) { return 1.0 - v; }, [](double) { return -1.0; });
}
inline Var scale(Var x, double s) {
  return detail::unary_y(x, [s](double v) { return s * v; }, [s](double) { return s; });
}

/// Concatenates along columns; all parts share the row count.
inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: nothing to concatenate");
  Tape& t = *parts.front().tape;
  const std::size_t rows = parts.front().value().rows;
  std::size_t cols = 0;
  bool rg = false;
  for (Var p : parts) {
    if (p.value().rows != rows) throw ShapeError("concat_cols: row counts differ");
    cols += p.value().cols;
    rg = rg || t.requires_grad(p);
  }
  Matrix Y(rows, cols);
  std::size_t off = 0;
  for (Var p : parts) {
    const Matrix& P = p.value();
    for (std::size_t i = 0; i < rows; ++i)
      std::copy_n(&P.data[i * P.cols], P.cols, &Y.data[i * cols + off]);
    off += P.cols;
  }
  return t.record(std::move(Y), rg, [parts, cols](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    std::size_t off = 0;
    for (Var p : parts) {
      const std::size_t pc = tp.value(p).cols;
      if (tp.requires_grad(p)) {
        Matrix& gp = tp.grad(p);
        for (std::size_t i = 0; i < g.rows; ++i)
          for (std::size_t j = 0; j < pc; ++j) gp.data[i * pc + j] += g.data[i * cols + off + j];
      }
      off += pc;
    }
  });
}

/// Same-length 1x3 convolution along each row with zero padding:
///   y[j] = k0 * x[j+1] + k1 * x[j] + k2 * x[j-1] + bias
/// so kernel [0,1,0] is the identity and [1,0,0] shifts left.
inline Var conv1x3(Var x, Var kernel, Var bias) {
  Tape& t = *x.tape;
  const Matrix& X = x.value();
  const Matrix& K = kernel.value();
  const Matrix& B = bias.value();
  if (K.size() != 3 || B.size() != 1) throw ShapeError("conv1x3: kernel must be 1x3 and bias 1x1");
  if (X.cols < 1) throw ShapeError("conv1x3: empty input row");
  const std::size_t L = X.cols;
  Matrix Y(X.rows, L);
  for (std::size_t i = 0; i < X.rows; ++i) {
    for (std::size_t j = 0; j < L; ++j) {
      double s = B.data[0] + K.data[1] * X(i, j);
      if (j + 1 < L) s += K.data[0] * X(i, j + 1);
      if (j > 0) s += K.data[2] * X(i, j - 1);
      Y(i, j) = s;
    }
  }
  const bool rg = t.requires_grad(x) || t.requires_grad(kernel) || t.requires_grad(bias);
  return t.record(std::move(Y), rg, [x, kernel, bias, L](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    const Matrix& X = tp.value(x);
    const Matrix& K = tp.value(kernel);
    if (tp.requires_grad(x)) {
      Matrix& gx = tp.grad(x);
      for (std::size_t i = 0; i < g.rows; ++i)
        for (std::size_t j = 0; j < L; ++j) {
          const double gy = g(i, j);
          gx(i, j) += K.data[1] * gy;
          if (j + 1 < L) gx(i, j + 1) += K.data[0] * gy;
          if (j > 0) gx(i, j - 1) += K.data[2] * gy;
        }
    }
    if (tp.requires_grad(kernel)) {
      Matrix& gk = tp.grad(kernel);
      for (std::size_t i = 0; i < g.rows; ++i)
        for (std::size_t j = 0; j < L; ++j) {
          const double gy = g(i, j);
          gk.data[1] += gy * X(i, j);
          if (j + 1 < L) gk.data[0] += gy * X(i, j + 1);
          if (j > 0) gk.data[2] += gy * X(i, j - 1);
        }
    }
    if (tp.requires_grad(bias)) {
      double s = 0.0;
      for (double v : g.data) s += v;
      tp.grad(bias).data[0] += s;
    }
  });
}

/// Row-wise softmax restricted to entries whose mask is non-zero; masked
/// entries come out exactly 0.
inline Var masked_softmax(Var logits, const Matrix& mask) {
  Tape& t = *logits.tape;
  const Matrix& Z = logits.value();
  if (!Z.same_shape(mask)) throw ShapeError("masked_softmax: mask shape differs");
  Matrix P(Z.rows, Z.cols);
  for (std::size_t i = 0; i < Z.rows; ++i) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < Z.cols; ++j)
      if (mask(i, j) != 0.0) mx = std::max(mx, Z(i, j));
    if (mx == -INFINITY) throw ShapeError("masked_softmax: row with an empty mask");
    double sum = 0.0;
    for (std::size_t j = 0; j < Z.cols; ++j)
      if (mask(i, j) != 0.0) sum += (P(i, j) = std::exp(Z(i, j) - mx));
    for (std::size_t j = 0; j < Z.cols; ++j) P(i, j) /= sum;
  }
  return t.record(std::move(P), t.requires_grad(logits), [logits](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    const Matrix& P = tp.value(Var{&tp, self});
    Matrix& gz = tp.grad(logits);
    for (std::size_t i = 0; i < P.rows; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < P.cols; ++j) dot += g(i, j) * P(i, j);
      for (std::size_t j = 0; j < P.cols; ++j) gz(i, j) += P(i, j) * (g(i, j) - dot);
    }
  });
}

inline Var sum_all(Var x) {
  Tape& t = *x.tape;
  double s = 0.0;
  for (double v : x.value().data) s += v;
  return t.record(Matrix(1, 1, s), t.requires_grad(x), [x](Tape& tp, std::size_t self) {
    const double g = tp.grad(self).data[0];
    for (double& v : tp.grad(x).data) v += g;
  });
}

inline Var mean_all(Var x) {
  const double n = static_cast<double>(x.value().size());
  return scale(sum_all(x), 1.0 / n);
}

/// Mean of (pred - target)^2.
inline Var mse(Var pred, const Matrix& target) {
  Tape& t = *pred.tape;
  const Matrix& P = pred.value();
  if (!P.same_shape(target)) throw ShapeError("mse: " + shape_str(P) + " vs " + shape_str(target));
  double s = 0.0;
  for (std::size_t k = 0; k < P.size(); ++k) {
    const double d = P.data[k] - target.data[k];
    s += d * d;
  }
  const double n = static_cast<double>(P.size());
  return t.record(Matrix(1, 1, s / n), t.requires_grad(pred), [pred, target, n](Tape& tp, std::size_t self) {
    const double g = tp.grad(self).data[0];
    const Matrix& P = tp.value(pred);
    auto& gp = tp.grad(pred).data;
    for (std::size_t k = 0; k < gp.size(); ++k) gp[k] += g * 2.0 * (P.data[k] - target.data[k]) / n;
  });
}

/// Mean binary cross-entropy of logistic(logits) against 0/1 targets,
/// evaluated in the numerically stable logit form.
inline Var bce_with_logits(Var logits, const Matrix& target) {
  Tape& t = *logits.tape;
  const Matrix& Z = logits.value();
  if (!Z.same_shape(target)) throw ShapeError("bce_with_logits: " + shape_str(Z) + " vs " + shape_str(target));
  double s = 0.0;
  for (std::size_t k = 0; k < Z.size(); ++k) {
    const double z = Z.data[k];
    s += std::max(z, 0.0) - z * target.data[k] + std::log1p(std::exp(-std::abs(z)));
  }
  const double n = static_cast<double>(Z.size());
  return t.record(Matrix(1, 1, s / n), t.requires_grad(logits), [logits, target, n](Tape& tp, std::size_t self) {
    const double g = tp.grad(self).data[0];
    const Matrix& Z = tp.value(logits);
    auto& gz = tp.grad(logits).data;
    for (std::size_t k = 0; k < gz.size(); ++k) gz[k] += g * (logistic(Z.data[k]) - target.data[k]) / n;
  });
}

// ---- layers ---------------------------------------------------------------

/// Uniform Glorot initialisation.
inline void init_uniform(Matrix& m, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : m.data) v = rng.uniform(-limit, limit);
}

struct Dense {
  std::size_t weight = 0;
  std::size_t bias = 0;

  static Dense create(ParameterStore& store, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng) {
    Dense d;
    d.weight = store.add(prefix + ".W", in, out);
    d.bias = store.add(prefix + ".b", 1, out);
    init_uniform(store[d.weight].value, in, out, rng);
    return d;
  }

  /// With trainable == false the parameters enter as constants and receive
  /// no gradient.
  Var operator()(Tape& t, ParameterStore& store, Var x, bool trainable = true) const {
    auto p = [&](std::size_t i) { return trainable ? t.parameter(store[i]) : t.constant(store[i].value); };
    return add_row(matmul(x, p(weight)), p(bias));
  }

  Matrix eval(const ParameterStore& store, const Matrix& x) const {
    const Matrix& W = store[weight].value;
    const Matrix& b = store[bias].value;
    if (x.cols != W.rows) throw ShapeError("dense: input " + shape_str(x) + " for weight " + shape_str(W));
    Matrix y(x.rows, W.cols);
    for (std::size_t i = 0; i < y.rows; ++i) std::copy(b.data.begin(), b.data.end(), y.data.begin() + i * y.cols);
    gemm_acc(x, W, y);
    return y;
  }
};

/// Multi-layer perceptron with tanh hidden layers and a linear output.
struct Mlp {
  std::vector<Dense> layers;

  static Mlp create(ParameterStore& store, const std::string& prefix, std::size_t in, const std::vector<std::size_t>& hidden,
                    std::size_t out, Rng& rng) {
    Mlp m;
    std::size_t prev = in;
    for (std::size_t k = 0; k < hidden.size(); ++k) {
      m.layers.push_back(Dense::create(store, prefix + ".l" + std::to_string(k), prev, hidden[k], rng));
      prev = hidden[k];
    }
    m.layers.push_back(Dense::create(store, prefix + ".out", prev, out, rng));
    return m;
  }

  Var operator()(Tape& t, ParameterStore& store, Var x, bool trainable = true) const {
    for (std::size_t k = 0; k < layers.size(); ++k) {
      x = layers[k](t, store, x, trainable);
      if (k + 1 < layers.size()) x = nn::tanh(x);
    }
    return x;
  }

  /// Forward pass without recording.
  Matrix eval(const ParameterStore& store, Matrix x) const {
    for (std::size_t k = 0; k < layers.size(); ++k) {
      x = layers[k].eval(store, x);
      if (k + 1 < layers.size()) tanh_inplace(x);
    }
    return x;
  }
};

/// Standard GRU cell:
///   z = s(x Wz + h Uz + bz), r = s(x Wr + h Ur + br)
///   c = tanh(x Wc + (r . h) Uc + bc), h' = (1 - z) . h + z . c
struct GruCell {
  std::size_t wz = 0, uz = 0, bz = 0;
  std::size_t wr = 0, ur = 0, br = 0;
  std::size_t wc = 0, uc = 0, bc = 0;
  std::size_t input = 0;
  std::size_t hidden = 0;

  static GruCell create(ParameterStore& s, const std::string& prefix, std::size_t in, std::size_t hid, Rng& rng) {
    GruCell g;
    g.input = in;
    g.hidden = hid;
    auto mk = [&](const char* name, std::size_t r, std::size_t c) {
      const std::size_t i = s.add(prefix + "." + name, r, c);
      if (r > 1) init_uniform(s[i].value, r, c, rng);
      return i;
    };
    g.wz = mk("Wz", in, hid);
    g.uz = mk("Uz", hid, hid);
    g.bz = mk("bz", 1, hid);
    g.wr = mk("Wr", in, hid);
    g.ur = mk("Ur", hid, hid);
    g.br = mk("br", 1, hid);
    g.wc = mk("Wc", in, hid);
    g.uc = mk("Uc", hid, hid);
    g.bc = mk("bc", 1, hid);
    return g;
  }

  Var operator()(Tape& t, ParameterStore& s, Var x, Var h) const {
    auto p = [&](std::size_t i) { return t.parameter(s[i]); };
    Var z = sigmoid(add_row(add(matmul(x, p(wz)), matmul(h, p(uz))), p(bz)));
    Var r = sigmoid(add_row(add(matmul(x, p(wr)), matmul(h, p(ur))), p(br)));
    Var c = nn::tanh(add_row(add(matmul(x, p(wc)), matmul(mul(r, h), p(uc))), p(bc)));
    return add(mul(one_minus(z), h), mul(z, c));
  }
};

struct GruOutput {
  std::vector<Var> outputs;
  Var last;
};

/// Unrolls the cell over a sequence of (rows x input) matrices.
inline GruOutput gru_forward(Tape& t, ParameterStore& s, const GruCell& cell, std::span<const Var> inputs, Var h0) {
  if (h0.value().cols != cell.hidden) throw ShapeError("gru_forward: initial state has wrong width");
  GruOutput out;
  Var h = h0;
  for (Var x : inputs) {
    if (x.value().cols != cell.input || x.value().rows != h0.value().rows)
      throw ShapeError("gru_forward: input step has shape " + shape_str(x.value()));
    h = cell(t, s, x, h);
    out.outputs.push_back(h);
  }
  out.last = h;
  return out;
}

// ---- optimisation ---------------------------------------------------------

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adaptive-moment optimiser bound to one parameter store layout.
class Adam {
 public:
  Adam() = default;
  Adam(const ParameterStore& store, AdamConfig cfg) : cfg_(cfg) {
    for (const auto& p : store.all()) {
      m_.emplace_back(p.value.rows, p.value.cols);
      v_.emplace_back(p.value.rows, p.value.cols);
    }
  }

  /// Applies one update from the accumulated gradients. A step whose
  /// gradients are not all finite is skipped and counted. Returns whether
  /// the update was applied.
  bool step(ParameterStore& store) {
    if (store.size() != m_.size()) throw ShapeError("adam: parameter store layout changed");
    for (const auto& p : store.all())
      for (double g : p.grad.data)
        if (!std::isfinite(g)) {
          ++skipped_;
          return false;
        }
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < store.size(); ++i) {
      auto& p = store[i];
      auto flat = [](Matrix& x) { return Eigen::Map<Eigen::ArrayXd>(x.data.data(), static_cast<Eigen::Index>(x.data.size())); };
      auto m = flat(m_[i]);
      auto v = flat(v_[i]);
      const auto g = flat(p.grad);
      m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
      v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g * g;
      flat(p.value) -= cfg_.learning_rate * (m / c1) / ((v / c2).sqrt() + cfg_.epsilon);
    }
    if (!store.all_finite()) throw Error("adam: parameters became non-finite");
    return true;
  }

  std::size_t skipped() const { return skipped_; }
  std::size_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::size_t t_ = 0;
  std::size_t skipped_ = 0;
};

/// target <- rho * online + (1 - rho) * target, elementwise.
inline void soft_update(const ParameterStore& online, ParameterStore& target, double rho) {
  target.check_same_layout(online);
  for (std::size_t i = 0; i < online.size(); ++i) {
    const auto& src = online[i].value.data;
    auto& dst = target[i].value.data;
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = rho * src[k] + (1.0 - rho) * dst[k];
  }
}

}  // namespace edei::nn
