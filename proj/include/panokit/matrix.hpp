#pragma once

// Dense float64 matrices and the small set of neural primitives the rest of
// the library builds on. Everything is row-major and eagerly evaluated.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace panokit {

struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FileError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_)
      throw DimensionError("Matrix: data length " + std::to_string(data_.size()) +
                           " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double* row_ptr(std::size_t r) { return data_.data() + r * cols_; }
  const double* row_ptr(std::size_t r) const { return data_.data() + r * cols_; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  std::string shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  Matrix transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// splitmix64; a stated seed pins every random matrix bit-for-bit.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // [0, 1)
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  Matrix uniform_matrix(std::size_t rows, std::size_t cols, double lo, double hi) {
    Matrix m(rows, cols);
    for (double& v : m.data()) v = uniform(lo, hi);
    return m;
  }

 private:
  std::uint64_t state_;
};

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw DimensionError("matmul: " + a.shape_str() + " x " + b.shape_str());
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* brow = b.row_ptr(k);
      double* orow = out.row_ptr(i);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

inline Matrix add(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b))
    throw DimensionError("add: " + a.shape_str() + " vs " + b.shape_str());
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b.data()[i];
  return out;
}

inline Matrix scale(const Matrix& a, double s) {
  Matrix out = a;
  for (double& v : out.data()) v *= s;
  return out;
}

inline double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

inline double relu(double x) { return x > 0.0 ? x : 0.0; }

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

inline Matrix relu(const Matrix& m) {
  Matrix out = m;
  for (double& v : out.data()) v = relu(v);
  return out;
}

inline Matrix sigmoid(const Matrix& m) {
  Matrix out = m;
  for (double& v : out.data()) v = sigmoid(v);
  return out;
}

// Row-wise softmax with per-row max subtraction.
inline Matrix softmax_rows(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double* in = m.row_ptr(r);
    double* o = out.row_ptr(r);
    double mx = in[0];
    for (std::size_t c = 1; c < m.cols(); ++c) mx = std::max(mx, in[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < m.cols(); ++c) {
      o[c] = std::exp(in[c] - mx);
      sum += o[c];
    }
    for (std::size_t c = 0; c < m.cols(); ++c) o[c] /= sum;
  }
  return out;
}

// Per-row normalization followed by the gamma/beta affine. Population variance.
inline Matrix layer_norm(const Matrix& m, const std::vector<double>& gamma,
                         const std::vector<double>& beta, double eps = 1e-5) {
  if (gamma.size() != m.cols() || beta.size() != m.cols())
    throw DimensionError("layer_norm: affine length " + std::to_string(gamma.size()) +
                         " vs cols " + std::to_string(m.cols()));
  Matrix out(m.rows(), m.cols());
  const std::size_t n = m.cols();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double* in = m.row_ptr(r);
    double* o = out.row_ptr(r);
    double mean = 0.0;
    for (std::size_t c = 0; c < n; ++c) mean += in[c];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      double d = in[c] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c)
      o[c] = gamma[c] * ((in[c] - mean) * inv) + beta[c];
  }
  return out;
}

inline Matrix layer_norm(const Matrix& m, double eps = 1e-5) {
  std::vector<double> gamma(m.cols(), 1.0), beta(m.cols(), 0.0);
  return layer_norm(m, gamma, beta, eps);
}

struct LinearLayer {
  Matrix weight;              // [in x out]
  std::vector<double> bias;   // [out], all-zero allowed

  LinearLayer() = default;
  LinearLayer(Matrix w, std::vector<double> b) : weight(std::move(w)), bias(std::move(b)) {
    if (bias.size() != weight.cols())
      throw DimensionError("LinearLayer: bias length " + std::to_string(bias.size()) +
                           " vs out dim " + std::to_string(weight.cols()));
  }
  explicit LinearLayer(Matrix w) : weight(std::move(w)), bias(weight.cols(), 0.0) {}

  std::size_t in_dim() const { return weight.rows(); }
  std::size_t out_dim() const { return weight.cols(); }

  Matrix forward(const Matrix& x) const {
    Matrix out = matmul(x, weight);
    for (std::size_t r = 0; r < out.rows(); ++r)
      for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bias[c];
    return out;
  }

  static LinearLayer random_init(std::size_t in, std::size_t out, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    return LinearLayer(rng.uniform_matrix(in, out, -bound, bound),
                       std::vector<double>(out, 0.0));
  }
};

// Linear stack with ReLU between layers, none after the last.
struct Mlp {
  std::vector<LinearLayer> layers;

  Mlp() = default;
  explicit Mlp(std::vector<LinearLayer> ls) : layers(std::move(ls)) {
    for (std::size_t i = 0; i + 1 < layers.size(); ++i)
      if (layers[i].out_dim() != layers[i + 1].in_dim())
        throw DimensionError("Mlp: layer " + std::to_string(i) + " out " +
                             std::to_string(layers[i].out_dim()) + " != layer " +
                             std::to_string(i + 1) + " in " +
                             std::to_string(layers[i + 1].in_dim()));
  }

  Matrix forward(const Matrix& x) const {
    Matrix h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      h = layers[i].forward(h);
      if (i + 1 < layers.size()) h = relu(h);
    }
    return h;
  }

  static Mlp random_init(const std::vector<std::size_t>& dims, Rng& rng) {
    std::vector<LinearLayer> ls;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i)
      ls.push_back(LinearLayer::random_init(dims[i], dims[i + 1], rng));
    return Mlp(std::move(ls));
  }
};

inline Matrix mlp_forward(const Mlp& net, const Matrix& x) { return net.forward(x); }

// ---- analytic gradients (VJPs) for the primitives, consumed by grad_check ----

// y = softmax(x) per row; returns dL/dx given dL/dy.
inline Matrix softmax_rows_vjp(const Matrix& y, const Matrix& dy) {
  if (!y.same_shape(dy)) throw DimensionError("softmax_rows_vjp: shape mismatch");
  Matrix dx(y.rows(), y.cols());
  for (std::size_t r = 0; r < y.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < y.cols(); ++c) s += y(r, c) * dy(r, c);
    for (std::size_t c = 0; c < y.cols(); ++c) dx(r, c) = y(r, c) * (dy(r, c) - s);
  }
  return dx;
}

inline Matrix sigmoid_vjp(const Matrix& y, const Matrix& dy) {
  if (!y.same_shape(dy)) throw DimensionError("sigmoid_vjp: shape mismatch");
  Matrix dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i)
    dx.data()[i] *= y.data()[i] * (1.0 - y.data()[i]);
  return dx;
}

// y = x W + b; returns dL/dx.
inline Matrix linear_vjp_input(const LinearLayer& layer, const Matrix& dy) {
  return matmul(dy, layer.weight.transposed());
}

// Gradient of layer_norm w.r.t. its input, given upstream dL/dy.
inline Matrix layer_norm_vjp(const Matrix& x, const std::vector<double>& gamma,
                             const Matrix& dy, double eps = 1e-5) {
  Matrix dx(x.rows(), x.cols());
  const std::size_t n = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double mean = 0.0;
    for (std::size_t c = 0; c < n; ++c) mean += x(r, c);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      double d = x(r, c) - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    double g_mean = 0.0, gx_mean = 0.0;
    std::vector<double> xhat(n), g(n);
    for (std::size_t c = 0; c < n; ++c) {
      xhat[c] = (x(r, c) - mean) * inv;
      g[c] = gamma[c] * dy(r, c);
      g_mean += g[c];
      gx_mean += g[c] * xhat[c];
    }
    g_mean /= static_cast<double>(n);
    gx_mean /= static_cast<double>(n);
    for (std::size_t c = 0; c < n; ++c)
      dx(r, c) = (g[c] - g_mean - xhat[c] * gx_mean) * inv;
  }
  return dx;
}

// Central-difference check of an analytic gradient. Returns the max relative
// error over all entries.
inline double grad_check(const std::function<double(const Matrix&)>& f,
                         const Matrix& analytic_grad, const Matrix& x, double h) {
  if (!analytic_grad.same_shape(x))
    throw DimensionError("grad_check: grad shape " + analytic_grad.shape_str() +
                         " vs x " + x.shape_str());
  double max_err = 0.0;
  Matrix probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + h;
    const double fp = f(probe);
    probe.data()[i] = orig - h;
    const double fm = f(probe);
    probe.data()[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericError("grad_check: non-finite function value");
    const double num = (fp - fm) / (2.0 * h);
    const double ana = analytic_grad.data()[i];
    const double err = std::abs(num - ana) / std::max(std::abs(ana), 1e-8);
    max_err = std::max(max_err, err);
  }
  return max_err;
}

// ---- text format for golden files: "rows cols" header, 17 sig digits ----

inline void write_matrix_text(std::ostream& os, const Matrix& m) {
  os << m.rows() << " " << m.cols() << "\n";
  char buf[64];
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", m(r, c));
      if (c) os << " ";
      os << buf;
    }
    os << "\n";
  }
}

inline Matrix read_matrix_text(std::istream& is) {
  std::size_t rows = 0, cols = 0;
  if (!(is >> rows >> cols)) throw FileError("matrix text: bad header");
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i)
    if (!(is >> m.data()[i])) throw FileError("matrix text: truncated data");
  return m;
}

inline void save_matrix(const std::string& path, const Matrix& m) {
  std::ofstream os(path);
  if (!os) throw FileError("cannot open for write: " + path);
  write_matrix_text(os, m);
}

inline Matrix load_matrix(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FileError("cannot open: " + path);
  return read_matrix_text(is);
}

}  // namespace panokit
