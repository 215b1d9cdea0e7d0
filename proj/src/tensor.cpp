#include "snip/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace snip {

namespace {

std::size_t checked_count(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

}  // namespace

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(std::vector<int> shape) : p_(std::make_shared<Payload>()) {
  const std::size_t n = checked_count(shape);
  p_->shape = std::move(shape);
  p_->data.assign(n, 0.0);
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : p_(std::make_shared<Payload>()) {
  const std::size_t n = checked_count(shape);
  if (n != data.size()) {
    throw ShapeError("data size " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  }
  p_->shape = std::move(shape);
  p_->data = std::move(data);
}

Tensor Tensor::randn(std::vector<int> shape, Rng& rng, double stddev, double mean) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.normal(mean, stddev);
  return t;
}

int Tensor::rows() const {
  if (p_->shape.empty()) return 1;
  if (p_->shape.size() == 1) return 1;
  std::size_t r = 1;
  for (std::size_t i = 0; i + 1 < p_->shape.size(); ++i) r *= static_cast<std::size_t>(p_->shape[i]);
  return static_cast<int>(r);
}

int Tensor::cols() const {
  if (p_->shape.empty()) return 1;
  return p_->shape.back();
}

std::vector<double>& Tensor::grad() {
  if (p_->grad.size() != p_->data.size()) p_->grad.assign(p_->data.size(), 0.0);
  return p_->grad;
}

const std::vector<double>& Tensor::grad() const {
  if (p_->grad.size() != p_->data.size()) {
    throw ShapeError("gradient not populated; run backward first");
  }
  return p_->grad;
}

void Tensor::zero_grad() { p_->grad.assign(p_->data.size(), 0.0); }

double Tensor::value() const {
  if (size() != 1) throw ShapeError("value() requires a scalar, got " + shape_str(shape()));
  return p_->data[0];
}

double Tensor::max_abs() const {
  double m = 0.0;
  for (double v : p_->data) m = std::max(m, std::fabs(v));
  return m;
}

double Tensor::max_abs_rows(int row_limit) const {
  const int n = cols();
  const int r = std::min(row_limit, rows());
  double m = 0.0;
  for (int i = 0; i < r * n; ++i) m = std::max(m, std::fabs(p_->data[static_cast<std::size_t>(i)]));
  return m;
}

double gelu_value(double x) { return 0.5 * x * std::erfc(-x * kInvSqrt2); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * std::erfc(-x * kInvSqrt2);
  const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
  return cdf + x * pdf;
}

void Graph::track(const Tensor& t) {
  if (touched_keys_.insert(t.storage_key()).second) touched_.push_back(t);
}

Tensor Graph::make_output(std::vector<int> shape) {
  Tensor out(std::move(shape));
  out.p_->node_id = next_id_++;
  track(out);
  return out;
}

void Graph::clear() {
  nodes_.clear();
  touched_.clear();
  touched_keys_.clear();
  next_id_ = 0;
}

void Graph::backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw ShapeError("backward requires a scalar loss, got " + shape_str(loss.shape()));
  }
  for (Tensor& t : touched_) t.zero_grad();
  loss.p_->grad[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->back();
}

Tensor Graph::matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.cols() != b.rows()) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  const int m = a.rows(), k = a.cols(), n = b.cols();
  track(a);
  track(b);
  Tensor out = make_output({m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      const double* brow = pb + p * n;
      double* orow = po + i * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  push([a, b, out, m, k, n]() {
    const auto& go = out.p_->grad;
    auto& ga = a.p_->grad;
    auto& gb = b.p_->grad;
    const auto& da = a.p_->data;
    const auto& db = b.p_->data;
    // dA = dOut * B^T ; dB = A^T * dOut
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) {
        const double g = go[static_cast<std::size_t>(i) * n + j];
        if (g == 0.0) continue;
        for (int p = 0; p < k; ++p) {
          ga[static_cast<std::size_t>(i) * k + p] += g * db[static_cast<std::size_t>(p) * n + j];
          gb[static_cast<std::size_t>(p) * n + j] += da[static_cast<std::size_t>(i) * k + p] * g;
        }
      }
    }
  });
  return out;
}

Tensor Graph::transpose(const Tensor& a) {
  if (a.ndim() != 2) throw ShapeError("transpose expects a matrix, got " + shape_str(a.shape()));
  const int m = a.rows(), n = a.cols();
  track(a);
  Tensor out = make_output({n, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(j, i) = a.at(i, j);
  push([a, out, m, n]() {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        a.p_->grad[static_cast<std::size_t>(i) * n + j] +=
            out.p_->grad[static_cast<std::size_t>(j) * m + i];
  });
  return out;
}

Tensor Graph::add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  track(a);
  track(b);
  Tensor out = make_output(a.shape());
  for (int i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  push([a, b, out]() {
    for (std::size_t i = 0; i < out.p_->grad.size(); ++i) {
      a.p_->grad[i] += out.p_->grad[i];
      b.p_->grad[i] += out.p_->grad[i];
    }
  });
  return out;
}

Tensor Graph::add_row(const Tensor& a, const Tensor& bias) {
  if (bias.size() != a.cols()) {
    throw ShapeError("add_row: bias " + shape_str(bias.shape()) + " vs matrix " +
                     shape_str(a.shape()));
  }
  const int m = a.rows(), n = a.cols();
  track(a);
  track(bias);
  Tensor out = make_output(a.shape());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[i * n + j] = a[i * n + j] + bias[j];
  push([a, bias, out, m, n]() {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        const double g = out.p_->grad[static_cast<std::size_t>(i) * n + j];
        a.p_->grad[static_cast<std::size_t>(i) * n + j] += g;
        bias.p_->grad[static_cast<std::size_t>(j)] += g;
      }
  });
  return out;
}

Tensor Graph::scale(const Tensor& a, double c) {
  track(a);
  Tensor out = make_output(a.shape());
  for (int i = 0; i < a.size(); ++i) out[i] = a[i] * c;
  push([a, out, c]() {
    for (std::size_t i = 0; i < out.p_->grad.size(); ++i) a.p_->grad[i] += c * out.p_->grad[i];
  });
  return out;
}

Tensor Graph::add_const(const Tensor& a, double c) {
  track(a);
  Tensor out = make_output(a.shape());
  for (int i = 0; i < a.size(); ++i) out[i] = a[i] + c;
  push([a, out]() {
    for (std::size_t i = 0; i < out.p_->grad.size(); ++i) a.p_->grad[i] += out.p_->grad[i];
  });
  return out;
}

Tensor Graph::relu(const Tensor& a) {
  track(a);
  Tensor out = make_output(a.shape());
  for (int i = 0; i < a.size(); ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
  push([a, out]() {
    for (std::size_t i = 0; i < out.p_->grad.size(); ++i)
      if (a.p_->data[i] > 0.0) a.p_->grad[i] += out.p_->grad[i];
  });
  return out;
}

Tensor Graph::gelu(const Tensor& a) {
  track(a);
  Tensor out = make_output(a.shape());
  for (int i = 0; i < a.size(); ++i) out[i] = gelu_value(a[i]);
  push([a, out]() {
    for (std::size_t i = 0; i < out.p_->grad.size(); ++i)
      a.p_->grad[i] += gelu_derivative(a.p_->data[i]) * out.p_->grad[i];
  });
  return out;
}

Tensor Graph::tanh(const Tensor& a) {
  track(a);
  Tensor out = make_output(a.shape());
  for (int i = 0; i < a.size(); ++i) out[i] = std::tanh(a[i]);
  push([a, out]() {
    for (std::size_t i = 0; i < out.p_->grad.size(); ++i)
      a.p_->grad[i] += (1.0 - out.p_->data[i] * out.p_->data[i]) * out.p_->grad[i];
  });
  return out;
}

Tensor Graph::abs(const Tensor& a) {
  track(a);
  Tensor out = make_output(a.shape());
  for (int i = 0; i < a.size(); ++i) out[i] = std::fabs(a[i]);
  push([a, out]() {
    for (std::size_t i = 0; i < out.p_->grad.size(); ++i) {
      const double x = a.p_->data[i];
      if (x > 0.0)
        a.p_->grad[i] += out.p_->grad[i];
      else if (x < 0.0)
        a.p_->grad[i] -= out.p_->grad[i];
    }
  });
  return out;
}

Tensor Graph::activation(const Tensor& a, Activation kind) {
  switch (kind) {
    case Activation::relu:
      return relu(a);
    case Activation::gelu:
      return gelu(a);
  }
  throw ConfigError("unknown activation kind");
}

Tensor Graph::softmax_rows(const Tensor& a) {
  const int m = a.rows(), n = a.cols();
  track(a);
  Tensor out = make_output(a.shape());
  for (int i = 0; i < m; ++i) {
    double mx = a[i * n];
    for (int j = 1; j < n; ++j) mx = std::max(mx, a[i * n + j]);
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
      const double e = std::exp(a[i * n + j] - mx);
      out[i * n + j] = e;
      sum += e;
    }
    for (int j = 0; j < n; ++j) out[i * n + j] /= sum;
  }
  push([a, out, m, n]() {
    for (int i = 0; i < m; ++i) {
      double dot = 0.0;
      for (int j = 0; j < n; ++j)
        dot += out.p_->grad[static_cast<std::size_t>(i) * n + j] *
               out.p_->data[static_cast<std::size_t>(i) * n + j];
      for (int j = 0; j < n; ++j) {
        const std::size_t k = static_cast<std::size_t>(i) * n + j;
        a.p_->grad[k] += (out.p_->grad[k] - dot) * out.p_->data[k];
      }
    }
  });
  return out;
}

Tensor Graph::layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                         double eps) {
  const int n = x.cols();
  if (gain.size() != n || bias.size() != n) {
    throw ShapeError("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" +
                     shape_str(bias.shape()) + " vs last dim of " + shape_str(x.shape()));
  }
  if (eps <= 0.0) throw ShapeError("layer_norm: eps must be positive");
  const int m = x.rows();
  track(x);
  track(gain);
  track(bias);
  Tensor out = make_output(x.shape());
  // Normalized values are recomputed in backward from these.
  auto inv_std = std::make_shared<std::vector<double>>(m);
  auto means = std::make_shared<std::vector<double>>(m);
  for (int i = 0; i < m; ++i) {
    double mean = 0.0;
    for (int j = 0; j < n; ++j) mean += x[i * n + j];
    mean /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      const double d = x[i * n + j] - mean;
      var += d * d;
    }
    var /= n;
    const double is = 1.0 / std::sqrt(var + eps);
    (*means)[i] = mean;
    (*inv_std)[i] = is;
    for (int j = 0; j < n; ++j)
      out[i * n + j] = (x[i * n + j] - mean) * is * gain[j] + bias[j];
  }
  push([x, gain, bias, out, means, inv_std, m, n]() {
    for (int i = 0; i < m; ++i) {
      const double mean = (*means)[i];
      const double is = (*inv_std)[i];
      double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
      for (int j = 0; j < n; ++j) {
        const std::size_t k = static_cast<std::size_t>(i) * n + j;
        const double xhat = (x.p_->data[k] - mean) * is;
        const double dy = out.p_->grad[k];
        const double dxhat = dy * gain.p_->data[static_cast<std::size_t>(j)];
        gain.p_->grad[static_cast<std::size_t>(j)] += dy * xhat;
        bias.p_->grad[static_cast<std::size_t>(j)] += dy;
        sum_dxhat += dxhat;
        sum_dxhat_xhat += dxhat * xhat;
      }
      for (int j = 0; j < n; ++j) {
        const std::size_t k = static_cast<std::size_t>(i) * n + j;
        const double xhat = (x.p_->data[k] - mean) * is;
        const double dxhat = out.p_->grad[k] * gain.p_->data[static_cast<std::size_t>(j)];
        x.p_->grad[k] += is * (dxhat - sum_dxhat / n - xhat * sum_dxhat_xhat / n);
      }
    }
  });
  return out;
}

Tensor Graph::sum_all(const Tensor& a) {
  track(a);
  Tensor out = make_output({1});
  double s = 0.0;
  for (int i = 0; i < a.size(); ++i) s += a[i];
  out[0] = s;
  push([a, out]() {
    const double g = out.p_->grad[0];
    for (std::size_t i = 0; i < a.p_->grad.size(); ++i) a.p_->grad[i] += g;
  });
  return out;
}

Tensor Graph::max_all(const Tensor& a) {
  if (a.size() == 0) throw ShapeError("max_all of an empty tensor");
  track(a);
  Tensor out = make_output({1});
  int arg = 0;
  for (int i = 1; i < a.size(); ++i)
    if (a[i] > a[arg]) arg = i;
  out[0] = a[arg];
  push([a, out, arg]() { a.p_->grad[static_cast<std::size_t>(arg)] += out.p_->grad[0]; });
  return out;
}

Tensor Graph::slice_rows(const Tensor& a, int r0, int r1) {
  const int m = a.rows(), n = a.cols();
  if (r0 < 0 || r1 > m || r0 >= r1) {
    throw ShapeError("slice_rows [" + std::to_string(r0) + "," + std::to_string(r1) +
                     ") out of range for " + shape_str(a.shape()));
  }
  track(a);
  Tensor out = make_output({r1 - r0, n});
  std::copy(a.data().begin() + static_cast<std::ptrdiff_t>(r0) * n,
            a.data().begin() + static_cast<std::ptrdiff_t>(r1) * n, out.data().begin());
  push([a, out, r0, n]() {
    for (std::size_t i = 0; i < out.p_->grad.size(); ++i)
      a.p_->grad[static_cast<std::size_t>(r0) * n + i] += out.p_->grad[i];
  });
  return out;
}

Tensor Graph::concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows of zero parts");
  const int n = parts.front().cols();
  int m = 0;
  for (const Tensor& p : parts) {
    if (p.cols() != n) {
      throw ShapeError("concat_rows: column mismatch " + shape_str(p.shape()) + " vs " +
                       shape_str(parts.front().shape()));
    }
    m += p.rows();
    track(p);
  }
  Tensor out = make_output({m, n});
  int row = 0;
  for (const Tensor& p : parts) {
    std::copy(p.data().begin(), p.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(row) * n);
    row += p.rows();
  }
  push([parts, out, n]() {
    std::size_t off = 0;
    for (const Tensor& p : parts) {
      for (std::size_t i = 0; i < p.p_->grad.size(); ++i) p.p_->grad[i] += out.p_->grad[off + i];
      off += p.p_->grad.size();
    }
  });
  return out;
}

Tensor Graph::rows_from(const Tensor& table, const std::vector<int>& ids) {
  const int n = table.cols(), m = table.rows();
  for (int id : ids) {
    if (id < 0 || id >= m) {
      throw DataError("row index " + std::to_string(id) + " out of range for table " +
                      shape_str(table.shape()));
    }
  }
  track(table);
  Tensor out = make_output({static_cast<int>(ids.size()), n});
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy(table.data().begin() + static_cast<std::ptrdiff_t>(ids[i]) * n,
              table.data().begin() + static_cast<std::ptrdiff_t>(ids[i] + 1) * n,
              out.data().begin() + static_cast<std::ptrdiff_t>(i) * n);
  push([table, out, ids, n]() {
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (int j = 0; j < n; ++j)
        table.p_->grad[static_cast<std::size_t>(ids[i]) * n + j] +=
            out.p_->grad[i * static_cast<std::size_t>(n) + j];
  });
  return out;
}

Tensor Graph::mul_scalar(const Tensor& a, const Tensor& s) {
  if (s.size() != 1) throw ShapeError("mul_scalar: scale must be scalar, got " + shape_str(s.shape()));
  track(a);
  track(s);
  Tensor out = make_output(a.shape());
  const double sv = s[0];
  for (int i = 0; i < a.size(); ++i) out[i] = a[i] * sv;
  push([a, s, out]() {
    const double sv = s.p_->data[0];
    double ds = 0.0;
    for (std::size_t i = 0; i < out.p_->grad.size(); ++i) {
      a.p_->grad[i] += sv * out.p_->grad[i];
      ds += a.p_->data[i] * out.p_->grad[i];
    }
    s.p_->grad[0] += ds;
  });
  return out;
}

Tensor Graph::dropout(const Tensor& a, double rate, Rng& rng) {
  if (rate <= 0.0) return add_const(a, 0.0);
  if (rate >= 1.0) throw ConfigError("dropout rate must be < 1");
  track(a);
  Tensor out = make_output(a.shape());
  auto mask = std::make_shared<std::vector<double>>(static_cast<std::size_t>(a.size()));
  const double keep = 1.0 / (1.0 - rate);
  for (int i = 0; i < a.size(); ++i) {
    const double m = rng.uniform() < rate ? 0.0 : keep;
    (*mask)[static_cast<std::size_t>(i)] = m;
    out[i] = a[i] * m;
  }
  push([a, out, mask]() {
    for (std::size_t i = 0; i < out.p_->grad.size(); ++i)
      a.p_->grad[i] += (*mask)[i] * out.p_->grad[i];
  });
  return out;
}

Tensor Graph::softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  const int b = logits.rows(), c = logits.cols();
  if (static_cast<int>(labels.size()) != b) {
    throw ShapeError("cross entropy: " + std::to_string(labels.size()) + " labels for " +
                     shape_str(logits.shape()));
  }
  for (int y : labels)
    if (y < 0 || y >= c) throw DataError("label " + std::to_string(y) + " out of range");
  track(logits);
  Tensor out = make_output({1});
  auto probs = std::make_shared<std::vector<double>>(static_cast<std::size_t>(b) * c);
  double loss = 0.0;
  for (int i = 0; i < b; ++i) {
    double mx = logits[i * c];
    for (int j = 1; j < c; ++j) mx = std::max(mx, logits[i * c + j]);
    double sum = 0.0;
    for (int j = 0; j < c; ++j) {
      const double e = std::exp(logits[i * c + j] - mx);
      (*probs)[static_cast<std::size_t>(i) * c + j] = e;
      sum += e;
    }
    for (int j = 0; j < c; ++j) (*probs)[static_cast<std::size_t>(i) * c + j] /= sum;
    loss -= std::log((*probs)[static_cast<std::size_t>(i) * c + labels[i]]);
  }
  out[0] = loss / b;
  push([logits, out, probs, labels, b, c]() {
    const double g = out.p_->grad[0] / b;
    for (int i = 0; i < b; ++i)
      for (int j = 0; j < c; ++j) {
        const std::size_t k = static_cast<std::size_t>(i) * c + j;
        logits.p_->grad[k] += g * ((*probs)[k] - (labels[i] == j ? 1.0 : 0.0));
      }
  });
  return out;
}

double finite_diff_check(const ScalarFn& f, Tensor x, double h) {
  Graph g;
  Tensor loss = f(g, x);
  g.backward(loss);
  const std::vector<double> analytic = x.grad();
  double worst = 0.0;
  for (int i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    Graph gp;
    const double fp = f(gp, x).value();
    x[i] = saved - h;
    Graph gm;
    const double fm = f(gm, x).value();
    x[i] = saved;
    const double numeric = (fp - fm) / (2.0 * h);
    const double err = std::fabs(analytic[static_cast<std::size_t>(i)] - numeric) /
                       (std::fabs(analytic[static_cast<std::size_t>(i)]) + 1e-8);
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace snip
