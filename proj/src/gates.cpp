#include "snip/gates.hpp"

#include <algorithm>
#include <cmath>

namespace snip {

std::string to_string(const BlockId& id) {
  std::string s = "l" + std::to_string(id.layer);
  switch (id.kind) {
    case BlockKind::attention_head:
      s += ".att.h" + std::to_string(id.head);
      break;
    case BlockKind::attention_layer:
      s += ".att";
      break;
    case BlockKind::ffn:
      s += ".ffn";
      break;
  }
  return s;
}

double t_epsilon_from_max(double max_abs, double eps, double L) {
  const double inner = std::max(0.0, max_abs - eps);
  return 1.0 - std::max(0.0, 1.0 - L * inner);
}

double t_epsilon(const Tensor& v, double eps, double L) {
  return t_epsilon_from_max(v.max_abs(), eps, L);
}

Tensor s_epsilon(const Tensor& v, double eps, double L) {
  const double t = t_epsilon(v, eps, L);
  Tensor out(v.shape());
  for (int i = 0; i < v.size(); ++i) out[i] = t * v[i];
  return out;
}

Tensor gate_scale(Graph& g, const Tensor& v, int valid_rows, double eps, double L) {
  Tensor responses = valid_rows < v.rows() ? g.slice_rows(v, 0, valid_rows) : v;
  Tensor m = g.max_all(g.abs(responses));
  Tensor inner = g.relu(g.add_const(m, -eps));
  Tensor closed = g.relu(g.add_const(g.scale(inner, -L), 1.0));
  return g.add_const(g.scale(closed, -1.0), 1.0);
}

Tensor s_epsilon(Graph& g, const Tensor& v, int valid_rows, double eps, double L) {
  return g.mul_scalar(v, gate_scale(g, v, valid_rows, eps, L));
}

void ActivationStats::record(const BlockId& block, double maxabs, bool gated_zero,
                             bool keep_sample) {
  Entry& e = entries_[block];
  e.count += 1;
  e.sum_maxabs += maxabs;
  if (gated_zero) e.zero_count += 1;
  if (keep_sample) e.samples.push_back(maxabs);
}

const ActivationStats::Entry& ActivationStats::entry(const BlockId& block) const {
  auto it = entries_.find(block);
  if (it == entries_.end()) throw DataError("no activation records for block " + to_string(block));
  return it->second;
}

double ActivationStats::mean_maxabs(const BlockId& block) const {
  const Entry& e = entry(block);
  if (e.count == 0) throw DataError("no activation records for block " + to_string(block));
  return e.sum_maxabs / static_cast<double>(e.count);
}

double ActivationStats::identity_rate(const BlockId& block) const {
  const Entry& e = entry(block);
  if (e.count == 0) throw DataError("no activation records for block " + to_string(block));
  return static_cast<double>(e.zero_count) / static_cast<double>(e.count);
}

std::vector<ActivationStats::HistogramBin> ActivationStats::histogram(const BlockId& block,
                                                                      int bins) const {
  const Entry& e = entry(block);
  double mx = 0.0;
  for (double s : e.samples) mx = std::max(mx, s);
  std::vector<HistogramBin> out(static_cast<std::size_t>(bins));
  const double width = mx > 0.0 ? mx / bins : 1.0 / bins;
  for (int i = 0; i < bins; ++i) {
    out[static_cast<std::size_t>(i)].lo = i * width;
    out[static_cast<std::size_t>(i)].hi = (i + 1) * width;
  }
  for (double s : e.samples) {
    int b = static_cast<int>(s / width);
    b = std::clamp(b, 0, bins - 1);
    out[static_cast<std::size_t>(b)].count += 1;
  }
  return out;
}

}  // namespace snip
