#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "snip/tensor.hpp"

namespace snip {

// Granularity of the attention-side gate: one gate per head, or one gate for
// the whole attention sub-layer.
enum class AttentionGranularity { per_head, whole_layer };

struct GateConfig {
  double eps_att = 0.0;
  double eps_ffn = 0.0;
  double sharpness = 1e5;  // L; the differentiable band has width 1/L
  AttentionGranularity granularity = AttentionGranularity::per_head;
};

enum class BlockKind { attention_head, attention_layer, ffn };

struct BlockId {
  int layer = 0;
  BlockKind kind = BlockKind::attention_head;
  int head = -1;  // >= 0 iff kind == attention_head

  auto operator<=>(const BlockId&) const = default;
};

std::string to_string(const BlockId& id);

// Scalar gate t_eps(v) = 1 - ReLU(1 - L * max_i ReLU(|v_i| - eps)).
// 0 when max|v| <= eps, 1 when max|v| >= eps + 1/L, linear in between.
double t_epsilon(const Tensor& v, double eps, double L);
double t_epsilon_from_max(double max_abs, double eps, double L);

// S_eps(v) = t_eps(v) * v; exactly the zero tensor in the gated regime.
Tensor s_epsilon(const Tensor& v, double eps, double L);

// Graph forms, built from the same stacked-ReLU construction so gradients
// flow through the arg-max coordinate inside the band.
Tensor gate_scale(Graph& g, const Tensor& v, int valid_rows, double eps, double L);
Tensor s_epsilon(Graph& g, const Tensor& v, int valid_rows, double eps, double L);

// Per-block running statistics of pre-gate responses: example counts, sum of
// per-example max-abs, strict-identity event counts, and the raw max-abs
// samples (kept so histograms can be binned after the fact).
class ActivationStats {
 public:
  struct Entry {
    std::int64_t count = 0;
    double sum_maxabs = 0.0;
    std::int64_t zero_count = 0;
    std::vector<double> samples;
  };

  void record(const BlockId& block, double maxabs, bool gated_zero,
              bool keep_sample = true);

  double mean_maxabs(const BlockId& block) const;
  double identity_rate(const BlockId& block) const;  // DataError when count == 0
  bool has(const BlockId& block) const { return entries_.find(block) != entries_.end(); }
  const Entry& entry(const BlockId& block) const;

  const std::map<BlockId, Entry>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  void clear() { entries_.clear(); }

  struct HistogramBin {
    double lo = 0.0;
    double hi = 0.0;
    std::int64_t count = 0;
  };
  // Uniform bins over [0, observed max] of this block's samples.
  std::vector<HistogramBin> histogram(const BlockId& block, int bins = 64) const;

 private:
  std::map<BlockId, Entry> entries_;
};

}  // namespace snip
