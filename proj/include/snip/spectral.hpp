#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "snip/rng.hpp"
#include "snip/tensor.hpp"

namespace snip {

struct PowerIterStep {
  std::vector<double> u;
  std::vector<double> v;
  double sigma = 0.0;
};

// One round of u <- norm(W v), v <- norm(W^T u); sigma = u^T W v.
// A zero matrix yields sigma 0 with u unchanged.
PowerIterStep power_iteration_step(const Tensor& w, std::span<const double> u);

struct SigmaEstimate {
  double sigma = 0.0;
  int iters = 0;
  bool converged = false;
};

// Power iteration from a seeded random unit vector until the relative change
// in sigma drops below tol or max_iters is exhausted (best estimate returned
// with converged = false).
SigmaEstimate estimate_spectral_norm(const Tensor& w, double tol = 1e-9,
                                     int max_iters = 1000,
                                     std::uint64_t seed = 0x5eedULL);

// W_hat = sigma_target * W / sigma_hat. sigma_hat == 0 leaves W unchanged.
Tensor normalize_weight(const Tensor& w, double sigma_hat, double sigma_target);

// Persistent left-singular-vector estimates, one per named weight matrix.
// The training loop runs one power-iteration step per matrix per step.
class SpectralState {
 public:
  struct MatrixState {
    std::vector<double> u;
    double sigma = 0.0;
  };

  // One power-iteration step against the current W; creates the entry with a
  // seeded random u on first touch. Returns the updated sigma estimate.
  double step(const std::string& name, const Tensor& w, Rng& rng);

  double sigma(const std::string& name) const;
  bool has(const std::string& name) const { return states_.find(name) != states_.end(); }
  void drop(const std::string& name) { states_.erase(name); }
  void clear() { states_.clear(); }

  const std::map<std::string, MatrixState>& states() const { return states_; }
  std::map<std::string, MatrixState>& states() { return states_; }

 private:
  std::map<std::string, MatrixState> states_;
};

struct SpectralTraceRow {
  std::int64_t step = 0;
  int layer = 0;
  std::string matrix;
  double sigma = 0.0;
};

}  // namespace snip
