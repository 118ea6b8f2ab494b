#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "wice/error.hpp"
#include "wice/gnn.hpp"

namespace wice::gnn {

enum class OptimizerKind { SGD, Adam };

inline std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::SGD ? "sgd" : "adam"; }

inline OptimizerKind optimizer_from_string(std::string_view s) {
  if (s == "sgd") return OptimizerKind::SGD;
  if (s == "adam") return OptimizerKind::Adam;
  throw Error(ErrorCode::InvalidArgument, "unknown optimizer '" + std::string(s) + "'");
}

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
};

/// First and second moments keyed by parameter position, plus the step
/// counter. Stored in checkpoints so training can resume exactly.
struct OptimizerState {
  std::uint64_t step = 0;
  std::vector<Matrix> first;
  std::vector<Matrix> second;
};

class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config) : config_(config) {}
  Optimizer(OptimizerConfig config, OptimizerState state)
      : config_(config), state_(std::move(state)) {}

  const OptimizerConfig& config() const { return config_; }
  const OptimizerState& state() const { return state_; }
  std::uint64_t steps() const { return state_.step; }

  /// Applies one update. Throws NonFiniteGradient naming the first
  /// parameter whose gradient has a NaN or infinity; nothing is modified
  /// in that case.
  void step(ModelParams& m, const Gradients& grads) {
    if (grads.size() != m.params.size()) {
      throw Error(ErrorCode::DimensionMismatch, "gradient count does not match parameters");
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
      if (grads[i].rows() != m.params[i].value.rows() ||
          grads[i].cols() != m.params[i].value.cols()) {
        throw Error(ErrorCode::DimensionMismatch, "gradient shape for " + m.params[i].name);
      }
      if (!grads[i].allFinite()) throw Error(ErrorCode::NonFiniteGradient, m.params[i].name);
    }
    ++state_.step;
    if (config_.kind == OptimizerKind::SGD) {
      for (std::size_t i = 0; i < grads.size(); ++i) {
        auto& p = m.params[i].value;
        p -= config_.learning_rate * (grads[i] + config_.weight_decay * p);
      }
      return;
    }
    if (state_.first.size() != grads.size()) {
      state_.first.clear();
      state_.second.clear();
      for (const auto& g : grads) {
        state_.first.push_back(Matrix::Zero(g.rows(), g.cols()));
        state_.second.push_back(Matrix::Zero(g.rows(), g.cols()));
      }
    }
    const double t = static_cast<double>(state_.step);
    const double c1 = 1.0 - std::pow(config_.beta1, t);
    const double c2 = 1.0 - std::pow(config_.beta2, t);
    for (std::size_t i = 0; i < grads.size(); ++i) {
      auto& p = m.params[i].value;
      const Matrix g = grads[i] + config_.weight_decay * p;
      auto& mo = state_.first[i];
      auto& ve = state_.second[i];
      mo = config_.beta1 * mo + (1.0 - config_.beta1) * g;
      ve = config_.beta2 * ve + (1.0 - config_.beta2) * g.cwiseProduct(g);
      p.array() -= config_.learning_rate * (mo.array() / c1) /
                   ((ve.array() / c2).sqrt() + config_.epsilon);
    }
  }

 private:
  OptimizerConfig config_;
  OptimizerState state_;
};

/// Sums gradient sets in place (for accumulation over several pages).
inline void accumulate(Gradients& into, const Gradients& g, double scale = 1.0) {
  if (into.empty()) {
    into = g;
    for (auto& m : into) m *= scale;
    return;
  }
  for (std::size_t i = 0; i < into.size(); ++i) into[i] += scale * g[i];
}

}  // namespace wice::gnn
