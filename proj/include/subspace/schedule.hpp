#pragma once

#include <functional>
#include <optional>
#include <utility>

namespace subspace {

/// Bounded step-size schedule tau(t) over rescaled time t = k/n.
/// Constant schedules are the common case and unlock the closed-form
/// solution path on the theory side.
class StepSchedule {
 public:
  StepSchedule() : fn_([](double) { return 0.0; }), constant_(0.0) {}

  static StepSchedule constant(double value) {
    StepSchedule s;
    s.fn_ = [value](double) { return value; };
    s.constant_ = value;
    return s;
  }

  static StepSchedule from_function(std::function<double(double)> fn) {
    StepSchedule s;
    s.fn_ = std::move(fn);
    s.constant_.reset();
    return s;
  }

  double operator()(double t) const { return fn_(t); }

  std::optional<double> constant_value() const { return constant_; }

 private:
  std::function<double(double)> fn_;
  std::optional<double> constant_;
};

}  // namespace subspace
