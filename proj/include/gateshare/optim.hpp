#pragma once

#include <cstddef>
#include <vector>

#include <json.hpp>

#include "gateshare/tensor.hpp"

namespace gateshare {

/// SGD with classical momentum. Parameters whose grad slot is empty are left
/// bitwise untouched as long as their velocity is zero, which keeps excluded
/// blocks frozen exactly.
class SgdMomentum {
 public:
  SgdMomentum(std::vector<Tensor> params, double lr, double momentum);

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  void step();
  void zero_grad();

  nlohmann::json state_to_json() const;
  void state_from_json(const nlohmann::json& j);

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> velocity_;
  double lr_;
  double momentum_;
};

/// Adam with bias correction.
class Adam {
 public:
  Adam(std::vector<Tensor> params, double lr, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8);

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  void step();
  void zero_grad();

  nlohmann::json state_to_json() const;
  void state_from_json(const nlohmann::json& j);

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

}  // namespace gateshare
