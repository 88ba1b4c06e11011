#include "gateshare/optim.hpp"

#include <cmath>

#include "gateshare/error.hpp"
#include "gateshare/serialize.hpp"

namespace gateshare {

SgdMomentum::SgdMomentum(std::vector<Tensor> params, double lr, double momentum)
    : params_(std::move(params)), lr_(lr), momentum_(momentum) {
  if (!(lr > 0.0)) throw ConfigError("sgd: learning rate must be > 0");
  velocity_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i)
    velocity_[i].assign(params_[i].numel(), 0.0);
}

void SgdMomentum::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (!p.has_grad()) {
      bool moving = false;
      for (double v : velocity_[i])
        if (v != 0.0) {
          moving = true;
          break;
        }
      if (!moving) continue;
    }
    auto& vel = velocity_[i];
    auto& data = p.mutable_data();
    const std::vector<double>* g = p.has_grad() ? &p.grad() : nullptr;
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double gj = g ? (*g)[j] : 0.0;
      vel[j] = momentum_ * vel[j] + gj;
      data[j] -= lr_ * vel[j];
    }
  }
}

void SgdMomentum::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

nlohmann::json SgdMomentum::state_to_json() const {
  nlohmann::json j;
  j["lr"] = lr_;
  j["momentum"] = momentum_;
  nlohmann::json vel = nlohmann::json::array();
  for (const auto& v : velocity_) vel.push_back(base64_encode_doubles(v));
  j["velocity"] = std::move(vel);
  return j;
}

void SgdMomentum::state_from_json(const nlohmann::json& j) {
  lr_ = j.at("lr").get<double>();
  momentum_ = j.at("momentum").get<double>();
  const auto& vel = j.at("velocity");
  if (vel.size() != velocity_.size())
    throw ConfigError("sgd state: parameter count mismatch");
  for (std::size_t i = 0; i < velocity_.size(); ++i) {
    velocity_[i] = base64_decode_doubles(vel.at(i).get<std::string>());
    if (velocity_[i].size() != params_[i].numel())
      throw ConfigError("sgd state: shape mismatch");
  }
}

Adam::Adam(std::vector<Tensor> params, double lr, double beta1, double beta2,
           double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (!(lr > 0.0)) throw ConfigError("adam: learning rate must be > 0");
  m_.resize(params_.size());
  v_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m_[i].assign(params_[i].numel(), 0.0);
    v_[i].assign(params_[i].numel(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    const bool has_grad = p.has_grad();
    bool state_zero = true;
    if (!has_grad) {
      for (double x : m_[i])
        if (x != 0.0) {
          state_zero = false;
          break;
        }
      if (state_zero) continue;  // never touched: stays bitwise identical
    }
    auto& data = p.mutable_data();
    const std::vector<double>* g = has_grad ? &p.grad() : nullptr;
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double gj = g ? (*g)[j] : 0.0;
      m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * gj;
      v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * gj * gj;
      const double mhat = m_[i][j] / bc1;
      const double vhat = v_[i][j] / bc2;
      data[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

nlohmann::json Adam::state_to_json() const {
  nlohmann::json j;
  j["lr"] = lr_;
  j["beta1"] = beta1_;
  j["beta2"] = beta2_;
  j["eps"] = eps_;
  j["t"] = t_;
  nlohmann::json ms = nlohmann::json::array(), vs = nlohmann::json::array();
  for (const auto& m : m_) ms.push_back(base64_encode_doubles(m));
  for (const auto& v : v_) vs.push_back(base64_encode_doubles(v));
  j["m"] = std::move(ms);
  j["v"] = std::move(vs);
  return j;
}

void Adam::state_from_json(const nlohmann::json& j) {
  lr_ = j.at("lr").get<double>();
  beta1_ = j.at("beta1").get<double>();
  beta2_ = j.at("beta2").get<double>();
  eps_ = j.at("eps").get<double>();
  t_ = j.at("t").get<std::size_t>();
  const auto& ms = j.at("m");
  const auto& vs = j.at("v");
  if (ms.size() != m_.size() || vs.size() != v_.size())
    throw ConfigError("adam state: parameter count mismatch");
  for (std::size_t i = 0; i < m_.size(); ++i) {
    m_[i] = base64_decode_doubles(ms.at(i).get<std::string>());
    v_[i] = base64_decode_doubles(vs.at(i).get<std::string>());
    if (m_[i].size() != params_[i].numel() || v_[i].size() != params_[i].numel())
      throw ConfigError("adam state: shape mismatch");
  }
}

}  // namespace gateshare
