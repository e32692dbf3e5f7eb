#include "diffant/params.hpp"

#include <cmath>
#include <stdexcept>

namespace diffant {

int ParamStore::add(std::string name, Eigen::MatrixXd value, bool decay) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  ParamInfo info;
  info.name = std::move(name);
  info.grad = Eigen::MatrixXd::Zero(value.rows(), value.cols());
  info.adam_m = info.grad;
  info.adam_v = info.grad;
  info.value = std::move(value);
  info.decay = decay;
  params_.push_back(std::move(info));
  const int idx = static_cast<int>(params_.size()) - 1;
  index_.emplace(params_.back().name, idx);
  return idx;
}

int ParamStore::lookup(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? -1 : it->second;
}

void ParamStore::zero_grads() {
  for (auto& p : params_) p.grad.setZero();
}

double ParamStore::grad_norm() const {
  double sq = 0.0;
  for (const auto& p : params_) sq += p.grad.squaredNorm();
  return std::sqrt(sq);
}

void ParamStore::scale_grads(double factor) {
  for (auto& p : params_) p.grad *= factor;
}

long long ParamStore::parameter_count() const {
  long long n = 0;
  for (const auto& p : params_) n += static_cast<long long>(p.value.size());
  return n;
}

}  // namespace diffant
