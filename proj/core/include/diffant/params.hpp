#pragma once

#include <Eigen/Core>
#include <string>
#include <unordered_map>
#include <vector>

namespace diffant {

struct ParamInfo {
  std::string name;
  Eigen::MatrixXd value;
  Eigen::MatrixXd grad;
  Eigen::MatrixXd adam_m;
  Eigen::MatrixXd adam_v;
  bool decay = true;  // participates in decoupled weight decay
};

// Named parameter tensors with their gradient / optimizer state. Insertion
// order is the canonical order for checkpoints and global-norm reductions.
class ParamStore {
public:
  int add(std::string name, Eigen::MatrixXd value, bool decay = true);

  ParamInfo& at(int index) { return params_.at(static_cast<std::size_t>(index)); }
  const ParamInfo& at(int index) const { return params_.at(static_cast<std::size_t>(index)); }
  int lookup(const std::string& name) const;  // -1 when absent
  int size() const { return static_cast<int>(params_.size()); }
  const std::vector<ParamInfo>& entries() const { return params_; }
  std::vector<ParamInfo>& entries() { return params_; }

  void zero_grads();
  double grad_norm() const;       // global L2 norm across every tensor
  void scale_grads(double factor);
  long long parameter_count() const;

private:
  std::vector<ParamInfo> params_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace diffant
