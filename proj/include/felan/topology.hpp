#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace felan {

struct Segment {
  int joint_count = 0;
  std::optional<int> parent;  // index within the branch, nullopt = base
};

using Branch = std::vector<Segment>;

using SparsityMask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

enum class ParamScheme { DenseH, StandardCholesky, ReorderedL, Proposed, Body16 };

std::string_view to_string(ParamScheme scheme);

/// Branch structure of a floating-base tree.
///
/// Joints are numbered canonically: branches in order, segments in declaration
/// order (each segment's parent must precede it), joints along each segment.
class RobotTopology {
 public:
  RobotTopology() = default;
  /// Throws InvalidTopology.
  explicit RobotTopology(std::vector<Branch> branches);

  /// `n` branches of one segment with `joints` joints each.
  static RobotTopology chains(const std::vector<int>& joints_per_branch);

  static RobotTopology from_json(const nlohmann::json& j);
  static RobotTopology parse(std::string_view text);
  nlohmann::json to_json() const;
  /// FNV-1a digest of the canonical JSON.
  std::uint64_t hash() const;

  const std::vector<Branch>& branches() const { return branches_; }
  int n_q() const { return n_q_; }
  int n_k() const { return static_cast<int>(branches_.size()); }
  int dim() const { return 6 + n_q_; }

  int branch_of(int joint) const { return joint_branch_[joint]; }
  int branch_offset(int k) const { return branch_offset_[k]; }
  int branch_size(int k) const { return branch_offset_[k + 1] - branch_offset_[k]; }
  /// Parent joint (global index) or -1 when attached to the base.
  int parent_joint(int joint) const { return parent_[joint]; }
  /// Ancestor joints from the nearest outward, excluding the joint itself.
  const std::vector<int>& ancestors(int joint) const { return ancestors_[joint]; }
  bool is_ancestor_or_self(int ancestor, int joint) const;

  bool operator==(const RobotTopology& other) const;

 private:
  std::vector<Branch> branches_;
  int n_q_ = 0;
  std::vector<int> branch_offset_;
  std::vector<int> joint_branch_;
  std::vector<int> parent_;
  std::vector<std::vector<int>> ancestors_;
};

/// Boolean (6+n_q)^2 pattern of the structured factor L.
SparsityMask sparsity_pattern(const RobotTopology& topology);

int count_parameters(const RobotTopology& topology, ParamScheme scheme);

}  // namespace felan
