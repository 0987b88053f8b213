#include "felan/topology.hpp"

#include <algorithm>

#include "felan/error.hpp"
#include "felan/io.hpp"

namespace felan {

std::string_view to_string(ParamScheme scheme) {
  switch (scheme) {
    case ParamScheme::DenseH: return "DenseH";
    case ParamScheme::StandardCholesky: return "StandardCholesky";
    case ParamScheme::ReorderedL: return "ReorderedL";
    case ParamScheme::Proposed: return "Proposed";
    case ParamScheme::Body16: return "Body16";
  }
  return "Unknown";
}

RobotTopology::RobotTopology(std::vector<Branch> branches) : branches_(std::move(branches)) {
  require(!branches_.empty(), ErrorCode::InvalidTopology, "topology needs at least one branch");
  branch_offset_.push_back(0);
  for (std::size_t k = 0; k < branches_.size(); ++k) {
    const Branch& branch = branches_[k];
    const std::string where = "branch " + std::to_string(k);
    require(!branch.empty(), ErrorCode::InvalidTopology, where + " has no segments");
    // Last joint (global index) of each segment of this branch.
    std::vector<int> segment_tip(branch.size(), -1);
    for (std::size_t s = 0; s < branch.size(); ++s) {
      const Segment& seg = branch[s];
      require(seg.joint_count >= 1, ErrorCode::InvalidTopology,
              where + " segment " + std::to_string(s) + " needs at least one joint");
      int attach = -1;
      if (s == 0) {
        require(!seg.parent.has_value(), ErrorCode::InvalidTopology, where + " must start at the base");
      } else {
        require(seg.parent.has_value(), ErrorCode::InvalidTopology,
                where + " segment " + std::to_string(s) + " needs a parent segment");
        const int p = *seg.parent;
        require(p >= 0 && p < static_cast<int>(s), ErrorCode::InvalidTopology,
                where + " segment " + std::to_string(s) + " must reference an earlier segment");
        attach = segment_tip[p];
      }
      for (int j = 0; j < seg.joint_count; ++j) {
        const int id = n_q_++;
        parent_.push_back(attach);
        joint_branch_.push_back(static_cast<int>(k));
        std::vector<int> anc;
        if (attach >= 0) {
          anc.push_back(attach);
          const auto& up = ancestors_[attach];
          anc.insert(anc.end(), up.begin(), up.end());
        }
        ancestors_.push_back(std::move(anc));
        attach = id;
      }
      segment_tip[s] = attach;
    }
    branch_offset_.push_back(n_q_);
  }
}

RobotTopology RobotTopology::chains(const std::vector<int>& joints_per_branch) {
  std::vector<Branch> branches;
  for (int n : joints_per_branch) branches.push_back({Segment{n, std::nullopt}});
  return RobotTopology(std::move(branches));
}

RobotTopology RobotTopology::from_json(const nlohmann::json& j) {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidTopology, what); };
  if (!j.is_object() || !j.contains("branches") || !j["branches"].is_array()) fail("expected {\"branches\": [...]}");
  std::vector<Branch> branches;
  for (const auto& jb : j["branches"]) {
    if (!jb.is_array()) fail("each branch must be an array of segments");
    Branch branch;
    for (const auto& js : jb) {
      if (!js.is_object()) fail("each segment must be an object");
      for (const auto& [key, _] : js.items())
        if (key != "joints" && key != "parent") fail("unknown segment field '" + key + "'");
      if (!js.contains("joints") || !js["joints"].is_number_integer()) fail("segment needs integer 'joints'");
      if (!js.contains("parent")) fail("segment needs 'parent' (integer or null)");
      Segment seg;
      seg.joint_count = js["joints"].get<int>();
      if (js["parent"].is_null()) {
        seg.parent = std::nullopt;
      } else if (js["parent"].is_number_integer()) {
        seg.parent = js["parent"].get<int>();
      } else {
        fail("segment 'parent' must be an integer or null");
      }
      branch.push_back(seg);
    }
    branches.push_back(std::move(branch));
  }
  return RobotTopology(std::move(branches));
}

RobotTopology RobotTopology::parse(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  return from_json(j);
}

nlohmann::json RobotTopology::to_json() const {
  nlohmann::json jb = nlohmann::json::array();
  for (const Branch& branch : branches_) {
    nlohmann::json segs = nlohmann::json::array();
    for (const Segment& s : branch) {
      segs.push_back({{"joints", s.joint_count},
                      {"parent", s.parent ? nlohmann::json(*s.parent) : nlohmann::json(nullptr)}});
    }
    jb.push_back(segs);
  }
  return {{"branches", jb}};
}

std::uint64_t RobotTopology::hash() const { return io::fnv1a64(to_json().dump()); }

bool RobotTopology::is_ancestor_or_self(int ancestor, int joint) const {
  if (ancestor == joint) return true;
  const auto& anc = ancestors_[joint];
  return std::find(anc.begin(), anc.end(), ancestor) != anc.end();
}

bool RobotTopology::operator==(const RobotTopology& other) const { return to_json() == other.to_json(); }

SparsityMask sparsity_pattern(const RobotTopology& topology) {
  const int n = topology.dim();
  SparsityMask mask = SparsityMask::Constant(n, n, false);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j <= i; ++j) mask(i, j) = true;  // L_F
  for (int i = 3; i < 6; ++i)
    for (int j = 0; j <= i; ++j) mask(i, j) = true;  // L_FR, L_R
  for (int i = 0; i < topology.n_q(); ++i) {
    for (int c = 0; c < 6; ++c) mask(6 + i, c) = true;  // K_k, W_k
    mask(6 + i, 6 + i) = true;
    for (int a : topology.ancestors(i)) mask(6 + i, 6 + a) = true;
  }
  return mask;
}

int count_parameters(const RobotTopology& topology, ParamScheme scheme) {
  const int n = topology.dim();
  switch (scheme) {
    case ParamScheme::DenseH: return n * n;
    case ParamScheme::StandardCholesky: return n * (n + 1) / 2;
    case ParamScheme::ReorderedL: return static_cast<int>(sparsity_pattern(topology).count());
    case ParamScheme::Proposed: return count_parameters(topology, ParamScheme::ReorderedL) - 11;
    case ParamScheme::Body16: return 16 * (topology.n_q() + 1);
  }
  throw Error(ErrorCode::InvalidSpec, "unknown parameter scheme");
}

}  // namespace felan
