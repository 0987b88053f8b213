#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "felan/lagrangian.hpp"
#include "felan/spatial.hpp"

namespace felan {

/// Samples stored row-wise; each block has 6 + n_q columns in canonical order.
struct TrajectoryDataset {
  int n_q = 0;
  double rate = 100.0;
  MatX pos;
  MatX vel;
  MatX acc;
  MatX tau;
  /// Free-form metadata written to the sidecar (seed, hashes, convention...).
  nlohmann::json meta = nlohmann::json::object();

  TrajectoryDataset() = default;
  TrajectoryDataset(int nq, int samples);

  int size() const { return static_cast<int>(pos.rows()); }
  int dim() const { return 6 + n_q; }
  GeneralizedState state(int i) const;
  void set_state(int i, const GeneralizedState& s);

  /// Rows [begin, end).
  TrajectoryDataset slice(int begin, int end) const;
};

/// Column names in file order.
std::vector<std::string> dataset_columns(int n_q);

std::string dataset_to_csv(const TrajectoryDataset& data);
TrajectoryDataset dataset_from_csv(const std::string& text);

/// Writes `<path>` (CSV) and `<path>.json` (sidecar metadata), atomically.
void save_dataset(const std::filesystem::path& path, const TrajectoryDataset& data);
/// Reads the CSV and, when present, the sidecar. Throws ParseError.
TrajectoryDataset load_dataset(const std::filesystem::path& path);

/// One contact: Jacobian (d x (6+n_q)) and force (d).
struct Contact {
  MatX jacobian;
  VecX force;
};

/// tau_nu = [0; tau_q] + sum_i J_i^T f_i.
VecX assemble_generalized_torque(const VecX& tau_q, const std::vector<Contact>& contacts);

/// Binary contacts sidecar, per row: n_c, then per contact d, J (row-major), f.
/// All values are float64; the joint count fixes the Jacobian width.
std::vector<std::vector<Contact>> read_contacts(const std::filesystem::path& path, int n_q, int rows);
std::string encode_contacts(const std::vector<std::vector<Contact>>& contacts);

}  // namespace felan
