#include "felan/dataset.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <sstream>

#include "felan/error.hpp"
#include "felan/io.hpp"

namespace felan {

TrajectoryDataset::TrajectoryDataset(int nq, int samples)
    : n_q(nq),
      pos(MatX::Zero(samples, 6 + nq)),
      vel(MatX::Zero(samples, 6 + nq)),
      acc(MatX::Zero(samples, 6 + nq)),
      tau(MatX::Zero(samples, 6 + nq)) {}

GeneralizedState TrajectoryDataset::state(int i) const {
  GeneralizedState s;
  s.pos = pos.row(i).transpose();
  s.vel = vel.row(i).transpose();
  s.acc = acc.row(i).transpose();
  return s;
}

void TrajectoryDataset::set_state(int i, const GeneralizedState& s) {
  pos.row(i) = s.pos.transpose();
  vel.row(i) = s.vel.transpose();
  acc.row(i) = s.acc.transpose();
}

TrajectoryDataset TrajectoryDataset::slice(int begin, int end) const {
  require(0 <= begin && begin <= end && end <= size(), ErrorCode::DimensionMismatch, "bad dataset slice");
  TrajectoryDataset out;
  out.n_q = n_q;
  out.rate = rate;
  out.meta = meta;
  out.pos = pos.middleRows(begin, end - begin);
  out.vel = vel.middleRows(begin, end - begin);
  out.acc = acc.middleRows(begin, end - begin);
  out.tau = tau.middleRows(begin, end - begin);
  return out;
}

std::vector<std::string> dataset_columns(int n_q) {
  std::vector<std::string> base = {"x", "y", "z", "roll", "pitch", "yaw"};
  for (int j = 0; j < n_q; ++j) base.push_back("q" + std::to_string(j));
  std::vector<std::string> out;
  for (const char* prefix : {"", "d_", "dd_", "tau_"})
    for (const auto& name : base) out.push_back(prefix + name);
  return out;
}

std::string dataset_to_csv(const TrajectoryDataset& data) {
  const auto cols = dataset_columns(data.n_q);
  std::string out;
  for (std::size_t c = 0; c < cols.size(); ++c) {
    if (c) out += ',';
    out += cols[c];
  }
  out += '\n';
  char buf[40];
  const int n = data.dim();
  for (int i = 0; i < data.size(); ++i) {
    for (const MatX* block : {&data.pos, &data.vel, &data.acc, &data.tau}) {
      for (int c = 0; c < n; ++c) {
        std::snprintf(buf, sizeof(buf), "%.17g", (*block)(i, c));
        if (block != &data.pos || c) out += ',';
        out += buf;
      }
    }
    out += '\n';
  }
  return out;
}

TrajectoryDataset dataset_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, "empty dataset");
  int n_cols = 1;
  for (char ch : line) n_cols += ch == ',';
  if (n_cols % 4 != 0 || n_cols / 4 < 7) throw Error(ErrorCode::ParseError, "unexpected dataset column count");
  const int n = n_cols / 4;
  const int n_q = n - 6;
  {
    const auto expected = dataset_columns(n_q);
    std::string header;
    for (std::size_t c = 0; c < expected.size(); ++c) header += (c ? "," : "") + expected[c];
    if (line != header && line != header + "\r") throw Error(ErrorCode::ParseError, "unexpected dataset header");
  }

  std::vector<double> values;
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const char* p = line.c_str();
    for (int c = 0; c < n_cols; ++c) {
      char* end = nullptr;
      const double v = std::strtod(p, &end);
      if (end == p) throw Error(ErrorCode::ParseError, "bad number in row " + std::to_string(rows + 1));
      values.push_back(v);
      p = end;
      if (c + 1 < n_cols) {
        if (*p != ',') throw Error(ErrorCode::ParseError, "too few columns in row " + std::to_string(rows + 1));
        ++p;
      }
    }
    while (*p == '\r' || *p == ' ') ++p;
    if (*p != '\0') throw Error(ErrorCode::ParseError, "too many columns in row " + std::to_string(rows + 1));
    ++rows;
  }

  TrajectoryDataset data(n_q, rows);
  for (int i = 0; i < rows; ++i) {
    const double* row = values.data() + static_cast<std::size_t>(i) * n_cols;
    for (int c = 0; c < n; ++c) {
      data.pos(i, c) = row[c];
      data.vel(i, c) = row[n + c];
      data.acc(i, c) = row[2 * n + c];
      data.tau(i, c) = row[3 * n + c];
    }
  }
  return data;
}

void save_dataset(const std::filesystem::path& path, const TrajectoryDataset& data) {
  nlohmann::json meta = data.meta;
  meta["rate"] = data.rate;
  meta["n_q"] = data.n_q;
  meta["samples"] = data.size();
  const std::string csv = dataset_to_csv(data);
  meta["csv_hash"] = io::hex64(io::fnv1a64(csv));
  io::write_file_atomic(path, csv);
  io::write_file_atomic(path.string() + ".json", meta.dump(2) + "\n");
}

TrajectoryDataset load_dataset(const std::filesystem::path& path) {
  TrajectoryDataset data = dataset_from_csv(io::read_file(path));
  const std::filesystem::path sidecar = path.string() + ".json";
  if (std::filesystem::exists(sidecar)) {
    data.meta = io::read_json(sidecar);
    if (data.meta.contains("rate")) data.rate = data.meta["rate"].get<double>();
    if (data.meta.contains("n_q") && data.meta["n_q"].get<int>() != data.n_q) {
      throw Error(ErrorCode::ParseError, "sidecar joint count disagrees with the CSV");
    }
  }
  return data;
}

VecX assemble_generalized_torque(const VecX& tau_q, const std::vector<Contact>& contacts) {
  const int n = 6 + static_cast<int>(tau_q.size());
  VecX out = VecX::Zero(n);
  out.tail(tau_q.size()) = tau_q;
  for (const Contact& c : contacts) {
    require(c.jacobian.cols() == n && c.jacobian.rows() == c.force.size(), ErrorCode::DimensionMismatch,
            "contact Jacobian must be d x (6 + n_q) with a d-vector force");
    out += c.jacobian.transpose() * c.force;
  }
  return out;
}

std::string encode_contacts(const std::vector<std::vector<Contact>>& contacts) {
  std::vector<double> flat;
  for (const auto& row : contacts) {
    flat.push_back(static_cast<double>(row.size()));
    for (const Contact& c : row) {
      flat.push_back(static_cast<double>(c.force.size()));
      for (int i = 0; i < c.jacobian.rows(); ++i)
        for (int j = 0; j < c.jacobian.cols(); ++j) flat.push_back(c.jacobian(i, j));
      for (int i = 0; i < c.force.size(); ++i) flat.push_back(c.force[i]);
    }
  }
  return std::string(reinterpret_cast<const char*>(flat.data()), flat.size() * sizeof(double));
}

std::vector<std::vector<Contact>> read_contacts(const std::filesystem::path& path, int n_q, int rows) {
  const std::string bytes = io::read_file(path);
  if (bytes.size() % sizeof(double) != 0) throw Error(ErrorCode::ParseError, "contacts file is not float64 data");
  std::vector<double> flat(bytes.size() / sizeof(double));
  std::memcpy(flat.data(), bytes.data(), bytes.size());
  const int n = 6 + n_q;
  std::size_t pos = 0;
  auto next = [&]() {
    if (pos >= flat.size()) throw Error(ErrorCode::ParseError, "contacts file is truncated");
    return flat[pos++];
  };
  auto count = [&](double v, const char* what) {
    if (v < 0 || v != static_cast<double>(static_cast<long>(v)) || v > 1e6) {
      throw Error(ErrorCode::ParseError, std::string("bad ") + what + " in contacts file");
    }
    return static_cast<int>(v);
  };
  std::vector<std::vector<Contact>> out(rows);
  for (int r = 0; r < rows; ++r) {
    const int nc = count(next(), "contact count");
    for (int c = 0; c < nc; ++c) {
      const int d = count(next(), "contact dimension");
      Contact contact{MatX(d, n), VecX(d)};
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < n; ++j) contact.jacobian(i, j) = next();
      for (int i = 0; i < d; ++i) contact.force[i] = next();
      out[r].push_back(std::move(contact));
    }
  }
  if (pos != flat.size()) throw Error(ErrorCode::ParseError, "contacts file has trailing data");
  return out;
}

}  // namespace felan
