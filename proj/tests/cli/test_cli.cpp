#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include "felan/dataset.hpp"
#include "felan/io.hpp"

namespace felan {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code = -1;
  std::string out;
};

// Runs the CLI in dir, capturing stdout and stderr.
Result felan(const fs::path& dir, const std::string& args) {
  const std::string cmd = "cd '" + dir.string() + "' && '" FELAN_CLI_PATH "' " + args + " 2>&1";
  Result r;
  std::unique_ptr<FILE, int (*)(FILE*)> pipe(popen(cmd.c_str(), "r"), pclose);
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe.get()) != nullptr) r.out += buf.data();
  const int status = pclose(pipe.release());
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string digest(const fs::path& p) { return io::hex64(io::fnv1a64(io::read_file(p))); }

int count_lines(const fs::path& p) {
  std::ifstream f(p);
  int n = 0;
  for (std::string line; std::getline(f, line);) ++n;
  return n;
}

// One toy model and dataset shared by every test.
class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / ("felan_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    ASSERT_EQ(felan(dir_, "--seed 1 gen-model --chains 2,2 --out toy2.json").code, 0);
    ASSERT_EQ(felan(dir_, "--seed 7 gen-data --model toy2.json --duration 10 --rate 100 --out toy.csv").code, 0);
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }

  static fs::path dir_;
};

fs::path Cli::dir_;

TEST_F(Cli, GenDataWritesRequestedRowCount) {
  const TrajectoryDataset d = load_dataset(dir_ / "toy.csv");
  EXPECT_EQ(d.size(), 1000);
  EXPECT_EQ(count_lines(dir_ / "toy.csv"), 1001);
}

TEST_F(Cli, GenDataIsByteDeterministic) {
  ASSERT_EQ(felan(dir_, "--seed 7 gen-data --model toy2.json --duration 10 --rate 100 --out again.csv").code, 0);
  EXPECT_EQ(digest(dir_ / "toy.csv"), digest(dir_ / "again.csv"));
  EXPECT_EQ(digest(dir_ / "toy.csv.json"), digest(dir_ / "again.csv.json"));
}

TEST_F(Cli, GenDataPrintsStatistics) {
  const Result r = felan(dir_, "--seed 7 gen-data --model toy2.json --duration 1 --rate 50 --out small.csv");
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("samples: 50"), std::string::npos);
  EXPECT_NE(r.out.find("tau_q3"), std::string::npos);
}

TEST_F(Cli, RateZeroIsUsageError) {
  const Result r = felan(dir_, "gen-data --model toy2.json --rate 0 --out bad.csv");
  EXPECT_EQ(r.code, 2);
  EXPECT_FALSE(fs::exists(dir_ / "bad.csv"));
}

TEST_F(Cli, UnknownFlagIsUsageError) { EXPECT_EQ(felan(dir_, "train --bogus").code, 2); }

TEST_F(Cli, TrainWritesOneMetricRowPerEpoch) {
  const Result r = felan(dir_, "--seed 3 train --data toy.csv --method felan --epochs 5 --quiet --out run5");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(count_lines(dir_ / "run5/metrics.csv"), 6);
  EXPECT_TRUE(fs::exists(dir_ / "run5/checkpoint.felan"));
  EXPECT_TRUE(fs::exists(dir_ / "run5/last.felan"));
  EXPECT_TRUE(fs::exists(dir_ / "run5/summary.json"));
}

TEST_F(Cli, TrainIsByteDeterministic) {
  ASSERT_EQ(felan(dir_, "--seed 4 train --data toy.csv --method felan --epochs 2 --quiet --out det_a").code, 0);
  ASSERT_EQ(felan(dir_, "--seed 4 --threads 1 train --data toy.csv --method felan --epochs 2 --quiet --out det_b").code,
            0);
  EXPECT_EQ(digest(dir_ / "det_a/checkpoint.felan"), digest(dir_ / "det_b/checkpoint.felan"));
  EXPECT_EQ(digest(dir_ / "det_a/last.felan"), digest(dir_ / "det_b/last.felan"));
  EXPECT_EQ(digest(dir_ / "det_a/metrics.csv"), digest(dir_ / "det_b/metrics.csv"));
}

TEST_F(Cli, FelanAndFelanBsCheckpointsDiffer) {
  ASSERT_EQ(felan(dir_, "--seed 5 train --data toy.csv --method felan --epochs 1 --quiet --out p_felan").code, 0);
  ASSERT_EQ(felan(dir_, "--seed 5 train --data toy.csv --method felan_bs --epochs 1 --quiet --out p_bs").code, 0);
  EXPECT_NE(digest(dir_ / "p_felan/checkpoint.felan"), digest(dir_ / "p_bs/checkpoint.felan"));
}

TEST_F(Cli, DivergenceExitsNumerical) {
  const Result r = felan(dir_, "--seed 3 train --data toy.csv --method felan --epochs 3 --lr 1e6 --quiet --out nan");
  EXPECT_EQ(r.code, 4) << r.out;
  EXPECT_NE(r.out.find("error"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir_ / "nan/checkpoint.felan"));
}

TEST_F(Cli, WhiteBoxWithoutModelIsConfigError) {
  EXPECT_EQ(felan(dir_, "train --data toy.csv --method wb_pd --epochs 1 --out wb").code, 2);
}

TEST_F(Cli, MissingCheckpointIsConfigError) {
  EXPECT_EQ(felan(dir_, "eval --checkpoint missing.felan --data toy.csv").code, 2);
  EXPECT_EQ(felan(dir_, "inspect --checkpoint missing.felan").code, 2);
}

TEST_F(Cli, EvalOnTrainSplitReproducesTrainingNmse) {
  ASSERT_EQ(felan(dir_, "--seed 6 train --data toy.csv --method felan --epochs 3 --quiet --out ev").code, 0);
  std::ifstream metrics(dir_ / "ev/metrics.csv");
  std::string line, last;
  while (std::getline(metrics, line)) last = line;
  const double train_nmse = std::stod(last.substr(last.find(',') + 1));
  const Result r = felan(dir_, "eval --checkpoint ev/last.felan --data toy.csv --split train");
  ASSERT_EQ(r.code, 0) << r.out;
  std::istringstream rows(r.out);
  std::getline(rows, line);
  std::string method, path;
  double value = 0.0;
  rows >> method >> path >> value;
  EXPECT_EQ(method, "felan");
  EXPECT_NEAR(value, train_nmse, 1e-5 * train_nmse);
}

TEST_F(Cli, EvalSeveralCheckpointsAddsRnmseAndDecomposition) {
  ASSERT_EQ(felan(dir_, "--seed 5 train --data toy.csv --method felan --epochs 1 --quiet --out e_felan").code, 0);
  ASSERT_EQ(felan(dir_, "--seed 5 train --data toy.csv --method delan --epochs 1 --quiet --out e_delan").code, 0);
  const Result r = felan(dir_,
                      "eval --methods e_felan/checkpoint.felan e_delan/checkpoint.felan --data toy.csv --split test "
                      "--decompose dec.csv");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("rnmse"), std::string::npos);
  EXPECT_EQ(count_lines(dir_ / "dec.csv"), 101);
}

TEST_F(Cli, EvalTopologyMismatchIsDataError) {
  ASSERT_EQ(felan(dir_, "--seed 1 gen-model --chains 3 --out one.json").code, 0);
  ASSERT_EQ(felan(dir_, "gen-data --model one.json --duration 1 --out one.csv").code, 0);
  ASSERT_EQ(felan(dir_, "--seed 5 train --data toy.csv --method felan --epochs 1 --quiet --out mm").code, 0);
  EXPECT_EQ(felan(dir_, "eval --checkpoint mm/checkpoint.felan --data one.csv").code, 3);
}

TEST_F(Cli, InspectFelanReportsGuarantees) {
  ASSERT_EQ(felan(dir_, "--seed 8 train --data toy.csv --method felan --epochs 1 --quiet --out in_f").code, 0);
  for (const char* seed : {"1", "2", "3"}) {
    const Result r = felan(dir_, std::string("--seed ") + seed + " inspect --checkpoint in_f/checkpoint.felan");
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("triangle inequality: PASS (margin ≥ 0)"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("m_hat isotropy (mass block = m_hat 1_3): PASS"), std::string::npos) << r.out;
    // 2 x 2 chains: reordered-L count is 51.
    EXPECT_NE(r.out.find("sparsity mask: PASS (nnz L 51, ReorderedL count 51)"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("beta:"), std::string::npos);
    EXPECT_NE(r.out.find("lambda_U:"), std::string::npos);
  }
}

TEST_F(Cli, InspectFelanBsOmitsIsotropyLine) {
  ASSERT_EQ(felan(dir_, "--seed 8 train --data toy.csv --method felan_bs --epochs 1 --quiet --out in_bs").code, 0);
  const Result r = felan(dir_, "inspect --checkpoint in_bs/checkpoint.felan --q 0.1,0.2,0.3,0.4");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(r.out.find("isotropy"), std::string::npos);
  EXPECT_NE(r.out.find("sparsity mask: PASS"), std::string::npos);
}

TEST_F(Cli, InspectRejectsWrongJointCount) {
  ASSERT_EQ(felan(dir_, "--seed 8 train --data toy.csv --method felan --epochs 1 --quiet --out in_q").code, 0);
  EXPECT_EQ(felan(dir_, "inspect --checkpoint in_q/checkpoint.felan --q 0.1").code, 3);
}

TEST_F(Cli, CountParamsTable) {
  EXPECT_NE(felan(dir_, "count-params --chains 3,3,3,3").out.find("324 / 171 / 117 / 106 / 208"), std::string::npos);
  EXPECT_NE(felan(dir_, "count-params --chains 3,3,3,3,5").out.find("529 / 276 / 162 / 151 / 288"), std::string::npos);
  EXPECT_NE(felan(dir_, "count-params --chains 1").out.find("49 / 28 / 28 / 17 / 32"), std::string::npos);
}

TEST_F(Cli, CountParamsFromTopologyFile) {
  const Result r = felan(dir_, "count-params --topology '" FELAN_MODELS_DIR "/go2.topology.json'");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("324 / 171 / 117 / 106 / 208"), std::string::npos);
  EXPECT_EQ(felan(dir_, "count-params --topology missing.json").code, 2);
}

TEST_F(Cli, IngestAddsContactForces) {
  TrajectoryDataset d = load_dataset(dir_ / "toy.csv");
  const int n = 3;
  TrajectoryDataset small(d.n_q, n);
  for (int i = 0; i < n; ++i) {
    small.set_state(i, d.state(i));
    small.tau.row(i).setZero();
    small.tau.row(i).tail(d.n_q).setConstant(i + 1.0);
  }
  save_dataset(dir_ / "log.csv", small);
  std::vector<std::vector<Contact>> contacts(n);
  Contact c;
  c.jacobian = MatX::Zero(3, 6 + d.n_q);
  c.jacobian.leftCols(3).setIdentity();
  c.force = Vec3(0.0, 0.0, 50.0);
  contacts[1].push_back(c);
  io::write_file_atomic(dir_ / "log.contacts", encode_contacts(contacts));
  const Result r = felan(dir_, "ingest --data log.csv --contacts log.contacts --topology toy2.json --out ingested.csv");
  ASSERT_EQ(r.code, 0) << r.out;
  const TrajectoryDataset out = load_dataset(dir_ / "ingested.csv");
  EXPECT_EQ(out.tau(0, 2), 0.0);
  EXPECT_EQ(out.tau(1, 2), 50.0);
  EXPECT_EQ(out.tau(2, 6), 3.0);
}

}  // namespace
}  // namespace felan
