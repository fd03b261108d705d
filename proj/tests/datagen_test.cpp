#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

#include "nsrgs/datagen.hpp"
#include "nsrgs/io.hpp"
#include "test_util.hpp"

using namespace nsrgs;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("nsrgs_datagen_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void expect_symmetric(const BlockObservation& obs, double tol) {
  for (Index i = 0; i < obs.n(); ++i) {
    EXPECT_EQ(obs.mask()(i, i), 0.0);
    EXPECT_EQ(obs.block(i, i).norm(), 0.0);
    for (Index j = 0; j < obs.n(); ++j) {
      EXPECT_EQ(obs.mask()(i, j), obs.mask()(j, i));
      EXPECT_LE((obs.block(i, j) - obs.block(j, i).transpose()).cwiseAbs().maxCoeff(), tol);
    }
  }
}

}  // namespace

TEST(GroundTruth, ScalarBlocksAreSigns) {
  for (std::uint64_t seed : {0ull, 1ull, 99ull}) {
    const BlockStack z = sample_ground_truth(2, 1, seed);
    for (Index i = 0; i < 2; ++i) EXPECT_EQ(std::abs(z.block(i)(0, 0)), 1.0);
  }
}

TEST(GroundTruth, OrthogonalAndDeterministic) {
  const BlockStack z = sample_ground_truth(100, 3, 5);
  EXPECT_TRUE(z.orthogonal());
  EXPECT_LE(max_block_orthogonality_defect(z), 1e-10);
  EXPECT_TRUE(z == sample_ground_truth(100, 3, 5));
  EXPECT_FALSE(z == sample_ground_truth(100, 3, 6));
}

TEST(GroundTruth, LargeDeterminism) {
  EXPECT_TRUE(sample_ground_truth(500, 25, 7) == sample_ground_truth(500, 25, 7));
}

TEST(GroundTruth, RejectsBadShape) {
  EXPECT_THROW(sample_ground_truth(1, 3, 0), InvalidArgs);
  EXPECT_THROW(sample_ground_truth(3, 0, 0), InvalidArgs);
}

TEST(Observation, NoiselessCompleteGraphIsExact) {
  const BlockStack z = sample_ground_truth(12, 3, 1);
  const BlockObservation obs = assemble_observation(z, 0.0, 1.0, 2);
  EXPECT_EQ(obs.observed_pairs(), 12 * 11 / 2);
  EXPECT_EQ(obs.mask().sum(), 12.0 * 11.0);
  for (Index i = 0; i < 12; ++i)
    for (Index j = 0; j < 12; ++j) {
      if (i == j) continue;
      EXPECT_TRUE((obs.block(i, j) - z.block(i) * z.block(j).transpose()).isZero(0.0));
    }
  expect_symmetric(obs, 0.0);
}

TEST(Observation, FullSamplingObservesEveryPair) {
  const BlockStack z = sample_ground_truth(30, 2, 3);
  const BlockObservation obs = assemble_observation(z, 0.7, 1.0, 4);
  EXPECT_EQ(obs.mask().sum(), 30.0 * 29.0);
  expect_symmetric(obs, 0.0);
}

TEST(Observation, SamplingRateConcentrates) {
  // C(500, 2) = 124750 Bernoulli(0.5) draws: sd of the fraction is ~1.4e-3.
  const BlockStack z = sample_ground_truth(500, 1, 8);
  const BlockObservation obs = assemble_observation(z, 0.1, 0.5, 9);
  EXPECT_NEAR(obs.observed_fraction(), 0.5, 0.02);
  EXPECT_DOUBLE_EQ(obs.sampling_rate(), 0.5);
  expect_symmetric(obs, 0.0);
}

TEST(Observation, NoiseIsSymmetricGaussian) {
  const BlockStack z = sample_ground_truth(60, 3, 10);
  const double sigma = 0.5;
  const BlockObservation obs = assemble_observation(z, sigma, 1.0, 11);
  double sum = 0.0, sq = 0.0;
  std::size_t count = 0;
  for (Index i = 0; i < 60; ++i)
    for (Index j = i + 1; j < 60; ++j) {
      const Matrix w = (obs.block(i, j) - z.block(i) * z.block(j).transpose()) / sigma;
      sum += w.sum();
      sq += w.squaredNorm();
      count += 9;
    }
  EXPECT_NEAR(sum / static_cast<double>(count), 0.0, 0.05);
  EXPECT_NEAR(sq / static_cast<double>(count), 1.0, 0.05);
}

TEST(Observation, RejectsBadParameters) {
  const BlockStack z = sample_ground_truth(4, 2, 1);
  EXPECT_THROW(assemble_observation(z, -0.1, 0.5, 0), InvalidArgs);
  EXPECT_THROW(assemble_observation(z, 0.1, 0.0, 0), InvalidArgs);
  EXPECT_THROW(assemble_observation(z, 0.1, 1.5, 0), InvalidArgs);
}

// With identity diagonal blocks restored, the noiseless complete observation is
// Z Z^T: rank d with eigenvalue n of multiplicity d.
TEST(ObservationProperty, NoiselessIsRankD) {
  for (Index n : {5, 20, 50}) {
    for (Index d : {1, 3}) {
      const SyncInstance inst = make_instance(n, d, 0.0, 1.0, static_cast<std::uint64_t>(n * 10 + d));
      Matrix a = inst.observation.dense();
      a.diagonal().array() += 1.0;
      Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
      std::vector<double> w(es.eigenvalues().begin(), es.eigenvalues().end());
      std::sort(w.begin(), w.end());
      for (Index k = 0; k < n * d - d; ++k) EXPECT_NEAR(w[static_cast<std::size_t>(k)], 0.0, 1e-9);
      for (Index k = n * d - d; k < n * d; ++k) EXPECT_NEAR(w[static_cast<std::size_t>(k)], static_cast<double>(n), 1e-9);
    }
  }
}

TEST(ObservationProperty, SeededDeterminism) {
  const SyncInstance a = make_instance(40, 3, 0.2, 0.6, 77);
  const SyncInstance b = make_instance(40, 3, 0.2, 0.6, 77);
  EXPECT_TRUE(a.observation.dense() == b.observation.dense());
  EXPECT_TRUE(a.observation.mask() == b.observation.mask());
  EXPECT_TRUE(*a.ground_truth == *b.ground_truth);
}

TEST(EdgeList, ParsesSmallFile) {
  const fs::path dir = scratch("parse");
  fs::create_directories(dir);
  const fs::path file = dir / "edges.txt";
  std::mt19937_64 rng(3);
  const Matrix r12 = nsrgs::testing::random_orthogonal(rng, 3);
  const Matrix r23 = nsrgs::testing::random_orthogonal(rng, 3);
  {
    std::ofstream out(file);
    out.precision(17);
    out << "# n=3 d=3\n# a comment\n\n";
    for (const auto& [i, j, m] : {std::tuple{1, 2, r12}, std::tuple{2, 3, r23}}) {
      out << i << ' ' << j;
      for (Index r = 0; r < 3; ++r)
        for (Index c = 0; c < 3; ++c) out << ' ' << m(r, c);
      out << '\n';
    }
  }
  const SyncInstance inst = load_edge_list(file);
  EXPECT_EQ(inst.n, 3);
  EXPECT_EQ(inst.d, 3);
  EXPECT_EQ(inst.observation.observed_pairs(), 2);
  EXPECT_FALSE(inst.observation.observed(0, 2));
  EXPECT_FALSE(inst.ground_truth.has_value());
  EXPECT_LE((inst.observation.block(0, 1) - r12).norm(), 1e-15);
  EXPECT_LE((inst.observation.block(2, 1) - r23.transpose()).norm(), 1e-15);
}

TEST(EdgeList, ReversedDuplicateIsReconciled) {
  const fs::path dir = scratch("dup");
  fs::create_directories(dir);
  const fs::path ok = dir / "ok.txt";
  const fs::path bad = dir / "bad.txt";
  std::ofstream(ok) << "# n=2 d=2\n1 2 1 2 3 4\n2 1 1 3 2 4\n";
  std::ofstream(bad) << "# n=2 d=2\n1 2 1 2 3 4\n2 1 1 2 3 4\n";
  const SyncInstance inst = load_edge_list(ok);
  EXPECT_EQ(inst.observation.observed_pairs(), 1);
  EXPECT_EQ(inst.observation.block(0, 1)(0, 1), 2.0);
  EXPECT_THROW(load_edge_list(bad), DuplicateEdge);
}

TEST(EdgeList, ParseErrorsCarryLineNumbers) {
  const fs::path dir = scratch("errors");
  fs::create_directories(dir);
  const auto expect_line = [&](const std::string& body, std::size_t line) {
    const fs::path f = dir / "e.txt";
    std::ofstream(f) << body;
    try {
      load_edge_list(f);
      FAIL() << "expected ParseError for:\n" << body;
    } catch (const ParseError& e) {
      EXPECT_EQ(e.line(), line) << e.what();
    }
  };
  expect_line("# d=2\n1 2 1 0 0 1\n", 1);
  expect_line("1 2 1 0 0 1\n", 1);
  expect_line("# n=2 d=2\n1 2 1 0 0\n", 2);
  expect_line("# n=2 d=2\n1 3 1 0 0 1\n", 2);
  expect_line("# n=2 d=2\n2 2 1 0 0 1\n", 2);
  expect_line("# n=2 d=2\n\n1 2 1 0 x 1\n", 3);
  EXPECT_THROW(load_edge_list(dir / "missing.txt"), IoError);
}

TEST(EdgeList, RoundTripWithTruth) {
  const SyncInstance inst = make_instance(15, 3, 0.3, 0.5, 21);
  const fs::path dir = scratch("roundtrip");
  fs::create_directories(dir);
  save_edge_list(inst.observation, dir / "edges.txt");
  save_poses(*inst.ground_truth, dir / "truth.txt");
  const SyncInstance back = load_edge_list(dir / "edges.txt", dir / "truth.txt");
  EXPECT_TRUE(back.observation.mask() == inst.observation.mask());
  EXPECT_LE((back.observation.dense() - inst.observation.dense()).cwiseAbs().maxCoeff(), 1e-15);
  ASSERT_TRUE(back.ground_truth.has_value());
  EXPECT_LE((back.ground_truth->matrix() - inst.ground_truth->matrix()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(InstanceFiles, RoundTripIsBitIdentical) {
  const SyncInstance inst = make_instance(20, 4, 0.1, 0.7, 5);
  const fs::path dir = scratch("instance");
  save_instance(inst, dir);
  for (const char* f : {"meta.json", "blocks.f64", "mask.csv", "truth.f64"}) EXPECT_TRUE(fs::exists(dir / f)) << f;
  EXPECT_EQ(fs::file_size(dir / "blocks.f64"),
            static_cast<std::uintmax_t>(inst.observation.observed_pairs() * 16 * 8));
  const SyncInstance back = load_instance(dir);
  EXPECT_EQ(back.n, 20);
  EXPECT_EQ(back.d, 4);
  EXPECT_EQ(back.sigma, 0.1);
  EXPECT_EQ(back.p, 0.7);
  EXPECT_EQ(back.seed, 5u);
  EXPECT_TRUE(back.observation.dense() == inst.observation.dense());
  EXPECT_TRUE(back.observation.mask() == inst.observation.mask());
  EXPECT_TRUE(*back.ground_truth == *inst.ground_truth);
  EXPECT_TRUE(back.ground_truth->orthogonal());

  const fs::path again = scratch("instance2");
  save_instance(back, again);
  for (const char* f : {"meta.json", "blocks.f64", "mask.csv", "truth.f64"}) EXPECT_EQ(slurp(dir / f), slurp(again / f)) << f;
}

TEST(InstanceFiles, BlocksAreRowMajorLittleEndian) {
  SyncInstance inst;
  inst.n = 2;
  inst.d = 2;
  inst.observation = BlockObservation(2, 2);
  Matrix m(2, 2);
  m << 1.0, 2.0, 3.0, 4.0;
  inst.observation.set_block(0, 1, m);
  const fs::path dir = scratch("layout");
  save_instance(inst, dir);
  const std::string raw = slurp(dir / "blocks.f64");
  ASSERT_EQ(raw.size(), 32u);
  // 2.0 = 0x4000000000000000 little-endian: seven zero bytes then 0x40.
  EXPECT_EQ(static_cast<unsigned char>(raw[8 + 7]), 0x40);
  for (int k = 0; k < 7; ++k) EXPECT_EQ(raw[8 + k], 0);
  EXPECT_EQ(slurp(dir / "mask.csv"), "1,2\n");
  EXPECT_FALSE(fs::exists(dir / "truth.f64"));
}

TEST(InstanceFiles, TruncatedBlocksRejected) {
  const SyncInstance inst = make_instance(6, 2, 0.1, 1.0, 1);
  const fs::path dir = scratch("truncated");
  save_instance(inst, dir);
  fs::resize_file(dir / "blocks.f64", fs::file_size(dir / "blocks.f64") - 8);
  EXPECT_THROW(load_instance(dir), ParseError);
}
