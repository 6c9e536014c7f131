#include "mfg_lqg/mfg_model.hpp"

#include <gtest/gtest.h>

#include "mfg_lqg/errors.hpp"
#include "test_problems.hpp"

namespace mfg_lqg {
namespace {

using testing::mat;
using testing::vec;

bool contains(const std::string& haystack, const std::string& needle) {
  return haystack.find(needle) != std::string::npos;
}

TEST(ValidateProblem, ToyPasses) {
  const ValidationReport r = validate_problem(testing::toy_problem());
  EXPECT_TRUE(r.passed()) << r.failures();
  EXPECT_TRUE(r.warnings.empty());
}

TEST(ValidateProblem, PiNotADistribution) {
  MmMfgProblem p = testing::toy_problem();
  p.pi = vec({0.7, 0.7});
  const ValidationReport r = validate_problem(p);
  EXPECT_FALSE(r.passed());
  EXPECT_TRUE(contains(r.failures(), "π not a distribution"));
}

TEST(ValidateProblem, SingularMinorR) {
  MmMfgProblem p = testing::toy_problem();
  p.minors[1].R = mat({{0.0}});
  const ValidationReport r = validate_problem(p);
  EXPECT_FALSE(r.passed());
  EXPECT_TRUE(contains(r.failures(), "minor 2: R not positive definite"))
      << r.failures();
}

TEST(ValidateProblem, NonzeroInitialMeanAndShapes) {
  MmMfgProblem p = testing::toy_problem();
  p.initial_mean = vec({0.1, 0.0});
  EXPECT_FALSE(validate_problem(p).passed());

  MmMfgProblem bad = testing::toy_problem();
  bad.minors[0].Hhat = MatrixXd::Identity(3, 3);
  EXPECT_THROW(validate_problem(bad), ConfigError);
}

TEST(ValidateProblem, WarnsOnTerminalTracking) {
  MmMfgProblem p = testing::toy_problem();
  p.minors[0].eta = vec({1.0, 0.0});
  const ValidationReport r = validate_problem(p);
  EXPECT_TRUE(r.passed());
  EXPECT_EQ(r.warnings.size(), 1u);
}

TEST(MeanFieldMatrices, SingleType) {
  MmMfgProblem p = testing::scalar_game(1);
  const MeanFieldMatrices mf = build_mean_field_matrices(p);
  EXPECT_EQ(mf.Abreve, p.minors[0].A + p.minors[0].F);
  EXPECT_EQ(mf.Gbreve, p.minors[0].G);
}

TEST(MeanFieldMatrices, NoFieldCouplingIsBlockDiagonal) {
  MmMfgProblem p = testing::toy_problem();
  for (auto& mk : p.minors) mk.F.setZero();
  const MeanFieldMatrices mf = build_mean_field_matrices(p);
  EXPECT_EQ(mf.Abreve, block_diagonal({p.minors[0].A, p.minors[1].A}));
  EXPECT_EQ(mf.Bbreve, block_diagonal({p.minors[0].B, p.minors[1].B}));
}

TEST(MeanFieldMatrices, Shapes) {
  const MmMfgProblem p = testing::scalar_game(2);
  const MeanFieldMatrices mf = build_mean_field_matrices(p);
  EXPECT_EQ(mf.Abreve.rows(), 2);
  EXPECT_EQ(mf.Abreve.cols(), 2);
  EXPECT_EQ(mf.Bbreve.rows(), 2);
  EXPECT_EQ(mf.Bbreve.cols(), 2);
  EXPECT_EQ(mf.Bbreve(0, 1), 0.0);
  EXPECT_EQ(mf.Bbreve(1, 0), 0.0);
  EXPECT_EQ(mf.mbreve.rows(), 2);
  // Row block k is A_k e_k + pi (x) F_k.
  EXPECT_DOUBLE_EQ(mf.Abreve(1, 0), 0.5 * p.minors[1].F(0, 0));
  EXPECT_DOUBLE_EQ(mf.Abreve(1, 1),
                   p.minors[1].A(0, 0) + 0.5 * p.minors[1].F(0, 0));
}

TEST(ExtendedMajor, NoTrackingCoupling) {
  MmMfgProblem p = testing::toy_problem();
  p.major.H.setZero();
  p.major.eta = vec({0.3, -0.2});
  const ExtendedMajorSystem ext =
      build_extended_major(p, build_mean_field_matrices(p));
  MatrixXd expected = MatrixXd::Zero(6, 6);
  expected.topLeftCorner(2, 2) = p.major.Q;
  EXPECT_EQ(ext.Q, expected);
  VectorXd eta_expected = VectorXd::Zero(6);
  eta_expected.head(2) = p.major.Q * p.major.eta;
  EXPECT_EQ(ext.etabar, eta_expected);
  EXPECT_EQ(ext.nbar, p.major.N.transpose() * p.major.eta);
}

TEST(ExtendedMajor, DimensionsAndPsd) {
  const MmMfgProblem p = testing::scalar_game(2);
  const ExtendedMajorSystem ext =
      build_extended_major(p, build_mean_field_matrices(p));
  EXPECT_EQ(ext.dim(), 3);
  EXPECT_EQ(ext.A(0.3).rows(), 3);
  EXPECT_TRUE(psd_check(ext.Q, 1e-12));
  EXPECT_TRUE(psd_check(ext.G, 1e-12));
  EXPECT_EQ(ext.M(0.0).rows(), 3);

  const MmMfgProblem toy = testing::toy_problem();
  const MeanFieldMatrices mf = build_mean_field_matrices(toy);
  const ExtendedMajorSystem big = build_extended_major(toy, mf);
  const MatrixXd a = big.A(0.0);
  EXPECT_EQ(a.topLeftCorner(2, 2), toy.major.A);
  EXPECT_EQ(a.topRightCorner(2, 4), pi_kron(toy.pi, toy.major.F));
  EXPECT_EQ(a.bottomLeftCorner(4, 2), mf.Gbreve);
  EXPECT_EQ(a.bottomRightCorner(4, 4), mf.Abreve);
}

TEST(ExtendedMinor, ReducesToMajorBlock) {
  MmMfgProblem p = testing::toy_problem();
  p.major.N.setZero();
  const ExtendedMajorSystem major =
      build_extended_major(p, build_mean_field_matrices(p));
  const ExtendedMinorSystem ext = build_extended_minor(
      p, 0, major, GridFunction(p.grid, 6, 6), GridFunction(p.grid, 6, 1));
  EXPECT_EQ(ext.dim(), 8);
  EXPECT_EQ(ext.A(0.5).bottomRightCorner(6, 6), major.A(0.5));
  EXPECT_EQ(ext.M(0.5).bottomRows(6), major.M(0.5));
  EXPECT_EQ(ext.A(0.5).bottomLeftCorner(6, 2), MatrixXd::Zero(6, 2));
}

TEST(ExtendedMinor, ScalarShapesAndCouplingBlock) {
  MmMfgProblem p = testing::scalar_game(2);
  const ExtendedMajorSystem major =
      build_extended_major(p, build_mean_field_matrices(p));
  const ExtendedMinorSystem ext = build_extended_minor(
      p, 1, major, GridFunction(p.grid, 3, 3), GridFunction(p.grid, 3, 1));
  EXPECT_EQ(ext.A(0.0).rows(), 4);
  EXPECT_EQ(ext.A(0.0).cols(), 4);
  EXPECT_EQ(ext.Sigma(0.0).rows(), 4);

  p.minors[1].G.setZero();
  p.minors[1].F.setZero();
  const ExtendedMinorSystem flat = build_extended_minor(
      p, 1, major, GridFunction(p.grid, 3, 3), GridFunction(p.grid, 3, 1));
  EXPECT_EQ(flat.A(0.2).topRightCorner(1, 3), MatrixXd::Zero(1, 3));
}

TEST(ExtendedMinor, ClosedLoopMajorBlock) {
  const MmMfgProblem p = testing::toy_problem();
  const ExtendedMajorSystem major =
      build_extended_major(p, build_mean_field_matrices(p));
  GridFunction pi0 = GridFunction::constant(p.grid, MatrixXd::Identity(6, 6));
  GridFunction s0 = GridFunction::constant(p.grid, MatrixXd::Ones(6, 1));
  const ExtendedMinorSystem ext = build_extended_minor(p, 1, major, pi0, s0);
  const MatrixXd r_inv = p.major.R.inverse();
  const MatrixXd expected_a =
      major.A(0.0) - major.Bb * r_inv * (major.N.transpose() + major.Bb.transpose());
  EXPECT_LT((ext.A(0.0).bottomRightCorner(6, 6) - expected_a).norm(), 1e-14);
  const VectorXd expected_m = major.M(0.0) + major.Bb * r_inv * major.nbar -
                              major.Bb * r_inv * major.Bb.transpose() *
                                  VectorXd::Ones(6);
  EXPECT_LT((ext.M(0.0).bottomRows(6) - expected_m).norm(), 1e-14);
  // Tracking target Psi = H x0 + Hhat^pi xbar + eta.
  const VectorXd eta = p.minors[1].eta;
  VectorXd expected_eta(8);
  expected_eta << p.minors[1].Q * eta, -p.minors[1].H.transpose() * p.minors[1].Q * eta,
      -pi_kron(p.pi, p.minors[1].Hhat).transpose() * p.minors[1].Q * eta;
  EXPECT_LT((ext.etabar - expected_eta).norm(), 1e-15);
}

TEST(PiBlocks, IdentityAndReassembly) {
  const PiBlocks id = extract_pi_blocks(MatrixXd::Identity(8, 8), 2, 2);
  EXPECT_EQ(id.P11, MatrixXd::Identity(2, 2));
  EXPECT_EQ(id.P12, MatrixXd::Zero(2, 2));
  EXPECT_EQ(id.P13, MatrixXd::Zero(2, 4));

  const MatrixXd r = MatrixXd::Random(10, 10);
  const PiBlocks b = extract_pi_blocks(r, 2, 3);
  EXPECT_EQ(b.P11.rows(), 2);
  EXPECT_EQ(b.P11.cols(), 2);
  EXPECT_EQ(b.P12.cols(), 2);
  EXPECT_EQ(b.P13.rows(), 2);
  EXPECT_EQ(b.P13.cols(), 6);
  MatrixXd row(2, 10);
  row << b.P11, b.P12, b.P13;
  EXPECT_EQ(row, r.topRows(2));

  const NBlocks nb = split_n_blocks(MatrixXd::Random(10, 1), 2, 3);
  EXPECT_EQ(nb.N31.rows(), 6);
  EXPECT_THROW(extract_pi_blocks(MatrixXd::Identity(7, 7), 2, 2), ConfigError);
}

TEST(Builders, Deterministic) {
  const MmMfgProblem p = testing::toy_problem();
  const MeanFieldMatrices a = build_mean_field_matrices(p);
  const MeanFieldMatrices b = build_mean_field_matrices(p);
  EXPECT_EQ(a.Abreve, b.Abreve);
  const ExtendedMajorSystem ea = build_extended_major(p, a);
  const ExtendedMajorSystem eb = build_extended_major(p, b);
  EXPECT_EQ(ea.A(0.37), eb.A(0.37));
  EXPECT_EQ(ea.G, eb.G);
  EXPECT_EQ(ea.Q, eb.Q);
}

}  // namespace
}  // namespace mfg_lqg
