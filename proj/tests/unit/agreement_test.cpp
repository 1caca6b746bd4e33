#include <gtest/gtest.h>

#include "ookb/agreement.h"
#include "ookb/error.h"
#include "ookb/hashing.h"

using namespace ookb;

namespace {

// Fleiss' kappa exactly as printed in the usual textbook derivation:
// P_i = (sum_j n_ij^2 - n) / (n (n - 1)), p_j = sum_i n_ij / (N n).
std::optional<double> textbook_fleiss(const std::vector<std::vector<int>>& m) {
  const double N = static_cast<double>(m.size());
  double n = 0;
  for (int c : m[0]) n += c;
  double P_bar = 0;
  std::vector<double> col(m[0].size(), 0);
  for (const auto& row : m) {
    double sq = 0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      sq += row[j] * row[j];
      col[j] += row[j];
    }
    P_bar += (sq - n) / (n * (n - 1));
  }
  P_bar /= N;
  double Pe = 0;
  for (double c : col) Pe += (c / (N * n)) * (c / (N * n));
  if (Pe == 1.0) return std::nullopt;
  return (P_bar - Pe) / (1 - Pe);
}

}  // namespace

TEST(Cohen, WorkedExample) {
  EXPECT_EQ(cohen_kappa({"Y", "Y", "N", "N"}, {"Y", "N", "N", "N"}), 0.5);
}

TEST(Cohen, PerfectAgreementAndDegenerateCases) {
  EXPECT_EQ(cohen_kappa({"Y", "N", "Y"}, {"Y", "N", "Y"}), 1.0);
  EXPECT_EQ(cohen_kappa({"Y", "Y"}, {"Y", "Y"}), 1.0);  // expected agreement is 1
  EXPECT_EQ(percent_agreement({"a", "b"}, {"a", "c"}), 0.5);
  EXPECT_THROW(cohen_kappa({"Y"}, {"Y", "N"}), Error);
  EXPECT_THROW(cohen_kappa({}, {}), Error);
}

TEST(Fleiss, MatchesTextbookOracleOnRandomMatrices) {
  SeededRng rng(606);
  int compared = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int raters = 2 + static_cast<int>(rng.below(5));
    std::vector<std::vector<int>> m(5, std::vector<int>(3, 0));
    for (auto& row : m) {
      for (int r = 0; r < raters; ++r) ++row[rng.below(3)];
    }
    const auto expected = textbook_fleiss(m);
    const auto got = fleiss_kappa(m);
    ASSERT_EQ(expected.has_value(), got.has_value()) << "trial " << trial;
    if (expected) {
      EXPECT_NEAR(*got, *expected, 1e-9) << "trial " << trial;
      ++compared;
    }
  }
  EXPECT_GT(compared, 90);
}

TEST(Fleiss, PerfectAgreementAndLabelLists) {
  EXPECT_EQ(fleiss_kappa(std::vector<std::vector<int>>{{3, 0}, {0, 3}, {3, 0}}), 1.0);
  EXPECT_EQ(fleiss_kappa(std::vector<std::vector<std::string>>{{"Y", "Y"}, {"N", "N"}}), 1.0);
  EXPECT_EQ(fleiss_kappa(std::vector<std::vector<int>>{{2, 0}, {2, 0}}), std::nullopt);
  // Label-list form agrees with the count form.
  const auto from_labels = fleiss_kappa(std::vector<std::vector<std::string>>{{"a", "a", "b"}, {"b", "b", "b"}, {"a", "c", "c"}});
  const auto from_counts = fleiss_kappa(std::vector<std::vector<int>>{{2, 1, 0}, {0, 3, 0}, {1, 0, 2}});
  EXPECT_NEAR(*from_labels, *from_counts, 1e-12);
}

TEST(Fleiss, RejectsBadMatrices) {
  EXPECT_THROW(fleiss_kappa(std::vector<std::vector<int>>{}), Error);
  EXPECT_THROW(fleiss_kappa(std::vector<std::vector<int>>{{1, 1}, {2, 1}}), Error);
  EXPECT_THROW(fleiss_kappa(std::vector<std::vector<int>>{{1, 0}, {0, 1}}), Error);
  EXPECT_THROW(fleiss_kappa(std::vector<std::vector<int>>{{1, 1}, {2}}), Error);
}
