#include "ookb/agreement.h"

#include <map>
#include <set>

#include "ookb/error.h"

namespace ookb {

namespace {

void check_lengths(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::length_mismatch,
                "label lists of length " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  if (a.empty()) throw Error(ErrorCode::precondition, "no labels");
}

}  // namespace

double percent_agreement(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  check_lengths(a, b);
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i];
  return static_cast<double>(same) / static_cast<double>(a.size());
}

std::optional<double> cohen_kappa(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  check_lengths(a, b);
  const double n = static_cast<double>(a.size());
  std::map<std::string, double> pa, pb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    pa[a[i]] += 1.0 / n;
    pb[b[i]] += 1.0 / n;
  }
  double pe = 0.0;
  for (const auto& [label, p] : pa) {
    if (auto it = pb.find(label); it != pb.end()) pe += p * it->second;
  }
  const double po = percent_agreement(a, b);
  if (pe >= 1.0 - 1e-12) return po >= 1.0 - 1e-12 ? std::optional<double>(1.0) : std::nullopt;
  return (po - pe) / (1.0 - pe);
}

std::optional<double> fleiss_kappa(const std::vector<std::vector<int>>& counts) {
  if (counts.empty()) throw Error(ErrorCode::precondition, "no items");
  const std::size_t k = counts.front().size();
  int n = -1;
  for (const auto& row : counts) {
    if (row.size() != k) throw Error(ErrorCode::length_mismatch, "rows have differing category counts");
    int sum = 0;
    for (int c : row) {
      if (c < 0) throw Error(ErrorCode::precondition, "negative count");
      sum += c;
    }
    if (n == -1) n = sum;
    if (sum != n) throw Error(ErrorCode::precondition, "items have differing rater counts");
  }
  if (n < 2) throw Error(ErrorCode::precondition, "Fleiss' kappa needs at least 2 raters per item");

  const double items = static_cast<double>(counts.size());
  std::vector<double> p(k, 0.0);
  double p_bar = 0.0;
  for (const auto& row : counts) {
    double agree = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      p[j] += row[j];
      agree += static_cast<double>(row[j]) * (row[j] - 1);
    }
    p_bar += agree / (static_cast<double>(n) * (n - 1));
  }
  p_bar /= items;
  double pe = 0.0;
  for (auto& pj : p) {
    pj /= items * n;
    pe += pj * pj;
  }
  if (pe >= 1.0 - 1e-12) return std::nullopt;
  return (p_bar - pe) / (1.0 - pe);
}

std::optional<double> fleiss_kappa(const std::vector<std::vector<std::string>>& labels_per_item) {
  std::set<std::string> categories;
  for (const auto& item : labels_per_item) categories.insert(item.begin(), item.end());
  std::map<std::string, std::size_t> index;
  for (const auto& c : categories) index.emplace(c, index.size());
  std::vector<std::vector<int>> counts;
  for (const auto& item : labels_per_item) {
    std::vector<int> row(categories.size(), 0);
    for (const auto& label : item) ++row[index[label]];
    counts.push_back(std::move(row));
  }
  return fleiss_kappa(counts);
}

}  // namespace ookb
