#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace devsurv::eval {

/// Percentages in [0, 100]; full precision is kept, rounding is for display.
struct Metrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;
};

/// 2PR/(P+R), or 0 when P+R = 0.
double f1_score(double precision, double recall);

Metrics metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn = 0);

/// Keyed by candidate_id. Counts run over the union of keys; a gold key with no
/// prediction is a negative prediction. Throws Error(kDuplicate) on repeated ids.
Metrics prf1(const std::vector<std::pair<std::string, double>>& predictions,
             const std::vector<std::pair<std::string, bool>>& gold, double threshold);
Metrics prf1(const std::map<std::string, double>& predictions,
             const std::map<std::string, bool>& gold, double threshold);

/// One decimal place, as displayed in reports.
double round1(double v);

struct PRPoint {
  double threshold = 0.0;
  double recall = 0.0;
  double precision = 0.0;
};

struct PRCurve {
  std::vector<PRPoint> points;  // recall non-decreasing
  double average_precision = 0.0;
};

/// Sweeps distinct scores in descending order; AP = sum (R_k - R_{k-1}) P_k
/// without interpolation. Throws unless gold holds both classes.
PRCurve pr_curve(const std::vector<double>& scores, const std::vector<bool>& gold);

struct Split {
  std::vector<std::string> train;
  std::vector<std::string> dev;
  std::vector<std::string> test;
};

/// Seeded shuffle, then the first `train`, next `dev`, next `test` ids.
Split split_documents(std::vector<std::string> doc_ids, std::uint64_t seed, std::size_t train,
                      std::size_t dev, std::size_t test);

}  // namespace devsurv::eval
