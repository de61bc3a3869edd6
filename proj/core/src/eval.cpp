#include "devsurv/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "devsurv/common.hpp"

namespace devsurv::eval {

double f1_score(double precision, double recall) {
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

Metrics metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn) {
  Metrics m;
  m.tp = tp;
  m.fp = fp;
  m.fn = fn;
  m.tn = tn;
  m.precision = tp + fp ? 100.0 * static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  m.recall = tp + fn ? 100.0 * static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  m.f1 = f1_score(m.precision, m.recall);
  return m;
}

double round1(double v) { return std::round(v * 10.0) / 10.0; }

Metrics prf1(const std::map<std::string, double>& predictions,
             const std::map<std::string, bool>& gold, double threshold) {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (const auto& [id, score] : predictions) {
    const bool pred = score >= threshold;
    auto g = gold.find(id);
    const bool truth = g != gold.end() && g->second;
    if (pred && truth) ++tp;
    else if (pred) ++fp;
    else if (truth) ++fn;
    else ++tn;
  }
  for (const auto& [id, truth] : gold) {
    if (predictions.count(id)) continue;
    if (truth) ++fn;
    else ++tn;
  }
  return metrics_from_counts(tp, fp, fn, tn);
}

Metrics prf1(const std::vector<std::pair<std::string, double>>& predictions,
             const std::vector<std::pair<std::string, bool>>& gold, double threshold) {
  std::map<std::string, double> p;
  std::map<std::string, bool> g;
  for (const auto& [id, s] : predictions)
    if (!p.emplace(id, s).second)
      throw Error(ErrorCode::kDuplicate, "duplicate prediction for " + id, {{"candidate_id", id}});
  for (const auto& [id, y] : gold)
    if (!g.emplace(id, y).second)
      throw Error(ErrorCode::kDuplicate, "duplicate gold label for " + id, {{"candidate_id", id}});
  return prf1(p, g, threshold);
}

PRCurve pr_curve(const std::vector<double>& scores, const std::vector<bool>& gold) {
  if (scores.size() != gold.size())
    throw Error(ErrorCode::kInvalidArgument, "scores and gold differ in length");
  const auto pos = static_cast<std::size_t>(std::count(gold.begin(), gold.end(), true));
  if (pos == 0 || pos == gold.size())
    throw Error(ErrorCode::kInvalidArgument, "PR curve needs both classes in gold");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  PRCurve curve;
  std::size_t tp = 0, predicted = 0;
  double prev_recall = 0.0;
  for (std::size_t k = 0; k < order.size();) {
    const double s = scores[order[k]];
    while (k < order.size() && scores[order[k]] == s) {
      tp += gold[order[k]];
      ++predicted;
      ++k;
    }
    PRPoint p;
    p.threshold = s;
    p.recall = static_cast<double>(tp) / static_cast<double>(pos);
    p.precision = static_cast<double>(tp) / static_cast<double>(predicted);
    curve.average_precision += (p.recall - prev_recall) * p.precision;
    prev_recall = p.recall;
    curve.points.push_back(p);
  }
  return curve;
}

Split split_documents(std::vector<std::string> doc_ids, std::uint64_t seed, std::size_t train,
                      std::size_t dev, std::size_t test) {
  std::sort(doc_ids.begin(), doc_ids.end());
  if (std::adjacent_find(doc_ids.begin(), doc_ids.end()) != doc_ids.end())
    throw Error(ErrorCode::kDuplicate, "duplicate document id in split input");
  if (train + dev + test > doc_ids.size())
    throw Error(ErrorCode::kInvalidArgument,
                "split sizes exceed the corpus: " + std::to_string(train + dev + test) + " > " +
                    std::to_string(doc_ids.size()),
                {{"requested", std::to_string(train + dev + test)},
                 {"available", std::to_string(doc_ids.size())}});
  std::mt19937_64 rng(seed);
  for (std::size_t i = doc_ids.size(); i > 1; --i)
    std::swap(doc_ids[i - 1], doc_ids[static_cast<std::size_t>(rng() % i)]);
  Split s;
  auto it = doc_ids.begin();
  s.train.assign(it, it + static_cast<std::ptrdiff_t>(train));
  it += static_cast<std::ptrdiff_t>(train);
  s.dev.assign(it, it + static_cast<std::ptrdiff_t>(dev));
  it += static_cast<std::ptrdiff_t>(dev);
  s.test.assign(it, it + static_cast<std::ptrdiff_t>(test));
  return s;
}

}  // namespace devsurv::eval
