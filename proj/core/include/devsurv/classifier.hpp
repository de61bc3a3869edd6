#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "devsurv/extraction.hpp"
#include "devsurv/weaksup.hpp"

namespace devsurv::classifier {

using extraction::RelationCandidate;

inline constexpr std::uint32_t kHashBits = 20;
inline constexpr std::uint32_t kDims = 1u << kHashBits;

struct FeatureConfig {
  int max_ngram = 3;
  int outer_window = 3;
  bool entity_ids = true;
  bool entity_types = true;
  bool distance = true;
  bool section = true;
  bool attributes = true;
  bool date_bins = true;

  /// Fingerprint of every field; models refuse vectors built differently.
  std::uint64_t hash() const;
};

struct FeatureVector {
  std::vector<std::pair<std::uint32_t, double>> entries;  // sorted by index, merged
  std::uint64_t config_hash = 0;

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

/// Human-readable features before hashing ("btw1:hip", "dist:0", ...).
std::vector<std::string> feature_strings(const RelationCandidate& c, const FeatureConfig& config = {});
/// Index in [0, kDims) and sign taken from the top bit of the hash.
std::pair<std::uint32_t, double> hash_feature(std::string_view feature);
FeatureVector featurize(const RelationCandidate& c, const FeatureConfig& config = {});

struct TrainConfig {
  std::uint64_t seed = 17;
  int epochs = 30;
  double learning_rate = 0.5;
  double lr_decay = 0.0;      // lr_t = learning_rate / (1 + lr_decay * epoch)
  double l2 = 1e-3;           // lambda in the objective
  std::size_t batch_size = 32;  // 0 means full batch
};

struct ClassifierModel {
  std::vector<double> weights = std::vector<double>(kDims, 0.0);
  double bias = 0.0;
  double threshold = 0.5;
  FeatureConfig feature_config;
  std::uint64_t feature_config_hash = FeatureConfig{}.hash();
  TrainConfig train_config;
  std::size_t n_train = 0;

  std::size_t nonzeros() const;
};

/// L(w, b) = -sum_i [p_i log s_i + (1 - p_i) log(1 - s_i)] + l2 * ||w||^2,
/// with s_i = sigmoid(w.x_i + b). The bias is not penalized.
class NoiseAwareObjective {
 public:
  NoiseAwareObjective(const std::vector<FeatureVector>& x, const std::vector<double>& p, double l2)
      : x_(x), p_(p), l2_(l2) {}

  double loss(const std::vector<double>& w, double b) const;
  /// Dense gradient; grad_w is resized to w.size().
  void gradient(const std::vector<double>& w, double b, std::vector<double>& grad_w,
                double& grad_b) const;

 private:
  const std::vector<FeatureVector>& x_;
  const std::vector<double>& p_;
  double l2_;
};

double sigmoid(double z);
double raw_score(const ClassifierModel& model, const FeatureVector& x);

/// Mini-batch SGD on the objective above with seeded Fisher-Yates shuffling.
ClassifierModel train_noise_aware(const std::vector<FeatureVector>& x, const std::vector<double>& p,
                                  const TrainConfig& config, const FeatureConfig& features = {});
/// Labels are matched to candidates by candidate_id; every candidate needs one.
ClassifierModel train_noise_aware(const std::vector<RelationCandidate>& candidates,
                                  const weaksup::ProbabilisticLabels& labels,
                                  const TrainConfig& config, const FeatureConfig& features = {});

/// Throws Error(kMismatch) when the vector's config hash differs from the model's.
double predict(const ClassifierModel& model, const FeatureVector& x);
double predict(const ClassifierModel& model, const RelationCandidate& c);

/// Grid {0.00, 0.01, ..., 1.00}; predicts positive iff score >= t; maximizes F1,
/// ties to the lowest threshold. Throws unless both classes are present.
double select_threshold(const std::vector<double>& scores, const std::vector<bool>& gold);
double select_threshold(const ClassifierModel& model,
                        const std::vector<RelationCandidate>& dev_candidates,
                        const weaksup::GoldLabels& dev_gold);

/// Binary layout: "DSCM", u32 version, u32 dims, f64 bias, f64 threshold,
/// u64 feature config hash, u64 nnz, then nnz x (u32 index, f64 weight).
/// A JSON sidecar (path + ".json") carries the configs and training metadata.
void save_model(const ClassifierModel& model, const std::filesystem::path& path);
ClassifierModel load_model(const std::filesystem::path& path);

}  // namespace devsurv::classifier
