#include "devsurv/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <random>

#include <json.hpp>

namespace devsurv::classifier {

std::uint64_t FeatureConfig::hash() const {
  char buf[160];
  std::snprintf(buf, sizeof buf, "features/v1 ngram=%d window=%d ids=%d types=%d dist=%d sec=%d attr=%d dates=%d dims=%u",
                max_ngram, outer_window, entity_ids, entity_types, distance, section, attributes,
                date_bins, kDims);
  return mix64(fnv1a(buf));
}

namespace {

void add_ngrams(std::vector<std::string>& out, std::string_view prefix,
                const std::vector<std::string>& words, int max_n) {
  for (int n = 1; n <= max_n; ++n) {
    const auto un = static_cast<std::size_t>(n);
    if (words.size() < un) break;
    for (std::size_t i = 0; i + un <= words.size(); ++i) {
      std::string f(prefix);
      f += std::to_string(n);
      f += ':';
      for (std::size_t k = 0; k < un; ++k) {
        if (k) f += ' ';
        f += words[i + k];
      }
      out.push_back(std::move(f));
    }
  }
}

std::string distance_bucket(std::size_t d) {
  if (d == 0) return "dist:0";
  if (d <= 2) return "dist:1-2";
  if (d <= 5) return "dist:3-5";
  if (d <= 10) return "dist:6-10";
  return "dist:>10";
}

}  // namespace

std::vector<std::string> feature_strings(const RelationCandidate& c, const FeatureConfig& config) {
  std::vector<std::string> out;
  const auto window = static_cast<std::size_t>(std::max(config.outer_window, 0));
  add_ngrams(out, "btw", weaksup::between_words(c), config.max_ngram);
  add_ngrams(out, "lw", weaksup::left_window(c, window), config.max_ngram);
  add_ngrams(out, "rw", weaksup::right_window(c, window), config.max_ngram);
  if (config.entity_ids) {
    out.push_back("e1id:" + c.arg1.canonical_id);
    out.push_back("e2id:" + c.arg2.canonical_id);
  }
  if (config.entity_types) {
    out.push_back("e1type:" + std::string(extraction::to_string(c.arg1.type)));
    out.push_back("e2type:" + std::string(extraction::to_string(c.arg2.type)));
    if (c.arg1.subcategory)
      out.push_back("e1sub:" + extraction::event_class_name(*c.arg1.subcategory));
  }
  if (config.distance) out.push_back(distance_bucket(weaksup::token_distance(c)));
  if (config.section) out.push_back("sec:" + to_lower(c.section_header));
  if (config.attributes) {
    for (const auto& a : c.arg1.attributes.names()) out.push_back("e1attr:" + a);
    for (const auto& a : c.arg2.attributes.names()) out.push_back("e2attr:" + a);
  }
  if (config.date_bins)
    for (const auto& b : c.date_bins) out.push_back("date:" + b);
  out.push_back(c.arg1.token_begin <= c.arg2.token_begin ? "order:e1first" : "order:e2first");
  return out;
}

std::pair<std::uint32_t, double> hash_feature(std::string_view feature) {
  const std::uint64_t h = mix64(fnv1a(feature));
  const auto index = static_cast<std::uint32_t>(h & (kDims - 1));
  return {index, (h >> 63) ? -1.0 : 1.0};
}

FeatureVector featurize(const RelationCandidate& c, const FeatureConfig& config) {
  std::map<std::uint32_t, double> acc;
  for (const auto& f : feature_strings(c, config)) {
    auto [idx, sign] = hash_feature(f);
    acc[idx] += sign;
  }
  FeatureVector v;
  v.config_hash = config.hash();
  for (const auto& [idx, w] : acc)
    if (w != 0.0) v.entries.emplace_back(idx, w);
  return v;
}

std::size_t ClassifierModel::nonzeros() const {
  return static_cast<std::size_t>(
      std::count_if(weights.begin(), weights.end(), [](double w) { return w != 0.0; }));
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

namespace {

double dot(const std::vector<double>& w, const FeatureVector& x) {
  double s = 0.0;
  for (const auto& [i, v] : x.entries) s += w[i] * v;
  return s;
}

/// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace

double NoiseAwareObjective::loss(const std::vector<double>& w, double b) const {
  double l = 0.0;
  for (std::size_t i = 0; i < x_.size(); ++i) {
    const double z = dot(w, x_[i]) + b;
    // -[p log s(z) + (1-p) log(1-s(z))] = softplus(z) - p z
    l += softplus(z) - p_[i] * z;
  }
  double sq = 0.0;
  for (double v : w) sq += v * v;
  return l + l2_ * sq;
}

void NoiseAwareObjective::gradient(const std::vector<double>& w, double b,
                                   std::vector<double>& grad_w, double& grad_b) const {
  grad_w.assign(w.size(), 0.0);
  grad_b = 0.0;
  for (std::size_t i = 0; i < x_.size(); ++i) {
    const double r = sigmoid(dot(w, x_[i]) + b) - p_[i];
    for (const auto& [j, v] : x_[i].entries) grad_w[j] += r * v;
    grad_b += r;
  }
  for (std::size_t j = 0; j < w.size(); ++j) grad_w[j] += 2.0 * l2_ * w[j];
}

double raw_score(const ClassifierModel& model, const FeatureVector& x) {
  return dot(model.weights, x) + model.bias;
}

ClassifierModel train_noise_aware(const std::vector<FeatureVector>& x, const std::vector<double>& p,
                                  const TrainConfig& config, const FeatureConfig& features) {
  const std::size_t n = x.size();
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "empty training set");
  if (p.size() != n)
    throw Error(ErrorCode::kInvalidArgument, "labels and feature vectors differ in length");
  if (config.epochs < 0 || config.learning_rate <= 0.0 || config.l2 < 0.0)
    throw Error(ErrorCode::kInvalidConfig, "invalid training configuration");
  const auto hash = features.hash();
  for (const auto& v : x)
    if (v.config_hash != hash)
      throw Error(ErrorCode::kMismatch, "feature vector built with a different feature config");
  for (double q : p)
    if (!(q >= 0.0 && q <= 1.0))
      throw Error(ErrorCode::kInvalidArgument, "probabilistic label outside [0, 1]");

  ClassifierModel model;
  model.feature_config = features;
  model.feature_config_hash = hash;
  model.train_config = config;
  model.n_train = n;

  // w = scale * v, so the L2 shrink is O(1) per batch.
  std::vector<double>& v = model.weights;
  double scale = 1.0;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(config.seed);
  const std::size_t batch = config.batch_size == 0 ? n : std::min(config.batch_size, n);
  std::vector<double> residual(batch);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng() % i);
      std::swap(order[i - 1], order[j]);
    }
    const double lr = config.learning_rate / (1.0 + config.lr_decay * epoch);
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t end = std::min(start + batch, n);
      const double bsz = static_cast<double>(end - start);
      double grad_b = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const auto& xi = x[order[k]];
        const double z = scale * dot(v, xi) + model.bias;
        residual[k - start] = sigmoid(z) - p[order[k]];
        grad_b += residual[k - start];
      }
      scale *= 1.0 - lr * 2.0 * config.l2 / static_cast<double>(n);
      if (scale <= 0.0)
        throw Error(ErrorCode::kInvalidConfig, "learning rate too large for the L2 penalty");
      for (std::size_t k = start; k < end; ++k) {
        const double step = lr * residual[k - start] / bsz / scale;
        for (const auto& [j, val] : x[order[k]].entries) v[j] -= step * val;
      }
      model.bias -= lr * grad_b / bsz;
      if (scale < 1e-6) {
        for (auto& w : v) w *= scale;
        scale = 1.0;
      }
    }
  }
  if (scale != 1.0)
    for (auto& w : v) w *= scale;
  return model;
}

ClassifierModel train_noise_aware(const std::vector<RelationCandidate>& candidates,
                                  const weaksup::ProbabilisticLabels& labels,
                                  const TrainConfig& config, const FeatureConfig& features) {
  std::map<std::string, double> by_id;
  for (std::size_t i = 0; i < labels.candidate_ids.size(); ++i)
    by_id[labels.candidate_ids[i]] = labels.p_true[i];
  std::vector<FeatureVector> x;
  std::vector<double> p;
  x.reserve(candidates.size());
  for (const auto& c : candidates) {
    auto it = by_id.find(c.candidate_id);
    if (it == by_id.end())
      throw Error(ErrorCode::kMismatch, "candidate without a training label: " + c.candidate_id,
                  {{"candidate_id", c.candidate_id}});
    x.push_back(featurize(c, features));
    p.push_back(it->second);
  }
  return train_noise_aware(x, p, config, features);
}

double predict(const ClassifierModel& model, const FeatureVector& x) {
  if (x.config_hash != model.feature_config_hash)
    throw Error(ErrorCode::kMismatch, "feature config hash differs from the model's",
                {{"model", hex64(model.feature_config_hash)}, {"features", hex64(x.config_hash)}});
  return sigmoid(raw_score(model, x));
}

double predict(const ClassifierModel& model, const RelationCandidate& c) {
  return predict(model, featurize(c, model.feature_config));
}

double select_threshold(const std::vector<double>& scores, const std::vector<bool>& gold) {
  if (scores.size() != gold.size())
    throw Error(ErrorCode::kInvalidArgument, "scores and gold differ in length");
  const auto pos = static_cast<std::size_t>(std::count(gold.begin(), gold.end(), true));
  if (pos == 0 || pos == gold.size())
    throw Error(ErrorCode::kInvalidArgument, "threshold selection needs both classes in the dev set",
                {{"positives", std::to_string(pos)}, {"n", std::to_string(gold.size())}});
  double best_t = 0.0, best_f1 = -1.0;
  for (int k = 0; k <= 100; ++k) {
    const double t = k / 100.0;
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] < t) continue;
      (gold[i] ? tp : fp) += 1;
    }
    const std::size_t fn = pos - tp;
    const double f1 = tp == 0 ? 0.0 : 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
    if (f1 > best_f1) {
      best_f1 = f1;
      best_t = t;
    }
  }
  return best_t;
}

double select_threshold(const ClassifierModel& model,
                        const std::vector<RelationCandidate>& dev_candidates,
                        const weaksup::GoldLabels& dev_gold) {
  if (dev_gold.empty()) throw Error(ErrorCode::kInvalidArgument, "empty dev gold");
  std::vector<double> scores;
  std::vector<bool> gold;
  for (const auto& c : dev_candidates) {
    auto it = dev_gold.find(c.candidate_id);
    if (it == dev_gold.end()) continue;
    scores.push_back(predict(model, c));
    gold.push_back(it->second);
  }
  return select_threshold(scores, gold);
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

template <class T>
void put(std::ostream& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.write(buf, sizeof(T));
}

template <class T>
T get(std::istream& in, const std::filesystem::path& path) {
  char buf[sizeof(T)];
  if (!in.read(buf, sizeof(T)))
    throw Error(ErrorCode::kParse, "truncated model file " + path.string(), {{"path", path.string()}});
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

nlohmann::ordered_json feature_config_json(const FeatureConfig& f) {
  return {{"max_ngram", f.max_ngram},   {"outer_window", f.outer_window},
          {"entity_ids", f.entity_ids}, {"entity_types", f.entity_types},
          {"distance", f.distance},     {"section", f.section},
          {"attributes", f.attributes}, {"date_bins", f.date_bins}};
}

}  // namespace

void save_model(const ClassifierModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw Error(ErrorCode::kMissingInput, "cannot write " + path.string(), {{"path", path.string()}});
  out.write("DSCM", 4);
  put<std::uint32_t>(out, 1);
  put<std::uint32_t>(out, kDims);
  put<double>(out, model.bias);
  put<double>(out, model.threshold);
  put<std::uint64_t>(out, model.feature_config_hash);
  put<std::uint64_t>(out, model.nonzeros());
  for (std::uint32_t i = 0; i < kDims; ++i) {
    if (model.weights[i] == 0.0) continue;
    put<std::uint32_t>(out, i);
    put<double>(out, model.weights[i]);
  }

  nlohmann::ordered_json j;
  j["format"] = "DSCM/1";
  j["dims"] = kDims;
  j["feature_config_hash"] = hex64(model.feature_config_hash);
  j["feature_config"] = feature_config_json(model.feature_config);
  j["train_config"] = {{"seed", model.train_config.seed},
                       {"epochs", model.train_config.epochs},
                       {"learning_rate", model.train_config.learning_rate},
                       {"lr_decay", model.train_config.lr_decay},
                       {"l2", model.train_config.l2},
                       {"batch_size", model.train_config.batch_size}};
  j["n_train"] = model.n_train;
  j["threshold"] = model.threshold;
  j["bias"] = model.bias;
  j["nonzeros"] = model.nonzeros();
  std::ofstream side(path.string() + ".json");
  side << j.dump(2) << "\n";
}

ClassifierModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(ErrorCode::kMissingInput, "cannot open model " + path.string(), {{"path", path.string()}});
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "DSCM", 4) != 0)
    throw Error(ErrorCode::kParse, "not a classifier model: " + path.string(), {{"path", path.string()}});
  if (get<std::uint32_t>(in, path) != 1)
    throw Error(ErrorCode::kParse, "unsupported model version", {{"path", path.string()}});
  if (get<std::uint32_t>(in, path) != kDims)
    throw Error(ErrorCode::kMismatch, "model hash dimension differs", {{"path", path.string()}});
  ClassifierModel m;
  m.bias = get<double>(in, path);
  m.threshold = get<double>(in, path);
  m.feature_config_hash = get<std::uint64_t>(in, path);
  const auto nnz = get<std::uint64_t>(in, path);
  for (std::uint64_t k = 0; k < nnz; ++k) {
    const auto i = get<std::uint32_t>(in, path);
    const auto w = get<double>(in, path);
    if (i >= kDims) throw Error(ErrorCode::kParse, "weight index out of range", {{"path", path.string()}});
    m.weights[i] = w;
  }

  std::ifstream side(path.string() + ".json");
  if (side) {
    try {
      auto j = nlohmann::json::parse(side);
      if (j.contains("feature_config")) {
        const auto& f = j["feature_config"];
        m.feature_config.max_ngram = f.value("max_ngram", 3);
        m.feature_config.outer_window = f.value("outer_window", 3);
        m.feature_config.entity_ids = f.value("entity_ids", true);
        m.feature_config.entity_types = f.value("entity_types", true);
        m.feature_config.distance = f.value("distance", true);
        m.feature_config.section = f.value("section", true);
        m.feature_config.attributes = f.value("attributes", true);
        m.feature_config.date_bins = f.value("date_bins", true);
      }
      if (j.contains("train_config")) {
        const auto& t = j["train_config"];
        m.train_config.seed = t.value("seed", std::uint64_t{17});
        m.train_config.epochs = t.value("epochs", 30);
        m.train_config.learning_rate = t.value("learning_rate", 0.5);
        m.train_config.lr_decay = t.value("lr_decay", 0.0);
        m.train_config.l2 = t.value("l2", 1e-3);
        m.train_config.batch_size = t.value("batch_size", std::size_t{32});
      }
      m.n_train = j.value("n_train", std::size_t{0});
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kParse, std::string("model sidecar: ") + e.what(), {{"path", path.string()}});
    }
  }
  if (m.feature_config.hash() != m.feature_config_hash)
    throw Error(ErrorCode::kMismatch, "model sidecar feature config does not match the stored hash",
                {{"path", path.string()}});
  return m;
}

}  // namespace devsurv::classifier
