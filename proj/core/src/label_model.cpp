#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "devsurv/weaksup.hpp"

namespace devsurv::weaksup {

namespace {

double logsumexp(double a, double b) {
  const double mx = std::max(a, b);
  return mx + std::log(std::exp(a - mx) + std::exp(b - mx));
}

/// Per-row log joint for y = TRUE / FALSE, without the propensity terms
/// (which do not depend on y).
struct RowScores {
  double log_true;
  double log_false;
};

RowScores row_scores(const LabelModel& model, const LabelMatrix& matrix, std::size_t i) {
  RowScores s{std::log(model.pi), std::log(1.0 - model.pi)};
  for (std::size_t j = 0; j < matrix.m(); ++j) {
    const Vote v = matrix.at(i, j);
    if (v == Vote::kAbstain) continue;
    const double la = std::log(model.alpha[j]);
    const double lna = std::log(1.0 - model.alpha[j]);
    s.log_true += v == Vote::kTrue ? la : lna;
    s.log_false += v == Vote::kFalse ? la : lna;
  }
  return s;
}

double propensity_term(const LabelModel& model, const LabelMatrix& matrix, std::size_t i) {
  double t = 0.0;
  for (std::size_t j = 0; j < matrix.m(); ++j) {
    const bool voted = matrix.at(i, j) != Vote::kAbstain;
    const double p = voted ? model.beta[j] : 1.0 - model.beta[j];
    t += std::log(p);
  }
  return t;
}

void check_columns(const LabelModel& model, const LabelMatrix& matrix) {
  if (model.lf_ids != matrix.lf_ids())
    throw Error(ErrorCode::kMismatch, "label model and matrix have different labeling functions",
                {{"model_lf_ids", join(model.lf_ids, ",")},
                 {"matrix_lf_ids", join(matrix.lf_ids(), ",")}});
}

}  // namespace

double label_model_log_likelihood(const LabelModel& model, const LabelMatrix& matrix) {
  check_columns(model, matrix);
  double ll = 0.0;
  for (std::size_t i = 0; i < matrix.n(); ++i) {
    const auto s = row_scores(model, matrix, i);
    ll += propensity_term(model, matrix, i) + logsumexp(s.log_true, s.log_false);
  }
  return ll;
}

LabelModel fit_label_model(const LabelMatrix& matrix, const LabelModelConfig& config) {
  const std::size_t n = matrix.n(), m = matrix.m();
  if (n == 0 || m == 0)
    throw Error(ErrorCode::kInvalidArgument, "label model needs at least one row and one column",
                {{"n", std::to_string(n)}, {"m", std::to_string(m)}});
  if (!(config.prior > 0.0 && config.prior < 1.0))
    throw Error(ErrorCode::kInvalidConfig, "class prior must lie in (0, 1)");

  LabelModel model;
  model.lf_ids = matrix.lf_ids();
  model.pi = config.prior;
  model.alpha.assign(m, std::clamp(config.init_accuracy, kMinAccuracy, kMaxAccuracy));
  model.beta.assign(m, 0.0);

  std::size_t non_abstain = 0;
  for (std::size_t j = 0; j < m; ++j) {
    std::size_t c = 0;
    for (std::size_t i = 0; i < n; ++i) c += matrix.at(i, j) != Vote::kAbstain;
    model.beta[j] = static_cast<double>(c) / static_cast<double>(n);
    non_abstain += c;
  }
  if (non_abstain == 0)
    throw Error(ErrorCode::kNoSignal, "no signal: every labeling function abstains on every row");

  std::vector<double> q(n);
  double ll_prev = label_model_log_likelihood(model, matrix);
  for (int it = 1; it <= config.max_iterations; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto s = row_scores(model, matrix, i);
      q[i] = 1.0 / (1.0 + std::exp(s.log_false - s.log_true));
    }
    for (std::size_t j = 0; j < m; ++j) {
      double agree = 0.0;
      std::size_t count = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const Vote v = matrix.at(i, j);
        if (v == Vote::kAbstain) continue;
        ++count;
        agree += v == Vote::kTrue ? q[i] : 1.0 - q[i];
      }
      if (count > 0)
        model.alpha[j] = std::clamp(agree / static_cast<double>(count), kMinAccuracy, kMaxAccuracy);
    }
    if (config.learn_prior) {
      double s = 0.0;
      for (double x : q) s += x;
      model.pi = std::clamp(s / static_cast<double>(n), kMinAccuracy, kMaxAccuracy);
    }
    const double ll = label_model_log_likelihood(model, matrix);
    model.log_likelihood_trace.push_back(ll);
    model.iterations = it;
    model.log_likelihood = ll;
    const double rel = std::abs(ll - ll_prev) / std::max(std::abs(ll_prev), 1e-300);
    ll_prev = ll;
    if (rel < config.tolerance) {
      model.converged = true;
      break;
    }
  }

  double mean_alpha = 0.0;
  for (double a : model.alpha) mean_alpha += a;
  mean_alpha /= static_cast<double>(m);
  if (mean_alpha < 0.5) {
    for (auto& a : model.alpha) a = 1.0 - a;
    model.pi = 1.0 - model.pi;
    model.flipped = true;
  }
  return model;
}

ProbabilisticLabels posterior_labels(const LabelModel& model, const LabelMatrix& matrix) {
  check_columns(model, matrix);
  ProbabilisticLabels out;
  out.candidate_ids = matrix.candidate_ids();
  out.p_true.resize(matrix.n());
  for (std::size_t i = 0; i < matrix.n(); ++i) {
    const auto s = row_scores(model, matrix, i);
    out.p_true[i] = 1.0 / (1.0 + std::exp(s.log_false - s.log_true));
  }
  return out;
}

std::string label_model_to_json(const LabelModel& model) {
  nlohmann::ordered_json j;
  j["lf_ids"] = model.lf_ids;
  j["pi"] = model.pi;
  j["alpha"] = model.alpha;
  j["beta"] = model.beta;
  j["diagnostics"] = {{"iterations", model.iterations},
                      {"converged", model.converged},
                      {"flipped", model.flipped},
                      {"log_likelihood", model.log_likelihood},
                      {"log_likelihood_trace", model.log_likelihood_trace}};
  return j.dump(2) + "\n";
}

LabelModel label_model_from_json(std::string_view text) {
  try {
    auto j = nlohmann::json::parse(text);
    LabelModel m;
    m.lf_ids = j.at("lf_ids").get<std::vector<std::string>>();
    m.pi = j.at("pi").get<double>();
    m.alpha = j.at("alpha").get<std::vector<double>>();
    m.beta = j.at("beta").get<std::vector<double>>();
    if (m.alpha.size() != m.lf_ids.size() || m.beta.size() != m.lf_ids.size())
      throw Error(ErrorCode::kParse, "label model arrays disagree with lf_ids");
    if (j.contains("diagnostics")) {
      const auto& d = j["diagnostics"];
      m.iterations = d.value("iterations", 0);
      m.converged = d.value("converged", false);
      m.flipped = d.value("flipped", false);
      m.log_likelihood = d.value("log_likelihood", 0.0);
      m.log_likelihood_trace = d.value("log_likelihood_trace", std::vector<double>{});
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("label model JSON: ") + e.what());
  }
}

}  // namespace devsurv::weaksup
