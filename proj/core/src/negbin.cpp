#include <algorithm>
#include <cmath>
#include <set>

#include "devsurv/outcomes.hpp"

namespace devsurv::outcomes {

namespace {

// Counts are validated integral, so the gamma-function differences reduce to
// finite sums that stay accurate for very large theta.
double log_rising(double theta, double y) {
  double s = 0.0;
  for (double k = 0.0; k < y; k += 1.0) s += std::log(theta + k);
  return s;
}

struct ThetaDerivs {
  double score = 0.0;
  double hessian = 0.0;
};

ThetaDerivs theta_derivs(const std::vector<double>& y, const Eigen::VectorXd& mu, double theta) {
  ThetaDerivs d;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double m = mu(static_cast<Eigen::Index>(i));
    double psi = 0.0, tri = 0.0;
    for (double k = 0.0; k < y[i]; k += 1.0) {
      psi += 1.0 / (theta + k);
      tri += 1.0 / ((theta + k) * (theta + k));
    }
    d.score += psi - std::log1p(m / theta) + (m - y[i]) / (theta + m);
    d.hessian += -tri + (m * m + theta * y[i]) / (theta * (theta + m) * (theta + m));
  }
  return d;
}

double loglik_mu(const std::vector<double>& y, const Eigen::VectorXd& mu, double theta) {
  double ll = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double m = mu(static_cast<Eigen::Index>(i));
    ll += log_rising(theta, y[i]) - std::lgamma(y[i] + 1.0) - theta * std::log1p(m / theta);
    if (y[i] > 0.0) ll += y[i] * (std::log(m) - std::log(theta + m));
  }
  return ll;
}

struct Design {
  Eigen::MatrixXd z;  // intercept first
  Eigen::VectorXd offset;
  std::vector<double> y;
};

Eigen::VectorXd means(const Design& d, const Eigen::VectorXd& beta) {
  return (d.z * beta + d.offset).array().exp().matrix();
}

/// Newton on log(theta) with step halving; returns the new theta.
double update_theta(const std::vector<double>& y, const Eigen::VectorXd& mu, double theta,
                    double theta_max) {
  const double u_max = std::log(theta_max);
  double u = std::log(theta);
  double ll = loglik_mu(y, mu, theta);
  for (int it = 0; it < 100; ++it) {
    const auto d = theta_derivs(y, mu, std::exp(u));
    const double th = std::exp(u);
    const double g = th * d.score;
    const double h = th * th * d.hessian + th * d.score;
    double step = h < 0.0 ? -g / h : (g > 0.0 ? 1.0 : -1.0);
    step = std::clamp(step, -5.0, 5.0);
    double next = std::min(u + step, u_max);
    double ll_next = loglik_mu(y, mu, std::exp(next));
    for (int k = 0; k < 40 && ll_next < ll; ++k) {
      step *= 0.5;
      next = std::min(u + step, u_max);
      ll_next = loglik_mu(y, mu, std::exp(next));
    }
    if (ll_next < ll) break;
    const double du = std::abs(next - u);
    u = next;
    ll = ll_next;
    if (du < 1e-12 || (u >= u_max && g > 0.0)) break;
  }
  return std::exp(u);
}

}  // namespace

double nb_log_likelihood(const std::vector<double>& counts, const std::vector<double>& mu,
                         double theta) {
  if (counts.size() != mu.size()) throw Error(ErrorCode::kInvalidArgument, "counts and means differ in length");
  Eigen::VectorXd m(static_cast<Eigen::Index>(mu.size()));
  for (std::size_t i = 0; i < mu.size(); ++i) m(static_cast<Eigen::Index>(i)) = mu[i];
  return loglik_mu(counts, m, theta);
}

NBFit nb_fit(const Eigen::MatrixXd& x, const std::vector<double>& counts,
             const std::vector<std::string>& names, const std::vector<double>* exposure,
             const NBOptions& options) {
  const auto n = counts.size();
  if (static_cast<std::size_t>(x.rows()) != n || names.size() != static_cast<std::size_t>(x.cols()))
    throw Error(ErrorCode::kInvalidArgument, "design, names and counts do not align");
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "no observations");
  double total = 0.0;
  for (double c : counts) {
    if (!(c >= 0.0) || !std::isfinite(c) || c != std::floor(c))
      throw Error(ErrorCode::kInvalidArgument, "counts must be non-negative integers");
    total += c;
  }
  if (total == 0.0) throw Error(ErrorCode::kInvalidArgument, "all counts are zero; the model is not identifiable");
  if (exposure && exposure->size() != n)
    throw Error(ErrorCode::kInvalidArgument, "exposure differs in length from counts");
  check_full_rank(x, names, true);

  Design d;
  d.y = counts;
  const Eigen::Index p = x.cols() + 1;
  d.z.resize(static_cast<Eigen::Index>(n), p);
  d.z.col(0).setOnes();
  d.z.rightCols(x.cols()) = x;
  d.offset = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  double exposure_total = static_cast<double>(n);
  if (exposure) {
    exposure_total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = (*exposure)[i];
      if (!(e > 0.0) || !std::isfinite(e))
        throw Error(ErrorCode::kInvalidArgument, "exposure must be positive");
      d.offset(static_cast<Eigen::Index>(i)) = std::log(e);
      exposure_total += e;
    }
  }

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  beta(0) = std::log(total / exposure_total);
  double theta;
  {
    const double mean = total / static_cast<double>(n);
    double var = 0.0;
    for (double c : counts) var += (c - mean) * (c - mean);
    var /= std::max<double>(1.0, static_cast<double>(n) - 1.0);
    theta = var > mean * 1.0001 ? mean * mean / (var - mean) : options.theta_max / 10.0;
    theta = std::clamp(theta, 1e-3, options.theta_max);
  }

  NBFit fit;
  Eigen::VectorXd mu = means(d, beta);
  double ll = loglik_mu(d.y, mu, theta);
  Eigen::MatrixXd info;
  for (int it = 1; it <= options.max_iterations; ++it) {
    fit.iterations = it;
    // IRLS (Fisher scoring) step on beta at fixed theta.
    const Eigen::VectorXd w = (mu.array() / (1.0 + mu.array() / theta)).matrix();
    Eigen::VectorXd yv(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) yv(static_cast<Eigen::Index>(i)) = d.y[i];
    const Eigen::VectorXd score = d.z.transpose() * (w.array() * (yv - mu).array() / mu.array()).matrix();
    info = d.z.transpose() * w.asDiagonal() * d.z;
    Eigen::VectorXd step = info.ldlt().solve(score);
    Eigen::VectorXd next = beta + step;
    Eigen::VectorXd mu_next = means(d, next);
    double ll_next = loglik_mu(d.y, mu_next, theta);
    for (int k = 0; k < 40 && !(ll_next >= ll); ++k) {
      step *= 0.5;
      next = beta + step;
      mu_next = means(d, next);
      ll_next = loglik_mu(d.y, mu_next, theta);
    }
    if (!(ll_next >= ll)) {
      next = beta;
      mu_next = mu;
      ll_next = ll;
    }
    const double new_theta = update_theta(d.y, mu_next, theta, options.theta_max);
    const double dbeta = ((next - beta).array().abs() / (1.0 + beta.array().abs())).maxCoeff();
    const double dtheta = std::abs(new_theta - theta) / theta;
    beta = next;
    mu = mu_next;
    theta = new_theta;
    ll = loglik_mu(d.y, mu, theta);
    if (dbeta < options.tolerance && dtheta < options.tolerance) {
      fit.converged = true;
      break;
    }
  }
  if (!fit.converged)
    throw Error(ErrorCode::kNonConvergence,
                "negative binomial fit did not converge in " + std::to_string(options.max_iterations) +
                    " iterations",
                {{"iterations", std::to_string(fit.iterations)}, {"theta", std::to_string(theta)}});

  const Eigen::VectorXd w = (mu.array() / (1.0 + mu.array() / theta)).matrix();
  info = d.z.transpose() * w.asDiagonal() * d.z;
  const Eigen::MatrixXd cov = info.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
  fit.theta = theta;
  fit.theta_at_bound = theta >= options.theta_max * (1.0 - 1e-9);
  fit.log_likelihood = ll;
  fit.aic = 2.0 * static_cast<double>(p + 1) - 2.0 * ll;
  for (Eigen::Index j = 0; j < p; ++j) {
    Coefficient c;
    c.name = j == 0 ? "(Intercept)" : names[static_cast<std::size_t>(j - 1)];
    c.estimate = beta(j);
    c.se = std::sqrt(std::max(0.0, cov(j, j)));
    c.ratio = std::exp(c.estimate);
    c.ci_low = std::exp(c.estimate - 1.96 * c.se);
    c.ci_high = std::exp(c.estimate + 1.96 * c.se);
    c.z = c.se > 0.0 ? c.estimate / c.se : 0.0;
    c.p_value = normal_two_sided_p(c.z);
    fit.coefficients.push_back(std::move(c));
  }
  return fit;
}

std::vector<std::string> collapse_systems(const std::vector<std::string>& system_of_subject,
                                          int cutoff, std::string* reference,
                                          std::vector<std::string>* collapsed) {
  std::map<std::string, std::size_t> counts;
  for (const auto& s : system_of_subject) ++counts[s];
  std::string ref;
  std::size_t best = 0;
  for (const auto& [s, c] : counts)
    if (c > best) {
      best = c;
      ref = s;
    }
  std::set<std::string> folded;
  for (const auto& [s, c] : counts)
    if (s != ref && static_cast<long>(c) < cutoff) folded.insert(s);
  if (reference) *reference = ref;
  if (collapsed) collapsed->assign(folded.begin(), folded.end());
  std::vector<std::string> out;
  out.reserve(system_of_subject.size());
  for (const auto& s : system_of_subject) out.push_back(folded.count(s) ? std::string(kOtherSystem) : s);
  return out;
}

CutoffResult choose_other_cutoff(const std::vector<std::string>& system_of_subject,
                                 const std::vector<int>& candidate_cutoffs,
                                 const CutoffContext& context) {
  if (candidate_cutoffs.empty()) throw Error(ErrorCode::kInvalidArgument, "no candidate cutoffs");
  const auto n = system_of_subject.size();
  if (context.counts.size() != n ||
      (context.covariates.cols() > 0 && static_cast<std::size_t>(context.covariates.rows()) != n))
    throw Error(ErrorCode::kInvalidArgument, "cutoff context does not align with systems");

  std::vector<int> cutoffs = candidate_cutoffs;
  std::sort(cutoffs.begin(), cutoffs.end());
  cutoffs.erase(std::unique(cutoffs.begin(), cutoffs.end()), cutoffs.end());

  CutoffResult best;
  bool have = false;
  std::vector<std::string> warnings;
  for (int cutoff : cutoffs) {
    std::string ref;
    std::vector<std::string> collapsed;
    const auto labels = collapse_systems(system_of_subject, cutoff, &ref, &collapsed);
    std::set<std::string> levels(labels.begin(), labels.end());
    levels.erase(ref);
    const Eigen::Index k = static_cast<Eigen::Index>(levels.size());
    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), k + context.covariates.cols());
    std::vector<std::string> names;
    Eigen::Index col = 0;
    for (const auto& lv : levels) {
      for (std::size_t i = 0; i < n; ++i) x(static_cast<Eigen::Index>(i), col) = labels[i] == lv ? 1.0 : 0.0;
      names.push_back("system=" + lv);
      ++col;
    }
    if (context.covariates.cols() > 0) x.rightCols(context.covariates.cols()) = context.covariates;
    names.insert(names.end(), context.covariate_names.begin(), context.covariate_names.end());
    try {
      auto fit = nb_fit(x, context.counts, names, context.exposure.empty() ? nullptr : &context.exposure,
                        context.options);
      best.aic.emplace_back(cutoff, fit.aic);
      if (!have || fit.aic < best.fit.aic) {
        have = true;
        best.cutoff = cutoff;
        best.fit = std::move(fit);
        best.collapsed = std::move(collapsed);
        best.reference = ref;
      }
    } catch (const Error& e) {
      warnings.push_back("cutoff " + std::to_string(cutoff) + " skipped: " + e.what());
    }
  }
  if (!have)
    throw Error(ErrorCode::kNonConvergence, "every candidate cutoff failed to fit",
                {{"warnings", join(warnings, " | ")}});
  best.warnings = std::move(warnings);
  return best;
}

}  // namespace devsurv::outcomes
