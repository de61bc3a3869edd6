#include <algorithm>
#include <cmath>
#include <numeric>

#include "devsurv/csv.hpp"
#include "devsurv/outcomes.hpp"

namespace devsurv::outcomes {

void check_full_rank(const Eigen::MatrixXd& x, const std::vector<std::string>& names,
                     bool center) {
  if (x.cols() == 0) return;
  Eigen::MatrixXd z = x;
  if (center) z.rowwise() -= x.colwise().mean();
  std::vector<std::string> constant;
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    const double norm = z.col(j).norm();
    if (norm <= 1e-12 * std::max(1.0, x.col(j).norm()))
      constant.push_back(names[static_cast<std::size_t>(j)]);
    else
      z.col(j) /= norm;
  }
  if (!constant.empty())
    throw Error(ErrorCode::kRankDeficient,
                "design matrix is rank deficient; constant columns: " + join(constant, ", "),
                {{"columns", join(constant, ",")}});
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(z);
  qr.setThreshold(1e-9);
  if (qr.rank() == z.cols()) return;
  std::vector<std::string> collinear;
  for (Eigen::Index k = qr.rank(); k < z.cols(); ++k)
    collinear.push_back(names[static_cast<std::size_t>(qr.colsPermutation().indices()(k))]);
  std::sort(collinear.begin(), collinear.end());
  throw Error(ErrorCode::kRankDeficient,
              "design matrix is rank deficient; collinear columns: " + join(collinear, ", "),
              {{"columns", join(collinear, ",")}, {"rank", std::to_string(qr.rank())}});
}

namespace {

struct Problem {
  Eigen::MatrixXd x;  // centered
  std::vector<double> time;
  std::vector<bool> event;
  std::vector<Eigen::Index> order;  // descending time
};

struct Eval {
  double loglik = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd information;
};

Eval evaluate(const Problem& pb, const Eigen::VectorXd& beta, bool derivatives) {
  const Eigen::Index p = pb.x.cols();
  Eigen::VectorXd eta = p ? Eigen::VectorXd(pb.x * beta) : Eigen::VectorXd::Zero(pb.x.rows());
  const double shift = eta.size() ? eta.maxCoeff() : 0.0;
  Eval out;
  out.gradient = Eigen::VectorXd::Zero(p);
  out.information = Eigen::MatrixXd::Zero(p, p);
  double s0 = 0.0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);

  const auto n = pb.order.size();
  for (std::size_t a = 0; a < n;) {
    const double t = pb.time[static_cast<std::size_t>(pb.order[a])];
    std::size_t b = a;
    double d = 0.0;
    Eigen::VectorXd xsum = Eigen::VectorXd::Zero(p);
    double eta_sum = 0.0;
    for (; b < n && pb.time[static_cast<std::size_t>(pb.order[b])] == t; ++b) {
      const auto i = pb.order[b];
      const double w = std::exp(eta(i) - shift);
      s0 += w;
      if (derivatives && p) {
        s1.noalias() += w * pb.x.row(i).transpose();
        s2.noalias() += w * pb.x.row(i).transpose() * pb.x.row(i);
      }
      if (pb.event[static_cast<std::size_t>(i)]) {
        d += 1.0;
        eta_sum += eta(i);
        if (derivatives && p) xsum.noalias() += pb.x.row(i).transpose();
      }
    }
    if (d > 0.0) {
      out.loglik += eta_sum - d * (shift + std::log(s0));
      if (derivatives && p) {
        const Eigen::VectorXd mean = s1 / s0;
        out.gradient.noalias() += xsum - d * mean;
        out.information.noalias() += d * (s2 / s0 - mean * mean.transpose());
      }
    }
    a = b;
  }
  return out;
}

Problem make_problem(const Eigen::MatrixXd& x, const std::vector<double>& time,
                     const std::vector<bool>& event) {
  if (static_cast<std::size_t>(x.rows()) != time.size() || time.size() != event.size())
    throw Error(ErrorCode::kInvalidArgument, "design, time and event sizes differ");
  for (double t : time)
    if (!(t > 0.0) || !std::isfinite(t))
      throw Error(ErrorCode::kInvalidArgument, "survival times must be positive and finite");
  Problem pb;
  pb.x = x;
  if (x.cols()) pb.x.rowwise() -= x.colwise().mean();
  pb.time = time;
  pb.event = event;
  pb.order.resize(time.size());
  std::iota(pb.order.begin(), pb.order.end(), Eigen::Index{0});
  std::stable_sort(pb.order.begin(), pb.order.end(), [&](auto a, auto b) {
    return time[static_cast<std::size_t>(a)] > time[static_cast<std::size_t>(b)];
  });
  return pb;
}

std::string trace_string(const std::vector<double>& trace) {
  std::vector<std::string> parts;
  for (double v : trace) parts.push_back(fmt_double(v, 12));
  return join(parts, ",");
}

Eigen::MatrixXd safe_inverse(const Eigen::MatrixXd& m) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
  if (ldlt.info() == Eigen::Success && ldlt.isPositive())
    return ldlt.solve(Eigen::MatrixXd::Identity(m.rows(), m.cols()));
  return Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(m).pseudoInverse();
}

}  // namespace

double cox_partial_loglik(const Eigen::MatrixXd& x, const std::vector<double>& time,
                          const std::vector<bool>& event, const Eigen::VectorXd& beta) {
  return evaluate(make_problem(x, time, event), beta, false).loglik;
}

CoxFit cox_fit(const Eigen::MatrixXd& x, const std::vector<double>& time,
               const std::vector<bool>& event, const std::vector<std::string>& names,
               const CoxOptions& options) {
  if (names.size() != static_cast<std::size_t>(x.cols()))
    throw Error(ErrorCode::kInvalidArgument, "column names do not match the design matrix");
  if (std::find(event.begin(), event.end(), true) == event.end())
    throw Error(ErrorCode::kInvalidArgument, "Cox model needs at least one event");
  check_full_rank(x, names, true);
  const Problem pb = make_problem(x, time, event);
  const Eigen::Index p = x.cols();

  CoxFit fit;
  fit.df = static_cast<int>(p);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eval cur = evaluate(pb, beta, true);
  fit.null_log_likelihood = cur.loglik;
  fit.log_likelihood_trace.push_back(cur.loglik);

  if (p > 0) {
    const Eigen::MatrixXd inv0 = safe_inverse(cur.information);
    fit.score_statistic = std::max(0.0, cur.gradient.dot(inv0 * cur.gradient));
    fit.score_p = chi_squared_upper(fit.score_statistic, static_cast<double>(p));
  }

  Eigen::VectorXd sd(p);
  for (Eigen::Index j = 0; j < p; ++j)
    sd(j) = std::sqrt(pb.x.col(j).squaredNorm() / static_cast<double>(std::max<Eigen::Index>(1, pb.x.rows())));

  // A coefficient running off to infinity shows up either as a huge estimate
  // or, once the likelihood has flattened, as a huge standard error.
  auto separated = [&]() {
    const Eigen::MatrixXd cov = safe_inverse(cur.information);
    std::vector<std::string> cols;
    for (Eigen::Index j = 0; j < p; ++j)
      if (std::abs(beta(j)) * sd(j) > options.separation_bound ||
          std::sqrt(std::max(0.0, cov(j, j))) * sd(j) > options.flat_se_bound)
        cols.push_back(names[static_cast<std::size_t>(j)]);
    return cols;
  };

  fit.converged = p == 0;
  for (int it = 1; it <= options.max_iterations && !fit.converged; ++it) {
    fit.iterations = it;
    Eigen::VectorXd step = safe_inverse(cur.information) * cur.gradient;
    Eigen::VectorXd next = beta + step;
    Eval cand = evaluate(pb, next, true);
    for (int h = 0; h < 30 && !(cand.loglik >= cur.loglik); ++h) {
      step *= 0.5;
      next = beta + step;
      cand = evaluate(pb, next, true);
    }
    if (!(cand.loglik >= cur.loglik)) {
      // No ascent direction left: the current point is the optimum to machine precision.
      fit.converged = true;
      break;
    }
    const double change = std::abs(cand.loglik - cur.loglik);
    beta = next;
    cur = std::move(cand);
    fit.log_likelihood_trace.push_back(cur.loglik);
    if (change <= options.tolerance * std::abs(cur.loglik) || change == 0.0) fit.converged = true;
  }

  if (auto cols = separated(); !cols.empty())
    throw Error(ErrorCode::kSeparation,
                "monotone likelihood (perfect separation) in columns: " + join(cols, ", ") +
                    "; consider removing or merging these covariates",
                {{"columns", join(cols, ",")}, {"trace", trace_string(fit.log_likelihood_trace)}});
  if (!fit.converged)
    throw Error(ErrorCode::kNonConvergence,
                "Cox fit did not converge in " + std::to_string(options.max_iterations) + " iterations",
                {{"iterations", std::to_string(fit.iterations)},
                 {"trace", trace_string(fit.log_likelihood_trace)}});

  fit.log_likelihood = cur.loglik;
  fit.lr_statistic = std::max(0.0, 2.0 * (fit.log_likelihood - fit.null_log_likelihood));
  fit.lr_p = p ? chi_squared_upper(fit.lr_statistic, static_cast<double>(p)) : 1.0;
  const Eigen::MatrixXd cov = p ? safe_inverse(cur.information) : Eigen::MatrixXd();
  for (Eigen::Index j = 0; j < p; ++j) {
    Coefficient c;
    c.name = names[static_cast<std::size_t>(j)];
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

CoxFit cox_fit(const SurvivalDataset& ds, const std::string& group_factor, const CoxOptions& options) {
  auto time = ds.times();
  auto event = ds.events();
  CoxFit fit = cox_fit(ds.x, time, event, ds.column_names, options);
  auto groups = ds.levels(group_factor);
  std::vector<std::string> distinct(groups.begin(), groups.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() >= 2 && !(distinct.size() == 2 && distinct.front().empty()))
    fit.logrank = logrank_test(time, event, groups);
  return fit;
}

}  // namespace devsurv::outcomes
