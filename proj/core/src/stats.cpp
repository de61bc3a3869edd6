#include <cmath>
#include <fstream>
#include <numeric>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "devsurv/csv.hpp"
#include "devsurv/outcomes.hpp"

namespace devsurv::outcomes {

double normal_two_sided_p(double z) {
  if (!std::isfinite(z)) return 0.0;
  return 2.0 * boost::math::cdf(boost::math::complement(boost::math::normal(), std::abs(z)));
}

double chi_squared_upper(double x, double df) {
  if (x <= 0.0) return 1.0;
  if (!std::isfinite(x)) return 0.0;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared(df), x));
}

namespace {

std::pair<double, double> mean_var(const std::vector<double>& v) {
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, ss / static_cast<double>(v.size() - 1)};
}

}  // namespace

TTestResult ttest_welch(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2)
    throw Error(ErrorCode::kInvalidArgument, "each group needs at least two values",
                {{"n_a", std::to_string(a.size())}, {"n_b", std::to_string(b.size())}});
  const auto [ma, va] = mean_var(a);
  const auto [mb, vb] = mean_var(b);
  if (va == 0.0 && vb == 0.0)
    throw Error(ErrorCode::kInvalidArgument, "both groups have zero variance");
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double sa = va / na, sb = vb / nb;
  TTestResult r;
  r.mean_a = ma;
  r.mean_b = mb;
  r.t = (ma - mb) / std::sqrt(sa + sb);
  r.df = (sa + sb) * (sa + sb) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
  r.p_value = r.t == 0.0
                  ? 1.0
                  : 2.0 * boost::math::cdf(boost::math::complement(
                              boost::math::students_t(r.df), std::abs(r.t)));
  return r;
}

void write_forest_csv(const std::vector<ForestRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kMissingInput, "cannot write " + path.string(), {{"path", path.string()}});
  CsvWriter w(out);
  w.row({"system", "n_patients", "n_events", "person_years", "HR", "CI_low", "CI_high", "p"});
  for (const auto& r : rows) {
    if (r.hr)
      w.row({r.system, std::to_string(r.n_patients), std::to_string(r.n_events),
             fmt_fixed(r.person_years, 2), fmt_double(r.hr->ratio, 6), fmt_double(r.hr->ci_low, 6),
             fmt_double(r.hr->ci_high, 6), fmt_double(r.hr->p_value, 6)});
    else
      w.row({r.system, std::to_string(r.n_patients), std::to_string(r.n_events),
             fmt_fixed(r.person_years, 2), "1", "", "", ""});
  }
}

}  // namespace devsurv::outcomes
