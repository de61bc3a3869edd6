#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "devsurv/outcomes.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace devsurv;
using namespace devsurv::outcomes;
using testing::ymd;

namespace {

Event ev(std::string patient, EventClass c, Date d, EventSource s, std::string prov = "") {
  return {std::move(patient), c, d, s, std::move(prov)};
}

PatientRecord patient(std::string id, std::vector<CodedEntry> codes, std::optional<Date> last = std::nullopt,
                      std::vector<std::string> systems = {"Zimmer VerSys"}) {
  PatientRecord r;
  r.patient_id = std::move(id);
  r.birth_date = ymd(1950, 6, 1);
  r.sex = "F";
  r.race = "White";
  r.ethnicity = "Not Hispanic";
  r.codes = std::move(codes);
  r.last_contact_date = last;
  r.implant_systems = std::move(systems);
  return r;
}

struct Simulated {
  std::vector<double> time;
  std::vector<bool> event;
  std::vector<double> x;
};

// Exponential hazards with rate base * hr^x and uniform censoring.
Simulated simulate_survival(std::uint64_t seed, std::size_t n, double hr) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  Simulated s;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = i % 2;
    const double t = -std::log(1 - u(rng)) / (0.001 * std::pow(hr, x));
    const double c = 200 + 2000 * u(rng);
    s.time.push_back(std::ceil(std::min(t, c)));
    s.event.push_back(t <= c);
    s.x.push_back(x);
  }
  return s;
}

double nb_draw(std::mt19937_64& rng, double mu, double theta) {
  std::gamma_distribution<double> g(theta, mu / theta);
  std::poisson_distribution<int> p(g(rng));
  return p(rng);
}

}  // namespace

TEST_CASE("cohort: earliest primary code is the index; later revisions kept") {
  std::vector<PatientRecord> rs{
      patient("A", {{"ICD9", "81.51", ymd(2005, 3, 1)}, {"CPT", "27130", ymd(2004, 1, 1)},
                    {"ICD9", "81.53", ymd(2003, 5, 5)}, {"cpt", "27134", ymd(2006, 1, 1)}}),
      patient("B", {{"ICD9", "81.53", ymd(2006, 1, 1)}}),
  };
  const auto c = select_cohort(rs);
  REQUIRE(c.members.size() == 1);
  CHECK(c.members[0].patient_id == "A");
  CHECK(c.members[0].index_date == ymd(2004, 1, 1));
  REQUIRE(c.coded_revisions.size() == 1);
  CHECK(c.coded_revisions[0].date == ymd(2006, 1, 1));

  CodeConfig empty;
  empty.primary.clear();
  CHECK_THROWS_AS(select_cohort(rs, empty), Error);
}

TEST_CASE("comorbidity categories") {
  CHECK(categorize_cci(0) == CciCategory::kNone);
  CHECK(categorize_cci(1) == CciCategory::kLow);
  CHECK(categorize_cci(2) == CciCategory::kModerate);
  CHECK(categorize_cci(3) == CciCategory::kHigh);
  CHECK(categorize_cci(11) == CciCategory::kHigh);
  CHECK_THROWS_AS(categorize_cci(-1), Error);
}

TEST_CASE("merge: window, duplicates, classes") {
  const Date d = ymd(2007, 1, 10);
  auto m = merge_events({ev("P", EventClass::kInfection, d, EventSource::kCoded, "c")},
                        {ev("P", EventClass::kInfection, d - std::chrono::days(90), EventSource::kText, "t")});
  REQUIRE(m.events.size() == 1);
  CHECK(m.matched == 1);
  CHECK(m.events[0].source == EventSource::kBoth);
  CHECK(m.events[0].date == d - std::chrono::days(90));

  m = merge_events({ev("P", EventClass::kInfection, d, EventSource::kCoded)},
                   {ev("P", EventClass::kInfection, d + std::chrono::days(91), EventSource::kText)});
  CHECK(m.events.size() == 2);
  CHECK(m.matched == 0);

  m = merge_events({ev("P", EventClass::kInfection, d, EventSource::kCoded)},
                   {ev("P", EventClass::kPain, d, EventSource::kText)});
  CHECK(m.events.size() == 2);

  m = merge_events({}, {ev("P", EventClass::kPain, d, EventSource::kText, "a"),
                        ev("P", EventClass::kPain, d, EventSource::kText, "b")});
  REQUIRE(m.events.size() == 1);
  CHECK(m.duplicates == 1);
  CHECK(m.events[0].provenance == "a;b");
  CHECK_THROWS_AS(merge_events({}, {}, -1), Error);
}

TEST_CASE("merge: 78 coded and 504 text events with 63 pairs give 519") {
  std::vector<Event> coded, text;
  const Date base = ymd(2006, 1, 1);
  for (int i = 0; i < 504; ++i) {
    const auto p = "P" + std::to_string(i);
    text.push_back(ev(p, EventClass::kRevision, base + std::chrono::days(i % 30), EventSource::kText));
    if (i < 63) coded.push_back(ev(p, EventClass::kRevision, base + std::chrono::days(i % 30 + 10), EventSource::kCoded));
  }
  for (int i = 0; i < 15; ++i)
    coded.push_back(ev("Q" + std::to_string(i), EventClass::kRevision, base, EventSource::kCoded));
  const auto m = merge_events(coded, text);
  CHECK(m.events.size() == 519);
  CHECK(m.matched == 63);
  CHECK(static_cast<double>(m.events.size()) / 78.0 > 6.0);
}

TEST_CASE("survival dataset: event times, censoring, exclusions") {
  const std::vector<PatientRecord> rs{
      patient("E", {{"ICD9", "81.51", ymd(2005, 1, 1)}, {"ICD9", "81.53", ymd(2006, 1, 1)}}),
      patient("C", {{"ICD9", "81.51", ymd(2005, 1, 1)}}, ymd(2007, 1, 1)),
      patient("Z", {{"ICD9", "81.51", ymd(2005, 1, 1)}}, ymd(2005, 1, 1)),
      patient("M", {{"ICD9", "81.51", ymd(2005, 1, 1)}}, ymd(2007, 1, 1), {"A", "B"}),
      patient("T", {{"ICD9", "81.51", ymd(2005, 1, 1)}}, ymd(2009, 1, 1), {"DePuy Pinnacle"}),
  };
  const auto cohort = select_cohort(rs);
  auto events = cohort.coded_revisions;
  events.push_back(ev("T", EventClass::kInfection, ymd(2005, 2, 1), EventSource::kText));
  events.push_back(ev("T", EventClass::kInfection, ymd(2004, 2, 1), EventSource::kText));
  const auto ds = build_survival_dataset(rs, cohort, events, "any_complication");
  CHECK(ds.excluded_implant == 1);
  CHECK(ds.excluded_nonpositive == 1);
  REQUIRE(ds.subjects.size() == 3);
  std::map<std::string, const SurvivalSubject*> by;
  for (const auto& s : ds.subjects) by[s.patient_id] = &s;
  CHECK(by.at("E")->event);
  CHECK(by.at("E")->time == 365);
  CHECK_FALSE(by.at("C")->event);
  CHECK(by.at("C")->time == 730);
  CHECK(by.at("T")->event);
  CHECK(by.at("T")->time == 31);
  CHECK(by.at("E")->factors.at("age") == "50-59");
  CHECK(ds.reference_levels.at("system") == "Zimmer VerSys");
  CHECK(ds.column_names == std::vector<std::string>{"system=DePuy Pinnacle"});

  const auto infection = build_survival_dataset(rs, cohort, events, "infection");
  CHECK_FALSE(infection.subjects[0].event);
  CHECK_THROWS_AS(build_survival_dataset(rs, cohort, events, "bogus"), Error);
}

TEST_CASE("age bands") {
  CHECK(age_band(ymd(1950, 6, 2), ymd(2000, 6, 1)) == "40-49");
  CHECK(age_band(ymd(1950, 6, 1), ymd(2000, 6, 1)) == "50-59");
  CHECK(age_band(ymd(1990, 1, 1), ymd(2000, 6, 1)) == "<40");
  CHECK(age_band(ymd(1900, 1, 1), ymd(2000, 6, 1)) == "80+");
  CHECK(age_band(std::nullopt, ymd(2000, 6, 1)) == "Unknown");
}

TEST_CASE("kaplan-meier: hand product-limit values") {
  // Times 1+ 2 2 3+ 4 5: S(2) = 1 - 2/5, S(4) = 0.6 * (1 - 1/2), S(5) = 0.
  const auto km = km_estimate({1, 2, 2, 3, 4, 5}, {false, true, true, false, true, true});
  REQUIRE(km.size() == 1);
  const auto& c = km[0];
  CHECK(c.times == std::vector<double>{2, 4, 5});
  CHECK(c.survival[0] == 0.6);
  CHECK(c.survival[1] == 0.3);
  CHECK(c.survival[2] == 0.0);
  CHECK(c.at_risk == std::vector<std::size_t>{5, 2, 1});
  CHECK(c.at(1.5) == 1.0);
  CHECK(c.at(3) == 0.6);
  CHECK_THROWS_AS(km_estimate({0}, {true}), Error);
}

TEST_CASE("kaplan-meier agrees with a direct product-limit on random data") {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> t(1, 15);
  std::bernoulli_distribution e(0.6);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> time;
    std::vector<bool> event;
    for (int i = 0; i < 50; ++i) {
      time.push_back(t(rng));
      event.push_back(e(rng));
    }
    const auto c = km_estimate(time, event)[0];
    const auto expect = oracle::product_limit(time, event);
    REQUIRE(c.times.size() == expect.size());
    std::size_t k = 0;
    for (const auto& [tk, s] : expect) {
      CHECK(c.times[k] == tk);
      CHECK(c.survival[k] == doctest::Approx(s).epsilon(1e-14));
      ++k;
    }
  }
}

TEST_CASE("log-rank: six-subject hand calculation") {
  // A: 1, 3, 5+; B: 2, 4+, 6. O_A = 2, E_A = 0.5 + 0.4 + 0.5 = 1.4,
  // V = 0.25 + 0.24 + 0.25 = 0.74.
  const auto r = logrank_test({1, 3, 5, 2, 4, 6}, {true, true, false, true, false, true},
                              {"A", "A", "A", "B", "B", "B"});
  REQUIRE(r.groups == std::vector<std::string>{"A", "B"});
  CHECK(r.observed[0] == 2);
  CHECK(r.expected[0] == doctest::Approx(1.4));
  CHECK(r.statistic == doctest::Approx(0.36 / 0.74));
  CHECK(r.df == 1);
  CHECK(r.p_value == doctest::Approx(0.4854988026));
  CHECK_THROWS_AS(logrank_test({1, 2}, {true, true}, {"A", "A"}), Error);
  CHECK_THROWS_AS(logrank_test({1, 2}, {false, false}, {"A", "B"}), Error);
}

TEST_CASE("log-rank: identical groups give zero; null p-values are uniform") {
  const auto s = simulate_survival(5, 60, 1.0);
  std::vector<double> t = s.time;
  std::vector<bool> e = s.event;
  t.insert(t.end(), s.time.begin(), s.time.end());
  e.insert(e.end(), s.event.begin(), s.event.end());
  std::vector<std::string> g(60, "A");
  g.resize(120, "B");
  const auto r = logrank_test(t, e, g);
  CHECK(r.statistic == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(r.p_value == doctest::Approx(1.0));

  std::vector<double> ps;
  for (std::uint64_t seed = 100; seed < 1100; ++seed) {
    const auto d = simulate_survival(seed, 100, 1.0);
    std::vector<std::string> grp;
    for (double x : d.x) grp.push_back(x > 0 ? "B" : "A");
    ps.push_back(logrank_test(d.time, d.event, grp).p_value);
  }
  std::sort(ps.begin(), ps.end());
  double ks = 0;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const double n = static_cast<double>(ps.size());
    ks = std::max({ks, std::abs(ps[i] - i / n), std::abs(ps[i] - (i + 1) / n)});
  }
  CHECK(ks < 1.63 / std::sqrt(static_cast<double>(ps.size())));
}

TEST_CASE("cox: one covariate matches a golden-section maximizer") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> g(0, 1);
  std::uniform_int_distribution<int> t(1, 8);
  std::bernoulli_distribution e(0.7);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> x, time;
    std::vector<bool> event;
    for (int i = 0; i < 20; ++i) {
      x.push_back(g(rng));
      time.push_back(t(rng));
      event.push_back(e(rng));
    }
    const Eigen::MatrixXd xm = Eigen::Map<Eigen::VectorXd>(x.data(), 20);
    const auto fit = cox_fit(xm, time, event, {"x"});
    const double best = oracle::golden_section_max(
        [&](double b) { return oracle::breslow_loglik(x, time, event, b); }, -10, 10);
    CHECK(std::abs(fit.coefficients[0].estimate - best) < 1e-3);
    CHECK(fit.log_likelihood == doctest::Approx(oracle::breslow_loglik(x, time, event, best)));
    Eigen::VectorXd b(1);
    b << 0.3;
    CHECK(cox_partial_loglik(xm, time, event, b) == doctest::Approx(oracle::breslow_loglik(x, time, event, 0.3)));
  }
}

TEST_CASE("cox: invariances and hazard ratio recovery") {
  const auto s = simulate_survival(41, 2000, 2.0);
  const Eigen::MatrixXd x = Eigen::Map<const Eigen::VectorXd>(s.x.data(), 2000);
  const auto fit = cox_fit(x, s.time, s.event, {"x"});
  CHECK(fit.converged);
  CHECK(fit.coefficients[0].ratio >= 1.7);
  CHECK(fit.coefficients[0].ratio <= 2.4);
  CHECK(fit.coefficients[0].ci_low < fit.coefficients[0].ratio);
  CHECK(fit.lr_statistic > 0);

  std::vector<double> scaled = s.time;
  for (auto& t : scaled) t *= 3;
  CHECK(cox_fit(x, scaled, s.event, {"x"}).coefficients[0].estimate ==
        doctest::Approx(fit.coefficients[0].estimate).epsilon(1e-9));
  const Eigen::MatrixXd shifted = x.array() + 5.0;
  CHECK(cox_fit(shifted, s.time, s.event, {"x"}).coefficients[0].estimate ==
        doctest::Approx(fit.coefficients[0].estimate).epsilon(1e-9));

  std::vector<std::size_t> perm(2000);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(2));
  std::vector<double> pt;
  std::vector<bool> pe;
  Eigen::MatrixXd px(2000, 1);
  for (std::size_t i = 0; i < 2000; ++i) {
    pt.push_back(s.time[perm[i]]);
    pe.push_back(s.event[perm[i]]);
    px(static_cast<Eigen::Index>(i), 0) = s.x[perm[i]];
  }
  CHECK(cox_fit(px, pt, pe, {"x"}).coefficients[0].estimate ==
        doctest::Approx(fit.coefficients[0].estimate).epsilon(1e-9));
}

TEST_CASE("cox: rank deficiency names columns; no events rejected") {
  const auto s = simulate_survival(3, 50, 1.5);
  Eigen::MatrixXd x(50, 3);
  for (Eigen::Index i = 0; i < 50; ++i) x.row(i) << s.x[static_cast<std::size_t>(i)], 1.0, 2 * s.x[static_cast<std::size_t>(i)];
  try {
    cox_fit(x, s.time, s.event, {"a", "const", "twice"});
    FAIL("expected rank error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kRankDeficient);
    CHECK(std::string(e.what()).find("const") != std::string::npos);
  }
  CHECK_THROWS_AS(cox_fit(x.leftCols(1), s.time, std::vector<bool>(50, false), {"a"}), Error);
}

TEST_CASE("cox: a level without events is reported as separation") {
  auto s = simulate_survival(8, 200, 1.0);
  Eigen::MatrixXd x(200, 2);
  for (Eigen::Index i = 0; i < 200; ++i) {
    const bool rare = i % 25 == 0;
    if (rare) s.event[static_cast<std::size_t>(i)] = false;
    x.row(i) << s.x[static_cast<std::size_t>(i)], rare ? 1.0 : 0.0;
  }
  try {
    cox_fit(x, s.time, s.event, {"x", "rare"});
    FAIL("expected separation");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kSeparation);
    CHECK(e.context().at("columns") == "rare");
  }
}

TEST_CASE("negative binomial: intercept-only fit reproduces the mean") {
  std::vector<double> y;
  for (int i = 0; i < 100; ++i) y.push_back(i < 29 ? (i % 2 ? 5 : 4) : (i % 3));
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / 100.0;
  const auto fit = nb_fit(Eigen::MatrixXd(100, 0), y, {});
  CHECK(fit.coefficients.size() == 1);
  CHECK(fit.coefficients[0].ratio == doctest::Approx(mean).epsilon(1e-6));
  CHECK(fit.aic == doctest::Approx(2 * 2 - 2 * fit.log_likelihood));
}

TEST_CASE("negative binomial: recovers simulated coefficients and dispersion") {
  std::mt19937_64 rng(51);
  std::normal_distribution<double> g(0, 1);
  const std::size_t n = 3000;
  Eigen::MatrixXd x(n, 1);
  std::vector<double> y;
  for (std::size_t i = 0; i < n; ++i) {
    x(static_cast<Eigen::Index>(i), 0) = g(rng) * 0.5;
    y.push_back(nb_draw(rng, std::exp(0.5 - 1.0 * x(static_cast<Eigen::Index>(i), 0)), 2.0));
  }
  const auto fit = nb_fit(x, y, {"x"});
  CHECK(fit.converged);
  CHECK(std::abs(fit.coefficients[0].estimate - 0.5) < 0.1);
  CHECK(std::abs(fit.coefficients[1].estimate + 1.0) < 0.1);
  CHECK(std::abs(fit.theta - 2.0) < 0.5);
}

TEST_CASE("negative binomial: Poisson data and exposure offsets") {
  std::mt19937_64 rng(52);
  std::normal_distribution<double> g(0, 1);
  std::uniform_real_distribution<double> u(0.5, 3.0);
  const std::size_t n = 3000;
  Eigen::MatrixXd x(n, 1), xi(n, 2);
  std::vector<double> y, exposure;
  Eigen::VectorXd yv(n), off(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    x(r, 0) = g(rng) * 0.5;
    exposure.push_back(u(rng));
    std::poisson_distribution<int> p(exposure.back() * std::exp(0.2 + 0.7 * x(r, 0)));
    y.push_back(p(rng));
    yv(r) = y.back();
    off(r) = std::log(exposure.back());
    xi.row(r) << 1.0, x(r, 0);
  }
  const auto fit = nb_fit(x, y, {"x"}, &exposure);
  CHECK(fit.theta > 100);
  const auto beta = oracle::poisson_newton(xi, yv, off);
  CHECK(std::abs(fit.coefficients[1].ratio / std::exp(beta(1)) - 1) < 0.02);
  CHECK(std::abs(fit.coefficients[0].ratio / std::exp(beta(0)) - 1) < 0.02);
}

TEST_CASE("negative binomial: invalid counts") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(3, 0);
  CHECK_THROWS_AS(nb_fit(x, {0, 0, 0}, {}), Error);
  CHECK_THROWS_AS(nb_fit(x, {1, -1, 2}, {}), Error);
  CHECK_THROWS_AS(nb_fit(x, {1, 1.5, 2}, {}), Error);
}

TEST_CASE("other-system cutoff: reference kept, ties to the smallest cutoff") {
  std::mt19937_64 rng(61);
  std::vector<std::string> sys;
  for (int i = 0; i < 50; ++i) sys.push_back("A");
  for (int i = 0; i < 20; ++i) sys.push_back("B");
  for (int i = 0; i < 3; ++i) sys.push_back("C");
  for (int i = 0; i < 2; ++i) sys.push_back("D");
  CutoffContext ctx;
  for (std::size_t i = 0; i < sys.size(); ++i) ctx.counts.push_back(nb_draw(rng, 2.0, 3.0));

  std::string ref;
  std::vector<std::string> collapsed;
  const auto labels = collapse_systems(sys, 5, &ref, &collapsed);
  CHECK(ref == "A");
  CHECK(collapsed == std::vector<std::string>{"C", "D"});
  CHECK(std::count(labels.begin(), labels.end(), std::string(kOtherSystem)) == 5);
  CHECK(collapse_systems(sys, 1000).front() == "A");

  const auto r = choose_other_cutoff(sys, {5, 4}, ctx);
  CHECK(r.cutoff == 4);
  CHECK(r.aic.size() == 2);
  CHECK(r.aic[0].second == r.aic[1].second);
  CHECK(r.reference == "A");
  CHECK_THROWS_AS(choose_other_cutoff(sys, {}, ctx), Error);
}

TEST_CASE("welch t-test: hand values and null rejection rate") {
  const auto r = ttest_welch({1, 2, 3}, {2, 3, 4});
  CHECK(r.t == doctest::Approx(-1.2247448714));
  CHECK(r.df == doctest::Approx(4.0));
  CHECK(r.p_value == doctest::Approx(0.2878641347).epsilon(1e-6));
  CHECK_THROWS_AS(ttest_welch({1}, {2, 3}), Error);

  std::mt19937_64 rng(71);
  std::normal_distribution<double> a(0, 1), b(0, 3);
  int reject = 0;
  const int reps = 4000;
  for (int k = 0; k < reps; ++k) {
    std::vector<double> xa, xb;
    for (int i = 0; i < 12; ++i) xa.push_back(a(rng));
    for (int i = 0; i < 20; ++i) xb.push_back(b(rng));
    reject += ttest_welch(xa, xb).p_value < 0.05;
  }
  const double rate = static_cast<double>(reject) / reps;
  CHECK(rate > 0.04);
  CHECK(rate < 0.06);
}

TEST_CASE("distribution tails") {
  CHECK(normal_two_sided_p(1.959963985) == doctest::Approx(0.05).epsilon(1e-7));
  CHECK(chi_squared_upper(3.841458821, 1) == doctest::Approx(0.05).epsilon(1e-7));
  CHECK(chi_squared_upper(0, 2) == 1.0);
}

TEST_CASE("patient and event files round trip") {
  testing::TempDir dir("out");
  auto p = patient("A", {{"ICD9", "81.51", ymd(2005, 1, 1)}}, ymd(2007, 1, 1), {"X", "Y"});
  p.bmi.emplace_back(ymd(2005, 1, 1), 31.5);
  write_patient_records({p}, dir / "p.csv", dir / "c.csv");
  const auto back = load_patient_records(dir / "p.csv", dir / "c.csv");
  REQUIRE(back.size() == 1);
  CHECK(back[0].implant_systems == p.implant_systems);
  CHECK(back[0].codes.size() == 1);
  CHECK(back[0].bmi.size() == 1);
  CHECK(back[0].last_contact_date == p.last_contact_date);

  const std::vector<Event> es{ev("A", EventClass::kInfection, ymd(2006, 1, 1), EventSource::kBoth, "x|y")};
  write_events_csv(es, dir / "e.csv");
  CHECK(read_events_csv(dir / "e.csv") == es);

  testing::write_file(dir / "c2.csv", "patient_id,code_system,code,date\nNOBODY,ICD9,81.51,2005-01-01\n");
  CHECK_THROWS_AS(load_patient_records(dir / "p.csv", dir / "c2.csv"), Error);
}
