#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "devsurv/outcomes.hpp"

namespace devsurv::outcomes {

std::string age_band(std::optional<Date> birth, Date at) {
  if (!birth) return "Unknown";
  using namespace std::chrono;
  const year_month_day b{*birth}, a{at};
  int age = static_cast<int>(a.year()) - static_cast<int>(b.year());
  if (std::pair(unsigned(a.month()), unsigned(a.day())) < std::pair(unsigned(b.month()), unsigned(b.day())))
    --age;
  if (age < 40) return "<40";
  if (age >= 80) return "80+";
  const int lo = age / 10 * 10;
  return std::to_string(lo) + "-" + std::to_string(lo + 9);
}

std::vector<double> SurvivalDataset::times() const {
  std::vector<double> t;
  t.reserve(subjects.size());
  for (const auto& s : subjects) t.push_back(s.time);
  return t;
}

std::vector<bool> SurvivalDataset::events() const {
  std::vector<bool> e;
  e.reserve(subjects.size());
  for (const auto& s : subjects) e.push_back(s.event);
  return e;
}

std::vector<std::string> SurvivalDataset::levels(const std::string& factor) const {
  std::vector<std::string> out;
  out.reserve(subjects.size());
  for (const auto& s : subjects) {
    auto it = s.factors.find(factor);
    out.push_back(it == s.factors.end() ? std::string() : it->second);
  }
  return out;
}

void encode_factors(SurvivalDataset& ds, const std::vector<std::string>& factors) {
  ds.column_names.clear();
  std::vector<std::pair<std::string, std::string>> columns;
  for (const auto& f : factors) {
    std::map<std::string, std::size_t> counts;
    for (const auto& lv : ds.levels(f)) ++counts[lv];
    if (counts.empty()) continue;
    auto ref = ds.reference_levels.find(f);
    if (ref == ds.reference_levels.end() || !counts.count(ref->second)) {
      auto best = counts.begin();
      for (auto it = counts.begin(); it != counts.end(); ++it)
        if (it->second > best->second) best = it;
      ds.reference_levels[f] = best->first;
    }
    for (const auto& [lv, n] : counts)
      if (lv != ds.reference_levels[f]) columns.emplace_back(f, lv);
  }
  ds.x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ds.subjects.size()),
                               static_cast<Eigen::Index>(columns.size()));
  for (std::size_t c = 0; c < columns.size(); ++c) {
    ds.column_names.push_back(columns[c].first + "=" + columns[c].second);
    for (std::size_t i = 0; i < ds.subjects.size(); ++i) {
      auto it = ds.subjects[i].factors.find(columns[c].first);
      if (it != ds.subjects[i].factors.end() && it->second == columns[c].second)
        ds.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = 1.0;
    }
  }
}

SurvivalDataset build_survival_dataset(const std::vector<PatientRecord>& records,
                                       const Cohort& cohort, const std::vector<Event>& events,
                                       std::string_view outcome, const CovariateSpec& spec) {
  std::set<EventClass> classes;
  const auto o = to_lower(trim(outcome));
  if (o == "any_complication" || o == "any complication" || o == "any") {
    classes.insert(complication_classes().begin(), complication_classes().end());
  } else if (auto c = parse_event_class(o)) {
    classes.insert(*c);
  } else {
    throw Error(ErrorCode::kInvalidArgument, "unknown outcome class: " + std::string(outcome),
                {{"outcome", std::string(outcome)}});
  }

  std::map<std::string, const PatientRecord*> by_id;
  for (const auto& r : records) by_id[r.patient_id] = &r;
  std::map<std::string, Date> index_of;
  for (const auto& m : cohort.members) index_of[m.patient_id] = m.index_date;
  std::map<std::string, Date> first_event;
  std::map<std::string, Date> last_seen;
  for (const auto& e : events) {
    auto& ls = last_seen.try_emplace(e.patient_id, e.date).first->second;
    ls = std::max(ls, e.date);
    auto idx = index_of.find(e.patient_id);
    if (!classes.count(e.event_class) || idx == index_of.end() || e.date < idx->second) continue;
    auto [it, inserted] = first_event.try_emplace(e.patient_id, e.date);
    if (!inserted) it->second = std::min(it->second, e.date);
  }

  SurvivalDataset ds;
  for (const auto& m : cohort.members) {
    auto rit = by_id.find(m.patient_id);
    if (rit == by_id.end())
      throw Error(ErrorCode::kMismatch, "cohort patient without record: " + m.patient_id,
                  {{"patient_id", m.patient_id}});
    const auto& rec = *rit->second;
    if (spec.implant_system && spec.single_implant_only && rec.implant_systems.size() != 1) {
      ++ds.excluded_implant;
      continue;
    }
    SurvivalSubject s;
    s.patient_id = m.patient_id;
    auto fe = first_event.find(m.patient_id);
    // Pre-index mentions describe the indication, not an outcome. An event on
    // the index day gives time 0 and excludes the subject.
    if (fe != first_event.end()) {
      s.event = true;
      s.time = static_cast<double>(days_between(m.index_date, fe->second));
    } else {
      std::optional<Date> end = rec.last_contact_date;
      if (!end) {
        for (const auto& c : rec.codes)
          if (!end || c.date > *end) end = c.date;
        auto ls = last_seen.find(m.patient_id);
        if (ls != last_seen.end() && (!end || ls->second > *end)) end = ls->second;
      }
      s.time = end ? static_cast<double>(days_between(m.index_date, *end)) : 0.0;
    }
    if (s.time <= 0.0) {
      ++ds.excluded_nonpositive;
      continue;
    }
    auto level = [](const std::string& v) { return trim(v).empty() ? std::string("Unknown") : std::string(trim(v)); };
    if (spec.implant_system)
      s.factors["system"] = rec.implant_systems.empty() ? "Unknown" : join(rec.implant_systems, "+");
    if (spec.age) s.factors["age"] = age_band(rec.birth_date, m.index_date);
    if (spec.sex) s.factors["sex"] = level(rec.sex);
    if (spec.race) s.factors["race"] = level(rec.race);
    if (spec.ethnicity) s.factors["ethnicity"] = level(rec.ethnicity);
    if (spec.cci) s.factors["cci"] = std::string(to_string(categorize_cci(rec.cci)));
    ds.subjects.push_back(std::move(s));
  }

  std::vector<std::string> factors;
  if (spec.implant_system) {
    factors.push_back("system");
    if (!spec.reference_system.empty()) ds.reference_levels["system"] = spec.reference_system;
  }
  if (spec.age) {
    factors.push_back("age");
    ds.reference_levels["age"] = "40-49";
  }
  if (spec.sex) factors.push_back("sex");
  if (spec.race) factors.push_back("race");
  if (spec.ethnicity) factors.push_back("ethnicity");
  if (spec.cci) {
    factors.push_back("cci");
    ds.reference_levels["cci"] = "none";
  }
  encode_factors(ds, factors);
  return ds;
}

double KMCurve::at(double t) const {
  auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 1.0;
  return survival[static_cast<std::size_t>(it - times.begin()) - 1];
}

namespace {

KMCurve product_limit(std::vector<std::pair<double, bool>> obs, std::string group) {
  std::sort(obs.begin(), obs.end());
  KMCurve c;
  c.group = std::move(group);
  double s = 1.0;
  std::size_t at_risk = obs.size();
  for (std::size_t i = 0; i < obs.size();) {
    const double t = obs[i].first;
    std::size_t d = 0, n = 0;
    for (; i < obs.size() && obs[i].first == t; ++i, ++n) d += obs[i].second;
    if (d > 0) {
      s *= 1.0 - static_cast<double>(d) / static_cast<double>(at_risk);
      c.times.push_back(t);
      c.survival.push_back(s);
      c.at_risk.push_back(at_risk);
      c.events.push_back(d);
    }
    at_risk -= n;
  }
  return c;
}

void check_lengths(const std::vector<double>& time, const std::vector<bool>& event) {
  if (time.size() != event.size())
    throw Error(ErrorCode::kInvalidArgument, "time and event vectors differ in length");
  for (double t : time)
    if (!(t > 0.0) || !std::isfinite(t))
      throw Error(ErrorCode::kInvalidArgument, "survival times must be positive and finite");
}

}  // namespace

std::vector<KMCurve> km_estimate(const std::vector<double>& time, const std::vector<bool>& event,
                                 const std::vector<std::string>* group) {
  check_lengths(time, event);
  if (group && group->size() != time.size())
    throw Error(ErrorCode::kInvalidArgument, "group vector differs in length");
  std::map<std::string, std::vector<std::pair<double, bool>>> parts;
  for (std::size_t i = 0; i < time.size(); ++i)
    parts[group ? (*group)[i] : std::string("all")].emplace_back(time[i], event[i]);
  std::vector<KMCurve> out;
  for (auto& [g, obs] : parts) out.push_back(product_limit(std::move(obs), g));
  return out;
}

LogRankResult logrank_test(const std::vector<double>& time, const std::vector<bool>& event,
                           const std::vector<std::string>& group) {
  check_lengths(time, event);
  if (group.size() != time.size())
    throw Error(ErrorCode::kInvalidArgument, "group vector differs in length");
  LogRankResult r;
  {
    std::set<std::string> g(group.begin(), group.end());
    r.groups.assign(g.begin(), g.end());
  }
  const std::size_t k = r.groups.size();
  if (k < 2)
    throw Error(ErrorCode::kInvalidArgument, "log-rank test needs at least two groups",
                {{"groups", std::to_string(k)}});
  if (std::find(event.begin(), event.end(), true) == event.end())
    throw Error(ErrorCode::kInvalidArgument, "log-rank test needs at least one event");

  std::vector<std::size_t> gi(time.size());
  for (std::size_t i = 0; i < time.size(); ++i)
    gi[i] = static_cast<std::size_t>(std::lower_bound(r.groups.begin(), r.groups.end(), group[i]) -
                                     r.groups.begin());
  std::vector<std::size_t> order(time.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return time[a] < time[b]; });

  std::vector<double> at_risk(k, 0.0);
  for (auto g : gi) at_risk[g] += 1.0;
  double n_total = static_cast<double>(time.size());
  r.observed.assign(k, 0.0);
  r.expected.assign(k, 0.0);
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));

  for (std::size_t p = 0; p < order.size();) {
    const double t = time[order[p]];
    std::vector<double> d(k, 0.0), leaving(k, 0.0);
    double d_total = 0.0;
    std::size_t q = p;
    for (; q < order.size() && time[order[q]] == t; ++q) {
      const auto g = gi[order[q]];
      leaving[g] += 1.0;
      if (event[order[q]]) {
        d[g] += 1.0;
        d_total += 1.0;
      }
    }
    if (d_total > 0.0) {
      const double tie = n_total > 1.0 ? (n_total - d_total) / (n_total - 1.0) : 0.0;
      for (std::size_t a = 0; a < k; ++a) {
        const double ea = d_total * at_risk[a] / n_total;
        r.observed[a] += d[a];
        r.expected[a] += ea;
        for (std::size_t b = 0; b < k; ++b) {
          const double delta = a == b ? 1.0 : 0.0;
          v(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) +=
              d_total * (at_risk[a] / n_total) * (delta - at_risk[b] / n_total) * tie;
        }
      }
    }
    for (std::size_t a = 0; a < k; ++a) at_risk[a] -= leaving[a];
    n_total -= static_cast<double>(q - p);
    p = q;
  }

  const auto m = static_cast<Eigen::Index>(k - 1);
  Eigen::VectorXd u(m);
  for (Eigen::Index a = 0; a < m; ++a)
    u(a) = r.observed[static_cast<std::size_t>(a)] - r.expected[static_cast<std::size_t>(a)];
  const Eigen::MatrixXd vm = v.topLeftCorner(m, m);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(vm);
  r.df = static_cast<int>(k - 1);
  if (u.cwiseAbs().maxCoeff() < 1e-12) {
    r.statistic = 0.0;
  } else if (lu.rank() < m) {
    // Groups without any subject at risk during events carry no information.
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(vm);
    r.statistic = u.dot(cod.pseudoInverse() * u);
    r.df = static_cast<int>(cod.rank());
  } else {
    r.statistic = u.dot(lu.solve(u));
  }
  r.statistic = std::max(0.0, r.statistic);
  r.p_value = r.df > 0 ? chi_squared_upper(r.statistic, r.df) : 1.0;
  return r;
}

std::vector<ForestRow> forest_table(const SurvivalDataset& ds, const CoxFit& fit,
                                    const std::string& factor) {
  std::map<std::string, ForestRow> rows;
  for (const auto& s : ds.subjects) {
    auto it = s.factors.find(factor);
    if (it == s.factors.end()) continue;
    auto& r = rows[it->second];
    r.system = it->second;
    ++r.n_patients;
    r.n_events += s.event;
    r.person_years += s.time / 365.25;
  }
  for (const auto& c : fit.coefficients) {
    const auto prefix = factor + "=";
    if (c.name.rfind(prefix, 0) != 0) continue;
    auto it = rows.find(c.name.substr(prefix.size()));
    if (it != rows.end()) it->second.hr = c;
  }
  std::vector<ForestRow> out;
  for (auto& [k, r] : rows) out.push_back(std::move(r));
  return out;
}

}  // namespace devsurv::outcomes
