#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "devsurv/common.hpp"

namespace devsurv::outcomes {

// ---------------------------------------------------------------------------
// Patient records and cohort selection

struct CodedEntry {
  std::string system;  // "ICD9", "CPT", ...
  std::string code;
  Date date{};
};

struct PatientRecord {
  std::string patient_id;
  std::optional<Date> birth_date;
  std::string sex;
  std::string race;
  std::string ethnicity;
  int cci = 0;
  std::optional<Date> last_contact_date;
  std::vector<CodedEntry> codes;
  std::vector<std::pair<Date, double>> bmi;
  /// Implanted system label(s); more than one marks a multi-implant patient.
  std::vector<std::string> implant_systems;
};

/// patients.csv: patient_id, birth_date, sex, race, ethnicity, cci,
/// last_contact_date, and optionally implant_system (';'-joined) and bmi.
/// codes.csv: patient_id, code_system, code, date.
std::vector<PatientRecord> load_patient_records(const std::filesystem::path& patients_csv,
                                                const std::filesystem::path& codes_csv);
void write_patient_records(const std::vector<PatientRecord>& records,
                           const std::filesystem::path& patients_csv,
                           const std::filesystem::path& codes_csv);

/// Codes are written "SYSTEM:CODE"; the system compares case-insensitively.
struct CodeConfig {
  std::vector<std::string> primary{"ICD9:81.51", "CPT:27130", "CPT:27132"};
  std::vector<std::string> revision{"ICD9:81.53", "ICD9:00.70", "ICD9:00.71", "ICD9:00.72",
                                    "ICD9:00.73", "CPT:27134", "CPT:27137", "CPT:27138"};
};

enum class EventClass {
  kRevision,
  kComponentWear,
  kMechanicalFailure,
  kParticleDisease,
  kRadiographicAbnormality,
  kInfection,
  kPain,
};
std::string_view to_string(EventClass c);
std::optional<EventClass> parse_event_class(std::string_view s);
/// The six complication classes (every class except pain) that make up "any complication".
const std::vector<EventClass>& complication_classes();

enum class EventSource { kCoded, kText, kBoth };
std::string_view to_string(EventSource s);
std::optional<EventSource> parse_event_source(std::string_view s);

struct Event {
  std::string patient_id;
  EventClass event_class = EventClass::kRevision;
  Date date{};
  EventSource source = EventSource::kCoded;
  std::string provenance;  // code or candidate_id(s)

  friend bool operator==(const Event&, const Event&) = default;
};

struct CohortMember {
  std::string patient_id;
  Date index_date{};
};

struct Cohort {
  std::vector<CohortMember> members;    // sorted by patient_id
  std::vector<Event> coded_revisions;   // revision codes dated after the index
};

/// Throws Error(kInvalidConfig) when either code list is empty.
Cohort select_cohort(const std::vector<PatientRecord>& records, const CodeConfig& codes = {});

enum class CciCategory { kNone, kLow, kModerate, kHigh };
std::string_view to_string(CciCategory c);
/// Throws Error(kInvalidArgument) for negative input.
CciCategory categorize_cci(int cci);

std::vector<Event> read_events_csv(const std::filesystem::path& path);
void write_events_csv(const std::vector<Event>& events, const std::filesystem::path& path);

struct MergeResult {
  std::vector<Event> events;     // sorted by patient, class, date
  std::size_t matched = 0;       // coded/text pairs merged into one
  std::size_t duplicates = 0;    // within-source duplicates dropped
};

/// Within-source duplicates (patient, class, date) collapse first. Coded and
/// text events of one class and patient then pair up when their dates are
/// within the window, keeping the earlier date with source "both".
MergeResult merge_events(const std::vector<Event>& coded, const std::vector<Event>& text,
                         int window_days = 90);

// ---------------------------------------------------------------------------
// Survival data

struct CovariateSpec {
  bool implant_system = true;
  bool age = true;
  bool sex = true;
  bool race = true;
  bool ethnicity = true;
  bool cci = true;
  /// Empty: the most frequent system is the reference level.
  std::string reference_system;
  /// Drop patients without exactly one implant system when systems are used.
  bool single_implant_only = true;
};

std::string age_band(std::optional<Date> birth, Date at);

struct SurvivalSubject {
  std::string patient_id;
  double time = 0.0;  // days
  bool event = false;
  std::map<std::string, std::string> factors;  // factor -> level
};

struct SurvivalDataset {
  std::vector<SurvivalSubject> subjects;
  std::vector<std::string> column_names;  // "factor=level", reference levels omitted
  Eigen::MatrixXd x;
  std::map<std::string, std::string> reference_levels;
  std::size_t excluded_nonpositive = 0;
  std::size_t excluded_implant = 0;

  std::vector<double> times() const;
  std::vector<bool> events() const;
  /// Level of a factor per subject ("" when absent).
  std::vector<std::string> levels(const std::string& factor) const;
};

/// outcome "any_complication" matches the six complication classes.
SurvivalDataset build_survival_dataset(const std::vector<PatientRecord>& records,
                                       const Cohort& cohort, const std::vector<Event>& events,
                                       std::string_view outcome, const CovariateSpec& spec = {});

/// Design matrix for categorical factors; reference levels are left out.
void encode_factors(SurvivalDataset& ds, const std::vector<std::string>& factors);

// ---------------------------------------------------------------------------
// Kaplan-Meier and log-rank

struct KMCurve {
  std::string group;
  std::vector<double> times;  // distinct event times
  std::vector<double> survival;
  std::vector<std::size_t> at_risk;
  std::vector<std::size_t> events;

  /// Right-continuous step function; 1 before the first event.
  double at(double t) const;
};

std::vector<KMCurve> km_estimate(const std::vector<double>& time, const std::vector<bool>& event,
                                 const std::vector<std::string>* group = nullptr);

struct LogRankResult {
  std::vector<std::string> groups;
  std::vector<double> observed;
  std::vector<double> expected;
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
};

/// Throws Error(kInvalidArgument) with fewer than two groups or no events.
LogRankResult logrank_test(const std::vector<double>& time, const std::vector<bool>& event,
                           const std::vector<std::string>& group);

// ---------------------------------------------------------------------------
// Cox proportional hazards

struct CoxOptions {
  int max_iterations = 50;
  double tolerance = 1e-8;
  /// |beta| * sd(x) above this is reported as monotone likelihood.
  double separation_bound = 12.0;
  /// se * sd(x) above this is reported as monotone likelihood too.
  double flat_se_bound = 100.0;
};

struct Coefficient {
  std::string name;
  double estimate = 0.0;
  double se = 0.0;
  double ratio = 1.0;  // exp(estimate): HR for Cox, IRR for NB
  double ci_low = 0.0;
  double ci_high = 0.0;
  double z = 0.0;
  double p_value = 1.0;
};

struct CoxFit {
  std::vector<Coefficient> coefficients;
  double log_likelihood = 0.0;
  double null_log_likelihood = 0.0;
  double score_statistic = 0.0;
  double score_p = 1.0;
  double lr_statistic = 0.0;
  double lr_p = 1.0;
  int df = 0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> log_likelihood_trace;
  std::optional<LogRankResult> logrank;
};

/// Breslow partial log-likelihood at beta.
double cox_partial_loglik(const Eigen::MatrixXd& x, const std::vector<double>& time,
                          const std::vector<bool>& event, const Eigen::VectorXd& beta);

/// Newton-Raphson with step halving. Errors: kInvalidArgument (no events),
/// kRankDeficient (names the offending columns), kNonConvergence (with the
/// log-likelihood trace), kSeparation.
CoxFit cox_fit(const Eigen::MatrixXd& x, const std::vector<double>& time,
               const std::vector<bool>& event, const std::vector<std::string>& names,
               const CoxOptions& options = {});
/// Also runs the log-rank test over `group_factor` when it has two or more levels.
CoxFit cox_fit(const SurvivalDataset& ds, const std::string& group_factor = "system",
               const CoxOptions& options = {});

/// Throws Error(kRankDeficient) naming constant and collinear columns. With
/// `center`, columns are tested after removing their means (an intercept or a
/// location-invariant likelihood absorbs them).
void check_full_rank(const Eigen::MatrixXd& x, const std::vector<std::string>& names,
                     bool center = true);

// ---------------------------------------------------------------------------
// Negative binomial regression

struct NBOptions {
  int max_iterations = 200;
  double tolerance = 1e-8;
  double theta_max = 1e6;
};

struct NBFit {
  std::vector<Coefficient> coefficients;  // "(Intercept)" first
  double theta = 0.0;
  double log_likelihood = 0.0;
  double aic = 0.0;
  int iterations = 0;
  bool converged = false;
  bool theta_at_bound = false;
};

/// NB2 log-link regression with an intercept. `exposure` (positive) enters as
/// a log offset. Errors: kInvalidArgument (bad counts, all zero),
/// kRankDeficient, kNonConvergence.
NBFit nb_fit(const Eigen::MatrixXd& x, const std::vector<double>& counts,
             const std::vector<std::string>& names, const std::vector<double>* exposure = nullptr,
             const NBOptions& options = {});

/// NB2 log-likelihood for given means and dispersion.
double nb_log_likelihood(const std::vector<double>& counts, const std::vector<double>& mu,
                         double theta);

inline constexpr std::string_view kOtherSystem = "Other system";

struct CutoffContext {
  std::vector<double> counts;
  Eigen::MatrixXd covariates;  // other covariates, rows aligned with systems
  std::vector<std::string> covariate_names;
  std::vector<double> exposure;  // empty: none
  NBOptions options;
};

struct CutoffResult {
  int cutoff = 0;
  std::vector<std::pair<int, double>> aic;  // per fitted candidate
  std::vector<std::string> warnings;        // skipped candidates
  std::vector<std::string> collapsed;       // systems folded into "Other system"
  std::string reference;
  NBFit fit;
};

/// Collapses systems with fewer than `cutoff` subjects into "Other system"
/// (the most frequent system is the reference and never collapses), refits,
/// and returns the AIC minimizer; ties go to the smallest cutoff.
CutoffResult choose_other_cutoff(const std::vector<std::string>& system_of_subject,
                                 const std::vector<int>& candidate_cutoffs,
                                 const CutoffContext& context);

/// System labels after collapsing, plus the one-hot design (reference omitted).
std::vector<std::string> collapse_systems(const std::vector<std::string>& system_of_subject,
                                          int cutoff, std::string* reference = nullptr,
                                          std::vector<std::string>* collapsed = nullptr);

// ---------------------------------------------------------------------------
// Two-sample test

struct TTestResult {
  double mean_a = 0.0;
  double mean_b = 0.0;
  double t = 0.0;
  double df = 0.0;
  double p_value = 1.0;
};

/// Welch's unequal-variance t-test, two-sided.
TTestResult ttest_welch(const std::vector<double>& a, const std::vector<double>& b);

// ---------------------------------------------------------------------------
// Distribution tails shared by the fits

double normal_two_sided_p(double z);
double chi_squared_upper(double x, double df);

// ---------------------------------------------------------------------------
// Forest table

struct ForestRow {
  std::string system;
  std::size_t n_patients = 0;
  std::size_t n_events = 0;
  double person_years = 0.0;
  std::optional<Coefficient> hr;  // empty for the reference level
};

std::vector<ForestRow> forest_table(const SurvivalDataset& ds, const CoxFit& fit,
                                    const std::string& factor = "system");
void write_forest_csv(const std::vector<ForestRow>& rows, const std::filesystem::path& path);

}  // namespace devsurv::outcomes
