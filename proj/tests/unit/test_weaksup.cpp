#include <doctest.h>

#include <cmath>

#include "devsurv/pipeline.hpp"
#include "devsurv/synth.hpp"
#include "support.hpp"

using namespace devsurv;
using namespace devsurv::weaksup;
using devsurv::testing::TempDir;

namespace {

constexpr Vote T = Vote::kTrue, F = Vote::kFalse, A = Vote::kAbstain;

LabelMatrix matrix(const std::vector<std::vector<Vote>>& rows) {
  std::vector<std::string> ids, lfs;
  for (std::size_t i = 0; i < rows.size(); ++i) ids.push_back("c" + std::to_string(i));
  for (std::size_t j = 0; j < rows.at(0).size(); ++j) lfs.push_back("lf" + std::to_string(j));
  LabelMatrix m(ids, lfs);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m.set(i, j, rows[i][j]);
  return m;
}

LabelModel model(std::vector<double> alpha, std::vector<double> beta, double pi = 0.5) {
  LabelModel lm;
  for (std::size_t j = 0; j < alpha.size(); ++j) lm.lf_ids.push_back("lf" + std::to_string(j));
  lm.alpha = std::move(alpha);
  lm.beta = std::move(beta);
  lm.pi = pi;
  return lm;
}

const pipeline::Resources& resources() {
  static const auto res = pipeline::Resources::load(pipeline::ResourcePaths::under(testing::data_dir()));
  return res;
}

std::vector<RelationCandidate> figure2_candidates() {
  return pipeline::candidates_for({pipeline::annotate_note(testing::figure2_note(), resources())},
                                  RelationType::kImplantComplication);
}

std::string votes(const LabelMatrix& m, std::size_t i) {
  std::string s;
  for (std::size_t j = 0; j < m.m(); ++j) s += vote_symbol(m.at(i, j));
  return s;
}

}  // namespace

TEST_CASE("primitives on the figure note") {
  const auto c = figure2_candidates();
  REQUIRE(c.size() >= 2);
  CHECK(c[0].arg1.surface == "infected");
  CHECK(between_words(c[0]).empty());
  CHECK(token_distance(c[1]) > 0);
  CHECK(get_section_header(c.back()) == "PAST MEDICAL HISTORY");
  CHECK(has_historical_attrib(c.back()));
  CHECK(contains_phrase(between_words(c.back()), "complicated by"));
  CHECK_FALSE(contains_phrase({"complicated"}, "complicated by"));
}

TEST_CASE("starter LFs reproduce the figure votes") {
  const auto cands = figure2_candidates();
  auto lfs = starter_lfs(RelationType::kImplantComplication);
  lfs.resize(3);
  const auto m = apply_lfs(cands, lfs);
  std::map<std::string, std::string> first_by_event;
  for (std::size_t i = 0; i < cands.size(); ++i) first_by_event.try_emplace(cands[i].arg1.surface, votes(m, i));
  CHECK(first_by_event.at("infected") == "1--");
  CHECK(first_by_event.at("infection") == "-00");
  CHECK(first_by_event.at("polyethylene wear") == "1--");
}

TEST_CASE("apply_lfs: zero candidates, LF errors, relation mismatch") {
  const auto lfs = starter_lfs(RelationType::kPainAnatomy);
  const auto empty = apply_lfs({}, lfs);
  CHECK(empty.n() == 0);
  CHECK(empty.m() == lfs.size());

  const auto cands = figure2_candidates();
  LabelingFunction bad{"boom", std::nullopt, [](const RelationCandidate&) -> Vote { throw std::runtime_error("x"); }};
  ApplyDiagnostics diag;
  const auto m = apply_lfs(cands, {bad}, &diag);
  CHECK(diag.total_errors() == cands.size());
  for (std::size_t i = 0; i < m.n(); ++i) CHECK(m.at(i, 0) == A);

  auto pain_only = lf_between_phrase("x", {"of"}, T, RelationType::kPainAnatomy);
  CHECK_THROWS_AS(apply_lfs(cands, {pain_only}), Error);
}

TEST_CASE("label matrix rejects duplicate ids") {
  CHECK_THROWS_AS(LabelMatrix({"a", "a"}, {"lf"}), Error);
  CHECK_THROWS_AS(LabelMatrix({"a"}, {"lf", "lf"}), Error);
}

TEST_CASE("lf_statistics: hand-computed 4-row matrix") {
  const auto m = matrix({{T, T, A}, {T, F, A}, {A, F, F}, {A, A, A}});
  const GoldLabels gold{{"c0", true}, {"c1", false}, {"c2", false}};
  const auto s = lf_statistics(m, &gold);
  REQUIRE(s.size() == 3);
  CHECK(s[0].coverage == 0.5);
  CHECK(s[1].coverage == 0.75);
  CHECK(s[2].coverage == 0.25);
  CHECK(s[0].overlap == 0.5);
  CHECK(s[1].overlap == 0.75);
  CHECK(s[2].overlap == 0.25);
  CHECK(s[0].conflict == 0.25);
  CHECK(s[1].conflict == 0.25);
  CHECK(s[2].conflict == 0.0);
  CHECK(*s[0].accuracy == 0.5);
  CHECK(*s[1].accuracy == 1.0);
  CHECK(*s[2].accuracy == 1.0);
  for (const auto& x : s) {
    CHECK(x.conflict <= x.overlap);
    CHECK(x.overlap <= x.coverage);
  }
}

TEST_CASE("lf_statistics: trivial cases and unknown gold ids") {
  auto s = lf_statistics(matrix({{A, T}, {A, F}}));
  CHECK(s[0].coverage == 0.0);
  CHECK(s[0].overlap == 0.0);
  CHECK(s[0].conflict == 0.0);
  CHECK_FALSE(s[0].accuracy);

  s = lf_statistics(matrix({{T, T}, {F, F}, {A, A}}));
  CHECK(s[0].conflict == 0.0);
  CHECK(s[0].overlap == s[0].coverage);

  const GoldLabels gold{{"zzz", true}};
  try {
    lf_statistics(matrix({{T}}), &gold);
    FAIL("expected mismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kMismatch);
    CHECK(std::string(e.what()).find("zzz") != std::string::npos);
  }
}

TEST_CASE("soft majority vote") {
  const auto p = soft_majority_vote(matrix({{T, A, F}, {T, T, A}, {A, A, A}}));
  CHECK(p.p_true == std::vector<double>{0.5, 1.0, 0.5});

  const auto base = matrix({{T, F, F}, {A, T, A}, {F, A, A}});
  const auto wider = matrix({{T, F, F, A}, {A, T, A, A}, {F, A, A, A}});
  CHECK(soft_majority_vote(base).p_true == soft_majority_vote(wider).p_true);
}

TEST_CASE("posterior_labels: Bayes-rule cases") {
  auto p = posterior_labels(model({0.9}, {1.0}, 0.3), matrix({{A}}));
  CHECK(p.p_true[0] == doctest::Approx(0.3));
  p = posterior_labels(model({0.9}, {1.0}), matrix({{T}}));
  CHECK(p.p_true[0] == doctest::Approx(0.9));
  p = posterior_labels(model({0.8, 0.8}, {1.0, 1.0}), matrix({{T, F}}));
  CHECK(p.p_true[0] == doctest::Approx(0.5));
  auto other = model({0.8}, {1.0});
  other.lf_ids = {"nope"};
  CHECK_THROWS_AS(posterior_labels(other, matrix({{T}})), Error);
}

TEST_CASE("fit_label_model: unanimous TRUE drives posteriors to 1") {
  std::vector<std::vector<Vote>> rows(50, std::vector<Vote>(3, T));
  const auto m = matrix(rows);
  const auto lm = fit_label_model(m);
  for (double a : lm.alpha) CHECK(a == doctest::Approx(kMaxAccuracy));
  for (double p : posterior_labels(lm, m).p_true) CHECK(p == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("fit_label_model: errors") {
  CHECK_THROWS_AS(fit_label_model(matrix({{A, A}, {A, A}})), Error);
  CHECK_THROWS_AS(fit_label_model(LabelMatrix({}, {"a"})), Error);
}

TEST_CASE("fit_label_model: single LF accuracy is not identifiable with a fixed prior") {
  // P(vote) = pi*alpha + (1-pi)*(1-alpha) = 0.5 for every alpha when pi = 0.5,
  // so the marginal likelihood is flat and EM keeps its starting value.
  const auto s = synth::gen_label_matrix(10000, {{"lf0", 0.9, 1.0}}, 0.5, 3);
  const auto lm = fit_label_model(s.matrix);
  CHECK(lm.alpha[0] == doctest::Approx(LabelModelConfig{}.init_accuracy));
  const double a = label_model_log_likelihood(model({0.6}, {1.0}), s.matrix);
  const double b = label_model_log_likelihood(model({0.9}, {1.0}), s.matrix);
  CHECK(a == doctest::Approx(b));
}

TEST_CASE("fit_label_model: five LFs recover their accuracies") {
  const std::vector<double> alpha{0.9, 0.8, 0.75, 0.7, 0.6};
  std::vector<synth::LFSpec> specs;
  for (std::size_t j = 0; j < alpha.size(); ++j) specs.push_back({"lf" + std::to_string(j), alpha[j], 0.5});
  const auto s = synth::gen_label_matrix(10000, specs, 0.5, 21);
  const auto lm = fit_label_model(s.matrix);
  for (std::size_t j = 0; j < alpha.size(); ++j) {
    CHECK(lm.alpha[j] == doctest::Approx(alpha[j]).epsilon(0.05 / alpha[j]));
    double cov = 0;
    for (std::size_t i = 0; i < s.matrix.n(); ++i) cov += s.matrix.at(i, j) != A;
    CHECK(lm.beta[j] == doctest::Approx(cov / s.matrix.n()));
  }
  for (std::size_t k = 1; k < lm.log_likelihood_trace.size(); ++k)
    CHECK(lm.log_likelihood_trace[k] >= lm.log_likelihood_trace[k - 1] - 1e-9);
}

TEST_CASE("fit_label_model: column permutation and row duplication invariance") {
  std::vector<synth::LFSpec> specs{{"a", 0.85, 0.6}, {"b", 0.7, 0.5}, {"c", 0.65, 0.7}};
  const auto s = synth::gen_label_matrix(2000, specs, 0.5, 5);
  const auto lm = fit_label_model(s.matrix);
  const auto perm = s.matrix.select_columns({2, 0, 1});
  const auto lp = fit_label_model(perm);
  CHECK(lp.alpha[0] == doctest::Approx(lm.alpha[2]).epsilon(1e-6));
  CHECK(lp.alpha[1] == doctest::Approx(lm.alpha[0]).epsilon(1e-6));
  CHECK(lp.beta[2] == doctest::Approx(lm.beta[1]).epsilon(1e-9));
  const auto pa = posterior_labels(lm, s.matrix).p_true;
  const auto pb = posterior_labels(lp, perm).p_true;
  for (std::size_t i = 0; i < pa.size(); ++i) REQUIRE(pa[i] == doctest::Approx(pb[i]).epsilon(1e-6));

  std::vector<std::string> ids;
  for (std::size_t i = 0; i < 2 * s.matrix.n(); ++i) ids.push_back("d" + std::to_string(i));
  LabelMatrix twice(ids, s.matrix.lf_ids());
  for (std::size_t i = 0; i < s.matrix.n(); ++i)
    for (std::size_t j = 0; j < s.matrix.m(); ++j) {
      twice.set(i, j, s.matrix.at(i, j));
      twice.set(i + s.matrix.n(), j, s.matrix.at(i, j));
    }
  const auto ld = fit_label_model(twice);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(ld.alpha[j] == doctest::Approx(lm.alpha[j]).epsilon(1e-6));
    CHECK(ld.beta[j] == doctest::Approx(lm.beta[j]).epsilon(1e-12));
  }
}

TEST_CASE("fit_label_model: worse-than-chance fit flips") {
  std::vector<synth::LFSpec> specs{{"a", 0.2, 0.8}, {"b", 0.25, 0.8}, {"c", 0.3, 0.8}};
  const auto s = synth::gen_label_matrix(5000, specs, 0.5, 9);
  LabelModelConfig cfg;
  cfg.init_accuracy = 0.3;
  const auto lm = fit_label_model(s.matrix, cfg);
  double mean = 0;
  for (double a : lm.alpha) mean += a / 3;
  CHECK(mean >= 0.5);
}

TEST_CASE("serialization round trips") {
  TempDir dir("ws");
  const auto s = synth::gen_label_matrix(300, {{"a", 0.8, 0.5}, {"b", 0.7, 0.5}}, 0.5, 1);
  write_label_matrix(s.matrix, dir / "m.lmx");
  CHECK(read_label_matrix(dir / "m.lmx") == s.matrix);
  write_label_matrix_csv(s.matrix, dir / "m.csv");
  CHECK(testing::read_file(dir / "m.csv").rfind("candidate_id,lf_id,vote\n", 0) == 0);

  const auto lm = fit_label_model(s.matrix);
  const auto back = label_model_from_json(label_model_to_json(lm));
  CHECK(back.alpha == lm.alpha);
  CHECK(back.beta == lm.beta);
  CHECK(back.pi == lm.pi);
  CHECK(back.lf_ids == lm.lf_ids);

  const auto p = posterior_labels(lm, s.matrix);
  write_probabilistic_labels(p, dir / "p.csv");
  const auto pb = read_probabilistic_labels(dir / "p.csv");
  CHECK(pb.candidate_ids == p.candidate_ids);
  CHECK(pb.p_true == p.p_true);
}

TEST_CASE("LF spec files") {
  const auto lfs = pipeline::lfs_from_json(
      R"([{"starter":"historical"},{"id":"w","kind":"left_window_phrase","phrases":["reports"],"window":3,"vote":1}])",
      RelationType::kPainAnatomy);
  REQUIRE(lfs.size() == 2);
  CHECK(lfs[0].lf_id == "historical");
  CHECK(lfs[1].lf_id == "w");
  CHECK_THROWS_AS(pipeline::lfs_from_json(R"([{"id":"x","kind":"nope","vote":1}])", RelationType::kPainAnatomy),
                  Error);
  CHECK_THROWS_AS(pipeline::lfs_from_json(R"([{"starter":"missing"}])", RelationType::kPainAnatomy), Error);
}

TEST_CASE("lf_dev_loop: errors and gold-free rows") {
  const auto cands = figure2_candidates();
  const auto lfs = starter_lfs(RelationType::kImplantComplication);
  CHECK_THROWS_AS(pipeline::lf_dev_loop(cands, {}), Error);
  CHECK_THROWS_AS(pipeline::lf_dev_loop({}, lfs), Error);
  const auto rows = pipeline::lf_dev_loop(cands, lfs);
  REQUIRE(rows.size() == lfs.size());
  for (const auto& r : rows) CHECK_FALSE(r.accuracy);
  GoldLabels gold;
  for (const auto& c : cands) gold[c.candidate_id] = false;
  const auto with_gold = pipeline::lf_dev_loop(cands, lfs, &gold);
  CHECK(with_gold[1].accuracy.has_value());
}
