#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "devsurv/csv.hpp"
#include "devsurv/weaksup.hpp"

namespace devsurv::weaksup {

LabelMatrix::LabelMatrix(std::vector<std::string> candidate_ids, std::vector<std::string> lf_ids)
    : candidate_ids_(std::move(candidate_ids)), lf_ids_(std::move(lf_ids)) {
  for (std::size_t i = 0; i < candidate_ids_.size(); ++i) {
    if (!index_.emplace(candidate_ids_[i], i).second)
      throw Error(ErrorCode::kDuplicate, "duplicate candidate id " + candidate_ids_[i],
                  {{"candidate_id", candidate_ids_[i]}});
  }
  std::vector<std::string> sorted = lf_ids_;
  std::sort(sorted.begin(), sorted.end());
  if (auto it = std::adjacent_find(sorted.begin(), sorted.end()); it != sorted.end())
    throw Error(ErrorCode::kDuplicate, "duplicate labeling function id " + *it, {{"lf_id", *it}});
  votes_.assign(candidate_ids_.size() * lf_ids_.size(), static_cast<std::int8_t>(Vote::kAbstain));
}

std::optional<std::size_t> LabelMatrix::row_of(const std::string& candidate_id) const {
  auto it = index_.find(candidate_id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

LabelMatrix LabelMatrix::select_rows(const std::vector<std::size_t>& rows) const {
  std::vector<std::string> ids;
  ids.reserve(rows.size());
  for (auto r : rows) ids.push_back(candidate_ids_.at(r));
  LabelMatrix out(std::move(ids), lf_ids_);
  for (std::size_t j = 0; j < m(); ++j)
    for (std::size_t k = 0; k < rows.size(); ++k) out.set(k, j, at(rows[k], j));
  return out;
}

LabelMatrix LabelMatrix::select_columns(const std::vector<std::size_t>& cols) const {
  std::vector<std::string> ids;
  for (auto c : cols) ids.push_back(lf_ids_.at(c));
  LabelMatrix out(candidate_ids_, std::move(ids));
  for (std::size_t k = 0; k < cols.size(); ++k)
    for (std::size_t i = 0; i < n(); ++i) out.set(i, k, at(i, cols[k]));
  return out;
}

std::size_t ApplyDiagnostics::total_errors() const {
  std::size_t t = 0;
  for (auto e : errors_per_lf) t += e;
  return t;
}

LabelMatrix apply_lfs(const std::vector<RelationCandidate>& candidates,
                      const std::vector<LabelingFunction>& lfs, ApplyDiagnostics* diag) {
  std::vector<std::string> ids, lf_ids;
  ids.reserve(candidates.size());
  for (const auto& c : candidates) ids.push_back(c.candidate_id);
  for (const auto& lf : lfs) lf_ids.push_back(lf.lf_id);
  LabelMatrix out(std::move(ids), std::move(lf_ids));
  std::vector<std::size_t> errors(lfs.size(), 0);

  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    for (std::size_t j = 0; j < lfs.size(); ++j) {
      if (lfs[j].relation && *lfs[j].relation != c.relation)
        throw Error(ErrorCode::kInvalidArgument,
                    "labeling function " + lfs[j].lf_id + " does not apply to relation " +
                        std::string(extraction::to_string(c.relation)),
                    {{"lf_id", lfs[j].lf_id}, {"candidate_id", c.candidate_id}});
      Vote v = Vote::kAbstain;
      try {
        v = lfs[j](c);
      } catch (const std::exception&) {
        ++errors[j];
      }
      out.set(i, j, v);
    }
  }
  if (diag) diag->errors_per_lf = std::move(errors);
  return out;
}

std::vector<LFStat> lf_statistics(const LabelMatrix& matrix, const GoldLabels* gold) {
  if (gold) {
    std::vector<std::string> missing;
    for (const auto& [id, _] : *gold)
      if (!matrix.row_of(id)) missing.push_back(id);
    if (!missing.empty()) {
      std::string listed;
      for (std::size_t k = 0; k < missing.size() && k < 20; ++k)
        listed += (k ? "," : "") + missing[k];
      throw Error(ErrorCode::kMismatch,
                  std::to_string(missing.size()) + " gold ids are not in the label matrix: " + listed,
                  {{"missing_ids", join(missing, ",")}, {"count", std::to_string(missing.size())}});
    }
  }

  const std::size_t n = matrix.n(), m = matrix.m();
  std::vector<LFStat> out(m);
  std::vector<int> gold_of(n, -1);
  if (gold)
    for (const auto& [id, y] : *gold) gold_of[*matrix.row_of(id)] = y ? 1 : 0;

  for (std::size_t j = 0; j < m; ++j) {
    std::size_t cov = 0, ovl = 0, cfl = 0, correct = 0, graded = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const Vote v = matrix.at(i, j);
      if (v == Vote::kAbstain) continue;
      ++cov;
      bool other = false, disagree = false;
      for (std::size_t k = 0; k < m; ++k) {
        if (k == j) continue;
        const Vote w = matrix.at(i, k);
        if (w == Vote::kAbstain) continue;
        other = true;
        if (w != v) disagree = true;
      }
      ovl += other;
      cfl += disagree;
      if (gold_of[i] >= 0) {
        ++graded;
        correct += (v == Vote::kTrue) == (gold_of[i] == 1);
      }
    }
    auto& s = out[j];
    s.lf_id = matrix.lf_ids()[j];
    const double dn = n ? static_cast<double>(n) : 1.0;
    s.coverage = static_cast<double>(cov) / dn;
    s.overlap = static_cast<double>(ovl) / dn;
    s.conflict = static_cast<double>(cfl) / dn;
    s.gold_votes = graded;
    if (gold && graded > 0) s.accuracy = static_cast<double>(correct) / static_cast<double>(graded);
  }
  return out;
}

ProbabilisticLabels soft_majority_vote(const LabelMatrix& matrix) {
  ProbabilisticLabels out;
  out.candidate_ids = matrix.candidate_ids();
  out.p_true.assign(matrix.n(), 0.5);
  for (std::size_t i = 0; i < matrix.n(); ++i) {
    std::size_t t = 0, f = 0;
    for (std::size_t j = 0; j < matrix.m(); ++j) {
      const Vote v = matrix.at(i, j);
      t += v == Vote::kTrue;
      f += v == Vote::kFalse;
    }
    if (t + f > 0) out.p_true[i] = static_cast<double>(t) / static_cast<double>(t + f);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

void write_label_matrix(const LabelMatrix& matrix, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw Error(ErrorCode::kMissingInput, "cannot write " + path.string(), {{"path", path.string()}});
  out << "LMX1\n"
      << "n=" << matrix.n() << " m=" << matrix.m() << "\n"
      << "lf_ids=" << join(matrix.lf_ids(), "\t") << "\n";
  for (const auto& id : matrix.candidate_ids()) out << id << "\n";
  const auto& raw = matrix.raw();
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

LabelMatrix read_label_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(ErrorCode::kMissingInput, "cannot open label matrix " + path.string(),
                {{"path", path.string()}});
  auto fail = [&](const std::string& what) {
    return Error(ErrorCode::kParse, path.string() + ": " + what, {{"path", path.string()}});
  };
  std::string line;
  if (!std::getline(in, line) || line != "LMX1") throw fail("bad magic");
  std::size_t n = 0, m = 0;
  if (!std::getline(in, line) || std::sscanf(line.c_str(), "n=%zu m=%zu", &n, &m) != 2)
    throw fail("bad dimension line");
  if (!std::getline(in, line) || line.rfind("lf_ids=", 0) != 0) throw fail("bad lf_ids line");
  std::vector<std::string> lf_ids;
  if (m > 0) lf_ids = split(std::string_view(line).substr(7), '\t');
  if (lf_ids.size() != m) throw fail("lf_ids count does not match m");
  std::vector<std::string> ids(n);
  for (auto& id : ids)
    if (!std::getline(in, id)) throw fail("truncated candidate ids");
  LabelMatrix out(std::move(ids), std::move(lf_ids));
  std::vector<std::int8_t> raw(n * m);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) throw fail("truncated votes");
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t i = 0; i < n; ++i) {
      const auto v = raw[j * n + i];
      if (v < -1 || v > 1) throw fail("vote out of range");
      out.set(i, j, static_cast<Vote>(v));
    }
  return out;
}

void write_label_matrix_csv(const LabelMatrix& matrix, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out)
    throw Error(ErrorCode::kMissingInput, "cannot write " + path.string(), {{"path", path.string()}});
  CsvWriter w(out);
  w.row({"candidate_id", "lf_id", "vote"});
  for (std::size_t i = 0; i < matrix.n(); ++i)
    for (std::size_t j = 0; j < matrix.m(); ++j)
      w.row({matrix.candidate_ids()[i], matrix.lf_ids()[j],
             std::to_string(static_cast<int>(matrix.at(i, j)))});
}

void write_probabilistic_labels(const ProbabilisticLabels& labels, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out)
    throw Error(ErrorCode::kMissingInput, "cannot write " + path.string(), {{"path", path.string()}});
  CsvWriter w(out);
  w.row({"candidate_id", "p_true"});
  for (std::size_t i = 0; i < labels.candidate_ids.size(); ++i)
    w.row({labels.candidate_ids[i], fmt_double(labels.p_true[i], 17)});
}

ProbabilisticLabels read_probabilistic_labels(const std::filesystem::path& path) {
  auto t = CsvTable::read(path);
  t.require_columns({"candidate_id", "p_true"});
  ProbabilisticLabels out;
  for (const auto& r : t.rows()) {
    out.candidate_ids.push_back(r.at("candidate_id"));
    try {
      out.p_true.push_back(std::stod(r.at("p_true")));
    } catch (const std::exception&) {
      throw Error(ErrorCode::kParse, path.string() + ": bad p_true on line " + std::to_string(r.line()),
                  {{"path", path.string()}, {"line", std::to_string(r.line())}});
    }
  }
  return out;
}

}  // namespace devsurv::weaksup
