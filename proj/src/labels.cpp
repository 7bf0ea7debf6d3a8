#include "fplan/labels.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace fplan {

namespace {

uint8_t pack_flags(const SubScores& s) {
  return static_cast<uint8_t>((s.nc > 0.5 ? 1 : 0) | (s.dac > 0.5 ? 2 : 0) |
                              (s.ttc > 0.5 ? 4 : 0) | (s.comfort > 0.5 ? 8 : 0) |
                              (s.lk > 0.5 ? 16 : 0));
}

SubScores unpack(const TeacherLabelStore* /*unused*/, uint8_t flags, double ep) {
  SubScores s;
  s.nc = flags & 1 ? 1.0 : 0.0;
  s.dac = flags & 2 ? 1.0 : 0.0;
  s.ttc = flags & 4 ? 1.0 : 0.0;
  s.comfort = flags & 8 ? 1.0 : 0.0;
  s.lk = flags & 16 ? 1.0 : 0.0;
  s.ep = ep;
  return s;
}

}  // namespace

const TeacherLabelStore::SampleTable& TeacherLabelStore::table(const ScenarioSample& sample) {
  auto it = tables_.find(sample.id);
  if (it != tables_.end()) return it->second;

  const int num_paths = vocab_->num_paths();
  const int num_vels = vocab_->num_velocities();
  SampleTable tbl;
  tbl.grid.resize(static_cast<size_t>(num_paths) * num_vels);

  std::vector<CandidateEval> evals;
  evals.reserve(tbl.grid.size());
  for (int i = 0; i < num_paths; ++i)
    for (int j = 0; j < num_vels; ++j)
      evals.push_back(evaluate_candidate(entry(*vocab_, i, j), sample.script, sample.t0, thresholds_));

  double ref = -1.0;
  for (const auto& e : evals)
    if (e.scores.nc > 0.0 && e.scores.dac > 0.0) ref = std::max(ref, e.progress);
  tbl.ep_ref = ref;

  for (size_t k = 0; k < evals.size(); ++k) {
    SubScores s = evals[k].scores;
    if (ref < 0.0) s.ep = 0.0;
    else if (ref < 1e-9) s.ep = 1.0;
    else s.ep = std::clamp(evals[k].progress / ref, 0.0, 1.0);
    tbl.grid[k].flags = pack_flags(s);
    tbl.grid[k].ep = static_cast<float>(s.ep);
  }
  return tables_.emplace(sample.id, std::move(tbl)).first->second;
}

void TeacherLabelStore::ensure(const ScenarioSample& sample) { table(sample); }

SubScores TeacherLabelStore::subscores(const ScenarioSample& sample, int i, int j) {
  const auto& tbl = table(sample);
  const long idx = static_cast<long>(i) * vocab_->num_velocities() + j;
  if (idx < 0 || idx >= static_cast<long>(tbl.grid.size()))
    throw std::out_of_range("TeacherLabelStore: candidate index");
  return unpack(this, tbl.grid[idx].flags, tbl.grid[idx].ep);
}

std::array<double, kNumMetricHeads> TeacherLabelStore::labels(const ScenarioSample& sample, int i,
                                                              int j) {
  const SubScores s = subscores(sample, i, j);
  return {s.nc, s.dac, s.ttc, s.comfort, s.ep, s.lk};
}

SubScores TeacherLabelStore::score_external(const ScenarioSample& sample, const Trajectory& traj) {
  const auto& tbl = table(sample);
  auto eval = evaluate_candidate(traj, sample.script, sample.t0, thresholds_);
  if (tbl.ep_ref < 0.0) eval.scores.ep = 0.0;
  else if (tbl.ep_ref < 1e-9) eval.scores.ep = 1.0;
  else eval.scores.ep = std::clamp(eval.progress / tbl.ep_ref, 0.0, 1.0);
  return eval.scores;
}

long TeacherLabelStore::computed_entries() const {
  long n = 0;
  for (const auto& [id, tbl] : tables_) n += static_cast<long>(tbl.grid.size());
  return n;
}

std::string TeacherLabelStore::to_jsonl() const {
  std::string out;
  for (const auto& [id, tbl] : tables_) { // std::map iterates sorted by id
    const int num_vels = vocab_->num_velocities();
    for (size_t k = 0; k < tbl.grid.size(); ++k) {
      nlohmann::json row;
      row["id"] = id;
      row["i"] = static_cast<int>(k) / num_vels;
      row["j"] = static_cast<int>(k) % num_vels;
      row["flags"] = tbl.grid[k].flags;
      row["ep"] = tbl.grid[k].ep;
      row["ep_ref"] = tbl.ep_ref;
      out += row.dump();
      out += '\n';
    }
  }
  return out;
}

void TeacherLabelStore::load_jsonl(const std::string& text,
                                   const std::vector<ScenarioSample>& samples) {
  const int num_paths = vocab_->num_paths();
  const int num_vels = vocab_->num_velocities();
  std::map<std::string, SampleTable> loaded;
  size_t at = 0;
  while (at < text.size()) {
    size_t end = text.find('\n', at);
    if (end == std::string::npos) end = text.size();
    if (end > at) {
      const auto row = nlohmann::json::parse(text.substr(at, end - at));
      auto& tbl = loaded[row.at("id").get<std::string>()];
      if (tbl.grid.empty()) tbl.grid.resize(static_cast<size_t>(num_paths) * num_vels);
      const long idx = static_cast<long>(row.at("i").get<int>()) * num_vels + row.at("j").get<int>();
      tbl.grid[idx].flags = static_cast<uint8_t>(row.at("flags").get<int>());
      tbl.grid[idx].ep = row.at("ep").get<float>();
      tbl.ep_ref = row.at("ep_ref").get<double>();
    }
    at = end + 1;
  }
  // Only adopt tables for samples we actually know about.
  for (const auto& sample : samples) {
    auto it = loaded.find(sample.id);
    if (it != loaded.end()) tables_[sample.id] = it->second;
  }
}

}  // namespace fplan
