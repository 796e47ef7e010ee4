#include "longctx/refine.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "longctx/errors.hpp"

namespace longctx {

namespace {

constexpr double kRecallSlack = 1e-12;

double reduce(const std::vector<double>& per_query, const RecallMeasurement& m) {
  if (m.aggregate == RecallAggregate::Mean) {
    double sum = 0.0;
    for (double r : per_query) sum += r;
    return sum / double(per_query.size());
  }
  std::size_t above = 0;
  for (double r : per_query) {
    if (r >= m.fraction_tau) ++above;
  }
  return double(above) / double(per_query.size());
}

using HeadKey = std::pair<std::size_t, std::size_t>;

std::map<HeadKey, std::vector<const AttentionInput*>> group_by_head(
    const CalibrationSet& calib) {
  std::map<HeadKey, std::vector<const AttentionInput*>> groups;
  for (const auto& sample : calib) {
    groups[{sample.layer, sample.head}].push_back(&sample.input);
  }
  return groups;
}

double head_recall(const std::vector<const AttentionInput*>& inputs, HeadBudget budget,
                   const RecallMeasurement& m) {
  double sum = 0.0;
  for (const AttentionInput* input : inputs) {
    sum += measure_budget_recall(*input, budget, m);
  }
  return sum / double(inputs.size());
}

}  // namespace

RecallReport attention_recall(std::span<const double> lse_sparse,
                              std::span<const double> lse_full) {
  if (lse_sparse.size() != lse_full.size()) {
    fail(errkind::dimension, "recall needs equally many sparse and full lse values");
  }
  if (lse_sparse.empty()) fail(errkind::dimension, "recall needs at least one query");
  RecallReport report;
  report.per_query.resize(lse_sparse.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < lse_sparse.size(); ++i) {
    double r = std::exp(lse_sparse[i] - lse_full[i]);
    if (r > 1.0 + kRecallSlack) {
      fail(errkind::domain, "recall above 1 at query " + std::to_string(i) +
                                ": sparse lse exceeds full lse");
    }
    r = std::min(r, 1.0);
    report.per_query[i] = r;
    sum += r;
  }
  report.aggregate = sum / double(report.per_query.size());
  return report;
}

double measure_budget_recall(const AttentionInput& input, HeadBudget budget,
                             const RecallMeasurement& measure) {
  const std::size_t n = input.seq_len();
  const AttentionResult full = full_attention(input);
  const Matrix est = estimate_block(input.q, input.k, std::min(measure.last_q, n),
                                    PositionMode::Standard, std::nullopt,
                                    input.rope_base);
  const CriticalSet crit = select_critical(est, budget, n, measure.selection);
  const AttentionResult sparse = sparse_attention(input, crit);
  const RecallReport report = attention_recall(sparse.lse, full.lse);
  return reduce(report.per_query, measure);
}

void RefineConfig::validate() const {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    fail(errkind::config, "threshold must lie in (0, 1)");
  }
  if (vertical_increment == 0 || slash_increment == 0) {
    fail(errkind::config, "budget increments must be at least 1");
  }
  if (max_rounds == 0) fail(errkind::config, "maxRounds must be at least 1");
  if (measure.last_q == 0) fail(errkind::config, "lastQ must be positive");
}

std::pair<SparsityPlan, RefineReport> refine_plan(const CalibrationSet& calib,
                                                  const SparsityPlan& plan,
                                                  const RefineConfig& cfg) {
  cfg.validate();
  if (calib.empty()) {
    fail(errkind::empty_calibration, "refinement requires a non-empty calibration set");
  }

  SparsityPlan refined = plan;
  RefineReport report;
  for (const auto& [key, inputs] : group_by_head(calib)) {
    const HeadBudget initial = plan.at(key.first, key.second);
    HeadBudget budget = initial;

    HeadRefineRecord record;
    record.layer = key.first;
    record.head = key.second;
    record.initial_budget = initial;
    record.initial_recall = head_recall(inputs, budget, cfg.measure);

    double recall = record.initial_recall;
    std::size_t rounds = 0;
    while (recall < cfg.threshold && rounds < cfg.max_rounds &&
           (budget.vertical < cfg.budget_cap.vertical ||
            budget.slash < cfg.budget_cap.slash)) {
      budget.vertical =
          std::min(budget.vertical + cfg.vertical_increment, cfg.budget_cap.vertical);
      budget.slash = std::min(budget.slash + cfg.slash_increment, cfg.budget_cap.slash);
      ++rounds;
      recall = head_recall(inputs, budget, cfg.measure);
    }

    record.rounds = rounds;
    record.final_budget = budget;
    record.final_recall = recall;
    report.heads.push_back(record);
    refined.at(key.first, key.second) = budget;
  }
  return {std::move(refined), std::move(report)};
}

SparsityPlan offline_search(const CalibrationSet& calib,
                            const std::vector<HeadBudget>& grid, double threshold,
                            const RecallMeasurement& measure) {
  if (grid.empty()) fail(errkind::config, "search grid must not be empty");
  for (std::size_t g = 1; g < grid.size(); ++g) {
    if (grid[g].total() < grid[g - 1].total()) {
      fail(errkind::config, "search grid must be sorted by total budget ascending");
    }
  }
  if (calib.empty()) {
    fail(errkind::empty_calibration, "offline search requires a non-empty calibration set");
  }

  SparsityPlan plan;
  for (const auto& [key, inputs] : group_by_head(calib)) {
    HeadBudget chosen = grid.back();
    for (const HeadBudget& candidate : grid) {
      if (head_recall(inputs, candidate, measure) >= threshold) {
        chosen = candidate;
        break;
      }
    }
    plan.budgets[key] = chosen;
  }
  return plan;
}

}  // namespace longctx
