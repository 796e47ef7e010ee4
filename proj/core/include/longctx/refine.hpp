#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "longctx/attention.hpp"
#include "longctx/sparse.hpp"

namespace longctx {

/// Per-query fraction of attention mass a sparse index set captured,
/// exp(lse_sparse - lse_full), with the aggregate mean.
struct RecallReport {
  std::size_t layer = 0;
  std::size_t head = 0;
  std::vector<double> per_query;
  double aggregate = 0.0;
};

/// Requires the sparse set to be a subset of the full causal set (so every
/// value is analytically <= 1). Values in (1, 1 + 1e-12] are rounding noise
/// and clamp to 1; anything beyond that is a caller error.
RecallReport attention_recall(std::span<const double> lse_sparse,
                              std::span<const double> lse_full);

enum class RecallAggregate { Mean, FractionAbove };

/// How a budget is scored on one calibration input: estimate from the
/// trailing last_q rows, select, run sparse vs full, reduce per-query recall.
struct RecallMeasurement {
  std::size_t last_q = 64;
  SelectionOptions selection{};
  RecallAggregate aggregate = RecallAggregate::Mean;
  double fraction_tau = 0.9;  // per-query cutoff for FractionAbove
};

double measure_budget_recall(const AttentionInput& input, HeadBudget budget,
                             const RecallMeasurement& measure);

struct CalibrationSample {
  std::size_t layer = 0;
  std::size_t head = 0;
  AttentionInput input;
};
using CalibrationSet = std::vector<CalibrationSample>;

struct RefineConfig {
  double threshold = 0.9;
  std::size_t vertical_increment = 4;
  std::size_t slash_increment = 4;
  std::size_t max_rounds = 8;
  HeadBudget budget_cap{64, 64};
  RecallMeasurement measure{};

  void validate() const;
};

struct HeadRefineRecord {
  std::size_t layer = 0;
  std::size_t head = 0;
  std::size_t rounds = 0;
  HeadBudget initial_budget;
  HeadBudget final_budget;
  double initial_recall = 0.0;
  double final_recall = 0.0;
};

struct RefineReport {
  std::vector<HeadRefineRecord> heads;
};

/// Grows each sampled head's budget by the configured increments while its
/// aggregate recall over the calibration samples stays below the threshold,
/// the cap is not reached and rounds remain. Budgets never decrease. Heads
/// present in the plan but absent from the calibration pass through
/// unchanged.
std::pair<SparsityPlan, RefineReport> refine_plan(const CalibrationSet& calib,
                                                  const SparsityPlan& plan,
                                                  const RefineConfig& cfg);

/// Per head, the first grid point (grid sorted by total budget ascending)
/// whose aggregate recall reaches the threshold; the largest point when none
/// qualifies.
SparsityPlan offline_search(const CalibrationSet& calib,
                            const std::vector<HeadBudget>& grid, double threshold,
                            const RecallMeasurement& measure = {});

}  // namespace longctx
