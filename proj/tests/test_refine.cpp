#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "longctx/errors.hpp"
#include "longctx/planted.hpp"
#include "longctx/refine.hpp"
#include "testutil.hpp"

using namespace longctx;

namespace {

const SelectionOptions kNoForced{false, false, true};

RefineConfig basic_config() {
  RefineConfig cfg;
  cfg.threshold = 0.9;
  cfg.vertical_increment = 1;
  cfg.slash_increment = 1;
  cfg.max_rounds = 8;
  cfg.budget_cap = HeadBudget{16, 16};
  cfg.measure.last_q = 32;
  return cfg;
}

}  // namespace

TEST_CASE("attention recall on hand-computable lse values") {
  SUBCASE("identical sets give recall one") {
    const std::vector<double> lse{0.3, -1.7, 12.0};
    const RecallReport r = attention_recall(lse, lse);
    for (double v : r.per_query) CHECK(v == 1.0);
    CHECK(r.aggregate == 1.0);
  }
  SUBCASE("two equal logits, one selected") {
    const std::vector<double> sparse{0.0};
    const std::vector<double> full{std::log(2.0)};
    const RecallReport r = attention_recall(sparse, full);
    CHECK(r.per_query[0] == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("three keys with logits (0, 0, ln 2), only the ln 2 key kept") {
    const std::vector<double> sparse{std::log(2.0)};
    const std::vector<double> full{std::log(4.0)};
    const RecallReport r = attention_recall(sparse, full);
    CHECK(r.per_query[0] == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("length mismatch") {
    const std::vector<double> a{0.0, 1.0};
    const std::vector<double> b{0.0};
    CHECK_THROWS_AS(attention_recall(a, b), Error);
  }
  SUBCASE("marginally-above-one values clamp; far-above values throw") {
    const std::vector<double> full{1.0};
    const std::vector<double> near{1.0 + 1e-13};
    CHECK(attention_recall(near, full).per_query[0] == 1.0);
    const std::vector<double> far{1.1};
    CHECK_THROWS_AS(attention_recall(far, full), Error);
  }
}

TEST_CASE("recall through real attention: equal keys split the mass") {
  // two identical keys at the same rotary position -> equal logits; a
  // critical set keeping one of them captures exactly half the mass
  std::mt19937_64 rng(1);
  AttentionInput input = testutil::random_input(rng, 2, 8);
  input.positions_k = {0, 0};
  for (std::size_t d = 0; d < 8; ++d) input.k.at(1, d) = input.k.at(0, d);
  const AttentionResult full = full_attention(input);
  CriticalSet crit;
  crit.context_length = 2;
  crit.verticals = {0};
  const AttentionResult sparse = sparse_attention(input, crit);
  const RecallReport r = attention_recall(sparse.lse, full.lse);
  CHECK(r.per_query[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("refinement leaves converged heads untouched") {
  PlantedSpec spec;
  spec.n = 96;
  spec.head_dim = 16;
  spec.strength = 64.0;
  spec.query_noise = 0.5;
  spec.seed = 2;
  spec.vertical_columns = {2};
  const CalibrationSet calib{{0, 0, make_planted_input(spec)}};

  RefineConfig cfg = basic_config();
  cfg.measure.selection = kNoForced;
  SparsityPlan plan;
  plan.budgets[{0, 0}] = HeadBudget{4, 4};  // already enough for the planted column

  const auto [refined, report] = refine_plan(calib, plan, cfg);
  REQUIRE(report.heads.size() == 1);
  CHECK(report.heads[0].rounds == 0);
  CHECK(report.heads[0].initial_recall >= cfg.threshold);
  CHECK(refined.at(0, 0) == HeadBudget{4, 4});
}

TEST_CASE("refinement grows the budget until a planted column is captured") {
  PlantedSpec spec;
  spec.n = 128;
  spec.head_dim = 16;
  spec.strength = 64.0;
  spec.query_noise = 0.5;
  spec.seed = 3;
  spec.vertical_columns = {2};
  const CalibrationSet calib{{0, 0, make_planted_input(spec)}};

  RefineConfig cfg = basic_config();
  cfg.measure.selection = kNoForced;  // nothing admitted for free
  SparsityPlan plan;
  plan.budgets[{0, 0}] = HeadBudget{0, 0};

  const auto [refined, report] = refine_plan(calib, plan, cfg);
  REQUIRE(report.heads.size() == 1);
  const HeadRefineRecord& rec = report.heads[0];
  CHECK(rec.initial_recall < cfg.threshold);
  CHECK(rec.rounds >= 1);
  CHECK(refined.at(0, 0).vertical >= 1);
  CHECK(rec.final_recall >= cfg.threshold);
  CHECK(rec.final_recall > 0.9);
}

TEST_CASE("budgets never decrease") {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> b_pick(0, 6);
  std::uniform_int_distribution<std::size_t> n_pick(16, 64);
  RefineConfig cfg = basic_config();
  cfg.max_rounds = 2;
  cfg.threshold = 0.999;  // force growth attempts on most heads
  for (int trial = 0; trial < 25; ++trial) {
    CalibrationSet calib;
    SparsityPlan plan;
    const std::size_t heads = 1 + trial % 3;
    for (std::size_t h = 0; h < heads; ++h) {
      calib.push_back({0, h, testutil::random_input(rng, n_pick(rng), 8)});
      plan.budgets[{0, h}] = HeadBudget{b_pick(rng), b_pick(rng)};
    }
    const auto [refined, report] = refine_plan(calib, plan, cfg);
    for (const auto& [key, budget] : plan.budgets) {
      CHECK(refined.at(key.first, key.second).vertical >= budget.vertical);
      CHECK(refined.at(key.first, key.second).slash >= budget.slash);
    }
    for (const auto& rec : report.heads) CHECK(rec.rounds <= cfg.max_rounds);
  }
}

TEST_CASE("a diffuse head stops at the cap") {
  std::mt19937_64 rng(5);
  const CalibrationSet calib{{0, 0, testutil::random_input(rng, 128, 8)}};
  RefineConfig cfg = basic_config();
  cfg.threshold = 0.99;
  cfg.budget_cap = HeadBudget{4, 4};
  cfg.vertical_increment = 2;
  cfg.slash_increment = 2;
  cfg.measure.selection = kNoForced;
  SparsityPlan plan;
  plan.budgets[{0, 0}] = HeadBudget{0, 0};
  const auto [refined, report] = refine_plan(calib, plan, cfg);
  CHECK(refined.at(0, 0) == HeadBudget{4, 4});
  CHECK(report.heads[0].rounds == 2);
  CHECK(report.heads[0].final_recall < cfg.threshold);
}

TEST_CASE("empty calibration is rejected with its own error kind") {
  SparsityPlan plan;
  plan.budgets[{0, 0}] = HeadBudget{1, 1};
  try {
    refine_plan({}, plan, basic_config());
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == std::string("empty_calibration"));
  }
}

TEST_CASE("a head missing from the plan is a config error") {
  std::mt19937_64 rng(6);
  const CalibrationSet calib{{3, 9, testutil::random_input(rng, 16, 8)}};
  SparsityPlan plan;
  plan.budgets[{0, 0}] = HeadBudget{1, 1};
  CHECK_THROWS_AS(refine_plan(calib, plan, basic_config()), Error);
}

TEST_CASE("reported recall is reproducible") {
  PlantedSpec spec;
  spec.n = 96;
  spec.head_dim = 16;
  spec.strength = 32.0;
  spec.seed = 7;
  spec.vertical_columns = {5};
  spec.slash_offsets = {40};
  const CalibrationSet calib{{1, 2, make_planted_input(spec)}};
  RefineConfig cfg = basic_config();
  SparsityPlan plan;
  plan.budgets[{1, 2}] = HeadBudget{0, 0};
  const auto [refined, report] = refine_plan(calib, plan, cfg);
  const double again =
      measure_budget_recall(calib[0].input, report.heads[0].final_budget, cfg.measure);
  CHECK(again == report.heads[0].final_recall);
}

TEST_CASE("offline search picks the first qualifying grid point") {
  PlantedSpec spec;
  spec.n = 96;
  spec.head_dim = 16;
  spec.strength = 96.0;
  spec.query_noise = 0.5;
  spec.seed = 8;
  spec.vertical_columns = {2};
  spec.slash_offsets = {9};
  const CalibrationSet calib{{0, 0, make_planted_input(spec)}};
  const std::vector<HeadBudget> grid{{1, 1}, {4, 4}, {16, 16}};

  RecallMeasurement measure;
  measure.last_q = 32;
  measure.selection = kNoForced;

  SUBCASE("vacuous threshold takes the smallest point") {
    const SparsityPlan plan = offline_search(calib, grid, 0.0, measure);
    CHECK(plan.at(0, 0) == HeadBudget{1, 1});
  }
  SUBCASE("planted head qualifies at the smallest point") {
    const SparsityPlan plan = offline_search(calib, grid, 0.95, measure);
    CHECK(plan.at(0, 0) == HeadBudget{1, 1});
  }
  SUBCASE("single-point grid is taken everywhere") {
    const SparsityPlan plan = offline_search(calib, {{3, 7}}, 0.99, measure);
    CHECK(plan.at(0, 0) == HeadBudget{3, 7});
  }
  SUBCASE("unreachable threshold falls back to the largest point") {
    std::mt19937_64 rng(9);
    const CalibrationSet diffuse{{0, 0, testutil::random_input(rng, 64, 8)}};
    const SparsityPlan plan = offline_search(diffuse, grid, 0.9999, measure);
    CHECK(plan.at(0, 0) == HeadBudget{16, 16});
  }
  SUBCASE("grid validation") {
    CHECK_THROWS_AS(offline_search(calib, {}, 0.5, measure), Error);
    CHECK_THROWS_AS(offline_search(calib, {{4, 4}, {1, 1}}, 0.5, measure), Error);
    CHECK_THROWS_AS(offline_search({}, grid, 0.5, measure), Error);
  }
}

TEST_CASE("short-search budgets underperform on long inputs until refined") {
  // Six strong slashes only visible beyond the short calibration length: the
  // short search is satisfied by the local band, the long input is not until
  // the slash budget covers all six lines. head_dim 128 keeps the carrier
  // cross-talk far below the planted signal.
  const std::size_t short_len = 64;
  const std::size_t long_len = 256;
  RecallMeasurement measure;
  measure.last_q = 64;

  PlantedSpec short_spec;
  short_spec.n = short_len;
  short_spec.head_dim = 128;
  short_spec.strength = 256.0;
  short_spec.query_noise = 0.5;
  short_spec.seed = 10;
  const CalibrationSet short_calib{{0, 0, make_planted_input(short_spec)}};

  PlantedSpec long_spec = short_spec;
  long_spec.n = long_len;
  long_spec.slash_offsets = {70, 95, 120, 150, 180, 210};
  const CalibrationSet long_calib{{0, 0, make_planted_input(long_spec)}};

  const std::vector<HeadBudget> grid{{1, 1}, {2, 2}, {4, 4}, {8, 8}};
  const SparsityPlan short_plan = offline_search(short_calib, grid, 0.9, measure);
  CHECK(short_plan.at(0, 0) == HeadBudget{1, 1});

  const double long_recall_before =
      measure_budget_recall(long_calib[0].input, short_plan.at(0, 0), measure);
  CHECK(long_recall_before < 0.9);

  RefineConfig cfg;
  cfg.threshold = 0.9;
  cfg.vertical_increment = 1;
  cfg.slash_increment = 1;
  cfg.max_rounds = 8;
  cfg.budget_cap = HeadBudget{16, 16};
  cfg.measure = measure;
  const auto [refined, report] = refine_plan(long_calib, short_plan, cfg);
  CHECK(report.heads[0].final_recall > long_recall_before);
  CHECK(report.heads[0].final_recall >= 0.9);
  CHECK(refined.at(0, 0).slash > short_plan.at(0, 0).slash);
}

TEST_CASE("fraction-above aggregation is available") {
  PlantedSpec spec;
  spec.n = 96;
  spec.head_dim = 16;
  spec.strength = 64.0;
  spec.seed = 11;
  spec.vertical_columns = {2};
  const AttentionInput input = make_planted_input(spec);
  RecallMeasurement measure;
  measure.last_q = 32;
  measure.aggregate = RecallAggregate::FractionAbove;
  measure.fraction_tau = 0.5;
  const double frac = measure_budget_recall(input, HeadBudget{4, 4}, measure);
  CHECK(frac >= 0.0);
  CHECK(frac <= 1.0);
  measure.aggregate = RecallAggregate::Mean;
  const double mean = measure_budget_recall(input, HeadBudget{4, 4}, measure);
  CHECK(mean != frac);  // different reductions of the same measurements
}

TEST_CASE("refine config validation") {
  RefineConfig cfg = basic_config();
  cfg.threshold = 1.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = basic_config();
  cfg.vertical_increment = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = basic_config();
  cfg.max_rounds = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}
