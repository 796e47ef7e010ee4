#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace longctx {

/// Prefill chunk cost: attn_coeff * n * h + self_coeff * n^2 / 2 +
/// lin_coeff * n + fixed_cost, for a chunk of n tokens after h cached ones.
struct CostModel {
  double attn_coeff = 0.0;
  double self_coeff = 0.0;
  double lin_coeff = 0.0;
  double fixed_cost = 0.0;

  void validate() const;
};

double chunk_cost(const CostModel& model, std::size_t n, std::size_t h);

/// Chunk boundaries as exclusive end indices; the last one equals the total
/// token count, so chunk i spans [boundaries[i-1], boundaries[i]).
struct ChunkSchedule {
  std::vector<std::size_t> boundaries;

  std::size_t total_tokens() const { return boundaries.empty() ? 0 : boundaries.back(); }
  std::size_t chunk_count() const { return boundaries.size(); }
  std::vector<std::size_t> sizes() const;
  /// [begin, end) of chunk idx.
  std::pair<std::size_t, std::size_t> chunk(std::size_t idx) const;

  void validate() const;
};

/// Near-equal token counts, remainder spread left to right.
ChunkSchedule fixed_schedule(std::size_t tokens, std::size_t chunks);

/// Boundaries chosen so per-chunk costs are as equal as the token
/// discretization allows: binary search on the max admissible chunk cost with
/// a greedy take-while walk as the feasibility oracle.
ChunkSchedule dcpp_schedule(std::size_t tokens, std::size_t chunks,
                            const CostModel& model);

struct StageEvent {
  std::size_t stage = 0;
  std::size_t item = 0;  // chunk index, or step index for engine traces
  double start = 0.0;
  double end = 0.0;
};

struct EventTrace {
  std::vector<StageEvent> events;  // ordered by (start, stage, item)
  double makespan = 0.0;
  /// Idle stage-time over total stage-time in [first start, makespan].
  double bubble_ratio = 0.0;
};

/// Each chunk traverses the stages in order; a stage runs one chunk at a
/// time. Per-stage cost is chunk_cost * weight (uniform 1/stages when no
/// weights are given).
EventTrace pipeline_simulate(const ChunkSchedule& schedule, std::size_t stages,
                             const CostModel& model,
                             std::span<const double> stage_weights = {});

/// Per-decode-step component times. Zeros are allowed (a component can be
/// free) as long as one component does work.
struct EngineTiming {
  double scheduler_time = 0.0;
  double model_runner_time = 0.0;
  double decoder_time = 0.0;
  std::size_t steps = 1;
  double hop_latency = 0.0;  // per queue hop; 0 models shared memory

  void validate() const;
};

enum class EngineMode { Serial, Async };

struct EngineSimResult {
  EventTrace trace;
  std::vector<double> per_step_latency;  // decoder end - scheduler start
  double total_time = 0.0;
  double steady_period = 0.0;  // completion interval between the last two steps
  double throughput = 0.0;     // steps / total_time
};

/// Serial mode runs scheduler, model runner and decoder back to back per
/// step. Async mode runs them as three single-server stages with unbounded
/// queues, so the steady-state period is the slowest component's time.
EngineSimResult tag_simulate(const EngineTiming& timing, EngineMode mode);

}  // namespace longctx
