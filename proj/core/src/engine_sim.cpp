#include "longctx/engine_sim.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "longctx/errors.hpp"

namespace longctx {

namespace {

void finish_trace(EventTrace& trace, std::size_t stages) {
  double first_start = 0.0;
  double makespan = 0.0;
  double busy = 0.0;
  for (const StageEvent& e : trace.events) {
    makespan = std::max(makespan, e.end);
    busy += e.end - e.start;
  }
  trace.makespan = makespan;
  const double window = double(stages) * (makespan - first_start);
  trace.bubble_ratio = window > 0.0 ? (window - busy) / window : 0.0;
  std::sort(trace.events.begin(), trace.events.end(),
            [](const StageEvent& a, const StageEvent& b) {
              if (a.start != b.start) return a.start < b.start;
              if (a.stage != b.stage) return a.stage < b.stage;
              return a.item < b.item;
            });
}

}  // namespace

void CostModel::validate() const {
  if (attn_coeff < 0 || self_coeff < 0 || lin_coeff < 0 || fixed_cost < 0) {
    fail(errkind::config, "cost coefficients must be non-negative");
  }
}

double chunk_cost(const CostModel& model, std::size_t n, std::size_t h) {
  if (n == 0) fail(errkind::domain, "chunk must contain at least one token");
  const double nd = double(n);
  return model.attn_coeff * nd * double(h) + model.self_coeff * nd * nd / 2.0 +
         model.lin_coeff * nd + model.fixed_cost;
}

std::vector<std::size_t> ChunkSchedule::sizes() const {
  std::vector<std::size_t> out(boundaries.size());
  std::size_t prev = 0;
  for (std::size_t i = 0; i < boundaries.size(); ++i) {
    out[i] = boundaries[i] - prev;
    prev = boundaries[i];
  }
  return out;
}

std::pair<std::size_t, std::size_t> ChunkSchedule::chunk(std::size_t idx) const {
  return {idx == 0 ? 0 : boundaries[idx - 1], boundaries[idx]};
}

void ChunkSchedule::validate() const {
  if (boundaries.empty()) fail(errkind::config, "schedule has no chunks");
  std::size_t prev = 0;
  for (std::size_t b : boundaries) {
    if (b <= prev) fail(errkind::config, "chunk boundaries must be strictly increasing");
    prev = b;
  }
}

ChunkSchedule fixed_schedule(std::size_t tokens, std::size_t chunks) {
  if (chunks == 0 || chunks > tokens) {
    fail(errkind::config, "chunk count must lie in [1, tokens]");
  }
  ChunkSchedule schedule;
  schedule.boundaries.reserve(chunks);
  const std::size_t base = tokens / chunks;
  const std::size_t remainder = tokens % chunks;
  std::size_t pos = 0;
  for (std::size_t c = 0; c < chunks; ++c) {
    pos += base + (c < remainder ? 1 : 0);
    schedule.boundaries.push_back(pos);
  }
  return schedule;
}

namespace {

// Greedy take-while walk: each chunk absorbs tokens while its cost stays
// within tau; the final chunk must absorb the rest. Returns boundaries when
// the walk covers all tokens in at most `chunks` chunks.
std::optional<std::vector<std::size_t>> greedy_under(double tau, std::size_t tokens,
                                                     std::size_t chunks,
                                                     const CostModel& model) {
  std::vector<std::size_t> boundaries;
  std::size_t pos = 0;
  for (std::size_t c = 0; c < chunks && pos < tokens; ++c) {
    const std::size_t remaining_chunks = chunks - c;
    const std::size_t max_take = tokens - pos - (remaining_chunks - 1);
    std::size_t take = 1;
    if (c + 1 == chunks) {
      take = tokens - pos;
      if (chunk_cost(model, take, pos) > tau) return std::nullopt;
    } else {
      if (chunk_cost(model, take, pos) > tau) return std::nullopt;
      while (take < max_take && chunk_cost(model, take + 1, pos) <= tau) ++take;
    }
    pos += take;
    boundaries.push_back(pos);
  }
  if (pos != tokens) return std::nullopt;
  return boundaries;
}

}  // namespace

ChunkSchedule dcpp_schedule(std::size_t tokens, std::size_t chunks,
                            const CostModel& model) {
  model.validate();
  if (chunks == 0 || chunks > tokens) {
    fail(errkind::config, "chunk count must lie in [1, tokens]");
  }
  if (chunks == 1) {
    return ChunkSchedule{{tokens}};
  }

  const double tl = double(tokens);
  double lo = 0.0;
  double hi = model.attn_coeff * tl * tl + model.self_coeff * tl * tl / 2.0 +
              model.lin_coeff * tl + model.fixed_cost + 1.0;
  for (int iter = 0; iter < 200 && hi - lo > 0.0; ++iter) {
    const double mid = lo + (hi - lo) / 2.0;
    if (mid <= lo || mid >= hi) break;
    if (greedy_under(mid, tokens, chunks, model)) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  auto boundaries = greedy_under(hi, tokens, chunks, model);
  if (!boundaries) {
    fail(errkind::domain, "chunk cost search failed to converge");
  }

  // The walk may cover the tokens in fewer chunks; split the costliest
  // multi-token chunk until exactly `chunks` remain (splitting never raises
  // a chunk's cost).
  ChunkSchedule schedule{*boundaries};
  while (schedule.chunk_count() < chunks) {
    std::size_t best = schedule.chunk_count();
    double best_cost = -1.0;
    for (std::size_t c = 0; c < schedule.chunk_count(); ++c) {
      const auto [b, e] = schedule.chunk(c);
      if (e - b < 2) continue;
      const double cost = chunk_cost(model, e - b, b);
      if (cost > best_cost) {
        best_cost = cost;
        best = c;
      }
    }
    const auto [b, e] = schedule.chunk(best);
    schedule.boundaries.insert(schedule.boundaries.begin() + best, b + (e - b) / 2);
  }
  schedule.validate();
  return schedule;
}

EventTrace pipeline_simulate(const ChunkSchedule& schedule, std::size_t stages,
                             const CostModel& model,
                             std::span<const double> stage_weights) {
  schedule.validate();
  model.validate();
  if (stages == 0) fail(errkind::config, "pipeline needs at least one stage");
  if (!stage_weights.empty() && stage_weights.size() != stages) {
    fail(errkind::config, "stage weight count must equal stage count");
  }

  EventTrace trace;
  std::vector<double> stage_free(stages, 0.0);
  double prev_stage_end = 0.0;
  for (std::size_t c = 0; c < schedule.chunk_count(); ++c) {
    const auto [begin, end] = schedule.chunk(c);
    const double cost = chunk_cost(model, end - begin, begin);
    prev_stage_end = 0.0;
    for (std::size_t s = 0; s < stages; ++s) {
      const double share =
          stage_weights.empty() ? cost / double(stages) : cost * stage_weights[s];
      const double start = std::max(stage_free[s], prev_stage_end);
      const double finish = start + share;
      trace.events.push_back(StageEvent{s, c, start, finish});
      stage_free[s] = finish;
      prev_stage_end = finish;
    }
  }
  finish_trace(trace, stages);
  return trace;
}

void EngineTiming::validate() const {
  if (scheduler_time < 0 || model_runner_time < 0 || decoder_time < 0) {
    fail(errkind::config, "component times must be non-negative");
  }
  if (scheduler_time + model_runner_time + decoder_time <= 0) {
    fail(errkind::config, "at least one component must take time");
  }
  if (steps == 0) fail(errkind::config, "step count must be at least 1");
  if (hop_latency < 0) fail(errkind::config, "hop latency must be non-negative");
}

EngineSimResult tag_simulate(const EngineTiming& timing, EngineMode mode) {
  timing.validate();
  EngineSimResult result;
  result.per_step_latency.resize(timing.steps);

  double sched_free = 0.0;
  double runner_free = 0.0;
  double dec_free = 0.0;
  double prev_done = 0.0;
  for (std::size_t step = 0; step < timing.steps; ++step) {
    const double sched_start = mode == EngineMode::Serial
                                   ? std::max(sched_free, prev_done)
                                   : sched_free;
    const double sched_end = sched_start + timing.scheduler_time;
    sched_free = sched_end;

    const double runner_start = std::max(runner_free, sched_end + timing.hop_latency);
    const double runner_end = runner_start + timing.model_runner_time;
    runner_free = runner_end;

    const double dec_start = std::max(dec_free, runner_end + timing.hop_latency);
    const double dec_end = dec_start + timing.decoder_time;
    dec_free = dec_end;

    result.trace.events.push_back(StageEvent{0, step, sched_start, sched_end});
    result.trace.events.push_back(StageEvent{1, step, runner_start, runner_end});
    result.trace.events.push_back(StageEvent{2, step, dec_start, dec_end});

    result.per_step_latency[step] = dec_end - sched_start;
    result.steady_period = dec_end - prev_done;
    prev_done = dec_end;
  }
  result.total_time = prev_done;
  result.throughput = result.total_time > 0.0
                          ? double(timing.steps) / result.total_time
                          : 0.0;
  finish_trace(result.trace, 3);
  return result;
}

}  // namespace longctx
