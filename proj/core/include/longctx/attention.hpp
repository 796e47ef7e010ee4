#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "longctx/matrix.hpp"

namespace longctx {

inline constexpr double kDefaultRopeBase = 10000.0;

/// Single-head attention inputs. All three matrices are n x D with D even;
/// positions are per-row rotary positions for Q and K respectively.
struct AttentionInput {
  Matrix q;
  Matrix k;
  Matrix v;
  std::vector<std::int64_t> positions_q;
  std::vector<std::int64_t> positions_k;
  double rope_base = kDefaultRopeBase;
  double temperature = 1.0;

  std::size_t seq_len() const { return q.rows; }
  std::size_t head_dim() const { return q.cols; }

  /// Throws Error on any violated invariant (shape, parity, finiteness,
  /// negative positions, non-positive base/temperature).
  void validate() const;
};

struct AttentionResult {
  Matrix output;            // n x D
  std::vector<double> lse;  // per query: log sum of exp(logit) over its key set
};

/// Rotates row r by angle positions[r] * base^(-2d/D) on each dimension pair
/// (2d, 2d+1). Rotation is orthogonal, so row norms are preserved.
Matrix rope_apply(const Matrix& vectors, std::span<const std::int64_t> positions,
                  double base);

struct SoftmaxRows {
  Matrix probs;
  std::vector<double> lse;
};

/// Numerically stable row softmax over the unmasked entries. Masked entries
/// come out exactly 0; every row must have at least one unmasked entry.
SoftmaxRows stable_softmax_rows(const Matrix& scores, const BoolMatrix& mask);

/// Causal dense attention with per-query lse output.
///
/// Without rel_override, Q and K rows are rotated by their own positions and
/// logit(i,j) = dot(q_i, k_j) / (temperature * sqrt(D)). With rel_override,
/// entry (i,j) instead rotates q_i by rel_override(i,j) against the unrotated
/// k_j; positions_q/positions_k are ignored on that path.
AttentionResult full_attention(const AttentionInput& input,
                               const RelPositionMatrix* rel_override = nullptr);

/// Same contract computed in 32-bit arithmetic (inputs/outputs stay double).
/// Verification tolerances apply to the 64-bit path only.
AttentionResult full_attention_f32(const AttentionInput& input,
                                   const RelPositionMatrix* rel_override = nullptr);

/// Proportional score-plus-value work for a causal attention computing only
/// `computed_entries` score entries: 2 * entries * D multiply-adds.
double flop_estimate(std::size_t n, std::size_t head_dim,
                     std::size_t computed_entries);

/// GQA grouping only constrains head counts; the per-head math is unchanged.
void check_gqa_grouping(std::size_t query_heads, std::size_t kv_heads);

namespace detail {

/// Per-pair rotation angles theta_d = base^(-2d/D) for d = 0..D/2-1.
std::vector<double> rope_thetas(std::size_t head_dim, double base);

/// Rotates one row by position * theta_d per pair, writing into out.
void rope_rotate_row(std::span<const double> row, std::int64_t position,
                     std::span<const double> thetas, std::span<double> out);

/// Softmax over logits[idx] for idx in admitted (ascending); accumulates
/// probability-weighted V rows into out_row (ascending key order) and
/// returns the row lse. admitted must be non-empty.
double attend_admitted(std::span<const double> logits,
                       std::span<const std::size_t> admitted, const Matrix& v,
                       std::span<double> out_row);

}  // namespace detail

}  // namespace longctx
