#pragma once

#include <cstdint>

#include "longctx/attention.hpp"
#include "longctx/matrix.hpp"

namespace longctx {

/// Chunked relative-position remapping parameters.
///
/// chunk_size (s) divides the sequence into chunks, train_len (c) is one past
/// the largest relative position seen in training, local_window (w) is the
/// span over which remapped distances must equal true distances.
struct ChunkConfig {
  std::size_t chunk_size = 0;    // s
  std::size_t train_len = 0;     // c
  std::size_t local_window = 0;  // w

  /// local_window defaults to train_len - chunk_size, capped at chunk_size:
  /// the largest window the bound w <= min(s, c - s) permits.
  static ChunkConfig with_default_window(std::size_t chunk_size, std::size_t train_len);

  void validate() const;
};

enum class PatternKind { Intra, Successive, Inter };

/// Attention-temperature scaling for long inputs: the logit multiplier grows
/// with the ratio of inference length to training length.
struct YarnScale {
  double scale_factor = 1.0;
  double temperature = 1.0;

  static YarnScale from_scale(double scale_factor);
  void validate() const;
};

/// t(s) = 1 for s <= 1, else 1 / (0.1 ln(s) + 1)^2. Continuous at s = 1 and
/// strictly decreasing beyond it, so short inputs are untouched.
double yarn_temperature(double scale_factor);

/// Intra iff same chunk, Successive iff the query chunk immediately follows
/// the key chunk, Inter otherwise. Requires j <= i.
PatternKind classify_pair(std::size_t i, std::size_t j, const ChunkConfig& cfg);

/// Remapped relative position for the causal pair (i, j):
///   key position   j mod s
///   query position Intra: i mod s; Inter: c-1; Successive: min(i mod s + s, c-1)
/// Always in [0, c-1]; equals i-j whenever i-j <= w.
std::int64_t dca_relative(std::size_t i, std::size_t j, const ChunkConfig& cfg);

/// Lower-triangular matrix of dca_relative values for a length-n prefix.
RelPositionMatrix dca_position_matrix(std::size_t n, const ChunkConfig& cfg);

/// Extrapolation-ready attention: token index i is its rotary position, the
/// chunk remapping bounds every effective relative position below train_len,
/// and the yarn temperature is applied when scale_factor > 1. The input's
/// own positions and temperature are superseded by that derivation.
///
/// For n <= chunk_size with scale_factor <= 1 every pair is intra-chunk and
/// the remapping is the identity, so this takes the vanilla path and the
/// result is bit-identical to full_attention at positions 0..n-1.
AttentionResult dca_attention(const AttentionInput& input, const ChunkConfig& cfg,
                              const YarnScale& yarn);

}  // namespace longctx
