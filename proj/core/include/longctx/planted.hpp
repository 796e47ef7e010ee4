#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "longctx/attention.hpp"
#include "longctx/dca.hpp"

namespace longctx {

/// Recipe for an attention input with known-hot vertical columns and slash
/// diagonals over unit-scale background noise.
///
/// Queries are q_i = shared + query_noise * carrier_i where the shared
/// direction lives on rotation-robust frequency pairs and carrier_i is a
/// per-row random unit vector. A planted column v sets k_v = strength *
/// shared; a planted slash d adds strength * rotate(carrier_{j+d}, rel) to
/// each key j on the diagonal, where rel is the relative position the final
/// attention will use there (d, or the chunked remapping when dca is set).
/// That makes the line carry roughly `strength` logits wherever the position
/// geometry matches, which is what the selection stage has to rediscover.
struct PlantedSpec {
  std::size_t n = 256;
  std::size_t head_dim = 16;
  double rope_base = 10000.0;
  std::vector<std::size_t> vertical_columns;
  std::vector<std::size_t> slash_offsets;
  double strength = 10.0;
  /// Per-family overrides; zero means "use strength". Columns are
  /// rotation-coherent and tolerate large values; slash carriers cross-talk
  /// with the background at roughly strength/sqrt(head_dim) per planted
  /// line, so slash strength has a sweet spot that grows with head_dim.
  double vertical_strength = 0.0;
  double slash_strength = 0.0;
  double query_noise = 1.0;
  /// Weight of the shared direction inside each query; planted columns key
  /// on it, so it sets how coherent a vertical looks across rows.
  double shared_scale = 2.0;
  std::uint64_t seed = 0;
  /// Plant slash signals at the remapped relative positions of this config
  /// instead of the true distances.
  std::optional<ChunkConfig> dca;
  /// Restrict carriers to these frequency pairs (indices < head_dim/2);
  /// empty keeps them on the full complement of the shared pairs.
  std::vector<std::size_t> carrier_pairs;
};

AttentionInput make_planted_input(const PlantedSpec& spec);

}  // namespace longctx
