#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "longctx/attention.hpp"
#include "longctx/dca.hpp"
#include "longctx/matrix.hpp"

namespace longctx {

struct HeadBudget {
  std::size_t vertical = 0;
  std::size_t slash = 0;

  std::size_t total() const { return vertical + slash; }
  bool operator==(const HeadBudget&) const = default;
};

/// Per-(layer, head) budgets. Serialized as {"layer.head": {"vertical": v,
/// "slash": s}}.
struct SparsityPlan {
  std::map<std::pair<std::size_t, std::size_t>, HeadBudget> budgets;

  HeadBudget& at(std::size_t layer, std::size_t head);
  const HeadBudget& at(std::size_t layer, std::size_t head) const;

  nlohmann::json to_json() const;
  static SparsityPlan from_json(const nlohmann::json& j);
};

/// Selected key columns and diagonal offsets over a fixed context length.
/// Entry (i, j) is admitted iff j is a selected column or i - j a selected
/// offset.
struct CriticalSet {
  std::vector<std::size_t> verticals;  // sorted unique column indices
  std::vector<std::size_t> slashes;    // sorted unique diagonal offsets
  std::size_t context_length = 0;

  bool admits(std::size_t i, std::size_t j) const;

  /// Ascending admitted key indices for query row i (never empty: falls back
  /// to the self entry when no line covers the row).
  std::vector<std::size_t> admitted_row(std::size_t i) const;

  /// Exact count of admitted causal entries, including per-row fallbacks.
  std::size_t admitted_count() const;

  nlohmann::json to_json() const;
  static CriticalSet from_json(const nlohmann::json& j);

  bool operator==(const CriticalSet&) const = default;
};

/// Position handling during score estimation. Standard uses true token
/// distances; DcaContinuous clamps them to min(i - j, train_len - 1) so every
/// diagonal sees one constant position.
enum class PositionMode { Standard, DcaContinuous };

struct SelectionOptions {
  bool force_sink_column = true;  // always admit column 0
  bool force_local_band = true;   // always admit offsets [0, block rows)
  bool slash_mean = true;         // mean (not sum) over a diagonal's entries
};

/// Causal softmaxed attention weights of the trailing min(last_q, q.rows)
/// query rows against all keys. Query rows are the trailing positions of the
/// key timeline: row r of the result is query index k.rows - block + r.
Matrix estimate_block(const Matrix& q, const Matrix& k, std::size_t last_q,
                      PositionMode mode, const std::optional<ChunkConfig>& cfg,
                      double rope_base = kDefaultRopeBase);

/// Top-budget columns and diagonal offsets by estimated weight; ties break
/// toward the smaller index. Forced inclusions per opts are added on top of
/// the budget. est must have n columns.
CriticalSet select_critical(const Matrix& est, HeadBudget budget, std::size_t n,
                            const SelectionOptions& opts = {});

/// Attention restricted to the critical set: excluded entries contribute to
/// neither the normalization nor the value sum, and lse is the sparse
/// log-sum-exp. rel_override has the same meaning as in full_attention.
AttentionResult sparse_attention(const AttentionInput& input, const CriticalSet& crit,
                                 const RelPositionMatrix* rel_override = nullptr);

/// Clamped relative position used only while selecting critical tokens; the
/// final attention keeps the remapped (non-continuous) positions.
std::int64_t selection_position(std::size_t i, std::size_t j, const ChunkConfig& cfg);

/// Admitted causal entries divided by n(n+1)/2.
double density(const CriticalSet& crit);

enum class PrefillMode { Full, Sparse };

struct ChunkSelection {
  std::size_t chunk_index = 0;
  std::size_t begin = 0;  // first token of the chunk
  std::size_t end = 0;    // one past the last token
  CriticalSet critical;
};

/// KV cache and per-chunk selection log of one prefill pass.
struct PrefillState {
  Matrix cached_k;  // raw (unrotated) rows, one per processed token
  Matrix cached_v;
  std::vector<ChunkSelection> selections;  // sparse mode only
  std::size_t chunk_len = 0;
  std::size_t last_q = 0;
};

struct PrefillResult {
  AttentionResult result;
  PrefillState state;
};

/// Processes the input in sequential chunks against the growing KV cache.
/// Sparse mode estimates from each chunk's trailing last_q rows and selects a
/// fresh critical set over all cached keys; full mode reproduces the one-shot
/// result. With PositionMode::DcaContinuous the final attention uses the
/// chunked remapping from cfg while selection uses clamped distances.
PrefillResult chunked_prefill(const AttentionInput& input, std::size_t chunk_len,
                              std::size_t last_q, HeadBudget budget, PrefillMode mode,
                              PositionMode pos_mode,
                              const std::optional<ChunkConfig>& cfg,
                              const SelectionOptions& opts = {});

}  // namespace longctx
