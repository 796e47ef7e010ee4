#include "longctx/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "longctx/errors.hpp"

namespace longctx {

namespace {

std::vector<std::size_t> top_lines(const std::vector<double>& scores, std::size_t count) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  order.resize(std::min(count, order.size()));
  return order;
}

void sort_unique(std::vector<std::size_t>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

}  // namespace

HeadBudget& SparsityPlan::at(std::size_t layer, std::size_t head) {
  return budgets[{layer, head}];
}

const HeadBudget& SparsityPlan::at(std::size_t layer, std::size_t head) const {
  auto it = budgets.find({layer, head});
  if (it == budgets.end()) {
    fail(errkind::config, "sparsity plan has no entry for layer " + std::to_string(layer) +
                              " head " + std::to_string(head));
  }
  return it->second;
}

nlohmann::json SparsityPlan::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [key, budget] : budgets) {
    const std::string name = std::to_string(key.first) + "." + std::to_string(key.second);
    j[name] = {{"vertical", budget.vertical}, {"slash", budget.slash}};
  }
  return j;
}

SparsityPlan SparsityPlan::from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail(errkind::schema, "sparsity plan must be a JSON object");
  SparsityPlan plan;
  for (const auto& [name, value] : j.items()) {
    const auto dot = name.find('.');
    if (dot == std::string::npos) {
      fail(errkind::schema, "sparsity plan key \"" + name + "\" is not \"layer.head\"");
    }
    std::size_t layer = 0, head = 0;
    try {
      layer = std::stoull(name.substr(0, dot));
      head = std::stoull(name.substr(dot + 1));
    } catch (const std::exception&) {
      fail(errkind::schema, "sparsity plan key \"" + name + "\" is not \"layer.head\"");
    }
    if (!value.is_object() || !value.contains("vertical") || !value.contains("slash")) {
      fail(errkind::schema, "sparsity plan entry \"" + name +
                                "\" must carry vertical and slash counts");
    }
    plan.budgets[{layer, head}] = HeadBudget{value.at("vertical").get<std::size_t>(),
                                             value.at("slash").get<std::size_t>()};
  }
  return plan;
}

bool CriticalSet::admits(std::size_t i, std::size_t j) const {
  if (std::binary_search(verticals.begin(), verticals.end(), j)) return true;
  return j <= i && std::binary_search(slashes.begin(), slashes.end(), i - j);
}

std::vector<std::size_t> CriticalSet::admitted_row(std::size_t i) const {
  std::vector<std::size_t> from_slashes;
  from_slashes.reserve(slashes.size());
  for (auto it = slashes.rbegin(); it != slashes.rend(); ++it) {
    if (*it <= i) from_slashes.push_back(i - *it);  // descending offsets -> ascending j
  }
  std::vector<std::size_t> merged;
  merged.reserve(from_slashes.size() + verticals.size());
  auto vit = verticals.begin();
  auto sit = from_slashes.begin();
  while (vit != verticals.end() && *vit <= i && sit != from_slashes.end()) {
    const std::size_t v = *vit, s = *sit;
    if (v == s) {
      merged.push_back(v);
      ++vit;
      ++sit;
    } else if (v < s) {
      merged.push_back(v);
      ++vit;
    } else {
      merged.push_back(s);
      ++sit;
    }
  }
  for (; vit != verticals.end() && *vit <= i; ++vit) merged.push_back(*vit);
  for (; sit != from_slashes.end(); ++sit) merged.push_back(*sit);
  if (merged.empty()) merged.push_back(i);  // self fallback
  return merged;
}

std::size_t CriticalSet::admitted_count() const {
  std::size_t count = 0;
  for (std::size_t i = 0; i < context_length; ++i) count += admitted_row(i).size();
  return count;
}

nlohmann::json CriticalSet::to_json() const {
  return {{"contextLength", context_length},
          {"verticals", verticals},
          {"slashes", slashes}};
}

CriticalSet CriticalSet::from_json(const nlohmann::json& j) {
  CriticalSet crit;
  crit.context_length = j.at("contextLength").get<std::size_t>();
  crit.verticals = j.at("verticals").get<std::vector<std::size_t>>();
  crit.slashes = j.at("slashes").get<std::vector<std::size_t>>();
  sort_unique(crit.verticals);
  sort_unique(crit.slashes);
  return crit;
}

std::int64_t selection_position(std::size_t i, std::size_t j, const ChunkConfig& cfg) {
  if (j > i) fail(errkind::causality, "selection_position requires j <= i");
  return std::min<std::int64_t>(std::int64_t(i - j), std::int64_t(cfg.train_len) - 1);
}

Matrix estimate_block(const Matrix& q, const Matrix& k, std::size_t last_q,
                      PositionMode mode, const std::optional<ChunkConfig>& cfg,
                      double rope_base) {
  if (last_q == 0) fail(errkind::config, "lastQ must be positive");
  if (q.cols != k.cols) fail(errkind::dimension, "query/key dimensions differ");
  if (q.cols == 0 || q.cols % 2 != 0) fail(errkind::config, "head dimension must be even");
  if (q.rows == 0 || k.rows == 0) fail(errkind::dimension, "empty query or key matrix");
  if (q.rows > k.rows) {
    fail(errkind::dimension, "queries must be the trailing rows of the key timeline");
  }
  if (mode == PositionMode::DcaContinuous && !cfg) {
    fail(errkind::config, "dcaContinuous estimation requires a chunk config");
  }

  const std::size_t dim = q.cols;
  const std::size_t block = std::min(last_q, q.rows);
  const std::size_t offset = k.rows - q.rows;  // queries trail the key timeline
  const double inv_scale = 1.0 / std::sqrt(double(dim));
  const auto thetas = detail::rope_thetas(dim, rope_base);

  Matrix est(block, k.rows);
  std::vector<double> logits(k.rows);
  std::vector<double> q_rot(dim);
  for (std::size_t r = 0; r < block; ++r) {
    const std::size_t qrow = q.rows - block + r;
    const std::size_t gi = offset + qrow;
    for (std::size_t j = 0; j <= gi; ++j) {
      std::int64_t rel = std::int64_t(gi - j);
      if (mode == PositionMode::DcaContinuous) {
        rel = std::min<std::int64_t>(rel, std::int64_t(cfg->train_len) - 1);
      }
      detail::rope_rotate_row(q.row(qrow), rel, thetas, q_rot);
      double acc = 0.0;
      const auto kr = k.row(j);
      for (std::size_t d = 0; d < dim; ++d) acc += q_rot[d] * kr[d];
      logits[j] = acc * inv_scale;
    }
    double row_max = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j <= gi; ++j) row_max = std::max(row_max, logits[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j <= gi; ++j) sum += std::exp(logits[j] - row_max);
    for (std::size_t j = 0; j <= gi; ++j) {
      est.at(r, j) = std::exp(logits[j] - row_max) / sum;
    }
  }
  return est;
}

CriticalSet select_critical(const Matrix& est, HeadBudget budget, std::size_t n,
                            const SelectionOptions& opts) {
  if (est.cols != n) fail(errkind::dimension, "estimation block must have n columns");
  if (est.rows == 0 || est.rows > n) {
    fail(errkind::dimension, "estimation block row count out of range");
  }
  const std::size_t block = est.rows;

  std::vector<double> col_score(n, 0.0);
  std::vector<double> slash_sum(n, 0.0);
  std::vector<std::size_t> slash_cnt(n, 0);
  for (std::size_t r = 0; r < block; ++r) {
    const std::size_t gi = n - block + r;
    for (std::size_t j = 0; j <= gi; ++j) {
      const double w = est.at(r, j);
      col_score[j] += w;
      slash_sum[gi - j] += w;
      slash_cnt[gi - j] += 1;
    }
  }
  std::vector<double> slash_score(n, 0.0);
  for (std::size_t d = 0; d < n; ++d) {
    if (slash_cnt[d] == 0) {
      slash_score[d] = -std::numeric_limits<double>::infinity();
    } else {
      slash_score[d] = opts.slash_mean ? slash_sum[d] / double(slash_cnt[d]) : slash_sum[d];
    }
  }

  CriticalSet crit;
  crit.context_length = n;
  crit.verticals = top_lines(col_score, budget.vertical);
  crit.slashes = top_lines(slash_score, budget.slash);
  if (opts.force_sink_column) crit.verticals.push_back(0);
  if (opts.force_local_band) {
    for (std::size_t d = 0; d < block; ++d) crit.slashes.push_back(d);
  }
  sort_unique(crit.verticals);
  sort_unique(crit.slashes);
  return crit;
}

AttentionResult sparse_attention(const AttentionInput& input, const CriticalSet& crit,
                                 const RelPositionMatrix* rel_override) {
  input.validate();
  const std::size_t n = input.seq_len();
  const std::size_t dim = input.head_dim();
  if (crit.context_length != n) {
    fail(errkind::dimension, "critical set context length must equal n");
  }
  if (rel_override && rel_override->n != n) {
    fail(errkind::dimension, "relative-position override must be n x n");
  }

  const double inv_scale = 1.0 / (input.temperature * std::sqrt(double(dim)));
  const auto thetas = detail::rope_thetas(dim, input.rope_base);

  AttentionResult result;
  result.output = Matrix(n, dim);
  result.lse.resize(n);

  std::vector<double> logits(n);
  std::vector<double> q_rot(dim);

  if (rel_override == nullptr) {
    const Matrix qr = rope_apply(input.q, input.positions_q, input.rope_base);
    const Matrix kr = rope_apply(input.k, input.positions_k, input.rope_base);
    for (std::size_t i = 0; i < n; ++i) {
      const auto admitted = crit.admitted_row(i);
      for (std::size_t j : admitted) {
        double acc = 0.0;
        const auto qrow = qr.row(i);
        const auto krow = kr.row(j);
        for (std::size_t d = 0; d < dim; ++d) acc += qrow[d] * krow[d];
        logits[j] = acc * inv_scale;
      }
      result.lse[i] =
          detail::attend_admitted(logits, admitted, input.v, result.output.row(i));
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const auto admitted = crit.admitted_row(i);
      for (std::size_t j : admitted) {
        detail::rope_rotate_row(input.q.row(i), rel_override->at(i, j), thetas, q_rot);
        double acc = 0.0;
        const auto krow = input.k.row(j);
        for (std::size_t d = 0; d < dim; ++d) acc += q_rot[d] * krow[d];
        logits[j] = acc * inv_scale;
      }
      result.lse[i] =
          detail::attend_admitted(logits, admitted, input.v, result.output.row(i));
    }
  }
  return result;
}

double density(const CriticalSet& crit) {
  const std::size_t n = crit.context_length;
  if (n == 0) fail(errkind::dimension, "critical set has no context");
  const double dense = double(n) * double(n + 1) / 2.0;
  return double(crit.admitted_count()) / dense;
}

PrefillResult chunked_prefill(const AttentionInput& input, std::size_t chunk_len,
                              std::size_t last_q, HeadBudget budget, PrefillMode mode,
                              PositionMode pos_mode,
                              const std::optional<ChunkConfig>& cfg,
                              const SelectionOptions& opts) {
  input.validate();
  if (chunk_len == 0) fail(errkind::config, "chunkLen must be positive");
  if (last_q == 0) fail(errkind::config, "lastQ must be positive");
  if (mode == PrefillMode::Sparse && chunk_len < last_q) {
    fail(errkind::config, "sparse prefill requires chunkLen >= lastQ");
  }
  const bool dca = pos_mode == PositionMode::DcaContinuous;
  if (dca) {
    if (!cfg) fail(errkind::config, "dcaContinuous prefill requires a chunk config");
    cfg->validate();
  }

  const std::size_t n = input.seq_len();
  const std::size_t dim = input.head_dim();
  const double inv_scale = 1.0 / (input.temperature * std::sqrt(double(dim)));
  const auto thetas = detail::rope_thetas(dim, input.rope_base);

  PrefillResult pr;
  pr.state.chunk_len = chunk_len;
  pr.state.last_q = last_q;
  pr.state.cached_k = Matrix(0, dim);
  pr.state.cached_v = Matrix(0, dim);
  pr.result.output = Matrix(n, dim);
  pr.result.lse.resize(n);

  // Rotated query/key rows for the standard-position path. Keys are rotated
  // once as they enter the cache, exactly as the one-shot path rotates them.
  Matrix q_rotated;
  Matrix k_rotated;
  if (!dca) {
    q_rotated = rope_apply(input.q, input.positions_q, input.rope_base);
    k_rotated = Matrix(n, dim);
  }

  std::vector<double> logits(n);
  std::vector<double> q_rot(dim);
  std::vector<std::size_t> all_admitted(n);
  std::iota(all_admitted.begin(), all_admitted.end(), 0);

  std::size_t chunk_index = 0;
  for (std::size_t t0 = 0; t0 < n; t0 += chunk_len, ++chunk_index) {
    const std::size_t t1 = std::min(n, t0 + chunk_len);

    // Extend the KV cache with this chunk.
    pr.state.cached_k.values.insert(pr.state.cached_k.values.end(),
                                    input.k.values.begin() + t0 * dim,
                                    input.k.values.begin() + t1 * dim);
    pr.state.cached_v.values.insert(pr.state.cached_v.values.end(),
                                    input.v.values.begin() + t0 * dim,
                                    input.v.values.begin() + t1 * dim);
    pr.state.cached_k.rows = t1;
    pr.state.cached_v.rows = t1;
    if (!dca) {
      for (std::size_t j = t0; j < t1; ++j) {
        detail::rope_rotate_row(input.k.row(j), input.positions_k[j], thetas,
                                k_rotated.row(j));
      }
    }

    CriticalSet crit;
    if (mode == PrefillMode::Sparse) {
      Matrix q_chunk(t1 - t0, dim);
      std::copy(input.q.values.begin() + t0 * dim, input.q.values.begin() + t1 * dim,
                q_chunk.values.begin());
      const Matrix est = estimate_block(q_chunk, pr.state.cached_k, last_q, pos_mode,
                                        cfg, input.rope_base);
      crit = select_critical(est, budget, t1, opts);
      pr.state.selections.push_back(ChunkSelection{chunk_index, t0, t1, crit});
    }

    for (std::size_t i = t0; i < t1; ++i) {
      std::vector<std::size_t> admitted_storage;
      std::span<const std::size_t> admitted;
      if (mode == PrefillMode::Full) {
        admitted = std::span(all_admitted.data(), i + 1);
      } else {
        admitted_storage = crit.admitted_row(i);
        admitted = admitted_storage;
      }
      if (!dca) {
        const auto qrow = q_rotated.row(i);
        for (std::size_t j : admitted) {
          double acc = 0.0;
          const auto krow = k_rotated.row(j);
          for (std::size_t d = 0; d < dim; ++d) acc += qrow[d] * krow[d];
          logits[j] = acc * inv_scale;
        }
      } else {
        for (std::size_t j : admitted) {
          detail::rope_rotate_row(input.q.row(i), dca_relative(i, j, *cfg), thetas, q_rot);
          double acc = 0.0;
          const auto krow = pr.state.cached_k.row(j);
          for (std::size_t d = 0; d < dim; ++d) acc += q_rot[d] * krow[d];
          logits[j] = acc * inv_scale;
        }
      }
      pr.result.lse[i] =
          detail::attend_admitted(logits, admitted, input.v, pr.result.output.row(i));
    }
  }
  return pr;
}

}  // namespace longctx
