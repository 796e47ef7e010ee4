#include "longctx/dca.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "longctx/errors.hpp"

namespace longctx {

ChunkConfig ChunkConfig::with_default_window(std::size_t chunk_size,
                                             std::size_t train_len) {
  ChunkConfig cfg;
  cfg.chunk_size = chunk_size;
  cfg.train_len = train_len;
  cfg.local_window =
      std::min(chunk_size, train_len > chunk_size ? train_len - chunk_size : 0);
  cfg.validate();
  return cfg;
}

void ChunkConfig::validate() const {
  if (chunk_size == 0) fail(errkind::config, "chunkSize must be positive");
  if (train_len == 0) fail(errkind::config, "trainLen must be positive");
  if (chunk_size > train_len) fail(errkind::config, "chunkSize must not exceed trainLen");
  const std::size_t bound = std::min(chunk_size, train_len - chunk_size);
  if (local_window > bound) {
    fail(errkind::config, "localWindow must not exceed min(chunkSize, trainLen - chunkSize)");
  }
}

double yarn_temperature(double scale_factor) {
  if (!(scale_factor > 0.0)) fail(errkind::domain, "scale factor must be positive");
  if (scale_factor <= 1.0) return 1.0;
  const double root = 0.1 * std::log(scale_factor) + 1.0;
  return 1.0 / (root * root);
}

YarnScale YarnScale::from_scale(double scale_factor) {
  YarnScale y;
  y.scale_factor = scale_factor;
  y.temperature = yarn_temperature(scale_factor);
  return y;
}

void YarnScale::validate() const {
  if (!(scale_factor > 0.0)) fail(errkind::domain, "scale factor must be positive");
  if (temperature != yarn_temperature(scale_factor)) {
    fail(errkind::config, "temperature inconsistent with scale factor");
  }
}

PatternKind classify_pair(std::size_t i, std::size_t j, const ChunkConfig& cfg) {
  if (j > i) fail(errkind::causality, "classify_pair requires j <= i");
  const std::size_t qc = i / cfg.chunk_size;
  const std::size_t kc = j / cfg.chunk_size;
  if (qc == kc) return PatternKind::Intra;
  if (qc == kc + 1) return PatternKind::Successive;
  return PatternKind::Inter;
}

std::int64_t dca_relative(std::size_t i, std::size_t j, const ChunkConfig& cfg) {
  const PatternKind kind = classify_pair(i, j, cfg);
  const std::size_t s = cfg.chunk_size;
  const std::size_t c = cfg.train_len;
  const std::size_t key_pos = j % s;
  std::size_t query_pos = 0;
  switch (kind) {
    case PatternKind::Intra:
      query_pos = i % s;
      break;
    case PatternKind::Successive:
      query_pos = std::min(i % s + s, c - 1);
      break;
    case PatternKind::Inter:
      query_pos = c - 1;
      break;
  }
  return std::int64_t(query_pos) - std::int64_t(key_pos);
}

RelPositionMatrix dca_position_matrix(std::size_t n, const ChunkConfig& cfg) {
  cfg.validate();
  RelPositionMatrix rel(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      rel.at(i, j) = dca_relative(i, j, cfg);
    }
  }
  return rel;
}

AttentionResult dca_attention(const AttentionInput& input, const ChunkConfig& cfg,
                              const YarnScale& yarn) {
  cfg.validate();
  yarn.validate();
  const std::size_t n = input.seq_len();

  AttentionInput effective = input;
  effective.positions_q.resize(n);
  effective.positions_k.resize(n);
  std::iota(effective.positions_q.begin(), effective.positions_q.end(), 0);
  std::iota(effective.positions_k.begin(), effective.positions_k.end(), 0);
  effective.temperature = yarn.temperature;

  // Single chunk + no scaling: the remapping is the identity, so run the
  // vanilla rotation path (bit-identical to full_attention).
  if (n <= cfg.chunk_size && yarn.scale_factor <= 1.0) {
    return full_attention(effective);
  }
  const RelPositionMatrix rel = dca_position_matrix(n, cfg);
  return full_attention(effective, &rel);
}

}  // namespace longctx
