#include "longctx/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "longctx/errors.hpp"

namespace longctx {

namespace detail {

std::vector<double> rope_thetas(std::size_t head_dim, double base) {
  std::vector<double> thetas(head_dim / 2);
  for (std::size_t p = 0; p < thetas.size(); ++p) {
    thetas[p] = std::pow(base, -double(2 * p) / double(head_dim));
  }
  return thetas;
}

void rope_rotate_row(std::span<const double> row, std::int64_t position,
                     std::span<const double> thetas, std::span<double> out) {
  for (std::size_t p = 0; p < thetas.size(); ++p) {
    const double angle = double(position) * thetas[p];
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    const double x = row[2 * p];
    const double y = row[2 * p + 1];
    out[2 * p] = x * c - y * s;
    out[2 * p + 1] = x * s + y * c;
  }
}

double attend_admitted(std::span<const double> logits,
                       std::span<const std::size_t> admitted, const Matrix& v,
                       std::span<double> out_row) {
  double row_max = -std::numeric_limits<double>::infinity();
  for (std::size_t j : admitted) row_max = std::max(row_max, logits[j]);

  double sum = 0.0;
  for (std::size_t j : admitted) sum += std::exp(logits[j] - row_max);

  std::fill(out_row.begin(), out_row.end(), 0.0);
  for (std::size_t j : admitted) {
    const double w = std::exp(logits[j] - row_max) / sum;
    const auto vr = v.row(j);
    for (std::size_t d = 0; d < out_row.size(); ++d) out_row[d] += w * vr[d];
  }
  return row_max + std::log(sum);
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) acc += a[d] * b[d];
  return acc;
}

float dot_f32(std::span<const float> a, std::span<const float> b) {
  float acc = 0.0f;
  for (std::size_t d = 0; d < a.size(); ++d) acc += a[d] * b[d];
  return acc;
}

}  // namespace
}  // namespace detail

void AttentionInput::validate() const {
  const std::size_t n = q.rows;
  const std::size_t dim = q.cols;
  if (k.rows != n || v.rows != n || k.cols != dim || v.cols != dim) {
    fail(errkind::dimension, "attention input matrices must share n and D");
  }
  if (n == 0) fail(errkind::dimension, "attention input must have at least one row");
  if (dim == 0 || dim % 2 != 0) {
    fail(errkind::config, "head dimension must be even and positive (rope pairs)");
  }
  if (positions_q.size() != n || positions_k.size() != n) {
    fail(errkind::dimension, "positions length must equal row count");
  }
  for (std::int64_t p : positions_q) {
    if (p < 0) fail(errkind::domain, "query positions must be non-negative");
  }
  for (std::int64_t p : positions_k) {
    if (p < 0) fail(errkind::domain, "key positions must be non-negative");
  }
  if (!(rope_base > 0.0)) fail(errkind::domain, "rope base must be positive");
  if (!(temperature > 0.0)) fail(errkind::domain, "temperature must be positive");
  if (!q.all_finite() || !k.all_finite() || !v.all_finite()) {
    fail(errkind::domain, "attention input values must be finite");
  }
}

Matrix rope_apply(const Matrix& vectors, std::span<const std::int64_t> positions,
                  double base) {
  if (positions.size() != vectors.rows) {
    fail(errkind::dimension, "positions length must equal row count");
  }
  if (vectors.cols % 2 != 0) {
    fail(errkind::config, "rope requires an even dimension count");
  }
  const auto thetas = detail::rope_thetas(vectors.cols, base);
  Matrix out(vectors.rows, vectors.cols);
  for (std::size_t i = 0; i < vectors.rows; ++i) {
    detail::rope_rotate_row(vectors.row(i), positions[i], thetas, out.row(i));
  }
  return out;
}

SoftmaxRows stable_softmax_rows(const Matrix& scores, const BoolMatrix& mask) {
  if (mask.rows != scores.rows || mask.cols != scores.cols) {
    fail(errkind::dimension, "mask shape must match scores");
  }
  SoftmaxRows result;
  result.probs = Matrix(scores.rows, scores.cols);
  result.lse.resize(scores.rows);
  for (std::size_t i = 0; i < scores.rows; ++i) {
    double row_max = -std::numeric_limits<double>::infinity();
    std::size_t unmasked = 0;
    for (std::size_t j = 0; j < scores.cols; ++j) {
      if (!mask.at(i, j)) continue;
      row_max = std::max(row_max, scores.at(i, j));
      ++unmasked;
    }
    if (unmasked == 0) {
      fail(errkind::empty_row, "softmax row " + std::to_string(i) + " is fully masked");
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < scores.cols; ++j) {
      if (mask.at(i, j)) sum += std::exp(scores.at(i, j) - row_max);
    }
    for (std::size_t j = 0; j < scores.cols; ++j) {
      result.probs.at(i, j) = mask.at(i, j) ? std::exp(scores.at(i, j) - row_max) / sum : 0.0;
    }
    result.lse[i] = row_max + std::log(sum);
  }
  return result;
}

AttentionResult full_attention(const AttentionInput& input,
                               const RelPositionMatrix* rel_override) {
  input.validate();
  const std::size_t n = input.seq_len();
  const std::size_t dim = input.head_dim();
  if (rel_override && rel_override->n != n) {
    fail(errkind::dimension, "relative-position override must be n x n");
  }

  const double inv_scale = 1.0 / (input.temperature * std::sqrt(double(dim)));
  const auto thetas = detail::rope_thetas(dim, input.rope_base);

  AttentionResult result;
  result.output = Matrix(n, dim);
  result.lse.resize(n);

  std::vector<double> logits(n);
  std::vector<std::size_t> admitted(n);
  std::vector<double> q_rot(dim);

  if (rel_override == nullptr) {
    const Matrix qr = rope_apply(input.q, input.positions_q, input.rope_base);
    const Matrix kr = rope_apply(input.k, input.positions_k, input.rope_base);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j <= i; ++j) {
        logits[j] = detail::dot(qr.row(i), kr.row(j)) * inv_scale;
        admitted[j] = j;
      }
      result.lse[i] = detail::attend_admitted(
          logits, std::span(admitted.data(), i + 1), input.v, result.output.row(i));
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j <= i; ++j) {
        detail::rope_rotate_row(input.q.row(i), rel_override->at(i, j), thetas, q_rot);
        logits[j] = detail::dot(q_rot, input.k.row(j)) * inv_scale;
        admitted[j] = j;
      }
      result.lse[i] = detail::attend_admitted(
          logits, std::span(admitted.data(), i + 1), input.v, result.output.row(i));
    }
  }
  return result;
}

AttentionResult full_attention_f32(const AttentionInput& input,
                                   const RelPositionMatrix* rel_override) {
  input.validate();
  const std::size_t n = input.seq_len();
  const std::size_t dim = input.head_dim();
  if (rel_override && rel_override->n != n) {
    fail(errkind::dimension, "relative-position override must be n x n");
  }

  const float inv_scale = 1.0f / (float(input.temperature) * std::sqrt(float(dim)));
  std::vector<float> thetas(dim / 2);
  for (std::size_t p = 0; p < thetas.size(); ++p) {
    thetas[p] = std::pow(float(input.rope_base), -float(2 * p) / float(dim));
  }

  auto rotate = [&](std::span<const double> row, std::int64_t pos, std::span<float> out) {
    for (std::size_t p = 0; p < thetas.size(); ++p) {
      const float angle = float(pos) * thetas[p];
      const float c = std::cos(angle);
      const float s = std::sin(angle);
      const float x = float(row[2 * p]);
      const float y = float(row[2 * p + 1]);
      out[2 * p] = x * c - y * s;
      out[2 * p + 1] = x * s + y * c;
    }
  };

  std::vector<float> kr;
  if (rel_override == nullptr) {
    kr.resize(n * dim);
    for (std::size_t j = 0; j < n; ++j) {
      rotate(input.k.row(j), input.positions_k[j], std::span(kr.data() + j * dim, dim));
    }
  }

  AttentionResult result;
  result.output = Matrix(n, dim);
  result.lse.resize(n);

  std::vector<float> logits(n);
  std::vector<float> q_rot(dim);
  std::vector<float> k_raw(dim);
  for (std::size_t i = 0; i < n; ++i) {
    if (rel_override == nullptr) {
      rotate(input.q.row(i), input.positions_q[i], q_rot);
      for (std::size_t j = 0; j <= i; ++j) {
        logits[j] = detail::dot_f32(q_rot, std::span<const float>(kr.data() + j * dim, dim)) *
                    inv_scale;
      }
    } else {
      for (std::size_t j = 0; j <= i; ++j) {
        rotate(input.q.row(i), rel_override->at(i, j), q_rot);
        for (std::size_t d = 0; d < dim; ++d) k_raw[d] = float(input.k.at(j, d));
        logits[j] = detail::dot_f32(q_rot, k_raw) * inv_scale;
      }
    }
    float row_max = -std::numeric_limits<float>::infinity();
    for (std::size_t j = 0; j <= i; ++j) row_max = std::max(row_max, logits[j]);
    float sum = 0.0f;
    for (std::size_t j = 0; j <= i; ++j) sum += std::exp(logits[j] - row_max);
    auto out = result.output.row(i);
    for (std::size_t j = 0; j <= i; ++j) {
      const float w = std::exp(logits[j] - row_max) / sum;
      for (std::size_t d = 0; d < dim; ++d) out[d] += double(w * float(input.v.at(j, d)));
    }
    result.lse[i] = double(row_max + std::log(sum));
  }
  return result;
}

double flop_estimate(std::size_t n, std::size_t head_dim,
                     std::size_t computed_entries) {
  const std::size_t dense = n * (n + 1) / 2;
  if (computed_entries > dense) {
    fail(errkind::domain, "computed entries exceed the causal entry count");
  }
  return 2.0 * double(computed_entries) * double(head_dim);
}

void check_gqa_grouping(std::size_t query_heads, std::size_t kv_heads) {
  if (query_heads == 0 || kv_heads == 0) {
    fail(errkind::config, "head counts must be positive");
  }
  if (query_heads % kv_heads != 0) {
    fail(errkind::config, "query-head count must be divisible by kv-head count");
  }
}

}  // namespace longctx
