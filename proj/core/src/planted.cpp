#include "longctx/planted.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "longctx/errors.hpp"

namespace longctx {

namespace {


std::vector<double> random_unit(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> v(dim);
  double norm2 = 0.0;
  do {
    norm2 = 0.0;
    for (auto& x : v) {
      x = gauss(rng);
      norm2 += x * x;
    }
  } while (norm2 == 0.0);
  const double inv = 1.0 / std::sqrt(norm2);
  for (auto& x : v) x *= inv;
  return v;
}

}  // namespace

AttentionInput make_planted_input(const PlantedSpec& spec) {
  const std::size_t n = spec.n;
  const std::size_t dim = spec.head_dim;
  if (n == 0 || dim == 0 || dim % 2 != 0) {
    fail(errkind::config, "planted input needs n >= 1 and an even head dimension");
  }
  for (std::size_t p : spec.carrier_pairs) {
    if (p >= dim / 2) fail(errkind::config, "carrier pair index out of range");
  }
  for (std::size_t v : spec.vertical_columns) {
    if (v >= n) fail(errkind::config, "planted column index out of range");
  }
  for (std::size_t d : spec.slash_offsets) {
    if (d >= n) fail(errkind::config, "planted slash offset out of range");
  }
  if (spec.dca) spec.dca->validate();

  std::mt19937_64 rng(spec.seed);
  const auto thetas = detail::rope_thetas(dim, spec.rope_base);

  // Shared direction on pairs whose rotation stays small across the context.
  // Carriers live on the complementary pairs, so the two signal families are
  // exactly orthogonal under any rotation (rotations never mix pairs).
  std::vector<std::size_t> shared_pairs;
  for (std::size_t p = 1; p < thetas.size(); ++p) {
    if (thetas[p] * double(n) <= 0.5) shared_pairs.push_back(p);
  }
  if (shared_pairs.empty()) shared_pairs.push_back(thetas.size() - 1);
  std::vector<std::size_t> carrier_pairs = spec.carrier_pairs;
  if (carrier_pairs.empty()) {
    for (std::size_t p = 0; p < thetas.size(); ++p) {
      if (std::find(shared_pairs.begin(), shared_pairs.end(), p) == shared_pairs.end()) {
        carrier_pairs.push_back(p);
      }
    }
  }
  if (carrier_pairs.empty()) {
    fail(errkind::config, "head dimension too small to split signal frequencies");
  }

  std::vector<double> shared(dim, 0.0);
  {
    std::normal_distribution<double> gauss(0.0, 1.0);
    double norm2 = 0.0;
    for (std::size_t p : shared_pairs) {
      shared[2 * p] = gauss(rng);
      shared[2 * p + 1] = gauss(rng);
      norm2 += shared[2 * p] * shared[2 * p] + shared[2 * p + 1] * shared[2 * p + 1];
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (auto& x : shared) x *= inv;
  }

  // Per-row carriers.
  std::vector<std::vector<double>> carrier(n);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> u(dim, 0.0);
    double norm2 = 0.0;
    for (std::size_t p : carrier_pairs) {
      u[2 * p] = gauss(rng);
      u[2 * p + 1] = gauss(rng);
      norm2 += u[2 * p] * u[2 * p] + u[2 * p + 1] * u[2 * p + 1];
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (auto& x : u) x *= inv;
    carrier[i] = std::move(u);
  }

  AttentionInput input;
  input.q = Matrix(n, dim);
  input.k = Matrix(n, dim);
  input.v = Matrix(n, dim);
  input.rope_base = spec.rope_base;
  input.temperature = 1.0;
  input.positions_q.resize(n);
  input.positions_k.resize(n);
  std::iota(input.positions_q.begin(), input.positions_q.end(), 0);
  std::iota(input.positions_k.begin(), input.positions_k.end(), 0);

  for (std::size_t i = 0; i < n; ++i) {
    auto qrow = input.q.row(i);
    for (std::size_t d = 0; d < dim; ++d) {
      qrow[d] = spec.shared_scale * shared[d] + spec.query_noise * carrier[i][d];
    }
    const auto bg = random_unit(rng, dim);
    auto krow = input.k.row(i);
    for (std::size_t d = 0; d < dim; ++d) krow[d] = bg[d];
    const auto val = random_unit(rng, dim);
    auto vrow = input.v.row(i);
    for (std::size_t d = 0; d < dim; ++d) vrow[d] = val[d];
  }

  const double slash_strength =
      spec.slash_strength > 0.0 ? spec.slash_strength : spec.strength;
  const double vertical_strength =
      spec.vertical_strength > 0.0 ? spec.vertical_strength : spec.strength;

  std::vector<double> rotated(dim);
  for (std::size_t offset : spec.slash_offsets) {
    for (std::size_t j = 0; j + offset < n; ++j) {
      const std::size_t i = j + offset;
      const std::int64_t rel =
          spec.dca ? dca_relative(i, j, *spec.dca) : std::int64_t(offset);
      detail::rope_rotate_row(carrier[i], rel, thetas, rotated);
      auto krow = input.k.row(j);
      for (std::size_t d = 0; d < dim; ++d) krow[d] += slash_strength * rotated[d];
    }
  }

  // Verticals replace the key outright (after the slash pass, so a crossing
  // slash cannot blur the column's coherent direction).
  for (std::size_t v : spec.vertical_columns) {
    auto krow = input.k.row(v);
    for (std::size_t d = 0; d < dim; ++d) krow[d] = vertical_strength * shared[d];
  }
  return input;
}

}  // namespace longctx
