#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "longctx/attention.hpp"
#include "longctx/errors.hpp"
#include "testutil.hpp"

using namespace longctx;

TEST_CASE("rope at position zero is the identity") {
  std::mt19937_64 rng(1);
  const Matrix m = testutil::random_matrix(rng, 5, 8);
  std::vector<std::int64_t> zeros(5, 0);
  const Matrix rotated = rope_apply(m, zeros, kDefaultRopeBase);
  CHECK(rotated.values == m.values);
}

TEST_CASE("rope relative-position property") {
  std::mt19937_64 rng(2);
  const Matrix q = testutil::random_matrix(rng, 1, 16);
  const Matrix k = testutil::random_matrix(rng, 1, 16);
  const Matrix q7 = rope_apply(q, std::vector<std::int64_t>{7}, kDefaultRopeBase);
  const Matrix k3 = rope_apply(k, std::vector<std::int64_t>{3}, kDefaultRopeBase);
  const Matrix q4 = rope_apply(q, std::vector<std::int64_t>{4}, kDefaultRopeBase);
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t d = 0; d < 16; ++d) {
    lhs += q7.at(0, d) * k3.at(0, d);
    rhs += q4.at(0, d) * k.at(0, d);
  }
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));
}

TEST_CASE("rope two-dimensional rotation evaluates the formula") {
  Matrix m(1, 2);
  m.at(0, 0) = 1.0;
  m.at(0, 1) = 0.0;
  const Matrix rotated = rope_apply(m, std::vector<std::int64_t>{1}, 555.0);
  // theta_0 = base^0 = 1 radian regardless of the base
  CHECK(rotated.at(0, 0) == doctest::Approx(std::cos(1.0)).epsilon(1e-12));
  CHECK(rotated.at(0, 1) == doctest::Approx(std::sin(1.0)).epsilon(1e-12));
}

TEST_CASE("rope preserves row norms") {
  std::mt19937_64 rng(3);
  const Matrix m = testutil::random_matrix(rng, 20, 32);
  std::vector<std::int64_t> positions(20);
  std::uniform_int_distribution<std::int64_t> pos(0, 100000);
  for (auto& p : positions) p = pos(rng);
  const Matrix rotated = rope_apply(m, positions, kDefaultRopeBase);
  for (std::size_t i = 0; i < 20; ++i) {
    double a = 0.0, b = 0.0;
    for (double x : m.row(i)) a += x * x;
    for (double x : rotated.row(i)) b += x * x;
    CHECK(std::sqrt(a) == doctest::Approx(std::sqrt(b)).epsilon(1e-9));
  }
}

TEST_CASE("rope rejects mismatched positions and odd dimensions") {
  Matrix m(2, 4);
  CHECK_THROWS_AS(rope_apply(m, std::vector<std::int64_t>{0}, 10.0), Error);
  Matrix odd(1, 3);
  CHECK_THROWS_AS(rope_apply(odd, std::vector<std::int64_t>{0}, 10.0), Error);
}

TEST_CASE("stable softmax handles the documented rows") {
  SUBCASE("symmetric two-entry row") {
    Matrix scores(1, 2);
    const SoftmaxRows sm = stable_softmax_rows(scores, BoolMatrix(1, 2, true));
    CHECK(sm.probs.at(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(sm.probs.at(0, 1) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(sm.lse[0] == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  }
  SUBCASE("single entry") {
    Matrix scores(1, 1);
    scores.at(0, 0) = -3.25;
    const SoftmaxRows sm = stable_softmax_rows(scores, BoolMatrix(1, 1, true));
    CHECK(sm.probs.at(0, 0) == 1.0);
    CHECK(sm.lse[0] == -3.25);
  }
  SUBCASE("large scores do not overflow") {
    Matrix big(1, 2);
    big.at(0, 0) = 1000.0;
    big.at(0, 1) = 1001.0;
    Matrix small(1, 2);
    small.at(0, 0) = 0.0;
    small.at(0, 1) = 1.0;
    const SoftmaxRows a = stable_softmax_rows(big, BoolMatrix(1, 2, true));
    const SoftmaxRows b = stable_softmax_rows(small, BoolMatrix(1, 2, true));
    CHECK(std::isfinite(a.lse[0]));
    CHECK(a.probs.at(0, 0) == doctest::Approx(b.probs.at(0, 0)).epsilon(1e-12));
    CHECK(a.probs.at(0, 1) == doctest::Approx(b.probs.at(0, 1)).epsilon(1e-12));
  }
  SUBCASE("fully masked row is an error") {
    Matrix scores(1, 2);
    BoolMatrix mask(1, 2, false);
    CHECK_THROWS_WITH_AS(stable_softmax_rows(scores, mask),
                         doctest::Contains("fully masked"), Error);
  }
  SUBCASE("masked entries are exactly zero") {
    std::mt19937_64 rng(4);
    const Matrix scores = testutil::random_matrix(rng, 6, 6, -4.0, 4.0);
    BoolMatrix mask(6, 6, false);
    for (std::size_t i = 0; i < 6; ++i) {
      for (std::size_t j = 0; j <= i; ++j) mask.set(i, j, true);
    }
    const SoftmaxRows sm = stable_softmax_rows(scores, mask);
    for (std::size_t i = 0; i < 6; ++i) {
      for (std::size_t j = i + 1; j < 6; ++j) CHECK(sm.probs.at(i, j) == 0.0);
    }
  }
}

TEST_CASE("softmax probability rows sum to one across sizes") {
  std::mt19937_64 rng(5);
  for (std::size_t n : {std::size_t(1), std::size_t(3), std::size_t(64),
                        std::size_t(257), std::size_t(1024), std::size_t(4096)}) {
    const std::size_t rows = std::min<std::size_t>(n, 256);
    const Matrix scores = testutil::random_matrix(rng, rows, n, -30.0, 30.0);
    const SoftmaxRows sm = stable_softmax_rows(scores, BoolMatrix(rows, n, true));
    double dev = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < n; ++j) sum += sm.probs.at(i, j);
      dev = std::max(dev, std::abs(sum - 1.0));
    }
    CHECK(dev <= 1e-12);
  }
}

TEST_CASE("full attention on a single token returns the value row") {
  std::mt19937_64 rng(6);
  AttentionInput input = testutil::random_input(rng, 1, 8);
  const AttentionResult result = full_attention(input);
  for (std::size_t d = 0; d < 8; ++d) CHECK(result.output.at(0, d) == input.v.at(0, d));
  // lse of a single entry is the logit itself
  const auto qr = testutil::oracle_rotate(
      std::vector<double>(input.q.row(0).begin(), input.q.row(0).end()), 0,
      input.rope_base);
  double dot = 0.0;
  for (std::size_t d = 0; d < 8; ++d) dot += qr[d] * input.k.at(0, d);
  CHECK(result.lse[0] == doctest::Approx(dot / std::sqrt(8.0)).epsilon(1e-12));
}

TEST_CASE("full attention matches the independent oracle") {
  std::mt19937_64 rng(7);
  for (std::size_t n : {std::size_t(2), std::size_t(9), std::size_t(32)}) {
    AttentionInput input = testutil::random_input(rng, n, 8);
    const AttentionResult result = full_attention(input);
    const testutil::OracleResult oracle = testutil::oracle_attention(input);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(result.lse[i] == doctest::Approx(oracle.lse[i]).epsilon(1e-9));
      for (std::size_t d = 0; d < 8; ++d) {
        CHECK(result.output.at(i, d) ==
              doctest::Approx(oracle.output[i][d]).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("causality: rows ignore later tokens") {
  std::mt19937_64 rng(8);
  AttentionInput input = testutil::random_input(rng, 16, 8);
  const AttentionResult before = full_attention(input);
  AttentionInput perturbed = input;
  for (std::size_t i = 9; i < 16; ++i) {
    for (std::size_t d = 0; d < 8; ++d) {
      perturbed.q.at(i, d) += 3.0;
      perturbed.k.at(i, d) -= 2.0;
      perturbed.v.at(i, d) *= -1.5;
    }
  }
  const AttentionResult after = full_attention(perturbed);
  for (std::size_t i = 0; i < 9; ++i) {
    CHECK(after.lse[i] == before.lse[i]);
    for (std::size_t d = 0; d < 8; ++d) {
      CHECK(after.output.at(i, d) == before.output.at(i, d));
    }
  }
}

TEST_CASE("standard positions equal the entry-wise relative override") {
  std::mt19937_64 rng(0);
  AttentionInput input = testutil::random_input(rng, 64, 8);
  const AttentionResult standard = full_attention(input);
  RelPositionMatrix rel(64);
  for (std::size_t i = 0; i < 64; ++i) {
    for (std::size_t j = 0; j <= i; ++j) rel.at(i, j) = std::int64_t(i - j);
  }
  const AttentionResult overridden = full_attention(input, &rel);
  CHECK(testutil::max_abs_diff(standard, overridden) <= 1e-9);
}

TEST_CASE("exp(lse) equals the direct sum of exponentiated logits") {
  std::mt19937_64 rng(9);
  for (std::size_t n : {std::size_t(17), std::size_t(128), std::size_t(512)}) {
    AttentionInput input = testutil::random_input(rng, n, 8);
    const AttentionResult result = full_attention(input);
    const testutil::OracleResult oracle = testutil::oracle_attention(input);
    for (std::size_t i = 0; i < n; ++i) {
      const double direct = std::exp(oracle.lse[i]);
      CHECK(std::abs(std::exp(result.lse[i]) - direct) / direct <= 1e-9);
    }
  }
}

TEST_CASE("temperature one reproduces plain scaled dot-product attention") {
  std::mt19937_64 rng(10);
  AttentionInput input = testutil::random_input(rng, 24, 8);
  input.temperature = 1.0;
  const AttentionResult a = full_attention(input);
  const testutil::OracleResult oracle = testutil::oracle_attention(input);
  for (std::size_t i = 0; i < 24; ++i) {
    CHECK(a.lse[i] == doctest::Approx(oracle.lse[i]).epsilon(1e-12));
  }
}

TEST_CASE("temperature scales logits") {
  std::mt19937_64 rng(11);
  AttentionInput input = testutil::random_input(rng, 12, 8);
  input.temperature = 0.5;
  const AttentionResult hot = full_attention(input);
  const testutil::OracleResult oracle = testutil::oracle_attention(input);
  for (std::size_t i = 0; i < 12; ++i) {
    CHECK(hot.lse[i] == doctest::Approx(oracle.lse[i]).epsilon(1e-9));
  }
}

TEST_CASE("input validation catches the documented errors") {
  std::mt19937_64 rng(12);
  AttentionInput input = testutil::random_input(rng, 4, 8);
  SUBCASE("dimension mismatch") {
    input.k = Matrix(3, 8);
    CHECK_THROWS_AS(full_attention(input), Error);
  }
  SUBCASE("non-finite values") {
    input.q.at(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(full_attention(input), Error);
  }
  SUBCASE("negative position") {
    input.positions_k[2] = -1;
    CHECK_THROWS_AS(full_attention(input), Error);
  }
  SUBCASE("bad temperature") {
    input.temperature = 0.0;
    CHECK_THROWS_AS(full_attention(input), Error);
  }
}

TEST_CASE("f32 mode stays close to the f64 path") {
  std::mt19937_64 rng(13);
  AttentionInput input = testutil::random_input(rng, 32, 8);
  const AttentionResult a = full_attention(input);
  const AttentionResult b = full_attention_f32(input);
  CHECK(testutil::max_abs_diff(a, b) <= 1e-3);
}

TEST_CASE("flop estimate") {
  const std::size_t n = 2048;
  const std::size_t dense = n * (n + 1) / 2;
  CHECK(flop_estimate(n, 8, dense) == 2.0 * double(dense) * 8.0);
  CHECK(flop_estimate(n, 8, 0) == 0.0);
  const std::size_t tenth = dense / 10;
  CHECK(flop_estimate(n, 8, tenth) / flop_estimate(n, 8, dense) ==
        doctest::Approx(0.1).epsilon(1e-3));
  CHECK_THROWS_AS(flop_estimate(4, 8, 11), Error);
}

TEST_CASE("gqa grouping check") {
  CHECK_NOTHROW(check_gqa_grouping(28, 4));
  CHECK_NOTHROW(check_gqa_grouping(40, 8));
  CHECK_THROWS_AS(check_gqa_grouping(28, 5), Error);
  CHECK_THROWS_AS(check_gqa_grouping(0, 1), Error);
}
