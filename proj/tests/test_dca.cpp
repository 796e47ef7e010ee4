#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "longctx/dca.hpp"
#include "longctx/errors.hpp"
#include "testutil.hpp"

using namespace longctx;

namespace {

// Independent evaluation of the three-case mapping, kept separate from the
// library path on purpose.
std::int64_t oracle_relative(std::size_t i, std::size_t j, const ChunkConfig& cfg) {
  const std::size_t s = cfg.chunk_size;
  const std::size_t c = cfg.train_len;
  const std::size_t key_pos = j % s;
  std::size_t query_pos;
  if (i / s == j / s) {
    query_pos = i % s;
  } else if (i / s == j / s + 1) {
    query_pos = std::min(i % s + s, c - 1);
  } else {
    query_pos = c - 1;
  }
  return std::int64_t(query_pos) - std::int64_t(key_pos);
}

const ChunkConfig kSmall{6, 10, 4};  // s=6, c=10, w=4

}  // namespace

TEST_CASE("pattern classification") {
  CHECK(classify_pair(3, 1, kSmall) == PatternKind::Intra);
  CHECK(classify_pair(7, 5, kSmall) == PatternKind::Successive);
  CHECK(classify_pair(13, 0, kSmall) == PatternKind::Inter);
  CHECK(classify_pair(5, 5, kSmall) == PatternKind::Intra);
  CHECK_THROWS_AS(classify_pair(1, 2, kSmall), Error);
}

TEST_CASE("remapped relative positions match hand evaluation") {
  CHECK(dca_relative(4, 4, kSmall) == 0);
  CHECK(dca_relative(17, 17, kSmall) == 0);
  // successive pair inside the local window keeps the true distance
  CHECK(dca_relative(7, 5, kSmall) == 2);
  // inter pair compresses the true distance 13 below train_len
  CHECK(dca_relative(13, 0, kSmall) == 9);
  // successive pair beyond the window: query clamps to c-1
  CHECK(dca_relative(11, 2, kSmall) == 7);
  CHECK_THROWS_AS(dca_relative(0, 1, kSmall), Error);
}

TEST_CASE("position matrix equals i-j while a single chunk covers the input") {
  ChunkConfig cfg{16, 64, 16};
  const RelPositionMatrix rel = dca_position_matrix(16, cfg);
  for (std::size_t i = 0; i < 16; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      CHECK(rel.at(i, j) == std::int64_t(i - j));
    }
  }
}

TEST_CASE("position matrix bounds on the worked example") {
  const RelPositionMatrix rel = dca_position_matrix(20, kSmall);
  std::int64_t max_rel = 0;
  for (std::size_t i = 0; i < 20; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      max_rel = std::max(max_rel, rel.at(i, j));
      CHECK(rel.at(i, j) >= 0);
    }
  }
  CHECK(max_rel == 9);
}

TEST_CASE("values vary along a raw diagonal") {
  // diagonal d=8 over rows 8..13: the jump pattern that motivates the
  // continuous selection positions
  std::vector<std::int64_t> values;
  for (std::size_t i = 8; i <= 13; ++i) values.push_back(dca_relative(i, i - 8, kSmall));
  CHECK(values == std::vector<std::int64_t>{8, 8, 7, 6, 5, 4});
}

TEST_CASE("bounds and local exactness hold exhaustively over random configs") {
  std::mt19937_64 rng(42);
  std::uniform_int_distribution<std::size_t> chunk_pick(1, 96);
  std::uniform_int_distribution<std::size_t> extra_pick(0, 160);
  std::uniform_int_distribution<std::size_t> n_pick(1, 1024);
  for (int trial = 0; trial < 24; ++trial) {
    const std::size_t s = chunk_pick(rng);
    const std::size_t c = s + extra_pick(rng);
    if (c < s) continue;
    ChunkConfig cfg;
    cfg.chunk_size = s;
    cfg.train_len = std::max(c, s);
    cfg.local_window = std::min(s, cfg.train_len - s);
    cfg.validate();
    const std::size_t n = n_pick(rng);
    std::size_t violations = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j <= i; ++j) {
        const std::int64_t rel = dca_relative(i, j, cfg);
        if (rel < 0 || rel > std::int64_t(cfg.train_len - 1)) ++violations;
        if (i - j <= cfg.local_window && rel != std::int64_t(i - j)) ++violations;
        if (rel != oracle_relative(i, j, cfg)) ++violations;
      }
    }
    CHECK(violations == 0);
  }
}

TEST_CASE("within one key chunk the mapping is non-increasing in j") {
  std::mt19937_64 rng(43);
  std::uniform_int_distribution<std::size_t> chunk_pick(2, 32);
  std::uniform_int_distribution<std::size_t> extra_pick(1, 64);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t s = chunk_pick(rng);
    ChunkConfig cfg;
    cfg.chunk_size = s;
    cfg.train_len = s + extra_pick(rng);
    cfg.local_window = std::min(s, cfg.train_len - s);
    const std::size_t n = 6 * s;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 1; j <= i; ++j) {
        if (j / s != (j - 1) / s) continue;
        CHECK(dca_relative(i, j - 1, cfg) >= dca_relative(i, j, cfg));
      }
    }
  }
}

TEST_CASE("yarn temperature formula") {
  CHECK(yarn_temperature(1.0) == 1.0);
  CHECK(yarn_temperature(0.25) == 1.0);
  {
    const long double root = 0.1L * std::log(4.0L) + 1.0L;
    CHECK(std::abs((long double)yarn_temperature(4.0) - 1.0L / (root * root)) <= 1e-12L);
    CHECK(yarn_temperature(4.0) == doctest::Approx(0.771321).epsilon(1e-5));
  }
  {
    const long double root = 0.1L * std::log(8.0L) + 1.0L;
    CHECK(std::abs((long double)yarn_temperature(8.0) - 1.0L / (root * root)) <= 1e-12L);
    CHECK(yarn_temperature(8.0) == doctest::Approx(0.685341).epsilon(1e-5));
  }
  CHECK_THROWS_AS(yarn_temperature(0.0), Error);
  CHECK_THROWS_AS(yarn_temperature(-2.0), Error);
}

TEST_CASE("yarn temperature is continuous at 1 and strictly decreasing beyond") {
  CHECK(yarn_temperature(1.0 + 1e-12) == doctest::Approx(1.0).epsilon(1e-9));
  double prev = yarn_temperature(1.0);
  for (double s = 1.5; s <= 64.0; s *= 2.0) {
    const double t = yarn_temperature(s);
    CHECK(t < prev);
    prev = t;
  }
}

TEST_CASE("yarn scale invariants") {
  const YarnScale y = YarnScale::from_scale(4.0);
  CHECK(y.temperature == yarn_temperature(4.0));
  CHECK_NOTHROW(y.validate());
  YarnScale bad = y;
  bad.temperature = 0.9;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("chunk config invariants") {
  CHECK_THROWS_AS((ChunkConfig{12, 10, 0}).validate(), Error);   // s > c
  CHECK_THROWS_AS((ChunkConfig{6, 10, 5}).validate(), Error);    // w > c - s
  CHECK_THROWS_AS((ChunkConfig{0, 10, 0}).validate(), Error);
  CHECK_NOTHROW((ChunkConfig{6, 10, 4}).validate());
  const ChunkConfig def = ChunkConfig::with_default_window(6, 10);
  CHECK(def.local_window == 4);
  const ChunkConfig cap = ChunkConfig::with_default_window(16, 64);
  CHECK(cap.local_window == 16);
}

TEST_CASE("short input with no scaling is bitwise identical to vanilla attention") {
  std::mt19937_64 rng(44);
  ChunkConfig cfg{64, 128, 64};
  AttentionInput input = testutil::random_input(rng, 32, 8);
  const AttentionResult dca = dca_attention(input, cfg, YarnScale::from_scale(1.0));
  const AttentionResult vanilla = full_attention(input);
  CHECK(testutil::bitwise_equal(dca, vanilla));
}

TEST_CASE("long input equals the override-path oracle exactly") {
  std::mt19937_64 rng(0);
  AttentionInput input = testutil::random_input(rng, 40, 8);
  const AttentionResult dca = dca_attention(input, kSmall, YarnScale::from_scale(1.0));
  const RelPositionMatrix rel = dca_position_matrix(40, kSmall);
  const AttentionResult oracle = full_attention(input, &rel);
  CHECK(testutil::bitwise_equal(dca, oracle));
}

TEST_CASE("single token") {
  std::mt19937_64 rng(45);
  AttentionInput input = testutil::random_input(rng, 1, 8);
  const AttentionResult result = dca_attention(input, kSmall, YarnScale::from_scale(2.0));
  for (std::size_t d = 0; d < 8; ++d) CHECK(result.output.at(0, d) == input.v.at(0, d));
}

TEST_CASE("yarn scaling changes long-input logits but never short-input ones") {
  std::mt19937_64 rng(46);
  ChunkConfig cfg{16, 32, 16};
  AttentionInput input = testutil::random_input(rng, 48, 8);
  const AttentionResult unscaled = dca_attention(input, cfg, YarnScale::from_scale(1.0));
  const AttentionResult scaled = dca_attention(input, cfg, YarnScale::from_scale(4.0));
  CHECK(testutil::max_abs_diff(unscaled, scaled) > 0.0);

  AttentionInput short_input = testutil::random_input(rng, 12, 8);
  const AttentionResult a = dca_attention(short_input, cfg, YarnScale::from_scale(1.0));
  const AttentionResult b = full_attention(short_input);
  CHECK(testutil::bitwise_equal(a, b));
}
