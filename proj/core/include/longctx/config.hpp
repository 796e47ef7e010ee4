#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "longctx/dca.hpp"
#include "longctx/engine_sim.hpp"
#include "longctx/refine.hpp"
#include "longctx/sparse.hpp"

namespace longctx {

struct AttentionConfig {
  std::size_t n = 64;
  std::size_t head_dim = 8;
  std::size_t query_heads = 1;
  std::size_t kv_heads = 1;
  double rope_base = kDefaultRopeBase;
};

struct SparsityConfig {
  std::size_t chunk_len = 256;
  std::size_t last_q = 64;
  HeadBudget budget{4, 4};
  SelectionOptions selection{};
  PositionMode position_mode = PositionMode::Standard;
  std::size_t planted_verticals = 4;
  std::size_t planted_slashes = 4;
  double planted_strength = 80.0;
  double min_recall = 0.95;
  double max_density = 0.125;
};

struct RefineCommandConfig {
  RefineConfig refine{};
  HeadBudget initial{0, 0};
  std::string initial_plan_file;  // optional plan JSON overriding `initial`
  std::vector<HeadBudget> grid;   // optional offline-search grid
  std::size_t layers = 1;
  std::size_t heads = 1;
  std::size_t samples_per_head = 1;
  std::size_t calib_len = 128;
  std::size_t head_dim = 16;
  double planted_strength = 64.0;
};

struct PipelineConfig {
  std::size_t tokens = 10000;
  std::vector<std::size_t> chunk_grid{8};
  std::vector<std::size_t> stage_grid{4};
};

struct ForgeConfig {
  std::size_t fim = 0;
  std::size_t keyword = 0;
  std::size_t position = 0;
  std::size_t reorder = 0;
  std::size_t passkey = 0;
  std::size_t paragraph_count = 10;
  std::size_t paragraph_tokens = 30;
  std::size_t text_tokens = 400;
  std::size_t passkey_tokens = 1000;
  std::size_t passkey_digits = 5;
  std::vector<double> depths{0.0, 0.25, 0.5, 0.75, 1.0};
  double long_fraction = 0.75;  // share of samples at the maximum length
  std::size_t min_tokens = 64;
  std::string corpus_file = "corpus.jsonl";
};

/// Full run configuration with every field defaulted; unknown JSON fields are
/// rejected and validation errors name the offending field.
struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "out";
  AttentionConfig attention{};
  ChunkConfig chunk{256, 1024, 256};
  double yarn_scale = 1.0;
  SparsityConfig sparsity{};
  RefineCommandConfig refine{};
  CostModel cost{1.0, 1.0, 0.0, 0.0};
  PipelineConfig pipeline{};
  EngineTiming engine{2.0, 5.0, 1.0, 1000, 0.0};
  ForgeConfig forge{};
};

RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);

/// The effective configuration (defaults filled, out_dir excluded) that the
/// config hash and report embedding are computed from.
nlohmann::json effective_config(const RunConfig& cfg);

/// FNV-1a 64 over the canonical dump of the effective config, as hex.
std::string config_hash(const RunConfig& cfg);

/// Seed for a named per-module generator, derived from the run seed.
std::uint64_t module_seed(std::uint64_t run_seed, std::string_view module_name);

}  // namespace longctx
