#include "longctx/config.hpp"

#include <fstream>
#include <initializer_list>
#include <string_view>

#include "longctx/errors.hpp"

namespace longctx {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::string& section,
                    std::initializer_list<std::string_view> allowed) {
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (std::string_view a : allowed) {
      if (key == a) {
        known = true;
        break;
      }
    }
    if (!known) {
      const std::string where = section.empty() ? key : section + "." + key;
      fail(errkind::schema, "unknown field \"" + where + "\"");
    }
  }
}

std::string path_of(const std::string& section, std::string_view key) {
  return section.empty() ? std::string(key) : section + "." + std::string(key);
}

template <typename T>
T get_field(const json& j, const std::string& section, std::string_view key,
            T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(std::string(key)).get<T>();
  } catch (const json::exception& e) {
    fail(errkind::schema, path_of(section, key) + ": " + e.what());
  }
}

void parse_attention(const json& j, AttentionConfig& out) {
  reject_unknown(j, "attention", {"n", "headDim", "queryHeads", "kvHeads", "ropeBase"});
  out.n = get_field<std::size_t>(j, "attention", "n", out.n);
  out.head_dim = get_field<std::size_t>(j, "attention", "headDim", out.head_dim);
  out.query_heads = get_field<std::size_t>(j, "attention", "queryHeads", out.query_heads);
  out.kv_heads = get_field<std::size_t>(j, "attention", "kvHeads", out.kv_heads);
  out.rope_base = get_field<double>(j, "attention", "ropeBase", out.rope_base);
  if (out.n == 0) fail(errkind::schema, "attention.n: must be positive");
  if (out.head_dim == 0 || out.head_dim % 2 != 0) {
    fail(errkind::schema, "attention.headDim: must be even and positive");
  }
  if (!(out.rope_base > 0)) fail(errkind::schema, "attention.ropeBase: must be positive");
  try {
    check_gqa_grouping(out.query_heads, out.kv_heads);
  } catch (const Error& e) {
    fail(errkind::schema, std::string("attention.queryHeads: ") + e.what());
  }
}

void parse_chunk(const json& j, ChunkConfig& out) {
  reject_unknown(j, "chunk", {"chunkSize", "trainLen", "localWindow"});
  out.chunk_size = get_field<std::size_t>(j, "chunk", "chunkSize", out.chunk_size);
  out.train_len = get_field<std::size_t>(j, "chunk", "trainLen", out.train_len);
  if (j.contains("localWindow")) {
    out.local_window = get_field<std::size_t>(j, "chunk", "localWindow", out.local_window);
  } else {
    out.local_window = std::min(out.chunk_size, out.train_len > out.chunk_size
                                                    ? out.train_len - out.chunk_size
                                                    : 0);
  }
  if (out.chunk_size == 0) fail(errkind::schema, "chunk.chunkSize: must be positive");
  if (out.train_len == 0) fail(errkind::schema, "chunk.trainLen: must be positive");
  if (out.chunk_size > out.train_len) {
    fail(errkind::schema, "chunk.chunkSize: chunkSize must not exceed trainLen");
  }
  try {
    out.validate();
  } catch (const Error& e) {
    fail(errkind::schema, std::string("chunk.localWindow: ") + e.what());
  }
}

PositionMode parse_position_mode(const std::string& name, const std::string& where) {
  if (name == "standard") return PositionMode::Standard;
  if (name == "dcaContinuous") return PositionMode::DcaContinuous;
  fail(errkind::schema, where + ": expected \"standard\" or \"dcaContinuous\"");
}

void parse_sparsity(const json& j, SparsityConfig& out) {
  reject_unknown(j, "sparsity",
                 {"chunkLen", "lastQ", "vertical", "slash", "forceSink",
                  "forceLocalBand", "slashScore", "positionMode", "plantedVerticals",
                  "plantedSlashes", "plantedStrength", "minRecall", "maxDensity"});
  out.chunk_len = get_field<std::size_t>(j, "sparsity", "chunkLen", out.chunk_len);
  out.last_q = get_field<std::size_t>(j, "sparsity", "lastQ", out.last_q);
  out.budget.vertical = get_field<std::size_t>(j, "sparsity", "vertical", out.budget.vertical);
  out.budget.slash = get_field<std::size_t>(j, "sparsity", "slash", out.budget.slash);
  out.selection.force_sink_column =
      get_field<bool>(j, "sparsity", "forceSink", out.selection.force_sink_column);
  out.selection.force_local_band =
      get_field<bool>(j, "sparsity", "forceLocalBand", out.selection.force_local_band);
  const std::string score =
      get_field<std::string>(j, "sparsity", "slashScore", out.selection.slash_mean ? "mean" : "sum");
  if (score == "mean") {
    out.selection.slash_mean = true;
  } else if (score == "sum") {
    out.selection.slash_mean = false;
  } else {
    fail(errkind::schema, "sparsity.slashScore: expected \"mean\" or \"sum\"");
  }
  out.position_mode = parse_position_mode(
      get_field<std::string>(j, "sparsity", "positionMode",
                             out.position_mode == PositionMode::Standard ? "standard"
                                                                         : "dcaContinuous"),
      "sparsity.positionMode");
  out.planted_verticals =
      get_field<std::size_t>(j, "sparsity", "plantedVerticals", out.planted_verticals);
  out.planted_slashes =
      get_field<std::size_t>(j, "sparsity", "plantedSlashes", out.planted_slashes);
  out.planted_strength =
      get_field<double>(j, "sparsity", "plantedStrength", out.planted_strength);
  out.min_recall = get_field<double>(j, "sparsity", "minRecall", out.min_recall);
  out.max_density = get_field<double>(j, "sparsity", "maxDensity", out.max_density);
  if (out.chunk_len == 0) fail(errkind::schema, "sparsity.chunkLen: must be positive");
  if (out.last_q == 0) fail(errkind::schema, "sparsity.lastQ: must be positive");
}

void parse_refine(const json& j, RefineCommandConfig& out) {
  reject_unknown(j, "refine",
                 {"threshold", "verticalIncrement", "slashIncrement", "maxRounds",
                  "capVertical", "capSlash", "lastQ", "aggregate", "fractionTau",
                  "layers", "heads", "samplesPerHead", "calibLength", "headDim",
                  "plantedStrength", "initialVertical", "initialSlash",
                  "initialPlanFile", "grid"});
  out.refine.threshold = get_field<double>(j, "refine", "threshold", out.refine.threshold);
  out.refine.vertical_increment =
      get_field<std::size_t>(j, "refine", "verticalIncrement", out.refine.vertical_increment);
  out.refine.slash_increment =
      get_field<std::size_t>(j, "refine", "slashIncrement", out.refine.slash_increment);
  out.refine.max_rounds = get_field<std::size_t>(j, "refine", "maxRounds", out.refine.max_rounds);
  out.refine.budget_cap.vertical =
      get_field<std::size_t>(j, "refine", "capVertical", out.refine.budget_cap.vertical);
  out.refine.budget_cap.slash =
      get_field<std::size_t>(j, "refine", "capSlash", out.refine.budget_cap.slash);
  out.refine.measure.last_q =
      get_field<std::size_t>(j, "refine", "lastQ", out.refine.measure.last_q);
  const std::string agg = get_field<std::string>(
      j, "refine", "aggregate",
      out.refine.measure.aggregate == RecallAggregate::Mean ? "mean" : "fractionAbove");
  if (agg == "mean") {
    out.refine.measure.aggregate = RecallAggregate::Mean;
  } else if (agg == "fractionAbove") {
    out.refine.measure.aggregate = RecallAggregate::FractionAbove;
  } else {
    fail(errkind::schema, "refine.aggregate: expected \"mean\" or \"fractionAbove\"");
  }
  out.refine.measure.fraction_tau =
      get_field<double>(j, "refine", "fractionTau", out.refine.measure.fraction_tau);
  out.layers = get_field<std::size_t>(j, "refine", "layers", out.layers);
  out.heads = get_field<std::size_t>(j, "refine", "heads", out.heads);
  out.samples_per_head =
      get_field<std::size_t>(j, "refine", "samplesPerHead", out.samples_per_head);
  out.calib_len = get_field<std::size_t>(j, "refine", "calibLength", out.calib_len);
  out.head_dim = get_field<std::size_t>(j, "refine", "headDim", out.head_dim);
  out.planted_strength =
      get_field<double>(j, "refine", "plantedStrength", out.planted_strength);
  out.initial.vertical =
      get_field<std::size_t>(j, "refine", "initialVertical", out.initial.vertical);
  out.initial.slash = get_field<std::size_t>(j, "refine", "initialSlash", out.initial.slash);
  out.initial_plan_file =
      get_field<std::string>(j, "refine", "initialPlanFile", out.initial_plan_file);
  if (j.contains("grid")) {
    out.grid.clear();
    const json& grid = j.at("grid");
    if (!grid.is_array()) fail(errkind::schema, "refine.grid: expected an array of [v, s] pairs");
    for (const json& entry : grid) {
      if (!entry.is_array() || entry.size() != 2) {
        fail(errkind::schema, "refine.grid: expected an array of [v, s] pairs");
      }
      out.grid.push_back(HeadBudget{entry.at(0).get<std::size_t>(),
                                    entry.at(1).get<std::size_t>()});
    }
  }
  try {
    out.refine.validate();
  } catch (const Error& e) {
    fail(errkind::schema, std::string("refine: ") + e.what());
  }
}

void parse_cost(const json& j, CostModel& out) {
  reject_unknown(j, "cost", {"attnCoeff", "selfCoeff", "linCoeff", "fixedCost"});
  out.attn_coeff = get_field<double>(j, "cost", "attnCoeff", out.attn_coeff);
  out.self_coeff = get_field<double>(j, "cost", "selfCoeff", out.self_coeff);
  out.lin_coeff = get_field<double>(j, "cost", "linCoeff", out.lin_coeff);
  out.fixed_cost = get_field<double>(j, "cost", "fixedCost", out.fixed_cost);
  try {
    out.validate();
  } catch (const Error& e) {
    fail(errkind::schema, std::string("cost: ") + e.what());
  }
}

std::vector<std::size_t> parse_count_grid(const json& j, const std::string& where) {
  const auto as_count = [&](const json& e) -> std::size_t {
    if (!e.is_number_integer() && !e.is_number_unsigned()) {
      fail(errkind::schema, where + ": expected counts");
    }
    if (e.is_number_integer() && e.get<long long>() < 0) {
      fail(errkind::schema, where + ": counts must be non-negative");
    }
    return e.get<std::size_t>();
  };
  if (j.is_number_integer() || j.is_number_unsigned()) return {as_count(j)};
  if (j.is_array()) {
    std::vector<std::size_t> out;
    for (const json& e : j) out.push_back(as_count(e));
    if (out.empty()) fail(errkind::schema, where + ": must not be empty");
    return out;
  }
  fail(errkind::schema, where + ": expected a count or an array of counts");
}

void parse_pipeline(const json& j, PipelineConfig& out) {
  reject_unknown(j, "pipeline", {"tokens", "chunks", "stages"});
  out.tokens = get_field<std::size_t>(j, "pipeline", "tokens", out.tokens);
  if (j.contains("chunks")) {
    out.chunk_grid = parse_count_grid(j.at("chunks"), "pipeline.chunks");
  }
  if (j.contains("stages")) {
    out.stage_grid = parse_count_grid(j.at("stages"), "pipeline.stages");
  }
  if (out.tokens == 0) fail(errkind::schema, "pipeline.tokens: must be positive");
  for (std::size_t k : out.chunk_grid) {
    if (k == 0 || k > out.tokens) {
      fail(errkind::schema, "pipeline.chunks: each count must lie in [1, tokens]");
    }
  }
  for (std::size_t s : out.stage_grid) {
    if (s == 0) fail(errkind::schema, "pipeline.stages: must be positive");
  }
}

void parse_engine(const json& j, EngineTiming& out) {
  reject_unknown(j, "engine",
                 {"schedulerTime", "modelRunnerTime", "decoderTime", "steps", "hopLatency"});
  out.scheduler_time = get_field<double>(j, "engine", "schedulerTime", out.scheduler_time);
  out.model_runner_time =
      get_field<double>(j, "engine", "modelRunnerTime", out.model_runner_time);
  out.decoder_time = get_field<double>(j, "engine", "decoderTime", out.decoder_time);
  out.steps = get_field<std::size_t>(j, "engine", "steps", out.steps);
  out.hop_latency = get_field<double>(j, "engine", "hopLatency", out.hop_latency);
  try {
    out.validate();
  } catch (const Error& e) {
    fail(errkind::schema, std::string("engine: ") + e.what());
  }
}

void parse_forge(const json& j, ForgeConfig& out) {
  reject_unknown(j, "forge",
                 {"fim", "keyword", "position", "reorder", "passkey", "paragraphCount",
                  "paragraphTokens", "textTokens", "passkeyTokens", "passkeyDigits",
                  "depths", "longFraction", "minTokens", "corpusFile"});
  out.fim = get_field<std::size_t>(j, "forge", "fim", out.fim);
  out.keyword = get_field<std::size_t>(j, "forge", "keyword", out.keyword);
  out.position = get_field<std::size_t>(j, "forge", "position", out.position);
  out.reorder = get_field<std::size_t>(j, "forge", "reorder", out.reorder);
  out.passkey = get_field<std::size_t>(j, "forge", "passkey", out.passkey);
  out.paragraph_count =
      get_field<std::size_t>(j, "forge", "paragraphCount", out.paragraph_count);
  out.paragraph_tokens =
      get_field<std::size_t>(j, "forge", "paragraphTokens", out.paragraph_tokens);
  out.text_tokens = get_field<std::size_t>(j, "forge", "textTokens", out.text_tokens);
  out.passkey_tokens =
      get_field<std::size_t>(j, "forge", "passkeyTokens", out.passkey_tokens);
  out.passkey_digits =
      get_field<std::size_t>(j, "forge", "passkeyDigits", out.passkey_digits);
  out.depths = get_field<std::vector<double>>(j, "forge", "depths", out.depths);
  out.long_fraction = get_field<double>(j, "forge", "longFraction", out.long_fraction);
  out.min_tokens = get_field<std::size_t>(j, "forge", "minTokens", out.min_tokens);
  out.corpus_file = get_field<std::string>(j, "forge", "corpusFile", out.corpus_file);
  if (out.paragraph_count < 2) fail(errkind::schema, "forge.paragraphCount: need at least 2");
  if (out.paragraph_tokens == 0) fail(errkind::schema, "forge.paragraphTokens: must be positive");
  if (out.passkey_digits == 0) fail(errkind::schema, "forge.passkeyDigits: must be positive");
  if (out.depths.empty()) fail(errkind::schema, "forge.depths: must not be empty");
  for (double d : out.depths) {
    if (!(d >= 0.0 && d <= 1.0)) fail(errkind::schema, "forge.depths: values must lie in [0, 1]");
  }
  if (!(out.long_fraction >= 0.0 && out.long_fraction <= 1.0)) {
    fail(errkind::schema, "forge.longFraction: must lie in [0, 1]");
  }
  if (out.corpus_file.empty()) fail(errkind::schema, "forge.corpusFile: must not be empty");
}

}  // namespace

RunConfig parse_run_config(const json& j) {
  if (!j.is_object()) fail(errkind::schema, "config root must be a JSON object");
  reject_unknown(j, "",
                 {"seed", "outDir", "attention", "chunk", "yarn", "sparsity", "refine",
                  "cost", "pipeline", "engine", "forge"});
  RunConfig cfg;
  cfg.seed = get_field<std::uint64_t>(j, "", "seed", cfg.seed);
  cfg.out_dir = get_field<std::string>(j, "", "outDir", cfg.out_dir.string());
  if (j.contains("attention")) parse_attention(j.at("attention"), cfg.attention);
  if (j.contains("chunk")) {
    parse_chunk(j.at("chunk"), cfg.chunk);
  } else {
    cfg.chunk.validate();
  }
  if (j.contains("yarn")) {
    reject_unknown(j.at("yarn"), "yarn", {"scaleFactor"});
    cfg.yarn_scale = get_field<double>(j.at("yarn"), "yarn", "scaleFactor", cfg.yarn_scale);
    if (!(cfg.yarn_scale > 0)) fail(errkind::schema, "yarn.scaleFactor: must be positive");
  }
  if (j.contains("sparsity")) parse_sparsity(j.at("sparsity"), cfg.sparsity);
  if (j.contains("refine")) parse_refine(j.at("refine"), cfg.refine);
  if (j.contains("cost")) parse_cost(j.at("cost"), cfg.cost);
  if (j.contains("pipeline")) parse_pipeline(j.at("pipeline"), cfg.pipeline);
  if (j.contains("engine")) parse_engine(j.at("engine"), cfg.engine);
  if (j.contains("forge")) parse_forge(j.at("forge"), cfg.forge);
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(errkind::io, "cannot open config file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    fail(errkind::parse, path.string() + ": " + e.what());
  }
  return parse_run_config(j);
}

nlohmann::json effective_config(const RunConfig& cfg) {
  nlohmann::json j;
  j["seed"] = cfg.seed;
  j["attention"] = {{"n", cfg.attention.n},
                    {"headDim", cfg.attention.head_dim},
                    {"queryHeads", cfg.attention.query_heads},
                    {"kvHeads", cfg.attention.kv_heads},
                    {"ropeBase", cfg.attention.rope_base}};
  j["chunk"] = {{"chunkSize", cfg.chunk.chunk_size},
                {"trainLen", cfg.chunk.train_len},
                {"localWindow", cfg.chunk.local_window}};
  j["yarn"] = {{"scaleFactor", cfg.yarn_scale}};
  j["sparsity"] = {
      {"chunkLen", cfg.sparsity.chunk_len},
      {"lastQ", cfg.sparsity.last_q},
      {"vertical", cfg.sparsity.budget.vertical},
      {"slash", cfg.sparsity.budget.slash},
      {"forceSink", cfg.sparsity.selection.force_sink_column},
      {"forceLocalBand", cfg.sparsity.selection.force_local_band},
      {"slashScore", cfg.sparsity.selection.slash_mean ? "mean" : "sum"},
      {"positionMode",
       cfg.sparsity.position_mode == PositionMode::Standard ? "standard" : "dcaContinuous"},
      {"plantedVerticals", cfg.sparsity.planted_verticals},
      {"plantedSlashes", cfg.sparsity.planted_slashes},
      {"plantedStrength", cfg.sparsity.planted_strength},
      {"minRecall", cfg.sparsity.min_recall},
      {"maxDensity", cfg.sparsity.max_density}};
  nlohmann::json grid = nlohmann::json::array();
  for (const HeadBudget& b : cfg.refine.grid) grid.push_back({b.vertical, b.slash});
  j["refine"] = {{"threshold", cfg.refine.refine.threshold},
                 {"verticalIncrement", cfg.refine.refine.vertical_increment},
                 {"slashIncrement", cfg.refine.refine.slash_increment},
                 {"maxRounds", cfg.refine.refine.max_rounds},
                 {"capVertical", cfg.refine.refine.budget_cap.vertical},
                 {"capSlash", cfg.refine.refine.budget_cap.slash},
                 {"lastQ", cfg.refine.refine.measure.last_q},
                 {"aggregate", cfg.refine.refine.measure.aggregate == RecallAggregate::Mean
                                   ? "mean"
                                   : "fractionAbove"},
                 {"fractionTau", cfg.refine.refine.measure.fraction_tau},
                 {"layers", cfg.refine.layers},
                 {"heads", cfg.refine.heads},
                 {"samplesPerHead", cfg.refine.samples_per_head},
                 {"calibLength", cfg.refine.calib_len},
                 {"headDim", cfg.refine.head_dim},
                 {"plantedStrength", cfg.refine.planted_strength},
                 {"initialVertical", cfg.refine.initial.vertical},
                 {"initialSlash", cfg.refine.initial.slash},
                 {"initialPlanFile", cfg.refine.initial_plan_file},
                 {"grid", grid}};
  j["cost"] = {{"attnCoeff", cfg.cost.attn_coeff},
               {"selfCoeff", cfg.cost.self_coeff},
               {"linCoeff", cfg.cost.lin_coeff},
               {"fixedCost", cfg.cost.fixed_cost}};
  j["pipeline"] = {{"tokens", cfg.pipeline.tokens},
                   {"chunks", cfg.pipeline.chunk_grid},
                   {"stages", cfg.pipeline.stage_grid}};
  j["engine"] = {{"schedulerTime", cfg.engine.scheduler_time},
                 {"modelRunnerTime", cfg.engine.model_runner_time},
                 {"decoderTime", cfg.engine.decoder_time},
                 {"steps", cfg.engine.steps},
                 {"hopLatency", cfg.engine.hop_latency}};
  j["forge"] = {{"fim", cfg.forge.fim},
                {"keyword", cfg.forge.keyword},
                {"position", cfg.forge.position},
                {"reorder", cfg.forge.reorder},
                {"passkey", cfg.forge.passkey},
                {"paragraphCount", cfg.forge.paragraph_count},
                {"paragraphTokens", cfg.forge.paragraph_tokens},
                {"textTokens", cfg.forge.text_tokens},
                {"passkeyTokens", cfg.forge.passkey_tokens},
                {"passkeyDigits", cfg.forge.passkey_digits},
                {"depths", cfg.forge.depths},
                {"longFraction", cfg.forge.long_fraction},
                {"minTokens", cfg.forge.min_tokens},
                {"corpusFile", cfg.forge.corpus_file}};
  return j;
}

namespace {

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t hash = 0xcbf29ce484222325ull) {
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ull;
  }
  return hash;
}

}  // namespace

std::string config_hash(const RunConfig& cfg) {
  const std::uint64_t h = fnv1a64(effective_config(cfg).dump());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

std::uint64_t module_seed(std::uint64_t run_seed, std::string_view module_name) {
  return fnv1a64(module_name) ^ (run_seed * 0x9e3779b97f4a7c15ull + 0x2545f4914f6cdd1dull);
}

}  // namespace longctx
