#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace longctx {

enum class SampleKind { Fim, KeywordRetrieval, PositionRetrieval, Reorder, Passkey };

std::string_view to_string(SampleKind kind);
SampleKind sample_kind_from_string(std::string_view name);

/// One forged training record. The answer is always reproducible from
/// context + meta alone; verify_sample checks exactly that.
struct SyntheticSample {
  SampleKind kind = SampleKind::Fim;
  std::string context;
  std::string query;
  std::string answer;
  nlohmann::json meta;
};

// Fixed artifact constants; checkability beats prompt realism here.
inline constexpr std::string_view kFimGap = "⟨GAP⟩";
inline constexpr std::string_view kParagraphSeparator = "\n\n";
inline constexpr std::string_view kPasskeyQuery = "What is the pass key?";

/// Removes text[span_begin, span_end) and marks the hole with the gap
/// sentinel; prefix + answer + suffix reconstructs the original exactly.
SyntheticSample make_fim(std::string_view text, std::size_t span_begin,
                         std::size_t span_end);

enum class RetrievalKind { Keyword, Before, After };

/// Keyword retrieval: the keyword must occur in exactly one paragraph.
SyntheticSample make_retrieval(std::span<const std::string> paragraphs,
                               std::string_view keyword);

/// Positional retrieval: the paragraph before/after the anchor index.
SyntheticSample make_retrieval(std::span<const std::string> paragraphs,
                               RetrievalKind kind, std::size_t anchor);

/// Shuffled paragraphs; the answer is the inverse permutation (applying it to
/// the shown order restores the original sequence).
SyntheticSample make_reorder(std::span<const std::string> paragraphs,
                             std::span<const std::size_t> permutation);

/// A document of exactly target_tokens whitespace tokens with the passkey
/// carrier sentence placed at the given relative depth. The digit string
/// occurs exactly once; filler containing it is rejected.
SyntheticSample make_passkey(std::size_t target_tokens, double depth,
                             std::string_view passkey, std::string_view filler);

std::size_t emit_jsonl(std::span<const SyntheticSample> samples,
                       const std::filesystem::path& path);
std::vector<SyntheticSample> read_jsonl(const std::filesystem::path& path);

/// Model-free checker: reproduces the answer from context + meta.
bool verify_sample(const SyntheticSample& sample);

// Whitespace tokenization is the desk-scale token counter; swap these out to
// plug a different one into length accounting.
std::vector<std::string_view> whitespace_tokens(std::string_view text);
std::size_t whitespace_token_count(std::string_view text);

}  // namespace longctx
