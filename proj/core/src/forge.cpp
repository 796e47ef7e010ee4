#include "longctx/forge.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "longctx/errors.hpp"

namespace longctx {

namespace {

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
  std::size_t count = 0;
  std::size_t pos = haystack.find(needle);
  while (pos != std::string_view::npos) {
    ++count;
    pos = haystack.find(needle, pos + 1);
  }
  return count;
}

std::vector<std::string> split_paragraphs(std::string_view context) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= context.size()) {
    const std::size_t next = context.find(kParagraphSeparator, pos);
    if (next == std::string_view::npos) {
      out.emplace_back(context.substr(pos));
      break;
    }
    out.emplace_back(context.substr(pos, next - pos));
    pos = next + kParagraphSeparator.size();
  }
  return out;
}

std::string join_paragraphs(std::span<const std::string> paragraphs) {
  std::string out;
  for (std::size_t i = 0; i < paragraphs.size(); ++i) {
    if (i > 0) out += kParagraphSeparator;
    out += paragraphs[i];
  }
  return out;
}

// A paragraph containing the separator would not split back.
void check_separator_free(std::span<const std::string> paragraphs) {
  for (const std::string& p : paragraphs) {
    if (p.find(kParagraphSeparator) != std::string::npos) {
      fail(errkind::domain, "paragraph contains the paragraph separator");
    }
  }
}

std::vector<std::size_t> parse_index_list(std::string_view text) {
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find(',', pos);
    if (end == std::string_view::npos) end = text.size();
    out.push_back(std::stoull(std::string(text.substr(pos, end - pos))));
    pos = end + 1;
  }
  return out;
}

bool is_permutation_of_iota(std::span<const std::size_t> perm) {
  std::vector<bool> seen(perm.size(), false);
  for (std::size_t p : perm) {
    if (p >= perm.size() || seen[p]) return false;
    seen[p] = true;
  }
  return true;
}

}  // namespace

std::string_view to_string(SampleKind kind) {
  switch (kind) {
    case SampleKind::Fim: return "fim";
    case SampleKind::KeywordRetrieval: return "keywordRetrieval";
    case SampleKind::PositionRetrieval: return "positionRetrieval";
    case SampleKind::Reorder: return "reorder";
    case SampleKind::Passkey: return "passkey";
  }
  fail(errkind::domain, "unknown sample kind");
}

SampleKind sample_kind_from_string(std::string_view name) {
  if (name == "fim") return SampleKind::Fim;
  if (name == "keywordRetrieval") return SampleKind::KeywordRetrieval;
  if (name == "positionRetrieval") return SampleKind::PositionRetrieval;
  if (name == "reorder") return SampleKind::Reorder;
  if (name == "passkey") return SampleKind::Passkey;
  fail(errkind::parse, "unknown sample kind \"" + std::string(name) + "\"");
}

std::vector<std::string_view> whitespace_tokens(std::string_view text) {
  std::vector<std::string_view> tokens;
  std::size_t pos = 0;
  while (pos < text.size()) {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    if (pos >= text.size()) break;
    std::size_t end = pos;
    while (end < text.size() && !std::isspace(static_cast<unsigned char>(text[end]))) ++end;
    tokens.push_back(text.substr(pos, end - pos));
    pos = end;
  }
  return tokens;
}

std::size_t whitespace_token_count(std::string_view text) {
  return whitespace_tokens(text).size();
}

SyntheticSample make_fim(std::string_view text, std::size_t span_begin,
                         std::size_t span_end) {
  if (!(span_begin < span_end && span_end <= text.size())) {
    fail(errkind::range, "fim span must satisfy 0 <= start < end <= length");
  }
  SyntheticSample sample;
  sample.kind = SampleKind::Fim;
  sample.context.reserve(text.size());
  sample.context.append(text.substr(0, span_begin));
  sample.context.append(kFimGap);
  sample.context.append(text.substr(span_end));
  sample.answer = std::string(text.substr(span_begin, span_end - span_begin));
  sample.query = "Reconstruct the text that belongs at the gap marker.";
  sample.meta = {{"spanStart", span_begin}, {"spanEnd", span_end}};
  return sample;
}

SyntheticSample make_retrieval(std::span<const std::string> paragraphs,
                               std::string_view keyword) {
  if (paragraphs.empty()) fail(errkind::range, "retrieval needs at least one paragraph");
  if (keyword.empty()) fail(errkind::range, "keyword must not be empty");
  check_separator_free(paragraphs);
  std::size_t match = paragraphs.size();
  std::size_t matches = 0;
  for (std::size_t i = 0; i < paragraphs.size(); ++i) {
    if (paragraphs[i].find(keyword) != std::string::npos) {
      match = i;
      ++matches;
    }
  }
  if (matches == 0) fail(errkind::range, "keyword occurs in no paragraph");
  if (matches > 1) {
    fail(errkind::ambiguous_keyword, "keyword occurs in more than one paragraph");
  }
  SyntheticSample sample;
  sample.kind = SampleKind::KeywordRetrieval;
  sample.context = join_paragraphs(paragraphs);
  sample.query = "Return the full paragraph that contains the keyword \"" +
                 std::string(keyword) + "\".";
  sample.answer = paragraphs[match];
  sample.meta = {{"paragraphIndex", match}, {"keyword", std::string(keyword)}};
  return sample;
}

SyntheticSample make_retrieval(std::span<const std::string> paragraphs,
                               RetrievalKind kind, std::size_t anchor) {
  if (paragraphs.empty()) fail(errkind::range, "retrieval needs at least one paragraph");
  if (anchor >= paragraphs.size()) fail(errkind::range, "anchor index out of range");
  check_separator_free(paragraphs);
  std::size_t target = 0;
  std::string direction;
  if (kind == RetrievalKind::Before) {
    if (anchor == 0) fail(errkind::range, "paragraph 0 has no predecessor");
    target = anchor - 1;
    direction = "before";
  } else if (kind == RetrievalKind::After) {
    if (anchor + 1 >= paragraphs.size()) {
      fail(errkind::range, "the last paragraph has no successor");
    }
    target = anchor + 1;
    direction = "after";
  } else {
    fail(errkind::config, "keyword retrieval takes the keyword overload");
  }
  SyntheticSample sample;
  sample.kind = SampleKind::PositionRetrieval;
  sample.context = join_paragraphs(paragraphs);
  sample.query = "Return the full paragraph immediately " + direction + " paragraph " +
                 std::to_string(anchor) + " (0-based).";
  sample.answer = paragraphs[target];
  sample.meta = {{"paragraphIndex", target},
                 {"anchorIndex", anchor},
                 {"direction", direction}};
  return sample;
}

SyntheticSample make_reorder(std::span<const std::string> paragraphs,
                             std::span<const std::size_t> permutation) {
  if (paragraphs.empty()) fail(errkind::range, "reorder needs at least one paragraph");
  check_separator_free(paragraphs);
  if (permutation.size() != paragraphs.size() || !is_permutation_of_iota(permutation)) {
    fail(errkind::domain, "permutation must be a bijection on the paragraph indices");
  }
  std::vector<std::string> shuffled(paragraphs.size());
  for (std::size_t p = 0; p < permutation.size(); ++p) {
    shuffled[p] = paragraphs[permutation[p]];
  }
  std::vector<std::size_t> inverse(permutation.size());
  for (std::size_t p = 0; p < permutation.size(); ++p) {
    inverse[permutation[p]] = p;
  }
  std::string answer;
  for (std::size_t i = 0; i < inverse.size(); ++i) {
    if (i > 0) answer += ',';
    answer += std::to_string(inverse[i]);
  }
  SyntheticSample sample;
  sample.kind = SampleKind::Reorder;
  sample.context = join_paragraphs(shuffled);
  sample.query =
      "The paragraphs are shuffled. Give the positions to read them in (comma-"
      "separated, 0-based) so the original order is restored.";
  sample.answer = answer;
  sample.meta = {{"permutation", std::vector<std::size_t>(permutation.begin(),
                                                          permutation.end())}};
  return sample;
}

SyntheticSample make_passkey(std::size_t target_tokens, double depth,
                             std::string_view passkey, std::string_view filler) {
  if (!(depth >= 0.0 && depth <= 1.0)) fail(errkind::range, "depth must lie in [0, 1]");
  if (passkey.empty() ||
      !std::all_of(passkey.begin(), passkey.end(),
                   [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
    fail(errkind::domain, "passkey must be a non-empty digit string");
  }
  if (filler.find(passkey) != std::string_view::npos) {
    fail(errkind::config, "filler text collides with the passkey");
  }
  const std::string carrier = "The pass key is " + std::string(passkey) + ". Remember it.";
  const auto carrier_tokens = whitespace_tokens(carrier);
  if (target_tokens < carrier_tokens.size()) {
    fail(errkind::config, "target length too small to hold the carrier sentence");
  }
  const auto filler_tokens = whitespace_tokens(filler);
  if (filler_tokens.empty() && target_tokens > carrier_tokens.size()) {
    fail(errkind::config, "filler text must contain at least one token");
  }

  const std::size_t filler_needed = target_tokens - carrier_tokens.size();
  const std::size_t before = std::size_t(std::llround(depth * double(filler_needed)));

  std::string document;
  std::size_t cursor = 0;
  auto append_filler = [&](std::size_t count) {
    for (std::size_t t = 0; t < count; ++t) {
      if (!document.empty()) document += ' ';
      document += filler_tokens[cursor % filler_tokens.size()];
      ++cursor;
    }
  };
  append_filler(before);
  if (!document.empty()) document += ' ';
  document += carrier;
  append_filler(filler_needed - before);

  SyntheticSample sample;
  sample.kind = SampleKind::Passkey;
  sample.context = std::move(document);
  sample.query = std::string(kPasskeyQuery);
  sample.answer = std::string(passkey);
  sample.meta = {{"depth", depth},
                 {"targetTokens", target_tokens},
                 {"carrierTokenOffset", before},
                 {"documentTokens", target_tokens}};
  return sample;
}

std::size_t emit_jsonl(std::span<const SyntheticSample> samples,
                       const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(errkind::io, "cannot open " + path.string() + " for writing");
  for (const SyntheticSample& sample : samples) {
    const nlohmann::json line = {{"kind", to_string(sample.kind)},
                                 {"context", sample.context},
                                 {"query", sample.query},
                                 {"answer", sample.answer},
                                 {"meta", sample.meta}};
    out << line.dump() << '\n';
  }
  out.flush();
  if (!out) fail(errkind::io, "write to " + path.string() + " failed");
  return samples.size();
}

std::vector<SyntheticSample> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errkind::io, "cannot open " + path.string() + " for reading");
  std::vector<SyntheticSample> samples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      fail(errkind::parse,
           path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    SyntheticSample sample;
    sample.kind = sample_kind_from_string(j.at("kind").get<std::string>());
    sample.context = j.at("context").get<std::string>();
    sample.query = j.at("query").get<std::string>();
    sample.answer = j.at("answer").get<std::string>();
    sample.meta = j.at("meta");
    samples.push_back(std::move(sample));
  }
  return samples;
}

bool verify_sample(const SyntheticSample& sample) {
  try {
    switch (sample.kind) {
      case SampleKind::Fim: {
        const std::size_t begin = sample.meta.at("spanStart").get<std::size_t>();
        const std::size_t end = sample.meta.at("spanEnd").get<std::size_t>();
        if (!(begin < end)) return false;
        if (end - begin != sample.answer.size()) return false;
        if (sample.context.size() < begin + kFimGap.size()) return false;
        if (sample.context.substr(begin, kFimGap.size()) != kFimGap) return false;
        const std::string original = sample.context.substr(0, begin) + sample.answer +
                                     sample.context.substr(begin + kFimGap.size());
        return original.substr(begin, end - begin) == sample.answer &&
               end <= original.size();
      }
      case SampleKind::KeywordRetrieval: {
        const auto paragraphs = split_paragraphs(sample.context);
        const std::size_t idx = sample.meta.at("paragraphIndex").get<std::size_t>();
        const std::string keyword = sample.meta.at("keyword").get<std::string>();
        if (idx >= paragraphs.size()) return false;
        std::size_t matches = 0;
        for (const auto& p : paragraphs) {
          if (p.find(keyword) != std::string::npos) ++matches;
        }
        return matches == 1 &&
               paragraphs[idx].find(keyword) != std::string::npos &&
               sample.answer == paragraphs[idx];
      }
      case SampleKind::PositionRetrieval: {
        const auto paragraphs = split_paragraphs(sample.context);
        const std::size_t idx = sample.meta.at("paragraphIndex").get<std::size_t>();
        const std::size_t anchor = sample.meta.at("anchorIndex").get<std::size_t>();
        const std::string direction = sample.meta.at("direction").get<std::string>();
        if (idx >= paragraphs.size() || anchor >= paragraphs.size()) return false;
        if (direction == "before" && idx + 1 != anchor) return false;
        if (direction == "after" && anchor + 1 != idx) return false;
        if (direction != "before" && direction != "after") return false;
        return sample.answer == paragraphs[idx];
      }
      case SampleKind::Reorder: {
        const auto paragraphs = split_paragraphs(sample.context);
        const auto perm = sample.meta.at("permutation").get<std::vector<std::size_t>>();
        const auto answer = parse_index_list(sample.answer);
        if (perm.size() != paragraphs.size() || answer.size() != perm.size()) return false;
        if (!is_permutation_of_iota(perm) || !is_permutation_of_iota(answer)) return false;
        for (std::size_t p = 0; p < perm.size(); ++p) {
          if (answer[perm[p]] != p) return false;
        }
        return true;
      }
      case SampleKind::Passkey: {
        if (count_occurrences(sample.context, sample.answer) != 1) return false;
        const std::size_t target = sample.meta.at("targetTokens").get<std::size_t>();
        const double depth = sample.meta.at("depth").get<double>();
        const std::size_t offset = sample.meta.at("carrierTokenOffset").get<std::size_t>();
        const auto tokens = whitespace_tokens(sample.context);
        const double slack = 0.02 * double(target);
        if (std::abs(double(tokens.size()) - double(target)) > slack) return false;
        // The carrier starts at `offset`; its passkey token is offset + 4.
        if (offset + 4 >= tokens.size()) return false;
        if (tokens[offset + 4].find(sample.answer) == std::string_view::npos) return false;
        const double expected = depth * double(target);
        return std::abs(double(offset) - expected) <= slack + 16.0;
      }
    }
  } catch (const std::exception&) {
    return false;
  }
  return false;
}

}  // namespace longctx
