#include "narrshift/corpus.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "narrshift/errors.hpp"
#include "narrshift/text.hpp"

namespace narrshift {
namespace {

struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
};

bool is_terminal(char32_t cp) { return cp == '.' || cp == '!' || cp == '?' || cp == 0x2026; }

bool is_closer(char32_t cp) {
  return cp == '"' || cp == '\'' || cp == ')' || cp == ']' || cp == 0x201D || cp == 0x2019 ||
         cp == 0xBB;
}

bool is_opener(char32_t cp) {
  return cp == '"' || cp == '\'' || cp == '(' || cp == '[' || cp == 0x201C || cp == 0x2018 ||
         cp == 0xAB;
}

constexpr std::array<std::string_view, 14> kAbbreviations = {
    "mr", "mrs", "ms", "dr", "st", "jr", "sr", "prof", "vs", "etc", "mt", "gen", "capt", "rev"};

// Lowercased word immediately preceding byte offset `end`.
std::string word_before(std::string_view text, std::size_t end) {
  std::size_t begin = end;
  while (begin > 0) {
    const auto c = static_cast<unsigned char>(text[begin - 1]);
    if (!std::isalpha(c)) break;
    --begin;
  }
  std::string word(text.substr(begin, end - begin));
  for (auto& c : word) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return word;
}

Span trimmed(std::string_view text, Span s) {
  const auto sub = text.substr(s.begin, s.end - s.begin);
  const auto t = trim(sub);
  if (t.empty()) return {s.begin, s.begin};
  const auto offset = static_cast<std::size_t>(t.data() - sub.data());
  return {s.begin + offset, s.begin + offset + t.size()};
}

std::vector<Span> split_sentences(std::string_view text, Span range) {
  std::vector<Span> out;
  std::size_t start = range.begin;
  std::size_t pos = range.begin;
  while (pos < range.end) {
    const std::size_t term_at = pos;
    const char32_t cp = decode_utf8(text, pos);
    if (!is_terminal(cp)) continue;
    if (cp == '.' && std::find(kAbbreviations.begin(), kAbbreviations.end(),
                               word_before(text, term_at)) != kAbbreviations.end()) {
      continue;
    }
    std::size_t end = pos;
    std::size_t probe = pos;
    while (probe < range.end) {
      std::size_t next = probe;
      const char32_t c = decode_utf8(text, next);
      if (!is_terminal(c) && !is_closer(c)) break;
      probe = next;
      end = next;
    }
    std::size_t after_space = end;
    bool saw_space = false;
    while (after_space < range.end) {
      std::size_t next = after_space;
      if (!is_space_codepoint(decode_utf8(text, next))) break;
      after_space = next;
      saw_space = true;
    }
    if (after_space >= range.end) break;  // last sentence runs to the end
    if (!saw_space) {
      pos = end;
      continue;
    }
    std::size_t peek = after_space;
    const char32_t first = decode_utf8(text, peek);
    if (!is_upper_codepoint(first) && !is_opener(first) && !(first >= '0' && first <= '9')) {
      pos = end;
      continue;
    }
    out.push_back(trimmed(text, {start, end}));
    start = after_space;
    pos = after_space;
  }
  const Span last = trimmed(text, {start, range.end});
  if (last.end > last.begin) out.push_back(last);
  return out;
}

std::vector<Span> split_paragraphs(std::string_view text) {
  std::vector<Span> out;
  std::size_t start = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    if (text[pos] != '\n') {
      ++pos;
      continue;
    }
    std::size_t probe = pos + 1;
    while (probe < text.size() && (text[probe] == ' ' || text[probe] == '\t' || text[probe] == '\r')) {
      ++probe;
    }
    if (probe < text.size() && text[probe] == '\n') {
      const Span s = trimmed(text, {start, pos});
      if (s.end > s.begin) out.push_back(s);
      while (probe < text.size() && is_space_codepoint(static_cast<unsigned char>(text[probe]))) ++probe;
      start = probe;
      pos = probe;
    } else {
      pos = probe;
    }
  }
  const Span s = trimmed(text, {start, text.size()});
  if (s.end > s.begin) out.push_back(s);
  return out;
}

std::size_t span_tokens(std::string_view text, Span s) {
  return count_tokens(text.substr(s.begin, s.end - s.begin));
}

// Cuts a span after every `max_tokens` word tokens, at the whitespace that
// follows the last kept token.
std::vector<Span> split_by_tokens(std::string_view text, Span s, std::size_t max_tokens) {
  std::vector<Span> out;
  std::size_t start = s.begin;
  std::size_t pos = s.begin;
  std::size_t tokens = 0;
  bool in_word = false;
  while (pos < s.end) {
    const std::size_t at = pos;
    char32_t cp = decode_utf8(text, pos);
    if (cp == 0x2019) cp = '\'';
    const bool word = is_word_codepoint(cp) || (in_word && cp == '\'');
    if (word && !in_word) ++tokens;
    if (!word && is_space_codepoint(cp) && tokens >= max_tokens) {
      const Span piece = trimmed(text, {start, at});
      if (piece.end > piece.begin) out.push_back(piece);
      start = at;
      tokens = 0;
    }
    in_word = word;
  }
  const Span tail = trimmed(text, {start, s.end});
  if (tail.end > tail.begin) out.push_back(tail);
  return out;
}

std::vector<Span> segment(std::string_view text, const ChunkingConfig& cfg) {
  std::vector<Span> units = cfg.mode == ChunkMode::sentence
                                ? split_sentences(text, {0, text.size()})
                                : split_paragraphs(text);
  const std::size_t max_tokens = std::max<std::size_t>(cfg.max_tokens, 1);
  std::vector<Span> bounded;
  for (const Span& u : units) {
    if (span_tokens(text, u) <= max_tokens) {
      bounded.push_back(u);
      continue;
    }
    std::vector<Span> pieces = cfg.mode == ChunkMode::paragraph ? split_sentences(text, u)
                                                                : std::vector<Span>{u};
    for (const Span& p : pieces) {
      if (span_tokens(text, p) <= max_tokens) {
        bounded.push_back(p);
      } else {
        for (const Span& q : split_by_tokens(text, p, max_tokens)) bounded.push_back(q);
      }
    }
  }

  // Merge pass: every chunk must reach min_tokens (and at least one token).
  const std::size_t min_tokens = std::max<std::size_t>(cfg.min_tokens, 1);
  std::vector<std::size_t> counts;
  counts.reserve(bounded.size());
  for (const Span& s : bounded) counts.push_back(span_tokens(text, s));
  std::size_t i = 0;
  while (bounded.size() > 1 && i < bounded.size()) {
    if (counts[i] >= min_tokens) {
      ++i;
      continue;
    }
    const bool has_next = i + 1 < bounded.size();
    const bool has_prev = i > 0;
    bool use_next = has_next;
    if (has_next && has_prev && counts[i] + counts[i + 1] > max_tokens &&
        counts[i] + counts[i - 1] <= max_tokens) {
      use_next = false;
    }
    if (use_next) {
      bounded[i].end = bounded[i + 1].end;
      counts[i] += counts[i + 1];
      bounded.erase(bounded.begin() + static_cast<std::ptrdiff_t>(i) + 1);
      counts.erase(counts.begin() + static_cast<std::ptrdiff_t>(i) + 1);
    } else {
      bounded[i - 1].end = bounded[i].end;
      counts[i - 1] += counts[i];
      bounded.erase(bounded.begin() + static_cast<std::ptrdiff_t>(i));
      counts.erase(counts.begin() + static_cast<std::ptrdiff_t>(i));
      --i;
    }
  }
  return bounded;
}

std::vector<Span> checked_segment(std::string_view text, const ChunkingConfig& cfg) {
  if (is_blank(text)) throw EmptyStory("story text is empty");
  auto spans = segment(text, cfg);
  if (spans.empty() || (spans.size() == 1 && span_tokens(text, spans[0]) == 0)) {
    throw EmptyStory("story text contains no word tokens");
  }
  return spans;
}

std::string chunk_id(std::string_view story_id, std::size_t index) {
  if (story_id.empty()) return "c" + std::to_string(index);
  return std::string(story_id) + "#" + std::to_string(index);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IOError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct RawRecord {
  std::size_t line = 0;
  std::string id;
  std::string text;
  std::optional<Narrative> label;
};

std::vector<RawRecord> parse_jsonl(const std::filesystem::path& path, bool label_required) {
  const std::string content = read_file(path);
  if (content.size() >= 3 && content.compare(0, 3, "\xEF\xBB\xBF") == 0) {
    throw ParseError(1, "byte order mark is not allowed");
  }
  std::vector<RawRecord> out;
  std::set<std::string> seen;
  std::istringstream lines(content);
  std::string line;
  std::size_t number = 0;
  while (std::getline(lines, line)) {
    ++number;
    if (is_blank(line)) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(number, std::string("invalid JSON: ") + e.what());
    }
    if (!record.is_object()) throw ParseError(number, "record is not an object");
    RawRecord raw;
    raw.line = number;
    if (!record.contains("text") || !record["text"].is_string()) {
      throw ParseError(number, "missing string field 'text'");
    }
    raw.text = record["text"].get<std::string>();
    if (record.contains("id")) {
      if (!record["id"].is_string()) throw ParseError(number, "field 'id' must be a string");
      raw.id = record["id"].get<std::string>();
    }
    if (record.contains("label")) {
      if (!record["label"].is_string()) throw ParseError(number, "field 'label' must be a string");
      const auto label = record["label"].get<std::string>();
      if (label != "unlabeled") {
        raw.label = parse_narrative(label);
        if (!raw.label || label == "ind" || label == "col") {
          throw ParseError(number, "unknown label '" + label + "'");
        }
      } else if (label_required) {
        throw ParseError(number, "training records must be labeled");
      }
    } else if (label_required) {
      throw ParseError(number, "missing string field 'label'");
    }
    if (raw.id.empty()) raw.id = content_id(raw.text);
    if (!seen.insert(raw.id).second) throw ParseError(number, "duplicate story id '" + raw.id + "'");
    out.push_back(std::move(raw));
  }
  return out;
}

Story build_story(RawRecord raw, const ChunkingConfig& cfg) {
  try {
    return make_story(std::move(raw.id), std::move(raw.text), raw.label, cfg);
  } catch (const EmptyStory& e) {
    throw ParseError(raw.line, e.what());
  }
}

}  // namespace

std::string_view to_string(ChunkMode mode) {
  return mode == ChunkMode::sentence ? "sentence" : "paragraph";
}

std::optional<ChunkMode> parse_chunk_mode(std::string_view text) {
  if (text == "sentence") return ChunkMode::sentence;
  if (text == "paragraph") return ChunkMode::paragraph;
  return std::nullopt;
}

std::size_t Story::total_tokens() const {
  std::size_t total = 0;
  for (const auto& c : chunks) total += c.token_count;
  return total;
}

std::string Story::assemble() const {
  std::string out;
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    if (i < gaps.size()) out += gaps[i];
    out += chunks[i].text;
  }
  if (gaps.size() > chunks.size()) out += gaps.back();
  return out;
}

Story Story::with_chunk_text(std::size_t index, std::string new_text) const {
  if (index >= chunks.size()) throw LookupError("chunk index out of range");
  Story copy = *this;
  copy.chunks[index].token_count = count_tokens(new_text);
  copy.chunks[index].text = std::move(new_text);
  copy.text = copy.assemble();
  return copy;
}

std::vector<Chunk> chunk_story(std::string_view text, const ChunkingConfig& cfg,
                               std::string_view story_id) {
  const auto spans = checked_segment(text, cfg);
  std::vector<Chunk> chunks;
  chunks.reserve(spans.size());
  for (std::size_t i = 0; i < spans.size(); ++i) {
    Chunk c;
    c.id = chunk_id(story_id, i);
    c.story_id = std::string(story_id);
    c.index = i;
    c.text = std::string(text.substr(spans[i].begin, spans[i].end - spans[i].begin));
    c.token_count = count_tokens(c.text);
    chunks.push_back(std::move(c));
  }
  return chunks;
}

std::string content_id(std::string_view text) { return "s-" + sha256_hex(text).substr(0, 12); }

Story make_story(std::string id, std::string text, std::optional<Narrative> label,
                 const ChunkingConfig& cfg) {
  if (id.empty()) id = content_id(text);
  const auto spans = checked_segment(text, cfg);
  Story story;
  story.id = std::move(id);
  story.label = label;
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < spans.size(); ++i) {
    story.gaps.emplace_back(text.substr(cursor, spans[i].begin - cursor));
    Chunk c;
    c.id = chunk_id(story.id, i);
    c.story_id = story.id;
    c.index = i;
    c.text = text.substr(spans[i].begin, spans[i].end - spans[i].begin);
    c.token_count = count_tokens(c.text);
    story.chunks.push_back(std::move(c));
    cursor = spans[i].end;
  }
  story.gaps.emplace_back(text.substr(cursor));
  story.text = std::move(text);
  return story;
}

Corpus load_corpus(const std::filesystem::path& path, const ChunkingConfig& cfg,
                   std::optional<Narrative> expected) {
  auto records = parse_jsonl(path, /*label_required=*/true);
  Corpus corpus;
  if (expected) {
    corpus.orientation = *expected;
  } else if (!records.empty()) {
    corpus.orientation = *records.front().label;
  }
  for (auto& raw : records) {
    if (*raw.label != corpus.orientation) {
      throw LabelError("line " + std::to_string(raw.line) + ": story '" + raw.id + "' is labeled " +
                       std::string(to_string(*raw.label)) + " but the corpus is " +
                       std::string(to_string(corpus.orientation)));
    }
    corpus.stories.push_back(build_story(std::move(raw), cfg));
  }
  return corpus;
}

std::vector<Story> load_stories(const std::filesystem::path& path, const ChunkingConfig& cfg) {
  auto records = parse_jsonl(path, /*label_required=*/false);
  std::vector<Story> stories;
  stories.reserve(records.size());
  for (auto& raw : records) stories.push_back(build_story(std::move(raw), cfg));
  return stories;
}

std::string serialize_corpus(const std::vector<Story>& stories) {
  std::string out;
  for (const auto& s : stories) {
    nlohmann::json record;
    record["id"] = s.id;
    record["text"] = s.text;
    record["label"] = s.label ? std::string(to_string(*s.label)) : std::string("unlabeled");
    out += record.dump();
    out += '\n';
  }
  return out;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IOError("cannot write " + path.string());
  out << serialize_corpus(corpus.stories);
  if (!out) throw IOError("write failed for " + path.string());
}

std::string corpus_hash(const std::vector<Story>& stories) {
  return sha256_hex(serialize_corpus(stories));
}

}  // namespace narrshift
