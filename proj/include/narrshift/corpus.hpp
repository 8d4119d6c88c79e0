#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "narrshift/narrative.hpp"

namespace narrshift {

enum class ChunkMode { sentence, paragraph };

std::string_view to_string(ChunkMode mode);
std::optional<ChunkMode> parse_chunk_mode(std::string_view text);

struct ChunkingConfig {
  ChunkMode mode = ChunkMode::sentence;
  std::size_t min_tokens = 8;
  std::size_t max_tokens = 120;
};

struct Chunk {
  std::string id;
  std::string story_id;
  std::size_t index = 0;
  std::string text;
  std::size_t token_count = 0;

  friend bool operator==(const Chunk&, const Chunk&) = default;
};

// A story keeps the whitespace between its chunks so that the original text
// can be reassembled byte for byte: text == gaps[0] + c0 + gaps[1] + ... + gaps[n].
struct Story {
  std::string id;
  std::string text;
  std::optional<Narrative> label;
  std::vector<Chunk> chunks;
  std::vector<std::string> gaps;

  std::size_t total_tokens() const;
  std::string assemble() const;
  // Copy of this story with chunk `index` replaced; token count and text follow.
  Story with_chunk_text(std::size_t index, std::string new_text) const;

  friend bool operator==(const Story&, const Story&) = default;
};

struct Corpus {
  std::vector<Story> stories;
  Narrative orientation = Narrative::individualistic;
};

// Segments `text` into chunks. Throws EmptyStory for blank text or text
// without a single word token.
std::vector<Chunk> chunk_story(std::string_view text, const ChunkingConfig& cfg = {},
                               std::string_view story_id = {});

// Builds a fully chunked story. An empty id falls back to a content hash.
Story make_story(std::string id, std::string text, std::optional<Narrative> label,
                 const ChunkingConfig& cfg = {});

std::string content_id(std::string_view text);

// JSONL corpus: {"id","text","label"} per line. The orientation is taken
// from `expected` when given, otherwise from the first record.
Corpus load_corpus(const std::filesystem::path& path, const ChunkingConfig& cfg = {},
                   std::optional<Narrative> expected = std::nullopt);

// Same format, but `label` may be absent or "unlabeled" (stories to transform).
std::vector<Story> load_stories(const std::filesystem::path& path, const ChunkingConfig& cfg = {});

std::string serialize_corpus(const std::vector<Story>& stories);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

// SHA-256 of the canonical JSONL serialization.
std::string corpus_hash(const std::vector<Story>& stories);

}  // namespace narrshift
