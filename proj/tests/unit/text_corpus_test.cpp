#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "narrshift/corpus.hpp"
#include "narrshift/errors.hpp"
#include "narrshift/text.hpp"
#include "support.hpp"

using namespace narrshift;
using testing_support::fixture;

namespace {

void write_file(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

}  // namespace

TEST(Tokenize, LowercasesAndDropsPunctuation) {
  EXPECT_EQ(tokenize("Hello, World! It's 2024."),
            (std::vector<std::string>{"hello", "world", "it's", "2024"}));
  EXPECT_TRUE(tokenize(" ... !? ").empty());
}

TEST(Tokenize, CurlyApostropheFolds) {
  EXPECT_EQ(tokenize("don’t"), (std::vector<std::string>{"don't"}));
  // leading and trailing apostrophes are not part of a word
  EXPECT_EQ(tokenize("'quoted'"), (std::vector<std::string>{"quoted"}));
}

TEST(Tokenize, NonAsciiLettersStayInWords) {
  EXPECT_EQ(tokenize("Café NAÏVE"), (std::vector<std::string>{"café", "naïve"}));
}

TEST(Tokenize, FixtureCountsMatchRegexOracle) {
  // counts from [a-z0-9]+('[a-z0-9]+)* over the lowercased text
  const std::vector<std::size_t> train = {80, 81, 68, 55, 55, 44};
  const std::vector<std::size_t> c2i = {55, 72, 69, 67, 83, 85, 98, 57, 71, 85};
  const auto corpus = load_corpus(fixture("train_individualistic.jsonl"));
  ASSERT_EQ(corpus.stories.size(), train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    EXPECT_EQ(count_tokens(corpus.stories[i].text), train[i]);
    EXPECT_EQ(corpus.stories[i].total_tokens(), train[i]);
  }
  const auto stories = load_stories(fixture("stories_c2i.jsonl"));
  ASSERT_EQ(stories.size(), c2i.size());
  for (std::size_t i = 0; i < c2i.size(); ++i) EXPECT_EQ(stories[i].total_tokens(), c2i[i]);
}

TEST(Sha256, KnownVectors) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Format, LevelsAndFixed) {
  EXPECT_EQ(format_level(0.0), "0.0");
  EXPECT_EQ(format_level(0.6), "0.6");
  EXPECT_EQ(format_level(1.0), "1.0");
  EXPECT_EQ(format_fixed(66.666666, 4), "66.6667");
  EXPECT_EQ(format_fixed(2.0, 2), "2.00");
}

TEST(Chunking, SentencesWithAbbreviationsAndMerging) {
  ChunkingConfig cfg;
  cfg.min_tokens = 3;
  const auto chunks =
      chunk_story("Mr. Smith went to the market today. He bought fresh bread there. Then home.", cfg);
  ASSERT_EQ(chunks.size(), 2u);
  EXPECT_EQ(chunks[0].text, "Mr. Smith went to the market today.");
  // "Then home." has two tokens and folds into its neighbour
  EXPECT_EQ(chunks[1].text, "He bought fresh bread there. Then home.");
  EXPECT_EQ(chunks[1].token_count, 7u);
}

TEST(Chunking, ParagraphFixtureHandCount) {
  std::ifstream in(fixture("three_paragraphs.txt"));
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  ChunkingConfig cfg;
  cfg.mode = ChunkMode::paragraph;
  const auto chunks = chunk_story(text, cfg);
  ASSERT_EQ(chunks.size(), 3u);
  EXPECT_EQ(chunks[0].token_count, 14u);
  EXPECT_EQ(chunks[1].token_count, 12u);
  EXPECT_EQ(chunks[2].token_count, 12u);
}

TEST(Chunking, LongSentenceIsSplitByTokens) {
  std::string text;
  for (int i = 0; i < 250; ++i) text += "word ";
  ChunkingConfig cfg;
  const auto chunks = chunk_story(text, cfg);
  ASSERT_EQ(chunks.size(), 3u);
  for (const auto& c : chunks) EXPECT_LE(c.token_count, cfg.max_tokens);
}

TEST(Chunking, EmptyStoriesAreRejected) {
  EXPECT_THROW(chunk_story(""), EmptyStory);
  EXPECT_THROW(chunk_story("   \n\t "), EmptyStory);
  EXPECT_THROW(chunk_story("... !!!"), EmptyStory);
}

TEST(Chunking, ReassemblyIsByteExactOnRandomTexts) {
  std::mt19937_64 rng(11);
  const std::vector<std::string> parts = {"The", "cat", "sat.", "  ", "\n\n", "Dr.", "Hello!",
                                          "“Quoted.”", "why?", "it's", "\t", "end."};
  for (int trial = 0; trial < 200; ++trial) {
    std::string text;
    const int n = 1 + static_cast<int>(rng() % 40);
    for (int i = 0; i < n; ++i) {
      text += parts[rng() % parts.size()];
      if (rng() % 3) text += ' ';
    }
    if (count_tokens(text) == 0) continue;
    for (auto mode : {ChunkMode::sentence, ChunkMode::paragraph}) {
      ChunkingConfig cfg;
      cfg.mode = mode;
      const Story s = make_story("s", text, std::nullopt, cfg);
      EXPECT_EQ(s.assemble(), text);
      std::size_t sum = 0;
      for (const auto& c : s.chunks) sum += c.token_count;
      EXPECT_EQ(sum, count_tokens(text));
    }
  }
}

TEST(Corpus, FixtureLoadsWithHandCountedChunks) {
  const auto corpus = load_corpus(fixture("train_individualistic.jsonl"));
  EXPECT_EQ(corpus.orientation, Narrative::individualistic);
  const std::vector<std::size_t> sentences = {7, 7, 6, 5, 5, 4};
  ASSERT_EQ(corpus.stories.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(corpus.stories[i].chunks.size(), sentences[i]);
    EXPECT_EQ(corpus.stories[i].chunks[0].id, corpus.stories[i].id + "#0");
  }
}

TEST(Corpus, HashMatchesCanonicalSerializationOracle) {
  // sha256 of json.dumps(sort_keys=True, separators=(',', ':')) lines
  const auto corpus = load_corpus(fixture("train_individualistic.jsonl"));
  EXPECT_EQ(corpus_hash(corpus.stories),
            "b0d9233610a5e9116dbd7b47fb85128ea1594a4fa47b1e97783193ae3a57c2a5");
  EXPECT_EQ(corpus_hash(load_stories(fixture("stories_c2i.jsonl"))),
            "f777dd984c973402ae67068d542c769fb9313e098f8debfcd655b03ee092fdd3");
}

TEST(Corpus, SaveLoadRoundTrip) {
  const auto dir = testing_support::scratch("corpus_roundtrip");
  const auto corpus = load_corpus(fixture("train_collectivistic.jsonl"));
  save_corpus(corpus, dir / "c.jsonl");
  const auto again = load_corpus(dir / "c.jsonl");
  EXPECT_EQ(again.stories, corpus.stories);
  EXPECT_EQ(again.orientation, Narrative::collectivistic);
}

TEST(Corpus, MalformedInputsNameTheLine) {
  const auto dir = testing_support::scratch("corpus_errors");
  write_file(dir / "bad.jsonl",
             "{\"id\":\"a\",\"text\":\"One two three four five six seven eight.\",\"label\":\"individualistic\"}\n"
             "{not json}\n");
  try {
    load_corpus(dir / "bad.jsonl");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  write_file(dir / "mixed.jsonl",
             "{\"id\":\"a\",\"text\":\"One two three.\",\"label\":\"individualistic\"}\n"
             "{\"id\":\"b\",\"text\":\"Four five six.\",\"label\":\"collectivistic\"}\n");
  EXPECT_THROW(load_corpus(dir / "mixed.jsonl"), LabelError);
  write_file(dir / "dup.jsonl",
             "{\"id\":\"a\",\"text\":\"One two.\",\"label\":\"individualistic\"}\n"
             "{\"id\":\"a\",\"text\":\"Three four.\",\"label\":\"individualistic\"}\n");
  EXPECT_THROW(load_corpus(dir / "dup.jsonl"), ParseError);
  write_file(dir / "nolabel.jsonl", "{\"id\":\"a\",\"text\":\"One two.\"}\n");
  EXPECT_THROW(load_corpus(dir / "nolabel.jsonl"), ParseError);
  EXPECT_EQ(load_stories(dir / "nolabel.jsonl").size(), 1u);
  write_file(dir / "empty_text.jsonl", "{\"id\":\"a\",\"text\":\"  \",\"label\":\"individualistic\"}\n");
  EXPECT_THROW(load_corpus(dir / "empty_text.jsonl"), ParseError);
  write_file(dir / "bom.jsonl", "\xEF\xBB\xBF{\"id\":\"a\",\"text\":\"x\"}\n");
  EXPECT_THROW(load_stories(dir / "bom.jsonl"), ParseError);
  EXPECT_THROW(load_stories(dir / "missing.jsonl"), IOError);
}

TEST(Corpus, MissingIdFallsBackToContentHash) {
  const auto dir = testing_support::scratch("corpus_ids");
  write_file(dir / "s.jsonl", "{\"text\":\"One two three four five six seven eight.\"}\n");
  const auto stories = load_stories(dir / "s.jsonl");
  ASSERT_EQ(stories.size(), 1u);
  EXPECT_EQ(stories[0].id, content_id(stories[0].text));
  EXPECT_EQ(stories[0].id.rfind("s-", 0), 0u);
}

TEST(Story, WithChunkTextKeepsOtherChunks) {
  const auto stories = load_stories(fixture("stories_c2i.jsonl"));
  const Story& s = stories[1];
  const Story t = s.with_chunk_text(1, "A brand new sentence sits right here in place.");
  ASSERT_EQ(t.chunks.size(), s.chunks.size());
  for (std::size_t i = 0; i < s.chunks.size(); ++i) {
    if (i != 1) EXPECT_EQ(t.chunks[i].text, s.chunks[i].text);
  }
  EXPECT_EQ(t.chunks[1].token_count, 9u);
  EXPECT_EQ(t.text, t.assemble());
  EXPECT_THROW(s.with_chunk_text(99, "x"), LookupError);
}
