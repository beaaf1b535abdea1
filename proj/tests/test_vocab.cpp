#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "unmt/vocab.hpp"

using namespace unmt;

namespace {

std::vector<Tokens> tokenized(std::initializer_list<const char*> lines) {
  std::vector<Tokens> out;
  for (const char* line : lines) {
    Tokens sentence;
    std::istringstream words(line);
    std::string w;
    while (words >> w) sentence.push_back(w);
    out.push_back(std::move(sentence));
  }
  return out;
}

}  // namespace

TEST_CASE("reserved ids come first, then forcing symbols in sorted order") {
  auto sentences = tokenized({"a b", "b"});
  Vocabulary v = Vocabulary::build({&sentences}, {"en", "de", "fr"});
  REQUIRE(v.token_of(0) == "<unk>");
  REQUIRE(v.token_of(1) == "</s>");
  REQUIRE(v.token_of(2) == "<s>");
  REQUIRE(v.token_of(3) == "<DE>");
  REQUIRE(v.token_of(4) == "<EN>");
  REQUIRE(v.token_of(5) == "<FR>");
  REQUIRE(v.reserved_count() == 6);
  REQUIRE(v.id_of("<unk>") == kUnkId);
  REQUIRE(v.id_of("</s>") == kEosId);
  REQUIRE(v.id_of("<s>") == kBosId);
}

TEST_CASE("learned tokens rank by frequency with lexicographic ties") {
  auto sentences = tokenized({"b b b", "a a c", "c"});
  Vocabulary v = Vocabulary::build({&sentences}, {});
  REQUIRE(v.reserved_count() == 3);
  REQUIRE(v.token_of(3) == "b");   // count 3
  REQUIRE(v.token_of(4) == "a");   // count 2, tie with c, a < c
  REQUIRE(v.token_of(5) == "c");
  REQUIRE(v.size() == 6);
}

TEST_CASE("short list caps learned tokens and lookups fall back to UNK") {
  auto sentences = tokenized({"x x x y y z"});
  Vocabulary v = Vocabulary::build({&sentences}, {}, 2);
  REQUIRE(v.size() == 5);  // 3 reserved + x + y
  REQUIRE(v.contains("x"));
  REQUIRE(v.contains("y"));
  REQUIRE_FALSE(v.contains("z"));
  REQUIRE(v.id_of("z") == kUnkId);
  REQUIRE(v.id_of("never-seen") == kUnkId);
}

TEST_CASE("forcing symbols in the text never rank as learned tokens") {
  auto sentences = tokenized({"<EN> @en@hello <EN>", "<EN> @en@world <EN>"});
  Vocabulary v = Vocabulary::build({&sentences}, {"en"});
  REQUIRE(v.reserved_count() == 4);
  REQUIRE(v.id_of("<EN>") == 3);
  REQUIRE(v.size() == 6);  // reserved + two coded words
}

TEST_CASE("encode and decode round trip through ids") {
  auto sentences = tokenized({"hello world"});
  Vocabulary v = Vocabulary::build({&sentences}, {});
  Tokens input = {"hello", "world", "missing"};
  std::vector<int> ids = v.encode(input);
  REQUIRE(ids.size() == 3);
  REQUIRE(ids[2] == kUnkId);
  Tokens back = v.decode(ids);
  REQUIRE(back == Tokens{"hello", "world", "<unk>"});
  REQUIRE_THROWS_AS(v.token_of(static_cast<int>(v.size())), Error);
}

TEST_CASE("vocabulary file round trip preserves ids and reserved count") {
  auto sentences = tokenized({"alpha beta beta", "<DE> @de@wort <DE>"});
  Vocabulary v = Vocabulary::build({&sentences}, {"de", "en"});
  auto path = std::filesystem::temp_directory_path() / "vocab.txt";
  v.save(path.string());
  Vocabulary back = Vocabulary::load(path.string());
  REQUIRE(back == v);
  REQUIRE(back.reserved_count() == v.reserved_count());
  REQUIRE(back.id_of("beta") == v.id_of("beta"));
}

TEST_CASE("malformed vocabulary files are rejected") {
  auto dir = std::filesystem::temp_directory_path();
  {
    std::ofstream out(dir / "vocab_dup.txt");
    out << "<unk>\n</s>\n<s>\nfoo\nfoo\n";
  }
  REQUIRE_THROWS_WITH(Vocabulary::load((dir / "vocab_dup.txt").string()),
                      Catch::Matchers::ContainsSubstring("repeats"));
  {
    std::ofstream out(dir / "vocab_head.txt");
    out << "foo\nbar\nbaz\n";
  }
  REQUIRE_THROWS_WITH(Vocabulary::load((dir / "vocab_head.txt").string()),
                      Catch::Matchers::ContainsSubstring("reserved"));
  REQUIRE_THROWS_AS(Vocabulary::load((dir / "vocab_missing_file.txt").string()),
                    Error);
}

TEST_CASE("corpus wrapper builds per-side vocabularies") {
  ParallelCorpus de_en;
  de_en.source_language = "de";
  de_en.target_language = "en";
  de_en.source = {{"hund"}, {"katze"}};
  de_en.target = {{"dog"}, {"cat"}};
  MixedCorpus mix = build_strategy("baseline", {de_en}, {}, 1);

  Vocabulary src = build_vocabulary(mix, Side::source);
  Vocabulary tgt = build_vocabulary(mix, Side::target);
  REQUIRE(src.contains("@de@hund"));
  REQUIRE(src.contains("<EN>"));
  REQUIRE_FALSE(src.contains("@en@dog"));
  REQUIRE(tgt.contains("@en@dog"));
  REQUIRE(tgt.contains("@en@cat"));
  REQUIRE(tgt.id_of("@de@hund") == kUnkId);
}
