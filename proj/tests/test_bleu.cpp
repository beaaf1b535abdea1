#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "unmt/bleu.hpp"

using namespace unmt;

TEST_CASE("tokenizer splits punctuation like the reference scorer") {
  REQUIRE(bleu_tokenize("Hello, world!") ==
          Tokens{"Hello", ",", "world", "!"});
  REQUIRE(bleu_tokenize("(foo)") == Tokens{"(", "foo", ")"});
  REQUIRE(bleu_tokenize("a;b:c") == Tokens{"a", ";", "b", ":", "c"});
  REQUIRE(bleu_tokenize("  spaced   out  ") == Tokens{"spaced", "out"});
  REQUIRE(bleu_tokenize("") == Tokens{});
}

TEST_CASE("periods and commas stay attached only between digits") {
  REQUIRE(bleu_tokenize("1.5") == Tokens{"1.5"});
  REQUIRE(bleu_tokenize("1,000") == Tokens{"1,000"});
  REQUIRE(bleu_tokenize("a.b") == Tokens{"a", ".", "b"});
  REQUIRE(bleu_tokenize("end.") == Tokens{"end", "."});
  REQUIRE(bleu_tokenize(".start") == Tokens{".", "start"});
  REQUIRE(bleu_tokenize("U.S.") == Tokens{"U", ".", "S", "."});
  REQUIRE(bleu_tokenize("1. 5") == Tokens{"1", ".", "5"});
  REQUIRE(bleu_tokenize("x.1") == Tokens{"x", ".", "1"});
  REQUIRE(bleu_tokenize("1.x") == Tokens{"1", ".", "x"});
}

TEST_CASE("dash splits only after a digit, apostrophe never splits") {
  REQUIRE(bleu_tokenize("well-known") == Tokens{"well-known"});
  REQUIRE(bleu_tokenize("5-6") == Tokens{"5", "-", "6"});
  REQUIRE(bleu_tokenize("4.5-6") == Tokens{"4.5", "-", "6"});
  REQUIRE(bleu_tokenize("don't") == Tokens{"don't"});
  REQUIRE(bleu_tokenize("-dash") == Tokens{"-dash"});
}

TEST_CASE("identical corpora score 100") {
  std::vector<std::string> text = {"the cat sat on the mat",
                                   "a quick brown fox jumps"};
  BleuReport r = compute_bleu(text, text);
  REQUIRE(r.bleu == 100.0);
  REQUIRE(r.brevity_penalty == 1.0);
  for (double p : r.precisions) REQUIRE(p == 1.0);
  REQUIRE(render_bleu_report(r).rfind("BLEU = 100.00, ", 0) == 0);
}

TEST_CASE("zero 4-gram matches score 0 without smoothing") {
  BleuReport r = compute_bleu({"a b c d"}, {"a x b y c z d w"});
  REQUIRE(r.precisions[0] > 0.0);
  REQUIRE(r.precisions[3] == 0.0);
  REQUIRE(r.bleu == 0.0);
}

TEST_CASE("hand-counted fixture without brevity penalty") {
  std::vector<std::string> hyp = {"the cat sat on a mat",
                                  "a quick brown fox jumps"};
  std::vector<std::string> ref = {"the cat sat on the mat",
                                  "the quick brown fox jumps"};
  BleuReport r = compute_bleu(hyp, ref);
  // clipped counts tallied by hand from the two sentence pairs
  REQUIRE(r.precisions[0] == Catch::Approx(9.0 / 11.0).margin(1e-12));
  REQUIRE(r.precisions[1] == Catch::Approx(6.0 / 9.0).margin(1e-12));
  REQUIRE(r.precisions[2] == Catch::Approx(4.0 / 7.0).margin(1e-12));
  REQUIRE(r.precisions[3] == Catch::Approx(2.0 / 5.0).margin(1e-12));
  REQUIRE(r.hyp_length == 11);
  REQUIRE(r.ref_length == 11);
  REQUIRE(r.brevity_penalty == 1.0);
  double oracle = 100.0 * std::exp((std::log(9.0 / 11.0) +
                                    std::log(6.0 / 9.0) +
                                    std::log(4.0 / 7.0) +
                                    std::log(2.0 / 5.0)) /
                                   4.0);
  REQUIRE(r.bleu == Catch::Approx(oracle).margin(0.005));
}

TEST_CASE("hand-counted fixture with brevity penalty") {
  std::vector<std::string> hyp = {"the cat sat on a mat",
                                  "a quick brown fox"};
  std::vector<std::string> ref = {"the cat sat on the mat",
                                  "the quick brown fox jumps"};
  BleuReport r = compute_bleu(hyp, ref);
  REQUIRE(r.precisions[0] == Catch::Approx(8.0 / 10.0).margin(1e-12));
  REQUIRE(r.precisions[1] == Catch::Approx(5.0 / 8.0).margin(1e-12));
  REQUIRE(r.precisions[2] == Catch::Approx(3.0 / 6.0).margin(1e-12));
  REQUIRE(r.precisions[3] == Catch::Approx(1.0 / 4.0).margin(1e-12));
  // geometric mean of 0.8 * 0.625 * 0.5 * 0.25 is exactly 0.5
  double oracle = 100.0 * std::exp(1.0 - 11.0 / 10.0) * 0.5;
  REQUIRE(r.bleu == Catch::Approx(oracle).margin(0.005));
  REQUIRE(render_bleu_report(r) ==
          "BLEU = 45.24, 80.0/62.5/50.0/25.0 "
          "(BP=0.905, ratio=0.909, hyp_len=10, ref_len=11)");
}

TEST_CASE("bleu is permutation invariant over sentence order") {
  std::vector<std::string> hyp = {"the cat sat on a mat",
                                  "a quick brown fox jumps",
                                  "numbers like 1.5 stay put"};
  std::vector<std::string> ref = {"the cat sat on the mat",
                                  "the quick brown fox jumps",
                                  "numbers like 1.5 stay here"};
  BleuReport a = compute_bleu(hyp, ref);
  BleuReport b = compute_bleu({hyp[2], hyp[0], hyp[1]},
                              {ref[2], ref[0], ref[1]});
  REQUIRE(a.bleu == b.bleu);
  REQUIRE(a.hyp_length == b.hyp_length);
}

TEST_CASE("clipping caps repeated hypothesis words") {
  // "the the the the": four unigrams, reference holds only two "the"
  BleuReport r = compute_bleu({"the the the the"}, {"the cat the mat"});
  REQUIRE(r.precisions[0] == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("scoring is case sensitive") {
  BleuReport r = compute_bleu({"Cat"}, {"cat"});
  REQUIRE(r.precisions[0] == 0.0);
}

TEST_CASE("degenerate inputs are rejected or scored zero") {
  REQUIRE_THROWS_AS(compute_bleu({}, {}), Error);
  REQUIRE_THROWS_AS(compute_bleu({"a"}, {"a", "b"}), Error);
  BleuReport r = compute_bleu({""}, {"some reference text here"});
  REQUIRE(r.bleu == 0.0);
}

TEST_CASE("delta report carries an explicit sign") {
  BleuReport sys, base;
  sys.test_set_id = base.test_set_id = "tst2013";
  sys.bleu = 26.99;
  base.bleu = 24.35;
  REQUIRE(delta_report(sys, base) == "+2.64");
  sys.bleu = 13.41;
  base.bleu = 16.65;
  REQUIRE(delta_report(sys, base) == "-3.24");
  base.bleu = 13.41;
  REQUIRE(delta_report(sys, base) == "+0.00");
  base.test_set_id = "tst2014";
  REQUIRE_THROWS_WITH(delta_report(sys, base),
                      Catch::Matchers::ContainsSubstring("test set"));
}

TEST_CASE("wrong language word and sentence rates") {
  Tokens s = {"@fr@le", "@fr@chat", "@en@cat"};
  LanguageStats stats = wrong_language_stats({s}, "fr");
  REQUIRE(stats.wrong_words == 1);
  REQUIRE(stats.total_words == 3);
  REQUIRE(stats.word_rate() == "33.33");
  REQUIRE(stats.sentence_rate() == "0.00");

  LanguageStats clean = wrong_language_stats(
      {{"<FR>", "@fr@le", "@fr@chat", "<FR>"}}, "fr");
  REQUIRE(clean.word_rate() == "0.00");
  REQUIRE(clean.sentence_rate() == "0.00");
  REQUIRE(clean.total_words == 2);
}

TEST_CASE("strict majority decides a wrong sentence") {
  Tokens half = {"@en@a", "@de@b", "@en@c", "@de@d"};  // exactly half wrong
  REQUIRE(wrong_language_stats({half}, "de").wrong_sentences == 0);
  Tokens majority = {"@en@a", "@en@b", "@en@c", "@de@d", "@de@e"};
  REQUIRE(wrong_language_stats({majority}, "de").wrong_sentences == 1);
}

TEST_CASE("uncoded tokens count as wrong with a diagnostic") {
  std::ostringstream warnings;
  LanguageStats stats =
      wrong_language_stats({{"plain", "@de@ok"}}, "de", &warnings);
  REQUIRE(stats.wrong_words == 1);
  REQUIRE(stats.uncoded_words == 1);
  REQUIRE(warnings.str().find("no language code") != std::string::npos);
}

TEST_CASE("constructed 2127 of 10000 fixture renders exactly") {
  std::vector<Tokens> sentences;
  std::size_t wrong_left = 2127;
  for (int s = 0; s < 100; ++s) {
    Tokens sent;
    for (int w = 0; w < 100; ++w) {
      if (wrong_left > 0) {
        sent.push_back("@en@w" + std::to_string(w));
        --wrong_left;
      } else {
        sent.push_back("@de@w" + std::to_string(w));
      }
    }
    sentences.push_back(std::move(sent));
  }
  LanguageStats stats = wrong_language_stats(sentences, "de");
  REQUIRE(stats.wrong_words == 2127);
  REQUIRE(stats.total_words == 10000);
  REQUIRE(stats.word_rate() == "21.27");
  // 21 sentences are fully wrong, the 22nd has 27 of 100: not a majority
  REQUIRE(stats.wrong_sentences == 21);
  REQUIRE(stats.sentence_rate() == "21.00");
  std::string rendered = render_language_stats(stats);
  REQUIRE(rendered.find("2127/10000\t21.27") != std::string::npos);
}

namespace {

Vocabulary coded_vocab() {
  std::vector<Tokens> sentences = {{"@en@car", "@en@cat@@"}, {"@de@auto"}};
  return Vocabulary::build({&sentences}, {"en", "de"});
}

}  // namespace

TEST_CASE("embedding export strips codes and skips reserved rows") {
  Vocabulary vocab = coded_vocab();
  REQUIRE(vocab.reserved_count() == 5);  // unk, eos, bos, <DE>, <EN>
  REQUIRE(vocab.size() == 8);

  Hyperparameters hp;
  hp.source_vocab_size = vocab.size();
  hp.target_vocab_size = vocab.size();
  hp.embedding_dim = 4;
  hp.hidden_dim = 3;
  hp.dropout_embedding_hidden = 0.0;
  hp.dropout_input_output = 0.0;
  ModelParameters<double> params = init_parameters<double>(hp);

  auto path = std::filesystem::temp_directory_path() / "embeddings.txt";
  export_embeddings(params, vocab, path.string());
  auto records = load_embeddings(path.string());

  REQUIRE(records.size() == vocab.size() - vocab.reserved_count());
  REQUIRE(records[0].language == "de");
  REQUIRE(records[0].token == "auto");
  REQUIRE(records[1].language == "en");
  REQUIRE(records[1].token == "car");
  REQUIRE(records[2].token == "cat@@");
  for (std::size_t i = 0; i < records.size(); ++i) {
    std::size_t row = vocab.reserved_count() + i;
    REQUIRE(records[i].values.size() == hp.embedding_dim);
    for (std::size_t j = 0; j < hp.embedding_dim; ++j) {
      REQUIRE(records[i].values[j] == params.embed_src.at(row, j));
    }
  }
}

TEST_CASE("embedding export honours a language filter") {
  Vocabulary vocab = coded_vocab();
  Hyperparameters hp;
  hp.source_vocab_size = vocab.size();
  hp.target_vocab_size = vocab.size();
  hp.embedding_dim = 2;
  hp.hidden_dim = 2;
  ModelParameters<double> params = init_parameters<double>(hp);

  auto path = std::filesystem::temp_directory_path() / "embeddings_en.txt";
  export_embeddings(params, vocab, path.string(), {"en"});
  auto records = load_embeddings(path.string());
  REQUIRE(records.size() == 2);
  for (const auto& rec : records) REQUIRE(rec.language == "en");
}

TEST_CASE("embedding export rejects a mismatched vocabulary") {
  Vocabulary vocab = coded_vocab();
  Hyperparameters hp;
  hp.source_vocab_size = vocab.size() + 1;
  hp.target_vocab_size = vocab.size();
  hp.embedding_dim = 2;
  hp.hidden_dim = 2;
  ModelParameters<double> params = init_parameters<double>(hp);
  auto path = std::filesystem::temp_directory_path() / "embeddings_bad.txt";
  REQUIRE_THROWS_AS(export_embeddings(params, vocab, path.string()), Error);
}

