#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "unmt/beam.hpp"

using namespace unmt;

namespace {

Hyperparameters tiny_hp(std::uint64_t seed) {
  Hyperparameters hp;
  hp.source_vocab_size = 6;
  hp.target_vocab_size = 6;
  hp.embedding_dim = 4;
  hp.hidden_dim = 5;
  hp.dropout_embedding_hidden = 0.0;
  hp.dropout_input_output = 0.0;
  hp.seed = seed;
  return hp;
}

// Exhaustive search: walk every content sequence up to max_len, scoring
// termination explicitly, and keep the best.
struct Enumerator {
  const ModelParameters<double>& params;
  const EncodedSource<double>& enc;
  std::size_t max_len;
  std::vector<int> best_ids;
  double best_score = -1e300;

  void consider(const std::vector<int>& ids, double score) {
    if (score > best_score) {
      best_score = score;
      best_ids = ids;
    }
  }

  void walk(std::vector<int>& prefix, double log_prob,
            const Tensor<double>& state, int y_prev) {
    if (prefix.size() == max_len) {
      consider(prefix, log_prob);
      return;
    }
    DecoderStep<double> out = decode_step(params, state, y_prev, enc);
    for (std::size_t tok = 0; tok < out.distribution.numel(); ++tok) {
      double lp = std::log(std::max(out.distribution[tok], kLogProbFloor));
      if (static_cast<int>(tok) == kEosId) {
        consider(prefix, log_prob + lp);
      } else {
        prefix.push_back(static_cast<int>(tok));
        walk(prefix, log_prob + lp, out.state, static_cast<int>(tok));
        prefix.pop_back();
      }
    }
  }
};

double walk_score(const ModelParameters<double>& params,
                  const std::vector<int>& source_ids,
                  const std::vector<int>& ids, bool add_eos) {
  EncodedSource<double> enc = encode(params, source_ids);
  Tensor<double> state = initial_decoder_state(params, enc);
  double log_prob = 0.0;
  int y_prev = kBosId;
  for (int id : ids) {
    DecoderStep<double> out = decode_step(params, state, y_prev, enc);
    log_prob += std::log(std::max(out.distribution[id], kLogProbFloor));
    state = out.state;
    y_prev = id;
  }
  if (add_eos) {
    DecoderStep<double> out = decode_step(params, state, y_prev, enc);
    log_prob += std::log(std::max(out.distribution[kEosId], kLogProbFloor));
  }
  return log_prob;
}

}  // namespace

TEST_CASE("saturating beam equals exhaustive enumeration") {
  for (std::uint64_t seed : {7u, 21u, 90u}) {
    ModelParameters<double> params = init_parameters<double>(tiny_hp(seed));
    std::vector<int> source = {3, 4, 5, 2};
    const std::size_t max_len = 3;

    EncodedSource<double> enc = encode(params, source);
    Enumerator oracle{params, enc, max_len};
    std::vector<int> prefix;
    oracle.walk(prefix, 0.0, initial_decoder_state(params, enc), kBosId);

    auto beam = beam_search_ids(params, source, 216, max_len, 1, false);
    REQUIRE(beam.size() == 1);
    REQUIRE(beam[0].ids == oracle.best_ids);
    REQUIRE(beam[0].score == Catch::Approx(oracle.best_score).margin(1e-10));
  }
}

TEST_CASE("beam of one matches stepwise argmax") {
  for (std::uint64_t seed : {1u, 2u, 3u, 11u, 42u}) {
    ModelParameters<double> params = init_parameters<double>(tiny_hp(seed));
    for (std::vector<int> source :
         {std::vector<int>{2}, std::vector<int>{4, 3},
          std::vector<int>{5, 5, 0, 3}}) {
      auto beam = beam_search_ids(params, source, 1);
      REQUIRE(beam[0].ids == greedy_decode_ids(params, source));
    }
  }
}

TEST_CASE("wider beams never lower the 1-best score") {
  ModelParameters<double> params = init_parameters<double>(tiny_hp(13));
  std::vector<int> source = {4, 2, 5};
  double previous = -1e300;
  for (std::size_t width : {1u, 2u, 3u, 6u, 36u, 216u}) {
    auto beam = beam_search_ids(params, source, width, 3);
    REQUIRE(beam[0].score >= previous - 1e-12);
    previous = beam[0].score;
  }
}

TEST_CASE("n-best lists are sorted, duplicate-free, and rescorable") {
  ModelParameters<double> params = init_parameters<double>(tiny_hp(99));
  std::vector<int> source = {3, 0, 4};
  auto ranked = beam_search_ids(params, source, 8, 4, 8, false);
  REQUIRE(ranked.size() >= 2);
  for (std::size_t i = 1; i < ranked.size(); ++i) {
    REQUIRE(ranked[i - 1].score >= ranked[i].score);
    for (std::size_t j = 0; j < i; ++j) {
      REQUIRE(ranked[i].ids != ranked[j].ids);
    }
  }
  for (const auto& cand : ranked) {
    REQUIRE(cand.score <= 1e-12);
    // every surviving hypothesis of content length < 4 ended with the end
    // symbol, so its score includes that final term
    bool finished = cand.ids.size() < 4;
    REQUIRE(cand.score ==
            Catch::Approx(walk_score(params, source, cand.ids, finished))
                .margin(1e-10));
  }
}

TEST_CASE("length normalization divides by candidate length") {
  ModelParameters<double> params = init_parameters<double>(tiny_hp(5));
  std::vector<int> source = {2, 3};
  auto raw = beam_search_ids(params, source, 4, 3, 4, false);
  auto normalized = beam_search_ids(params, source, 4, 3, 4, true);
  for (const auto& cand : normalized) {
    bool finished = cand.ids.size() < 3;
    double unnormalized = walk_score(params, source, cand.ids, finished);
    double expected =
        unnormalized / static_cast<double>(std::max<std::size_t>(
                           cand.ids.size(), 1));
    REQUIRE(cand.score == Catch::Approx(expected).margin(1e-10));
  }
  REQUIRE_FALSE(raw.empty());
}

TEST_CASE("a model certain of the end symbol yields an empty translation") {
  Hyperparameters hp = tiny_hp(1);
  ModelParameters<double> params(hp);  // all zeros
  params.output_b[kEosId] = 50.0;
  auto beam = beam_search_ids(params, {2, 3}, 12);
  REQUIRE(beam[0].ids.empty());
  REQUIRE(beam[0].score == Catch::Approx(0.0).margin(1e-6));
  REQUIRE(greedy_decode_ids(params, {2, 3}).empty());
}

TEST_CASE("invalid decode requests are rejected") {
  ModelParameters<double> params = init_parameters<double>(tiny_hp(1));
  REQUIRE_THROWS_AS(beam_search_ids(params, {2}, 0), Error);
  REQUIRE_THROWS_AS(beam_search_ids(params, {2, 99}, 2), Error);
  REQUIRE_THROWS_AS(beam_search_ids(params, {-1}, 2), Error);
}

namespace {

// A system whose decoder always emits the end symbol immediately.
TranslationSystem<double> silent_system() {
  TranslationSystem<double> sys;
  std::vector<Tokens> src = {{"@en@a@@", "@en@b"}};
  std::vector<Tokens> tgt = {{"@de@x"}};
  sys.source_vocab = Vocabulary::build({&src}, {"en", "de"});
  sys.target_vocab = Vocabulary::build({&tgt}, {"en", "de"});
  Hyperparameters hp;
  hp.source_vocab_size = sys.source_vocab.size();
  hp.target_vocab_size = sys.target_vocab.size();
  hp.embedding_dim = 3;
  hp.hidden_dim = 3;
  hp.dropout_embedding_hidden = 0.0;
  hp.dropout_input_output = 0.0;
  sys.params = ModelParameters<double>(hp);
  sys.params.output_b[kEosId] = 50.0;
  // nonempty so segmentation runs; the merge itself never applies to "ab"
  sys.merges.merges = {{"x", "y"}};
  return sys;
}

}  // namespace

TEST_CASE("prepare_source segments, codes, and forces raw words") {
  TranslationSystem<double> sys = silent_system();
  REQUIRE(sys.languages() == std::set<std::string>{"de", "en"});
  Tokens forced = prepare_source(sys, {"ab"}, "en", "de");
  REQUIRE(forced == Tokens{"<DE>", "@en@a@@", "@en@b", "<DE>"});
  REQUIRE_THROWS_WITH(prepare_source(sys, {"ab"}, "en", "xx"),
                      Catch::Matchers::ContainsSubstring("xx"));

  // an empty merge table disables segmentation instead of char-splitting
  sys.merges.merges.clear();
  REQUIRE(prepare_source(sys, {"ab"}, "en", "de") ==
          Tokens{"<DE>", "@en@ab", "<DE>"});
}

TEST_CASE("translate_sentence returns stripped, reverted words") {
  TranslationSystem<double> sys = silent_system();
  Tokens forced = prepare_source(sys, {"ab"}, "en", "de");
  auto out = translate_sentence(sys.params, sys.source_vocab,
                                sys.target_vocab, forced, 4);
  REQUIRE(out.size() == 1);
  REQUIRE(out[0].raw.empty());
  REQUIRE(out[0].words.empty());

  Vocabulary wrong;
  REQUIRE_THROWS_WITH(
      translate_sentence(sys.params, sys.source_vocab, wrong, forced, 4),
      Catch::Matchers::ContainsSubstring("vocabulary"));
}

TEST_CASE("n-best rendering uses the triple-bar format") {
  std::vector<Translation> list(2);
  list[0].words = {"the", "cat"};
  list[0].score = -1.5;
  list[1].words = {"a", "cat"};
  list[1].score = -2.25;
  REQUIRE(render_nbest(list) ==
          "0 ||| the cat ||| -1.500000\n1 ||| a cat ||| -2.250000\n");
}

TEST_CASE("pivot with an empty intermediate warns and stays empty") {
  TranslationSystem<double> first = silent_system();
  TranslationSystem<double> second = silent_system();
  std::ostringstream warnings;
  PivotResult result =
      pivot_translate(first, second, {"ab"}, "en", "de", "en", 4, &warnings);
  REQUIRE(result.intermediate.empty());
  REQUIRE(result.words.empty());
  REQUIRE(warnings.str().find("empty intermediate") != std::string::npos);
}
