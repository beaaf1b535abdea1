#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "unmt/bpe.hpp"
#include "unmt/model.hpp"
#include "unmt/multilingual.hpp"
#include "unmt/network.hpp"
#include "unmt/vocab.hpp"

namespace unmt {

template <class T>
struct Hypothesis {
  std::vector<int> ids;  // emitted content ids, end symbol excluded
  double log_prob = 0.0;
  Tensor<T> state;
  bool finished = false;
  std::uint64_t order = 0;  // creation order, breaks exact score ties
};

struct ScoredIds {
  std::vector<int> ids;
  double score = 0.0;
};

inline std::size_t default_max_len(std::size_t source_len) {
  return 3 * source_len + 10;
}

inline constexpr double kLogProbFloor = 1e-12;

namespace detail {

inline double ranked_score(double log_prob, std::size_t length,
                           bool length_normalize) {
  if (!length_normalize) return log_prob;
  return log_prob / static_cast<double>(std::max<std::size_t>(length, 1));
}

// candidate token ids ordered by probability, lowest id on ties
template <class T>
std::vector<std::size_t> top_tokens(const Tensor<T>& distribution,
                                    std::size_t k) {
  std::vector<std::size_t> ids(distribution.numel());
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  k = std::min(k, ids.size());
  std::partial_sort(ids.begin(), ids.begin() + k, ids.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (distribution[a] != distribution[b]) {
                        return distribution[a] > distribution[b];
                      }
                      return a < b;
                    });
  ids.resize(k);
  return ids;
}

}  // namespace detail

// Standard beam expansion: every unfinished hypothesis proposes beam_size
// successors, finished hypotheses compete in the same pool, and the global
// top beam_size survive each step. Stops when every survivor has emitted
// the end symbol or max_len steps have run. Scores are sums of log
// probabilities (floored at 1e-12), divided by length only when
// length_normalize is on.
template <class T>
std::vector<ScoredIds> beam_search_ids(const ModelParameters<T>& params,
                                       const std::vector<int>& source_ids,
                                       std::size_t beam_size = 12,
                                       std::size_t max_len = 0,
                                       std::size_t n_best = 1,
                                       bool length_normalize = false) {
  require(beam_size >= 1, "beam size must be at least 1");
  require(n_best >= 1, "n_best must be at least 1");
  for (int id : source_ids) {
    require(id >= 0 &&
                static_cast<std::size_t>(id) < params.hp.source_vocab_size,
            "source id ", id, " outside the vocabulary (size ",
            params.hp.source_vocab_size, ")");
  }
  if (max_len == 0) max_len = default_max_len(source_ids.size());

  EncodedSource<T> enc = encode(params, source_ids);
  Tensor<T> z0 = initial_decoder_state(params, enc);

  std::vector<Hypothesis<T>> pool;
  pool.push_back(Hypothesis<T>{{}, 0.0, z0, false, 0});
  std::uint64_t next_order = 1;

  auto better = [&](const Hypothesis<T>& a, const Hypothesis<T>& b) {
    double sa = detail::ranked_score(a.log_prob, a.ids.size(),
                                     length_normalize);
    double sb = detail::ranked_score(b.log_prob, b.ids.size(),
                                     length_normalize);
    if (sa != sb) return sa > sb;
    return a.order < b.order;
  };

  for (std::size_t step = 0; step < max_len; ++step) {
    bool any_unfinished = false;
    for (const auto& hyp : pool) any_unfinished |= !hyp.finished;
    if (!any_unfinished) break;

    std::vector<Hypothesis<T>> candidates;
    for (const auto& hyp : pool) {
      if (hyp.finished) {
        candidates.push_back(hyp);
        continue;
      }
      int y_prev = hyp.ids.empty() ? kBosId : hyp.ids.back();
      DecoderStep<T> out = decode_step(params, hyp.state, y_prev, enc);
      for (std::size_t tok :
           detail::top_tokens(out.distribution, beam_size)) {
        double p = static_cast<double>(out.distribution[tok]);
        Hypothesis<T> child;
        child.ids = hyp.ids;
        child.log_prob = hyp.log_prob + std::log(std::max(p, kLogProbFloor));
        child.state = out.state;
        child.order = next_order++;
        if (static_cast<int>(tok) == kEosId) {
          child.finished = true;
        } else {
          child.ids.push_back(static_cast<int>(tok));
        }
        candidates.push_back(std::move(child));
      }
    }
    std::sort(candidates.begin(), candidates.end(), better);
    if (candidates.size() > beam_size) candidates.resize(beam_size);
    pool = std::move(candidates);
  }

  std::sort(pool.begin(), pool.end(), better);
  std::vector<ScoredIds> out;
  for (std::size_t i = 0; i < pool.size() && i < n_best; ++i) {
    out.push_back({pool[i].ids,
                   detail::ranked_score(pool[i].log_prob, pool[i].ids.size(),
                                        length_normalize)});
  }
  return out;
}

// Stepwise argmax, written independently of the beam machinery so the two
// can check each other.
template <class T>
std::vector<int> greedy_decode_ids(const ModelParameters<T>& params,
                                   const std::vector<int>& source_ids,
                                   std::size_t max_len = 0) {
  if (max_len == 0) max_len = default_max_len(source_ids.size());
  EncodedSource<T> enc = encode(params, source_ids);
  Tensor<T> state = initial_decoder_state(params, enc);
  std::vector<int> ids;
  int y_prev = kBosId;
  for (std::size_t step = 0; step < max_len; ++step) {
    DecoderStep<T> out = decode_step(params, state, y_prev, enc);
    std::size_t best = 0;
    for (std::size_t v = 1; v < out.distribution.numel(); ++v) {
      if (out.distribution[v] > out.distribution[best]) best = v;
    }
    if (static_cast<int>(best) == kEosId) break;
    ids.push_back(static_cast<int>(best));
    y_prev = static_cast<int>(best);
    state = out.state;
  }
  return ids;
}

struct Translation {
  Tokens raw;    // coded subword tokens as emitted
  Tokens words;  // codes stripped, subwords joined
  double score = 0.0;
};

inline std::string join_tokens(const Tokens& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

// Languages a vocabulary was built for, recovered from its reserved
// forcing symbols.
inline std::set<std::string> vocabulary_languages(const Vocabulary& vocab) {
  std::set<std::string> out;
  for (std::size_t id = 3; id < vocab.reserved_count(); ++id) {
    auto lang = parse_forcing_symbol(vocab.token_of(static_cast<int>(id)));
    if (lang) out.insert(*lang);
  }
  return out;
}

// Translates one already-coded, already-forced source sentence and maps the
// winning id sequences back to text.
template <class T>
std::vector<Translation> translate_sentence(
    const ModelParameters<T>& params, const Vocabulary& source_vocab,
    const Vocabulary& target_vocab, const Tokens& coded_source,
    std::size_t beam_size = 12, std::size_t max_len = 0,
    std::size_t n_best = 1, bool length_normalize = false,
    std::ostream* warnings = nullptr) {
  require(source_vocab.size() == params.hp.source_vocab_size,
          "source vocabulary size ", source_vocab.size(),
          " does not match the model (", params.hp.source_vocab_size, ")");
  require(target_vocab.size() == params.hp.target_vocab_size,
          "target vocabulary size ", target_vocab.size(),
          " does not match the model (", params.hp.target_vocab_size, ")");
  std::vector<int> ids = source_vocab.encode(coded_source);
  auto ranked = beam_search_ids(params, ids, beam_size, max_len, n_best,
                                length_normalize);
  std::vector<Translation> out;
  out.reserve(ranked.size());
  for (const auto& cand : ranked) {
    Translation t;
    t.raw = target_vocab.decode(cand.ids);
    t.words = revert_coded_output(t.raw, warnings);
    t.score = cand.score;
    out.push_back(std::move(t));
  }
  return out;
}

inline std::string render_nbest(const std::vector<Translation>& candidates) {
  std::ostringstream out;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    char score[32];
    std::snprintf(score, sizeof(score), "%.6f", candidates[i].score);
    out << i << " ||| " << join_tokens(candidates[i].words) << " ||| "
        << score << "\n";
  }
  return out.str();
}

// Everything needed to run one trained system on raw text.
template <class T>
struct TranslationSystem {
  ModelParameters<T> params;
  Vocabulary source_vocab;
  Vocabulary target_vocab;
  MergeTable merges;

  std::set<std::string> languages() const {
    return vocabulary_languages(source_vocab);
  }
};

// Segments, codes, and forces one raw sentence for a given system.
template <class T>
Tokens prepare_source(const TranslationSystem<T>& system, const Tokens& words,
                      const std::string& source_language,
                      const std::string& target_language) {
  // An empty table means the system was built without subword segmentation,
  // not that every word should fall apart into characters.
  Tokens rendered =
      system.merges.size()
          ? segment_corpus(BpeCodec(system.merges), {words})[0]
          : words;
  return force_target(code_language(rendered, source_language),
                      source_language, target_language, system.languages())
      .tokens;
}

struct PivotResult {
  Tokens intermediate;  // plain words in the pivot language
  Tokens words;         // plain words in the final target language
};

// Two-system chain: decode A->B, re-segment the plain pivot text with the
// second system's merge table, then decode B->C.
template <class T>
PivotResult pivot_translate(const TranslationSystem<T>& first,
                            const TranslationSystem<T>& second,
                            const Tokens& source_words,
                            const std::string& lang_a,
                            const std::string& lang_b,
                            const std::string& lang_c,
                            std::size_t beam_size = 12,
                            std::ostream* warnings = nullptr) {
  Tokens forced = prepare_source(first, source_words, lang_a, lang_b);
  auto leg_one = translate_sentence(first.params, first.source_vocab,
                                    first.target_vocab, forced, beam_size, 0,
                                    1, false, warnings);
  PivotResult result;
  result.intermediate = leg_one.empty() ? Tokens{} : leg_one[0].words;
  if (result.intermediate.empty()) {
    if (warnings) {
      *warnings << "warning: empty intermediate translation, skipping the "
                   "second leg\n";
    }
    return result;
  }
  Tokens forced_pivot =
      prepare_source(second, result.intermediate, lang_b, lang_c);
  auto leg_two = translate_sentence(second.params, second.source_vocab,
                                    second.target_vocab, forced_pivot,
                                    beam_size, 0, 1, false, warnings);
  if (!leg_two.empty()) result.words = leg_two[0].words;
  return result;
}

}  // namespace unmt
