#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "unmt/bpe.hpp"
#include "unmt/common.hpp"
#include "unmt/rng.hpp"

namespace unmt {

using Tokens = std::vector<std::string>;

inline bool valid_language_code(const std::string& code) {
  if (code.size() < 2 || code.size() > 8) return false;
  return std::all_of(code.begin(), code.end(),
                     [](char c) { return c >= 'a' && c <= 'z'; });
}

inline void require_language(const std::string& code) {
  require(valid_language_code(code), "invalid language code '", code,
          "' (expected 2-8 lowercase letters)");
}

// "<EN>", "<DE>", ...; "<E>" is accepted on input as the English shorthand.
inline std::string forcing_symbol(const std::string& lang) {
  require_language(lang);
  std::string symbol = "<";
  for (char c : lang) symbol += static_cast<char>(c - 'a' + 'A');
  symbol += ">";
  return symbol;
}

inline std::optional<std::string> parse_forcing_symbol(const std::string& tok) {
  if (tok.size() < 3 || tok.front() != '<' || tok.back() != '>') {
    return std::nullopt;
  }
  std::string body = tok.substr(1, tok.size() - 2);
  if (body == "E") return "en";
  std::string lang;
  for (char c : body) {
    if (c < 'A' || c > 'Z') return std::nullopt;
    lang += static_cast<char>(c - 'A' + 'a');
  }
  if (!valid_language_code(lang)) return std::nullopt;
  return lang;
}

inline bool is_forcing_symbol(const std::string& tok) {
  return parse_forcing_symbol(tok).has_value();
}

// The language carried by "@xx@token", if any.
inline std::optional<std::string> token_language(const std::string& tok) {
  if (tok.size() < 4 || tok.front() != '@') return std::nullopt;
  auto close = tok.find('@', 1);
  if (close == std::string::npos || close + 1 >= tok.size()) {
    return std::nullopt;
  }
  std::string lang = tok.substr(1, close - 1);
  if (!valid_language_code(lang)) return std::nullopt;
  return lang;
}

inline Tokens code_language(const Tokens& tokens, const std::string& lang) {
  require_language(lang);
  Tokens out;
  out.reserve(tokens.size());
  for (const auto& tok : tokens) {
    require(!is_forcing_symbol(tok),
            "cannot language-code the forcing symbol '", tok, "'");
    require(!token_language(tok).has_value(), "token '", tok,
            "' already carries a language code");
    out.push_back("@" + lang + "@" + tok);
  }
  return out;
}

struct StrippedTokens {
  Tokens tokens;                    // plain text, forcing symbols dropped
  std::vector<std::string> languages;  // per-token; "unknown" when uncoded
};

inline StrippedTokens strip_codes(const Tokens& tokens) {
  StrippedTokens out;
  for (const auto& tok : tokens) {
    if (is_forcing_symbol(tok)) continue;
    if (auto lang = token_language(tok)) {
      out.tokens.push_back(tok.substr(lang->size() + 2));
      out.languages.push_back(*lang);
    } else {
      out.tokens.push_back(tok);
      out.languages.push_back("unknown");
    }
  }
  return out;
}

struct TaggedSentence {
  Tokens tokens;
  std::string language;
  std::string forced_target;  // empty when not forced

  std::size_t content_length() const {
    std::size_t n = 0;
    for (const auto& tok : tokens) {
      if (!is_forcing_symbol(tok)) ++n;
    }
    return n;
  }
};

inline TaggedSentence force_target(const Tokens& coded,
                                   const std::string& source_lang,
                                   const std::string& target_lang,
                                   const std::set<std::string>& known) {
  require(known.count(target_lang), "unknown target language '", target_lang,
          "' (configured: ", [&] {
            std::string all;
            for (const auto& l : known) all += (all.empty() ? "" : ", ") + l;
            return all;
          }(), ")");
  for (const auto& tok : coded) {
    require(!is_forcing_symbol(tok), "sentence already carries the forcing "
            "symbol '", tok, "'");
  }
  const std::string symbol = forcing_symbol(target_lang);
  TaggedSentence out;
  out.tokens.reserve(coded.size() + 2);
  out.tokens.push_back(symbol);
  out.tokens.insert(out.tokens.end(), coded.begin(), coded.end());
  out.tokens.push_back(symbol);
  out.language = source_lang;
  out.forced_target = target_lang;
  return out;
}

struct CorpusPair {
  TaggedSentence source;
  TaggedSentence target;
  std::string provenance;
};

struct MixedCorpus {
  std::string strategy;
  std::vector<CorpusPair> pairs;

  void check_invariants() const {
    for (const auto& pair : pairs) {
      require(!pair.source.forced_target.empty(),
              "mixed-corpus source lacks target forcing");
      require(pair.source.forced_target == pair.target.language,
              "pair forces '", pair.source.forced_target,
              "' but its target is in '", pair.target.language, "'");
      const auto& toks = pair.source.tokens;
      require(toks.size() >= 2 && toks.front() == toks.back() &&
                  toks.front() == forcing_symbol(pair.source.forced_target),
              "source is not wrapped in its forcing symbol");
    }
  }
};

struct ParallelCorpus {
  std::string source_language;
  std::string target_language;
  std::vector<Tokens> source;
  std::vector<Tokens> target;
  std::string label;

  std::string name() const {
    return label.empty() ? source_language + "-" + target_language : label;
  }
};

struct MonolingualCorpus {
  std::string language;
  std::vector<Tokens> sentences;
  std::string label;

  std::string name() const {
    return label.empty() ? language + "-mono" : label;
  }
};

inline const std::vector<std::string>& strategy_names() {
  static const std::vector<std::string> names{
      "baseline",       "mix-source", "mix-multi-source",
      "mix-source-big", "bridge",     "universal"};
  return names;
}

namespace detail {

inline void append_parallel(MixedCorpus& mix, const ParallelCorpus& corpus,
                            const std::set<std::string>& known) {
  require(corpus.source.size() == corpus.target.size(), "corpus '",
          corpus.name(), "' has ", corpus.source.size(), " source but ",
          corpus.target.size(), " target sentences");
  for (std::size_t i = 0; i < corpus.source.size(); ++i) {
    CorpusPair pair;
    pair.source =
        force_target(code_language(corpus.source[i], corpus.source_language),
                     corpus.source_language, corpus.target_language, known);
    pair.target.tokens = code_language(corpus.target[i], corpus.target_language);
    pair.target.language = corpus.target_language;
    pair.provenance = corpus.name();
    mix.pairs.push_back(std::move(pair));
  }
}

inline void append_identity(MixedCorpus& mix, const MonolingualCorpus& corpus,
                            const std::set<std::string>& known) {
  for (const auto& sentence : corpus.sentences) {
    Tokens coded = code_language(sentence, corpus.language);
    CorpusPair pair;
    pair.source = force_target(coded, corpus.language, corpus.language, known);
    pair.target.tokens = std::move(coded);
    pair.target.language = corpus.language;
    pair.provenance = corpus.name();
    mix.pairs.push_back(std::move(pair));
  }
}

// The two bridge corpora in chain order (A->B, B->C).
inline std::pair<const ParallelCorpus*, const ParallelCorpus*> chain_order(
    const std::vector<ParallelCorpus>& parallel, const std::string& strategy) {
  require(parallel.size() == 2, "strategy '", strategy,
          "' requires exactly two parallel corpora (got ", parallel.size(),
          ")");
  const ParallelCorpus* first = &parallel[0];
  const ParallelCorpus* second = &parallel[1];
  if (first->target_language != second->source_language) {
    std::swap(first, second);
  }
  require(first->target_language == second->source_language, "strategy '",
          strategy,
          "' requires corpora chained through a pivot (A->B plus B->C)");
  return {first, second};
}

}  // namespace detail

// Codes every side with its language, forces every source toward its pair's
// target, turns monolingual data into identity pairs, then shuffles globally.
inline MixedCorpus build_strategy(const std::string& strategy,
                                  const std::vector<ParallelCorpus>& parallel,
                                  const std::vector<MonolingualCorpus>& mono,
                                  std::uint64_t seed) {
  require(std::find(strategy_names().begin(), strategy_names().end(),
                    strategy) != strategy_names().end(),
          "unknown strategy '", strategy, "'");

  std::set<std::string> known;
  for (const auto& c : parallel) {
    require_language(c.source_language);
    require_language(c.target_language);
    known.insert(c.source_language);
    known.insert(c.target_language);
  }
  for (const auto& c : mono) {
    require_language(c.language);
    known.insert(c.language);
  }

  MixedCorpus mix;
  mix.strategy = strategy;

  if (strategy == "baseline") {
    require(parallel.size() == 1,
            "baseline requires exactly one parallel corpus");
    require(mono.empty(), "baseline takes no monolingual corpora");
    detail::append_parallel(mix, parallel[0], known);
  } else if (strategy == "mix-source" || strategy == "mix-source-big") {
    require(parallel.size() == 1, "strategy '", strategy,
            "' requires exactly one parallel corpus");
    require(!mono.empty(), "strategy '", strategy,
            "' requires monolingual data in the target language");
    for (const auto& m : mono) {
      require(m.language == parallel[0].target_language, "strategy '",
              strategy, "' needs monolingual data in the target language '",
              parallel[0].target_language, "', got '", m.language, "'");
    }
    detail::append_parallel(mix, parallel[0], known);
    for (const auto& m : mono) detail::append_identity(mix, m, known);
  } else if (strategy == "mix-multi-source") {
    require(parallel.size() >= 2,
            "mix-multi-source requires at least two parallel corpora");
    for (const auto& c : parallel) {
      require(c.target_language == parallel[0].target_language,
              "mix-multi-source corpora must share one target language ('",
              parallel[0].target_language, "' vs '", c.target_language, "')");
    }
    for (const auto& m : mono) {
      require(m.language == parallel[0].target_language,
              "mix-multi-source monolingual data must be in the target "
              "language '", parallel[0].target_language, "'");
    }
    for (const auto& c : parallel) detail::append_parallel(mix, c, known);
    for (const auto& m : mono) detail::append_identity(mix, m, known);
  } else {  // bridge or universal
    auto [ab, bc] = detail::chain_order(parallel, strategy);
    const std::string& pivot = ab->target_language;
    const std::string& target = bc->target_language;
    bool have_pivot_mono = false;
    bool have_target_mono = false;
    for (const auto& m : mono) {
      if (m.language == pivot) have_pivot_mono = true;
      if (m.language == target) have_target_mono = true;
      require(m.language == pivot || m.language == target,
              "strategy '", strategy, "' accepts monolingual data only in '",
              pivot, "' or '", target, "', got '", m.language, "'");
    }
    require(have_pivot_mono, "strategy '", strategy,
            "' requires monolingual data in the pivot language '", pivot, "'");
    if (strategy == "universal") {
      require(have_target_mono,
              "universal requires monolingual data in the target language '",
              target, "'");
    } else {
      require(!have_target_mono,
              "bridge takes no target-language monolingual data (use "
              "'universal')");
    }
    detail::append_parallel(mix, *ab, known);
    detail::append_parallel(mix, *bc, known);
    for (const auto& m : mono) detail::append_identity(mix, m, known);
  }

  Rng rng(derive_seed(seed, "strategy-shuffle"));
  rng.shuffle(mix.pairs);
  mix.check_invariants();
  return mix;
}

struct LengthFilterResult {
  MixedCorpus corpus;
  std::size_t removed = 0;
};

// Drops pairs where either side exceeds max_len tokens, not counting the two
// forcing symbols.
inline LengthFilterResult filter_length(const MixedCorpus& mix,
                                        std::size_t max_len = 50) {
  require(max_len >= 1, "maximum length must be at least 1");
  LengthFilterResult result;
  result.corpus.strategy = mix.strategy;
  for (const auto& pair : mix.pairs) {
    if (pair.source.content_length() > max_len ||
        pair.target.content_length() > max_len) {
      ++result.removed;
    } else {
      result.corpus.pairs.push_back(pair);
    }
  }
  return result;
}

struct BalanceRow {
  std::string key;
  std::size_t count = 0;
  double fraction = 0.0;
};

struct BalanceReport {
  std::vector<BalanceRow> by_provenance;
  std::vector<BalanceRow> by_language_pair;
  std::size_t total = 0;
};

inline BalanceReport balance_report(const MixedCorpus& mix) {
  std::map<std::string, std::size_t> provenance, pairs;
  for (const auto& pair : mix.pairs) {
    ++provenance[pair.provenance];
    ++pairs[pair.source.language + "->" + pair.target.language];
  }
  BalanceReport report;
  report.total = mix.pairs.size();
  const auto emit = [&](const std::map<std::string, std::size_t>& counts,
                        std::vector<BalanceRow>& rows) {
    for (const auto& [key, count] : counts) {
      rows.push_back({key, count,
                      static_cast<double>(count) /
                          static_cast<double>(report.total)});
    }
  };
  if (report.total) {
    emit(provenance, report.by_provenance);
    emit(pairs, report.by_language_pair);
  }
  return report;
}

inline std::string render_balance_report(const BalanceReport& report) {
  std::ostringstream out;
  out << "total\t" << report.total << "\n";
  for (const auto& row : report.by_provenance) {
    out << "corpus\t" << row.key << "\t" << row.count << "\t"
        << fixed(row.fraction, 4) << "\n";
  }
  for (const auto& row : report.by_language_pair) {
    out << "pair\t" << row.key << "\t" << row.count << "\t"
        << fixed(row.fraction, 4) << "\n";
  }
  return out.str();
}

// --- plain-text corpus files: one sentence per line, space-separated -------

inline std::vector<Tokens> read_token_lines(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open corpus file '", path, "'");
  std::vector<Tokens> lines;
  std::string line;
  while (std::getline(in, line)) {
    Tokens tokens;
    std::istringstream fields(line);
    std::string tok;
    while (fields >> tok) tokens.push_back(tok);
    lines.push_back(std::move(tokens));
  }
  return lines;
}

inline void write_token_lines(const std::string& path,
                              const std::vector<Tokens>& lines) {
  std::ofstream out(path);
  require(out.good(), "cannot open '", path, "' for writing");
  for (const auto& tokens : lines) {
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (i) out << ' ';
      out << tokens[i];
    }
    out << '\n';
  }
  out.flush();
  require(out.good(), "write failure on '", path, "'");
}

// Segment raw sentences and render the pieces, ready for language coding.
inline std::vector<Tokens> segment_corpus(const BpeCodec& codec,
                                          const std::vector<Tokens>& raw) {
  std::vector<Tokens> out;
  out.reserve(raw.size());
  for (const auto& words : raw) {
    Tokens rendered;
    for (const auto& piece : codec.segment_sentence(words)) {
      rendered.push_back(render_subword(piece));
    }
    out.push_back(std::move(rendered));
  }
  return out;
}

// Decoder output back to plain words: drop forcing symbols, strip codes,
// undo subword segmentation.
inline Tokens revert_coded_output(const Tokens& tokens,
                                  std::ostream* warnings = nullptr) {
  auto stripped = strip_codes(tokens);
  std::vector<SubwordToken> pieces;
  pieces.reserve(stripped.tokens.size());
  for (const auto& tok : stripped.tokens) {
    pieces.push_back(parse_subword(tok));
  }
  return revert_bpe(pieces, warnings);
}

}  // namespace unmt
