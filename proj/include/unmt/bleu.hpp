#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "unmt/common.hpp"
#include "unmt/model.hpp"
#include "unmt/multilingual.hpp"
#include "unmt/tensor.hpp"
#include "unmt/vocab.hpp"

namespace unmt {

namespace detail {

inline bool ascii_digit(char c) { return c >= '0' && c <= '9'; }

// The always-split class: ASCII punctuation except apostrophe, period,
// comma, and dash, which get the contextual rules below.
inline bool always_split(char c) {
  return (c >= '{' && c <= '~') || (c >= '[' && c <= '`') ||
         (c >= ' ' && c <= '&') || (c >= '(' && c <= '+') ||
         (c >= ':' && c <= '@') || c == '/';
}

inline std::string pad_char(char c) { return std::string(" ") + c + " "; }

}  // namespace detail

// Splits ASCII punctuation off words the way the standard scoring script
// does in plain-text mode: periods and commas stay attached only between
// digits, a dash splits only after a digit, everything else in the
// punctuation class always splits. Case is preserved.
inline Tokens bleu_tokenize(const std::string& line) {
  // pass 1: unconditional punctuation
  std::string a;
  a.reserve(line.size() * 2 + 2);
  a.push_back(' ');
  for (char c : line) {
    if (c != ' ' && detail::always_split(c)) {
      a += detail::pad_char(c);
    } else {
      a.push_back(c);
    }
  }
  a.push_back(' ');

  // pass 2: period and comma split unless both neighbours are digits
  std::string b;
  b.reserve(a.size() * 2);
  for (std::size_t i = 0; i < a.size(); ++i) {
    char c = a[i];
    if (c == '.' || c == ',') {
      bool digit_left = i > 0 && detail::ascii_digit(a[i - 1]);
      bool digit_right = i + 1 < a.size() && detail::ascii_digit(a[i + 1]);
      if (digit_left && digit_right) {
        b.push_back(c);
      } else {
        b += detail::pad_char(c);
      }
    } else {
      b.push_back(c);
    }
  }

  // pass 3: dash splits when preceded by a digit
  std::string c3;
  c3.reserve(b.size() * 2);
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (b[i] == '-' && i > 0 && detail::ascii_digit(b[i - 1])) {
      c3 += detail::pad_char(b[i]);
    } else {
      c3.push_back(b[i]);
    }
  }

  // pass 4: collapse whitespace
  Tokens tokens;
  std::istringstream words(c3);
  std::string word;
  while (words >> word) tokens.push_back(word);
  return tokens;
}

struct BleuReport {
  double bleu = 0.0;             // percentage
  double precisions[4] = {0.0, 0.0, 0.0, 0.0};
  double brevity_penalty = 1.0;
  std::size_t hyp_length = 0;
  std::size_t ref_length = 0;
  std::string test_set_id;

  double ratio() const {
    return ref_length == 0 ? 0.0
                           : static_cast<double>(hyp_length) /
                                 static_cast<double>(ref_length);
  }
};

namespace detail {

inline void count_ngrams(const Tokens& tokens, int order,
                         std::map<std::vector<std::string>, std::size_t>& out) {
  if (tokens.size() < static_cast<std::size_t>(order)) return;
  for (std::size_t i = 0; i + order <= tokens.size(); ++i) {
    std::vector<std::string> gram(tokens.begin() + i,
                                  tokens.begin() + i + order);
    ++out[gram];
  }
}

}  // namespace detail

// Corpus-level BLEU-4 with clipped counts, geometric mean, and the brevity
// penalty. Case sensitive and unsmoothed: any empty n-gram order zeroes the
// score. Inputs are raw lines; tokenization happens here.
inline BleuReport compute_bleu(const std::vector<std::string>& hypotheses,
                               const std::vector<std::string>& references,
                               const std::string& test_set_id = "") {
  require(!hypotheses.empty(), "cannot score an empty corpus");
  require(hypotheses.size() == references.size(),
          "hypothesis/reference count mismatch: ", hypotheses.size(), " vs ",
          references.size());

  std::size_t matched[4] = {0, 0, 0, 0};
  std::size_t total[4] = {0, 0, 0, 0};
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;

  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    Tokens hyp = bleu_tokenize(hypotheses[s]);
    Tokens ref = bleu_tokenize(references[s]);
    hyp_len += hyp.size();
    ref_len += ref.size();
    for (int order = 1; order <= 4; ++order) {
      std::map<std::vector<std::string>, std::size_t> hyp_grams, ref_grams;
      detail::count_ngrams(hyp, order, hyp_grams);
      detail::count_ngrams(ref, order, ref_grams);
      for (const auto& [gram, count] : hyp_grams) {
        total[order - 1] += count;
        auto it = ref_grams.find(gram);
        if (it != ref_grams.end()) {
          matched[order - 1] += std::min(count, it->second);
        }
      }
    }
  }

  BleuReport report;
  report.test_set_id = test_set_id;
  report.hyp_length = hyp_len;
  report.ref_length = ref_len;

  bool any_zero = false;
  double log_sum = 0.0;
  for (int i = 0; i < 4; ++i) {
    report.precisions[i] =
        total[i] == 0 ? 0.0
                      : static_cast<double>(matched[i]) /
                            static_cast<double>(total[i]);
    if (report.precisions[i] <= 0.0) {
      any_zero = true;
    } else {
      log_sum += std::log(report.precisions[i]);
    }
  }

  report.brevity_penalty =
      (hyp_len == 0 || hyp_len < ref_len)
          ? (hyp_len == 0 ? 0.0
                          : std::exp(1.0 - static_cast<double>(ref_len) /
                                               static_cast<double>(hyp_len)))
          : 1.0;

  report.bleu = any_zero ? 0.0
                         : 100.0 * report.brevity_penalty *
                               std::exp(log_sum / 4.0);
  return report;
}

namespace detail {

inline std::string fixed_str(double value, int decimals) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(decimals) << value;
  return out.str();
}

}  // namespace detail

inline std::string render_bleu_report(const BleuReport& r) {
  std::ostringstream out;
  out << "BLEU = " << detail::fixed_str(r.bleu, 2) << ", "
      << detail::fixed_str(100.0 * r.precisions[0], 1) << "/"
      << detail::fixed_str(100.0 * r.precisions[1], 1) << "/"
      << detail::fixed_str(100.0 * r.precisions[2], 1) << "/"
      << detail::fixed_str(100.0 * r.precisions[3], 1) << " (BP="
      << detail::fixed_str(r.brevity_penalty, 3) << ", ratio="
      << detail::fixed_str(r.ratio(), 3) << ", hyp_len=" << r.hyp_length
      << ", ref_len=" << r.ref_length << ")";
  return out.str();
}

// Difference between two runs on the same test set, as a signed value in
// hundredths of a BLEU point so 26.99 - 24.35 renders as +2.64 exactly.
inline std::string delta_report(const BleuReport& system,
                                const BleuReport& baseline) {
  require(system.test_set_id == baseline.test_set_id,
          "refusing to compare different test sets: '", system.test_set_id,
          "' vs '", baseline.test_set_id, "'");
  long long diff = std::llround(system.bleu * 100.0) -
                   std::llround(baseline.bleu * 100.0);
  std::ostringstream out;
  out << (diff < 0 ? '-' : '+');
  long long mag = diff < 0 ? -diff : diff;
  out << (mag / 100) << '.' << std::setw(2) << std::setfill('0') << (mag % 100);
  return out.str();
}

struct LanguageStats {
  std::size_t wrong_words = 0;
  std::size_t total_words = 0;
  std::size_t uncoded_words = 0;
  std::size_t wrong_sentences = 0;
  std::size_t total_sentences = 0;

  std::string word_rate() const { return rate(wrong_words, total_words); }
  std::string sentence_rate() const {
    return rate(wrong_sentences, total_sentences);
  }

  static std::string rate(std::size_t part, std::size_t whole) {
    if (whole == 0) return "0.00";
    // percentage with two decimals, half away from zero, computed in
    // integers so fixture ratios like 2127/10000 render exactly
    std::size_t scaled = part * 10000;
    std::size_t hundredths = (scaled + whole / 2) / whole;
    std::ostringstream out;
    out << (hundredths / 100) << '.' << std::setw(2) << std::setfill('0')
        << (hundredths % 100);
    return out.str();
  }
};

// Rates of output tokens whose language code disagrees with the forced
// target. Forcing symbols carry no code and are excluded; an uncoded token
// counts as wrong and is tallied separately as a diagnostic. A sentence is
// wrong when a strict majority of its coded-position tokens are wrong.
inline LanguageStats wrong_language_stats(
    const std::vector<Tokens>& sentences, const std::string& target_language,
    std::ostream* warnings = nullptr) {
  require_language(target_language);
  LanguageStats stats;
  stats.total_sentences = sentences.size();
  for (const auto& sentence : sentences) {
    std::size_t wrong_here = 0;
    std::size_t total_here = 0;
    for (const auto& tok : sentence) {
      if (is_forcing_symbol(tok)) continue;
      ++total_here;
      auto lang = token_language(tok);
      if (lang && *lang == target_language) continue;
      ++wrong_here;
      if (!lang) ++stats.uncoded_words;
    }
    stats.wrong_words += wrong_here;
    stats.total_words += total_here;
    if (2 * wrong_here > total_here) ++stats.wrong_sentences;
  }
  if (warnings && stats.uncoded_words > 0) {
    *warnings << "warning: " << stats.uncoded_words
              << " output token(s) carried no language code\n";
  }
  return stats;
}

inline std::string render_language_stats(const LanguageStats& stats) {
  std::ostringstream out;
  out << "wrong-language words\t" << stats.wrong_words << "/"
      << stats.total_words << "\t" << stats.word_rate() << "\n"
      << "wrong-language sentences\t" << stats.wrong_sentences << "/"
      << stats.total_sentences << "\t" << stats.sentence_rate() << "\n";
  return out.str();
}

struct EmbeddingRecord {
  std::string language;
  std::string token;  // rendered subword text, code stripped
  std::vector<double> values;
};

// Writes one record per learned source-vocabulary entry: language, token
// text with the code stripped, then the embedding row. Reserved rows
// (control symbols) are skipped. Values use enough digits to reload
// bit-identically.
template <typename T>
inline void export_embeddings(const ModelParameters<T>& params,
                              const Vocabulary& vocab, const std::string& path,
                              const std::set<std::string>& filter = {}) {
  require(vocab.size() == params.hp.source_vocab_size,
          "vocabulary size ", vocab.size(),
          " does not match the embedding table (",
          params.hp.source_vocab_size, " rows)");
  std::size_t dim = params.hp.embedding_dim;
  std::vector<std::size_t> rows;
  std::vector<std::string> langs, texts;
  for (std::size_t id = vocab.reserved_count(); id < vocab.size(); ++id) {
    const std::string& coded = vocab.token_of(static_cast<int>(id));
    auto lang = token_language(coded);
    std::string lang_text = lang ? *lang : std::string("unknown");
    if (!filter.empty() && !filter.count(lang_text)) continue;
    rows.push_back(id);
    langs.push_back(std::move(lang_text));
    texts.push_back(lang ? coded.substr(lang->size() + 2) : coded);
  }
  std::ofstream out(path);
  require(out.good(), "cannot open '", path, "' for writing");
  out << rows.size() << " " << dim << "\n";
  char buffer[64];
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out << langs[i] << " " << texts[i];
    for (std::size_t j = 0; j < dim; ++j) {
      double v = static_cast<double>(params.embed_src.at(rows[i], j));
      std::snprintf(buffer, sizeof(buffer), "%.17g", v);
      out << " " << buffer;
    }
    out << "\n";
  }
  out.flush();
  require(out.good(), "write failure on embedding export '", path, "'");
}

inline std::vector<EmbeddingRecord> load_embeddings(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open embedding file '", path, "'");
  std::size_t records = 0, dim = 0;
  require(static_cast<bool>(in >> records >> dim),
          "embedding file '", path, "' has a malformed header");
  std::vector<EmbeddingRecord> out;
  out.reserve(records);
  for (std::size_t i = 0; i < records; ++i) {
    EmbeddingRecord rec;
    require(static_cast<bool>(in >> rec.language >> rec.token),
            "embedding file '", path, "' is truncated at record ", i);
    rec.values.resize(dim);
    for (std::size_t j = 0; j < dim; ++j) {
      require(static_cast<bool>(in >> rec.values[j]),
              "embedding file '", path, "' is truncated at record ", i);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace unmt
