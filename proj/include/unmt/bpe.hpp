#pragma once

#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "unmt/common.hpp"

namespace unmt {

inline constexpr const char* kEndOfWord = "</w>";
inline constexpr const char* kContinuationMarker = "@@";

struct SubwordToken {
  std::string text;
  bool continuation = false;

  bool operator==(const SubwordToken&) const = default;
};

inline std::string render_subword(const SubwordToken& t) {
  return t.continuation ? t.text + kContinuationMarker : t.text;
}

inline SubwordToken parse_subword(const std::string& s) {
  if (s.size() > 2 && s.compare(s.size() - 2, 2, kContinuationMarker) == 0) {
    return {s.substr(0, s.size() - 2), true};
  }
  return {s, false};
}

using SymbolPair = std::pair<std::string, std::string>;

struct MergeTable {
  std::vector<SymbolPair> merges;

  std::size_t size() const { return merges.size(); }
};

namespace detail {

// Words split into UTF-8 code points; multi-byte sequences stay intact.
inline std::vector<std::string> split_characters(const std::string& word) {
  std::vector<std::string> out;
  for (char c : word) {
    const bool continuation_byte = (static_cast<unsigned char>(c) & 0xC0) == 0x80;
    if (continuation_byte && !out.empty()) {
      out.back() += c;
    } else {
      out.emplace_back(1, c);
    }
  }
  return out;
}

inline std::vector<std::string> word_symbols(const std::string& word) {
  auto symbols = split_characters(word);
  symbols.push_back(kEndOfWord);
  return symbols;
}

// Adjacent positions, so "aaa" counts (a,a) twice.
template <class Fn>
void for_each_pair(const std::vector<std::string>& symbols, Fn&& fn) {
  for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
    fn(SymbolPair{symbols[i], symbols[i + 1]});
  }
}

// One left-to-right pass merging non-overlapping occurrences of the pair.
inline std::vector<std::string> merge_in_word(
    const std::vector<std::string>& symbols, const SymbolPair& pair) {
  std::vector<std::string> out;
  out.reserve(symbols.size());
  for (std::size_t i = 0; i < symbols.size();) {
    if (i + 1 < symbols.size() && symbols[i] == pair.first &&
        symbols[i + 1] == pair.second) {
      out.push_back(symbols[i] + symbols[i + 1]);
      i += 2;
    } else {
      out.push_back(symbols[i]);
      ++i;
    }
  }
  return out;
}

}  // namespace detail

inline std::map<std::string, long long> count_word_frequencies(
    const std::vector<std::string>& lines) {
  std::map<std::string, long long> freq;
  for (const auto& line : lines) {
    std::istringstream in(line);
    std::string word;
    while (in >> word) ++freq[word];
  }
  return freq;
}

// Greedy most-frequent-pair learning over whole-word frequencies. Ties go to
// the lexicographically smallest (left, right); learning stops early once no
// pair occurs at least twice.
inline MergeTable learn_bpe(const std::map<std::string, long long>& word_freq,
                            long long num_merges) {
  require(num_merges >= 0, "number of merges must be nonnegative, got ",
          num_merges);
  require(!word_freq.empty(), "cannot learn merges from an empty corpus");

  struct Entry {
    std::vector<std::string> symbols;
    long long count;
  };
  std::vector<Entry> words;
  words.reserve(word_freq.size());
  for (const auto& [word, count] : word_freq) {
    require(count > 0, "word '", word, "' has nonpositive count ", count);
    words.push_back({detail::word_symbols(word), count});
  }

  std::map<SymbolPair, long long> stats;
  std::map<SymbolPair, std::set<std::size_t>> where;
  for (std::size_t w = 0; w < words.size(); ++w) {
    detail::for_each_pair(words[w].symbols, [&](const SymbolPair& p) {
      stats[p] += words[w].count;
      where[p].insert(w);
    });
  }

  MergeTable table;
  for (long long step = 0; step < num_merges; ++step) {
    const SymbolPair* best = nullptr;
    long long best_count = 1;  // a winning pair must occur at least twice
    for (const auto& [pair, count] : stats) {
      if (count > best_count) {
        best = &pair;
        best_count = count;
      }
    }
    if (!best) break;
    const SymbolPair chosen = *best;
    table.merges.push_back(chosen);

    const std::set<std::size_t> touched = where[chosen];
    for (std::size_t w : touched) {
      Entry& entry = words[w];
      detail::for_each_pair(entry.symbols, [&](const SymbolPair& p) {
        auto it = stats.find(p);
        it->second -= entry.count;
        if (it->second <= 0) {
          stats.erase(it);
          where.erase(p);
        }
      });
      entry.symbols = detail::merge_in_word(entry.symbols, chosen);
      detail::for_each_pair(entry.symbols, [&](const SymbolPair& p) {
        stats[p] += entry.count;
        where[p].insert(w);
      });
    }
  }
  return table;
}

// Stateless application of a learned table.
class BpeCodec {
 public:
  BpeCodec() = default;

  explicit BpeCodec(MergeTable table) : table_(std::move(table)) {
    for (std::size_t i = 0; i < table_.merges.size(); ++i) {
      auto [it, fresh] = rank_.emplace(table_.merges[i], i);
      require(fresh, "merge table repeats the pair ('",
              table_.merges[i].first, "', '", table_.merges[i].second, "')");
    }
  }

  const MergeTable& table() const { return table_; }

  // Keeps merging the best-ranked applicable pair until none applies.
  std::vector<SubwordToken> segment_word(const std::string& word) const {
    if (word.empty()) return {};
    auto symbols = detail::word_symbols(word);
    while (symbols.size() >= 2) {
      std::size_t best_rank = rank_.size();
      detail::for_each_pair(symbols, [&](const SymbolPair& p) {
        auto it = rank_.find(p);
        if (it != rank_.end() && it->second < best_rank) best_rank = it->second;
      });
      if (best_rank == rank_.size()) break;
      symbols = detail::merge_in_word(symbols, table_.merges[best_rank]);
    }
    return to_tokens(symbols);
  }

  std::vector<SubwordToken> segment_sentence(
      const std::vector<std::string>& words) const {
    std::vector<SubwordToken> out;
    for (const auto& word : words) {
      auto pieces = segment_word(word);
      out.insert(out.end(), pieces.begin(), pieces.end());
    }
    return out;
  }

 private:
  MergeTable table_;
  std::map<SymbolPair, std::size_t> rank_;

  static std::vector<SubwordToken> to_tokens(
      const std::vector<std::string>& symbols) {
    const std::string sentinel = kEndOfWord;
    std::vector<SubwordToken> tokens;
    tokens.reserve(symbols.size());
    for (const auto& s : symbols) tokens.push_back({s, true});
    SubwordToken& last = tokens.back();
    if (last.text == sentinel) {
      tokens.pop_back();
      require(!tokens.empty(), "word reduced to a bare end-of-word sentinel");
    } else if (last.text.size() > sentinel.size() &&
               last.text.compare(last.text.size() - sentinel.size(),
                                 sentinel.size(), sentinel) == 0) {
      last.text.resize(last.text.size() - sentinel.size());
    }
    tokens.back().continuation = false;
    return tokens;
  }
};

// Joins continuation runs back into words; the inverse of segmentation.
inline std::vector<std::string> revert_bpe(
    const std::vector<SubwordToken>& tokens,
    std::ostream* warnings = nullptr) {
  std::vector<std::string> words;
  std::string pending;
  for (const auto& t : tokens) {
    pending += t.text;
    if (!t.continuation) {
      words.push_back(std::move(pending));
      pending.clear();
    }
  }
  if (!pending.empty()) {
    if (warnings) {
      *warnings << "warning: sequence ends on a continuation piece; joining "
                   "as-is\n";
    }
    words.push_back(std::move(pending));
  }
  return words;
}

inline void save_merge_table(const MergeTable& table, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "cannot open '", path, "' for writing");
  out << table.merges.size() << "\n";
  for (const auto& [left, right] : table.merges) {
    out << left << " " << right << "\n";
  }
  out.flush();
  require(out.good(), "write failure on merge table '", path, "'");
}

inline MergeTable load_merge_table(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open merge table '", path, "'");
  std::string header;
  require(static_cast<bool>(std::getline(in, header)), "merge table '", path,
          "' is empty");
  std::size_t count = 0;
  try {
    count = std::stoull(header);
  } catch (const std::exception&) {
    fail("merge table '", path, "' has a malformed count header: ", header);
  }
  MergeTable table;
  table.merges.reserve(count);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string left, right, extra;
    require(static_cast<bool>(fields >> left >> right) && !(fields >> extra),
            "merge table '", path, "' line ", table.merges.size() + 2,
            " is not 'left right': ", line);
    table.merges.emplace_back(std::move(left), std::move(right));
  }
  require(table.merges.size() == count, "merge table '", path, "' announces ",
          count, " merges but contains ", table.merges.size());
  return table;
}

}  // namespace unmt
