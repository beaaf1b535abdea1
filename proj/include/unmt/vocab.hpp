#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "unmt/common.hpp"
#include "unmt/model.hpp"
#include "unmt/multilingual.hpp"

namespace unmt {

// Token/id bijection with fixed reserved slots: UNK, end-of-sentence, the
// decoder start symbol, then one forcing symbol per configured language.
// Learned tokens follow, most frequent first.
class Vocabulary {
 public:
  Vocabulary() = default;

  static Vocabulary build(const std::vector<const std::vector<Tokens>*>& sides,
                          const std::set<std::string>& languages,
                          std::size_t short_list_size = 40000) {
    require(short_list_size >= 1, "short list size must be at least 1");
    Vocabulary v;
    v.add_reserved(languages);

    std::map<std::string, long long> counts;
    bool any = false;
    for (const auto* sentences : sides) {
      for (const auto& sentence : *sentences) {
        any = true;
        for (const auto& tok : sentence) {
          if (v.ids_.count(tok) || is_forcing_symbol(tok)) continue;
          ++counts[tok];
        }
      }
    }
    require(any, "cannot build a vocabulary from an empty corpus");

    // frequency descending, ties by token text ascending
    std::vector<std::pair<std::string, long long>> ranked(counts.begin(),
                                                          counts.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) {
                       if (a.second != b.second) return a.second > b.second;
                       return a.first < b.first;
                     });
    if (ranked.size() > short_list_size) ranked.resize(short_list_size);
    for (auto& [tok, count] : ranked) v.push(tok);
    return v;
  }

  int id_of(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? kUnkId : it->second;
  }

  bool contains(const std::string& token) const { return ids_.count(token); }

  const std::string& token_of(int id) const {
    require(id >= 0 && static_cast<std::size_t>(id) < tokens_.size(),
            "vocabulary id ", id, " out of range (size ", tokens_.size(), ")");
    return tokens_[static_cast<std::size_t>(id)];
  }

  std::size_t size() const { return tokens_.size(); }
  std::size_t reserved_count() const { return reserved_; }

  std::vector<int> encode(const Tokens& tokens) const {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const auto& tok : tokens) ids.push_back(id_of(tok));
    return ids;
  }

  Tokens decode(const std::vector<int>& ids) const {
    Tokens tokens;
    tokens.reserve(ids.size());
    for (int id : ids) tokens.push_back(token_of(id));
    return tokens;
  }

  // One token per line; the line number is the id.
  void save(const std::string& path) const {
    std::ofstream out(path);
    require(out.good(), "cannot open '", path, "' for writing");
    for (const auto& tok : tokens_) out << tok << "\n";
    out.flush();
    require(out.good(), "write failure on vocabulary '", path, "'");
  }

  static Vocabulary load(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "cannot open vocabulary '", path, "'");
    Vocabulary v;
    std::string line;
    while (std::getline(in, line)) {
      require(!line.empty(), "vocabulary '", path, "' has an empty line ",
              v.tokens_.size());
      require(!v.ids_.count(line), "vocabulary '", path,
              "' repeats the token '", line, "'");
      v.push(line);
    }
    require(v.tokens_.size() >= 3 && v.tokens_[0] == kUnkText &&
                v.tokens_[1] == kEosText && v.tokens_[2] == kBosText,
            "vocabulary '", path, "' does not start with the reserved tokens");
    v.reserved_ = 3;
    while (v.reserved_ < v.tokens_.size() &&
           is_forcing_symbol(v.tokens_[v.reserved_])) {
      ++v.reserved_;
    }
    return v;
  }

  bool operator==(const Vocabulary& other) const {
    return tokens_ == other.tokens_;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
  std::size_t reserved_ = 0;

  void push(const std::string& token) {
    ids_.emplace(token, static_cast<int>(tokens_.size()));
    tokens_.push_back(token);
  }

  void add_reserved(const std::set<std::string>& languages) {
    push(kUnkText);
    push(kEosText);
    push(kBosText);
    for (const auto& lang : languages) {  // set order = sorted
      push(forcing_symbol(lang));
    }
    reserved_ = tokens_.size();
  }
};

inline std::set<std::string> corpus_languages(const MixedCorpus& mix) {
  std::set<std::string> languages;
  for (const auto& pair : mix.pairs) {
    languages.insert(pair.source.language);
    languages.insert(pair.target.language);
    if (!pair.source.forced_target.empty()) {
      languages.insert(pair.source.forced_target);
    }
  }
  return languages;
}

enum class Side { source, target };

inline Vocabulary build_vocabulary(const MixedCorpus& mix, Side side,
                                   std::size_t short_list_size = 40000) {
  require(!mix.pairs.empty(), "cannot build a vocabulary from an empty corpus");
  std::vector<Tokens> sentences;
  sentences.reserve(mix.pairs.size());
  for (const auto& pair : mix.pairs) {
    sentences.push_back(side == Side::source ? pair.source.tokens
                                             : pair.target.tokens);
  }
  return Vocabulary::build({&sentences}, corpus_languages(mix),
                           short_list_size);
}

}  // namespace unmt
