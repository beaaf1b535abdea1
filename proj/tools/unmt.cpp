// Command-line front end: preprocessing, training, decoding, and scoring
// bound into one binary with file-based interchange formats.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "unmt/beam.hpp"
#include "unmt/bleu.hpp"
#include "unmt/bpe.hpp"
#include "unmt/model.hpp"
#include "unmt/multilingual.hpp"
#include "unmt/trainer.hpp"
#include "unmt/vocab.hpp"

namespace fs = std::filesystem;
using namespace unmt;

namespace {

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open '", path, "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

void write_lines(const std::string& path,
                 const std::vector<std::string>& lines) {
  std::ofstream out(path);
  require(out.good(), "cannot open '", path, "' for writing");
  for (const auto& line : lines) out << line << "\n";
  out.flush();
  require(out.good(), "write failure on '", path, "'");
}

// "sl:tl:source_path:target_path"
struct ParallelSpec {
  std::string source_language, target_language, source_path, target_path;
};

// "lang:path"
struct MonoSpec {
  std::string language, path;
};

std::vector<std::string> split_on(const std::string& text, char sep) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(text);
  while (std::getline(in, field, sep)) fields.push_back(field);
  return fields;
}

ParallelSpec parse_parallel_spec(const std::string& text) {
  auto fields = split_on(text, ':');
  require(fields.size() == 4, "parallel corpus '", text,
          "' must be sl:tl:source_path:target_path");
  require_language(fields[0]);
  require_language(fields[1]);
  return {fields[0], fields[1], fields[2], fields[3]};
}

MonoSpec parse_mono_spec(const std::string& text) {
  auto fields = split_on(text, ':');
  require(fields.size() == 2, "monolingual corpus '", text,
          "' must be lang:path");
  require_language(fields[0]);
  return {fields[0], fields[1]};
}

// Flat key=value file recording everything a rerun needs.
struct Manifest {
  std::vector<std::pair<std::string, std::string>> entries;

  void add(const std::string& key, const std::string& value) {
    entries.emplace_back(key, value);
  }
  void add(const std::string& key, std::uint64_t value) {
    add(key, std::to_string(value));
  }
  void add(const std::string& key, double value) {
    std::ostringstream out;
    out << value;
    add(key, out.str());
  }

  void write(const std::string& path) const {
    std::ofstream out(path);
    require(out.good(), "cannot open manifest '", path, "' for writing");
    out << "manifest_version=1\n";
    for (const auto& [key, value] : entries) out << key << "=" << value << "\n";
    out.flush();
    require(out.good(), "write failure on manifest '", path, "'");
  }
};

// Languages present in already-coded text: token codes plus forcing symbols.
std::set<std::string> languages_in(const std::vector<Tokens>& sentences) {
  std::set<std::string> langs;
  for (const auto& sentence : sentences) {
    for (const auto& tok : sentence) {
      if (auto lang = token_language(tok)) langs.insert(*lang);
      if (auto lang = parse_forcing_symbol(tok)) langs.insert(*lang);
    }
  }
  return langs;
}

template <class T>
TranslationSystem<T> load_system(const std::string& dir) {
  TranslationSystem<T> sys;
  sys.params = load_checkpoint<T>((fs::path(dir) / "best.ckpt").string());
  sys.source_vocab = Vocabulary::load((fs::path(dir) / "vocab.src").string());
  sys.target_vocab = Vocabulary::load((fs::path(dir) / "vocab.tgt").string());
  sys.merges = load_merge_table((fs::path(dir) / "bpe.merges").string());
  require(sys.source_vocab.size() == sys.params.hp.source_vocab_size,
          "model dir '", dir, "': vocab.src has ", sys.source_vocab.size(),
          " entries, checkpoint expects ", sys.params.hp.source_vocab_size);
  require(sys.target_vocab.size() == sys.params.hp.target_vocab_size,
          "model dir '", dir, "': vocab.tgt has ", sys.target_vocab.size(),
          " entries, checkpoint expects ", sys.params.hp.target_vocab_size);
  return sys;
}

int checkpoint_bits(const std::string& model_dir) {
  return peek_checkpoint_precision_bits(
      (fs::path(model_dir) / "best.ckpt").string());
}

std::string single_line(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    if (c == '\n') {
      if (!out.empty() && out.back() != ' ') out += "; ";
    } else {
      out += c;
    }
  }
  while (!out.empty() && (out.back() == ' ' || out.back() == ';')) {
    out.pop_back();
  }
  return out;
}

// Checkpoints carry their element width; dispatch once, here.
template <class Fn>
void with_precision(int bits, Fn&& fn) {
  if (bits == 64) {
    fn(static_cast<double*>(nullptr));
  } else if (bits == 32) {
    fn(static_cast<float*>(nullptr));
  } else {
    require(false, "unsupported precision: ", bits, " bits (use 32 or 64)");
  }
}

std::string content_language(const Tokens& tokens,
                             const std::string& fallback) {
  for (const auto& tok : tokens) {
    if (auto lang = token_language(tok)) return *lang;
  }
  return fallback;
}

// Rebuilds the tagged corpus from the train.src/train.tgt pair a prep run
// wrote. Sources arrive already coded and wrapped in forcing symbols.
MixedCorpus load_prepared_corpus(const std::string& dir) {
  auto src = read_token_lines((fs::path(dir) / "train.src").string());
  auto tgt = read_token_lines((fs::path(dir) / "train.tgt").string());
  require(src.size() == tgt.size(), "corpus '", dir, "': train.src has ",
          src.size(), " lines but train.tgt has ", tgt.size());
  require(!src.empty(), "corpus '", dir, "' is empty");
  MixedCorpus mix;
  mix.strategy = "prepared";
  mix.pairs.reserve(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    std::optional<std::string> forced;
    if (!src[i].empty()) forced = parse_forcing_symbol(src[i].front());
    require(forced && src[i].size() >= 2 && src[i].back() == src[i].front(),
            "train.src line ", i + 1,
            " is not wrapped in a target forcing symbol");
    CorpusPair pair;
    pair.source.tokens = src[i];
    pair.source.language = content_language(src[i], *forced);
    pair.source.forced_target = *forced;
    pair.target.tokens = tgt[i];
    pair.target.language = content_language(tgt[i], *forced);
    pair.provenance = "prepared";
    require(pair.target.language == *forced, "train line ", i + 1,
            " forces '", *forced, "' but its target is in '",
            pair.target.language, "'");
    mix.pairs.push_back(std::move(pair));
  }
  mix.check_invariants();
  return mix;
}

// Raw dev text goes through the same pipeline as training sources: segment
// with the corpus merge table, code, force. References stay as plain lines.
DevSet load_dev_set(const ParallelSpec& spec, const MergeTable& merges,
                    const Vocabulary& src_vocab) {
  auto raw = read_token_lines(spec.source_path);
  auto refs = read_lines(spec.target_path);
  require(raw.size() == refs.size(), "dev set: '", spec.source_path, "' has ",
          raw.size(), " lines but '", spec.target_path, "' has ", refs.size());
  require(!raw.empty(), "dev set is empty");
  std::vector<Tokens> segmented =
      merges.size() ? segment_corpus(BpeCodec(merges), raw) : raw;
  const auto known = vocabulary_languages(src_vocab);
  DevSet dev;
  dev.sources.reserve(segmented.size());
  for (const auto& words : segmented) {
    auto forced =
        force_target(code_language(words, spec.source_language),
                     spec.source_language, spec.target_language, known);
    dev.sources.push_back(src_vocab.encode(forced.tokens));
  }
  dev.references = std::move(refs);
  return dev;
}

void add_schedule_options(CLI::App* cmd, TrainingSchedule& s) {
  cmd->add_option("--batch-size", s.batch_size, "sentences per minibatch")
      ->capture_default_str();
  cmd->add_option("--eval-every", s.eval_every_updates,
                  "updates between dev evaluations")
      ->capture_default_str();
  cmd->add_option("--patience", s.patience,
                  "dev evaluations without improvement before stopping")
      ->capture_default_str();
  cmd->add_option("--epochs", s.max_epochs, "maximum training epochs")
      ->capture_default_str();
  cmd->add_option("--wall-clock", s.wall_clock_limit_seconds,
                  "wall-clock budget in seconds, 0 for unlimited")
      ->capture_default_str();
  cmd->add_option("--max-norm", s.max_gradient_norm,
                  "global gradient norm clipping threshold")
      ->capture_default_str();
}

void add_schedule_manifest(Manifest& m, const TrainingSchedule& s) {
  m.add("batch_size", static_cast<std::uint64_t>(s.batch_size));
  m.add("eval_every", static_cast<std::uint64_t>(s.eval_every_updates));
  m.add("patience", static_cast<std::uint64_t>(s.patience));
  m.add("epochs", static_cast<std::uint64_t>(s.max_epochs));
  m.add("wall_clock", s.wall_clock_limit_seconds);
  m.add("max_norm", s.max_gradient_norm);
}

void count_tokens(std::map<std::string, long long>& freq,
                  const std::vector<Tokens>& lines) {
  for (const auto& sentence : lines) {
    for (const auto& tok : sentence) ++freq[tok];
  }
}

// --- bpe-learn --------------------------------------------------------------

struct BpeLearnFlags {
  std::vector<std::string> inputs;
  long long merges = 0;
  std::string out;
};

void run_bpe_learn(const BpeLearnFlags& fl) {
  std::vector<std::string> lines;
  for (const auto& path : fl.inputs) {
    auto file = read_lines(path);
    lines.insert(lines.end(), file.begin(), file.end());
  }
  MergeTable table = learn_bpe(count_word_frequencies(lines), fl.merges);
  save_merge_table(table, fl.out);
  Manifest m;
  m.add("command", "bpe-learn");
  for (const auto& path : fl.inputs) m.add("input", path);
  m.add("merges", static_cast<std::uint64_t>(fl.merges));
  m.add("merges_learned", static_cast<std::uint64_t>(table.size()));
  m.add("out", fl.out);
  m.write(fl.out + ".manifest");
  std::cout << "learned " << table.size() << " merges from " << lines.size()
            << " lines\n";
}

// --- bpe-apply --------------------------------------------------------------

struct BpeApplyFlags {
  std::string merges, input, out;
};

void run_bpe_apply(const BpeApplyFlags& fl) {
  MergeTable table = load_merge_table(fl.merges);
  auto lines = read_token_lines(fl.input);
  write_token_lines(fl.out, segment_corpus(BpeCodec(table), lines));
  Manifest m;
  m.add("command", "bpe-apply");
  m.add("merges", fl.merges);
  m.add("input", fl.input);
  m.add("out", fl.out);
  m.write(fl.out + ".manifest");
  std::cout << "segmented " << lines.size() << " lines\n";
}

// --- prep -------------------------------------------------------------------

struct PrepFlags {
  std::string strategy, out;
  std::vector<std::string> parallel, mono;
  long long merges = 0;
  std::size_t max_len = 50;
  std::uint64_t seed = 1;
};

void run_prep(const PrepFlags& fl) {
  const auto& names = strategy_names();
  require(std::find(names.begin(), names.end(), fl.strategy) != names.end(),
          "unknown strategy '", fl.strategy, "'");
  require(!fl.parallel.empty() || !fl.mono.empty(),
          "prep needs at least one --parallel or --mono corpus");
  struct RawParallel {
    ParallelSpec spec;
    std::vector<Tokens> source, target;
  };
  struct RawMono {
    MonoSpec spec;
    std::vector<Tokens> sentences;
  };
  std::vector<RawParallel> raw_parallel;
  for (const auto& text : fl.parallel) {
    RawParallel c;
    c.spec = parse_parallel_spec(text);
    c.source = read_token_lines(c.spec.source_path);
    c.target = read_token_lines(c.spec.target_path);
    require(c.source.size() == c.target.size(), "corpus '", text, "': '",
            c.spec.source_path, "' has ", c.source.size(), " lines but '",
            c.spec.target_path, "' has ", c.target.size());
    raw_parallel.push_back(std::move(c));
  }
  std::vector<RawMono> raw_mono;
  for (const auto& text : fl.mono) {
    RawMono c;
    c.spec = parse_mono_spec(text);
    c.sentences = read_token_lines(c.spec.path);
    raw_mono.push_back(std::move(c));
  }

  // One merge table over every raw side, so all languages share subwords.
  MergeTable table;
  if (fl.merges > 0) {
    std::map<std::string, long long> freq;
    for (const auto& c : raw_parallel) {
      count_tokens(freq, c.source);
      count_tokens(freq, c.target);
    }
    for (const auto& c : raw_mono) count_tokens(freq, c.sentences);
    table = learn_bpe(freq, fl.merges);
  }
  BpeCodec codec(table);
  const auto seg = [&](const std::vector<Tokens>& lines) {
    return table.size() ? segment_corpus(codec, lines) : lines;
  };

  std::vector<ParallelCorpus> parallel;
  for (const auto& c : raw_parallel) {
    parallel.push_back({c.spec.source_language, c.spec.target_language,
                        seg(c.source), seg(c.target), ""});
  }
  std::vector<MonolingualCorpus> mono;
  for (const auto& c : raw_mono) {
    mono.push_back({c.spec.language, seg(c.sentences), ""});
  }

  MixedCorpus mix = build_strategy(fl.strategy, parallel, mono, fl.seed);
  std::size_t removed = 0;
  if (fl.max_len) {
    auto filtered = filter_length(mix, fl.max_len);
    removed = filtered.removed;
    mix = std::move(filtered.corpus);
  }
  require(!mix.pairs.empty(), "no pairs left after length filtering");

  fs::create_directories(fl.out);
  std::vector<Tokens> src_out, tgt_out;
  src_out.reserve(mix.pairs.size());
  tgt_out.reserve(mix.pairs.size());
  for (const auto& pair : mix.pairs) {
    src_out.push_back(pair.source.tokens);
    tgt_out.push_back(pair.target.tokens);
  }
  const fs::path out(fl.out);
  write_token_lines((out / "train.src").string(), src_out);
  write_token_lines((out / "train.tgt").string(), tgt_out);
  save_merge_table(table, (out / "bpe.merges").string());
  {
    std::ofstream balance(out / "balance.txt");
    require(balance.good(), "cannot open balance report for writing");
    balance << render_balance_report(balance_report(mix));
  }

  Manifest m;
  m.add("command", "prep");
  m.add("strategy", fl.strategy);
  for (const auto& text : fl.parallel) m.add("parallel", text);
  for (const auto& text : fl.mono) m.add("mono", text);
  m.add("merges", static_cast<std::uint64_t>(fl.merges));
  m.add("merges_learned", static_cast<std::uint64_t>(table.size()));
  m.add("max_len", static_cast<std::uint64_t>(fl.max_len));
  m.add("seed", fl.seed);
  m.add("out", fl.out);
  m.add("pairs", static_cast<std::uint64_t>(mix.pairs.size()));
  m.add("removed_by_length", static_cast<std::uint64_t>(removed));
  m.write((out / "manifest.txt").string());
  std::cout << "prepared " << mix.pairs.size() << " pairs (" << removed
            << " removed by length) in " << fl.out << "\n";
}

// --- train ------------------------------------------------------------------

struct TrainFlags {
  std::string corpus, dev, out;
  std::size_t embedding = 1000, hidden = 1024, attention = 0, readout = 0;
  std::size_t short_list = 40000;
  double dropout_embedding = 0.2, dropout_inout = 0.1;
  int precision = 64;
  TrainingSchedule schedule;
  std::uint64_t seed = 1;
};

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  require(out.good(), "cannot open '", path, "' for writing");
  out << text;
  out.flush();
  require(out.good(), "write failure on '", path, "'");
}

void save_model_dir(const fs::path& dir, const Vocabulary& src_vocab,
                    const Vocabulary& tgt_vocab, const MergeTable& merges,
                    const std::string& log) {
  src_vocab.save((dir / "vocab.src").string());
  tgt_vocab.save((dir / "vocab.tgt").string());
  save_merge_table(merges, (dir / "bpe.merges").string());
  write_text_file((dir / "train.log").string(), log);
}

void run_train(const TrainFlags& fl) {
  const ParallelSpec dev_spec = parse_parallel_spec(fl.dev);
  MixedCorpus mix = load_prepared_corpus(fl.corpus);
  MergeTable merges =
      load_merge_table((fs::path(fl.corpus) / "bpe.merges").string());
  Vocabulary src_vocab = build_vocabulary(mix, Side::source, fl.short_list);
  Vocabulary tgt_vocab = build_vocabulary(mix, Side::target, fl.short_list);

  Hyperparameters hp;
  hp.source_vocab_size = src_vocab.size();
  hp.target_vocab_size = tgt_vocab.size();
  hp.embedding_dim = fl.embedding;
  hp.hidden_dim = fl.hidden;
  hp.attention_dim = fl.attention;
  hp.readout_dim = fl.readout;
  hp.dropout_embedding_hidden = fl.dropout_embedding;
  hp.dropout_input_output = fl.dropout_inout;
  hp.precision_bits = fl.precision;
  hp.seed = fl.seed;

  const fs::path out(fl.out);
  fs::create_directories(out);
  with_precision(fl.precision, [&](auto* tag) {
    using T = std::remove_pointer_t<decltype(tag)>;
    ModelParameters<T> params = init_parameters<T>(hp);
    IdCorpus corpus = encode_corpus(mix, src_vocab, tgt_vocab);
    DevSet dev = load_dev_set(dev_spec, merges, src_vocab);
    TrainingResult result =
        train(params, corpus, dev, tgt_vocab, fl.schedule, fl.out);
    save_model_dir(out, src_vocab, tgt_vocab, merges, result.log);

    Manifest m;
    m.add("command", "train");
    m.add("corpus", fl.corpus);
    m.add("dev", fl.dev);
    m.add("out", fl.out);
    m.add("embedding", static_cast<std::uint64_t>(fl.embedding));
    m.add("hidden", static_cast<std::uint64_t>(fl.hidden));
    m.add("attention", static_cast<std::uint64_t>(fl.attention));
    m.add("readout", static_cast<std::uint64_t>(fl.readout));
    m.add("short_list", static_cast<std::uint64_t>(fl.short_list));
    m.add("dropout_embedding", fl.dropout_embedding);
    m.add("dropout_inout", fl.dropout_inout);
    m.add("precision", static_cast<std::uint64_t>(fl.precision));
    m.add("source_vocab", static_cast<std::uint64_t>(src_vocab.size()));
    m.add("target_vocab", static_cast<std::uint64_t>(tgt_vocab.size()));
    add_schedule_manifest(m, fl.schedule);
    m.add("seed", fl.seed);
    m.write((out / "manifest.txt").string());
    std::cout << "best dev BLEU " << fixed(result.best_dev_bleu, 2)
              << " after " << result.updates << " updates, model in "
              << fl.out << "\n";
  });
}

// --- adapt ------------------------------------------------------------------

struct AdaptFlags {
  std::string model, corpus, dev, out;
  TrainingSchedule schedule;
};

void run_adapt(const AdaptFlags& fl) {
  const ParallelSpec dev_spec = parse_parallel_spec(fl.dev);
  const fs::path base(fl.model);
  Vocabulary src_vocab = Vocabulary::load((base / "vocab.src").string());
  Vocabulary tgt_vocab = Vocabulary::load((base / "vocab.tgt").string());
  MergeTable merges = load_merge_table((base / "bpe.merges").string());
  MixedCorpus mix = load_prepared_corpus(fl.corpus);

  const fs::path out(fl.out);
  fs::create_directories(out);
  with_precision(checkpoint_bits(fl.model), [&](auto* tag) {
    using T = std::remove_pointer_t<decltype(tag)>;
    IdCorpus genuine = encode_corpus(mix, src_vocab, tgt_vocab);
    DevSet dev = load_dev_set(dev_spec, merges, src_vocab);
    TrainingResult result =
        adapt<T>((base / "best.ckpt").string(), genuine, dev, src_vocab,
                 tgt_vocab, fl.schedule, fl.out);
    save_model_dir(out, src_vocab, tgt_vocab, merges, result.log);
    const fs::path target = out / "best.ckpt";
    if (fs::path(result.checkpoint_path).lexically_normal() !=
        target.lexically_normal()) {
      fs::copy_file(result.checkpoint_path, target,
                    fs::copy_options::overwrite_existing);
    }

    Manifest m;
    m.add("command", "adapt");
    m.add("model", fl.model);
    m.add("corpus", fl.corpus);
    m.add("dev", fl.dev);
    m.add("out", fl.out);
    add_schedule_manifest(m, fl.schedule);
    m.write((out / "manifest.txt").string());
    std::cout << "best dev BLEU " << fixed(result.best_dev_bleu, 2)
              << " after " << result.updates << " updates, model in "
              << fl.out << "\n";
  });
}

// Runs fn(i) over [0, count) on the requested number of threads, sentence i
// always landing in slot i so the output order never depends on scheduling.
template <class Fn>
void for_each_index(std::size_t count, std::size_t threads, Fn&& fn) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  const std::size_t workers = std::min(threads, count);
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t t = 0; t < workers; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < count; i += workers) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& worker : pool) worker.join();
  for (const auto& error : errors) {
    if (error) std::rethrow_exception(error);
  }
}

void write_blocks(const std::string& out_path,
                  const std::vector<std::string>& blocks) {
  std::ofstream file;
  std::ostream* dest = &std::cout;
  if (!out_path.empty()) {
    file.open(out_path);
    require(file.good(), "cannot open '", out_path, "' for writing");
    dest = &file;
  }
  for (const auto& block : blocks) *dest << block;
  dest->flush();
  require(dest->good(), "write failure on translation output");
}

// --- translate --------------------------------------------------------------

struct TranslateFlags {
  std::string model, input, src, tgt, out, raw_out;
  std::size_t beam = 12, n_best = 1, max_len = 0, threads = 1;
  bool length_normalize = false;
};

void run_translate(const TranslateFlags& fl) {
  require_language(fl.src);
  require_language(fl.tgt);
  auto lines = read_token_lines(fl.input);
  with_precision(checkpoint_bits(fl.model), [&](auto* tag) {
    using T = std::remove_pointer_t<decltype(tag)>;
    const TranslationSystem<T> system = load_system<T>(fl.model);
    std::vector<std::string> blocks(lines.size()), warnings(lines.size());
    std::vector<std::string> raw_blocks(lines.size());
    for_each_index(lines.size(), fl.threads, [&](std::size_t i) {
      std::ostringstream warn;
      Tokens forced = prepare_source(system, lines[i], fl.src, fl.tgt);
      auto candidates = translate_sentence(
          system.params, system.source_vocab, system.target_vocab, forced,
          fl.beam, fl.max_len, fl.n_best, fl.length_normalize, &warn);
      if (fl.n_best <= 1) {
        blocks[i] = (candidates.empty()
                         ? std::string()
                         : join_tokens(candidates[0].words)) +
                    "\n";
      } else {
        blocks[i] = render_nbest(candidates);
      }
      raw_blocks[i] =
          (candidates.empty() ? std::string()
                              : join_tokens(candidates[0].raw)) +
          "\n";
      warnings[i] = warn.str();
    });
    for (const auto& warning : warnings) std::cerr << warning;
    write_blocks(fl.out, blocks);
    if (!fl.raw_out.empty()) write_blocks(fl.raw_out, raw_blocks);
    if (!fl.out.empty()) {
      Manifest m;
      m.add("command", "translate");
      m.add("model", fl.model);
      m.add("input", fl.input);
      m.add("src", fl.src);
      m.add("tgt", fl.tgt);
      m.add("beam", static_cast<std::uint64_t>(fl.beam));
      m.add("n_best", static_cast<std::uint64_t>(fl.n_best));
      m.add("max_len", static_cast<std::uint64_t>(fl.max_len));
      m.add("length_normalize", fl.length_normalize ? "1" : "0");
      m.add("out", fl.out);
      m.add("raw_out", fl.raw_out);
      m.write(fl.out + ".manifest");
    }
  });
}

// --- pivot ------------------------------------------------------------------

struct PivotFlags {
  std::string first, second, input, src, pivot, tgt, out, intermediate;
  std::size_t beam = 12, threads = 1;
};

void run_pivot(const PivotFlags& fl) {
  require_language(fl.src);
  require_language(fl.pivot);
  require_language(fl.tgt);
  const int bits = checkpoint_bits(fl.first);
  const int second_bits = checkpoint_bits(fl.second);
  require(bits == second_bits, "pivot systems use different precisions (",
          bits, " vs ", second_bits, " bits)");
  auto lines = read_token_lines(fl.input);
  with_precision(bits, [&](auto* tag) {
    using T = std::remove_pointer_t<decltype(tag)>;
    const TranslationSystem<T> first = load_system<T>(fl.first);
    const TranslationSystem<T> second = load_system<T>(fl.second);
    std::vector<std::string> blocks(lines.size()), inter(lines.size()),
        warnings(lines.size());
    for_each_index(lines.size(), fl.threads, [&](std::size_t i) {
      std::ostringstream warn;
      PivotResult result =
          pivot_translate(first, second, lines[i], fl.src, fl.pivot, fl.tgt,
                          fl.beam, &warn);
      blocks[i] = join_tokens(result.words) + "\n";
      inter[i] = join_tokens(result.intermediate) + "\n";
      warnings[i] = warn.str();
    });
    for (const auto& warning : warnings) std::cerr << warning;
    write_blocks(fl.out, blocks);
    if (!fl.intermediate.empty()) {
      std::ostringstream joined;
      for (const auto& line : inter) joined << line;
      write_text_file(fl.intermediate, joined.str());
    }
    if (!fl.out.empty()) {
      Manifest m;
      m.add("command", "pivot");
      m.add("first", fl.first);
      m.add("second", fl.second);
      m.add("input", fl.input);
      m.add("src", fl.src);
      m.add("pivot", fl.pivot);
      m.add("tgt", fl.tgt);
      m.add("beam", static_cast<std::uint64_t>(fl.beam));
      m.add("out", fl.out);
      if (!fl.intermediate.empty()) m.add("intermediate", fl.intermediate);
      m.write(fl.out + ".manifest");
    }
  });
}

// --- bleu -------------------------------------------------------------------

struct BleuFlags {
  std::string hyp, ref, test_set, baseline;
};

void run_bleu(const BleuFlags& fl) {
  auto refs = read_lines(fl.ref);
  BleuReport report = compute_bleu(read_lines(fl.hyp), refs, fl.test_set);
  std::cout << render_bleu_report(report) << "\n";
  if (!fl.baseline.empty()) {
    BleuReport base = compute_bleu(read_lines(fl.baseline), refs, fl.test_set);
    std::cout << "delta vs baseline (" << fixed(base.bleu, 2)
              << ") = " << delta_report(report, base) << "\n";
  }
}

// --- lang-stats -------------------------------------------------------------

struct LangStatsFlags {
  std::string input, lang;
};

void run_lang_stats(const LangStatsFlags& fl) {
  require_language(fl.lang);
  auto sentences = read_token_lines(fl.input);
  LanguageStats stats = wrong_language_stats(sentences, fl.lang, &std::cerr);
  std::cout << render_language_stats(stats);
}

// --- export-embeddings ------------------------------------------------------

struct ExportFlags {
  std::string model, out, languages;
};

void run_export(const ExportFlags& fl) {
  std::set<std::string> filter;
  for (const auto& lang : split_on(fl.languages, ',')) {
    if (lang.empty()) continue;
    require_language(lang);
    filter.insert(lang);
  }
  with_precision(checkpoint_bits(fl.model), [&](auto* tag) {
    using T = std::remove_pointer_t<decltype(tag)>;
    const fs::path dir(fl.model);
    ModelParameters<T> params =
        load_checkpoint<T>((dir / "best.ckpt").string());
    Vocabulary vocab = Vocabulary::load((dir / "vocab.src").string());
    export_embeddings(params, vocab, fl.out, filter);
  });
  Manifest m;
  m.add("command", "export-embeddings");
  m.add("model", fl.model);
  m.add("out", fl.out);
  if (!fl.languages.empty()) m.add("languages", fl.languages);
  m.write(fl.out + ".manifest");
  std::cout << "wrote embeddings to " << fl.out << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multilingual attention-based translation toolkit"};
  app.require_subcommand(1);
  // One config option on the root: flags live in a [subcommand] section and
  // lose to anything given on the command line. fallthrough lets the flag be
  // written after the subcommand name as well.
  app.set_config("--config", "",
                 "file supplying any flag in a [subcommand] section");
  app.fallthrough();

  auto bpe_learn = std::make_shared<BpeLearnFlags>();
  {
    auto* cmd = app.add_subcommand("bpe-learn", "learn a subword merge table");
    cmd->add_option("--input", bpe_learn->inputs, "raw text files")
        ->required();
    cmd->add_option("--merges", bpe_learn->merges, "number of merges to learn")
        ->required();
    cmd->add_option("--out", bpe_learn->out, "merge table to write")
        ->required();
    cmd->callback([bpe_learn] { run_bpe_learn(*bpe_learn); });
  }

  auto bpe_apply = std::make_shared<BpeApplyFlags>();
  {
    auto* cmd = app.add_subcommand("bpe-apply", "segment text with a table");
    cmd->add_option("--merges", bpe_apply->merges, "merge table file")
        ->required();
    cmd->add_option("--input", bpe_apply->input, "raw text file")->required();
    cmd->add_option("--out", bpe_apply->out, "segmented text to write")
        ->required();
    cmd->callback([bpe_apply] { run_bpe_apply(*bpe_apply); });
  }

  auto prep = std::make_shared<PrepFlags>();
  {
    auto* cmd = app.add_subcommand(
        "prep", "build a coded, forced, filtered training corpus");
    cmd->add_option("--strategy", prep->strategy, "corpus mixing strategy")
        ->required();
    cmd->add_option("--parallel", prep->parallel,
                    "parallel corpus as sl:tl:source_path:target_path");
    cmd->add_option("--mono", prep->mono, "monolingual corpus as lang:path");
    cmd->add_option("--merges", prep->merges,
                    "subword merges to learn, 0 to skip segmentation")
        ->capture_default_str();
    cmd->add_option("--max-len", prep->max_len,
                    "drop pairs with a side longer than this, 0 to keep all")
        ->capture_default_str();
    cmd->add_option("--seed", prep->seed, "random seed")
        ->capture_default_str();
    cmd->add_option("--out", prep->out, "output directory")->required();
    cmd->callback([prep] { run_prep(*prep); });
  }

  auto train_flags = std::make_shared<TrainFlags>();
  {
    auto* cmd = app.add_subcommand("train", "train a model on a prep corpus");
    cmd->add_option("--corpus", train_flags->corpus, "prep output directory")
        ->required();
    cmd->add_option("--dev", train_flags->dev,
                    "dev set as sl:tl:source_path:reference_path")
        ->required();
    cmd->add_option("--out", train_flags->out, "model directory to write")
        ->required();
    cmd->add_option("--embedding", train_flags->embedding, "embedding width")
        ->capture_default_str();
    cmd->add_option("--hidden", train_flags->hidden, "recurrent state width")
        ->capture_default_str();
    cmd->add_option("--attention", train_flags->attention,
                    "attention width, 0 to match --hidden")
        ->capture_default_str();
    cmd->add_option("--readout", train_flags->readout,
                    "readout width, 0 to match --embedding")
        ->capture_default_str();
    cmd->add_option("--short-list", train_flags->short_list,
                    "vocabulary size cap")
        ->capture_default_str();
    cmd->add_option("--dropout-embedding", train_flags->dropout_embedding,
                    "dropout on embeddings and recurrent states")
        ->capture_default_str();
    cmd->add_option("--dropout-inout", train_flags->dropout_inout,
                    "dropout on attention queries and readout")
        ->capture_default_str();
    cmd->add_option("--precision", train_flags->precision,
                    "floating-point width in bits")
        ->check(CLI::IsMember({32, 64}))
        ->capture_default_str();
    cmd->add_option("--seed", train_flags->seed, "random seed")
        ->capture_default_str();
    add_schedule_options(cmd, train_flags->schedule);
    cmd->callback([train_flags] { run_train(*train_flags); });
  }

  auto adapt_flags = std::make_shared<AdaptFlags>();
  {
    auto* cmd = app.add_subcommand(
        "adapt", "continue training a model on new parallel data");
    cmd->add_option("--model", adapt_flags->model, "base model directory")
        ->required();
    cmd->add_option("--corpus", adapt_flags->corpus, "prep output directory")
        ->required();
    cmd->add_option("--dev", adapt_flags->dev,
                    "dev set as sl:tl:source_path:reference_path")
        ->required();
    cmd->add_option("--out", adapt_flags->out, "model directory to write")
        ->required();
    add_schedule_options(cmd, adapt_flags->schedule);
    cmd->callback([adapt_flags] { run_adapt(*adapt_flags); });
  }

  auto translate_flags = std::make_shared<TranslateFlags>();
  {
    auto* cmd = app.add_subcommand("translate", "translate raw text");
    cmd->add_option("--model", translate_flags->model, "model directory")
        ->required();
    cmd->add_option("--input", translate_flags->input, "raw source text")
        ->required();
    cmd->add_option("--src", translate_flags->src, "source language code")
        ->required();
    cmd->add_option("--tgt", translate_flags->tgt, "target language code")
        ->required();
    cmd->add_option("--beam", translate_flags->beam, "beam size")
        ->capture_default_str();
    cmd->add_option("--n-best", translate_flags->n_best,
                    "candidates per sentence")
        ->capture_default_str();
    cmd->add_option("--max-len", translate_flags->max_len,
                    "decode length cap, 0 for 3*source+10")
        ->capture_default_str();
    cmd->add_flag("--length-normalize", translate_flags->length_normalize,
                  "rank candidates by per-token score");
    cmd->add_option("--threads", translate_flags->threads,
                    "decoding threads")
        ->capture_default_str();
    cmd->add_option("--out", translate_flags->out,
                    "output file, stdout when omitted");
    cmd->add_option("--raw-out", translate_flags->raw_out,
                    "also write best candidates as coded tokens");
    cmd->callback([translate_flags] { run_translate(*translate_flags); });
  }

  auto pivot_flags = std::make_shared<PivotFlags>();
  {
    auto* cmd = app.add_subcommand(
        "pivot", "translate through an intermediate language");
    cmd->add_option("--first", pivot_flags->first,
                    "source-to-pivot model directory")
        ->required();
    cmd->add_option("--second", pivot_flags->second,
                    "pivot-to-target model directory")
        ->required();
    cmd->add_option("--input", pivot_flags->input, "raw source text")
        ->required();
    cmd->add_option("--src", pivot_flags->src, "source language code")
        ->required();
    cmd->add_option("--pivot", pivot_flags->pivot, "pivot language code")
        ->required();
    cmd->add_option("--tgt", pivot_flags->tgt, "target language code")
        ->required();
    cmd->add_option("--beam", pivot_flags->beam, "beam size")
        ->capture_default_str();
    cmd->add_option("--threads", pivot_flags->threads, "decoding threads")
        ->capture_default_str();
    cmd->add_option("--out", pivot_flags->out,
                    "output file, stdout when omitted");
    cmd->add_option("--intermediate", pivot_flags->intermediate,
                    "also write the pivot-language text here");
    cmd->callback([pivot_flags] { run_pivot(*pivot_flags); });
  }

  auto bleu_flags = std::make_shared<BleuFlags>();
  {
    auto* cmd = app.add_subcommand("bleu", "score hypotheses against references");
    cmd->add_option("--hyp", bleu_flags->hyp, "hypothesis file")->required();
    cmd->add_option("--ref", bleu_flags->ref, "reference file")->required();
    cmd->add_option("--test-set", bleu_flags->test_set,
                    "test set id, guards against cross-set deltas");
    cmd->add_option("--baseline", bleu_flags->baseline,
                    "second hypothesis file to report a delta against");
    cmd->callback([bleu_flags] { run_bleu(*bleu_flags); });
  }

  auto stats_flags = std::make_shared<LangStatsFlags>();
  {
    auto* cmd = app.add_subcommand(
        "lang-stats", "wrong-language rates of coded output");
    cmd->add_option("--input", stats_flags->input, "coded token file")
        ->required();
    cmd->add_option("--lang", stats_flags->lang, "expected language code")
        ->required();
    cmd->callback([stats_flags] { run_lang_stats(*stats_flags); });
  }

  auto export_flags = std::make_shared<ExportFlags>();
  {
    auto* cmd = app.add_subcommand(
        "export-embeddings", "dump source embeddings as text");
    cmd->add_option("--model", export_flags->model, "model directory")
        ->required();
    cmd->add_option("--out", export_flags->out, "embedding file to write")
        ->required();
    cmd->add_option("--languages", export_flags->languages,
                    "comma-separated language filter");
    cmd->callback([export_flags] { run_export(*export_flags); });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: " << single_line(e.what()) << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << single_line(e.what()) << "\n";
    return 1;
  }
  return 0;
}
