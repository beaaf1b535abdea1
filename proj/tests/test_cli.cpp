// End-to-end checks of the command-line binary: each test shells out to the
// real executable and inspects files, stdout, stderr, and exit codes.

#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "unmt/bpe.hpp"
#include "unmt/multilingual.hpp"

namespace fs = std::filesystem;
using namespace unmt;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void spit(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  REQUIRE(out.good());
  out << text;
}

// Scratch directory shared by all cases in this binary, wiped on first use.
const fs::path& scratch() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() /
                 ("unmt-cli-" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

RunResult run_cli(const std::vector<std::string>& args) {
  static int invocation = 0;
  const fs::path out_file =
      scratch() / ("stdout." + std::to_string(invocation));
  const fs::path err_file =
      scratch() / ("stderr." + std::to_string(invocation));
  ++invocation;
  std::string command = std::string("'") + UNMT_CLI_PATH + "'";
  for (const auto& arg : args) command += " '" + arg + "'";
  command += " > '" + out_file.string() + "' 2> '" + err_file.string() + "'";
  const int status = std::system(command.c_str());
  RunResult result;
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  result.out = slurp(out_file);
  result.err = slurp(err_file);
  return result;
}

// Eight parallel copy-task sentences, enough for a few quick updates.
struct ToyFiles {
  fs::path dir, src, tgt;

  ToyFiles() {
    static int id = 0;
    dir = scratch() / ("toy" + std::to_string(id++));
    fs::create_directories(dir);
    src = dir / "corpus.en";
    tgt = dir / "corpus.de";
    const std::string text =
        "a b c d\nb c a d\nc a b d\na a b c\nb b c a\nc c a b\na b b c\n"
        "c b a a\n";
    spit(src, text);
    spit(tgt, text);
  }
};

}  // namespace

TEST_CASE("bpe-learn writes the same table the library learns") {
  const fs::path dir = scratch() / "bpe-learn";
  fs::create_directories(dir);
  const std::string text = "low lower lowest newest newer new\nwider wide\n";
  spit(dir / "text.txt", text);
  auto result = run_cli({"bpe-learn", "--input", (dir / "text.txt").string(),
                         "--merges", "10", "--out",
                         (dir / "table.bpe").string()});
  CAPTURE(result.err);
  REQUIRE(result.exit_code == 0);

  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  MergeTable expected = learn_bpe(count_word_frequencies(lines), 10);
  MergeTable actual = load_merge_table((dir / "table.bpe").string());
  REQUIRE(actual.merges == expected.merges);
  REQUIRE(fs::exists(dir / "table.bpe.manifest"));
}

TEST_CASE("bpe-apply segments a file with an existing table") {
  const fs::path dir = scratch() / "bpe-apply";
  fs::create_directories(dir);
  spit(dir / "text.txt", "lower newest\nnew low\n");
  auto learn = run_cli({"bpe-learn", "--input", (dir / "text.txt").string(),
                        "--merges", "5", "--out", (dir / "t.bpe").string()});
  REQUIRE(learn.exit_code == 0);
  auto apply = run_cli({"bpe-apply", "--merges", (dir / "t.bpe").string(),
                        "--input", (dir / "text.txt").string(), "--out",
                        (dir / "seg.txt").string()});
  CAPTURE(apply.err);
  REQUIRE(apply.exit_code == 0);

  MergeTable table = load_merge_table((dir / "t.bpe").string());
  BpeCodec codec(table);
  auto expected = segment_corpus(
      codec, read_token_lines((dir / "text.txt").string()));
  auto actual = read_token_lines((dir / "seg.txt").string());
  REQUIRE(actual == expected);
}

TEST_CASE("prep writes coded forced corpora deterministically") {
  ToyFiles toy;
  const std::string parallel =
      "en:de:" + toy.src.string() + ":" + toy.tgt.string();
  const fs::path out1 = scratch() / "prep1";
  const fs::path out2 = scratch() / "prep2";
  for (const auto& out : {out1, out2}) {
    auto result = run_cli({"prep", "--strategy", "baseline", "--parallel",
                           parallel, "--merges", "4", "--seed", "3", "--out",
                           out.string()});
    CAPTURE(result.err);
    REQUIRE(result.exit_code == 0);
  }
  for (const char* name : {"train.src", "train.tgt", "bpe.merges",
                           "balance.txt"}) {
    INFO(name);
    REQUIRE(slurp(out1 / name) == slurp(out2 / name));
  }

  auto sources = read_token_lines((out1 / "train.src").string());
  auto targets = read_token_lines((out1 / "train.tgt").string());
  REQUIRE(sources.size() == 8);
  REQUIRE(targets.size() == 8);
  for (std::size_t i = 0; i < sources.size(); ++i) {
    REQUIRE(sources[i].front() == "<DE>");
    REQUIRE(sources[i].back() == "<DE>");
    for (std::size_t k = 1; k + 1 < sources[i].size(); ++k) {
      REQUIRE(token_language(sources[i][k]) == std::string("en"));
    }
    for (const auto& tok : targets[i]) {
      REQUIRE(token_language(tok) == std::string("de"));
    }
  }

  // Rerunning into the same directory leaves every byte alone.
  const std::string before = slurp(out1 / "manifest.txt");
  auto rerun = run_cli({"prep", "--strategy", "baseline", "--parallel",
                        parallel, "--merges", "4", "--seed", "3", "--out",
                        out1.string()});
  REQUIRE(rerun.exit_code == 0);
  REQUIRE(slurp(out1 / "manifest.txt") == before);
  REQUIRE(slurp(out1 / "train.src") == slurp(out2 / "train.src"));
}

namespace {

// prep + train once, reused by the decode-facing cases below.
struct TrainedModel {
  fs::path prep_dir, model_dir;
  ToyFiles toy;
  std::string dev_spec;

  TrainedModel() {
    prep_dir = scratch() / "shared-prep";
    model_dir = scratch() / "shared-model";
    const std::string parallel =
        "en:de:" + toy.src.string() + ":" + toy.tgt.string();
    dev_spec = parallel;
    auto prep = run_cli({"prep", "--strategy", "baseline", "--parallel",
                         parallel, "--merges", "0", "--out",
                         prep_dir.string()});
    REQUIRE(prep.exit_code == 0);
    // enough updates that the copy toy emits real coded tokens downstream
    auto train = run_cli({"train", "--corpus", prep_dir.string(), "--dev",
                          dev_spec, "--out", model_dir.string(),
                          "--embedding", "8", "--hidden", "12",
                          "--batch-size", "2", "--eval-every", "100",
                          "--patience", "1000", "--epochs", "400",
                          "--seed", "5"});
    CAPTURE(train.err);
    REQUIRE(train.exit_code == 0);
  }
};

const TrainedModel& trained() {
  static const TrainedModel model;
  return model;
}

}  // namespace

TEST_CASE("train writes a complete reloadable model directory") {
  const auto& model = trained();
  for (const char* name : {"best.ckpt", "vocab.src", "vocab.tgt",
                           "bpe.merges", "train.log", "manifest.txt"}) {
    INFO(name);
    REQUIRE(fs::exists(model.model_dir / name));
  }
  const std::string log = slurp(model.model_dir / "train.log");
  REQUIRE(log.find("0\t0\t0.000000\t") == 0);
  REQUIRE(log.find("best.ckpt") != std::string::npos);
  const std::string manifest = slurp(model.model_dir / "manifest.txt");
  REQUIRE(manifest.find("command=train\n") != std::string::npos);
  REQUIRE(manifest.find("seed=5\n") != std::string::npos);
}

TEST_CASE("identical train invocations reproduce checkpoint and log") {
  const auto& model = trained();
  const fs::path again = scratch() / "shared-model-again";
  auto rerun = run_cli({"train", "--corpus", model.prep_dir.string(), "--dev",
                        model.dev_spec, "--out", again.string(),
                        "--embedding", "8", "--hidden", "12", "--batch-size",
                        "2", "--eval-every", "100", "--patience", "1000",
                        "--epochs", "400", "--seed", "5"});
  CAPTURE(rerun.err);
  REQUIRE(rerun.exit_code == 0);
  REQUIRE(slurp(model.model_dir / "best.ckpt") == slurp(again / "best.ckpt"));
  REQUIRE(slurp(model.model_dir / "train.log") == slurp(again / "train.log"));
}

TEST_CASE("translate writes one line per input and honors n-best") {
  const auto& model = trained();
  const fs::path out = scratch() / "hyp.txt";
  const fs::path raw = scratch() / "hyp.raw";
  auto result = run_cli({"translate", "--model", model.model_dir.string(),
                         "--input", model.toy.src.string(), "--src", "en",
                         "--tgt", "de", "--beam", "3", "--out", out.string(),
                         "--raw-out", raw.string()});
  CAPTURE(result.err);
  REQUIRE(result.exit_code == 0);
  REQUIRE(read_token_lines(out.string()).size() == 8);
  REQUIRE(fs::exists(scratch() / "hyp.txt.manifest"));

  // raw output carries the coded tokens whose reverted form is the main file
  auto raw_lines = read_token_lines(raw.string());
  REQUIRE(raw_lines.size() == 8);
  std::size_t coded = 0, total = 0;
  for (std::size_t i = 0; i < raw_lines.size(); ++i) {
    for (const auto& token : raw_lines[i]) {
      ++total;
      if (token.rfind("@de@", 0) == 0) ++coded;
    }
    REQUIRE(revert_coded_output(raw_lines[i]) ==
            read_token_lines(out.string())[i]);
  }
  REQUIRE(total > 0);
  REQUIRE(2 * coded > total);

  auto nbest = run_cli({"translate", "--model", model.model_dir.string(),
                        "--input", model.toy.src.string(), "--src", "en",
                        "--tgt", "de", "--beam", "3", "--n-best", "2"});
  REQUIRE(nbest.exit_code == 0);
  std::size_t lines = 0, separators = 0;
  std::istringstream in(nbest.out);
  for (std::string line; std::getline(in, line);) {
    ++lines;
    if (line.find(" ||| ") != std::string::npos) ++separators;
  }
  REQUIRE(lines == 16);
  REQUIRE(separators == 16);
}

TEST_CASE("threaded translation matches single-threaded output") {
  const auto& model = trained();
  const fs::path one = scratch() / "hyp-t1.txt";
  const fs::path four = scratch() / "hyp-t4.txt";
  for (const auto& [path, threads] :
       std::vector<std::pair<fs::path, const char*>>{{one, "1"}, {four, "4"}}) {
    auto result = run_cli({"translate", "--model", model.model_dir.string(),
                           "--input", model.toy.src.string(), "--src", "en",
                           "--tgt", "de", "--beam", "3", "--threads", threads,
                           "--out", path.string()});
    REQUIRE(result.exit_code == 0);
  }
  REQUIRE(slurp(one) == slurp(four));
}

TEST_CASE("adapt produces a self-contained model directory") {
  const auto& model = trained();
  const fs::path out = scratch() / "adapted";
  auto result = run_cli({"adapt", "--model", model.model_dir.string(),
                         "--corpus", model.prep_dir.string(), "--dev",
                         model.dev_spec, "--out", out.string(), "--epochs",
                         "1", "--batch-size", "2", "--eval-every", "4"});
  CAPTURE(result.err);
  REQUIRE(result.exit_code == 0);
  for (const char* name : {"best.ckpt", "vocab.src", "vocab.tgt",
                           "bpe.merges", "train.log", "manifest.txt"}) {
    INFO(name);
    REQUIRE(fs::exists(out / name));
  }
  REQUIRE(slurp(out / "vocab.src") == slurp(model.model_dir / "vocab.src"));
}

TEST_CASE("pivot decodes through two systems") {
  const auto& model = trained();
  const fs::path out = scratch() / "pivot.txt";
  const fs::path inter = scratch() / "pivot-mid.txt";
  auto result = run_cli({"pivot", "--first", model.model_dir.string(),
                         "--second", model.model_dir.string(), "--input",
                         model.toy.src.string(), "--src", "en", "--pivot",
                         "de", "--tgt", "de", "--beam", "2", "--out",
                         out.string(), "--intermediate", inter.string()});
  CAPTURE(result.err);
  REQUIRE(result.exit_code == 0);
  REQUIRE(read_token_lines(out.string()).size() == 8);
  REQUIRE(read_token_lines(inter.string()).size() == 8);
}

TEST_CASE("bleu reports 100 on identical files and deltas against baselines") {
  const fs::path dir = scratch() / "bleu";
  fs::create_directories(dir);
  spit(dir / "ref.txt", "the cat sat on the mat\nthe dog barked all night\n");
  spit(dir / "same.txt", "the cat sat on the mat\nthe dog barked all night\n");
  spit(dir / "worse.txt", "the cat sat on a mat\nthe dog barked all day\n");

  auto perfect = run_cli({"bleu", "--hyp", (dir / "same.txt").string(),
                          "--ref", (dir / "ref.txt").string()});
  REQUIRE(perfect.exit_code == 0);
  REQUIRE(perfect.out.rfind("BLEU = 100.00, 100.0/100.0/100.0/100.0", 0) == 0);

  auto delta = run_cli({"bleu", "--hyp", (dir / "same.txt").string(), "--ref",
                        (dir / "ref.txt").string(), "--baseline",
                        (dir / "worse.txt").string()});
  REQUIRE(delta.exit_code == 0);
  REQUIRE(delta.out.find("delta vs baseline") != std::string::npos);
  REQUIRE(delta.out.find("+") != std::string::npos);

  auto mismatch = run_cli({"bleu", "--hyp", (dir / "same.txt").string(),
                           "--ref", (dir / "missing.txt").string()});
  REQUIRE(mismatch.exit_code == 1);
  REQUIRE(mismatch.err.rfind("error: ", 0) == 0);
}

TEST_CASE("lang-stats renders exact percentages") {
  const fs::path input = scratch() / "coded.txt";
  spit(input,
       "@de@gut @de@morgen @en@good @de@tag\n@en@so @en@it @en@goes\n");
  auto result = run_cli({"lang-stats", "--input", input.string(), "--lang",
                         "de"});
  REQUIRE(result.exit_code == 0);
  REQUIRE(result.out == "wrong-language words\t4/7\t57.14\n"
                        "wrong-language sentences\t1/2\t50.00\n");
}

TEST_CASE("export-embeddings writes one row per learned token") {
  const auto& model = trained();
  const fs::path out = scratch() / "emb.txt";
  auto result = run_cli({"export-embeddings", "--model",
                         model.model_dir.string(), "--out", out.string()});
  CAPTURE(result.err);
  REQUIRE(result.exit_code == 0);
  std::ifstream in(out);
  std::size_t records = 0, dim = 0;
  REQUIRE((in >> records >> dim));
  REQUIRE(dim == 8);
  REQUIRE(records > 0);
  std::string rest;
  std::getline(in, rest);
  std::size_t rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  REQUIRE(rows == records);
}

TEST_CASE("config file supplies flags and the command line wins") {
  const fs::path dir = scratch() / "config";
  fs::create_directories(dir);
  spit(dir / "ref.txt", "one two three four\n");
  spit(dir / "hyp.txt", "one two three four\n");
  spit(dir / "cfg.ini", "[bleu]\nhyp=" + (dir / "hyp.txt").string() +
                            "\nref=" + (dir / "ref.txt").string() + "\n");

  auto from_file = run_cli({"bleu", "--config", (dir / "cfg.ini").string()});
  CAPTURE(from_file.err);
  REQUIRE(from_file.exit_code == 0);
  REQUIRE(from_file.out.rfind("BLEU = 100.00", 0) == 0);

  spit(dir / "other.txt", "five six seven eight\n");
  auto overridden = run_cli({"bleu", "--config", (dir / "cfg.ini").string(),
                             "--hyp", (dir / "other.txt").string()});
  REQUIRE(overridden.exit_code == 0);
  REQUIRE(overridden.out.rfind("BLEU = 0.00", 0) == 0);
}

TEST_CASE("failures exit nonzero with a single-line error") {
  auto missing = run_cli({"translate", "--model", "no-such-dir", "--input",
                          "nope.txt", "--src", "en", "--tgt", "de"});
  REQUIRE(missing.exit_code == 1);
  REQUIRE(missing.err.rfind("error: ", 0) == 0);
  REQUIRE(std::count(missing.err.begin(), missing.err.end(), '\n') == 1);

  auto unknown_flag = run_cli({"bleu", "--hyp", "a", "--ref", "b",
                               "--bogus"});
  REQUIRE(unknown_flag.exit_code == 1);
  REQUIRE(unknown_flag.err.rfind("error: ", 0) == 0);

  auto bad_strategy = run_cli({"prep", "--strategy", "nonsense", "--parallel",
                               "en:de:a:b", "--out",
                               (scratch() / "x").string()});
  REQUIRE(bad_strategy.exit_code == 1);
  REQUIRE(bad_strategy.err.find("strategy") != std::string::npos);

  auto no_subcommand = run_cli({});
  REQUIRE(no_subcommand.exit_code == 1);
  REQUIRE(no_subcommand.err.rfind("error: ", 0) == 0);
}

TEST_CASE("help exits zero") {
  auto help = run_cli({"--help"});
  REQUIRE(help.exit_code == 0);
  REQUIRE(help.out.find("translate") != std::string::npos);
  auto sub_help = run_cli({"train", "--help"});
  REQUIRE(sub_help.exit_code == 0);
  REQUIRE(sub_help.out.find("--batch-size") != std::string::npos);
}


