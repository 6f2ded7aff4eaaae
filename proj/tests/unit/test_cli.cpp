#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "doctest.h"
#include "tdadur/cli.hpp"
#include "tdadur/corpus.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "tdadur");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = tdadur::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::size_t count_prefix(const std::vector<std::string>& ls, const std::string& prefix) {
  std::size_t n = 0;
  for (const auto& l : ls) n += l.rfind(prefix, 0) == 0;
  return n;
}

struct WorkDir {
  fs::path path;
  WorkDir() {
    path = fs::temp_directory_path() / ("tdadur_cli_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~WorkDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

void write_file(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

const char* kSmallSpec = R"({"phone_vocab_size": 10, "min_length": 6, "max_length": 14})";

}  // namespace

TEST_CASE("gen-corpus") {
  const Result a = run({"gen-corpus", "-n", "5", "--seed", "3"});
  CHECK(a.code == 0);
  CHECK(lines(a.out).size() == 5);
  CHECK(run({"gen-corpus", "-n", "5", "--seed", "3"}).out == a.out);
  CHECK(run({"gen-corpus", "-n", "5", "--seed", "4"}).out != a.out);
  for (const auto& l : lines(a.out)) CHECK_NOTHROW(tdadur::parse_alignment(l, 1));

  WorkDir dir;
  CHECK(run({"gen-corpus", "-n", "5", "--seed", "3", "--out", dir / "c.jsonl"}).code == 0);
  CHECK(slurp(dir / "c.jsonl") == a.out);
}

TEST_CASE("usage errors") {
  CHECK(run({}).code == 2);
  CHECK(run({"gen-corpus", "--spec", "/nonexistent/spec.json"}).code != 0);
  CHECK(run({"gen-corpus", "-n", "abc"}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({"--help"}).code == 0);

  WorkDir dir;
  write_file(dir / "c.jsonl", run({"gen-corpus", "-n", "4"}).out);
  const Result bad = run({"train", "--family", "gan/tda", "--corpus", dir / "c.jsonl", "--out", dir / "m.ckpt"});
  CHECK(bad.code == 2);
  CHECK(run({"train", "--family", "fm/tda", "--corpus", dir / "c.jsonl"}).code == 2);
  CHECK(run({"train", "--family", "fm/tda", "--corpus", dir / "c.jsonl", "--out", dir / "m.ckpt", "--steps", "-4"})
            .code == 2);
  write_file(dir / "spec.json", R"({"phone_vocab_size": 0})");
  CHECK(run({"gen-corpus", "--spec", dir / "spec.json"}).code == 2);
  write_file(dir / "broken.json", "{");
  CHECK(run({"gen-corpus", "--spec", dir / "broken.json"}).code == 1);
}

TEST_CASE("config files and precedence") {
  WorkDir dir;
  write_file(dir / "run.toml", "seed = 5\n[gen-corpus]\nnum-utterances = 3\n");
  const Result cfg = run({"--config", dir / "run.toml", "gen-corpus"});
  CHECK(cfg.code == 0);
  CHECK(cfg.out == run({"gen-corpus", "-n", "3", "--seed", "5"}).out);
  const Result override = run({"--config", dir / "run.toml", "--seed", "6", "gen-corpus", "-n", "2"});
  CHECK(override.out == run({"gen-corpus", "-n", "2", "--seed", "6"}).out);
}

TEST_CASE("train, predict, eval and sweep") {
  WorkDir dir;
  write_file(dir / "spec.json", kSmallSpec);
  REQUIRE(run({"gen-corpus", "--spec", dir / "spec.json", "-n", "30", "--out", dir / "train.jsonl"}).code == 0);
  REQUIRE(run({"gen-corpus", "--spec", dir / "spec.json", "-n", "6", "--seed", "9", "--out", dir / "test.jsonl"})
              .code == 0);

  const std::vector<std::string> train = {"train", "--family", "regression/tda", "--corpus", dir / "train.jsonl",
                                          "--preset", "tiny", "--batch-size", "4", "--log-every", "2"};
  auto with = [](std::vector<std::string> base, std::vector<std::string> extra) {
    base.insert(base.end(), extra.begin(), extra.end());
    return base;
  };
  const Result t = run(with(train, {"--steps", "4", "--out", dir / "m.ckpt"}));
  REQUIRE(t.code == 0);
  const auto log = lines(slurp(dir / "m.log.csv"));
  REQUIRE(log.size() == 4);
  CHECK(log[0] == "schema,step,loss");
  CHECK(log[1].rfind("train_log.v1,1,", 0) == 0);
  CHECK(log[3].rfind("train_log.v1,4,", 0) == 0);

  // Resuming appends to the log and matches an uninterrupted run.
  REQUIRE(run(with(train, {"--steps", "6", "--resume", dir / "m.ckpt", "--out", dir / "m.ckpt"})).code == 0);
  REQUIRE(run(with(train, {"--steps", "6", "--out", dir / "full.ckpt"})).code == 0);
  CHECK(slurp(dir / "m.ckpt") == slurp(dir / "full.ckpt"));
  CHECK(lines(slurp(dir / "m.log.csv")).back().rfind("train_log.v1,6,", 0) == 0);

  const Result p = run({"predict", "--checkpoint", dir / "m.ckpt", "--input", dir / "test.jsonl", "--rate", "2",
                        "--prompt-frames", "30", "--out", dir / "pred.jsonl"});
  REQUIRE(p.code == 0);
  const auto preds = tdadur::read_alignments(dir / "pred.jsonl");
  CHECK(preds.size() == 6);
  for (const auto& r : preds) {
    CHECK(r.mask.has_value());
    CHECK(r.target.has_value());
    CHECK(r.pre_lr_sum.has_value());
  }
  CHECK(run({"predict", "--checkpoint", dir / "m.ckpt", "--input", dir / "test.jsonl", "--rate", "2",
             "--target-frames", "10"})
            .code == 2);
  CHECK(run({"predict", "--checkpoint", dir / "m.ckpt", "--input", dir / "test.jsonl", "--no-final-lr"}).code == 2);

  const Result e = run({"eval", "--reference", dir / "test.jsonl", "--predicted", dir / "pred.jsonl"});
  REQUIRE(e.code == 0);
  const auto ev = lines(e.out);
  REQUIRE(ev.size() == 8);
  CHECK(ev[0] == "schema,kind,id,masked,target,fdd,total_duration_error,pre_lr_deviation,excluded");
  CHECK(ev[1].rfind("eval.v1,summary,ALL,", 0) == 0);
  CHECK(count_prefix(ev, "eval.v1,utterance,") == 6);

  // A missing prediction is reported and the exit code says so.
  std::ofstream(dir / "short.jsonl") << lines(slurp(dir / "pred.jsonl"))[0] << "\n";
  const Result partial = run({"eval", "--reference", dir / "test.jsonl", "--predicted", dir / "short.jsonl"});
  CHECK(partial.code == 3);
  CHECK(lines(partial.out)[1].find("utt000001") != std::string::npos);

  const Result s = run({"sweep", "--checkpoint", dir / "m.ckpt", "--input", dir / "test.jsonl", "--rates", "1,2",
                        "--seeds", "2", "--prompt-frames", "30", "--out", dir / "sweep.csv"});
  REQUIRE(s.code == 0);
  const auto sw = lines(slurp(dir / "sweep.csv"));
  REQUIRE(sw.size() == 7);
  CHECK(sw[0] == "schema,kind,model,checkpoint,rate,seed,fdd,fdd_std,pre_lr_deviation,pre_lr_deviation_std,"
                 "total_duration_error,total_duration_error_std,utterances,skipped");
  CHECK(count_prefix(sw, "sweep.v1,run,regression/tda,") == 4);
  CHECK(count_prefix(sw, "sweep.v1,summary,regression/tda,") == 2);
  CHECK(run({"sweep", "--checkpoint", dir / "m.ckpt", "--input", dir / "test.jsonl", "--rates", "5"}).code == 2);

  // Same inputs, same bytes.
  REQUIRE(run({"sweep", "--checkpoint", dir / "m.ckpt", "--input", dir / "test.jsonl", "--rates", "1,2",
               "--seeds", "2", "--prompt-frames", "30", "--out", dir / "sweep2.csv"})
              .code == 0);
  CHECK(slurp(dir / "sweep.csv") == slurp(dir / "sweep2.csv"));
}
