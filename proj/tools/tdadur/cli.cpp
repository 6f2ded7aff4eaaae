#include "tdadur/cli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tdadur/corpus.hpp"
#include "tdadur/error.hpp"
#include "tdadur/evaluation.hpp"
#include "tdadur/log.hpp"
#include "tdadur/model.hpp"
#include "tdadur/nnet/checkpoint.hpp"
#include "tdadur/trainer.hpp"

namespace tdadur::cli {

namespace {

constexpr int kRuntimeError = 1;
constexpr int kUsageError = 2;
constexpr int kPartialFailure = 3;

constexpr const char* kTrainLogSchema = "train_log.v1";
constexpr const char* kEvalSchema = "eval.v1";
constexpr const char* kSweepSchema = "sweep.v1";

std::string real(double v) {
  if (!std::isfinite(v)) return "NA";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string real(const std::optional<double>& v) { return v ? real(*v) : "NA"; }

// Writes to `path`, or to `fallback` when the path is empty.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) {
    if (path.empty()) {
      stream_ = &fallback;
    } else {
      file_.open(path, std::ios::binary | std::ios::trunc);
      if (!file_) throw Error("cannot open '" + path + "' for writing");
      stream_ = &file_;
    }
  }
  std::ostream& operator*() { return *stream_; }

 private:
  std::ofstream file_;
  std::ostream* stream_ = nullptr;
};

struct Globals {
  std::uint64_t seed = 0;
  std::string out;
};

struct GenCorpusArgs {
  std::string spec;
  std::size_t n = 100;
};

struct TrainArgs {
  std::string family;
  std::string corpus;
  std::string preset = "desk";
  std::string resume;
  std::string log;
  std::string mask_family = "span";
  int max_duration = 256;
  TrainConfig config;
};

struct PredictArgs {
  std::string checkpoint;
  std::string input;
  double rate = 1.0;
  long long target_frames = 0;
  int prompt_frames = 100;
  PredictOptions options;
  bool no_final_lr = false;
};

struct EvalArgs {
  std::string reference;
  std::string predicted;
  std::vector<int> silence_ids{0};
};

struct SweepArgs {
  std::vector<std::string> checkpoints;
  std::string input;
  std::vector<double> rates{0.5, 0.75, 1.0, 1.5, 2.0};
  int seeds = 3;
  int prompt_frames = 100;
  std::vector<int> silence_ids{0};
  PredictOptions options;
  bool no_final_lr = false;
};

void add_predict_options(CLI::App& cmd, PredictOptions& o, bool& no_final_lr) {
  cmd.add_option("--nfe", o.nfe, "flow-matching Euler steps")->capture_default_str();
  cmd.add_option("--guidance", o.guidance_strength, "classifier-free guidance strength")->capture_default_str();
  cmd.add_option("--samples", o.num_samples, "flow-matching samples averaged per utterance")->capture_default_str();
  cmd.add_option("--maskgit-steps", o.maskgit_steps, "MaskGIT decoding steps")->capture_default_str();
  cmd.add_option("--sample-temperature", o.sample_temperature, "MaskGIT sampling temperature")->capture_default_str();
  cmd.add_option("--confidence-temperature", o.confidence_temperature, "MaskGIT Gumbel confidence scale")
      ->capture_default_str();
  cmd.add_flag("--no-final-lr", no_final_lr, "regression/tda_e2e only: round instead of the final apportionment");
}

std::set<int> to_set(const std::vector<int>& v) { return {v.begin(), v.end()}; }

int cmd_gen_corpus(const Globals& g, const GenCorpusArgs& a, std::ostream& out) {
  SyntheticSpec spec;
  if (!a.spec.empty()) spec = load_synthetic_spec(a.spec);
  spec.seed = g.seed;
  const auto records = generate_corpus(spec, a.n);
  if (g.out.empty()) {
    for (const auto& r : records) out << format_alignment(r) << '\n';
  } else {
    write_alignments(records, g.out);
  }
  return 0;
}

std::string default_log_path(const std::string& checkpoint) {
  std::filesystem::path p(checkpoint);
  p.replace_extension(".log.csv");
  return p.string();
}

int cmd_train(const Globals& g, TrainArgs a, std::ostream& err) {
  if (g.out.empty()) throw DomainError("train: --out <checkpoint> is required");
  const auto corpus = read_alignments(a.corpus);
  if (corpus.empty()) throw DegenerateInputError("train: corpus '" + a.corpus + "' is empty");

  nn::ModelCheckpoint ck;
  if (!a.resume.empty()) {
    ck = nn::load_checkpoint(a.resume);
    if (!a.family.empty() && a.family != ck.family) {
      throw DomainError("train: --family " + a.family + " does not match resumed checkpoint " + ck.family);
    }
  } else {
    if (a.family.empty()) throw DomainError("train: --family is required");
    ModelSpec spec;
    parse_family_tag(a.family, spec.family, spec.variant);
    spec.net = nn::TransformerConfig::preset(a.preset);
    spec.max_duration = a.max_duration;
    int max_phone = 0;
    for (const auto& r : corpus) {
      for (int p : r.phones) max_phone = std::max(max_phone, p);
    }
    spec.phone_vocab = max_phone + 1;
    ck = create_checkpoint(spec, g.seed);
  }
  a.config.seed = g.seed;
  if (a.mask_family == "span") {
    a.config.policy.family = MaskFamily::contiguous_span;
  } else if (a.mask_family == "ratio") {
    a.config.policy.family = MaskFamily::random_ratio;
  } else {
    throw DomainError("train: --mask-family must be 'span' or 'ratio'");
  }

  const std::string log_path = a.log.empty() ? default_log_path(g.out) : a.log;
  // A resumed run appends to its log so the step column stays monotone.
  const bool append = !a.resume.empty() && std::filesystem::exists(log_path);
  std::ofstream log(log_path, std::ios::binary | (append ? std::ios::app : std::ios::trunc));
  if (!log) throw Error("cannot open '" + log_path + "' for writing");
  if (!append) log << "schema,step,loss\n";
  train(ck, corpus, a.config, [&](const TrainLogRow& row) {
    log << kTrainLogSchema << ',' << row.step << ',' << real(row.loss) << '\n';
    log.flush();
  });
  nn::save_checkpoint(ck, g.out);
  err << "trained " << ck.family << " to step " << ck.meta.steps << ", wrote " << g.out << '\n';
  return 0;
}

std::unique_ptr<DurationPredictor> load_predictor(const std::string& path, PredictOptions options, bool no_final_lr,
                                                  int& phone_vocab, std::string& tag) {
  auto ck = std::make_shared<const nn::ModelCheckpoint>(nn::load_checkpoint(path));
  options.final_lr = !no_final_lr;
  phone_vocab = ck->layout.phone_vocab;
  tag = ck->family;
  return make_predictor(std::move(ck), options);
}

void report_skipped(const std::vector<SkippedRecord>& skipped, std::ostream& err) {
  for (const auto& s : skipped) err << "skipped " << s.id << ": " << s.reason << '\n';
}

int cmd_predict(const Globals& g, const PredictArgs& a, std::ostream& out, std::ostream& err) {
  int vocab = 0;
  std::string tag;
  const auto predictor = load_predictor(a.checkpoint, a.options, a.no_final_lr, vocab, tag);
  PredictRequest req;
  req.rate = a.rate;
  if (a.target_frames > 0) req.target_frames = a.target_frames;
  req.prompt_frames = a.prompt_frames;
  req.seed = g.seed;
  const auto report = predict_corpus(*predictor, read_alignments(a.input), req, vocab);
  if (g.out.empty()) {
    for (const auto& r : report.records) out << format_alignment(r) << '\n';
  } else {
    write_alignments(report.records, g.out);
  }
  report_skipped(report.skipped, err);
  return report.skipped.empty() ? 0 : kPartialFailure;
}

std::string join_excluded(const std::vector<SkippedRecord>& excluded) {
  std::string s;
  for (const auto& e : excluded) {
    if (!s.empty()) s += ';';
    s += e.id;
  }
  return s.empty() ? "" : "\"" + s + "\"";
}

int cmd_eval(const Globals& g, const EvalArgs& a, std::ostream& out, std::ostream& err) {
  const auto report = evaluate_predictions(read_alignments(a.reference), read_alignments(a.predicted),
                                           to_set(a.silence_ids));
  Sink sink(g.out, out);
  std::ostream& csv = *sink;
  csv << "schema,kind,id,masked,target,fdd,total_duration_error,pre_lr_deviation,excluded\n";
  std::size_t masked = 0;
  for (const auto& u : report.utterances) masked += u.masked;
  csv << kEvalSchema << ",summary,ALL," << masked << ",NA," << real(report.fdd) << ','
      << real(report.mean_total_duration_error) << ',' << real(report.mean_pre_lr_deviation) << ','
      << join_excluded(report.excluded) << '\n';
  for (const auto& u : report.utterances) {
    csv << kEvalSchema << ",utterance," << u.id << ',' << u.masked << ',' << u.target << ",NA,"
        << real(u.total_duration_error) << ',' << real(u.pre_lr_deviation) << ",\n";
  }
  for (const auto& e : report.excluded) err << "excluded " << e.id << ": " << e.reason << '\n';
  return report.excluded.empty() ? 0 : kPartialFailure;
}

struct Moments {
  double mean = 0.0;
  double stddev = 0.0;
};

// Population moments; NaN entries poison the result, as they should.
Moments moments(const std::vector<double>& xs) {
  Moments m;
  for (double x : xs) m.mean += x;
  m.mean /= static_cast<double>(xs.size());
  for (double x : xs) m.stddev += (x - m.mean) * (x - m.mean);
  m.stddev = std::sqrt(m.stddev / static_cast<double>(xs.size()));
  return m;
}

int cmd_sweep(const Globals& g, const SweepArgs& a, std::ostream& out, std::ostream& err) {
  if (a.seeds < 1) throw DomainError("sweep: --seeds must be >= 1");
  for (double r : a.rates) {
    if (!(r > 0.0 && r <= 4.0)) throw DomainError("sweep: every rate must lie in (0, 4], got " + real(r));
  }
  const auto references = read_alignments(a.input);
  const auto silence = to_set(a.silence_ids);
  Sink sink(g.out, out);
  std::ostream& csv = *sink;
  csv << "schema,kind,model,checkpoint,rate,seed,fdd,fdd_std,pre_lr_deviation,pre_lr_deviation_std,"
         "total_duration_error,total_duration_error_std,utterances,skipped\n";
  bool partial = false;
  for (const auto& path : a.checkpoints) {
    int vocab = 0;
    std::string tag;
    const auto predictor = load_predictor(path, a.options, a.no_final_lr, vocab, tag);
    const std::string name = std::filesystem::path(path).filename().string();
    for (double rate : a.rates) {
      std::vector<double> f, p, t;
      std::size_t utterances = 0;
      std::size_t skipped = 0;
      for (int s = 0; s < a.seeds; ++s) {
        PredictRequest req;
        req.rate = rate;
        req.prompt_frames = a.prompt_frames;
        req.seed = g.seed + static_cast<std::uint64_t>(s);
        const auto pred = predict_corpus(*predictor, references, req, vocab);
        report_skipped(pred.skipped, err);
        partial = partial || !pred.skipped.empty();
        const auto ev = evaluate_predictions(references, pred.records, silence);
        const double pre = ev.mean_pre_lr_deviation.value_or(std::nan(""));
        f.push_back(ev.fdd);
        p.push_back(pre);
        t.push_back(ev.mean_total_duration_error);
        utterances = ev.utterances.size();
        skipped = pred.skipped.size();
        csv << kSweepSchema << ",run," << tag << ',' << name << ',' << real(rate) << ',' << req.seed << ','
            << real(ev.fdd) << ",NA," << real(pre) << ",NA," << real(ev.mean_total_duration_error) << ",NA,"
            << utterances << ',' << skipped << '\n';
      }
      const Moments mf = moments(f), mp = moments(p), mt = moments(t);
      csv << kSweepSchema << ",summary," << tag << ',' << name << ',' << real(rate) << ",ALL," << real(mf.mean)
          << ',' << real(mf.stddev) << ',' << real(mp.mean) << ',' << real(mp.stddev) << ',' << real(mt.mean) << ','
          << real(mt.stddev) << ',' << utterances << ',' << skipped << '\n';
    }
  }
  return partial ? kPartialFailure : 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Total-duration-aware phoneme duration prediction toolkit", "tdadur"};
  app.set_config("--config", "", "read options from a TOML/INI file (command-line flags take precedence)");
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--seed", g.seed, "random seed")->capture_default_str();
  app.add_option("--out", g.out, "output path (stdout when omitted, where supported)");

  GenCorpusArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-corpus", "write a synthetic alignment corpus");
  gen_cmd->add_option("--spec", gen.spec, "synthetic corpus spec (JSON); built-in defaults when omitted")
      ->check(CLI::ExistingFile);
  gen_cmd->add_option("-n,--num-utterances", gen.n, "number of utterances")->capture_default_str();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train a duration model");
  train_cmd
      ->add_option("--family", tr.family,
                   "regression/{baseline,tda,tda_e2e}, fm/{baseline,tda} or maskgit/{baseline,tda}")
      ->check(CLI::IsMember({"regression/baseline", "regression/tda", "regression/tda_e2e", "fm/baseline", "fm/tda",
                             "maskgit/baseline", "maskgit/tda"}));
  train_cmd->add_option("--corpus", tr.corpus, "training alignments (JSONL)")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--preset", tr.preset, "transformer size: tiny, desk or paper")
      ->capture_default_str()
      ->check(CLI::IsMember({"tiny", "desk", "paper"}));
  train_cmd->add_option("--resume", tr.resume, "continue from a checkpoint")->check(CLI::ExistingFile);
  train_cmd->add_option("--log", tr.log, "training-log CSV (default: <out> with .log.csv)");
  train_cmd->add_option("--steps", tr.config.steps, "total optimizer steps")->capture_default_str();
  train_cmd->add_option("--batch-size", tr.config.batch_size, "utterances per step")->capture_default_str();
  train_cmd->add_option("--lr", tr.config.learning_rate, "Adam learning rate")->capture_default_str();
  train_cmd->add_option("--clip-norm", tr.config.clip_norm, "gradient norm clip, 0 disables")->capture_default_str();
  train_cmd->add_option("--log-every", tr.config.log_every, "log interval in steps")->capture_default_str();
  train_cmd->add_option("--mask-family", tr.mask_family, "span or ratio")->capture_default_str();
  train_cmd->add_option("--mask-all-prob", tr.config.policy.mask_all_probability, "probability of masking everything")
      ->capture_default_str();
  train_cmd->add_option("--max-duration", tr.max_duration, "MaskGIT largest duration token")->capture_default_str();

  PredictArgs pr;
  auto* predict_cmd = app.add_subcommand("predict", "predict masked durations under a total-duration target");
  predict_cmd->add_option("--checkpoint", pr.checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--input", pr.input, "alignments to predict (JSONL)")->required()->check(CLI::ExistingFile);
  auto* rate_opt =
      predict_cmd->add_option("--rate", pr.rate, "ground-truth masked frames / target frames")->capture_default_str();
  predict_cmd->add_option("--target-frames", pr.target_frames, "fixed masked total per utterance")
      ->excludes(rate_opt);
  predict_cmd->add_option("--prompt-frames", pr.prompt_frames, "frames of known prompt context")
      ->capture_default_str();
  add_predict_options(*predict_cmd, pr.options, pr.no_final_lr);

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "score predicted alignments against references");
  eval_cmd->add_option("--reference", ev.reference, "reference alignments")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--predicted", ev.predicted, "predicted alignments")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--silence-ids", ev.silence_ids, "phone ids excluded from FDD")
      ->delimiter(',')
      ->capture_default_str();

  SweepArgs sw;
  auto* sweep_cmd = app.add_subcommand("sweep", "predict and score over speech rates and seeds");
  sweep_cmd->add_option("--checkpoint", sw.checkpoints, "model checkpoints")->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--input", sw.input, "reference alignments")->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--rates", sw.rates, "speech rates")->delimiter(',')->capture_default_str();
  sweep_cmd->add_option("--seeds", sw.seeds, "seeds per rate, starting at --seed")->capture_default_str();
  sweep_cmd->add_option("--prompt-frames", sw.prompt_frames, "frames of known prompt context")->capture_default_str();
  sweep_cmd->add_option("--silence-ids", sw.silence_ids, "phone ids excluded from FDD")
      ->delimiter(',')
      ->capture_default_str();
  add_predict_options(*sweep_cmd, sw.options, sw.no_final_lr);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : kUsageError;
  }

  try {
    if (*gen_cmd) return cmd_gen_corpus(g, gen, out);
    if (*train_cmd) return cmd_train(g, tr, err);
    if (*predict_cmd) return cmd_predict(g, pr, out, err);
    if (*eval_cmd) return cmd_eval(g, ev, out, err);
    if (*sweep_cmd) return cmd_sweep(g, sw, out, err);
  } catch (const DomainError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kUsageError;
}

}  // namespace tdadur::cli
