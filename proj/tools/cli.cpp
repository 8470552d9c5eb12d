#include "cli.hpp"

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "CLI11.hpp"
#include "json.hpp"
#include "wseg/dataset_io.hpp"
#include "wseg/em_driver.hpp"
#include "wseg/grad_check.hpp"
#include "wseg/parallel.hpp"
#include "wseg/tensor_io.hpp"

namespace wseg::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

// Thrown for bad flag combinations found after parsing; maps to exit 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string out = ".";
  std::string data;  // defaults to out
  std::uint64_t seed = 42;
  unsigned threads = 0;

  DatasetConfig dataset;
  EmConfig em;
  std::vector<std::string> top_k_override;  // "label=count"
  std::string combiner = "max";

  // subcommand-specific
  std::string from_checkpoint;
  std::string checkpoint;
  bool oracle = false;
  int trials = 100;
  double tolerance = 1e-4;
  double step = 1e-4;
  std::string report_input;
  std::string report_format = "text";
};

fs::path data_dir(const Options& o) { return o.data.empty() ? fs::path(o.out) : fs::path(o.data); }
fs::path checkpoint_path(const fs::path& out, const std::string& stem) {
  return out / "checkpoints" / (stem + ".wst");
}
fs::path reports_dir(const fs::path& out) { return out / "reports"; }

std::string stage_stem(int stage) { return stage == 0 ? "init" : "iter" + std::to_string(stage); }

void log(std::ostream& err, const std::string& cmd, const std::string& msg) {
  err << "[" << cmd << "] " << msg << '\n';
}

EmConfig resolve_em(const Options& o) {
  EmConfig cfg = o.em;
  cfg.seed = o.seed;
  cfg.threads = resolve_threads(o.threads);
  static const std::map<std::string, Combiner> combiners{
      {"max", Combiner::kMax}, {"product", Combiner::kProduct}, {"mean", Combiner::kMean}};
  const auto it = combiners.find(o.combiner);
  if (it == combiners.end()) throw UsageError("unknown combiner '" + o.combiner + "'");
  cfg.fusion.combiner = it->second;
  cfg.filter.top_k_override.clear();
  for (const auto& spec : o.top_k_override) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) throw UsageError("--top-k-override expects label=count");
    try {
      cfg.filter.top_k_override[std::stoi(spec.substr(0, eq))] = std::stoi(spec.substr(eq + 1));
    } catch (const std::logic_error&) {
      throw UsageError("--top-k-override expects label=count, got '" + spec + "'");
    }
  }
  cfg.check();
  return cfg;
}

ordered_json stage_fragment(const StageCheckpoint& cp, const SyntheticDataset& ds) {
  ordered_json j;
  j["stage"] = cp.stage;
  j["name"] = cp.name;
  j["checkpoint"] = "checkpoints/" + stage_stem(cp.stage) + ".wst";
  auto kept = ordered_json::array();
  for (std::size_t i : cp.complex_kept) kept.push_back(ds.complex[i].id);
  j["complex_kept"] = kept;
  j["report"] = ordered_json::parse(report_json(cp.report));
  return j;
}

CheckpointSink stage_writer(const fs::path& out, const SyntheticDataset& ds, std::ostream& err,
                            const std::string& cmd) {
  return [&out, &ds, &err, cmd](const StageCheckpoint& cp) {
    const std::string stem = stage_stem(cp.stage);
    save_params(checkpoint_path(out, stem), cp.params);
    write_text_file(reports_dir(out) / (stem + ".json"), stage_fragment(cp, ds).dump(2) + "\n");
    const auto& last = cp.report.stages.back();
    std::ostringstream msg;
    msg << cp.name << ": val mIoU " << last.scores.miou << ", final loss "
        << (last.loss_curve.empty() ? 0.0 : last.loss_curve.back());
    log(err, cmd, msg.str());
  };
}

void write_report(const fs::path& out, const std::string& stem, const EmReport& report,
                  const LabelSpace& space, std::ostream& os) {
  const std::string table = report_table(report, space);
  fs::create_directories(reports_dir(out));
  write_text_file(reports_dir(out) / (stem + ".json"), report_json(report));
  write_text_file(reports_dir(out) / (stem + ".txt"), table);
  os << table;
}

ResumeState load_resume(const fs::path& ckpt, const SyntheticDataset& ds) {
  const fs::path fragment = ckpt.parent_path().parent_path() / "reports" /
                            (ckpt.stem().string() + ".json");
  const auto j = nlohmann::json::parse(read_text_file(fragment));
  ResumeState r{j.at("stage").get<int>(), load_params(ckpt),
                report_from_json(j.at("report").dump()), {}};
  if (r.params.num_labels() != ds.space.num_labels()) {
    throw DomainError("checkpoint has " + std::to_string(r.params.num_labels()) +
                      " labels, dataset has " + std::to_string(ds.space.num_labels()));
  }
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < ds.complex.size(); ++i) index[ds.complex[i].id] = i;
  for (const auto& id : j.at("complex_kept")) {
    const auto it = index.find(id.get<std::string>());
    if (it == index.end()) throw FormatError("checkpoint refers to unknown record " + id.dump());
    r.complex_kept.push_back(it->second);
  }
  return r;
}

int cmd_gen_data(const Options& o, std::ostream& out, std::ostream& err) {
  DatasetConfig cfg = o.dataset;
  cfg.seed = o.seed;
  if (cfg.num_classes < 1 || cfg.num_classes > kMaxSyntheticClasses) {
    throw UsageError("--classes must be in 1.." + std::to_string(kMaxSyntheticClasses));
  }
  const SyntheticDataset ds = generate_dataset(cfg);
  save_dataset(o.out, ds, cfg);
  log(err, "gen-data", "wrote " + (fs::path(o.out) / "manifest.jsonl").string());
  out << "simple " << ds.simple.size() << "\ncomplex " << ds.complex.size() << "\nval "
      << ds.val.size() << "\nrecords " << ds.simple.size() + ds.complex.size() + ds.val.size()
      << '\n';
  return kExitOk;
}

int cmd_train(const Options& o, bool em, std::ostream& out, std::ostream& err) {
  const std::string cmd = em ? "run-em" : "train-init";
  const EmConfig cfg = resolve_em(o);
  const SyntheticDataset ds = load_dataset(data_dir(o));
  if (ds.val.empty()) log(err, cmd, "warning: dataset has no val split, mIoU will read 0");
  std::optional<ResumeState> resume;
  if (!o.from_checkpoint.empty()) {
    if (!em) throw UsageError("--from-checkpoint applies to run-em only");
    resume = load_resume(o.from_checkpoint, ds);
    log(err, cmd, "resuming after " + stage_name(resume->completed_stage));
  }
  const fs::path outdir(o.out);
  fs::create_directories(outdir / "checkpoints");
  fs::create_directories(reports_dir(outdir));
  const auto t0 = std::chrono::steady_clock::now();
  const FeatureCache cache(ds, cfg.threads);
  const EmResult result = run_stages(ds, cache, cfg, em ? cfg.iterations : 0,
                                     stage_writer(outdir, ds, err, cmd),
                                     resume ? &*resume : nullptr);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  log(err, cmd, "done in " + std::to_string(secs) + " s");
  write_report(outdir, em ? "em_report" : "init_report", result.report, ds.space, out);
  return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out, std::ostream& err) {
  if (o.oracle == !o.checkpoint.empty()) {
    throw UsageError("eval needs exactly one of --checkpoint or --oracle");
  }
  const SyntheticDataset ds = load_dataset(data_dir(o));
  if (ds.val.empty()) throw UsageError("dataset has no val split to evaluate");
  ConfusionMatrix cm(ds.space.num_labels());
  StageResult stage;
  if (o.oracle) {
    stage.name = "Oracle";
    for (const auto& rec : ds.val) cm.accumulate(rec.gt, rec.gt);
  } else {
    const SegmenterParams params = load_params(o.checkpoint);
    if (params.num_labels() != ds.space.num_labels()) {
      throw DomainError("checkpoint label count does not match dataset");
    }
    stage.name = fs::path(o.checkpoint).stem().string();
    const FeatureCache cache(ds, resolve_threads(o.threads));
    stage.scores = evaluate(params, ds, cache, resolve_threads(o.threads));
  }
  if (o.oracle) stage.scores = iou_scores(cm);
  EmReport report;
  report.stages.push_back(stage);
  log(err, "eval", stage.name + ": val mIoU " + std::to_string(stage.scores.miou));
  write_report(o.out, "eval_report", report, ds.space, out);
  return kExitOk;
}

int cmd_grad_check(const Options& o, std::ostream& out, std::ostream& err) {
  if (o.trials < 1) throw UsageError("--trials must be positive");
  const GradCheckReport r = run_grad_check(o.trials, o.seed, o.step);
  out << "trials " << r.trials << '\n';
  for (const auto& e : r.entries) out << e.loss << " worst_rel_error " << e.worst_error << '\n';
  out << "worst " << r.worst_error << " tolerance " << o.tolerance << '\n';
  if (r.worst_error < o.tolerance) {
    out << "PASS\n";
    return kExitOk;
  }
  for (const auto& e : r.entries) {
    if (e.worst_error >= o.tolerance) {
      err << "FAIL " << e.loss << ": relative error " << e.worst_error << " at trial "
          << e.worst_trial << ", logit index " << e.worst_index << '\n';
    }
  }
  out << "FAIL\n";
  return kExitCheckFailed;
}

LabelSpace load_label_space(const fs::path& dir) {
  const auto j = nlohmann::json::parse(read_text_file(dir / "dataset.json"));
  auto names = j.at("class_names").get<std::vector<std::string>>();
  if (names.size() < 2) throw FormatError("dataset.json: class_names too short");
  names.erase(names.begin());  // background
  return LabelSpace(names, j.at("ignore_label").get<Label>());
}

int cmd_report(const Options& o, std::ostream& out) {
  const fs::path input = o.report_input.empty() ? reports_dir(o.out) / "em_report.json"
                                                : fs::path(o.report_input);
  const EmReport report = report_from_json(read_text_file(input));
  if (o.report_format == "json") {
    out << report_json(report);
  } else {
    out << report_table(report, load_label_space(data_dir(o)));
  }
  return kExitOk;
}

void add_config_options(CLI::App& app, Options& o) {
  app.set_config("--config", "", "key = value file; command-line flags take precedence");
  app.add_option("--out", o.out, "output directory")->capture_default_str();
  app.add_option("--data", o.data, "dataset directory (default: --out)");
  app.add_option("--seed", o.seed, "root seed")->capture_default_str();
  app.add_option("--threads", o.threads, "worker threads, 0 = all cores")
      ->envname("WSEG_THREADS")
      ->capture_default_str();

  EmConfig& em = o.em;
  app.add_option("--iterations", em.iterations, "EM iterations K")->capture_default_str();
  app.add_option("--eta", em.heuristic.eta, "Relative Heuristic threshold")->capture_default_str();
  app.add_option("--iou-weight", em.loss.iou_weight, "lambda")->capture_default_str();
  app.add_option("--combiner", o.combiner, "cue fusion: max|product|mean")->capture_default_str();

  for (auto [prefix, opt] : {std::pair{std::string("init"), &em.init_opt},
                             std::pair{std::string("mstep"), &em.mstep_opt}}) {
    app.add_option("--" + prefix + "-lr", opt->learning_rate)->capture_default_str();
    app.add_option("--" + prefix + "-epochs", opt->epochs)->capture_default_str();
    app.add_option("--" + prefix + "-lr-decay-every", opt->lr_decay_every)->capture_default_str();
    app.add_option("--" + prefix + "-momentum", opt->momentum)->capture_default_str();
    app.add_option("--" + prefix + "-weight-decay", opt->weight_decay)->capture_default_str();
    app.add_option("--" + prefix + "-accumulation", opt->accumulation)->capture_default_str();
    app.add_flag("--" + prefix + "-backtrack,!--" + prefix + "-no-backtrack", opt->backtrack,
                 "undo epochs that raise the loss");
  }

  FilterConfig& f = em.filter;
  app.add_option("--min-side", f.min_side)->capture_default_str();
  app.add_option("--max-side", f.max_side)->capture_default_str();
  app.add_option("--min-attention-prob", f.min_attention_prob)->capture_default_str();
  app.add_option("--saliency-threshold", f.saliency_threshold)->capture_default_str();
  app.add_option("--attention-threshold", f.attention_threshold)->capture_default_str();
  app.add_option("--top-k", f.top_k_per_class, "simple images kept per class")
      ->capture_default_str();
  app.add_option("--top-k-override", o.top_k_override, "per-class cap, label=count");
  app.add_option("--fg-ratio-min", f.fg_ratio_min)->capture_default_str();
  app.add_option("--mstep-top-n", f.m_step_top_n, "simple images per M-step, 0 = |D(P)|")
      ->capture_default_str();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Weakly supervised segmentation by EM on synthetic data", "wseg"};
  app.fallthrough();
  app.require_subcommand(1);
  add_config_options(app, o);

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  gen->add_option("--classes", o.dataset.num_classes)->capture_default_str();
  gen->add_option("--simple", o.dataset.num_simple)->capture_default_str();
  gen->add_option("--complex", o.dataset.num_complex)->capture_default_str();
  o.dataset.num_val = 0;
  gen->add_option("--val", o.dataset.num_val, "held-out images")->capture_default_str();
  gen->add_option("--noise-level", o.dataset.noise_level)->capture_default_str();
  gen->add_option("--height", o.dataset.dims.height)->capture_default_str();
  gen->add_option("--width", o.dataset.dims.width)->capture_default_str();

  auto* init = app.add_subcommand("train-init", "fit the initial model only");
  auto* em = app.add_subcommand("run-em", "initial model plus K EM iterations");
  em->add_option("--from-checkpoint", o.from_checkpoint, "continue after this stage checkpoint");

  auto* ev = app.add_subcommand("eval", "score a checkpoint on the val split");
  ev->add_option("--checkpoint", o.checkpoint);
  ev->add_flag("--oracle", o.oracle, "score the ground truth against itself");

  auto* gc = app.add_subcommand("grad-check", "finite-difference check of loss gradients");
  gc->add_option("--trials", o.trials)->capture_default_str();
  gc->add_option("--tolerance", o.tolerance)->capture_default_str();
  gc->add_option("--step", o.step)->capture_default_str();

  auto* rep = app.add_subcommand("report", "print a saved report");
  rep->add_option("--input", o.report_input, "report JSON (default: <out>/reports/em_report.json)");
  rep->add_option("--format", o.report_format)
      ->check(CLI::IsMember({"text", "json"}))
      ->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(o, out, err);
    if (init->parsed()) return cmd_train(o, false, out, err);
    if (em->parsed()) return cmd_train(o, true, out, err);
    if (ev->parsed()) return cmd_eval(o, out, err);
    if (gc->parsed()) return cmd_grad_check(o, out, err);
    if (rep->parsed()) return cmd_report(o, out);
  } catch (const TrainingError& e) {
    err << "error: numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {  // I/O, format and JSON errors
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, out, err);
}

}  // namespace wseg::cli
