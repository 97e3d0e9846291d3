#include "handtraj/cli/commands.hpp"

#include <CLI11.hpp>
#include <omp.h>

#include <chrono>
#include <cstdio>
#include <iostream>

#include "handtraj/cli/config.hpp"
#include "handtraj/common/hash.hpp"
#include "handtraj/common/json_io.hpp"
#include "handtraj/datasetgen/annotate.hpp"
#include "handtraj/eval/plot.hpp"
#include "handtraj/gt/clip.hpp"

namespace handtraj::cli {

namespace fs = std::filesystem;

namespace {

struct Common {
  std::optional<fs::path> config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  fs::path out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", c.sets, "Override a config key, e.g. train.steps=100");
  cmd->add_option("--seed", c.seed, "Global seed");
  cmd->add_option("--workers", c.workers, "Worker threads");
  cmd->add_option("--out", c.out, "Output directory")->required();
}

RunConfig resolve(const Common& c) {
  auto sets = c.sets;
  if (c.seed) sets.push_back("seed=" + std::to_string(*c.seed));
  if (c.workers) sets.push_back("workers=" + std::to_string(*c.workers));
  RunConfig cfg = resolve_config(c.config, sets);
  cfg.chat.apply_env();
  omp_set_num_threads(cfg.workers);
  return cfg;
}

class Context {
 public:
  Context(std::string command, const Common& common, std::ostream& err)
      : command_(std::move(command)), cfg_(resolve(common)), hash_(cfg_.hash()), out_(common.out), err_(err) {
    fs::create_directories(out_);
  }
  const RunConfig& cfg() const { return cfg_; }
  const std::string& hash() const { return hash_; }
  fs::path path(const std::string& name) const { return out_ / name; }
  std::ostream& log() { return err_ << command_ << ": "; }
  void input(const std::string& name, const fs::path& p) { inputs_[name] = sha256_hex(read_text(p)); }

  void write_records(const std::string& name, std::vector<Json> records) const {
    for (auto& r : records) r["config_hash"] = hash_;
    write_jsonl(path(name), records);
  }
  void write_manifest(const std::vector<std::string>& outputs) const {
    const Json j = {{"command", command_},
                    {"config_hash", hash_},
                    {"config", cfg_.to_json()},
                    {"inputs", inputs_},
                    {"outputs", outputs}};
    write_text(path("config.json"), j.dump(2) + "\n");
  }

 private:
  std::string command_;
  RunConfig cfg_;
  std::string hash_;
  fs::path out_;
  std::ostream& err_;
  Json inputs_ = Json::object();
};

std::vector<datasetgen::QASample> load_qa_files(Context& ctx, const std::vector<fs::path>& files) {
  std::vector<datasetgen::QASample> all;
  for (std::size_t i = 0; i < files.size(); ++i) {
    ctx.input("qa" + std::to_string(i), files[i]);
    auto part = datasetgen::load_qa(files[i]);
    all.insert(all.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return all;
}

std::optional<datasetgen::FrameStore> load_frames(Context& ctx, const std::optional<fs::path>& p) {
  if (!p) return std::nullopt;
  ctx.input("frames", *p);
  return datasetgen::FrameStore::load(*p);
}

// ---- build-gt

struct BuildGtArgs {
  Common common;
  fs::path clips;
};

int cmd_build_gt(const BuildGtArgs& a, std::ostream& err) {
  Context ctx("build-gt", a.common, err);
  ctx.input("clips", a.clips);
  const auto clips = gt::load_clips(a.clips);
  if (clips.empty()) ctx.log() << "warning: no clips in " << a.clips << "\n";
  const auto results = gt::build_gt_dataset(clips, ctx.cfg().criteria, ctx.cfg().ransac, ctx.cfg().parallel());
  std::vector<Json> kept, rejected;
  for (const auto& [id, outcome] : results) {
    if (const auto* s = std::get_if<gt::GtSample>(&outcome)) {
      kept.push_back(gt::gt_sample_to_json(*s));
    } else {
      rejected.push_back(gt::rejection_to_json(id, std::get<gt::Rejection>(outcome)));
    }
  }
  ctx.write_records("gt.jsonl", kept);
  ctx.write_records("rejections.jsonl", rejected);
  ctx.write_manifest({"gt.jsonl", "rejections.jsonl"});
  ctx.log() << kept.size() << " kept, " << rejected.size() << " rejected\n";
  return kOk;
}

// ---- make-dataset

struct MakeDatasetArgs {
  Common common;
  std::string task;
  std::optional<fs::path> gt;
  std::optional<fs::path> stub;
};

std::vector<Json> qa_json(const std::vector<datasetgen::QASample>& qa) {
  std::vector<Json> out;
  out.reserve(qa.size());
  for (const auto& s : qa) out.push_back(datasetgen::qa_to_json(s));
  return out;
}

int cmd_make_dataset(const MakeDatasetArgs& a, std::ostream& err) {
  Context ctx("make-dataset", a.common, err);
  const RunConfig& cfg = ctx.cfg();
  if (a.task == "synth") {
    const auto world = datasetgen::synth_world(cfg.seed, cfg.synth_clips, cfg.synth);
    gt::save_clips(ctx.path("clips"), world.clip_records());
    std::vector<Json> gts;
    for (const auto& g : world.gt_samples()) gts.push_back(gt::gt_sample_to_json(g));
    ctx.write_records("gt.jsonl", gts);
    world.frames.save(ctx.path("frames.bin"));
    ctx.write_records("qa_explicit.jsonl", qa_json(world.explicit_qa));
    ctx.write_records("qa_implicit.jsonl", qa_json(world.implicit_qa));
    std::vector<Json> fx;
    for (const auto& f : world.fixtures) fx.push_back(f.to_json());
    write_jsonl(ctx.path("fixtures.jsonl"), fx);
    ctx.write_manifest({"clips", "gt.jsonl", "frames.bin", "qa_explicit.jsonl", "qa_implicit.jsonl", "fixtures.jsonl"});
    ctx.log() << world.clips.size() << " synthetic clips\n";
    return kOk;
  }
  if (a.task != "vhp" && a.task != "rbhp") throw ConfigError("--task must be vhp, rbhp or synth");
  if (!a.gt) throw ConfigError("--gt is required for task " + a.task);
  ctx.input("gt", *a.gt);
  const auto gts = gt::load_gt(*a.gt);
  if (gts.empty()) ctx.log() << "warning: no GT records in " << *a.gt << "\n";
  if (a.task == "vhp") {
    ctx.write_records("qa.jsonl", qa_json(datasetgen::gen_vhp(gts, cfg.seed)));
    ctx.write_manifest({"qa.jsonl"});
    ctx.log() << gts.size() << " VHP samples\n";
    return kOk;
  }
  datasetgen::ChatClientConfig chat = cfg.chat;
  if (a.stub) {
    chat.offline_stub = true;
    chat.fixtures = a.stub->string();
  }
  auto client = datasetgen::make_chat_client(chat);
  if (chat.offline_stub) ctx.input("fixtures", chat.fixtures);
  datasetgen::RecordingChatClient recorder(*client);
  const auto result = datasetgen::gen_rbhp(gts, recorder, chat, cfg.seed);
  ctx.write_records("qa.jsonl", qa_json(result.samples));
  std::vector<Json> failures, transcripts;
  for (const auto& f : result.failures) {
    failures.push_back({{"clip_id", f.clip_id}, {"reason", f.reason}, {"transcript", f.transcript}});
  }
  ctx.write_records("failures.jsonl", failures);
  for (const auto& f : recorder.fixtures()) transcripts.push_back(f.to_json());
  write_jsonl(ctx.path("transcripts.jsonl"), transcripts);
  ctx.write_manifest({"qa.jsonl", "failures.jsonl", "transcripts.jsonl"});
  ctx.log() << result.samples.size() << " RBHP samples, " << result.failures.size() << " failures\n";
  return kOk;
}

// ---- train

struct TrainArgs {
  Common common;
  std::vector<fs::path> qa;
  std::optional<fs::path> frames;
  std::optional<fs::path> resume;
  std::size_t save_every = 0;
};

int cmd_train(const TrainArgs& a, std::ostream& err) {
  Context ctx("train", a.common, err);
  const RunConfig& cfg = ctx.cfg();
  const auto qa = load_qa_files(ctx, a.qa);
  if (qa.empty()) throw DataError("no training samples");
  const auto frames = load_frames(ctx, a.frames);

  std::optional<model::HandModel<float>> model;
  model::TrainState state;
  if (a.resume) {
    ctx.input("resume", *a.resume);
    auto ck = model::load_checkpoint(*a.resume);
    if (!(ck.config.to_json() == cfg.model.to_json())) throw ConfigError("model config differs from the checkpoint");
    state = ck.state;
    model.emplace(model::model_from_checkpoint(ck));
  } else {
    model.emplace(cfg.model, build_vocab(qa), cfg.seed);
  }
  const auto examples = make_examples(qa, frames ? &*frames : nullptr, model->vocab(), cfg.model);
  const Json extra = {{"config_hash", ctx.hash()}};
  std::vector<Json> metrics;
  const auto t0 = std::chrono::steady_clock::now();
  model::train(*model, examples, cfg.train, state, [&](const model::StepLog& log) {
    metrics.push_back(log.to_json());
    if (a.save_every > 0 && log.step % a.save_every == 0 && log.step < cfg.train.steps) {
      model::TrainState snap{log.step, state.adam};
      model::save_checkpoint(ctx.path("step_" + std::to_string(log.step) + ".ckpt"), *model, cfg.train, snap, extra);
    }
    return true;
  });
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  model::save_checkpoint(ctx.path("model.ckpt"), *model, cfg.train, state, extra);
  ctx.write_records("metrics.jsonl", metrics);
  ctx.write_manifest({"model.ckpt", "metrics.jsonl"});
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%zu steps in %.1f s, final loss %.5f\n", metrics.size(), seconds,
                metrics.empty() ? 0.0 : metrics.back()["loss"].get<double>());
  ctx.log() << buf;
  return kOk;
}

// ---- predict

struct PredictArgs {
  Common common;
  fs::path checkpoint;
  std::vector<fs::path> qa;
  std::optional<fs::path> frames;
};

int cmd_predict(const PredictArgs& a, std::ostream& err) {
  Context ctx("predict", a.common, err);
  ctx.input("checkpoint", a.checkpoint);
  const auto ck = model::load_checkpoint(a.checkpoint);
  const auto model = model::model_from_checkpoint(ck);
  const auto qa = load_qa_files(ctx, a.qa);
  const auto frames = load_frames(ctx, a.frames);
  const auto preds = predict(model, qa, frames ? &*frames : nullptr, ctx.cfg().sampling, ctx.cfg().parallel());
  std::vector<Json> out;
  std::size_t malformed = 0;
  for (const auto& p : preds) {
    auto rec = p.record;
    rec.config_hash = ctx.hash();
    Json j = eval::prediction_to_json(rec);
    j["texts"] = p.texts;
    j["malformed"] = p.malformed;
    j["overruns"] = p.overruns;
    malformed += p.malformed;
    out.push_back(std::move(j));
  }
  ctx.write_records("predictions.jsonl", out);
  ctx.write_manifest({"predictions.jsonl"});
  ctx.log() << preds.size() << " samples predicted, " << malformed << " malformed generations\n";
  return kOk;
}

// ---- eval, baseline, plot

struct GtSource {
  std::optional<fs::path> gt;
  std::optional<fs::path> qa;
};

void add_gt_source(CLI::App* cmd, GtSource& s) {
  auto* g = cmd->add_option("--gt", s.gt, "GT records");
  auto* q = cmd->add_option("--qa", s.qa, "QA records used as GT");
  g->excludes(q);
}

std::vector<gt::GtSample> load_gt_source(Context& ctx, const GtSource& s) {
  if (s.gt) {
    ctx.input("gt", *s.gt);
    return gt::load_gt(*s.gt);
  }
  if (s.qa) {
    ctx.input("gt", *s.qa);
    return qa_as_gt(datasetgen::load_qa(*s.qa));
  }
  throw ConfigError("one of --gt or --qa is required");
}

std::size_t common_horizon(std::span<const gt::GtSample> gts) {
  if (gts.empty()) return 0;
  const std::size_t n = gts.front().future.horizon();
  for (const auto& g : gts) {
    if (g.future.horizon() != n) throw HorizonMismatch("GT records mix horizons");
  }
  return n;
}

struct EvalArgs {
  Common common;
  GtSource source;
  std::optional<fs::path> predictions;
  std::optional<std::string> baseline;
  std::optional<std::size_t> k;
  std::size_t plots = 0;
  std::optional<fs::path> frames;
};

void write_plots(Context& ctx, std::span<const gt::GtSample> gts, std::span<const eval::PredictionRecord> preds,
                 const std::optional<datasetgen::FrameStore>& frames, std::size_t limit) {
  std::map<std::string, const eval::PredictionRecord*> by_id;
  for (const auto& p : preds) by_id[p.clip_id] = &p;
  for (std::size_t i = 0; i < std::min(limit, gts.size()); ++i) {
    const auto& g = gts[i];
    const Image* bg = nullptr;
    if (frames && frames->contains(g.clip_id)) {
      const auto& f = frames->at(g.clip_id);
      const std::size_t last = g.context_length > 0 ? g.context_length - 1 : 0;
      if (last < f.size()) bg = &f[last];
    }
    std::optional<HandTrajectory> pred;
    if (auto it = by_id.find(g.clip_id); it != by_id.end()) pred = it->second->combined();
    write_ppm(ctx.path("plots") / (g.clip_id + ".ppm"), eval::plot_trajectories(bg, g.future, pred ? &*pred : nullptr));
  }
}

int cmd_eval(const EvalArgs& a, std::ostream& err) {
  Context ctx("eval", a.common, err);
  const RunConfig& cfg = ctx.cfg();
  const auto gts = load_gt_source(ctx, a.source);
  std::vector<eval::PredictionRecord> preds;
  if (a.predictions.has_value() == a.baseline.has_value()) {
    throw ConfigError("exactly one of --predictions or --baseline is required");
  }
  if (a.predictions) {
    ctx.input("predictions", *a.predictions);
    preds = eval::load_predictions(*a.predictions);
  } else {
    preds = eval::baseline_predictions(gts, eval::baseline_from_name(*a.baseline), cfg.eval.kalman);
  }
  if (a.k) {
    if (*a.k == 0) throw ConfigError("--k must be positive");
    for (auto& p : preds) {
      if (p.generations.size() < *a.k) {
        throw DataError(p.clip_id + ": " + std::to_string(p.generations.size()) + " generations, --k " +
                        std::to_string(*a.k));
      }
      p.generations.resize(*a.k);
    }
  }
  eval::EvalOptions opts;
  const std::size_t n = common_horizon(gts);
  if (n > 0) opts.weights = cfg.eval.weights_for(n);
  opts.wde_scheme = cfg.eval.wde;
  opts.seed = cfg.seed;
  opts.config_hash = ctx.hash();
  opts.parallel = cfg.parallel();
  const auto report = eval::evaluate(gts, preds, opts);
  write_text(ctx.path("report.json"), report.to_json().dump(2) + "\n");
  write_text(ctx.path("report.txt"), report.to_text());
  std::vector<std::string> outputs{"report.json", "report.txt"};
  if (a.plots > 0) {
    const auto frames = load_frames(ctx, a.frames);
    write_plots(ctx, gts, preds, frames, a.plots);
    outputs.push_back("plots");
  }
  ctx.write_manifest(outputs);
  ctx.log() << report.to_text();
  return kOk;
}

struct BaselineArgs {
  Common common;
  GtSource source;
  std::string kind = "kf";
};

int cmd_baseline(const BaselineArgs& a, std::ostream& err) {
  Context ctx("baseline", a.common, err);
  const auto gts = load_gt_source(ctx, a.source);
  auto preds = eval::baseline_predictions(gts, eval::baseline_from_name(a.kind), ctx.cfg().eval.kalman);
  std::vector<Json> out;
  for (auto& p : preds) {
    p.config_hash = ctx.hash();
    out.push_back(eval::prediction_to_json(p));
  }
  ctx.write_records("predictions.jsonl", out);
  ctx.write_manifest({"predictions.jsonl"});
  ctx.log() << preds.size() << " " << a.kind << " predictions\n";
  return kOk;
}

struct PlotArgs {
  Common common;
  GtSource source;
  std::optional<fs::path> predictions;
  std::optional<fs::path> frames;
  std::size_t limit = 16;
};

int cmd_plot(const PlotArgs& a, std::ostream& err) {
  Context ctx("plot", a.common, err);
  const auto gts = load_gt_source(ctx, a.source);
  std::vector<eval::PredictionRecord> preds;
  if (a.predictions) {
    ctx.input("predictions", *a.predictions);
    preds = eval::load_predictions(*a.predictions);
  }
  const auto frames = load_frames(ctx, a.frames);
  write_plots(ctx, gts, preds, frames, a.limit);
  ctx.write_manifest({"plots"});
  ctx.log() << std::min(a.limit, gts.size()) << " plots\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hand trajectory forecasting toolkit"};
  app.require_subcommand(1);

  BuildGtArgs build_gt;
  auto* c_gt = app.add_subcommand("build-gt", "Build GT trajectories from clip records");
  add_common(c_gt, build_gt.common);
  c_gt->add_option("--clips", build_gt.clips, "Clip index file")->required();

  MakeDatasetArgs make;
  auto* c_make = app.add_subcommand("make-dataset", "Build a QA dataset (vhp, rbhp) or a synthetic world (synth)");
  add_common(c_make, make.common);
  c_make->add_option("--task", make.task, "vhp | rbhp | synth")->required();
  c_make->add_option("--gt", make.gt, "GT records");
  c_make->add_option("--stub", make.stub, "Replay chat fixtures instead of calling an endpoint");

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Train the model");
  add_common(c_train, train.common);
  c_train->add_option("--qa", train.qa, "QA records (repeatable)")->required();
  c_train->add_option("--frames", train.frames, "Frame store");
  c_train->add_option("--resume", train.resume, "Checkpoint to continue from");
  c_train->add_option("--save-every", train.save_every, "Intermediate checkpoint interval");

  PredictArgs pred;
  auto* c_pred = app.add_subcommand("predict", "Generate answers and trajectories");
  add_common(c_pred, pred.common);
  c_pred->add_option("--checkpoint", pred.checkpoint, "Model checkpoint")->required();
  c_pred->add_option("--qa", pred.qa, "QA records (repeatable)")->required();
  c_pred->add_option("--frames", pred.frames, "Frame store");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Score predictions or a baseline against GT");
  add_common(c_eval, ev.common);
  add_gt_source(c_eval, ev.source);
  c_eval->add_option("--predictions", ev.predictions, "Prediction records");
  c_eval->add_option("--baseline", ev.baseline, "kf | constant_position | constant_velocity");
  c_eval->add_option("--k", ev.k, "Use the first K generations");
  c_eval->add_option("--plots", ev.plots, "Number of overlay plots");
  c_eval->add_option("--frames", ev.frames, "Frame store for plot backgrounds");

  BaselineArgs base;
  auto* c_base = app.add_subcommand("baseline", "Write baseline predictions");
  add_common(c_base, base.common);
  add_gt_source(c_base, base.source);
  c_base->add_option("--kind", base.kind, "kf | constant_position | constant_velocity");

  PlotArgs plot;
  auto* c_plot = app.add_subcommand("plot", "Draw GT and predicted trajectories");
  add_common(c_plot, plot.common);
  add_gt_source(c_plot, plot.source);
  c_plot->add_option("--predictions", plot.predictions, "Prediction records");
  c_plot->add_option("--frames", plot.frames, "Frame store");
  c_plot->add_option("--limit", plot.limit, "Maximum number of plots");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }
  try {
    if (c_gt->parsed()) return cmd_build_gt(build_gt, err);
    if (c_make->parsed()) return cmd_make_dataset(make, err);
    if (c_train->parsed()) return cmd_train(train, err);
    if (c_pred->parsed()) return cmd_predict(pred, err);
    if (c_eval->parsed()) return cmd_eval(ev, err);
    if (c_base->parsed()) return cmd_baseline(base, err);
    if (c_plot->parsed()) return cmd_plot(plot, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace handtraj::cli
