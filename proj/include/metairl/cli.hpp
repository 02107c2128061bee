#pragma once

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "metairl/config.hpp"
#include "metairl/eval.hpp"
#include "metairl/expert.hpp"
#include "metairl/meta.hpp"

namespace metairl::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// ---------------------------------------------------------------------------
// Artifact layout under the output directory
// ---------------------------------------------------------------------------

struct Layout {
  fs::path root;

  fs::path demos(const std::string& style) const { return root / "demos" / (style + ".demos"); }
  fs::path checkpoint(const std::string& name) const { return root / "checkpoints" / (name + ".ckpt"); }
  fs::path metrics(const std::string& name) const { return root / "metrics" / (name + ".csv"); }
  fs::path eval(const std::string& name, const char* ext) const { return root / "eval" / (name + ext); }
  fs::path compare(const std::string& name, const char* ext) const { return root / "compare" / (name + ext); }
};

inline std::string meta_checkpoint_name(int iteration) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "meta_%05d", iteration);
  return buf;
}

inline std::string adapted_checkpoint_name(const std::string& model, int budget) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "_b%03d", budget);
  return model + buf;
}

/// Append-only CSV file; the header is written when the file is new or empty.
class CsvSink {
 public:
  CsvSink(const fs::path& path, const std::string& header) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
    out_.open(path, std::ios::app);
    if (!out_) throw FormatError(FormatError::Kind::Io, "cannot open " + path.string() + " for writing");
    if (fresh) write(header);
  }

  void write(const std::string& line) {
    out_ << line;
    out_.flush();
    if (!out_) throw FormatError(FormatError::Kind::Io, "write failed");
  }

 private:
  std::ofstream out_;
};

/// Drops metrics rows whose meta_iteration is >= `iteration` so a resumed run
/// does not duplicate work recorded after its checkpoint.
inline void truncate_metrics(const fs::path& path, int iteration) {
  if (!fs::exists(path)) return;
  std::ifstream in(path);
  std::string line, kept;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      kept += line + "\n";
      header = false;
      continue;
    }
    const auto a = line.find(',');
    const auto b = line.find(',', a + 1);
    if (a == std::string::npos || b == std::string::npos) continue;
    if (std::stoi(line.substr(a + 1, b - a - 1)) < iteration) kept += line + "\n";
  }
  in.close();
  io::write_text_atomic(path, kept);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct Context {
  RunConfig config;
  Layout layout;
  int workers = 1;
  std::ostream* out = &std::cout;
  std::ostream* err = &std::cerr;
};

struct GenDemosArgs {
  std::string style;
  int count = -1;
  std::optional<std::uint64_t> seed;
  std::string out;
};

inline int cmd_gen_demos(const Context& ctx, const GenDemosArgs& a) {
  const TaskSpec& task = find_style(ctx.config.styles, a.style);
  const int count = a.count >= 0 ? a.count : ctx.config.demos_per_task;
  if (count < 1) throw UsageError("gen-demos: --count must be >= 1");
  std::uint64_t seed = 0;
  if (a.seed) {
    seed = *a.seed;
  } else {
    std::uint64_t index = 0;
    while (ctx.config.styles[index].style != task.style) ++index;
    seed = derive_seed(ctx.config.seed, 10 + index);
  }
  const Simulator sim(ctx.config.env);
  const DemoDataset ds = generate_demos(sim, task, count, seed);
  const fs::path path = a.out.empty() ? ctx.layout.demos(task.style) : fs::path(a.out);
  save_dataset(ds, path);
  *ctx.out << "wrote " << path.string() << ": style=" << task.style << " episodes=" << ds.trajectories.size()
           << " pairs=" << ds.pair_count() << " seed=" << seed << " sha256=" << dataset_hash(ds) << "\n";
  return kExitOk;
}

inline std::vector<MetaTask> load_tasks(const Context& ctx, const std::vector<std::string>& styles,
                                        const fs::path& demos_dir) {
  std::vector<std::string> missing;
  for (const auto& s : styles) {
    find_style(ctx.config.styles, s);
    const fs::path p = demos_dir / (s + ".demos");
    if (!fs::exists(p)) missing.push_back(p.string());
  }
  if (!missing.empty()) {
    std::string msg = "missing demonstration datasets:";
    for (const auto& m : missing) msg += "\n  " + m;
    throw FormatError(FormatError::Kind::Io, msg);
  }
  std::vector<MetaTask> tasks;
  for (const auto& s : styles) {
    DemoDataset ds = load_dataset(demos_dir / (s + ".demos"));
    tasks.push_back({find_style(ctx.config.styles, s), std::move(ds.trajectories)});
  }
  return tasks;
}

struct MetaTrainArgs {
  int iterations = -1;
  std::string tasks;
  std::string resume;
  std::string demos_dir;
  bool no_online = false;
};

inline int cmd_meta_train(const Context& ctx, const MetaTrainArgs& a) {
  const fs::path demos_dir = a.demos_dir.empty() ? ctx.layout.root / "demos" : fs::path(a.demos_dir);
  Checkpoint state;
  std::vector<std::string> styles = a.tasks.empty() ? ctx.config.train_styles : split_list(a.tasks);
  if (!a.resume.empty()) {
    state = load_checkpoint(a.resume);
    if (state.kind != "meta") throw UsageError("meta-train: --resume needs a meta checkpoint, got '" + state.kind + "'");
    if (a.tasks.empty() && !state.tasks.empty()) styles = state.tasks;
    if (a.iterations >= 0) state.config.meta_iterations = a.iterations;
  } else {
    MetaConfig mc = ctx.config.meta;
    if (a.iterations >= 0) mc.meta_iterations = a.iterations;
    try {
      mc.validate();
    } catch (const ContractViolation& e) {
      throw UsageError(e.what());
    }
    state = initial_checkpoint(mc, styles);
  }
  if (styles.empty()) throw UsageError("meta-train: no training tasks");
  state.tasks = styles;
  const std::vector<MetaTask> tasks = load_tasks(ctx, styles, demos_dir);

  std::optional<MetaTask> held_out;
  const fs::path held_path = demos_dir / (ctx.config.test_style + ".demos");
  if (!a.no_online && state.config.online_test_every > 0) {
    if (fs::exists(held_path)) {
      DemoDataset ds = load_dataset(held_path);
      const auto n = std::min<std::size_t>(ds.trajectories.size(), static_cast<std::size_t>(ctx.config.eval.online_demos));
      ds.trajectories.resize(n);
      held_out = MetaTask{find_style(ctx.config.styles, ctx.config.test_style), std::move(ds.trajectories)};
    } else {
      *ctx.out << "online test disabled: " << held_path.string() << " not found\n";
    }
  }

  const fs::path csv_path = ctx.layout.metrics("meta_train");
  if (!a.resume.empty()) {
    truncate_metrics(csv_path, state.iteration);
  } else if (fs::exists(csv_path)) {
    fs::remove(csv_path);
  }
  CsvSink csv(csv_path, metrics_csv_header());
  MetaHooks hooks;
  hooks.on_record = [&](const MetricsRecord& r) { csv.write(metrics_csv_row(r)); };
  hooks.on_log = [&](const std::string& s) { *ctx.err << s << "\n"; };
  hooks.on_checkpoint = [&](const Checkpoint& c, bool final) {
    const fs::path p = ctx.layout.checkpoint(final ? std::string("meta_final") : meta_checkpoint_name(c.iteration));
    save_checkpoint(c, p);
    *ctx.out << "checkpoint " << p.string() << " iteration=" << c.iteration << "\n";
  };
  const int start = state.iteration;
  if (start >= state.config.meta_iterations) {
    *ctx.out << "nothing to do: checkpoint already at iteration " << start << "\n";
    return kExitOk;
  }
  const Simulator sim(ctx.config.env);
  const Checkpoint final = meta_train(sim, tasks, state, held_out ? &*held_out : nullptr, ctx.workers, hooks);
  *ctx.out << "meta-train finished: iterations " << start << ".." << final.iteration
           << " sha256=" << checkpoint_hash(final) << "\n";
  return kExitOk;
}

struct PretrainArgs {
  int iterations = -1;
  std::string tasks;
  std::string demos_dir;
};

inline int cmd_pretrain(const Context& ctx, const PretrainArgs& a) {
  const fs::path demos_dir = a.demos_dir.empty() ? ctx.layout.root / "demos" : fs::path(a.demos_dir);
  const std::vector<std::string> styles = a.tasks.empty() ? ctx.config.train_styles : split_list(a.tasks);
  const MetaConfig& mc = ctx.config.meta;
  const int iterations =
      a.iterations >= 0 ? a.iterations : mc.meta_iterations * mc.tasks_per_iteration * mc.inner_iterations;
  if (iterations < 1) throw UsageError("pretrain: --iterations must be >= 1");
  const std::vector<MetaTask> tasks = load_tasks(ctx, styles, demos_dir);
  const fs::path csv_path = ctx.layout.metrics("pretrain");
  if (fs::exists(csv_path)) fs::remove(csv_path);
  CsvSink csv(csv_path, metrics_csv_header());
  const Simulator sim(ctx.config.env);
  Checkpoint c;
  c.kind = "pretrain";
  c.config = mc;
  c.tasks = styles;
  const ModelParams start = ModelParams::initialized(mc.network, derive_seed(mc.seed, 4));
  InnerResult res = pooled_train(sim, tasks, start, iterations, mc.airl, derive_seed(mc.seed, 5),
                                 [&](const MetricsRecord& r) { csv.write(metrics_csv_row(r)); });
  c.params = std::move(res.params);
  c.iteration = iterations;
  const fs::path p = ctx.layout.checkpoint("pretrain");
  save_checkpoint(c, p);
  *ctx.out << "wrote " << p.string() << ": iterations=" << iterations << " sha256=" << checkpoint_hash(c) << "\n";
  return kExitOk;
}

struct AdaptArgs {
  std::string checkpoint;
  std::string demos;
  std::string name;
  std::string out;
  std::string budgets;
  int iterations = -1;
  bool from_scratch = false;
  bool no_eval = false;
};

inline std::string default_model_name(const std::string& kind) {
  if (kind == "meta") return "meta_airl";
  if (kind == "pretrain") return "pretrain";
  return kind;
}

inline int cmd_adapt(const Context& ctx, const AdaptArgs& a) {
  if (a.from_scratch == !a.checkpoint.empty()) {
    throw UsageError("adapt: give exactly one of --checkpoint and --from-scratch");
  }
  const fs::path demos_path = a.demos.empty() ? ctx.layout.demos(ctx.config.test_style) : fs::path(a.demos);
  const DemoDataset ds = load_dataset(demos_path);
  std::optional<Checkpoint> base;
  MetaConfig mc = ctx.config.meta;
  if (!a.from_scratch) {
    base = load_checkpoint(a.checkpoint);
    mc = base->config;
  }
  const int iterations = a.iterations >= 0 ? a.iterations : mc.adapt_iterations;
  const std::string model = !a.name.empty() ? a.name : a.from_scratch ? "scratch" : default_model_name(base->kind);

  std::vector<int> budgets;
  if (a.budgets == "all") {
    budgets = ctx.config.eval.demo_budgets;
  } else if (!a.budgets.empty()) {
    for (const auto& b : split_list(a.budgets)) {
      try {
        budgets.push_back(std::stoi(b));
      } catch (const std::exception&) {
        throw UsageError("adapt: bad budget '" + b + "'");
      }
    }
  } else {
    budgets.push_back(static_cast<int>(ds.trajectories.size()));
  }
  for (int b : budgets) {
    if (b < 1 || b > static_cast<int>(ds.trajectories.size())) {
      throw UsageError("adapt: budget " + std::to_string(b) + " outside [1, " +
                       std::to_string(ds.trajectories.size()) + "]");
    }
  }
  if (!a.out.empty() && budgets.size() != 1) throw UsageError("adapt: --out needs a single budget");

  const Simulator sim(ctx.config.env);
  CsvSink records(ctx.layout.metrics("adapt_" + model), "model,budget," + metrics_csv_header());
  std::optional<CsvSink> summary;
  if (!a.no_eval) {
    summary.emplace(ctx.layout.metrics("adaptation"), "model,budget," + metrics_csv_header());
  }
  for (int b : budgets) {
    const std::vector<Trajectory> demos(ds.trajectories.begin(), ds.trajectories.begin() + b);
    const std::uint64_t seed = derive_seed(derive_seed(ctx.config.seed, 20), static_cast<std::uint64_t>(b));
    InnerResult res = a.from_scratch ? scratch_train(sim, ds.task, demos, iterations, mc, seed)
                                     : adapt(sim, base->params, ds.task, demos, iterations, mc.airl, seed);
    for (const auto& r : res.records) records.write(model + "," + std::to_string(b) + "," + metrics_csv_row(r));
    Checkpoint c;
    c.kind = a.from_scratch ? "scratch" : "adapted";
    c.params = std::move(res.params);
    c.config = mc;
    c.iteration = iterations;
    c.tasks = {ds.task.style};
    c.demo_count = b;
    const fs::path p = !a.out.empty() ? fs::path(a.out) : ctx.layout.checkpoint(adapted_checkpoint_name(model, b));
    save_checkpoint(c, p);
    *ctx.out << "wrote " << p.string() << ": budget=" << b << " iterations=" << iterations;
    if (summary) {
      const EvalResult e = evaluate(sim, c.params.policy, ds.task, ctx.config.eval.episodes,
                                    derive_seed(ctx.config.seed, 30), ctx.config.eval.greedy, &c.params.disc,
                                    ctx.workers);
      summary->write(model + "," + std::to_string(b) + "," + metrics_csv_row(e.record));
      char buf[96];
      std::snprintf(buf, sizeof buf, " success=%.3f total_reward=%.2f", e.record.success_ratio, e.record.total_reward);
      *ctx.out << buf;
    }
    *ctx.out << "\n";
  }
  return kExitOk;
}

struct EvaluateArgs {
  std::string checkpoint;
  bool oracle = false;
  std::string style;
  int episodes = -1;
  bool greedy = false;
  std::string name;
};

inline int cmd_evaluate(const Context& ctx, const EvaluateArgs& a) {
  if (a.oracle == !a.checkpoint.empty()) throw UsageError("evaluate: give exactly one of --checkpoint and --oracle");
  const TaskSpec& task = find_style(ctx.config.styles, a.style.empty() ? ctx.config.test_style : a.style);
  const int episodes = a.episodes >= 0 ? a.episodes : ctx.config.eval.episodes;
  if (episodes < 1) throw UsageError("evaluate: --episodes must be >= 1");
  const Simulator sim(ctx.config.env);
  const std::uint64_t seed = derive_seed(ctx.config.seed, 30);
  EvalResult r;
  std::string name = a.name;
  if (a.oracle) {
    r = evaluate_oracle(sim, task, episodes, seed, ctx.workers);
    if (name.empty()) name = "oracle_" + task.style;
  } else {
    const Checkpoint c = load_checkpoint(a.checkpoint);
    r = evaluate(sim, c.params.policy, task, episodes, seed, a.greedy || ctx.config.eval.greedy, &c.params.disc,
                 ctx.workers);
    if (name.empty()) name = fs::path(a.checkpoint).stem().string() + "_" + task.style;
  }
  io::write_text_atomic(ctx.layout.eval(name, ".csv"), metrics_csv_header() + metrics_csv_row(r.record));
  nlohmann::json j = {{"name", name}, {"metrics", metrics_to_json(r.record)}};
  const auto hist = kinematic_histograms(r.extremes);
  j["histograms"] = nlohmann::json::object();
  for (const auto& h : hist) j["histograms"][h.metric] = histogram_to_json(h);
  io::write_text_atomic(ctx.layout.eval(name, ".json"), j.dump(2) + "\n");
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "%s on %s: episodes=%d success=%.3f crash=%.3f timeout=%.3f steps=%.1f max_accel=%.3f "
                "min_accel=%.3f max_speed=%.3f min_speed=%.3f\n",
                name.c_str(), task.style.c_str(), r.record.episodes, r.record.success_ratio, r.record.crash_ratio,
                r.record.timeout_ratio, r.record.rollout_steps, r.record.max_accel, r.record.min_accel,
                r.record.max_speed, r.record.min_speed);
  *ctx.out << buf;
  return kExitOk;
}

struct CompareArgs {
  std::vector<std::string> models;  // name=path
  std::string expert;
  std::string style;
  int episodes = -1;
  bool greedy = false;
  std::string name = "compare";
};

inline int cmd_compare(const Context& ctx, const CompareArgs& a) {
  if (a.models.empty()) throw UsageError("compare: at least one --model name=path is required");
  const DemoDataset expert = load_dataset(a.expert.empty() ? ctx.layout.demos(ctx.config.test_style) : fs::path(a.expert));
  const TaskSpec task = a.style.empty() ? expert.task : find_style(ctx.config.styles, a.style);
  const int episodes = a.episodes >= 0 ? a.episodes : ctx.config.eval.episodes;
  if (episodes < 1) throw UsageError("compare: --episodes must be >= 1");
  std::vector<NamedModel> models;
  for (const auto& spec : a.models) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size()) {
      throw UsageError("compare: --model expects name=path, got '" + spec + "'");
    }
    models.push_back({spec.substr(0, eq), load_checkpoint(spec.substr(eq + 1)).params});
  }
  const Simulator sim(ctx.config.env);
  const Comparison c = compare_models(sim, models, expert.trajectories, task, episodes, derive_seed(ctx.config.seed, 30),
                                      a.greedy || ctx.config.eval.greedy, ctx.workers);
  io::write_text_atomic(ctx.layout.compare(a.name, ".csv"), comparison_csv(c));
  io::write_text_atomic(ctx.layout.compare(a.name, ".json"), comparison_to_json(c).dump(2) + "\n");
  *ctx.out << "l1 deviation from " << task.style << " expert (" << expert.trajectories.size() << " demos)\n";
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-16s %9s %9s %9s %9s %8s %12s\n", "model", "max_accel", "max_speed", "min_accel",
                "min_speed", "success", "total_reward");
  *ctx.out << buf;
  for (const auto& m : c.models) {
    std::snprintf(buf, sizeof buf, "%-16s %9.3f %9.3f %9.3f %9.3f %8.3f %12.2f\n", m.name.c_str(), m.l1[0], m.l1[1],
                  m.l1[2], m.l1[3], m.record.success_ratio, m.record.total_reward);
    *ctx.out << buf;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Meta-AIRL workbench: demonstrations, meta-training, adaptation and evaluation", "metairl"};
  app.require_subcommand(1);
  std::string config_path, output_dir;
  std::optional<std::uint64_t> seed;
  int workers = 1;
  app.add_option("-c,--config", config_path, "JSON config file (defaults are used for missing keys)");
  app.add_option("-o,--output-dir", output_dir, "Artifact directory (default: config value, METAIRL_OUTPUT_DIR or runs)");
  app.add_option("--seed", seed, "Master seed (overrides the config seeds)");
  app.add_option("-j,--workers", workers, "Parallel workers for task runs and evaluation")->check(CLI::PositiveNumber);

  GenDemosArgs gen;
  auto* c_gen = app.add_subcommand("gen-demos", "Roll out the oracle expert and save a demonstration dataset");
  c_gen->add_option("--style", gen.style, "Driving style")->required();
  c_gen->add_option("--count", gen.count, "Successful episodes to keep (default: demos_per_task)");
  c_gen->add_option("--seed", gen.seed, "Dataset seed (default: derived from the master seed and the style)");
  c_gen->add_option("--out", gen.out, "Output file (default: <output-dir>/demos/<style>.demos)");

  MetaTrainArgs mt;
  auto* c_mt = app.add_subcommand("meta-train", "Run REPTILE meta-training over the training styles");
  c_mt->add_option("--iterations", mt.iterations, "Meta iterations M (overrides the config)");
  c_mt->add_option("--tasks", mt.tasks, "Comma-separated training styles (default: train_styles)");
  c_mt->add_option("--resume", mt.resume, "Continue from a meta checkpoint");
  c_mt->add_option("--demos-dir", mt.demos_dir, "Directory holding <style>.demos files");
  c_mt->add_flag("--no-online", mt.no_online, "Skip the online test on the held-out style");

  PretrainArgs pt;
  auto* c_pt = app.add_subcommand("pretrain", "Train the pooled-demonstration baseline");
  c_pt->add_option("--iterations", pt.iterations, "AIRL iterations (default: M * N * K)");
  c_pt->add_option("--tasks", pt.tasks, "Comma-separated training styles (default: train_styles)");
  c_pt->add_option("--demos-dir", pt.demos_dir, "Directory holding <style>.demos files");

  AdaptArgs ad;
  auto* c_ad = app.add_subcommand("adapt", "Adapt a checkpoint (or train from scratch) on target demonstrations");
  c_ad->add_option("--checkpoint", ad.checkpoint, "Starting checkpoint");
  c_ad->add_flag("--from-scratch", ad.from_scratch, "Start from freshly initialized networks");
  c_ad->add_option("--demos", ad.demos, "Target demonstrations (default: <output-dir>/demos/<test_style>.demos)");
  c_ad->add_option("--iterations", ad.iterations, "Adaptation iterations (default: meta.adapt_iterations)");
  c_ad->add_option("--budgets", ad.budgets, "Comma-separated demo budgets, or 'all' for eval.demo_budgets");
  c_ad->add_option("--name", ad.name, "Model name used in file names and reports");
  c_ad->add_option("--out", ad.out, "Output checkpoint (single budget only)");
  c_ad->add_flag("--no-eval", ad.no_eval, "Skip the evaluation of each adapted model");

  EvaluateArgs ev;
  auto* c_ev = app.add_subcommand("evaluate", "Roll out a policy and report the metric battery");
  c_ev->add_option("--checkpoint", ev.checkpoint, "Checkpoint to evaluate");
  c_ev->add_flag("--oracle", ev.oracle, "Evaluate the oracle expert instead");
  c_ev->add_option("--style", ev.style, "Task style (default: test_style)");
  c_ev->add_option("--episodes", ev.episodes, "Episodes (default: eval.episodes)");
  c_ev->add_flag("--greedy", ev.greedy, "Take the most likely action instead of sampling");
  c_ev->add_option("--name", ev.name, "Report name");

  CompareArgs cmp;
  auto* c_cmp = app.add_subcommand("compare", "Compare models against expert kinematics (l1 histogram deviation)");
  c_cmp->add_option("--model", cmp.models, "name=checkpoint (repeatable)")->required();
  c_cmp->add_option("--expert", cmp.expert, "Expert reference dataset (default: <output-dir>/demos/<test_style>.demos)");
  c_cmp->add_option("--style", cmp.style, "Task style (default: the expert dataset's style)");
  c_cmp->add_option("--episodes", cmp.episodes, "Episodes per model (default: eval.episodes)");
  c_cmp->add_flag("--greedy", cmp.greedy, "Take the most likely action instead of sampling");
  c_cmp->add_option("--name", cmp.name, "Report name");

  auto* c_show = app.add_subcommand("show-config", "Print the effective configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    Context ctx;
    ctx.out = &out;
    ctx.err = &err;
    ctx.workers = workers;
    ctx.config = config_path.empty() ? RunConfig{} : load_config(config_path);
    if (!output_dir.empty()) ctx.config.output_dir = output_dir;
    if (seed) {
      ctx.config.seed = *seed;
      ctx.config.meta.seed = *seed;
    }
    try {
      ctx.config.validate();
    } catch (const ContractViolation& e) {
      throw UsageError(e.what());
    }
    ctx.layout.root = ctx.config.output_dir;

    if (c_gen->parsed()) return cmd_gen_demos(ctx, gen);
    if (c_mt->parsed()) return cmd_meta_train(ctx, mt);
    if (c_pt->parsed()) return cmd_pretrain(ctx, pt);
    if (c_ad->parsed()) return cmd_adapt(ctx, ad);
    if (c_ev->parsed()) return cmd_evaluate(ctx, ev);
    if (c_cmp->parsed()) return cmd_compare(ctx, cmp);
    if (c_show->parsed()) {
      out << render_config(ctx.config);
      return kExitOk;
    }
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace metairl::cli
