#include "driftplan/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <ostream>
#include <sstream>

#include "driftplan/checkpoint.hpp"
#include "driftplan/config.hpp"
#include "driftplan/csv.hpp"
#include "driftplan/errors.hpp"

namespace driftplan {

PairedStats paired_stats(const BatchSummary& drl, const BatchSummary& ilqr) {
  PairedStats p;
  const std::size_t n = std::min(drl.results.size(), ilqr.results.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = drl.results[i];
    const auto& b = ilqr.results[i];
    if (!a.success || !b.success) continue;
    ++p.paired_successes;
    p.drl_mean_time += a.time_cost;
    p.ilqr_mean_time += b.time_cost;
    p.drl_mean_step += a.step_cost;
    p.ilqr_mean_step += b.step_cost;
  }
  if (p.paired_successes > 0) {
    const double k = 1.0 / p.paired_successes;
    p.drl_mean_time *= k;
    p.ilqr_mean_time *= k;
    p.drl_mean_step *= k;
    p.ilqr_mean_step *= k;
    if (p.ilqr_mean_time > 0.0) p.time_saving = 1.0 - p.drl_mean_time / p.ilqr_mean_time;
    if (p.ilqr_mean_step > 0.0) p.step_saving = 1.0 - p.drl_mean_step / p.ilqr_mean_step;
  }
  return p;
}

AreaComparison compare_area(const std::string& area, const EnvSpec& env,
                            std::shared_ptr<const PolicyWeights> weights, ActionSelection selection,
                            const RecedingHorizonConfig& ilqr, int trials, std::uint64_t seed, int workers,
                            CostAveraging averaging) {
  AreaComparison c;
  c.area = area;
  c.drl = run_batch(
      env, [&] { return std::make_unique<PolicyController>(weights, selection); }, trials, seed, workers,
      averaging);
  c.ilqr = run_batch(env, [&] { return std::make_unique<IlqrController>(ilqr); }, trials, seed, workers, averaging);
  c.paired = paired_stats(c.drl, c.ilqr);
  return c;
}

void write_summary_header(std::ostream& out) {
  out << "area,method,trials,successes,success_rate,avg_time_cost,std_time_cost,avg_step_cost,std_step_cost\n";
}

void write_summary_row(std::ostream& out, const std::string& area, Method method, const BatchSummary& s) {
  using csv::format_number;
  out << area << ',' << to_string(method) << ',' << s.trials << ',' << s.successes << ','
      << format_number(s.success_rate) << ',' << format_number(s.mean_time_cost) << ','
      << format_number(s.std_time_cost) << ',' << format_number(s.mean_step_cost) << ','
      << format_number(s.std_step_cost) << '\n';
}

void write_paired_header(std::ostream& out) {
  out << "area,paired_successes,drl_mean_time,ilqr_mean_time,time_saving,drl_mean_step,ilqr_mean_step,"
         "step_saving\n";
}

void write_paired_row(std::ostream& out, const std::string& area, const PairedStats& p) {
  using csv::format_number;
  out << area << ',' << p.paired_successes << ',' << format_number(p.drl_mean_time) << ','
      << format_number(p.ilqr_mean_time) << ',' << format_number(p.time_saving) << ','
      << format_number(p.drl_mean_step) << ',' << format_number(p.ilqr_mean_step) << ','
      << format_number(p.step_saving) << '\n';
}

// ---------------------------------------------------------------------------

namespace {

// Maps flags onto config keys; flags win over the config file and --set.
class Bindings {
 public:
  void bind(CLI::App* app, const std::string& flag, std::vector<std::string> keys, const std::string& help) {
    auto& slot = storage_.emplace_back();
    entries_.push_back({app->add_option(flag, slot, help), std::move(keys), &slot});
  }

  void apply(RunConfig& cfg) const {
    for (const auto& e : entries_)
      if (e.option->count() > 0)
        for (const auto& k : e.keys) cfg.set(k, *e.value);
  }

 private:
  struct Entry {
    CLI::Option* option;
    std::vector<std::string> keys;
    std::string* value;
  };
  std::deque<std::string> storage_;
  std::vector<Entry> entries_;
};

struct Command {
  explicit Command(CLI::App* a) : app(a) {}
  CLI::App* app;
  Bindings flags;
  std::string config_path;
  std::vector<std::string> sets;
};

void add_common(Command& c) {
  c.app->add_option("--config", c.config_path, "flat key=value config file");
  c.app->add_option("--set", c.sets, "override a config key (key=value), repeatable");
  c.flags.bind(c.app, "--seed", {"seed"}, "base seed (falls back to DRIFTPLAN_SEED)");
  c.flags.bind(c.app, "--workers", {"workers"}, "worker threads");
}

void add_field_flags(Command& c, bool with_file) {
  if (with_file) c.flags.bind(c.app, "--field", {"field.file"}, "current CSV to load instead of a pattern");
  c.flags.bind(c.app, "--kind", {"field.kind"}, "vortex | meander | spin | centripetal | uniform");
  c.flags.bind(c.app, "--size", {"field.width", "field.height"}, "square grid size in cells");
  c.flags.bind(c.app, "--width", {"field.width"}, "grid width in cells");
  c.flags.bind(c.app, "--height", {"field.height"}, "grid height in cells");
  c.flags.bind(c.app, "--frames", {"field.frames"}, "number of frames");
  c.flags.bind(c.app, "--frame-dt", {"field.frame_dt"}, "seconds between frames");
  c.flags.bind(c.app, "--strength", {"field.strength"}, "pattern peak strength");
  c.flags.bind(c.app, "--scale", {"field.scale"}, "decay length / wavelength");
  c.flags.bind(c.app, "--amplitude", {"field.amplitude"}, "meander amplitude");
  c.flags.bind(c.app, "--direction", {"field.direction"}, "uniform flow heading (rad)");
  c.flags.bind(c.app, "--noise", {"field.noise"}, "per-cell jitter fraction");
  c.flags.bind(c.app, "--field-seed", {"field.seed"}, "jitter seed");
  c.flags.bind(c.app, "--center", {"field.center"}, "pattern center x,y");
  c.flags.bind(c.app, "--center-to", {"field.center_to"}, "second center x,y of a moving pattern");
  c.flags.bind(c.app, "--center-period", {"field.center_period"}, "center path period (s)");
  c.flags.bind(c.app, "--cell-size", {"field.cell_size"}, "world units per cell");
  c.flags.bind(c.app, "--strength-cap", {"field.strength_cap"}, "flow magnitude clamp");
  c.flags.bind(c.app, "--crop", {"field.crop"}, "x0,y0,w,h crop window");
}

RunConfig resolve(const Command& c) {
  RunConfig cfg;
  if (!c.config_path.empty()) cfg.load_file(c.config_path);
  for (const auto& s : c.sets) cfg.set_line(s);
  c.flags.apply(cfg);
  if (!cfg.explicitly_set("seed"))
    if (const char* env = std::getenv("DRIFTPLAN_SEED"); env && *env) cfg.set("seed", env);
  return cfg;
}

class Output {
 public:
  Output(const std::string& path, std::ostream& fallback) {
    if (path.empty()) {
      stream_ = &fallback;
    } else {
      file_.open(path);
      if (!file_) throw Error("cannot write " + path);
      stream_ = &file_;
    }
  }
  std::ostream& operator*() { return *stream_; }

 private:
  std::ofstream file_;
  std::ostream* stream_;
};

void print_field_summary(std::ostream& out, const DisturbanceField& f) {
  out << "grid " << f.grid_w() << 'x' << f.grid_h() << ", frames " << f.n_frames() << ", span "
      << csv::format_number(f.frames().back().t - f.frames().front().t) << " s, max magnitude "
      << csv::format_number(f.max_magnitude()) << '\n';
}

std::string area_label(const RunConfig& cfg) {
  std::string label = cfg.get("field.file").empty() ? cfg.get("field.kind")
                                                    : std::filesystem::path(cfg.get("field.file")).stem().string();
  if (!cfg.get("field.crop").empty()) {
    std::string crop = cfg.get("field.crop");
    std::replace(crop.begin(), crop.end(), ',', '_');
    label += "@" + crop;
  }
  return label;
}

std::shared_ptr<const PolicyWeights> load_policy(const std::string& path, const DisturbanceField& field) {
  auto w = std::make_shared<const PolicyWeights>(load_checkpoint(std::filesystem::path(path)).weights);
  if (w->config().grid_w != field.grid_w() || w->config().grid_h != field.grid_h())
    throw ConfigError("checkpoint grid " + std::to_string(w->config().grid_w) + "x" +
                      std::to_string(w->config().grid_h) + " does not match field " +
                      std::to_string(field.grid_w()) + "x" + std::to_string(field.grid_h()));
  return w;
}

int cmd_train(const RunConfig& cfg, const std::string& resume, std::ostream& out, std::ostream& err) {
  if (cfg.get("field.file").empty() && !cfg.explicitly_set("field.kind"))
    throw ConfigError("train needs a field: pass --field FILE or --kind PATTERN");
  const auto field = load_field(cfg);
  const EnvSpec env = env_spec(cfg, field);
  const TrainingConfig tc = training_config(cfg);
  const std::filesystem::path ckpt_path = cfg.get("out.checkpoint");
  const std::string curve_path = cfg.get("out.curve");

  TrainingState st = [&] {
    if (resume.empty()) return start_training(policy_config(cfg, field->grid_w(), field->grid_h()), tc);
    Checkpoint ck = load_checkpoint(std::filesystem::path(resume));
    if (!ck.training) throw ConfigError("checkpoint " + resume + " has no training state to resume");
    return std::move(*ck.training);
  }();
  if (st.weights.config().grid_w != field->grid_w() || st.weights.config().grid_h != field->grid_h())
    throw ConfigError("checkpoint grid does not match the training field");

  auto write_outputs = [&](const TrainingState& s) {
    save_checkpoint(ckpt_path, s.weights, &s);
    if (!curve_path.empty()) {
      Output curve(curve_path, out);
      write_curve_csv(*curve, s.curve);
    }
  };
  const long long every = cfg.integer("train.checkpoint_every");
  const int remaining = std::max(0, tc.rounds - st.round);
  train(env, tc, st, remaining, [&](const TrainingState& s) {
    if (every > 0 && s.round % every == 0) {
      write_outputs(s);
      err << "round " << s.round << ": checkpoint " << ckpt_path.string() << '\n';
    }
  });
  write_outputs(st);

  int recent = 0, wins = 0;
  for (auto it = st.curve.rbegin(); it != st.curve.rend() && recent < 100; ++it, ++recent) wins += it->success;
  out << "rounds " << st.round << '\n';
  out << "recent_success_rate " << csv::format_number(recent ? static_cast<double>(wins) / recent : 0.0) << '\n';
  out << "checkpoint " << ckpt_path.string() << '\n';
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& method_name, const std::string& checkpoint,
             const std::string& area_override, std::ostream& out) {
  const Method method = parse_method(method_name);
  const auto field = load_field(cfg);
  const EnvSpec env = env_spec(cfg, field);
  ControllerFactory factory;
  if (method == Method::drl) {
    if (checkpoint.empty()) throw ConfigError("eval --method drl requires --checkpoint");
    auto weights = load_policy(checkpoint, *field);
    const ActionSelection sel = action_selection(cfg);
    factory = [weights, sel] { return std::make_unique<PolicyController>(weights, sel); };
  } else {
    const RecedingHorizonConfig rh = ilqr_controller_config(cfg);
    factory = [rh] { return std::make_unique<IlqrController>(rh); };
  }
  const long long trials = cfg.integer("eval.trials");
  if (trials < 1) throw ConfigError("eval.trials must be >= 1");
  const BatchSummary s = run_batch(env, factory, static_cast<int>(trials), cfg.unsigned_integer("seed"),
                                   static_cast<int>(cfg.integer("workers")), cost_averaging(cfg));
  const std::string area = area_override.empty() ? area_label(cfg) : area_override;
  if (!cfg.get("out.trials").empty()) {
    Output t(cfg.get("out.trials"), out);
    write_trial_csv_header(*t);
    for (std::size_t i = 0; i < s.results.size(); ++i) write_trial_csv_row(*t, static_cast<int>(i), area, s.results[i]);
  }
  Output summary(cfg.get("out.summary"), out);
  write_summary_header(*summary);
  write_summary_row(*summary, area, method, s);
  return 0;
}

int cmd_compare(const RunConfig& base, const std::vector<std::string>& areas, const std::string& checkpoint,
                std::ostream& out) {
  if (checkpoint.empty()) throw ConfigError("compare requires --checkpoint");
  if (areas.empty()) throw ConfigError("compare requires at least one --field");
  const long long trials = base.integer("eval.trials");
  if (trials < 1) throw ConfigError("eval.trials must be >= 1");

  std::vector<AreaComparison> rows;
  std::shared_ptr<const PolicyWeights> weights;
  for (const auto& spec : areas) {
    RunConfig cfg = base;
    const auto at = spec.find('@');
    cfg.set("field.file", spec.substr(0, at));
    if (at != std::string::npos) cfg.set("field.crop", spec.substr(at + 1));
    const auto field = load_field(cfg);
    if (!weights) weights = load_policy(checkpoint, *field);
    if (weights->config().grid_w != field->grid_w() || weights->config().grid_h != field->grid_h())
      throw ConfigError("area " + spec + " does not match the checkpoint grid");
    rows.push_back(compare_area(area_label(cfg), env_spec(cfg, field), weights, action_selection(cfg),
                                ilqr_controller_config(cfg), static_cast<int>(trials), cfg.unsigned_integer("seed"),
                                static_cast<int>(cfg.integer("workers")), cost_averaging(cfg)));
  }

  if (!base.get("out.trials").empty()) {
    Output t(base.get("out.trials"), out);
    write_trial_csv_header(*t);
    for (const auto& r : rows)
      for (std::size_t i = 0; i < r.drl.results.size(); ++i) {
        write_trial_csv_row(*t, static_cast<int>(i), r.area, r.drl.results[i]);
        write_trial_csv_row(*t, static_cast<int>(i), r.area, r.ilqr.results[i]);
      }
  }
  {
    Output summary(base.get("out.summary"), out);
    write_summary_header(*summary);
    for (const auto& r : rows) {
      write_summary_row(*summary, r.area, Method::drl, r.drl);
      write_summary_row(*summary, r.area, Method::ilqr, r.ilqr);
    }
  }
  Output paired(base.get("out.paired"), out);
  write_paired_header(*paired);
  for (const auto& r : rows) write_paired_row(*paired, r.area, r.paired);
  return 0;
}

int cmd_config(const RunConfig& cfg, std::ostream& out) {
  for (const auto& k : RunConfig::schema()) out << "# " << k.help << '\n' << k.name << " = " << cfg.get(k.name) << '\n';
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Motion planning in disturbance fields with iLQR and a learned policy", "driftplan"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "show help for every subcommand");

  Command gen{app.add_subcommand("gen-field", "generate a pattern field and write it as current CSV")};
  add_common(gen);
  add_field_flags(gen, false);
  std::string gen_out;
  gen.app->add_option("--out", gen_out, "output CSV")->required();

  Command ingest{app.add_subcommand("ingest", "validate a current CSV, fill gaps, crop and rewrite it")};
  add_common(ingest);
  std::string ingest_in, ingest_out;
  ingest.app->add_option("--in", ingest_in, "input current CSV")->required();
  ingest.app->add_option("--out", ingest_out, "normalized output CSV")->required();
  ingest.flags.bind(ingest.app, "--cell-size", {"field.cell_size"}, "world units per cell");
  ingest.flags.bind(ingest.app, "--strength-cap", {"field.strength_cap"}, "flow magnitude clamp");
  ingest.flags.bind(ingest.app, "--crop", {"field.crop"}, "x0,y0,w,h crop window");

  Command tr{app.add_subcommand("train", "train the policy; writes a checkpoint and a learning curve")};
  add_common(tr);
  add_field_flags(tr, true);
  std::string resume;
  tr.flags.bind(tr.app, "--rounds", {"train.rounds"}, "total training rounds");
  tr.flags.bind(tr.app, "--lr", {"train.lr"}, "learning rate");
  tr.flags.bind(tr.app, "--batch", {"train.batch"}, "batch size");
  tr.flags.bind(tr.app, "--checkpoint", {"out.checkpoint"}, "checkpoint output path");
  tr.flags.bind(tr.app, "--checkpoint-every", {"train.checkpoint_every"}, "rounds between checkpoints");
  tr.flags.bind(tr.app, "--curve", {"out.curve"}, "learning curve CSV path");
  tr.app->add_option("--resume", resume, "continue from a checkpoint with training state");

  Command ev{app.add_subcommand("eval", "run a batch of trials with one method")};
  add_common(ev);
  add_field_flags(ev, true);
  std::string method, eval_ckpt, area;
  ev.app->add_option("--method", method, "drl | ilqr")->required();
  ev.app->add_option("--checkpoint", eval_ckpt, "policy checkpoint (drl)");
  ev.app->add_option("--area", area, "area label in the output (default: field name)");
  ev.flags.bind(ev.app, "--trials", {"eval.trials"}, "number of trials");
  ev.flags.bind(ev.app, "--selection", {"eval.selection"}, "greedy | sample");
  ev.flags.bind(ev.app, "--averaging", {"eval.averaging"}, "successes | all");
  ev.flags.bind(ev.app, "--out", {"out.trials"}, "per-trial CSV");
  ev.flags.bind(ev.app, "--summary", {"out.summary"}, "summary CSV (default stdout)");

  Command cmp{app.add_subcommand("compare", "paired DRL vs iLQR trials on one or more areas")};
  add_common(cmp);
  std::string cmp_ckpt;
  std::vector<std::string> areas;
  cmp.app->add_option("--checkpoint", cmp_ckpt, "policy checkpoint")->required();
  cmp.app->add_option("--field", areas, "area as PATH or PATH@x0,y0,w,h, repeatable")->required();
  cmp.flags.bind(cmp.app, "--cell-size", {"field.cell_size"}, "world units per cell");
  cmp.flags.bind(cmp.app, "--strength-cap", {"field.strength_cap"}, "flow magnitude clamp");
  cmp.flags.bind(cmp.app, "--trials", {"eval.trials"}, "trials per method and area");
  cmp.flags.bind(cmp.app, "--selection", {"eval.selection"}, "greedy | sample");
  cmp.flags.bind(cmp.app, "--averaging", {"eval.averaging"}, "successes | all");
  cmp.flags.bind(cmp.app, "--out", {"out.trials"}, "per-trial CSV");
  cmp.flags.bind(cmp.app, "--summary", {"out.summary"}, "summary CSV (default stdout)");
  cmp.flags.bind(cmp.app, "--paired", {"out.paired"}, "paired-difference CSV (default stdout)");

  Command conf{app.add_subcommand("config", "print every config key with its current value")};
  add_common(conf);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen.app->parsed()) {
      RunConfig cfg = resolve(gen);
      const auto field = load_field(cfg);
      write_currents(*field, std::filesystem::path(gen_out));
      print_field_summary(out, *field);
      return 0;
    }
    if (ingest.app->parsed()) {
      RunConfig cfg = resolve(ingest);
      cfg.set("field.file", ingest_in);
      const auto field = load_field(cfg);
      write_currents(*field, std::filesystem::path(ingest_out));
      print_field_summary(out, *field);
      return 0;
    }
    if (tr.app->parsed()) return cmd_train(resolve(tr), resume, out, err);
    if (ev.app->parsed()) return cmd_eval(resolve(ev), method, eval_ckpt, area, out);
    if (cmp.app->parsed()) return cmd_compare(resolve(cmp), areas, cmp_ckpt, out);
    if (conf.app->parsed()) return cmd_config(resolve(conf), out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace driftplan
