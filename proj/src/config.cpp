#include "driftplan/config.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <stdexcept>

#include "driftplan/csv.hpp"
#include "driftplan/errors.hpp"

namespace driftplan {

const std::vector<RunConfig::Key>& RunConfig::schema() {
  static const std::vector<Key> keys = {
      {"seed", "1", "base seed for trials, training and weight init (DRIFTPLAN_SEED is the fallback)"},
      {"workers", "1", "worker threads for trial batches and gradient accumulation"},

      {"field.file", "", "current CSV to load instead of generating a pattern"},
      {"field.kind", "vortex", "vortex | meander | spin | centripetal | uniform"},
      {"field.width", "48", "grid cells along x"},
      {"field.height", "48", "grid cells along y"},
      {"field.frames", "8", "number of time frames"},
      {"field.frame_dt", "50", "seconds between frames"},
      {"field.cell_size", "1", "world units per cell"},
      {"field.strength_cap", "1", "flow magnitudes are clamped to this"},
      {"field.strength", "0.5", "pattern peak strength"},
      {"field.scale", "6", "decay length / meander wavelength (inf disables decay)"},
      {"field.amplitude", "1", "meander cross-stream amplitude"},
      {"field.direction", "0", "uniform flow heading in radians"},
      {"field.noise", "0", "static per-cell jitter as a fraction of strength"},
      {"field.seed", "0", "jitter seed"},
      {"field.center", "", "pattern center x,y (empty: grid center)"},
      {"field.center_to", "", "second center x,y for a back-and-forth path (empty: static)"},
      {"field.center_period", "0", "period of the center path in seconds (0: static)"},
      {"field.crop", "", "x0,y0,w,h crop window in cells (empty: whole grid)"},

      {"motion.v", "1", "vehicle speed"},
      {"motion.dt", "1", "control period in seconds"},
      {"motion.u_max", "0.7853981633974483", "turn-rate bound (rad/s)"},

      {"env.border", "1", "surround the grid with obstacle cells"},
      {"env.start", "", "fixed start x,y (empty: random)"},
      {"env.goal", "", "fixed goal x,y (empty: random)"},
      {"env.heading", "", "fixed start heading (empty: face the goal)"},
      {"env.min_separation", "4", "minimum start-goal distance"},
      {"env.max_separation", "0", "maximum start-goal distance (0: unbounded)"},
      {"env.step_cap", "300", "ticks before a trial times out"},
      {"env.success_radius", "1", "goal radius"},
      {"env.t0", "0", "trial start time in seconds"},

      {"ilqr.horizon", "40", "planning horizon in ticks"},
      {"ilqr.max_iters", "50", "iteration limit per solve"},
      {"ilqr.cost_tol", "1e-6", "relative cost decrease that ends a solve"},
      {"ilqr.rho", "0.1", "control effort weight"},
      {"ilqr.terminal_weight", "1", "terminal position weight"},
      {"ilqr.position_weight", "1", "running position weight"},
      {"ilqr.replan_every", "5", "ticks between receding-horizon re-solves"},

      {"policy.channels", "8,16,16", "recurrent layer widths"},
      {"policy.vehicle", "16,16", "vehicle subnet widths"},
      {"policy.fc", "128,64", "fully connected widths"},
      {"policy.actions", "9", "discrete turn-rate actions"},
      {"policy.dropout", "0.5", "dropout rate between the fully connected layers"},

      {"train.rounds", "1000", "training episodes"},
      {"train.lr", "1e-6", "learning rate"},
      {"train.batch", "500", "batch size"},
      {"train.capacity", "10000", "replay buffer capacity"},
      {"train.alpha", "0.9", "failure reward blend"},
      {"train.gamma", "0.99", "per-step discount"},
      {"train.r_max", "10", "cap on the path-quality reward"},
      {"train.guided_fraction", "0.1", "fraction of episodes driven by iLQR"},
      {"train.teacher_prob", "0.9", "probability mass on the iLQR action"},
      {"train.importance_cap", "5", "upper bound on importance weights"},
      {"train.checkpoint_every", "100", "rounds between checkpoints (0: only at the end)"},

      {"eval.trials", "50", "trials per method and area"},
      {"eval.selection", "greedy", "greedy | sample action selection for the policy"},
      {"eval.averaging", "successes", "successes | all: trials included in cost averages"},

      {"out.checkpoint", "policy.ckpt", "train: checkpoint written here"},
      {"out.curve", "curve.csv", "train: learning curve CSV"},
      {"out.trials", "", "eval/compare: per-trial CSV (empty: not written)"},
      {"out.summary", "", "eval/compare: summary CSV (empty: stdout)"},
      {"out.paired", "", "compare: paired-difference CSV (empty: stdout)"},
  };
  return keys;
}

RunConfig::RunConfig() {
  for (const auto& k : schema()) values_[k.name] = k.default_value;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second = std::string(csv::trim(value));
  explicit_.insert(key);
}

void RunConfig::set_line(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  set(std::string(csv::trim(std::string_view(assignment).substr(0, eq))), assignment.substr(eq + 1));
}

void RunConfig::load(std::istream& in) {
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto t = csv::trim(line);
    if (t.empty() || t.front() == '#') continue;
    try {
      set_line(std::string(t));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(n) + ": " + e.what());
    }
  }
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  load(in);
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

double RunConfig::number(const std::string& key) const {
  const auto& v = get(key);
  if (v == "inf") return std::numeric_limits<double>::infinity();
  try {
    return csv::parse_number(v);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' expects a number, got '" + v + "'");
  }
}

long long RunConfig::integer(const std::string& key) const {
  const auto& v = get(key);
  try {
    return csv::parse_integer(v);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' expects an integer, got '" + v + "'");
  }
}

std::uint64_t RunConfig::unsigned_integer(const std::string& key) const {
  const long long v = integer(key);
  if (v < 0) throw ConfigError("config key '" + key + "' must be >= 0");
  return static_cast<std::uint64_t>(v);
}

bool RunConfig::flag(const std::string& key) const {
  const auto& v = get(key);
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError("config key '" + key + "' expects a boolean, got '" + v + "'");
}

std::vector<double> RunConfig::numbers(const std::string& key) const {
  const auto& v = get(key);
  std::vector<double> out;
  if (v.empty()) return out;
  for (auto part : csv::split(v)) {
    try {
      out.push_back(csv::parse_number(csv::trim(part)));
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "' expects comma-separated numbers, got '" + v + "'");
    }
  }
  return out;
}

void RunConfig::write(std::ostream& out) const {
  for (const auto& k : schema()) out << k.name << " = " << values_.at(k.name) << '\n';
}

// ---------------------------------------------------------------------------

namespace {

std::optional<Eigen::Vector2d> point(const RunConfig& cfg, const std::string& key) {
  const auto v = cfg.numbers(key);
  if (v.empty()) return std::nullopt;
  if (v.size() != 2) throw ConfigError("config key '" + key + "' expects x,y");
  return Eigen::Vector2d(v[0], v[1]);
}

int positive_int(const RunConfig& cfg, const std::string& key) {
  const long long v = cfg.integer(key);
  if (v < 1 || v > 1'000'000'000) throw ConfigError("config key '" + key + "' must be >= 1");
  return static_cast<int>(v);
}

template <std::size_t N>
std::array<int, N> widths(const RunConfig& cfg, const std::string& key) {
  const auto v = cfg.numbers(key);
  if (v.size() != N) throw ConfigError("config key '" + key + "' expects " + std::to_string(N) + " widths");
  std::array<int, N> out{};
  for (std::size_t i = 0; i < N; ++i) {
    if (v[i] < 1 || v[i] != std::floor(v[i])) throw ConfigError("config key '" + key + "' widths must be >= 1");
    out[i] = static_cast<int>(v[i]);
  }
  return out;
}

}  // namespace

FieldPatternSpec pattern_spec(const RunConfig& cfg) {
  FieldPatternSpec s;
  s.kind = parse_pattern_kind(cfg.get("field.kind"));
  s.strength = cfg.number("field.strength");
  s.scale = cfg.number("field.scale");
  s.amplitude = cfg.number("field.amplitude");
  s.direction = cfg.number("field.direction");
  s.noise = cfg.number("field.noise");
  s.seed = cfg.unsigned_integer("field.seed");
  const double cs = cfg.number("field.cell_size");
  const Eigen::Vector2d grid_center(0.5 * cfg.number("field.width") * cs, 0.5 * cfg.number("field.height") * cs);
  const Eigen::Vector2d from = point(cfg, "field.center").value_or(grid_center);
  const Eigen::Vector2d to = point(cfg, "field.center_to").value_or(from);
  s.center_path = {from, to, cfg.number("field.center_period")};
  s.validate();
  return s;
}

std::shared_ptr<const DisturbanceField> load_field(const RunConfig& cfg) {
  const CurrentCsvSchema schema{cfg.number("field.cell_size"), cfg.number("field.strength_cap")};
  std::shared_ptr<const DisturbanceField> field;
  if (!cfg.get("field.file").empty()) {
    field = std::make_shared<const DisturbanceField>(ingest_currents(cfg.get("field.file"), schema));
  } else {
    field = std::make_shared<const DisturbanceField>(
        generate(pattern_spec(cfg), positive_int(cfg, "field.width"), positive_int(cfg, "field.height"),
                 positive_int(cfg, "field.frames"), cfg.number("field.frame_dt"), schema.cell_size,
                 schema.strength_cap));
  }
  const auto c = cfg.numbers("field.crop");
  if (!c.empty()) {
    if (c.size() != 4) throw ConfigError("field.crop expects x0,y0,w,h");
    field = std::make_shared<const DisturbanceField>(
        crop(*field, static_cast<int>(c[0]), static_cast<int>(c[1]), static_cast<int>(c[2]), static_cast<int>(c[3])));
  }
  return field;
}

MotionParams motion_params(const RunConfig& cfg) {
  MotionParams m;
  m.v = cfg.number("motion.v");
  m.dt = cfg.number("motion.dt");
  m.u_max = cfg.number("motion.u_max");
  m.validate();
  return m;
}

EnvSpec env_spec(const RunConfig& cfg, std::shared_ptr<const DisturbanceField> field) {
  EnvSpec env;
  env.field = std::move(field);
  env.border_obstacles = cfg.flag("env.border");
  env.start = point(cfg, "env.start");
  env.goal = point(cfg, "env.goal");
  if (!cfg.get("env.heading").empty()) env.start_heading = cfg.number("env.heading");
  env.min_separation = cfg.number("env.min_separation");
  env.max_separation = cfg.number("env.max_separation");
  env.motion = motion_params(cfg);
  env.step_cap = positive_int(cfg, "env.step_cap");
  env.success_radius = cfg.number("env.success_radius");
  env.t0 = cfg.number("env.t0");
  env.validate();
  return env;
}

RecedingHorizonConfig ilqr_controller_config(const RunConfig& cfg) {
  RecedingHorizonConfig rh;
  rh.solver.horizon = positive_int(cfg, "ilqr.horizon");
  rh.solver.max_iters = positive_int(cfg, "ilqr.max_iters");
  rh.solver.cost_tol = cfg.number("ilqr.cost_tol");
  rh.solver.validate();
  rh.cost.rho = cfg.number("ilqr.rho");
  const double wp = cfg.number("ilqr.position_weight"), wf = cfg.number("ilqr.terminal_weight");
  rh.cost.W_p = Eigen::Vector3d(wp, wp, 0.0).asDiagonal();
  rh.cost.W_f = Eigen::Vector3d(wf, wf, 0.0).asDiagonal();
  rh.cost.validate();
  rh.replan_every = positive_int(cfg, "ilqr.replan_every");
  return rh;
}

PolicyConfig policy_config(const RunConfig& cfg, int grid_w, int grid_h) {
  PolicyConfig p;
  p.grid_w = grid_w;
  p.grid_h = grid_h;
  p.channels = widths<3>(cfg, "policy.channels");
  p.vehicle_hidden = widths<2>(cfg, "policy.vehicle");
  p.fc_hidden = widths<2>(cfg, "policy.fc");
  p.actions = positive_int(cfg, "policy.actions");
  p.dropout = cfg.number("policy.dropout");
  p.validate();
  return p;
}

TrainingConfig training_config(const RunConfig& cfg) {
  TrainingConfig t;
  const long long rounds = cfg.integer("train.rounds");
  if (rounds < 0 || rounds > 1'000'000'000) throw ConfigError("train.rounds must be >= 0");
  t.rounds = static_cast<int>(rounds);
  t.learning_rate = cfg.number("train.lr");
  t.batch_size = positive_int(cfg, "train.batch");
  t.capacity = static_cast<std::size_t>(positive_int(cfg, "train.capacity"));
  t.episode_cap = positive_int(cfg, "env.step_cap");
  t.alpha = cfg.number("train.alpha");
  t.gamma = cfg.number("train.gamma");
  t.r_max = cfg.number("train.r_max");
  t.guided_fraction = cfg.number("train.guided_fraction");
  t.seed = cfg.unsigned_integer("seed");
  t.workers = positive_int(cfg, "workers");
  t.guide.controller = ilqr_controller_config(cfg);
  t.guide.teacher_prob = cfg.number("train.teacher_prob");
  t.guide.importance_cap = cfg.number("train.importance_cap");
  if (!(t.guide.teacher_prob > 0.0 && t.guide.teacher_prob <= 1.0))
    throw ConfigError("train.teacher_prob must be in (0, 1]");
  if (!(t.guide.importance_cap > 0.0)) throw ConfigError("train.importance_cap must be > 0");
  t.validate();
  return t;
}

ActionSelection action_selection(const RunConfig& cfg) {
  const auto& v = cfg.get("eval.selection");
  if (v == "greedy") return ActionSelection::greedy;
  if (v == "sample") return ActionSelection::sample;
  throw ConfigError("eval.selection must be greedy or sample, got '" + v + "'");
}

CostAveraging cost_averaging(const RunConfig& cfg) {
  const auto& v = cfg.get("eval.averaging");
  if (v == "successes") return CostAveraging::successes_only;
  if (v == "all") return CostAveraging::all_trials;
  throw ConfigError("eval.averaging must be successes or all, got '" + v + "'");
}

}  // namespace driftplan
