#include "driftplan/checkpoint.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "driftplan/errors.hpp"

namespace driftplan {

namespace {

std::string hex(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  // Next non-empty line split on whitespace.
  std::vector<std::string> tokens() {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_;
      std::istringstream ss(line);
      std::vector<std::string> out;
      for (std::string t; ss >> t;) out.push_back(std::move(t));
      if (!out.empty()) return out;
    }
    fail("unexpected end of file");
  }

  std::vector<std::string> expect(const std::string& keyword, std::size_t count) {
    auto t = tokens();
    if (t[0] != keyword) fail("expected '" + keyword + "', found '" + t[0] + "'");
    if (count != 0 && t.size() != count) fail("'" + keyword + "' line has wrong field count");
    return t;
  }

  std::string raw_line() {
    std::string line;
    if (!std::getline(in_, line)) fail("unexpected end of file");
    ++line_;
    return line;
  }

  double number(const std::string& s) {
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0' || errno == ERANGE) fail("bad number '" + s + "'");
    return v;
  }

  long long integer(const std::string& s) {
    errno = 0;
    char* end = nullptr;
    const long long v = std::strtoll(s.c_str(), &end, 10);
    if (end == s.c_str() || *end != '\0' || errno == ERANGE) fail("bad integer '" + s + "'");
    return v;
  }

  std::uint64_t unsigned_integer(const std::string& s) {
    errno = 0;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
    if (end == s.c_str() || *end != '\0' || errno == ERANGE || s[0] == '-') fail("bad integer '" + s + "'");
    return v;
  }

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(line_, what); }

 private:
  std::istream& in_;
  std::size_t line_ = 0;
};

void write_config(std::ostream& out, const PolicyConfig& c) {
  out << "config " << c.grid_w << ' ' << c.grid_h << ' ' << c.channels[0] << ' ' << c.channels[1] << ' '
      << c.channels[2] << ' ' << c.vehicle_hidden[0] << ' ' << c.vehicle_hidden[1] << ' ' << c.fc_hidden[0] << ' '
      << c.fc_hidden[1] << ' ' << c.actions << ' ' << hex(c.dropout) << '\n';
}

void write_key(std::ostream& out, const ObsKey& k) {
  for (double t : k.times) out << hex(t) << ' ';
  for (const auto& s : k.states) out << hex(s.x) << ' ' << hex(s.y) << ' ' << hex(s.theta) << ' ';
  out << hex(k.goal.x()) << ' ' << hex(k.goal.y());
}

void write_training(std::ostream& out, const TrainingState& st) {
  out << "training\n";
  out << "round " << st.round << '\n';
  out << "next_tag " << st.next_tag << '\n';
  out << "rng " << st.rng << '\n';
  out << "curve " << st.curve.size() << '\n';
  for (const auto& p : st.curve)
    out << p.round << ' ' << hex(p.reward) << ' ' << (p.success ? 1 : 0) << ' ' << hex(p.loss) << ' ' << p.steps
        << ' ' << (p.guided ? 1 : 0) << '\n';
  out << "buffer " << st.buffer.capacity() << ' ' << st.buffer.size() << '\n';
  // key (14 values), action, reward, q_hat, importance, step_index, episode_length, tag
  for (const auto& e : st.buffer.items()) {
    write_key(out, e.obs);
    out << ' ' << e.action << ' ' << hex(e.reward) << ' ' << hex(e.q_hat) << ' ' << hex(e.importance) << ' '
        << e.step_index << ' ' << e.episode_length << ' ' << e.tag << '\n';
  }
}

PolicyConfig read_config(Reader& r) {
  const auto t = r.expect("config", 12);
  PolicyConfig c;
  c.grid_w = static_cast<int>(r.integer(t[1]));
  c.grid_h = static_cast<int>(r.integer(t[2]));
  for (int i = 0; i < 3; ++i) c.channels[i] = static_cast<int>(r.integer(t[3 + i]));
  c.vehicle_hidden = {static_cast<int>(r.integer(t[6])), static_cast<int>(r.integer(t[7]))};
  c.fc_hidden = {static_cast<int>(r.integer(t[8])), static_cast<int>(r.integer(t[9]))};
  c.actions = static_cast<int>(r.integer(t[10]));
  c.dropout = r.number(t[11]);
  try {
    c.validate();
  } catch (const ConfigError& e) {
    r.fail(std::string("invalid policy config: ") + e.what());
  }
  return c;
}

PolicyWeights read_tensors(Reader& r, const PolicyConfig& cfg) {
  PolicyWeights w(cfg);
  const auto head = r.expect("tensors", 2);
  if (static_cast<std::size_t>(r.integer(head[1])) != w.tensors().size()) r.fail("tensor count mismatch");
  for (std::size_t id = 0; id < w.tensors().size(); ++id) {
    const TensorInfo& info = w.tensors()[id];
    const auto t = r.expect("tensor", 0);
    if (t.size() < 4 || t[1] != info.name) r.fail("expected tensor '" + info.name + "'");
    const auto rank = static_cast<std::size_t>(r.integer(t[2]));
    if (rank != info.shape.size() || t.size() != 4 + rank) r.fail("tensor '" + info.name + "' has wrong rank");
    for (std::size_t d = 0; d < rank; ++d)
      if (r.integer(t[3 + d]) != info.shape[d]) r.fail("tensor '" + info.name + "' has wrong shape");
    if (static_cast<std::size_t>(r.integer(t[3 + rank])) != info.size) r.fail("tensor '" + info.name + "' size");
    auto dst = w.tensor(id);
    if (info.size == 0) continue;
    const auto vals = r.tokens();
    if (vals.size() != info.size) r.fail("tensor '" + info.name + "' has wrong value count");
    for (std::size_t i = 0; i < info.size; ++i) dst[i] = r.number(vals[i]);
  }
  if (!w.all_finite()) r.fail("non-finite weight");
  return w;
}

TrainingState read_training(Reader& r, PolicyWeights weights) {
  TrainingState st{std::move(weights), ReplayBuffer(1), Rng(), 0, 0, {}};
  st.round = static_cast<int>(r.integer(r.expect("round", 2)[1]));
  st.next_tag = r.unsigned_integer(r.expect("next_tag", 2)[1]);
  {
    const auto line = r.raw_line();
    if (line.rfind("rng ", 0) != 0) r.fail("expected 'rng'");
    std::istringstream ss(line.substr(4));
    ss >> st.rng;
    if (!ss) r.fail("bad rng state");
  }
  const auto n_curve = static_cast<std::size_t>(r.integer(r.expect("curve", 2)[1]));
  st.curve.reserve(n_curve);
  for (std::size_t i = 0; i < n_curve; ++i) {
    const auto t = r.tokens();
    if (t.size() != 6) r.fail("curve row has wrong field count");
    st.curve.push_back({static_cast<int>(r.integer(t[0])), r.number(t[1]), r.integer(t[2]) != 0, r.number(t[3]),
                        static_cast<int>(r.integer(t[4])), r.integer(t[5]) != 0});
  }
  const auto b = r.expect("buffer", 3);
  const auto capacity = static_cast<std::size_t>(r.integer(b[1]));
  const auto n = static_cast<std::size_t>(r.integer(b[2]));
  if (capacity == 0 || n > capacity) r.fail("bad buffer size");
  st.buffer = ReplayBuffer(capacity);
  std::vector<Experience> items(n);
  for (auto& e : items) {
    const auto t = r.tokens();
    if (t.size() != 21) r.fail("experience row has wrong field count");
    std::size_t k = 0;
    for (double& v : e.obs.times) v = r.number(t[k++]);
    for (auto& s : e.obs.states) {
      s.x = r.number(t[k++]);
      s.y = r.number(t[k++]);
      s.theta = r.number(t[k++]);
    }
    e.obs.goal.x() = r.number(t[k++]);
    e.obs.goal.y() = r.number(t[k++]);
    e.action = static_cast<int>(r.integer(t[k++]));
    e.reward = r.number(t[k++]);
    e.q_hat = r.number(t[k++]);
    e.importance = r.number(t[k++]);
    e.step_index = static_cast<int>(r.integer(t[k++]));
    e.episode_length = static_cast<int>(r.integer(t[k++]));
    e.tag = r.unsigned_integer(t[k++]);
    if (e.action < 0 || e.action >= st.weights.config().actions) r.fail("experience action out of range");
  }
  st.buffer.push(items);
  return st;
}

}  // namespace

void save_checkpoint(std::ostream& out, const PolicyWeights& w, const TrainingState* training) {
  out << "driftplan-checkpoint\n";
  out << "version " << kCheckpointVersion << '\n';
  out << "encoding text-hexfloat\n";
  write_config(out, w.config());
  out << "tensors " << w.tensors().size() << '\n';
  for (std::size_t id = 0; id < w.tensors().size(); ++id) {
    const TensorInfo& info = w.tensors()[id];
    out << "tensor " << info.name << ' ' << info.shape.size();
    for (int d : info.shape) out << ' ' << d;
    out << ' ' << info.size << '\n';
    if (info.size == 0) continue;
    const auto vals = w.tensor(id);
    for (std::size_t i = 0; i < vals.size(); ++i) out << (i ? " " : "") << hex(vals[i]);
    out << '\n';
  }
  if (training) write_training(out, *training);
  out << "end\n";
}

void save_checkpoint(const std::filesystem::path& path, const PolicyWeights& w, const TrainingState* training) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw Error("cannot write checkpoint " + tmp.string());
    save_checkpoint(out, w, training);
    if (!out) throw Error("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(std::istream& in) {
  Reader r(in);
  if (r.tokens() != std::vector<std::string>{"driftplan-checkpoint"}) r.fail("not a driftplan checkpoint");
  const auto v = r.expect("version", 2);
  if (r.integer(v[1]) != kCheckpointVersion) r.fail("unsupported checkpoint version " + v[1]);
  const auto enc = r.expect("encoding", 2);
  if (enc[1] != "text-hexfloat") r.fail("unsupported encoding " + enc[1]);
  const PolicyConfig cfg = read_config(r);
  Checkpoint ck{read_tensors(r, cfg), std::nullopt};
  auto t = r.tokens();
  if (t.size() == 1 && t[0] == "training") {
    ck.training = read_training(r, ck.weights);
    t = r.tokens();
  }
  if (t.size() != 1 || t[0] != "end") r.fail("expected 'end'");
  return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  return load_checkpoint(in);
}

}  // namespace driftplan
