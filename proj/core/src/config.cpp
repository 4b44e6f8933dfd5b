#include "dpgp/config.hpp"

#include "dpgp/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace dpgp {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double parse_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end || !std::isfinite(out)) {
    throw InputError("config: " + key + " expects a real number, got '" + v + "'");
  }
  return out;
}

long long parse_integer(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw InputError("config: " + key + " expects an integer, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw InputError("config: " + key + " expects true or false, got '" + v + "'");
}

// Key/value entries with consumption tracking, so leftovers can be reported.
class Entries {
 public:
  void add(std::string key, std::string value, const std::string& where) {
    if (!values_.emplace(key, std::move(value)).second) throw InputError(where + ": duplicate key " + key);
  }
  const std::string* take(const std::string& key) {
    auto it = values_.find(key);
    if (it == values_.end()) return nullptr;
    used_.insert(key);
    return &it->second;
  }
  bool has_prefix(const std::string& prefix) const {
    auto it = values_.lower_bound(prefix);
    return it != values_.end() && it->first.compare(0, prefix.size(), prefix) == 0;
  }
  void reject_unused() const {
    for (const auto& [k, _] : values_) {
      if (!used_.count(k)) throw InputError("config: unknown key " + k);
    }
  }

 private:
  std::map<std::string, std::string> values_;
  std::set<std::string> used_;
};

std::vector<std::string_view> param_names_for(KernelKind kind) {
  switch (kind) {
    case KernelKind::SquaredExponential: return {"variance", "lengthscale"};
    case KernelKind::WhiteNoise: return {"noise"};
    case KernelKind::Periodic: return {"variance", "lengthscale"};
    case KernelKind::Sum: return {};
  }
  return {};
}

// Reads `<prefix>kind`, its parameters and, for sums, `<prefix><j>.*`.
// Free parameters given explicitly are recorded under `<hyper_prefix><name>`.
KernelSpec read_kernel(Entries& e, const std::string& prefix, const std::string& hyper_prefix,
                       std::map<std::string, double>& explicit_hypers, bool kind_required) {
  const std::string* kind_text = e.take(prefix + "kind");
  if (!kind_text && kind_required) throw InputError("config: missing " + prefix + "kind");
  const KernelKind kind = kind_text ? kind_from_name(*kind_text) : KernelKind::SquaredExponential;

  if (kind == KernelKind::Sum) {
    std::vector<KernelSpec> children;
    for (std::size_t j = 0; e.has_prefix(prefix + std::to_string(j) + "."); ++j) {
      const std::string sub = std::to_string(j) + ".";
      children.push_back(read_kernel(e, prefix + sub, hyper_prefix + sub, explicit_hypers, true));
    }
    if (children.size() < 2) throw InputError("config: " + prefix + "kind=sum needs children " + prefix + "0. and " + prefix + "1.");
    return KernelSpec::sum(std::move(children));
  }

  KernelSpec k = KernelSpec::squared_exponential(1.0, 1.0);
  switch (kind) {
    case KernelKind::WhiteNoise: k = KernelSpec::white_noise(1.0); break;
    case KernelKind::Periodic: {
      double period = 1.0;
      if (const auto* v = e.take(prefix + "period")) period = parse_real(prefix + "period", *v);
      if (!(period > 0.0)) throw InputError("config: " + prefix + "period must be > 0");
      k = KernelSpec::periodic(1.0, 1.0, period);
      break;
    }
    default: break;
  }
  for (auto name : param_names_for(kind)) {
    const std::string key = prefix + std::string(name);
    if (const auto* v = e.take(key)) {
      const double x = parse_real(key, *v);
      if (!(x > 0.0)) throw InputError("config: " + key + " must be > 0");
      k = k.with_param(name, x);
      explicit_hypers[hyper_prefix + std::string(name)] = x;
    }
  }
  return k;
}

void write_kernel(std::ostringstream& out, const KernelSpec& k, const std::string& prefix,
                  const std::string& hyper_prefix, const std::map<std::string, double>& explicit_hypers) {
  out << prefix << "kind=" << kind_name(k.kind()) << '\n';
  if (k.kind() == KernelKind::Sum) {
    for (std::size_t j = 0; j < k.children().size(); ++j) {
      const std::string sub = std::to_string(j) + ".";
      write_kernel(out, k.children()[j], prefix + sub, hyper_prefix + sub, explicit_hypers);
    }
    return;
  }
  if (k.kind() == KernelKind::Periodic) out << prefix << "period=" << format_double(k.param("period")) << '\n';
  for (auto name : param_names_for(k.kind())) {
    auto it = explicit_hypers.find(hyper_prefix + std::string(name));
    if (it != explicit_hypers.end()) out << prefix << name << '=' << format_double(it->second) << '\n';
  }
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

StructureSpec RunConfig::default_structure() {
  return StructureSpec{{Layer{KernelSpec::squared_exponential(1.0, 1.0), kGroupLevel},
                        Layer{KernelSpec::white_noise(1.0), kGroupLevel}}};
}

RunConfig RunConfig::parse(std::string_view text, const std::string& source) {
  Entries e;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw InputError(where + ": expected key=value");
    std::string key = trim(std::string_view(body).substr(0, eq));
    std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) throw InputError(where + ": empty key");
    e.add(std::move(key), std::move(value), where);
  }

  RunConfig c;
  if (const auto* v = e.take("alpha")) c.alpha = parse_real("alpha", *v);
  if (const auto* v = e.take("k_init")) c.k_init = static_cast<int>(parse_integer("k_init", *v));
  if (const auto* v = e.take("seed")) {
    const long long s = parse_integer("seed", *v);
    if (s < 0) throw InputError("config: seed must be >= 0");
    c.seed = static_cast<std::uint64_t>(s);
  }

  c.cluster_kernel = read_kernel(e, "kernel.f.", "f.", c.explicit_hypers, false);

  if (e.has_prefix("structure.")) {
    c.structure.layers.clear();
    for (std::size_t i = 0; e.has_prefix("structure." + std::to_string(i) + "."); ++i) {
      const std::string prefix = "structure." + std::to_string(i) + ".";
      Layer layer{read_kernel(e, prefix, "layer" + std::to_string(i) + ".", c.explicit_hypers, true), kGroupLevel};
      if (const auto* v = e.take(prefix + "level")) layer.level = *v;
      c.structure.layers.push_back(std::move(layer));
    }
  }

  if (const auto* v = e.take("optimizer.mode")) c.optimizer.mode = mode_from_name(*v);
  if (const auto* v = e.take("optimizer.tol")) c.optimizer.tol = parse_real("optimizer.tol", *v);
  if (const auto* v = e.take("optimizer.max_iters")) {
    c.optimizer.max_iters = static_cast<int>(parse_integer("optimizer.max_iters", *v));
  }
  if (const auto* v = e.take("optimizer.force_beta_zero")) {
    c.optimizer.force_beta_zero = parse_bool("optimizer.force_beta_zero", *v);
  }
  if (const auto* v = e.take("optimizer.hs_denominator_floor")) {
    c.optimizer.hs_denominator_floor = parse_real("optimizer.hs_denominator_floor", *v);
  }
  if (const auto* v = e.take("schedule.phases")) c.schedule.phases = static_cast<int>(parse_integer("schedule.phases", *v));
  if (const auto* v = e.take("schedule.vb_iters_per_phase")) {
    c.schedule.vb_iters_per_phase = static_cast<int>(parse_integer("schedule.vb_iters_per_phase", *v));
  }
  if (const auto* v = e.take("schedule.hyper_steps_per_phase")) {
    c.schedule.hyper_steps_per_phase = static_cast<int>(parse_integer("schedule.hyper_steps_per_phase", *v));
  }
  if (const auto* v = e.take("moves.rounds")) c.move_rounds = static_cast<int>(parse_integer("moves.rounds", *v));
  if (const auto* v = e.take("moves.prune_threshold")) c.prune_threshold = parse_real("moves.prune_threshold", *v);
  if (const auto* v = e.take("init.gamma_sd")) c.gamma_init_sd = parse_real("init.gamma_sd", *v);
  if (const auto* v = e.take("predict.margin")) c.predict_margin = parse_real("predict.margin", *v);
  if (const auto* v = e.take("predict.grid_points")) {
    c.posterior_grid_points = static_cast<int>(parse_integer("predict.grid_points", *v));
  }
  e.reject_unused();
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

void RunConfig::validate() const {
  if (!(alpha > 0.0)) throw InputError("config: alpha must be > 0");
  if (k_init < 1) throw InputError("config: k_init must be >= 1");
  if (move_rounds < 0) throw InputError("config: moves.rounds must be >= 0");
  if (!(prune_threshold >= 0.0)) throw InputError("config: moves.prune_threshold must be >= 0");
  if (!(gamma_init_sd >= 0.0)) throw InputError("config: init.gamma_sd must be >= 0");
  if (!(predict_margin >= 0.0)) throw InputError("config: predict.margin must be >= 0");
  if (posterior_grid_points < 2) throw InputError("config: predict.grid_points must be >= 2");
  if (cluster_kernel.has_white_noise()) throw InputError("config: kernel.f must not contain white noise");
  if (structure.layers.empty()) throw InputError("config: structure needs at least one layer");
  optimizer.validate();
  schedule.validate();
}

ModelSpec RunConfig::model_template() const { return ModelSpec{cluster_kernel, structure, alpha}; }

ModelSpec RunConfig::resolve_model(const GroupedDataset& data) const {
  ModelSpec m = init_hypers(data, model_template());
  const auto names = m.hyper_names();
  Eigen::VectorXd logs = m.log_hypers();
  for (const auto& [name, value] : explicit_hypers) {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw InputError("config: no free hyperparameter named " + name);
    logs[it - names.begin()] = std::log(value);
  }
  m = m.with_log_hypers(logs);
  m.validate(data.design);
  return m;
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  out << "alpha=" << format_double(alpha) << '\n';
  out << "k_init=" << k_init << '\n';
  out << "seed=" << seed << '\n';
  write_kernel(out, cluster_kernel, "kernel.f.", "f.", explicit_hypers);
  for (std::size_t i = 0; i < structure.layers.size(); ++i) {
    const std::string prefix = "structure." + std::to_string(i) + ".";
    write_kernel(out, structure.layers[i].kernel, prefix, "layer" + std::to_string(i) + ".", explicit_hypers);
    out << prefix << "level=" << structure.layers[i].level << '\n';
  }
  out << "optimizer.mode=" << mode_name(optimizer.mode) << '\n';
  out << "optimizer.tol=" << format_double(optimizer.tol) << '\n';
  out << "optimizer.max_iters=" << optimizer.max_iters << '\n';
  out << "optimizer.force_beta_zero=" << (optimizer.force_beta_zero ? "true" : "false") << '\n';
  out << "optimizer.hs_denominator_floor=" << format_double(optimizer.hs_denominator_floor) << '\n';
  out << "schedule.phases=" << schedule.phases << '\n';
  out << "schedule.vb_iters_per_phase=" << schedule.vb_iters_per_phase << '\n';
  out << "schedule.hyper_steps_per_phase=" << schedule.hyper_steps_per_phase << '\n';
  out << "moves.rounds=" << move_rounds << '\n';
  out << "moves.prune_threshold=" << format_double(prune_threshold) << '\n';
  out << "init.gamma_sd=" << format_double(gamma_init_sd) << '\n';
  out << "predict.margin=" << format_double(predict_margin) << '\n';
  out << "predict.grid_points=" << posterior_grid_points << '\n';
  return out.str();
}

}  // namespace dpgp
