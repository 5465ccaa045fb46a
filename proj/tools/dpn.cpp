#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dpn/forecast.hpp"
#include "dpn/io.hpp"
#include "dpn/series_io.hpp"
#include "dpn/smooth.hpp"
#include "dpn/window.hpp"

namespace {

using ojson = nlohmann::ordered_json;

enum Exit { kOk = 0, kValidation = 1, kInference = 2, kIo = 3 };

struct UsageError : dpn::Error {
  using dpn::Error::Error;
};

struct Config {
  std::string model_path;
  std::string evidence_path;
  std::size_t width = 2;
  std::string heuristic = "min-weight";
  std::string format = "json-lines";
  std::size_t slices = 0;
  std::string targets;
  std::size_t horizon = 1;
  std::string method = "exact";
  std::size_t samples = 10000;
  std::uint64_t seed = 0;
  std::string save_path;
  std::string load_path;
};

std::string fmt_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

class Emitter {
 public:
  Emitter(const dpn::DpnModel& m, bool csv) : model_(m), csv_(csv) {
    if (csv_) std::cout << "t,var,mode,state,p,evidence_mass,std_error\n";
  }

  void emit(std::size_t t, dpn::VarId var, const std::string& mode, const std::vector<double>& p,
            std::optional<double> mass, const std::vector<double>& std_error = {},
            const dpn::ForecastResult* meta = nullptr) {
    const dpn::Variable& v = model_.variables[var];
    if (csv_) {
      for (std::size_t s = 0; s < p.size(); ++s)
        std::cout << t << ',' << v.name << ',' << mode << ',' << v.states[s] << ',' << fmt_double(p[s]) << ','
                  << (mass ? fmt_double(*mass) : "") << ','
                  << (std_error.empty() ? "" : fmt_double(std_error[s])) << '\n';
      return;
    }
    ojson rec;
    rec["t"] = t;
    rec["var"] = v.name;
    rec["mode"] = mode;
    ojson dist = ojson::array();
    for (std::size_t s = 0; s < p.size(); ++s) dist.push_back({{"state", v.states[s]}, {"p", p[s]}});
    rec["distribution"] = dist;
    if (mass) rec["evidence_mass"] = *mass;
    if (meta) {
      rec["approximate"] = meta->approximate;
      if (meta->method == dpn::ForecastMethod::MonteCarlo) {
        rec["samples"] = meta->samples;
        rec["seed"] = meta->seed;
        rec["generator"] = meta->generator;
        rec["std_error"] = std_error;
      }
    }
    std::cout << rec.dump() << '\n';
  }

 private:
  const dpn::DpnModel& model_;
  bool csv_;
};

dpn::WindowOptions window_options(const Config& c) {
  dpn::WindowOptions o;
  o.heuristic = dpn::parse_heuristic(c.heuristic);
  if (const char* cap = std::getenv("DPN_RESOURCE_CAP")) {
    try {
      std::size_t pos = 0;
      unsigned long long v = std::stoull(cap, &pos);
      if (pos != std::string(cap).size() || v == 0) throw std::invalid_argument(cap);
      o.cell_cap = static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      throw UsageError(std::string("DPN_RESOURCE_CAP must be a positive integer, got '") + cap + "'");
    }
  }
  return o;
}

std::shared_ptr<const dpn::DpnModel> load_valid_model(const std::string& path) {
  auto m = std::make_shared<const dpn::DpnModel>(dpn::load_model(path));
  auto violations = dpn::validate_model(*m);
  if (!violations.empty()) {
    std::string msg = "invalid model:";
    for (const auto& v : violations) msg += "\n  " + v;
    throw dpn::ModelError(msg);
  }
  return m;
}

/// Drives the window through the evidence stream.  `on_slice` sees each
/// slice once its evidence is in and the window is calibrated.
class Session {
 public:
  Session(dpn::ModelSeries s) : series_(std::move(s)) {}

  dpn::ModelSeries& series() { return series_; }

  template <class OnSlice>
  void run(const std::vector<dpn::Evidence>& evidence, std::size_t last, OnSlice on_slice) {
    std::size_t next = 0;
    for (const auto& e : evidence) {
      while (e.t > next) emit(next++, on_slice);
      ensure(e.t);
      const auto& w = series_.window();
      if (e.t < w.t_low())
        throw dpn::PreconditionError("evidence for slice " + std::to_string(e.t) +
                                     " arrived after it was archived (window holds slices " +
                                     std::to_string(w.t_low()) + ".." + std::to_string(w.t_high()) +
                                     "); new findings are restricted to window slices, archived slices are "
                                     "only updated by smoothing");
      series_.enter_evidence(e);
    }
    while (next <= last) emit(next++, on_slice);
  }

 private:
  void ensure(std::size_t t) {
    while (t > series_.window().t_high()) {
      calibrate(series_.window().t_high());
      series_.advance(1);
    }
  }

  void calibrate(std::size_t t) {
    try {
      series_.propagate();
    } catch (const dpn::ZeroMassError&) {
      throw dpn::ZeroMassError("slice " + std::to_string(t) +
                               ": evidence is contradictory (the findings entered so far have zero probability)");
    }
  }

  template <class OnSlice>
  void emit(std::size_t t, OnSlice& on_slice) {
    ensure(t);
    calibrate(t);
    on_slice(t);
  }

  dpn::ModelSeries series_;
};

std::size_t horizon_of(const std::vector<dpn::Evidence>& ev, const Config& c) {
  std::size_t last = c.width - 1;
  for (const auto& e : ev) last = std::max(last, e.t);
  if (c.slices > 0) last = std::max(last, c.slices - 1);
  return last;
}

/// Builds the session either from a saved series or by filtering the
/// evidence file; `on_slice` receives filtered slices in the latter case.
template <class OnSlice>
dpn::ModelSeries open_session(const Config& c, OnSlice on_slice) {
  if (!c.load_path.empty()) {
    if (!c.model_path.empty() || !c.evidence_path.empty())
      throw UsageError("--load-series replaces the model and evidence arguments");
    try {
      dpn::ModelSeries s = dpn::load_series(c.load_path);
      s.window().set_cell_cap(window_options(c).cell_cap);
      return s;
    } catch (const dpn::FormatError& e) {
      throw dpn::IoError("'" + c.load_path + "': " + e.what());
    }
  }
  if (c.model_path.empty() || c.evidence_path.empty()) throw UsageError("MODEL and EVIDENCE are required");
  if (c.width < 1) throw UsageError("--width must be at least 1");
  auto model = load_valid_model(c.model_path);
  auto evidence = dpn::load_evidence(*model, c.evidence_path);
  Session session(dpn::ModelSeries::init(model, c.width, window_options(c)));
  session.run(evidence, horizon_of(evidence, c), on_slice);
  return std::move(session.series());
}

void finish(const Config& c, const dpn::ModelSeries& s) {
  if (!c.save_path.empty()) dpn::save_series(s, c.save_path);
}

int cmd_validate(const Config& c) {
  auto m = dpn::load_model(c.model_path);
  auto violations = dpn::validate_model(m);
  for (const auto& v : violations) std::cout << v << '\n';
  if (!violations.empty()) {
    std::cerr << "dpn: model has " << violations.size() << " violation(s)\n";
    return kValidation;
  }
  return kOk;
}

int cmd_filter(const Config& c) {
  if (!c.load_path.empty()) throw UsageError("filter does not accept --load-series");
  std::unique_ptr<Emitter> out;
  std::shared_ptr<const dpn::DpnModel> model;
  dpn::ModelSeries* live = nullptr;
  auto on_slice = [&](std::size_t t) {
    const dpn::Window& w = live->window();
    double mass = std::exp(w.tree().log_mass());
    for (dpn::VarId v = 0; v < w.model().var_count(); ++v)
      out->emit(t, v, "filtered", w.marginal(t, v).values(), mass);
  };
  if (c.model_path.empty() || c.evidence_path.empty()) throw UsageError("MODEL and EVIDENCE are required");
  if (c.width < 1) throw UsageError("--width must be at least 1");
  model = load_valid_model(c.model_path);
  auto evidence = dpn::load_evidence(*model, c.evidence_path);
  out = std::make_unique<Emitter>(*model, c.format == "csv");
  Session session(dpn::ModelSeries::init(model, c.width, window_options(c)));
  live = &session.series();
  session.run(evidence, horizon_of(evidence, c), on_slice);
  finish(c, session.series());
  return kOk;
}

std::vector<std::pair<std::size_t, dpn::VarId>> parse_targets(const dpn::DpnModel& m, const std::string& spec,
                                                              std::size_t last) {
  std::vector<std::pair<std::size_t, dpn::VarId>> out;
  if (spec.empty()) {
    for (std::size_t t = 0; t <= last; ++t)
      for (dpn::VarId v = 0; v < m.var_count(); ++v) out.push_back({t, v});
    return out;
  }
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto colon = item.find(':');
    if (colon == std::string::npos) throw UsageError("target '" + item + "' is not of the form t:var");
    std::size_t t = 0;
    try {
      std::size_t pos = 0;
      t = std::stoul(item.substr(0, colon), &pos);
      if (pos != colon) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("target '" + item + "' has a bad slice index");
    }
    auto v = m.find(item.substr(colon + 1));
    if (!v) throw UsageError("target '" + item + "' names an unknown variable");
    if (t > last) throw UsageError("target '" + item + "' is beyond the last slice " + std::to_string(last));
    out.push_back({t, *v});
  }
  return out;
}

int cmd_smooth(const Config& c) {
  dpn::ModelSeries s = open_session(c, [](std::size_t) {});
  Emitter out(s.model(), c.format == "csv");
  auto targets = parse_targets(s.model(), c.targets, s.window().t_high());
  for (const auto& [t, v] : targets) out.emit(t, v, "smoothed", dpn::query_smoothed(s, t, v).values(), std::nullopt);
  finish(c, s);
  return kOk;
}

int cmd_forecast(const Config& c) {
  dpn::ModelSeries s = open_session(c, [](std::size_t) {});
  dpn::ForecastQuery q;
  q.horizon = c.horizon;
  q.method = dpn::parse_forecast_method(c.method);
  q.samples = c.samples;
  q.seed = c.seed;
  if (!c.targets.empty()) {
    std::stringstream ss(c.targets);
    std::string item;
    while (std::getline(ss, item, ',')) {
      auto colon = item.find(':');
      if (colon == std::string::npos) throw UsageError("target '" + item + "' is not of the form offset:var");
      std::size_t k = 0;
      try {
        k = std::stoul(item.substr(0, colon));
      } catch (const std::exception&) {
        throw UsageError("target '" + item + "' has a bad offset");
      }
      auto v = s.model().find(item.substr(colon + 1));
      if (!v) throw UsageError("target '" + item + "' names an unknown variable");
      if (k < 1 || k > c.horizon) throw UsageError("target '" + item + "' offset must be in 1..horizon");
      q.targets.push_back({k, *v});
    }
  }
  if (!s.window().calibrated()) s.propagate();
  dpn::ForecastResult r = dpn::forecast(s.window(), q);
  Emitter out(s.model(), c.format == "csv");
  const std::string mode = "forecast:" + dpn::to_string(r.method);
  for (const auto& item : r.items) out.emit(item.t, item.target.var, mode, item.p, std::nullopt, item.std_error, &r);
  finish(c, s);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Discrete dynamic probabilistic network inference"};
  app.require_subcommand(1);
  Config c;

  auto* validate = app.add_subcommand("validate", "Check a model file");
  validate->add_option("MODEL", c.model_path, "model JSON")->required();

  auto add_session = [&](CLI::App* sub, bool allow_load) {
    sub->add_option("MODEL", c.model_path, "model JSON");
    sub->add_option("EVIDENCE", c.evidence_path, "evidence JSON lines");
    sub->add_option("-w,--width", c.width, "window width in slices")->check(CLI::PositiveNumber);
    sub->add_option("--heuristic", c.heuristic, "min-weight, min-fill or given-order")
        ->check(CLI::IsMember({"min-weight", "min-fill", "given-order"}));
    sub->add_option("--format", c.format, "json-lines or csv")->check(CLI::IsMember({"json-lines", "csv"}));
    sub->add_option("--slices", c.slices, "process at least this many slices");
    sub->add_option("--save-series", c.save_path, "write the session to a binary series file");
    if (allow_load) sub->add_option("--load-series", c.load_path, "resume from a binary series file");
  };

  auto* filter = app.add_subcommand("filter", "Filtered marginals per slice");
  add_session(filter, false);

  auto* smooth = app.add_subcommand("smooth", "Smoothed marginals after all evidence");
  add_session(smooth, true);
  smooth->add_option("--targets", c.targets, "comma-separated t:var list (default: everything)");

  auto* forecast = app.add_subcommand("forecast", "Distributions beyond the window");
  add_session(forecast, true);
  forecast->add_option("--horizon", c.horizon, "slices ahead")->check(CLI::PositiveNumber);
  forecast->add_option("--method", c.method, "exact, mc or linear")->check(CLI::IsMember({"exact", "mc", "linear"}));
  forecast->add_option("--samples", c.samples, "Monte Carlo trajectories");
  forecast->add_option("--seed", c.seed, "Monte Carlo seed");
  forecast->add_option("--targets", c.targets, "comma-separated offset:var list (default: everything)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  try {
    if (validate->parsed()) return cmd_validate(c);
    if (filter->parsed()) return cmd_filter(c);
    if (smooth->parsed()) return cmd_smooth(c);
    return cmd_forecast(c);
  } catch (const dpn::IoError& e) {
    std::cerr << "dpn: i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const UsageError& e) {
    std::cerr << "dpn: " << e.what() << '\n';
    return kValidation;
  } catch (const dpn::FormatError& e) {
    std::cerr << "dpn: " << e.what() << '\n';
    return kValidation;
  } catch (const dpn::ModelError& e) {
    std::cerr << "dpn: " << e.what() << '\n';
    return kValidation;
  } catch (const dpn::Error& e) {
    std::cerr << "dpn: " << e.what() << '\n';
    return kInference;
  }
}
