#include "sdeadapt/cli.hpp"

#include "sdeadapt/problems.hpp"
#include "sdeadapt/selftest.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <regex>
#include <sstream>

namespace sdeadapt::cli {

namespace {

constexpr const char* kVersion = "0.1.0";

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::optional<int> dyadic_exponent(const std::string& text) {
  static const std::regex pattern(R"(^2\^\(?([+-]?\d{1,4})\)?$)");
  std::smatch m;
  if (!std::regex_match(text, m, pattern)) return std::nullopt;
  return std::stoi(m[1].str());
}

std::string iso_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string ladder_text(const std::vector<double>& ladder) {
  std::string s;
  for (std::size_t k = 0; k < ladder.size(); ++k) {
    if (k) s += ',';
    s += format_number(ladder[k]);
  }
  return s;
}

/// Problem, envelope and scheme after applying command-line overrides.
struct Setup {
  ProblemCatalogEntry entry;
  GrowthEnvelope env;
  SchemeSpec scheme;
  CsvMetadata meta;
  double horizon = 1.0;
  std::size_t paths = 1000;
  double delta_min = 0.0;
};

Setup prepare(const RunConfig& cfg, const std::string& command_name) {
  Setup s;
  if (cfg.problem == "ginzburg-landau" && cfg.x0) {
    s.entry = ginzburg_landau(*cfg.x0);
  } else {
    s.entry = problem_by_name(cfg.problem);
    if (cfg.x0) {
      s.entry.system.initial_state = Vector::Constant(static_cast<Eigen::Index>(s.entry.system.state_dim), *cfg.x0);
      s.entry.system.exact_solution = nullptr;
    }
  }
  s.env = s.entry.default_env;
  s.scheme = scheme_from_name(cfg.scheme);
  auto& meta = s.meta.entries;
  meta.emplace_back("tool", std::string("sdeadapt ") + kVersion);
  meta.emplace_back("generated", iso_timestamp());
  meta.emplace_back("command", command_name);
  meta.emplace_back("problem", s.entry.name);
  meta.emplace_back("scheme", s.scheme.name());

  s.horizon = cfg.horizon.value_or(s.entry.default_horizon);
  if (!cfg.horizon) {
    s.meta.notes.push_back("assumption: horizon T=" + format_number(s.horizon) +
                           " is the catalog default for this problem");
  }
  s.paths = cfg.paths.value_or(1000);
  if (!cfg.paths) s.meta.notes.push_back("assumption: paths M=1000 (default)");
  if (s.paths == 0) throw std::invalid_argument("--paths must be at least 1");
  if (!(s.horizon > 0.0) || !std::isfinite(s.horizon)) {
    throw std::invalid_argument("--horizon must be positive");
  }

  s.delta_min = cfg.delta_min.value_or(s.entry.default_cfg.delta_min);
  if (!(s.delta_min > 0.0)) throw std::invalid_argument("--delta-min must be positive");

  if (s.scheme.kind == SchemeKind::FsTem) {
    s.scheme.gamma = cfg.gamma;
    s.scheme.K = cfg.K;
    if (!cfg.gamma) s.meta.notes.push_back("assumption: FS-TEM gamma=1/3 (default)");
  } else if (s.scheme.kind == SchemeKind::FsTaem) {
    s.scheme.gamma = cfg.gamma;
    if (!cfg.gamma) s.meta.notes.push_back("assumption: FS-TaEM gamma=1/2 (default)");
  } else {
    if (cfg.gamma) s.env.gamma = *cfg.gamma;
    if (cfg.K) s.env.K = *cfg.K;
    if (!cfg.gamma && s.scheme.is_adaptive()) {
      s.meta.notes.push_back("assumption: truncation gamma=" + format_number(s.env.gamma) +
                             " (default)");
    }
  }
  if (!(s.env.gamma > 0.0) || !(s.env.K > 0.0)) {
    throw std::invalid_argument("--gamma and --K must be positive");
  }
  s.scheme.adaptive.delta_min = s.delta_min;
  s.scheme.adaptive.delta_max = s.entry.default_cfg.delta_max;

  meta.emplace_back("envelope", s.env.description);
  meta.emplace_back("K", format_number(s.env.K));
  meta.emplace_back("gamma", format_number(s.env.gamma));
  meta.emplace_back("delta_min", format_number(s.delta_min));
  meta.emplace_back("paths", std::to_string(s.paths));
  meta.emplace_back("horizon", format_number(s.horizon));
  meta.emplace_back("seed", std::to_string(cfg.seed));
  meta.emplace_back("initial_state", [&] {
    std::string v;
    for (Eigen::Index i = 0; i < s.entry.system.initial_state.size(); ++i) {
      if (i) v += ' ';
      v += format_number(s.entry.system.initial_state[i]);
    }
    return v;
  }());
  return s;
}

ReferenceSpec resolve_reference(const RunConfig& cfg, const Setup& s) {
  ReferenceSpec ref;
  ref.delta_min = s.delta_min;
  std::string text = cfg.reference;
  if (text == "auto") text = s.entry.system.exact_solution ? "closed-form" : "as-bem";
  if (text == "closed-form") {
    if (!s.entry.system.exact_solution) {
      throw ConfigurationError("problem '" + s.entry.name + "' has no closed-form solution");
    }
    ref.kind = ReferenceSpec::Kind::ClosedForm;
    return ref;
  }
  if (text == "as-bem" || text.rfind("as-bem:", 0) == 0) {
    ref.kind = ReferenceSpec::Kind::AsBem;
    ref.ref_delta_max =
        text == "as-bem" ? kDefaultReferenceDeltaMax : parse_step(text.substr(7));
    if (!(ref.ref_delta_max > 0.0) || ref.ref_delta_max > 1.0 || ref.ref_delta_max < ref.delta_min) {
      throw std::invalid_argument("reference step must lie in [delta_min, 1]");
    }
    return ref;
  }
  throw std::invalid_argument("unknown reference '" + cfg.reference + "'");
}

void write_output(const RunConfig& cfg, std::ostream& out, const std::string& body) {
  if (cfg.output.empty()) {
    out << body;
    out.flush();
    return;
  }
  std::ofstream file(cfg.output, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot open '" + cfg.output + "' for writing");
  file << body;
  file.flush();
  if (!file) throw IoError("failed writing '" + cfg.output + "'");
}

void add_runtime_notes(CsvMetadata& meta, const std::vector<RmseRow>& rows) {
  for (const RmseRow& row : rows) {
    meta.notes.push_back("runtime delta_max=" + format_number(row.delta_max) +
                         ": scheme_seconds=" + format_number(row.runtime_seconds) +
                         " total_seconds=" + format_number(row.total_runtime_seconds));
  }
}

void add_row_notes(CsvMetadata& meta, const ConvergenceReport& report) {
  for (const RmseRow& row : report.rows) {
    if (!std::isnan(row.fixed_step)) {
      meta.notes.push_back("delta_max=" + format_number(row.delta_max) +
                           " used fixed step " + format_number(row.fixed_step));
    }
    for (const std::string& w : row.warnings) {
      meta.notes.push_back("warning delta_max=" + format_number(row.delta_max) + ": " + w);
    }
  }
  for (const std::string& w : report.warnings) meta.notes.push_back("warning: " + w);
}

int run_study(const RunConfig& cfg, std::ostream& out, const std::string& name,
              std::vector<double> ladder, bool with_fit, Setup s) {
  if (ladder.empty()) ladder = {s.scheme.is_adaptive() ? s.entry.default_cfg.delta_max : 0x1p-8};
  if (cfg.delta_max.empty()) {
    s.meta.notes.push_back("assumption: delta_max=" + ladder_text(ladder) + " (default)");
  }
  if (!with_fit && ladder.size() != 1) {
    throw std::invalid_argument(name + " takes a single --delta-max; use convergence for a ladder");
  }
  StudyConfig study;
  study.paths = s.paths;
  study.horizon = s.horizon;
  study.seed = cfg.seed;
  study.reference = resolve_reference(cfg, s);
  study.threads = cfg.threads;
  study.match_adaptive_step = cfg.match_adaptive_step;
  s.meta.entries.emplace_back("delta_max", ladder_text(ladder));
  s.meta.entries.emplace_back("reference", study.reference.describe());
  if (study.match_adaptive_step) {
    s.meta.entries.emplace_back("fixed_step_rule", "mean step of the paired ats-tem run");
  }

  const ConvergenceReport report =
      convergence_study(s.scheme, s.entry.system, s.env, ladder, s.delta_min, study, s.entry.name);
  add_row_notes(s.meta, report);
  add_runtime_notes(s.meta, report.rows);

  std::ostringstream body;
  emit_csv(body, report.rows, s.meta, with_fit ? &report.fit : nullptr, cfg.timing);
  write_output(cfg, out, body.str());
  return 0;
}

int run_simulate(const RunConfig& cfg, std::ostream& out, Setup s) {
  if (cfg.delta_max.size() > 1) throw std::invalid_argument("simulate takes a single --delta-max");
  if (!cfg.delta_max.empty()) {
    if (s.scheme.is_adaptive()) {
      s.scheme.adaptive.delta_max = cfg.delta_max.front();
    } else {
      s.scheme.step = cfg.delta_max.front();
    }
  } else if (!s.scheme.is_adaptive()) {
    s.scheme.step = cfg.step.value_or(0x1p-8);
  }
  s.scheme.validate();
  s.meta.entries.emplace_back(
      "delta_max", format_number(s.scheme.is_adaptive() ? s.scheme.adaptive.delta_max : s.scheme.step));
  s.meta.entries.emplace_back("path", "index 0 of the seed");

  BrownianPath path(derive_seed(cfg.seed, 0), s.entry.system.noise_dim);
  const Trajectory traj = simulate(s.scheme, s.entry.system, s.env, path, s.horizon);

  std::ostringstream body;
  for (const auto& [k, v] : s.meta.entries) body << "# " << k << ": " << v << '\n';
  body << "# steps: " << traj.step_count() << '\n';
  body << "# diverged: " << (traj.diverged ? "true" : "false") << '\n';
  if (traj.step_count() > 0) {
    body << "# mean_step: " << format_number(mean_step(traj)) << '\n';
    body << "# backstop_fraction: " << format_number(backstop_fraction(traj)) << '\n';
  }
  if (cfg.paths) {
    const MeanStepEstimate est = mean_step_study(s.scheme, s.entry.system, s.env, s.paths,
                                                 s.horizon, cfg.seed, cfg.threads);
    body << "# mean_step_over_paths: " << format_number(est.mean_step) << '\n';
    body << "# backstop_fraction_over_paths: " << format_number(est.backstop_fraction) << '\n';
    body << "# diverged_fraction_over_paths: " << format_number(est.diverged_fraction) << '\n';
  }
  for (const std::string& n : s.meta.notes) body << "# note: " << n << '\n';
  body << "t,step,backstop";
  for (std::size_t i = 0; i < s.entry.system.state_dim; ++i) body << ",x" << i;
  body << '\n';
  for (std::size_t n = 0; n < traj.times.size(); ++n) {
    body << format_number(traj.times[n]) << ',';
    body << (n == 0 ? "nan" : format_number(traj.steps[n - 1])) << ',';
    body << (n == 0 ? "" : (traj.backstop_flags[n - 1] ? "1" : "0"));
    for (Eigen::Index i = 0; i < traj.states[n].size(); ++i) {
      body << ',' << format_number(traj.states[n][i]);
    }
    body << '\n';
  }
  write_output(cfg, out, body.str());
  return 0;
}

int run_probe_divergence(const RunConfig& cfg, std::ostream& out) {
  RunConfig local = cfg;
  if (!cfg.x0 && cfg.problem == "ginzburg-landau") local.x0 = 2.0;
  if (!cfg.horizon) local.horizon = 10.0;
  if (!cfg.paths) local.paths = 500;
  local.scheme = "em";
  Setup s = prepare(local, "probe-divergence");
  const double h = cfg.step.value_or(0.3704);
  const double delta_max = cfg.delta_max.empty() ? 0.4 : cfg.delta_max.front();
  const double delta_min = cfg.delta_min.value_or(0x1p-12);
  if (!cfg.horizon) s.meta.notes.push_back("assumption: horizon T=10 (probe default)");
  if (!cfg.paths) s.meta.notes.push_back("assumption: paths M=500 (probe default)");
  if (!cfg.x0 && cfg.problem == "ginzburg-landau") {
    s.meta.notes.push_back("assumption: x0=2 (probe default)");
  }
  if (!(h > 0.0)) throw std::invalid_argument("--step must be positive");

  AdaptiveConfig ats_cfg;
  ats_cfg.delta_max = delta_max;
  ats_cfg.delta_min = delta_min;
  ats_cfg.validate();
  const double em_fraction =
      divergence_probe(s.entry.system, h, s.paths, s.horizon, cfg.seed, kDivergenceGuard, cfg.threads);
  const double ats_fraction = diverged_fraction(SchemeSpec::ats(ats_cfg), s.entry.system, s.env,
                                                s.paths, s.horizon, cfg.seed, kDivergenceGuard,
                                                cfg.threads);

  std::ostringstream body;
  for (const auto& [k, v] : s.meta.entries) {
    if (k == "scheme" || k == "delta_min") continue;
    body << "# " << k << ": " << v << '\n';
  }
  body << "# guard: " << format_number(kDivergenceGuard) << '\n';
  for (const std::string& n : s.meta.notes) body << "# note: " << n << '\n';
  body << "scheme,problem,step,delta_max,delta_min,paths,horizon,seed,diverged_fraction\n";
  const std::string common_tail = std::to_string(s.paths) + ',' + format_number(s.horizon) + ',' +
                                  std::to_string(cfg.seed) + ',';
  body << "em," << s.entry.name << ',' << format_number(h) << ",nan,nan," << common_tail
       << format_number(em_fraction) << '\n';
  body << "ats-tem," << s.entry.name << ",nan," << format_number(delta_max) << ','
       << format_number(delta_min) << ',' << common_tail << format_number(ats_fraction) << '\n';
  write_output(cfg, out, body.str());
  return 0;
}

int run_selftest_command(const RunConfig& cfg, std::ostream& out) {
  const std::vector<CheckResult> results = run_selftest(cfg.seed);
  std::ostringstream body;
  int failures = 0;
  for (const CheckResult& r : results) {
    body << (r.passed ? "PASS " : "FAIL ") << r.name;
    if (!r.detail.empty()) body << ": " << r.detail;
    body << '\n';
    if (!r.passed) ++failures;
  }
  body << (failures == 0 ? "selftest: all checks passed\n"
                         : "selftest: " + std::to_string(failures) + " check(s) failed\n");
  write_output(cfg, out, body.str());
  return failures == 0 ? 0 : 1;
}

std::string command_name(Command c) {
  switch (c) {
    case Command::Simulate: return "simulate";
    case Command::Rmse: return "rmse";
    case Command::Convergence: return "convergence";
    case Command::Table1: return "table1";
    case Command::ProbeDivergence: return "probe-divergence";
    case Command::Selftest: return "selftest";
  }
  return "?";
}

}  // namespace

double parse_step(const std::string& raw) {
  const std::string text = trim(raw);
  if (const auto k = dyadic_exponent(text)) {
    if (*k < -1074 || *k > 1023) throw std::invalid_argument("exponent out of range in '" + raw + "'");
    return std::ldexp(1.0, *k);
  }
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("not a number: '" + raw + "'");
  }
  if (used != text.size() || !std::isfinite(v)) {
    throw std::invalid_argument("not a number: '" + raw + "'");
  }
  return v;
}

std::vector<double> parse_ladder(const std::string& raw) {
  const std::string text = trim(raw);
  std::vector<double> ladder;
  const auto dots = text.find("..");
  if (dots != std::string::npos) {
    const auto a = dyadic_exponent(trim(text.substr(0, dots)));
    const auto b = dyadic_exponent(trim(text.substr(dots + 2)));
    if (!a || !b) throw std::invalid_argument("range ends must be of the form 2^k: '" + raw + "'");
    for (int k = std::max(*a, *b); k >= std::min(*a, *b); --k) ladder.push_back(std::ldexp(1.0, k));
  } else {
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) ladder.push_back(parse_step(item));
  }
  if (ladder.empty()) throw std::invalid_argument("empty step list");
  for (double v : ladder) {
    if (!(v > 0.0)) throw std::invalid_argument("steps must be positive: '" + raw + "'");
  }
  std::sort(ladder.begin(), ladder.end(), std::greater<>());
  if (std::adjacent_find(ladder.begin(), ladder.end()) != ladder.end()) {
    throw std::invalid_argument("duplicate step in '" + raw + "'");
  }
  return ladder;
}

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

void emit_csv(std::ostream& out, const std::vector<RmseRow>& rows, const CsvMetadata& meta,
              const LinearFit* fit, bool timing) {
  for (const auto& [k, v] : meta.entries) out << "# " << k << ": " << v << '\n';
  out << kCsvHeader << '\n';
  for (const RmseRow& r : rows) {
    out << r.scheme << ',' << r.problem << ',' << format_number(r.delta_max) << ','
        << format_number(r.delta_min) << ',' << format_number(r.gamma) << ','
        << format_number(r.K) << ',' << r.paths << ',' << format_number(r.horizon) << ','
        << r.seed << ',' << format_number(r.rmse) << ',' << format_number(r.rmse_stderr) << ','
        << format_number(r.mean_step) << ',' << format_number(r.backstop_fraction) << ','
        << format_number(r.diverged_fraction) << ','
        << (timing ? format_number(r.runtime_seconds) : std::string("nan")) << '\n';
  }
  if (fit) {
    if (fit->fitted) {
      out << "# slope: " << format_number(fit->slope) << '\n';
      out << "# intercept: " << format_number(fit->intercept) << '\n';
      out << "# r_squared: " << format_number(fit->r_squared) << '\n';
      out << "# fit_points: " << fit->points << '\n';
    } else {
      out << "# fit: none (fewer than two usable rows)\n";
    }
  }
  for (const std::string& n : meta.notes) out << "# note: " << n << '\n';
}

void emit_csv(const std::string& path, const std::vector<RmseRow>& rows, const CsvMetadata& meta,
              const LinearFit* fit, bool timing) {
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot open '" + path + "' for writing");
  emit_csv(file, rows, meta, fit, timing);
  file.flush();
  if (!file) throw IoError("failed writing '" + path + "'");
}

int dispatch(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  try {
    switch (cfg.command) {
      case Command::Selftest:
        return run_selftest_command(cfg, out);
      case Command::ProbeDivergence:
        return run_probe_divergence(cfg, out);
      case Command::Simulate:
        return run_simulate(cfg, out, prepare(cfg, command_name(cfg.command)));
      case Command::Rmse:
        return run_study(cfg, out, "rmse", cfg.delta_max, false, prepare(cfg, command_name(cfg.command)));
      case Command::Convergence:
        return run_study(cfg, out, "convergence", cfg.delta_max, true, prepare(cfg, command_name(cfg.command)));
      case Command::Table1: {
        RunConfig local = cfg;
        local.problem = "heston-3-2";
        if (!cfg.delta_min) local.delta_min = 0x1p-18;
        if (cfg.reference == "auto") local.reference = "as-bem:2^-12";
        Setup s = prepare(local, command_name(cfg.command));
        std::vector<double> ladder = cfg.delta_max.empty() ? parse_ladder("2^-2..2^-11") : cfg.delta_max;
        RunConfig marked = local;
        marked.delta_max = ladder;
        return run_study(marked, out, "table1", ladder, true, std::move(s));
      }
    }
  } catch (const IoError& e) {
    err << "sdeadapt: " << e.what() << '\n';
    return 3;
  } catch (const ImplicitSolveError& e) {
    err << "sdeadapt: implicit solve failed: " << e.what() << '\n';
    return 4;
  } catch (const NumericError& e) {
    err << "sdeadapt: numeric failure: " << e.what() << '\n';
    return 4;
  } catch (const ConfigurationError& e) {
    err << "sdeadapt: invalid configuration: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    err << "sdeadapt: invalid argument: " << e.what() << '\n';
    return 2;
  } catch (const std::domain_error& e) {
    err << "sdeadapt: invalid argument: " << e.what() << '\n';
    return 2;
  }
  return 2;
}

int parse_and_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"sdeadapt: adaptive time-stepping Monte Carlo for SDEs with superlinear coefficients"};
  app.require_subcommand(1, 1);

  RunConfig cfg;
  std::string delta_max;
  std::string delta_min;
  std::string gamma;
  std::string K;
  std::string step;
  std::string threads = "1";
  std::optional<std::size_t> paths;
  std::optional<double> horizon;
  std::optional<double> x0;

  struct Sub {
    const char* name;
    const char* help;
    Command command;
  };
  const Sub subs[] = {
      {"simulate", "Run one path and print the trajectory", Command::Simulate},
      {"rmse", "RMSE of one scheme at one delta_max", Command::Rmse},
      {"convergence", "RMSE over a delta_max ladder with a log2-log2 fit", Command::Convergence},
      {"table1", "Heston 3/2 ATS-TEM error ladder 2^-2..2^-11", Command::Table1},
      {"probe-divergence", "Diverged-path fraction of classical EM vs ATS-TEM", Command::ProbeDivergence},
      {"selftest", "Run the fast invariant checks", Command::Selftest},
  };
  std::vector<std::pair<CLI::App*, Command>> registered;
  for (const Sub& sub : subs) {
    CLI::App* a = app.add_subcommand(sub.name, sub.help);
    registered.emplace_back(a, sub.command);
    a->add_option("--problem", cfg.problem, "stiff-cubic | ginzburg-landau | heston-3-2 | lorenz");
    a->add_option("--scheme", cfg.scheme,
                  "ats-tem | ats-tamed2 | ats-tamed1 | em | fs-tem | fs-taem | fs-bem | as-bem");
    a->add_option("--delta-max", delta_max, "value, list a,b,c, or dyadic range 2^-11..2^-7");
    a->add_option("--delta-min", delta_min, "step floor, e.g. 2^-20");
    a->add_option("--gamma", gamma, "truncation or taming exponent");
    a->add_option("--K", K, "truncation constant");
    a->add_option("--paths", paths, "Monte Carlo paths M");
    a->add_option("--horizon", horizon, "terminal time T");
    a->add_option("--seed", cfg.seed, "base seed");
    a->add_option("--reference", cfg.reference, "auto | closed-form | as-bem | as-bem:<step>");
    a->add_option("--out", cfg.output, "output file (default stdout)");
    a->add_option("--threads", threads, "worker threads or 'auto'");
    a->add_option("--x0", x0, "initial state (every component)");
    a->add_option("--step", step, "fixed step for probe-divergence");
    a->add_flag("--match-adaptive-step", cfg.match_adaptive_step,
                "fixed-step schemes use the mean step of the paired ATS-TEM run");
    a->add_flag("--timing", cfg.timing, "write measured runtimes into the runtime_seconds column");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "sdeadapt: " << e.what() << '\n' << app.help();
    return 2;
  }

  try {
    for (const auto& [a, c] : registered) {
      if (a->parsed()) cfg.command = c;
    }
    if (!delta_max.empty()) cfg.delta_max = parse_ladder(delta_max);
    if (!delta_min.empty()) cfg.delta_min = parse_step(delta_min);
    if (!gamma.empty()) cfg.gamma = parse_step(gamma);
    if (!K.empty()) cfg.K = parse_step(K);
    if (!step.empty()) cfg.step = parse_step(step);
    cfg.paths = paths;
    cfg.horizon = horizon;
    cfg.x0 = x0;
    if (const char* env = std::getenv("SDE_ADAPT_THREADS"); env && *env) threads = env;
    if (threads == "auto") {
      cfg.threads = 0;
    } else {
      std::size_t used = 0;
      const long v = std::stol(threads, &used);
      if (used != threads.size() || v < 0 || v > 4096) throw std::invalid_argument("bad thread count");
      cfg.threads = static_cast<unsigned>(v);
    }
    if (cfg.command != Command::Selftest && cfg.command != Command::Table1 &&
        cfg.command != Command::ProbeDivergence) {
      (void)problem_by_name(cfg.problem);
    }
    (void)scheme_from_name(cfg.scheme);
  } catch (const std::exception& e) {
    err << "sdeadapt: " << e.what() << '\n' << app.help();
    return 2;
  }
  return dispatch(cfg, out, err);
}

int parse_and_dispatch(int argc, const char* const* argv) {
  return parse_and_dispatch(argc, argv, std::cout, std::cerr);
}

}  // namespace sdeadapt::cli
