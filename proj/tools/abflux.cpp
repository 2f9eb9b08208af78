// abflux: command-line front end for the four studies.
//
//   abflux classical  --phi 0.5 --q0 1,0 --p0 0,1 --s-end 1e4 --out run
//   abflux reduced    --c1 1 --c2 0.5 --s-max 1000 --crosscheck --out red
//   abflux spectral   --s 0,0.5,1,2 --levels 64 --check all --out spec
//   abflux adiabatic  --epsilons 0.2,0.1,0.05,0.025 --out adi
//
// Every command writes <out>.csv and <out>.json.
// Exit codes: 0 ok, 1 numerical failure, 2 invalid input, 3 puncture hit,
// 4 no convergence, 5 a requested check failed.

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <iostream>
#include <string>
#include <vector>

#include "abflux/adiabatic.hpp"
#include "abflux/classical.hpp"
#include "abflux/io.hpp"
#include "abflux/reduced.hpp"
#include "abflux/spectral.hpp"

using namespace abflux;
using io::Json;

namespace {

enum Exit { kOk = 0, kNumeric = 1, kInvalid = 2, kPuncture = 3, kNoConvergence = 4, kCheck = 5 };

struct ClassicalArgs {
  double phi = 0.5;
  std::vector<double> q0{1.0, 0.0};
  std::vector<double> p0{0.0, 1.5};
  double s_start = 0.0;
  double s_end = 100.0;
  std::optional<double> s_init;
  double tol = 1e-12;
  int samples = 1001;
  double r_guard = 1e-8;
  std::string out = "classical";
};

struct ReducedArgs {
  double phi = 0.5;
  double c1 = 1.0;
  double c2 = 0.5;
  double s_start = 10.0;
  double s_max = 1000.0;
  double picard_tol = 1e-10;
  int quad_nodes = 16;
  double panel_width = 1.0;
  int max_iters = 200;
  int samples = 1001;
  bool zero_forcing = false;
  bool crosscheck = false;
  double crosscheck_end = 100.0;
  std::string out = "reduced";
};

struct SpectralArgs {
  std::vector<std::string> s{"0"};  // config files split comma lists into items
  int levels = 64;
  std::string check = "none";
  std::string out = "spectral";
};

struct AdiabaticArgs {
  double s_end = 2.0;
  std::vector<double> epsilons{0.2, 0.1, 0.05, 0.025};
  int levels = 64;
  double ode_tol = 1e-10;
  double grid_step = 0.05;
  bool zero_coupling = false;
  std::string out = "adiabatic";
};

std::vector<double> linspace(double a, double b, int n) {
  if (n <= 1 || a == b) return {a};
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = a + (b - a) * double(i) / (n - 1);
  v.back() = b;
  return v;
}

// "0,0.5,1" or "start:stop:step"
std::vector<double> parse_s_list(const std::string& text) {
  std::vector<double> out;
  if (text.find(':') != std::string::npos) {
    std::vector<double> part;
    std::stringstream ss(text);
    std::string cell;
    while (std::getline(ss, cell, ':')) part.push_back(std::stod(cell));
    if (part.size() != 3 || !(part[2] > 0.0) || part[1] < part[0]) {
      throw DomainError("--s: expected start:stop:step with step > 0");
    }
    const int n = static_cast<int>(std::floor((part[1] - part[0]) / part[2] + 1e-9));
    for (int k = 0; k <= n; ++k) out.push_back(part[0] + k * part[2]);
  } else {
    std::stringstream ss(text);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(std::stod(cell));
  }
  if (out.empty()) throw DomainError("--s: no values");
  for (double s : out) {
    if (!(s >= 0.0)) throw DomainError("--s: values must be >= 0");
  }
  return out;
}

// ---------------------------------------------------------------------------

int run_classical(const ClassicalArgs& a) {
  const classical::FluxParams params{a.phi};
  params.require_positive();
  if (a.q0.size() != 2 || a.p0.size() != 2) throw DomainError("--q0/--p0 need two values");
  if (!(a.s_end >= a.s_start)) throw DomainError("--s-end must be >= --s-start");
  if (!(a.tol >= 1e-13 && a.tol <= 1e-6)) throw DomainError("--tol must lie in [1e-13, 1e-6]");
  if (a.samples < 1) throw DomainError("--samples must be >= 1");
  if (!(a.r_guard > 0.0)) throw DomainError("--r-guard must be > 0");
  const double s_init = a.s_init.value_or(a.s_start);
  if (s_init < a.s_start || s_init > a.s_end) {
    throw DomainError("--s-init must lie in [s-start, s-end]");
  }
  const classical::PhaseState initial{s_init, {a.q0[0], a.q0[1]}, {a.p0[0], a.p0[1]}};
  classical::require_off_puncture(initial.q, "classical");

  std::vector<classical::PhaseState> states;
  std::vector<double> winding;
  std::optional<double> puncture;
  classical::Trajectory backward, forward;
  const auto times = linspace(a.s_start, a.s_end, a.samples);
  std::vector<double> back_times, fwd_times;
  for (double t : times) (t < s_init ? back_times : fwd_times).push_back(t);
  std::reverse(back_times.begin(), back_times.end());

  classical::IntegrateOptions opt;
  opt.tol = a.tol;
  opt.r_guard = a.r_guard;
  if (!back_times.empty()) {
    opt.sample_times = back_times;
    backward = classical::integrate(initial, a.s_start, params, opt);
    if (backward.puncture_time) puncture = backward.puncture_time;
    for (std::size_t i = backward.states.size(); i-- > 0;) {
      states.push_back(backward.states[i]);
      winding.push_back(backward.winding[i]);
    }
  }
  if (!fwd_times.empty() && !puncture) {
    opt.sample_times = fwd_times;
    forward = classical::integrate(initial, a.s_end, params, opt);
    if (forward.puncture_time) puncture = forward.puncture_time;
    states.insert(states.end(), forward.states.begin(), forward.states.end());
    winding.insert(winding.end(), forward.winding.begin(), forward.winding.end());
  }

  io::CsvTable table;
  table.header = {"s", "qx", "qy", "px", "py", "cx", "cy", "H", "K", "I1"};
  const double k_ref = classical::hamiltonian(initial, params) -
                       params.phi * classical::arg(initial.q);
  double k_drift = 0.0;
  for (std::size_t i = 0; i < states.size(); ++i) {
    const auto& st = states[i];
    const auto d = classical::to_guiding_center(st, params);
    const double k = d.I2 - params.phi * winding[i];
    k_drift = std::max(k_drift, std::abs(k - k_ref));
    table.rows.push_back({st.s, st.q.x, st.q.y, st.p.x, st.p.y, d.c.x, d.c.y, d.I2, k, d.I1});
  }

  Json summary;
  if (states.size() >= 10) {
    summary["s0"] = io::number(classical::center_energy_fit(states, params).s0);
  } else {
    summary["s0"] = nullptr;
  }
  summary["a0"] = nullptr;
  summary["drift_angle"] = nullptr;
  summary["H_limit"] = nullptr;
  summary["K_drift"] = io::number(k_drift);
  summary["puncture_hit"] = puncture.has_value();
  if (puncture) summary["puncture_time"] = io::number(*puncture);
  if (!puncture && !forward.states.empty() && forward.states.back().s >= 1e3) {
    try {
      const auto fa = classical::asymptotics_forward(forward, params);
      summary["a0"] = io::number(fa.a0);
      summary["drift_angle"] = io::number(fa.drift_angle);
      summary["H_limit"] = io::number(fa.H_limit);
      summary["forward"] = {{"radius_ratio", io::number(fa.radius_ratio)},
                            {"energy_deviation", io::number(fa.energy_deviation)},
                            {"drift_residual", io::number(fa.drift_residual)},
                            {"tail_rel_std", io::number(fa.tail_rel_std)}};
    } catch (const NotConverged& e) {
      summary["forward"] = {{"error", e.what()}};
    }
  }
  if (!puncture && !backward.states.empty() && backward.states.back().s < 0.0) {
    const auto ba = classical::asymptotics_backward(backward, params);
    summary["backward"] = {{"s", io::number(ba.s)},
                           {"energy_ratio", io::number(ba.energy_ratio)},
                           {"radius_ratio", io::number(ba.radius_ratio)}};
  }
  io::write_csv(a.out + ".csv", table);
  io::write_json(a.out + ".json", summary);
  if (puncture) {
    std::cerr << "abflux classical: trajectory reached the puncture at s = "
              << io::format_double(*puncture) << '\n';
    return kPuncture;
  }
  return kOk;
}

int run_reduced(const ReducedArgs& a) {
  reduced::IntegralEqConfig cfg;
  cfg.s_max = a.s_max;
  cfg.quad_nodes = a.quad_nodes;
  cfg.panel_width = a.panel_width;
  cfg.picard_tol = a.picard_tol;
  cfg.max_iters = a.max_iters;
  cfg.c1 = a.c1;
  cfg.c2 = a.c2;
  cfg.zero_forcing = a.zero_forcing;
  cfg.validate(a.s_start);
  const classical::FluxParams params{a.phi};
  params.require_positive();
  if (a.samples < 2) throw DomainError("--samples must be >= 2");
  if (a.crosscheck && !(a.crosscheck_end > a.s_start)) {
    throw DomainError("--crosscheck-end must exceed --s-start");
  }

  const auto sol = reduced::picard_solve(cfg, a.phi, a.s_start);
  const auto pts = linspace(a.s_start, a.s_max, a.samples);
  const auto res = reduced::integral_equation_residual(sol, pts);
  io::CsvTable table;
  table.header = {"s", "x1", "x2", "residual1", "residual2"};
  double max_res = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto x = sol.evaluate(pts[i]);
    table.rows.push_back({pts[i], x.x1, x.x2, res[i].r1, res[i].r2});
    max_res = std::max({max_res, std::abs(res[i].r1), std::abs(res[i].r2)});
  }
  Json summary;
  summary["iters"] = sol.iterations;
  summary["tail_estimate"] = io::number(sol.tail_estimate);
  summary["c1_fit"] = nullptr;
  summary["c2_fit"] = nullptr;
  summary["a0"] = nullptr;
  if (a.s_max >= 1e3) {
    const auto k = reduced::extract_constants(sol);
    summary["c1_fit"] = io::number(k.c1);
    summary["c2_fit"] = io::number(k.c2);
    summary["a0"] = io::number(k.a0);
    summary["a0_bessel"] = io::number(k.a0_bessel);
    summary["degenerate_amplitude"] = k.degenerate;
  }
  summary["max_residual"] = io::number(max_res);
  Json inc = Json::array();
  for (double d : sol.increments) inc.push_back(io::number(d));
  summary["increments"] = inc;
  if (a.crosscheck) {
    const auto start = reduced::phase_from_reduced(sol.evaluate(a.s_start), params);
    classical::IntegrateOptions opt;
    opt.tol = 1e-12;
    opt.samples = 2001;
    const auto traj =
        classical::integrate(start, std::min(a.crosscheck_end, a.s_max), params, opt);
    if (traj.puncture_time) throw StepFailure("crosscheck trajectory hit the puncture");
    summary["crosscheck_deviation"] = io::number(reduced::crosscheck_ode(sol, traj, params));
  }
  io::write_csv(a.out + ".csv", table);
  io::write_json(a.out + ".json", summary);
  return kOk;
}

int run_spectral(const SpectralArgs& a) {
  std::string joined;
  for (const auto& part : a.s) joined += (joined.empty() ? "" : ",") + part;
  const auto s_values = parse_s_list(joined);
  const std::vector<std::string> known{"none", "oracle", "kernel", "coupling", "gamma", "all"};
  if (std::find(known.begin(), known.end(), a.check) == known.end()) {
    throw DomainError("--check must be one of none, oracle, kernel, coupling, gamma, all");
  }
  for (double s : s_values) spectral::SectorParams{s, a.levels}.validate();
  auto wants = [&](const char* name) { return a.check == "all" || a.check == name; };

  io::CsvTable table;
  table.header = {"s", "n", "E"};
  Json report;
  report["levels"] = a.levels;
  report["check"] = a.check;
  Json per_s = Json::array();
  bool passed = true;
  std::vector<double> m_table;
  const int half = a.levels / 2;
  for (double s : s_values) {
    const auto fam = spectral::analytic_spectrum({s, a.levels});
    for (int n = 0; n < a.levels; ++n) table.rows.push_back({s, double(n), fam.E[n]});
    Json entry;
    entry["s"] = io::number(s);
    if (wants("oracle")) {
      const auto fd = spectral::fd_spectrum({s, a.levels});
      const auto ov = spectral::fd_overlaps(fd, fam);
      double de = 0.0, worst_ov = 1.0;
      for (int n = 0; n < half; ++n) {
        de = std::max(de, std::abs(fd.E[n] - fam.E[n]));
        worst_ov = std::min(worst_ov, std::abs(ov[n]));
      }
      const double orth = fam.orthonormality_defect();
      const bool ok = de <= 1e-6 && worst_ov >= 1.0 - 1e-6 && orth <= 1e-10;
      entry["oracle"] = {{"max_eigenvalue_error", io::number(de)},
                         {"min_overlap", io::number(worst_ov)},
                         {"orthonormality_defect", io::number(orth)},
                         {"fd_refinement_change", io::number(fd.fd_change)},
                         {"pass", ok}};
      passed = passed && ok;
    }
    if (wants("kernel")) {
      const auto kb = spectral::kernel_bound_check(s);
      entry["kernel"] = {{"bound", io::number(kb.bound)},
                         {"norm", io::number(kb.norm)},
                         {"refined_norm", io::number(kb.refined_norm)},
                         {"tail_estimate", io::number(kb.tail_estimate)},
                         {"pass", kb.within_bound}};
      passed = passed && kb.within_bound;
    }
    if (wants("coupling") || wants("gamma")) {
      const auto cm = spectral::coupling_matrix(fam);
      if (wants("coupling")) {
        const double herm = spectral::hermiticity_defect(cm.P);
        const double diag = cm.P.diagonal().cwiseAbs().maxCoeff();
        const auto env = spectral::envelope_ratios(cm, half);
        std::vector<int> truncs{std::max(2, a.levels / 4), std::max(2, half), a.levels};
        truncs.erase(std::unique(truncs.begin(), truncs.end()), truncs.end());
        const auto cn = spectral::coupling_norm(cm, truncs);
        m_table.push_back(cn.extrapolated);
        const bool ok = herm <= 1e-10 && diag <= 1e-10 && env.min_ratio >= 0.1 &&
                        env.max_ratio <= 10.0;
        Json norms = Json::array();
        for (std::size_t i = 0; i < truncs.size(); ++i) {
          norms.push_back({{"N", truncs[i]}, {"norm", io::number(cn.norms[i])}});
        }
        entry["coupling"] = {{"hermiticity_defect", io::number(herm)},
                             {"max_diagonal", io::number(diag)},
                             {"envelope_min", io::number(env.min_ratio)},
                             {"envelope_max", io::number(env.max_ratio)},
                             {"norms", norms},
                             {"norm_extrapolated", io::number(cn.extrapolated)},
                             {"pass", ok}};
        passed = passed && ok;
      }
      if (wants("gamma")) {
        const auto g = spectral::gamma_potential(cm, fam);
        const double comm = spectral::commutator_residual(g, fam, cm);
        const double bound = spectral::gamma_bound(s, a.levels);
        const bool ok = comm <= 1e-10 && bound <= spectral::kGammaBoundConstant;
        entry["gamma"] = {{"commutator_residual", io::number(comm)},
                          {"hermiticity_defect", io::number(spectral::hermiticity_defect(g))},
                          {"norm_plus_derivative", io::number(bound)},
                          {"recorded_constant", io::number(spectral::kGammaBoundConstant)},
                          {"pass", ok}};
        passed = passed && ok;
      }
    }
    per_s.push_back(entry);
  }
  report["results"] = per_s;
  if (!m_table.empty()) {
    Json mt = Json::array();
    for (std::size_t i = 0; i < m_table.size(); ++i) {
      mt.push_back({{"s", io::number(s_values[i])}, {"M", io::number(m_table[i])}});
    }
    report["coupling_norm_table"] = mt;
    if (m_table.size() >= 2) {
      bool mono = true;
      for (std::size_t i = 1; i < m_table.size(); ++i) {
        mono = mono && !(s_values[i] > s_values[i - 1] && m_table[i] < m_table[i - 1]);
      }
      report["coupling_norm_nondecreasing"] = mono;
      passed = passed && mono;
    }
  }
  report["passed"] = passed;
  io::write_csv(a.out + ".csv", table);
  io::write_json(a.out + ".json", report);
  return passed ? kOk : kCheck;
}

int run_adiabatic(const AdiabaticArgs& a) {
  if (a.epsilons.empty()) throw DomainError("--epsilons needs at least one value");
  if (!(a.grid_step > 0.0)) throw DomainError("--grid-step must be > 0");
  adiabatic::AdiabaticConfig base;
  base.s_end = a.s_end;
  base.N = a.levels;
  base.ode_tol = a.ode_tol;
  base.zero_coupling = a.zero_coupling;
  const int n = std::max(1, static_cast<int>(std::ceil(a.s_end / a.grid_step - 1e-9)));
  base.s_grid = linspace(0.0, a.s_end, a.s_end > 0.0 ? n + 1 : 1);
  for (double e : a.epsilons) {
    auto c = base;
    c.epsilon = e;
    c.validate();
  }
  const auto res = adiabatic::adiabatic_sweep(a.epsilons, base);
  io::CsvTable table;
  table.header = {"epsilon", "s", "norm_I", "norm_C_minus_id", "norm_Uw_minus_Uad",
                  "unitarity_defect"};
  double max_defect = 0.0;
  for (const auto& r : res.rows) {
    table.rows.push_back({r.epsilon, r.s, r.norm_I, r.norm_C_minus_id, r.norm_Uw_minus_Uad,
                          r.unitarity_defect});
    max_defect = std::max(max_defect, r.unitarity_defect);
  }
  auto opt_json = [](const std::optional<double>& v) {
    return v ? io::number(*v) : Json(nullptr);
  };
  Json summary;
  summary["levels"] = a.levels;
  summary["s_end"] = io::number(a.s_end);
  summary["epsilons"] = a.epsilons;
  summary["exponents"] = {{"norm_I", opt_json(res.exponent_I)},
                          {"norm_C_minus_id", opt_json(res.exponent_C)},
                          {"norm_Uw_minus_Uad", opt_json(res.exponent_W)}};
  summary["window"] = {0.8, 1.2};
  const bool fitted = res.exponent_I && res.exponent_C && res.exponent_W;
  bool passed = max_defect <= adiabatic::kUnitarityLimit;
  if (fitted) {
    for (const auto& e : {res.exponent_I, res.exponent_C, res.exponent_W}) {
      passed = passed && *e >= 0.8 && *e <= 1.2;
    }
  }
  summary["scaling_checked"] = fitted;
  summary["max_unitarity_defect"] = io::number(max_defect);
  Json refine = Json::array();
  for (double c : res.refine_change) refine.push_back(io::number(c));
  summary["twisted_refine_change"] = refine;
  summary["passed"] = passed;
  io::write_csv(a.out + ".csv", table);
  io::write_json(a.out + ".json", summary);
  return passed ? kOk : kCheck;
}

template <class F>
int guarded(const char* name, F&& body) {
  try {
    return body();
  } catch (const DomainError& e) {
    std::cerr << "abflux " << name << ": invalid input: " << e.what() << '\n';
    return kInvalid;
  } catch (const SingularityError& e) {
    std::cerr << "abflux " << name << ": invalid input: " << e.what() << '\n';
    return kInvalid;
  } catch (const NoConvergence& e) {
    std::cerr << "abflux " << name << ": " << e.what() << '\n';
    return kNoConvergence;
  } catch (const std::invalid_argument& e) {
    std::cerr << "abflux " << name << ": invalid input: " << e.what() << '\n';
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "abflux " << name << ": numerical failure: " << e.what() << '\n';
    return kNumeric;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Flux-ramp numerical laboratory"};
  app.set_config("--config", "", "key=value file mirroring the flags (flags win)");
  app.require_subcommand(1);

  ClassicalArgs ca;
  auto* cls = app.add_subcommand("classical", "integrate one classical trajectory");
  cls->add_option("--phi", ca.phi, "flux ramp rate (> 0)");
  cls->add_option("--q0", ca.q0, "initial position x,y")->delimiter(',')->expected(2);
  cls->add_option("--p0", ca.p0, "initial canonical momentum x,y")->delimiter(',')->expected(2);
  cls->add_option("--s-start", ca.s_start, "first sample time");
  cls->add_option("--s-end", ca.s_end, "last sample time");
  cls->add_option("--s-init", ca.s_init, "time of the initial data (default: s-start)");
  cls->add_option("--tol", ca.tol, "integrator tolerance in [1e-13, 1e-6]");
  cls->add_option("--samples", ca.samples, "equally spaced samples on [s-start, s-end]");
  cls->add_option("--r-guard", ca.r_guard, "radius that counts as reaching the puncture");
  cls->add_option("--out", ca.out, "output prefix");

  ReducedArgs ra;
  auto* red = app.add_subcommand("reduced", "solve the Bessel-kernel integral equations");
  red->add_option("--phi", ra.phi, "flux ramp rate (> 0)");
  red->add_option("--c1", ra.c1, "coefficient of s J");
  red->add_option("--c2", ra.c2, "coefficient of s Y");
  red->add_option("--s-start", ra.s_start, "left end of the grid (> 0)");
  red->add_option("--s-max", ra.s_max, "truncation point of the integrals");
  red->add_option("--picard-tol", ra.picard_tol, "sup-norm increment tolerance");
  red->add_option("--quad-nodes", ra.quad_nodes, "Gauss nodes per panel");
  red->add_option("--panel-width", ra.panel_width, "panel length");
  red->add_option("--max-iters", ra.max_iters, "Picard iteration budget");
  red->add_option("--samples", ra.samples, "output rows");
  red->add_flag("--zero-forcing", ra.zero_forcing, "replace F by 0");
  red->add_flag("--crosscheck", ra.crosscheck, "compare against the classical flow");
  red->add_option("--crosscheck-end", ra.crosscheck_end, "end of the crosscheck window");
  red->add_option("--out", ra.out, "output prefix");

  SpectralArgs sa;
  auto* spc = app.add_subcommand("spectral", "spectral family and coupling checks");
  spc->add_option("--s", sa.s, "value, list a,b,c or grid start:stop:step");
  spc->add_option("--levels", sa.levels, "retained levels N");
  spc->add_option("--check", sa.check, "none, oracle, kernel, coupling, gamma or all");
  spc->add_option("--out", sa.out, "output prefix");

  AdiabaticArgs aa;
  auto* adi = app.add_subcommand("adiabatic", "adiabatic propagator and Dyson corrector");
  adi->add_option("--s-end", aa.s_end, "end of the s-interval");
  adi->add_option("--epsilons", aa.epsilons, "comma-separated epsilon values")->delimiter(',');
  adi->add_option("--levels", aa.levels, "retained levels N");
  adi->add_option("--ode-tol", aa.ode_tol, "corrector step tolerance");
  adi->add_option("--grid-step", aa.grid_step, "output grid spacing");
  adi->add_flag("--zero-coupling", aa.zero_coupling, "replace Pi by 0");
  adi->add_option("--out", aa.out, "output prefix");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInvalid;
  }
  if (*cls) return guarded("classical", [&] { return run_classical(ca); });
  if (*red) return guarded("reduced", [&] { return run_reduced(ra); });
  if (*spc) return guarded("spectral", [&] { return run_spectral(sa); });
  if (*adi) return guarded("adiabatic", [&] { return run_adiabatic(aa); });
  return kInvalid;
}
