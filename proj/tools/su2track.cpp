#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "su2track/su2track.hpp"

using namespace su2track;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kUsage = 1, kViolation = 2, kCertificate = 3 };

struct Common {
  std::string config;
  std::string fixture;
  std::optional<std::uint64_t> seed;
  std::string out{"out"};
  std::size_t n{1000};
  std::string trace;
  std::string log;
  unsigned threads{0};
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON config file");
  app->add_option("--fixture", c.fixture, "built-in fixture")->check(CLI::IsMember({"paper"}));
  app->add_option("--seed", c.seed, "RNG seed");
  app->add_option("--out", c.out, "output directory");
}

SimConfig resolve_config(const Common& c) {
  SimConfig cfg = c.config.empty() ? SimConfig{} : load_config(c.config);
  if (c.fixture == "paper") {
    cfg.plant.source = "fixture";
    cfg.trajectory = TrajectoryConfig{};
  }
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

void ensure_dir(const std::string& d) {
  std::error_code ec;
  fs::create_directories(d, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create '" + d + "'");
}

json summary_json(const RunSummary& s) {
  return {{"seed", s.seed},
          {"converged", s.converged},
          {"diverged", s.diverged},
          {"error", s.error},
          {"e_p", s.e_p},
          {"e_v", s.e_v},
          {"e_X", s.e_X},
          {"e_omega", s.e_omega},
          {"rms_e_p", s.rms_e_p},
          {"entered_D", s.entered_D},
          {"t_entry", s.t_entry},
          {"held", s.held},
          {"negative_thrust", s.negative_thrust},
          {"certificate_pass", s.certificate_pass}};
}

struct Resolved {
  SimConfig cfg;
  InertialParams params;
  DomainParams domain;
};

Resolved resolve_all(const Common& c) {
  SimConfig cfg = resolve_config(c);
  const FlatTrajectory traj = make_trajectory(cfg.trajectory);
  const Plant plant = resolve_plant(cfg, traj);
  return {cfg, plant.params, resolve_domain(cfg, traj, plant.params)};
}

int cmd_sim(const Common& c) {
  const SimConfig cfg = resolve_config(c);
  ensure_dir(c.out);
  const SimResult r = run_single(cfg);
  write_csv((fs::path(c.out) / "trace.csv").string(), r.trace);
  std::ofstream(fs::path(c.out) / "summary.json") << summary_json(r.summary).dump(2) << '\n';
  std::cout << "terminal |e_p| " << r.summary.e_p << "  |e_v| " << r.summary.e_v << "  |e_X| " << r.summary.e_X
            << "  |e_omega| " << r.summary.e_omega << '\n';
  std::cout << "certificate " << (r.certificate.pass ? "pass" : "fail") << ", entered D "
            << (r.summary.entered_D ? "at t = " + std::to_string(r.summary.t_entry) : std::string("never")) << '\n';
  if (r.summary.diverged) {
    std::cerr << "diverged: " << r.summary.error << '\n';
    return kViolation;
  }
  return kOk;
}

int cmd_mc(const Common& c) {
  const SimConfig cfg = resolve_config(c);
  ensure_dir(c.out);
  const MonteCarloSummary mc = run_monte_carlo(c.n, cfg, cfg.seed, c.threads);
  json runs = json::array();
  for (const auto& r : mc.runs) runs.push_back(summary_json(r));
  const json j{{"n", mc.n},
               {"base_seed", mc.base_seed},
               {"converged", mc.converged},
               {"entered_D", mc.entered_D},
               {"failed_seeds", mc.failed_seeds},
               {"runs", runs}};
  std::ofstream(fs::path(c.out) / "mc_summary.json") << j.dump(2) << '\n';
  std::cout << "converged " << mc.converged << " / " << mc.n << ", entered D " << mc.entered_D << '\n';
  for (const auto s : mc.failed_seeds) std::cout << "failed seed " << s << '\n';
  return mc.failed_seeds.empty() ? kOk : kViolation;
}

int cmd_certify(const Common& c) {
  CertifyInput in;
  if (!c.config.empty()) in = certify_input_from_json(read_json_file(c.config));
  const CertificateReport r = gain_certificate(in.gains, in.params, in.domain);
  std::cout << format_certificate(r, in.gains, in.domain);
  return r.pass ? kOk : kCertificate;
}

int cmd_monitor(const Common& c) {
  const Resolved rs = resolve_all(c);
  const CertificateReport cert = gain_certificate(rs.cfg.gains, rs.params, rs.domain);
  if (!cert.pass) {
    std::cout << "certificate pre-check failed\n";
    for (const auto& v : cert.violations) std::cout << "  violated: " << v << '\n';
    return kCertificate;
  }
  const SimTrace trace = c.trace.empty() ? run_single(rs.cfg).trace : read_csv(c.trace);
  const MonitorReport rep = lyapunov_monitor(trace, rs.cfg.gains, rs.params, rs.domain);
  if (rep.entered_D) std::cout << "entered D at t = " << rep.t_entry << '\n';
  else std::cout << "never entered D\n";
  for (const auto& v : rep.violations) {
    std::cout << "row " << v.row << " t " << v.t << " " << v.kind << " V " << v.value << " bound " << v.bound << '\n';
  }
  std::cout << (rep.pass() ? "monitor: pass" : "monitor: " + std::to_string(rep.violations.size()) + " violations")
            << '\n';
  return rep.pass() ? kOk : kViolation;
}

int cmd_plot(const Common& c) {
  const SimTrace trace = c.trace.empty() ? run_single(resolve_config(c)).trace : read_csv(c.trace);
  for (const auto& f : emit_plots(trace, c.out)) std::cout << f << '\n';
  return kOk;
}

int cmd_replay(const Common& c) {
  SimConfig cfg = resolve_config(c);
  EkfConfig ec;
  ec.noise = cfg.estimator.noise;
  ec.reset_threshold = cfg.estimator.reset_threshold;
  ec.predict_rate = cfg.estimator.predict_rate;
  ec.g = cfg.plant.g;
  std::vector<ReplayRecord> records;
  std::optional<ReplayFixture> fx;
  if (c.log.empty()) {
    fx = make_replay_fixture(cfg, cfg.horizon);
    records = fx->records;
    ensure_dir(c.out);
    std::ofstream out(fs::path(c.out) / "replay.log");
    write_replay(out, records);
    ec.g = fx->params.g();
  } else {
    std::ifstream in(c.log);
    if (!in) throw Error(ErrorCode::IoError, "cannot open '" + c.log + "'");
    records = parse_replay(in);
  }
  // Without truth the filter starts at the first pose with zero velocity.
  RigidBodyState start;
  if (fx) {
    const Plant p = resolve_plant(cfg, make_trajectory(cfg.trajectory));
    start = p.initial;
  } else {
    for (const auto& r : records) {
      if (r.kind == ReplayRecord::Kind::Pose) {
        start.p = r.pose.position;
        break;
      }
    }
  }
  EkfState init = initial_estimate(start, cfg.estimator.init_position_offset, cfg.estimator.init_attitude_offset);
  if (!fx) init.P.diagonal().segment<3>(3).setConstant(1.0);
  const ReplayResult res = replay(records, ec, init);
  std::cout << "poses " << res.after_pose.size() << ", rejected " << res.rejected << ", predicts " << res.predicts
            << '\n';
  const EkfState& f = res.final_state;
  std::cout << "final p_hat " << f.p_hat.transpose() << "  t " << f.t << '\n';
  if (fx && !fx->truth.empty()) {
    const auto& [t, s] = fx->truth.back();
    const Su2 Xh = Su2::from_rotation(attitude_estimate(f));
    const double gam = std::min(dist_su2(Xh, s.X), dist_su2(-Xh, s.X));
    std::cout << "error at t = " << t << ": |p - p_hat| " << (f.p_hat - s.p).norm() << "  Gamma " << gam << '\n';
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Geometric tracking control on SU(2) x R^3"};
  app.require_subcommand(1);
  Common c;
  auto* sim = app.add_subcommand("sim", "single closed-loop run");
  add_common(sim, c);
  auto* mc = app.add_subcommand("mc", "Monte Carlo sweep over sampled realizations");
  add_common(mc, c);
  mc->add_option("--n", c.n, "number of realizations")->check(CLI::PositiveNumber);
  mc->add_option("--threads", c.threads, "worker threads (0: all cores)");
  auto* cert = app.add_subcommand("certify", "gain certificate");
  add_common(cert, c);
  auto* mon = app.add_subcommand("monitor", "Lyapunov monitor over a trace");
  add_common(mon, c);
  mon->add_option("--trace", c.trace, "trace CSV (default: run the config)");
  auto* plot = app.add_subcommand("plot", "SVG panels from a trace");
  add_common(plot, c);
  plot->add_option("--trace", c.trace, "trace CSV (default: run the config)");
  auto* rep = app.add_subcommand("replay-ekf", "run the filter over a replay log");
  add_common(rep, c);
  rep->add_option("--log", c.log, "replay log (default: generate from the config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*sim) return cmd_sim(c);
    if (*mc) return cmd_mc(c);
    if (*cert) return cmd_certify(c);
    if (*mon) return cmd_monitor(c);
    if (*plot) return cmd_plot(c);
    if (*rep) return cmd_replay(c);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    switch (e.code()) {
      case ErrorCode::SimulationDiverged: return kViolation;
      case ErrorCode::ConfigError:
      case ErrorCode::ParseError: return kUsage;
      default: return kViolation;
    }
  }
  return kUsage;
}
