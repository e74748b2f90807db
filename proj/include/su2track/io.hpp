#pragma once

// Trace CSV, certificate tables and SVG panels.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "su2track/sim.hpp"
#include "su2track/tracking.hpp"

namespace su2track {

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline void write_csv(std::ostream& out, const SimTrace& trace) {
  for (const auto& [k, v] : trace.meta) out << "# " << k << '=' << v << '\n';
  for (std::size_t i = 0; i < trace.columns.size(); ++i) out << (i ? "," : "") << trace.columns[i];
  out << '\n';
  for (const auto& r : trace.rows) {
    for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << format_double(r[i]);
    out << '\n';
  }
}

inline void write_csv(const std::string& path, const SimTrace& trace) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path + "'");
  write_csv(out, trace);
  if (!out) throw Error(ErrorCode::IoError, "write failed for '" + path + "'");
}

inline SimTrace read_csv(std::istream& in) {
  SimTrace t;
  std::string line;
  int lineno = 0;
  auto split = [](const std::string& s) {
    std::vector<std::string> f;
    std::stringstream ss(s);
    std::string x;
    while (std::getline(ss, x, ',')) f.push_back(x);
    return f;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq != std::string::npos) t.meta[line.substr(2, eq - 2)] = line.substr(eq + 1);
      continue;
    }
    if (t.columns.empty()) {
      t.columns = split(line);
      continue;
    }
    const auto f = split(line);
    if (f.size() != t.columns.size()) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": column count mismatch");
    }
    std::vector<double> r;
    r.reserve(f.size());
    for (const auto& s : f) {
      try {
        std::size_t used = 0;
        r.push_back(std::stod(s, &used));
        if (used != s.size()) throw std::invalid_argument(s);
      } catch (const std::exception&) {
        throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": bad number '" + s + "'");
      }
    }
    t.rows.push_back(std::move(r));
  }
  if (t.columns.empty()) throw Error(ErrorCode::ParseError, "trace has no header");
  return t;
}

inline SimTrace read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  return read_csv(in);
}

// ---------------------------------------------------------------------------
// Certificate table
// ---------------------------------------------------------------------------

namespace detail {

inline void print_mat2(std::ostream& o, const char* name, const Mat2& M, const std::pair<double, double>& eig) {
  o << "  " << std::left << std::setw(5) << name << std::right << std::scientific << std::setprecision(6) << "[ "
    << std::setw(14) << M(0, 0) << ' ' << std::setw(14) << M(0, 1) << " ]   eig " << std::setw(14) << eig.first << ' '
    << std::setw(14) << eig.second << '\n'
    << "       [ " << std::setw(14) << M(1, 0) << ' ' << std::setw(14) << M(1, 1) << " ]\n";
}

}  // namespace detail

inline std::string format_certificate(const CertificateReport& r, const GainSet& g, const DomainParams& d) {
  std::ostringstream o;
  o << "gains  k_p=" << g.trans.k_p << " k_v=" << g.trans.k_v << " c_p=" << g.trans.c_p << " k_X=" << g.att.k_X
    << " k_omega=" << g.att.k_omega << " c_a=" << g.att.k_c << '\n';
  o << "domain phi=" << d.phi << " B_f=" << d.B_f << " B_p=" << d.B_p << " alpha=" << d.alpha() << '\n';
  detail::print_mat2(o, "M1pp", r.M1pp, r.eig_M1pp);
  detail::print_mat2(o, "M2pp", r.M2pp, r.eig_M2pp);
  detail::print_mat2(o, "Wpp", r.Wpp, r.eig_Wpp);
  detail::print_mat2(o, "M1aa", r.M1aa, r.eig_M1aa);
  detail::print_mat2(o, "M2aa", r.M2aa, r.eig_M2aa);
  detail::print_mat2(o, "Waa", r.Waa, r.eig_Waa);
  detail::print_mat2(o, "Wpa", r.Wpa, {r.Wpa_norm, 0.0});
  o << std::scientific << std::setprecision(6);
  o << "  |Wpa|  " << r.Wpa_norm << '\n';
  o << "  B_z    " << r.B_z << '\n';
  o << "  c1     " << r.c1 << "   c2 " << r.c2 << "   c3 " << r.c3_bz << "   rate bound " << r.c3_rate << '\n';
  o << "  c_a <= " << r.c_a_bound << (r.c_a_within ? "  ok" : "  exceeded") << '\n';
  o << "  c_p <= " << r.c_p_bound << (r.c_p_within ? "  ok" : "  exceeded") << '\n';
  o << "  alternative Schur condition " << (r.alt_pass ? "pass" : "fail") << '\n';
  for (const auto& v : r.violations) o << "  violated: " << v << '\n';
  o << (r.pass ? "PASS" : "FAIL") << '\n';
  return o.str();
}

// ---------------------------------------------------------------------------
// SVG panels
// ---------------------------------------------------------------------------

struct Series {
  std::string label;
  std::vector<double> y;
};

namespace detail {

inline const char* palette(std::size_t i) {
  static const char* c[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"};
  return c[i % 6];
}

inline std::string svg_line_panel(const std::string& title, const std::vector<double>& x,
                                  const std::vector<Series>& series, const std::string& ylabel) {
  const double W = 720, H = 360, L = 70, R = 150, T = 36, B = 44;
  double x0 = x.front(), x1 = x.back();
  if (x1 <= x0) x1 = x0 + 1.0;
  double y0 = std::numeric_limits<double>::infinity(), y1 = -y0;
  for (const auto& s : series) {
    for (double v : s.y) {
      if (std::isfinite(v)) {
        y0 = std::min(y0, v);
        y1 = std::max(y1, v);
      }
    }
  }
  if (!std::isfinite(y0)) y0 = 0.0, y1 = 1.0;
  if (y1 - y0 < 1e-12) y0 -= 0.5, y1 += 0.5;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  auto px = [&](double v) { return L + (v - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double v) { return T + (y1 - v) / (y1 - y0) * (H - T - B); };

  std::ostringstream o;
  o << std::fixed << std::setprecision(2);
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
    << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  o << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\"" << H - T - B
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = x0 + (x1 - x0) * k / 4.0, yv = y0 + (y1 - y0) * k / 4.0;
    o << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">" << std::setprecision(3)
      << xv << "</text>\n";
    o << "<text x=\"" << L - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << std::setprecision(3) << yv
      << "</text>\n";
    o << "<line x1=\"" << L << "\" x2=\"" << W - R << "\" y1=\"" << py(yv) << "\" y2=\"" << py(yv)
      << "\" stroke=\"#ddd\"/>\n";
  }
  o << std::setprecision(2);
  o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 8 << "\" text-anchor=\"middle\">t [s]</text>\n";
  o << "<text x=\"16\" y=\"" << H / 2 << "\" transform=\"rotate(-90 16 " << H / 2 << ")\" text-anchor=\"middle\">"
    << ylabel << "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    o << "<polyline fill=\"none\" stroke=\"" << palette(i) << "\" stroke-width=\"1.3\" points=\"";
    for (std::size_t k = 0; k < x.size() && k < series[i].y.size(); ++k) {
      if (std::isfinite(series[i].y[k])) o << px(x[k]) << ',' << py(series[i].y[k]) << ' ';
    }
    o << "\"/>\n";
    o << "<line x1=\"" << W - R + 12 << "\" x2=\"" << W - R + 32 << "\" y1=\"" << T + 14 + 18 * i << "\" y2=\""
      << T + 14 + 18 * i << "\" stroke=\"" << palette(i) << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << W - R + 38 << "\" y=\"" << T + 18 + 18 * i << "\">" << series[i].label << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

/// Isometric view of the trajectory with body-axis triads at a few samples.
inline std::string svg_configuration(const SimTrace& tr) {
  const double W = 640, H = 560;
  const double ca = std::cos(M_PI / 6), sa = std::sin(M_PI / 6);
  auto proj = [&](const Vec3& p) { return Vec2((p.x() - p.y()) * ca, -(p.x() + p.y()) * sa - p.z()); };
  std::vector<Vec2> path, ref;
  const std::size_t px_ = tr.col("p_x"), pr = tr.col("p_r_x"), q = tr.col("q_1");
  for (const auto& r : tr.rows) {
    path.push_back(proj(Vec3(r[px_], r[px_ + 1], r[px_ + 2])));
    ref.push_back(proj(Vec3(r[pr], r[pr + 1], r[pr + 2])));
  }
  Vec2 lo = path.front(), hi = path.front();
  for (const auto* v : {&path, &ref}) {
    for (const Vec2& p : *v) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
  }
  const double span = std::max({hi.x() - lo.x(), hi.y() - lo.y(), 1e-6});
  const double scale = (std::min(W, H) - 80) / span;
  auto sx = [&](const Vec2& p) { return Vec2(40 + (p.x() - lo.x()) * scale, 40 + (p.y() - lo.y()) * scale); };
  std::ostringstream o;
  o << std::fixed << std::setprecision(2);
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">configuration</text>\n";
  auto poly = [&](const std::vector<Vec2>& pts, const char* color, const char* dash) {
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-dasharray=\"" << dash << "\" points=\"";
    for (const Vec2& p : pts) {
      const Vec2 s = sx(p);
      o << s.x() << ',' << s.y() << ' ';
    }
    o << "\"/>\n";
  };
  poly(ref, "#888", "4 3");
  poly(path, "#1f77b4", "none");
  const std::size_t stride = std::max<std::size_t>(1, tr.rows.size() / 12);
  const double len = 0.12 * span;
  for (std::size_t k = 0; k < tr.rows.size(); k += stride) {
    const auto& r = tr.rows[k];
    const Vec3 p(r[px_], r[px_ + 1], r[px_ + 2]);
    const Mat3 Rm = Su2::from_quaternion_unchecked(Quat(r[q], r[q + 1], r[q + 2], r[q + 3])).normalized().rotation();
    for (int a = 0; a < 3; ++a) {
      const Vec2 s0 = sx(proj(p)), s1 = sx(proj(p + len * Rm.col(a)));
      o << "<line x1=\"" << s0.x() << "\" y1=\"" << s0.y() << "\" x2=\"" << s1.x() << "\" y2=\"" << s1.y()
        << "\" stroke=\"" << palette(a == 0 ? 1 : a == 1 ? 2 : 0) << "\"/>\n";
    }
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace detail

/// Seven panels: forces, torques, position, velocity, distances, Lyapunov
/// function with bounds (log10) and the 3-D configuration.
inline std::vector<std::string> emit_plots(const SimTrace& tr, const std::string& dir) {
  if (tr.empty()) throw Error(ErrorCode::IoError, "empty trace, nothing to plot");
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create '" + dir + "'");
  const std::vector<double> t = tr.series("t");
  auto xyz = [&](const std::string& base, const std::string& tag) {
    return std::vector<Series>{{tag + "_x", tr.series(base + "_x")},
                               {tag + "_y", tr.series(base + "_y")},
                               {tag + "_z", tr.series(base + "_z")}};
  };
  auto log10s = [](std::vector<double> v) {
    for (double& x : v) x = x > 0.0 ? std::log10(x) : std::numeric_limits<double>::quiet_NaN();
    return v;
  };
  std::vector<std::pair<std::string, std::string>> files;
  files.emplace_back("forces.svg", detail::svg_line_panel("thrust", t, {{"f", tr.series("f")}, {"f_r", tr.series("f_r")}},
                                                          "f [N]"));
  auto tq = xyz("tau", "tau");
  files.emplace_back("torques.svg", detail::svg_line_panel("torque", t, tq, "tau [Nm]"));
  auto pos = xyz("p", "p");
  for (auto& s : xyz("p_r", "p_r")) pos.push_back(s);
  files.emplace_back("position.svg", detail::svg_line_panel("position", t, pos, "p [m]"));
  auto vel = xyz("v", "v");
  for (auto& s : xyz("v_r", "v_r")) vel.push_back(s);
  files.emplace_back("velocity.svg", detail::svg_line_panel("velocity", t, vel, "v [m/s]"));
  files.emplace_back("distances.svg",
                     detail::svg_line_panel("attitude distances", t,
                                            {{"Gamma(X_d,X)", tr.series("gamma_dX")},
                                             {"Gamma(X_r,X)", tr.series("gamma_rX")},
                                             {"Psi(R_r,R)", tr.series("psi_rR")}},
                                            "distance"));
  files.emplace_back("lyapunov.svg", detail::svg_line_panel("Lyapunov function", t,
                                                            {{"log10 V", log10s(tr.series("V"))},
                                                             {"log10 lower", log10s(tr.series("V_lower"))},
                                                             {"log10 upper", log10s(tr.series("V_upper"))}},
                                                            "log10"));
  files.emplace_back("configuration.svg", detail::svg_configuration(tr));
  std::vector<std::string> written;
  for (const auto& [name, body] : files) {
    const std::string path = (fs::path(dir) / name).string();
    std::ofstream out(path);
    if (!out || !(out << body)) throw Error(ErrorCode::IoError, "cannot write '" + path + "'");
    written.push_back(path);
  }
  return written;
}

// ---------------------------------------------------------------------------
// Replay log text
// ---------------------------------------------------------------------------

inline void write_replay(std::ostream& out, const std::vector<ReplayRecord>& recs) {
  for (const ReplayRecord& r : recs) {
    if (r.kind == ReplayRecord::Kind::Imu) {
      out << "IMU " << format_double(r.imu.t);
      for (int i = 0; i < 3; ++i) out << ' ' << format_double(r.imu.accel[i]);
      for (int i = 0; i < 3; ++i) out << ' ' << format_double(r.imu.gyro[i]);
    } else {
      out << "POSE " << format_double(r.pose.t);
      for (int i = 0; i < 3; ++i) out << ' ' << format_double(r.pose.position[i]);
      for (int i = 0; i < 3; ++i) out << ' ' << format_double(r.pose.noise_std[i]);
    }
    out << '\n';
  }
}

}  // namespace su2track
