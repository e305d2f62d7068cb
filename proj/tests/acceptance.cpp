// Runs the eight acceptance checks and prints one PASS/FAIL line for each.
#include "qml/experiment.hpp"
#include "qml/parallel.hpp"
#include "qml/quasimodes.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <random>
#include <sstream>

using namespace qml;

namespace {

const double kInf = std::numeric_limits<double>::infinity();

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::vector<double> dyadic_h(int from, int to) {
  std::vector<double> hs;
  for (int e = from; e <= to; ++e) hs.push_back(std::ldexp(1.0, -e));
  return hs;
}

double slope_of(const std::vector<double>& hs, const std::vector<double>& v) {
  std::vector<std::pair<double, double>> rows;
  for (size_t i = 0; i < hs.size(); ++i) rows.emplace_back(hs[i], v[i]);
  return fit_power_law(rows).slope;
}

Outcome exponent_algebra() {
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  int checks = 0;
  const Rational six(1, 6);
  for (int k = 1; k <= 5; ++k) {
    const auto d = delta_branches(six, k);
    ok = ok && d.high == d.low;
    ++checks;
  }
  for (int j = 0; j <= 5; ++j) {
    const auto m = mu_branches(six, j);
    ok = ok && m.high == m.low;
    ++checks;
  }
  const auto s = sogge_branches(six);
  ok = ok && s.high == s.low;
  ++checks;
  for (int p : {6, 7, 8, 12, 0}) {
    const Rational r = p == 0 ? Rational(0) : Rational(1, p);
    for (int k = 1; k <= 5; ++k) {
      ok = ok && t_alpha_lower_exact(r, k) == delta_exact(r, k);
      ok = ok && t_alpha_lower_exponent(p == 0 ? kInf : p, k) == delta_p_k(p == 0 ? kInf : p, k);
      checks += 2;
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ok = ok && secs < 1.0;
  return {ok, std::to_string(checks) + " exact identities, " + fmt("%.4f s", secs)};
}

Outcome t_alpha_scaling() {
  const auto hs = dyadic_h(5, 9);
  bool ok = true;
  std::string detail;
  Index max_n = 0;
  const auto norms = [&](double alpha, double p) {
    std::vector<double> v;
    for (double h : hs) {
      const TAlphaSpec spec{h, alpha};
      const GridSpec g = t_alpha_grid(spec);
      max_n = std::max(max_n, g.points_per_axis);
      v.push_back(lp_norm(build_t_alpha(spec, g), p));
    }
    return v;
  };
  for (double alpha : {0.5, 1.0 / 3}) {
    const double s = slope_of(hs, norms(alpha, kInf));
    const double want = -(0.5 - alpha / 2);
    ok = ok && std::abs(s - want) <= 0.05;
    detail += "inf-norm alpha=" + fmt("%.3f", alpha) + " slope " + fmt("%.4f", s) + " vs " + fmt("%.4f", want) + "; ";
  }
  for (int k : {1, 2})
    for (double p : {8.0, kInf}) {
      const double s = slope_of(hs, norms(1.0 / (k + 1), p));
      const double want = -delta_p_k(p, k);
      ok = ok && std::abs(s - want) <= 0.05;
      detail += "k=" + std::to_string(k) + " p=" + (std::isinf(p) ? std::string("inf") : fmt("%g", p)) + " slope " +
                fmt("%.4f", s) + " vs " + fmt("%.4f", want) + "; ";
    }
  ok = ok && max_n <= 2048;
  return {ok, detail + "max N " + std::to_string(max_n)};
}

Outcome joint_defects() {
  const auto hs = dyadic_h(5, 9);
  const auto p1 = SymbolSpec::circle_minus_one();
  bool ok = true;
  std::string detail;
  for (int k : {1, 2}) {
    const auto p2 = SymbolSpec::contact_perturbed_circle(k, 1.0);
    std::vector<std::vector<double>> ratios(4);
    const std::pair<int, int> powers[] = {{1, 0}, {0, 1}, {1, 1}, {2, 0}};
    for (double h : hs) {
      const TAlphaSpec spec{h, 1.0 / (k + 1)};
      const Field2D u = build_t_alpha(spec, t_alpha_grid(spec));
      for (int i = 0; i < 4; ++i) ratios[i].push_back(joint_defect(p1, p2, u, powers[i].first, powers[i].second).ratio_to_power);
    }
    double worst = 0;
    for (const auto& r : ratios) {
      const double spread = *std::max_element(r.begin(), r.end()) / *std::min_element(r.begin(), r.end());
      worst = std::max(worst, spread);
      ok = ok && std::isfinite(spread) && spread <= 3.0;
    }
    detail += "k=" + std::to_string(k) + " worst spread " + fmt("%.4f", worst) + "; ";
  }
  return {ok, detail};
}

Outcome transform_identities() {
  // Plancherel on a random field.
  const GridSpec g = make_grid(3.0, 128, 1.0 / 16);
  Field2D u(g);
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n01;
  for (Index i = 0; i < 128; ++i)
    for (Index j = 0; j < 128; ++j) u.values(i, j) = {n01(rng), n01(rng)};
  const double planch = std::abs(l2_norm(semiclassical_fft(u)) / l2_norm(u) - 1);

  // CWT round trip on a Gabor packet.
  const double omega = 8, sigma = 0.5;
  const GridSpec gg = make_grid(2.0, 1024, 0.05);
  Field2D v(gg);
  for (Index i = 0; i < 1024; ++i)
    for (Index j = 0; j < 1024; ++j) {
      const double x = gg.x(i), y = gg.x(j);
      v.values(i, j) = std::exp(-x * x / (2 * sigma * sigma)) * std::polar(1.0, omega * x) * std::exp(-4 * y * y);
    }
  const auto r = cwt_round_trip(v, WaveletSpec::polynomial_bump(), log_scale_grid(1 / (16 * omega), 8.0));
  const double cwt_err = (r.field.values - v.values).norm() / v.values.norm();

  // Dyadic partition of unity on |xi2| <= 1.
  double part_err = 0;
  for (int e = 4; e <= 8; ++e)
    for (int k : {1, 2}) {
      const DyadicPartition part(std::ldexp(1.0, -e), k);
      for (int i = -4000; i <= 4000; ++i) {
        double sum = 0;
        for (int j = 0; j <= part.max_band(); ++j) sum += part.weight(j, i / 4000.0);
        part_err = std::max(part_err, std::abs(sum - 1));
      }
    }
  const bool ok = planch <= 1e-10 && cwt_err <= 1e-3 && part_err <= 1e-10;
  return {ok, "Plancherel " + fmt("%.2e", planch) + ", CWT round trip " + fmt("%.2e", cwt_err) + ", partition " +
                  fmt("%.2e", part_err)};
}

Outcome coefficient_bounds() {
  bool ok = true;
  std::string detail;
  const auto w = WaveletSpec::polynomial_bump();
  for (double h : {1.0 / 32, 1.0 / 64}) {
    const int k = 1;
    const GridSpec g = flat_model_grid(h, k);
    const Field2D v = build_flat_model(g, k);
    const DyadicPartition part(h, k);
    std::vector<CoefficientSample> samples;
    for (double a : log_scale_grid(std::max(2 * g.dx(), std::pow(h, 0.6)), 4.0, 12)) {
      const CwtScale s = spectral_scale(cwt_scale(v, w, a), g);
      for (int j = 0; j <= part.max_band(); ++j)
        samples.push_back({j, a, coefficient_norm(dyadic_project(s, g, part, j), g, CoefficientDomain::Spectral)});
    }
    const auto rep = check_coefficient_decay(samples, 1);
    ok = ok && rep.pass;
    detail += "h=" + fmt("%g", h) + " C=" + fmt("%.4g", rep.constant) + " worst ratio " + fmt("%.3f", rep.worst_ratio) +
              " (limit 2); ";
  }
  return {ok, detail};
}

Outcome kernel_regimes() {
  const auto w = WaveletSpec::polynomial_bump();
  std::vector<KernelSample> samples;
  for (double h : {1.0 / 64, 1.0 / 256}) {
    const auto table = build_phase(graphs::free(), make_grid(1.0, 64, h), {0.0});
    const DyadicPartition part(h, 1);
    for (int j : {0, 2, 4}) {
      if (j > part.max_band()) continue;
      for (double a : {std::pow(h, 0.3), 0.5})
        for (double f : {0.0, 0.02, 0.05, 0.1}) samples.push_back(kernel_sample(table, w, part, j, a, f * a));
    }
  }
  const auto rep = kernel_bound_check(samples);
  std::string detail;
  for (const auto& f : rep.regimes)
    detail += to_string(f.regime) + " n=" + std::to_string(f.count) + " C=" + fmt("%.4g", f.constant) + " ratios [" +
              fmt("%.4g", f.min_ratio) + ", " + fmt("%.4g", f.max_ratio) + "]; ";
  if (rep.inconclusive) detail += "inconclusive";
  return {rep.pass, detail};
}

Outcome propagator() {
  // W*W - Id on a Gaussian packet, variable metric symbol.
  const double x1 = 0.3, xi0 = 0.5, width = 0.2, L = 1.6;
  std::vector<double> hs, errs;
  bool within = true;
  for (int e = 4; e <= 8; ++e) {
    const double h = std::ldexp(1.0, -e);
    const Index n = next_fast_size(static_cast<Index>(std::ceil(2 * L * (16 * h / width + 0.6) / (M_PI * h))));
    const GridSpec g = make_grid(L, n, h, Vec2(0, xi0));
    Eigen::VectorXcd v(n);
    for (Index j = 0; j < n; ++j) v[j] = std::exp(-g.x(j) * g.x(j) / (2 * width * width)) * std::polar(1.0, xi0 * g.x(j) / h);
    PhaseOptions o;
    o.dt = 5e-3;
    o.y_window = position_window(v);
    o.xi_window = output_frequency_window(graphs::variable_metric(), g, v, x1);
    const auto t = build_phase(graphs::variable_metric(), g, {x1}, o);
    const double err = (apply_w_star(t, apply_w(t, v, x1), x1) - v).norm() / v.norm();
    within = within && err <= h;
    hs.push_back(h);
    errs.push_back(err);
  }
  const double order = slope_of(hs, errs);

  // Eikonal residual on halving dy and dx1 over the same physical points.
  const double h = 1.0 / 128;
  const GridSpec c = make_grid(2, 128, h), f = make_grid(2, 256, h);
  PhaseOptions oc, of;
  oc.y_window = IndexRange{31, 98};
  of.y_window = IndexRange{63, 194};
  of.xi_window = IndexRange{64, 192};
  const double dil = eikonal_residual(graphs::dilation(), c, 0.2, 0.02, oc) /
                     eikonal_residual(graphs::dilation(), f, 0.2, 0.01, of);
  const double vm = eikonal_residual(graphs::variable_metric(), c, 0.2, 0.02, oc) /
                    eikonal_residual(graphs::variable_metric(), f, 0.2, 0.01, of);

  // Contact order of the pulled-back graphs.
  std::vector<Vec2> init;
  for (double y : {-0.3, 0.0, 0.3})
    for (double xi : {-0.5, 0.5}) init.emplace_back(y, xi);
  const auto a = graphs::curved_drift();
  const auto flow = integrate_flow(a, init, 0.3, {.direction = -1});
  bool contact = true;
  std::string orders;
  for (int k : {1, 2})
    for (double s : {0.1, 0.3}) {
      const auto cs = conjugated_symbol(a, graphs::curved_drift_contact(k), flow, s);
      const Graph1D ga{[&](double xi) { return cs.a_tilde(s, 0.0, xi); }, {}};
      const Graph1D gq{[&](double xi) { return cs.q_tilde(s, 0.0, xi); }, {}};
      const auto r = contact_order(ga, gq, 0.0, k + 2);
      contact = contact && r.order && *r.order == k;
      orders += (r.order ? std::to_string(*r.order) : std::string("none")) + " ";
    }

  const bool ok = within && order >= 0.9 && dil >= 4 && std::log2(vm) >= 1.95 && contact;
  return {ok, "W*W errors " + fmt("%.2e", errs.front()) + ".." + fmt("%.2e", errs.back()) + " (<= h: " +
                  (within ? "yes" : "no") + "), order " + fmt("%.3f", order) + "; eikonal ratio " + fmt("%.3f", dil) +
                  " (dilation), " + fmt("%.3f", vm) + " (variable metric); contact orders " + orders};
}

Outcome determinism() {
  const std::filesystem::path dir = QML_CONFIG_DIR;
  std::vector<std::filesystem::path> configs;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.path().extension() == ".ini") configs.push_back(e.path());
  std::sort(configs.begin(), configs.end());
  bool ok = !configs.empty();
  std::string detail;
  for (const auto& p : configs) {
    const ExperimentConfig c = load_config(p);
    std::string runs[3];
    const int threads[3] = {1, 1, 4};
    for (int i = 0; i < 3; ++i) {
      set_thread_count(threads[i]);
      std::ostringstream out;
      write_csv(out, run_sweep(c).rows);
      runs[i] = out.str();
    }
    set_thread_count(0);
    const bool same = runs[0] == runs[1] && runs[0] == runs[2];
    ok = ok && same;
    detail += c.name + (same ? " identical" : " DIFFERS") + "; ";
  }
  return {ok, detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"exponent algebra", exponent_algebra},
      {"T_alpha scaling", t_alpha_scaling},
      {"joint-quasimode defects", joint_defects},
      {"transform identities", transform_identities},
      {"coefficient bounds", coefficient_bounds},
      {"kernel regimes", kernel_regimes},
      {"propagator", propagator},
      {"determinism", determinism},
  };
  int failures = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failures;
    std::printf("%s %zu %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str(),
                secs);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
