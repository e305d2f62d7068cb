#include "qml/experiment.hpp"

#include "qml/wavelets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

namespace qml {

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string num17(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt("%.17g", v);
}

std::string num6(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt("%.6g", v);
}

template <typename T>
std::string opt_str(const std::optional<T>& v, std::string (*f)(double)) {
  return v ? f(static_cast<double>(*v)) : std::string();
}

std::string int_str(double v) { return std::to_string(static_cast<long>(v)); }

// Rows with the same quantity label and tag columns form one h-sweep.
using GroupKey = std::tuple<std::string, std::optional<double>, std::optional<int>, std::optional<int>, std::optional<double>>;

GroupKey key_of(const Measurement& m) { return {m.quantity, m.p, m.k, m.j, m.alpha}; }

std::string describe(const GroupKey& k) {
  std::string s = std::get<0>(k);
  if (std::get<1>(k)) s += " p=" + num6(*std::get<1>(k));
  if (std::get<2>(k)) s += " k=" + std::to_string(*std::get<2>(k));
  if (std::get<3>(k)) s += " j=" + std::to_string(*std::get<3>(k));
  if (std::get<4>(k)) s += " alpha=" + num6(*std::get<4>(k));
  return s;
}

std::map<GroupKey, std::vector<std::pair<double, double>>> group_rows(const std::vector<const Measurement*>& rows) {
  std::map<GroupKey, std::vector<std::pair<double, double>>> g;
  for (const auto* m : rows) g[key_of(*m)].emplace_back(m->h, m->value);
  return g;
}

bool matches(const Measurement& m, const AssertionSpec& a) {
  if (m.quantity != a.quantity && base_quantity(m.quantity) != a.quantity) return false;
  const auto near = [](double x, double y) { return x == y || std::abs(x - y) <= 1e-12 * std::max(std::abs(x), std::abs(y)); };
  if (auto it = a.args.find("p"); it != a.args.end() && !(m.p && near(*m.p, parse_scalar(it->second)))) return false;
  if (auto it = a.args.find("k"); it != a.args.end() && !(m.k && *m.k == static_cast<int>(parse_scalar(it->second))))
    return false;
  if (auto it = a.args.find("j"); it != a.args.end() && !(m.j && *m.j == static_cast<int>(parse_scalar(it->second))))
    return false;
  if (auto it = a.args.find("alpha"); it != a.args.end() && !(m.alpha && near(*m.alpha, parse_scalar(it->second))))
    return false;
  return true;
}

std::optional<double> expected_slope(const std::string& e, const GroupKey& g, std::string& why) {
  const auto& p = std::get<1>(g);
  const auto& k = std::get<2>(g);
  const auto& alpha = std::get<4>(g);
  if (e == "-delta") {
    if (!p || !k) {
      why = "-delta needs p and k columns";
      return std::nullopt;
    }
    return -delta_p_k(*p, *k);
  }
  if (e == "-sogge") {
    if (!p) {
      why = "-sogge needs a p column";
      return std::nullopt;
    }
    return -sogge_delta(*p);
  }
  if (e == "-alpha_growth") {
    if (!alpha) {
      why = "-alpha_growth needs an alpha column";
      return std::nullopt;
    }
    return -(0.5 - *alpha / 2);
  }
  return parse_scalar(e);
}

std::string assertion_head(const AssertionSpec& a) {
  std::string s = a.kind + " " + a.quantity;
  for (const auto& [k, v] : a.args) s += " " + k + "=" + v;
  return s;
}

void evaluate_assertion(const AssertionSpec& a, const std::vector<Measurement>& all, std::vector<AssertionResult>& out) {
  std::vector<const Measurement*> rows;
  for (const auto& m : all)
    if (matches(m, a)) rows.push_back(&m);
  const auto arg = [&](const std::string& key, double fallback) {
    const auto it = a.args.find(key);
    return it == a.args.end() ? fallback : parse_scalar(it->second);
  };
  const size_t before = out.size();

  if (a.kind == "slope") {
    for (auto& [g, pts] : group_rows(rows)) {
      AssertionResult r;
      r.description = "slope " + describe(g);
      if (pts.size() < 3) {
        r.detail = "fewer than 3 h values";
        out.push_back(r);
        continue;
      }
      const ExponentFit f = fit_power_law(pts);
      r.measured = f.slope;
      r.pass = true;
      if (auto it = a.args.find("expect"); it != a.args.end()) {
        std::string why;
        r.expected = expected_slope(it->second, g, why);
        const double tol = arg("tol", 0.05);
        if (!r.expected) {
          r.pass = false;
          r.detail = why;
        } else {
          r.pass = std::abs(f.slope - *r.expected) <= tol;
          r.detail = "tolerance " + num6(tol);
        }
      }
      if (a.args.count("min") && !(f.slope >= arg("min", 0))) {
        r.pass = false;
        r.detail += (r.detail.empty() ? "" : "; ") + std::string("below min ") + num6(arg("min", 0));
      }
      if (a.args.count("max") && !(f.slope <= arg("max", 0))) {
        r.pass = false;
        r.detail += (r.detail.empty() ? "" : "; ") + std::string("above max ") + num6(arg("max", 0));
      }
      if (a.args.count("min") && !r.expected) r.expected = arg("min", 0);
      out.push_back(r);
    }
  } else if (a.kind == "ratio_spread") {
    for (auto& [g, pts] : group_rows(rows)) {
      AssertionResult r;
      r.description = "ratio spread " + describe(g);
      double lo = std::numeric_limits<double>::infinity(), hi = 0;
      for (const auto& [h, v] : pts) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      r.measured = lo > 0 ? hi / lo : std::numeric_limits<double>::infinity();
      r.expected = arg("max", 3);
      r.pass = pts.size() >= 2 && r.measured <= *r.expected;
      r.detail = pts.size() < 2 ? "fewer than 2 h values" : "max/min over " + std::to_string(pts.size()) + " h values";
      out.push_back(r);
    }
  } else if (a.kind == "kernel_bound") {
    std::vector<KernelSample> samples;
    for (const auto* m : rows) {
      KernelSample s;
      s.h = m->h;
      s.k = m->k.value_or(1);
      s.j = m->j.value_or(0);
      s.a = quantity_tag(m->quantity, "a").value_or(1.0);
      s.t = quantity_tag(m->quantity, "t").value_or(0.0);
      s.sup = m->value;
      s.regime = s.t <= kernel_threshold(s.h, s.k, s.j) ? KernelRegime::SmallSeparation : KernelRegime::LargeSeparation;
      samples.push_back(s);
    }
    const auto rep = kernel_bound_check(samples);
    AssertionResult r;
    r.description = "kernel bound " + a.quantity;
    r.pass = rep.pass;
    r.expected = 2.0;
    for (const auto& f : rep.regimes) {
      if (f.count == 0) continue;
      r.measured = std::max({r.measured, f.max_ratio / f.constant, f.constant / f.min_ratio});
      r.detail += to_string(f.regime) + ": n=" + std::to_string(f.count) + " C=" + num6(f.constant) + " ratios [" +
                  num6(f.min_ratio) + ", " + num6(f.max_ratio) + "]; ";
    }
    if (rep.inconclusive) r.detail += "inconclusive; ";
    out.push_back(r);
  } else if (a.kind == "coefficient_decay") {
    std::map<double, std::vector<CoefficientSample>> by_h;
    for (const auto* m : rows)
      by_h[m->h].push_back({m->j.value_or(0), quantity_tag(m->quantity, "a").value_or(1.0), m->value});
    for (auto it = by_h.rbegin(); it != by_h.rend(); ++it) {
      AssertionResult r;
      r.description = "coefficient decay " + a.quantity + " h=" + num6(it->first);
      try {
        const auto rep = check_coefficient_decay(it->second, static_cast<int>(arg("m", 1)));
        r.measured = rep.worst_ratio;
        r.expected = 2.0;
        r.pass = rep.pass;
        r.detail = "C=" + num6(rep.constant) + " worst at j=" + std::to_string(rep.worst_j) + " a=" + num6(rep.worst_a);
      } catch (const std::exception& e) {
        r.detail = e.what();
      }
      out.push_back(r);
    }
  } else if (a.kind == "equals") {
    AssertionResult r;
    r.description = "equals " + a.quantity;
    const std::string e = a.args.at("expect");
    const double tol = arg("tol", 0);
    r.pass = !rows.empty();
    for (const auto* m : rows) {
      const double want = e == "k" ? static_cast<double>(m->k.value_or(-1)) : parse_scalar(e);
      r.measured = std::max(r.measured, std::abs(m->value - want));
      if (std::abs(m->value - want) > tol) r.pass = false;
    }
    if (e != "k") r.expected = parse_scalar(e);
    r.detail = std::to_string(rows.size()) + " rows, measured = max deviation from " + e;
    out.push_back(r);
  } else if (a.kind == "increasing") {
    for (auto& [g, pts] : group_rows(rows)) {
      AssertionResult r;
      r.description = "increasing as h decreases " + describe(g);
      std::sort(pts.begin(), pts.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
      r.pass = pts.size() >= 2;
      for (size_t i = 1; i < pts.size(); ++i)
        if (!(pts[i].second > pts[i - 1].second)) r.pass = false;
      r.measured = static_cast<double>(pts.size());
      r.detail = "values over " + std::to_string(pts.size()) + " h";
      out.push_back(r);
    }
  }
  if (out.size() == before) {
    AssertionResult r;
    r.description = assertion_head(a);
    r.detail = "no matching measurements";
    out.push_back(r);
  }
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

const char* kHeader = "experiment,h,p,k,j,alpha,quantity,value";

}  // namespace

void write_csv(std::ostream& out, const std::vector<Measurement>& rows) {
  out << kHeader << '\n';
  for (const auto& m : rows) {
    out << m.experiment << ',' << num17(m.h) << ',' << opt_str(m.p, num17) << ',' << opt_str(m.k, int_str) << ','
        << opt_str(m.j, int_str) << ',' << opt_str(m.alpha, num17) << ',' << m.quantity << ',' << num17(m.value) << '\n';
  }
}

std::vector<Measurement> read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || split_csv(line) != split_csv(kHeader)) throw InvalidInput("csv: unexpected header");
  std::vector<Measurement> rows;
  int n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv(line);
    if (f.size() != 8) throw InvalidInput("csv line " + std::to_string(n) + ": expected 8 fields");
    try {
      Measurement m;
      m.experiment = f[0];
      m.h = parse_scalar(f[1]);
      if (!f[2].empty()) m.p = parse_scalar(f[2]);
      if (!f[3].empty()) m.k = std::stoi(f[3]);
      if (!f[4].empty()) m.j = std::stoi(f[4]);
      if (!f[5].empty()) m.alpha = parse_scalar(f[5]);
      m.quantity = f[6];
      m.value = f[7] == "nan" ? std::nan("") : parse_scalar(f[7]);
      rows.push_back(std::move(m));
    } catch (const std::exception& e) {
      throw InvalidInput("csv line " + std::to_string(n) + ": " + e.what());
    }
  }
  return rows;
}

bool RunReport::pass() const {
  return std::all_of(assertions.begin(), assertions.end(), [](const AssertionResult& a) { return a.pass; });
}

RunReport evaluate(const ExperimentConfig& config, SweepResult sweep) {
  RunReport r;
  r.config = config;
  r.sweep = std::move(sweep);
  std::vector<const Measurement*> rows;
  for (const auto& m : r.sweep.rows) rows.push_back(&m);
  for (auto& [g, pts] : group_rows(rows)) {
    std::set<double> hs;
    bool positive = true;
    for (const auto& [h, v] : pts) {
      hs.insert(h);
      positive = positive && v > 0 && std::isfinite(v);
    }
    if (hs.size() < 3 || hs.size() != pts.size() || !positive) continue;
    r.fits.push_back(fit_power_law(pts, describe(g), std::get<1>(g).value_or(std::nan(""))));
  }
  for (const auto& a : config.assertions) evaluate_assertion(a, r.sweep.rows, r.assertions);
  return r;
}

std::string render_markdown(const RunReport& report, bool include_timings) {
  std::ostringstream md;
  const auto& c = report.config;
  md << "# " << c.name << "\n\n";
  md << "Result: **" << (report.pass() ? "PASS" : "FAIL") << "** (" << report.assertions.size() << " assertions, "
     << report.sweep.rows.size() << " measurements, " << report.sweep.failures.size() << " stage failures)\n\n";
  md << "## Config\n\n```ini\n" << c.source << (c.source.empty() || c.source.back() == '\n' ? "" : "\n") << "```\n\n";
  if (include_timings) {
    md << "## Stage timings\n\n| stage | seconds |\n|---|---|\n";
    for (const auto& t : report.sweep.timings) md << "| " << t.stage << " | " << fmt("%.3f", t.seconds) << " |\n";
    md << "\n";
  }
  if (!report.sweep.failures.empty()) {
    md << "## Stage failures\n\n| h | stage | reason |\n|---|---|---|\n";
    for (const auto& f : report.sweep.failures) md << "| " << num6(f.h) << " | " << f.stage << " | " << f.reason << " |\n";
    md << "\n";
  }
  md << "## Assertions\n\n| assertion | measured | expected | result | detail |\n|---|---|---|---|---|\n";
  for (const auto& a : report.assertions)
    md << "| " << a.description << " | " << num6(a.measured) << " | " << (a.expected ? num6(*a.expected) : "") << " | "
       << (a.pass ? "PASS" : "FAIL") << " | " << a.detail << " |\n";
  md << "\n## Fitted exponents\n\nLeast-squares slope of log value against log h.\n\n"
     << "| group | slope | intercept | max residual | points |\n|---|---|---|---|---|\n";
  for (const auto& f : report.fits)
    md << "| " << f.quantity << " | " << fmt("%.4f", f.slope) << " | " << fmt("%.4f", f.intercept) << " | "
       << fmt("%.2e", f.residual) << " | " << f.h_values.size() << " |\n";
  md << "\n## Measurements\n\n| h | p | k | j | alpha | quantity | value |\n|---|---|---|---|---|---|---|\n";
  for (const auto& m : report.sweep.rows)
    md << "| " << num6(m.h) << " | " << opt_str(m.p, num6) << " | " << opt_str(m.k, int_str) << " | "
       << opt_str(m.j, int_str) << " | " << opt_str(m.alpha, num6) << " | " << m.quantity << " | " << num6(m.value)
       << " |\n";
  return md.str();
}

RunOutputs run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_root) {
  RunOutputs o;
  o.report = evaluate(config, run_sweep(config));
  o.csv = out_root / (config.output + ".csv");
  o.markdown = out_root / (config.output + ".md");
  std::filesystem::create_directories(o.csv.parent_path());
  {
    std::ofstream f(o.csv, std::ios::binary);
    if (!f) throw InvalidInput("cannot write " + o.csv.string());
    write_csv(f, o.report.sweep.rows);
  }
  std::ofstream f(o.markdown, std::ios::binary);
  if (!f) throw InvalidInput("cannot write " + o.markdown.string());
  f << render_markdown(o.report);
  return o;
}

}  // namespace qml
