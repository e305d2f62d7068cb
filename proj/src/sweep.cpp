#include "qml/experiment.hpp"

#include "qml/quasimodes.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>

namespace qml {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double parse_number(const std::string& t) {
  if (t == "inf" || t == "+inf") return std::numeric_limits<double>::infinity();
  double v = 0;
  const char* first = t.data();
  if (!t.empty() && t[0] == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) throw InvalidInput("not a number: '" + t + "'");
  return v;
}

double parse_plain(const std::string& t) {
  const auto slash = t.find('/');
  if (slash == std::string::npos) return parse_number(t);
  const double d = parse_number(trim(t.substr(slash + 1)));
  if (d == 0) throw InvalidInput("zero denominator in '" + t + "'");
  return parse_number(trim(t.substr(0, slash))) / d;
}

long parse_int(const std::string& t) {
  long v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) throw InvalidInput("not an integer: '" + t + "'");
  return v;
}

bool parse_bool(const std::string& t) {
  if (t == "true" || t == "yes" || t == "1") return true;
  if (t == "false" || t == "no" || t == "0") return false;
  throw InvalidInput("not a boolean: '" + t + "'");
}

enum class Type { Text, Int, IntList, Real, Scalar, ScalarList, Bool, Graph, Symbol, Choice };

struct KeySchema {
  Type type;
  std::vector<std::string> choices = {};
  bool required = false;
};

using Schema = std::map<std::string, KeySchema>;

const std::map<std::string, Schema>& stage_schemas() {
  static const std::map<std::string, Schema> s = {
      {"construct",
       {{"field", {Type::Choice, {"t_alpha", "flat_model"}, true}},
        {"alpha", {Type::Scalar}},
        {"k", {Type::Int}},
        {"smoothed", {Type::Bool}},
        {"normalization", {Type::Choice, {"unit_l2", "analytic"}}},
        {"omega_angle", {Type::Real}},
        {"x1_width", {Type::Real}},
        {"noise", {Type::Real}}}},
      {"norm", {{"p", {Type::ScalarList, {}, true}}}},
      {"defect", {{"symbol", {Type::Symbol, {}, true}}, {"symbol2", {Type::Symbol}}, {"powers", {Type::Text, {}, true}}}},
      {"propagate", {{"graph", {Type::Graph, {}, true}}, {"dt", {Type::Real}}, {"correction", {Type::Bool}}}},
      {"cwt",
       {{"wavelet", {Type::Choice, {"polynomial_bump"}}},
        {"a_min", {Type::Scalar}},
        {"a_max", {Type::Scalar}},
        {"per_decade", {Type::Int}},
        {"k", {Type::Int}}}},
      {"kernel",
       {{"graph", {Type::Graph}},
        {"k", {Type::Int, {}, true}},
        {"j", {Type::IntList, {}, true}},
        {"a", {Type::ScalarList, {}, true}},
        {"t", {Type::ScalarList, {}, true}},
        {"points_per_period", {Type::Int}}}},
      {"contact",
       {{"graph", {Type::Graph}},
        {"family", {Type::Choice, {"curved_drift_contact", "contact_circle_graph"}}},
        {"k", {Type::IntList, {}, true}},
        {"x1", {Type::ScalarList, {}, true}}}},
      {"wstar",
       {{"graph", {Type::Graph}},
        {"xi0", {Type::Real}},
        {"x1", {Type::Real}},
        {"width", {Type::Real}},
        {"half_width", {Type::Real}},
        {"dt", {Type::Real}}}},
  };
  return s;
}

const std::map<std::string, std::set<std::string>>& assertion_args() {
  static const std::map<std::string, std::set<std::string>> a = {
      {"slope", {"p", "k", "j", "alpha", "expect", "tol", "min", "max"}},
      {"ratio_spread", {"p", "k", "j", "alpha", "max"}},
      {"kernel_bound", {}},
      {"coefficient_decay", {"m"}},
      {"equals", {"p", "k", "j", "alpha", "expect", "tol"}},
      {"increasing", {"p", "k", "j", "alpha"}},
  };
  return a;
}

void check_value(const KeySchema& ks, const std::string& v) {
  switch (ks.type) {
    case Type::Text:
      if (v.empty()) throw InvalidInput("empty value");
      break;
    case Type::Int:
      parse_int(v);
      break;
    case Type::IntList:
      if (split_list(v).empty()) throw InvalidInput("empty list");
      for (const auto& t : split_list(v)) parse_int(t);
      break;
    case Type::Real:
      parse_plain(v);
      break;
    case Type::Scalar:
      parse_scalar(v, 0.5);
      break;
    case Type::ScalarList:
      if (split_list(v).empty()) throw InvalidInput("empty list");
      for (const auto& t : split_list(v)) parse_scalar(t, 0.5);
      break;
    case Type::Bool:
      parse_bool(v);
      break;
    case Type::Graph:
      parse_graph(v);
      break;
    case Type::Symbol:
      parse_symbol(v);
      break;
    case Type::Choice:
      if (std::find(ks.choices.begin(), ks.choices.end(), v) == ks.choices.end()) {
        std::string all;
        for (const auto& c : ks.choices) all += (all.empty() ? "" : ", ") + c;
        throw InvalidInput("expected one of " + all + ", got '" + v + "'");
      }
      break;
  }
}

void check_expect(const std::string& v) {
  if (v == "-delta" || v == "-sogge" || v == "-alpha_growth" || v == "k") return;
  parse_scalar(v);
}

// Stage-specific checks beyond the per-key types.
void check_stage(const StageSpec& s, std::vector<ConfigIssue>& issues) {
  const auto issue = [&](const std::string& key, const std::string& msg) {
    const auto it = s.param_lines.find(key);
    issues.push_back({it == s.param_lines.end() ? s.line : it->second, "[" + s.kind + "] " + msg});
  };
  try {
    if (s.kind == "construct") {
      if (s.text("field") == "t_alpha" && !s.has("alpha")) issue("field", "t_alpha needs alpha");
      if (s.text("field") == "flat_model" && !s.has("k")) issue("field", "flat_model needs k");
      if (s.has("alpha") && s.text("alpha") == "alpha_k" && !s.has("k")) issue("alpha", "alpha = alpha_k needs k");
      if (s.has("k") && parse_int(s.text("k")) < 1) issue("k", "k must be >= 1");
      if (s.has("noise") && parse_plain(s.text("noise")) < 0) issue("noise", "noise must be >= 0");
    } else if (s.kind == "norm") {
      for (const auto& t : split_list(s.text("p")))
        if (!(parse_scalar(t) >= 1)) issue("p", "p must be >= 1");
    } else if (s.kind == "defect") {
      for (const auto& t : split_list(s.text("powers"))) {
        const auto colon = t.find(':');
        const long m1 = parse_int(trim(t.substr(0, colon)));
        const long m2 = colon == std::string::npos ? 0 : parse_int(trim(t.substr(colon + 1)));
        if (m1 < 0 || m2 < 0) issue("powers", "powers must be >= 0");
        if (m2 > 0 && !s.has("symbol2")) issue("powers", "a second power needs symbol2");
      }
    } else if (s.kind == "kernel" || s.kind == "contact" || s.kind == "cwt") {
      if (s.has("k")) {
        for (const auto& t : split_list(s.text("k")))
          if (parse_int(t) < 1) issue("k", "k must be >= 1");
      }
      if (s.has("j")) {
        for (const auto& t : split_list(s.text("j")))
          if (parse_int(t) < 0) issue("j", "j must be >= 0");
      }
    }
  } catch (const std::exception& e) {
    issue("", e.what());
  }
}

}  // namespace

const std::string& StageSpec::text(const std::string& key) const {
  const auto it = params.find(key);
  if (it == params.end()) throw InvalidInput("stage " + kind + ": missing key " + key);
  return it->second;
}

std::string to_string(DataKind k) {
  switch (k) {
    case DataKind::None:
      return "none";
    case DataKind::Field:
      return "field";
    case DataKind::Coefficients:
      return "coefficients";
  }
  return "?";
}

DataKind stage_input(const std::string& kind) {
  if (kind == "norm" || kind == "defect" || kind == "propagate" || kind == "cwt") return DataKind::Field;
  return DataKind::None;
}

DataKind stage_output(const std::string& kind) {
  if (kind == "construct" || kind == "norm" || kind == "defect" || kind == "propagate") return DataKind::Field;
  if (kind == "cwt") return DataKind::Coefficients;
  return DataKind::None;
}

ConfigErrors::ConfigErrors(std::vector<ConfigIssue> issues)
    : InvalidInput([&] {
        std::string m = "config errors:";
        for (const auto& i : issues) m += "\n  line " + std::to_string(i.line) + ": " + i.message;
        return m;
      }()),
      issues_(std::move(issues)) {}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(text);
  while (std::getline(in, cur, ',')) {
    auto t = trim(cur);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

double parse_scalar(const std::string& raw, std::optional<double> h) {
  const std::string t = trim(raw);
  const auto caret = t.find('^');
  if (caret == std::string::npos) return parse_plain(t);
  const std::string base = trim(t.substr(0, caret));
  const double e = parse_plain(trim(t.substr(caret + 1)));
  if (base == "h") {
    if (!h) throw InvalidInput("'" + t + "' needs h");
    return std::pow(*h, e);
  }
  return std::pow(parse_plain(base), e);
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig c;
  c.source = text;
  std::vector<ConfigIssue> issues;
  enum class Section { Top, Grid, Stage, Assert, Unknown } section = Section::Top;
  std::set<std::string> seen_top, seen_grid;
  int h_line = 0;

  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        issues.push_back({line_no, "malformed section header '" + line + "'"});
        section = Section::Unknown;
        continue;
      }
      const std::string name = trim(line.substr(1, line.size() - 2));
      if (name == "grid") {
        section = Section::Grid;
      } else if (name == "assert") {
        section = Section::Assert;
      } else if (stage_schemas().count(name)) {
        section = Section::Stage;
        StageSpec s;
        s.kind = name;
        s.line = line_no;
        c.stages.push_back(std::move(s));
      } else {
        issues.push_back({line_no, "unknown section [" + name + "]"});
        section = Section::Unknown;
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      issues.push_back({line_no, "expected 'key = value', got '" + line + "'"});
      continue;
    }
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key.empty()) {
      issues.push_back({line_no, "missing key"});
      continue;
    }
    if (value.empty()) {
      issues.push_back({line_no, key + ": missing value"});
      continue;
    }
    try {
      switch (section) {
        case Section::Unknown:
          break;
        case Section::Top:
          if (!seen_top.insert(key).second) throw InvalidInput("duplicate key " + key);
          if (key == "name") {
            if (value.find_first_of(", \t[]") != std::string::npos) throw InvalidInput("name must not contain commas, spaces or brackets");
            c.name = value;
          } else if (key == "output") {
            c.output = value;
          } else if (key == "seed") {
            const long s = parse_int(value);
            if (s < 0) throw InvalidInput("seed must be >= 0");
            c.seed = static_cast<std::uint64_t>(s);
          } else if (key == "h") {
            h_line = line_no;
            for (const auto& t : split_list(value)) {
              const double h = parse_scalar(t);
              if (!(h > 0 && h <= 1)) {
                issues.push_back({line_no, "h = " + t + " out of range (0, 1]"});
                continue;
              }
              c.h_list.push_back(h);
            }
          } else {
            throw InvalidInput("unknown key " + key);
          }
          break;
        case Section::Grid:
          if (!seen_grid.insert(key).second) throw InvalidInput("duplicate key " + key);
          if (key != "oversampling") throw InvalidInput("[grid] unknown key " + key);
          c.oversampling = parse_plain(value);
          if (!(c.oversampling >= 1)) throw InvalidInput("oversampling must be >= 1");
          break;
        case Section::Stage: {
          auto& s = c.stages.back();
          const auto& schema = stage_schemas().at(s.kind);
          const auto it = schema.find(key);
          if (it == schema.end()) throw InvalidInput("[" + s.kind + "] unknown key " + key);
          if (s.params.count(key)) throw InvalidInput("[" + s.kind + "] duplicate key " + key);
          if (!(s.kind == "construct" && key == "alpha" && value == "alpha_k")) {
            try {
              check_value(it->second, value);
            } catch (const std::exception& e) {
              throw InvalidInput("[" + s.kind + "] " + key + ": " + e.what());
            }
          }
          s.params[key] = value;
          s.param_lines[key] = line_no;
          break;
        }
        case Section::Assert: {
          const auto ait = assertion_args().find(key);
          if (ait == assertion_args().end()) throw InvalidInput("[assert] unknown assertion " + key);
          AssertionSpec a;
          a.kind = key;
          a.line = line_no;
          std::istringstream tokens(value);
          std::string tok;
          tokens >> a.quantity;
          if (a.quantity.find('=') != std::string::npos) throw InvalidInput("[assert] " + key + ": first token must be a quantity");
          while (tokens >> tok) {
            const auto e = tok.find('=');
            if (e == std::string::npos) throw InvalidInput("[assert] expected key=value, got '" + tok + "'");
            const std::string k = tok.substr(0, e), v = tok.substr(e + 1);
            if (!ait->second.count(k)) throw InvalidInput("[assert] " + key + ": unknown argument " + k);
            if (k == "expect") {
              check_expect(v);
            } else {
              parse_scalar(v);
            }
            a.args[k] = v;
          }
          if (key == "slope" && !a.args.count("expect") && !a.args.count("min") && !a.args.count("max"))
            throw InvalidInput("[assert] slope needs expect, min or max");
          if (key == "equals" && !a.args.count("expect")) throw InvalidInput("[assert] equals needs expect");
          if (key == "ratio_spread" && !a.args.count("max")) throw InvalidInput("[assert] ratio_spread needs max");
          c.assertions.push_back(std::move(a));
          break;
        }
      }
    } catch (const std::exception& e) {
      issues.push_back({line_no, e.what()});
    }
  }

  if (c.stages.empty()) issues.push_back({0, "no pipeline: at least one stage section is required"});
  if (c.h_list.empty() && h_line == 0) issues.push_back({0, "h: missing h list"});
  if (c.h_list.empty() && h_line != 0 && std::none_of(issues.begin(), issues.end(), [&](const ConfigIssue& i) { return i.line == h_line; }))
    issues.push_back({h_line, "h: empty list"});
  if (c.name.empty()) c.name = "experiment";
  if (c.output.empty()) c.output = c.name;
  if (c.output.find("..") != std::string::npos || (!c.output.empty() && c.output.front() == '/'))
    issues.push_back({0, "output must be a relative path below the output root"});

  DataKind flow = DataKind::None;
  for (const auto& s : c.stages) {
    const auto& schema = stage_schemas().at(s.kind);
    for (const auto& [key, ks] : schema)
      if (ks.required && !s.has(key)) issues.push_back({s.line, "[" + s.kind + "] missing required key " + key});
    if (std::all_of(schema.begin(), schema.end(), [&](const auto& kv) { return !kv.second.required || s.has(kv.first); }))
      check_stage(s, issues);
    if (stage_input(s.kind) != flow)
      issues.push_back({s.line, "broken stage chain: [" + s.kind + "] needs " + to_string(stage_input(s.kind)) +
                                    " input but the previous stage produces " + to_string(flow)});
    flow = stage_output(s.kind);
  }
  std::stable_sort(issues.begin(), issues.end(), [](const ConfigIssue& a, const ConfigIssue& b) { return a.line < b.line; });
  if (!issues.empty()) throw ConfigErrors(std::move(issues));
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string tagged(const std::string& name, const std::vector<std::pair<std::string, double>>& tags) {
  if (tags.empty()) return name;
  std::string out = name + "[";
  char buf[64];
  for (size_t i = 0; i < tags.size(); ++i) {
    // Shortest text that reads back to the same double.
    const auto r = std::to_chars(buf, buf + sizeof buf, tags[i].second);
    out += (i ? ";" : "") + tags[i].first + "=" + std::string(buf, r.ptr);
  }
  return out + "]";
}

std::string base_quantity(const std::string& label) { return label.substr(0, label.find('[')); }

std::optional<double> quantity_tag(const std::string& label, const std::string& key) {
  const auto open = label.find('[');
  if (open == std::string::npos || label.back() != ']') return std::nullopt;
  std::istringstream in(label.substr(open + 1, label.size() - open - 2));
  std::string item;
  while (std::getline(in, item, ';')) {
    const auto eq = item.find('=');
    if (eq != std::string::npos && item.substr(0, eq) == key) return parse_scalar(item.substr(eq + 1));
  }
  return std::nullopt;
}

namespace {

struct Context {
  const ExperimentConfig* config = nullptr;
  double h = 0;
  std::optional<Field2D> field;
  std::optional<int> k;
  std::optional<double> alpha;
  std::vector<Measurement>* rows = nullptr;

  void emit(std::string quantity, double value, std::optional<double> p = std::nullopt, std::optional<int> kk = {},
            std::optional<int> j = {}, bool field_tags = true) const {
    Measurement m;
    m.experiment = config->name;
    m.h = h;
    m.p = p;
    m.k = kk ? kk : (field_tags ? k : std::nullopt);
    m.j = j;
    m.alpha = field_tags ? alpha : std::nullopt;
    m.quantity = std::move(quantity);
    m.value = value;
    rows->push_back(std::move(m));
  }
};

double real_or(const StageSpec& s, const std::string& key, double fallback, std::optional<double> h = std::nullopt) {
  return s.has(key) ? parse_scalar(s.text(key), h) : fallback;
}

void run_construct(const StageSpec& s, Context& ctx) {
  const std::string kind = s.text("field");
  ctx.k = s.has("k") ? std::optional<int>(static_cast<int>(parse_int(s.text("k")))) : std::nullopt;
  if (kind == "t_alpha") {
    TAlphaSpec spec;
    spec.h = ctx.h;
    spec.alpha = s.text("alpha") == "alpha_k" ? 1.0 / (*ctx.k + 1) : parse_scalar(s.text("alpha"), ctx.h);
    const double angle = real_or(s, "omega_angle", 0.0);
    spec.omega0 = Vec2(std::cos(angle), std::sin(angle));
    spec.smoothed_edges = s.has("smoothed") && parse_bool(s.text("smoothed"));
    spec.normalization = s.has("normalization") && s.text("normalization") == "analytic" ? TNormalization::AnalyticPrefactor
                                                                                           : TNormalization::UnitL2;
    ctx.alpha = spec.alpha;
    ctx.field = build_t_alpha(spec, t_alpha_grid(spec, ctx.config->oversampling));
  } else {
    ctx.alpha.reset();
    ctx.field = build_flat_model(flat_model_grid(ctx.h, *ctx.k), *ctx.k, real_or(s, "x1_width", 0.375));
  }
  const double noise = real_or(s, "noise", 0.0);
  if (noise > 0) {
    // Seeded per h so reruns and reordered h lists give the same field.
    std::mt19937_64 rng(ctx.config->seed ^ std::bit_cast<std::uint64_t>(ctx.h));
    std::normal_distribution<double> n01;
    const double scale = noise * ctx.field->values.cwiseAbs().maxCoeff() / std::sqrt(2.0);
    auto& v = ctx.field->values;
    for (Index i = 0; i < v.rows(); ++i)
      for (Index j = 0; j < v.cols(); ++j) {
        const double re = n01(rng), im = n01(rng);
        v(i, j) += scale * std::complex<double>(re, im);
      }
  }
  ctx.emit("grid_points", static_cast<double>(ctx.field->grid.points_per_axis));
}

void run_norm(const StageSpec& s, Context& ctx) {
  for (const auto& t : split_list(s.text("p"))) {
    const double p = parse_scalar(t);
    ctx.emit("lp_norm", lp_norm(*ctx.field, p), p);
  }
}

void run_defect(const StageSpec& s, Context& ctx) {
  const SymbolSpec p1 = parse_symbol(s.text("symbol"));
  const std::optional<SymbolSpec> p2 = s.has("symbol2") ? std::optional(parse_symbol(s.text("symbol2"))) : std::nullopt;
  for (const auto& t : split_list(s.text("powers"))) {
    const auto colon = t.find(':');
    const int m1 = static_cast<int>(parse_int(trim(t.substr(0, colon))));
    const int m2 = colon == std::string::npos ? 0 : static_cast<int>(parse_int(trim(t.substr(colon + 1))));
    const DefectReport r = p2 ? joint_defect(p1, *p2, *ctx.field, m1, m2) : defect(p1, *ctx.field, m1);
    const auto tags = std::vector<std::pair<std::string, double>>{{"m1", m1}, {"m2", m2}};
    ctx.emit(tagged("defect", tags), r.defect);
    ctx.emit(tagged("defect_ratio", tags), r.ratio_to_power);
  }
}

void run_propagate(const StageSpec& s, Context& ctx) {
  PhaseOptions o;
  o.dt = real_or(s, "dt", 0.0);
  o.transport_correction = !s.has("correction") || parse_bool(s.text("correction"));
  Warnings w;
  ctx.field = quasimode_pushforward(parse_graph(s.text("graph")), *ctx.field, o, &w);
  ctx.emit("l2_norm_after_propagate", l2_norm(*ctx.field));
  ctx.emit("propagate_warnings", static_cast<double>(w.size()));
}

void run_cwt(const StageSpec& s, Context& ctx) {
  const auto w = WaveletSpec::polynomial_bump();
  const Field2D& v = *ctx.field;
  const GridSpec& g = v.grid;
  const int k = s.has("k") ? static_cast<int>(parse_int(s.text("k"))) : (ctx.k ? *ctx.k : 1);
  const double a_min = real_or(s, "a_min", std::max(2 * g.dx(), std::pow(ctx.h, 0.6)), ctx.h);
  const double a_max = real_or(s, "a_max", 4.0, ctx.h);
  const int per_decade = s.has("per_decade") ? static_cast<int>(parse_int(s.text("per_decade"))) : 12;
  const DyadicPartition part(ctx.h, k);
  for (double a : log_scale_grid(a_min, a_max, per_decade)) {
    const CwtScale sc = spectral_scale(cwt_scale(v, w, a), g);
    for (int j = 0; j <= part.max_band(); ++j) {
      const double n = coefficient_norm(dyadic_project(sc, g, part, j), g, CoefficientDomain::Spectral);
      ctx.emit(tagged("coef_norm", {{"a", a}}), n, std::nullopt, k, j);
    }
  }
}

void run_kernel(const StageSpec& s, Context& ctx) {
  const int k = static_cast<int>(parse_int(s.text("k")));
  const GraphFunction a = s.has("graph") ? parse_graph(s.text("graph")) : graphs::free();
  const auto w = WaveletSpec::polynomial_bump();
  const DyadicPartition part(ctx.h, k);
  const auto table = build_phase(a, make_grid(1.0, 64, ctx.h), {0.0});
  KernelOptions o;
  if (s.has("points_per_period")) o.points_per_period = static_cast<int>(parse_int(s.text("points_per_period")));
  for (const auto& jt : split_list(s.text("j"))) {
    const int j = static_cast<int>(parse_int(jt));
    if (j > part.max_band()) continue;
    for (const auto& at : split_list(s.text("a"))) {
      const double scale = parse_scalar(at, ctx.h);
      for (const auto& tt : split_list(s.text("t"))) {
        const double t = parse_scalar(tt, ctx.h) * scale;
        const KernelSample ks = kernel_sample(table, w, part, j, scale, t, o);
        ctx.emit(tagged("kernel_sup", {{"a", scale}, {"t", t}}), ks.sup, std::nullopt, k, j, false);
      }
    }
  }
}

void run_contact(const StageSpec& s, Context& ctx) {
  const GraphFunction a = s.has("graph") ? parse_graph(s.text("graph")) : graphs::curved_drift();
  const bool circle = s.has("family") && s.text("family") == "contact_circle_graph";
  std::vector<double> x1s;
  for (const auto& t : split_list(s.text("x1"))) x1s.push_back(parse_scalar(t, ctx.h));
  std::vector<Vec2> init;
  for (double y : {-0.3, 0.0, 0.3})
    for (double xi : {-0.5, 0.5}) init.emplace_back(y, xi);
  const double x1_max = *std::max_element(x1s.begin(), x1s.end());
  const auto flow = integrate_flow(a, init, x1_max, {.direction = -1});
  for (const auto& kt : split_list(s.text("k"))) {
    const int k = static_cast<int>(parse_int(kt));
    const GraphFunction q = circle ? graphs::contact_circle(k, 1.0) : graphs::curved_drift_contact(k);
    for (double x1 : x1s) {
      const auto c = conjugated_symbol(a, q, flow, x1);
      const Graph1D ga{[&](double xi) { return c.a_tilde(x1, 0.0, xi); }, {}};
      const Graph1D gq{[&](double xi) { return c.q_tilde(x1, 0.0, xi); }, {}};
      const auto r = contact_order(ga, gq, 0.0, k + 2);
      ctx.emit(tagged("contact_order", {{"x1", x1}}), r.order ? *r.order : -1.0, std::nullopt, k, std::nullopt, false);
    }
  }
}

void run_wstar(const StageSpec& s, Context& ctx) {
  const GraphFunction a = s.has("graph") ? parse_graph(s.text("graph")) : graphs::variable_metric();
  const double xi0 = real_or(s, "xi0", 0.5), x1 = real_or(s, "x1", 0.3), width = real_or(s, "width", 0.2);
  const double L = real_or(s, "half_width", 1.6);
  const double h = ctx.h;
  const Index n = next_fast_size(static_cast<Index>(std::ceil(2 * L * (16 * h / width + 0.6) / (M_PI * h))));
  const GridSpec g = make_grid(L, n, h, Vec2(0, xi0));
  Eigen::VectorXcd v(n);
  for (Index i = 0; i < n; ++i) {
    const double y = g.x(i);
    v[i] = std::exp(-y * y / (2 * width * width)) * std::polar(1.0, xi0 * y / h);
  }
  PhaseOptions o;
  o.dt = real_or(s, "dt", 5e-3);
  o.y_window = position_window(v);
  o.xi_window = output_frequency_window(a, g, v, x1);
  const auto table = build_phase(a, g, {x1}, o);
  const Eigen::VectorXcd wv = apply_w(table, v, x1);
  ctx.emit("wstar_error", (apply_w_star(table, wv, x1) - v).norm() / v.norm(), std::nullopt, std::nullopt, std::nullopt,
           false);
  ctx.emit("norm_deviation", std::abs(wv.norm() / v.norm() - 1), std::nullopt, std::nullopt, std::nullopt, false);
}

using StageRunner = void (*)(const StageSpec&, Context&);

StageRunner runner(const std::string& kind) {
  static const std::map<std::string, StageRunner> r = {
      {"construct", run_construct}, {"norm", run_norm},       {"defect", run_defect}, {"propagate", run_propagate},
      {"cwt", run_cwt},             {"kernel", run_kernel}, {"contact", run_contact}, {"wstar", run_wstar}};
  return r.at(kind);
}

}  // namespace

SweepResult run_sweep(const ExperimentConfig& config, const std::vector<double>& h_list) {
  SweepResult out;
  for (const auto& s : config.stages) {
    if (std::none_of(out.timings.begin(), out.timings.end(), [&](const StageTiming& t) { return t.stage == s.kind; }))
      out.timings.push_back({s.kind, 0.0});
  }
  for (double h : h_list) {
    Context ctx;
    ctx.config = &config;
    ctx.h = h;
    std::vector<Measurement> rows;
    ctx.rows = &rows;
    bool failed = false;
    for (const auto& s : config.stages) {
      const auto t0 = std::chrono::steady_clock::now();
      try {
        runner(s.kind)(s, ctx);
      } catch (const std::exception& e) {
        out.failures.push_back({h, s.kind, e.what()});
        failed = true;
      }
      const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      for (auto& t : out.timings)
        if (t.stage == s.kind) t.seconds += dt;
      if (failed) break;
    }
    // Rows measured before a failing stage are kept.
    out.rows.insert(out.rows.end(), rows.begin(), rows.end());
  }
  return out;
}

}  // namespace qml
