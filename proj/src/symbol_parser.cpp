#include "qml/symbols.hpp"

#include <cctype>
#include <charconv>
#include <map>
#include <set>

namespace qml {
namespace {

struct Call {
  std::string name;
  std::map<std::string, double> args;
};

Call parse_call(const std::string& text) {
  size_t pos = 0;
  const auto skip = [&] {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  };
  const auto fail = [&](const std::string& what) {
    throw InvalidInput("symbol expression '" + text + "': " + what + " at column " + std::to_string(pos + 1));
  };
  const auto identifier = [&] {
    skip();
    const size_t start = pos;
    while (pos < text.size() && (std::isalnum(static_cast<unsigned char>(text[pos])) || text[pos] == '_')) ++pos;
    if (pos == start || std::isdigit(static_cast<unsigned char>(text[start]))) fail("expected identifier");
    return text.substr(start, pos - start);
  };
  Call call;
  call.name = identifier();
  skip();
  if (pos < text.size() && text[pos] == '(') {
    ++pos;
    skip();
    if (pos < text.size() && text[pos] == ')') {
      ++pos;
    } else {
      for (;;) {
        const std::string key = identifier();
        skip();
        if (pos >= text.size() || text[pos] != '=') fail("expected '='");
        ++pos;
        skip();
        double value = 0;
        const char* begin = text.data() + pos;
        const auto [ptr, ec] = std::from_chars(begin, text.data() + text.size(), value);
        if (ec != std::errc()) fail("expected a number");
        pos += static_cast<size_t>(ptr - begin);
        if (!call.args.emplace(key, value).second) fail("duplicate key '" + key + "'");
        skip();
        if (pos < text.size() && text[pos] == ',') {
          ++pos;
          continue;
        }
        if (pos < text.size() && text[pos] == ')') {
          ++pos;
          break;
        }
        fail("expected ',' or ')'");
      }
    }
  }
  skip();
  if (pos != text.size()) fail("unexpected trailing text");
  return call;
}

void allow_keys(const Call& call, std::set<std::string> allowed) {
  for (const auto& [key, value] : call.args)
    if (!allowed.count(key)) throw InvalidInput("symbol '" + call.name + "': unknown parameter '" + key + "'");
}

int int_arg(const Call& call, const std::string& key, int fallback) {
  const auto it = call.args.find(key);
  if (it == call.args.end()) return fallback;
  if (it->second != std::floor(it->second))
    throw InvalidInput("symbol '" + call.name + "': parameter '" + key + "' must be an integer");
  return static_cast<int>(it->second);
}

double real_arg(const Call& call, const std::string& key, double fallback) {
  const auto it = call.args.find(key);
  return it == call.args.end() ? fallback : it->second;
}

std::optional<GraphFunction> graph_from_call(const Call& call) {
  const auto& n = call.name;
  if (n == "circle_graph" || n == "free" || n == "dilation" || n == "translation" || n == "zero" ||
      n == "curved_drift" || n == "variable_metric") {
    allow_keys(call, {});
    if (n == "circle_graph") return graphs::circle();
    if (n == "free") return graphs::free();
    if (n == "dilation") return graphs::dilation();
    if (n == "translation") return graphs::translation();
    if (n == "zero") return graphs::zero();
    if (n == "variable_metric") return graphs::variable_metric();
    return graphs::curved_drift();
  }
  if (n == "contact_circle_graph") {
    allow_keys(call, {"k", "c"});
    return graphs::contact_circle(int_arg(call, "k", 1), real_arg(call, "c", 1.0));
  }
  if (n == "flat_contact_graph") {
    allow_keys(call, {"k", "c"});
    return graphs::flat_contact(int_arg(call, "k", 1), real_arg(call, "c", 1.0));
  }
  if (n == "curved_drift_contact") {
    allow_keys(call, {"k"});
    return graphs::curved_drift_contact(int_arg(call, "k", 1));
  }
  return std::nullopt;
}

}  // namespace

GraphFunction parse_graph(const std::string& text) {
  const Call call = parse_call(text);
  if (auto g = graph_from_call(call)) return *g;
  throw InvalidInput("unknown graph function '" + call.name + "'");
}

SymbolSpec parse_symbol(const std::string& text) {
  const Call call = parse_call(text);
  const auto& n = call.name;
  if (n == "circle" || n == "circle_minus_one") {
    allow_keys(call, {});
    return SymbolSpec::circle_minus_one();
  }
  if (n == "contact_circle") {
    allow_keys(call, {"k", "c"});
    return SymbolSpec::contact_perturbed_circle(int_arg(call, "k", 1), real_arg(call, "c", 1.0));
  }
  if (n == "flat_contact") {
    allow_keys(call, {"k", "c"});
    return SymbolSpec::flat_contact(int_arg(call, "k", 1), real_arg(call, "c", 1.0));
  }
  if (n == "dx1") {
    allow_keys(call, {});
    return SymbolSpec::graph(graphs::zero());
  }
  if (n == "dx2_power") {
    // h^{k+1} D_{x2}^{k+1}
    allow_keys(call, {"k"});
    const int k = int_arg(call, "k", 1);
    if (k < 0) throw InvalidInput("dx2_power: k must be >= 0");
    return SymbolSpec::custom(
        "dx2_power(k=" + std::to_string(k) + ")", [k](const Vec2&, const Vec2& xi) { return ipow(xi[1], k + 1); },
        false);
  }
  if (auto g = graph_from_call(call)) return SymbolSpec::graph(*g);
  throw InvalidInput("unknown symbol '" + n + "'");
}

}  // namespace qml
