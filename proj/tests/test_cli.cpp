#include "qml/experiment.hpp"
#include "qml/parallel.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace qml;

namespace {

std::vector<ConfigIssue> issues_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigErrors& e) {
    return e.issues();
  }
  return {};
}

bool has_issue(const std::vector<ConfigIssue>& issues, int line, const std::string& fragment) {
  for (const auto& i : issues)
    if (i.line == line && i.message.find(fragment) != std::string::npos) return true;
  return false;
}

std::string csv_of(const SweepResult& r) {
  std::ostringstream out;
  write_csv(out, r.rows);
  return out.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(QML_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("qml_cli_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

const char* kLinfSweep = R"(name = linf
h = 2^-5, 2^-6, 2^-7, 2^-8, 2^-9

[construct]
field = t_alpha
alpha = 1/2

[norm]
p = inf

[assert]
slope = lp_norm p=inf expect=-alpha_growth tol=0.05
increasing = lp_norm p=inf
)";

}  // namespace

TEST_CASE("scalar expressions") {
  CHECK(parse_scalar("0.25") == 0.25);
  CHECK(parse_scalar("2^-5") == 1.0 / 32);
  CHECK(parse_scalar(" 1/3 ") == doctest::Approx(1.0 / 3));
  CHECK(std::isinf(parse_scalar("inf")));
  CHECK(parse_scalar("h^0.5", 0.25) == 0.5);
  CHECK_THROWS_AS(parse_scalar("h^0.5"), InvalidInput);
  CHECK_THROWS_AS(parse_scalar("abc"), InvalidInput);
  CHECK_THROWS_AS(parse_scalar("1/0"), InvalidInput);
  CHECK(split_list(" 1, 2 ,,3 ") == std::vector<std::string>{"1", "2", "3"});
}

TEST_CASE("quantity tags round trip") {
  const std::string q = tagged("kernel_sup", {{"a", 0.1}, {"t", 1.0 / 3}});
  CHECK(q == "kernel_sup[a=0.1;t=0.3333333333333333]");
  CHECK(base_quantity(q) == "kernel_sup");
  CHECK(*quantity_tag(q, "t") == 1.0 / 3);
  CHECK_FALSE(quantity_tag(q, "j").has_value());
  CHECK(tagged("lp_norm", {}) == "lp_norm");
}

TEST_CASE("empty config has no pipeline") {
  const auto issues = issues_of("");
  CHECK(has_issue(issues, 0, "no pipeline"));
  CHECK(has_issue(issues_of("# only a comment\n\n"), 0, "no pipeline"));
}

TEST_CASE("minimal config gets defaults") {
  const auto c = parse_config("h = 2^-5\n[construct]\nfield = t_alpha\nalpha = 0.5\n[norm]\np = 2\n");
  CHECK(c.name == "experiment");
  CHECK(c.output == "experiment");
  CHECK(c.oversampling == 2.0);
  CHECK(c.seed == 0);
  REQUIRE(c.stages.size() == 2);
  CHECK(c.stages[0].kind == "construct");
  CHECK(c.stages[1].line == 5);
  CHECK(c.h_list == std::vector<double>{1.0 / 32});
}

TEST_CASE("config errors carry line numbers and are all reported") {
  const std::string text =
      "name = bad\n"                 // 1
      "h = 0.5, 1.5\n"               // 2
      "colour = red\n"               // 3
      "[construct]\n"                // 4
      "field = t_alpha\n"            // 5
      "alpha = abc\n"                // 6
      "[cwt]\n"                      // 7
      "[norm]\n"                     // 8
      "p = 2\n"                      // 9
      "[bogus]\n"                    // 10
      "[assert]\n"                   // 11
      "slope = lp_norm tol=0.1\n";   // 12
  const auto issues = issues_of(text);
  CHECK(has_issue(issues, 2, "out of range"));
  CHECK(has_issue(issues, 3, "unknown key colour"));
  CHECK(has_issue(issues, 6, "alpha"));
  CHECK(has_issue(issues, 8, "broken stage chain"));
  CHECK(has_issue(issues, 10, "unknown section"));
  CHECK(has_issue(issues, 12, "needs expect"));
  for (size_t i = 1; i < issues.size(); ++i) CHECK(issues[i - 1].line <= issues[i].line);

  CHECK(has_issue(issues_of("h = 1.5\n[construct]\nfield = t_alpha\nalpha = 0.5\n"), 1, "out of range"));
  CHECK(has_issue(issues_of("h = 0.1\n[norm]\np = 2\n"), 2, "broken stage chain"));
  CHECK(has_issue(issues_of("h = 0.1\n[kernel]\nk = one\nj = 0\na = 1\nt = 0\n"), 3, "not an integer"));
  CHECK(has_issue(issues_of("h = 0.1\n[kernel]\nj = 0\na = 1\nt = 0\n"), 2, "missing required key k"));
  CHECK(has_issue(issues_of("h = 0.1\n[defect]\nsymbol = nope\npowers = 1\n"), 3, "unknown symbol"));
  CHECK(has_issue(issues_of("h = 0.1\n[construct]\nfield = flat_model\n"), 3, "needs k"));
  CHECK(has_issue(issues_of("h = 0.1\nh = 0.2\n[wstar]\n"), 2, "duplicate"));
  CHECK(has_issue(issues_of("h = 0.1\n[wstar]\nnot a pair\n"), 3, "key = value"));
  CHECK(has_issue(issues_of("h = 0.1\noutput = ../x\n[wstar]\n"), 0, "relative"));
  CHECK_THROWS_AS(parse_config("h = 0.1\n"), InvalidInput);
}

TEST_CASE("sweep of the L^inf norm of T_{1/2}") {
  const auto c = parse_config(kLinfSweep);
  CHECK(run_sweep(c, {}).rows.empty());

  const auto r = run_sweep(c);
  CHECK(r.failures.empty());
  std::vector<double> norms;
  for (const auto& m : r.rows)
    if (m.quantity == "lp_norm") norms.push_back(m.value);
  REQUIRE(norms.size() == 5);
  for (size_t i = 1; i < norms.size(); ++i) CHECK(norms[i] > norms[i - 1]);

  const auto report = evaluate(c, r);
  REQUIRE(report.assertions.size() == 2);
  CHECK(report.pass());
  CHECK(report.assertions[0].measured == doctest::Approx(-0.25).epsilon(0.2));
  REQUIRE_FALSE(report.fits.empty());
}

TEST_CASE("a failing stage aborts only its h") {
  // t = 2 a = 2 sqrt(h) exceeds 1 only at h = 1/2.
  const auto c = parse_config("name = partial\nh = 0.5, 2^-6\n[kernel]\nk = 1\nj = 0\na = h^0.5\nt = 2\n");
  const auto r = run_sweep(c);
  REQUIRE(r.failures.size() == 1);
  CHECK(r.failures[0].h == 0.5);
  CHECK(r.failures[0].stage == "kernel");
  REQUIRE(r.rows.size() == 1);
  CHECK(r.rows[0].h == 1.0 / 64);
}

TEST_CASE("csv round trip and report determinism") {
  const auto c = parse_config(kLinfSweep);
  const auto r = run_sweep(c);
  const std::string text = csv_of(r);
  CHECK(text.rfind("experiment,h,p,k,j,alpha,quantity,value\n", 0) == 0);
  std::istringstream in(text);
  SweepResult back;
  back.rows = read_csv(in);
  CHECK(csv_of(back) == text);
  CHECK(render_markdown(evaluate(c, back), false) == render_markdown(evaluate(c, r), false));
  std::istringstream bad("h,value\n");
  CHECK_THROWS_AS(read_csv(bad), InvalidInput);
}

TEST_CASE("sweeps do not depend on the worker count") {
  const auto c = parse_config(
      "name = det\nh = 2^-5, 2^-6\nseed = 7\n[construct]\nfield = t_alpha\nalpha = 1/3\nnoise = 0.01\n[norm]\np = 4, inf\n"
      "[defect]\nsymbol = circle_minus_one\npowers = 1\n");
  set_thread_count(1);
  const std::string one = csv_of(run_sweep(c));
  set_thread_count(3);
  const std::string three = csv_of(run_sweep(c));
  set_thread_count(0);
  CHECK(one == three);
  CHECK(csv_of(run_sweep(c)) == one);
}

TEST_CASE("command-line exit codes") {
  CHECK(run_cli("construct --h 2^-5 --alpha 1/2 --p inf") == 0);
  CHECK(run_cli("construct --h 1.5") == 1);
  CHECK(run_cli("construct --bogus") == 1);
  CHECK(run_cli("") == 1);
  CHECK(run_cli("--help") == 0);
  // A single h with j = 4 above the top band leaves the large-separation regime empty.
  CHECK(run_cli("kernel --h 2^-6") == 2);

  const auto dir = scratch_dir("exit");
  {
    std::ofstream f(dir / "fail.ini");
    f << "name = fails\nh = 2^-5, 2^-6, 2^-7\n[construct]\nfield = t_alpha\nalpha = 1/2\n[norm]\np = inf\n"
         "[assert]\nslope = lp_norm expect=0 tol=0.01\n";
  }
  {
    std::ofstream f(dir / "ok.ini");
    f << kLinfSweep;
  }
  const std::string root = (dir / "out").string();
  CHECK(run_cli("sweep --config " + (dir / "fail.ini").string() + " --out " + root) == 2);
  CHECK(run_cli("sweep --config " + (dir / "ok.ini").string() + " --out " + root) == 0);
  CHECK(std::filesystem::exists(dir / "out" / "linf.csv"));
  CHECK(std::filesystem::exists(dir / "out" / "linf.md"));
  CHECK(run_cli("report --config " + (dir / "ok.ini").string() + " --out " + root) == 0);
  CHECK(run_cli("report --config " + (dir / "missing.ini").string() + " --out " + root) == 1);
  std::filesystem::remove_all(dir);
}
