// qml: command-line front end for the quasimode experiments.
#include "qml/container_io.hpp"
#include "qml/experiment.hpp"
#include "qml/quasimodes.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

using namespace qml;

namespace {

struct Flags {
  std::string h = "2^-6";
  std::string alpha = "1/2";
  int k = 1;
  std::string p = "2, 4, 6, 8, inf";
  std::string config;
  std::string out;
};

// Single-shot subcommands are one-stage sweeps over the --h list, printed as CSV.
int run_text(const std::string& text, const std::string& out) {
  const ExperimentConfig c = parse_config(text);
  const SweepResult r = run_sweep(c);
  for (const auto& f : r.failures) std::cerr << "h=" << f.h << " " << f.stage << ": " << f.reason << "\n";
  if (out.empty()) {
    write_csv(std::cout, r.rows);
  } else {
    std::ofstream f(out, std::ios::binary);
    if (!f) throw InvalidInput("cannot write " + out);
    write_csv(f, r.rows);
  }
  return r.failures.empty() ? 0 : 1;
}

std::string construct_section(const Flags& f) {
  return "[construct]\nfield = t_alpha\nalpha = " + f.alpha + "\nk = " + std::to_string(f.k) + "\n";
}

std::string header(const std::string& name, const Flags& f) { return "name = " + name + "\nh = " + f.h + "\n"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint quasimode experiments: construct fields, measure defects and norms, run sweeps."};
  // -h would collide with --h.
  app.set_help_flag("--help", "Print this help message and exit");
  app.require_subcommand(1);
  Flags f;

  const auto add_h = [&](CLI::App* s) { s->add_option("--h", f.h, "h value or comma list, e.g. 2^-6 or 2^-5,2^-6"); };
  const auto add_alpha = [&](CLI::App* s) { s->add_option("--alpha", f.alpha, "angular exponent, or alpha_k for 1/(k+1)"); };
  const auto add_k = [&](CLI::App* s) { s->add_option("--k", f.k, "contact order")->check(CLI::PositiveNumber); };

  auto* construct = app.add_subcommand("construct", "Build T^h_alpha and print its L^p norms");
  add_h(construct);
  add_alpha(construct);
  add_k(construct);
  construct->add_option("--p", f.p, "comma list of exponents (inf allowed)");
  construct->add_option("--out", f.out, "write the field (single h) as a QML1 container");

  auto* defect = app.add_subcommand("defect", "Joint defects of T^h_alpha for |xi|^2 - 1 and the contact-k circle");
  add_h(defect);
  add_alpha(defect);
  add_k(defect);
  defect->add_option("--out", f.out, "CSV output path (stdout when empty)");

  auto* propagate = app.add_subcommand("propagate", "Push the flat-model quasimode through W along curved_drift");
  add_h(propagate);
  add_k(propagate);
  propagate->add_option("--out", f.out, "CSV output path (stdout when empty)");

  auto* cwt = app.add_subcommand("cwt", "Band-projected wavelet coefficient norms of the flat model");
  add_h(cwt);
  add_k(cwt);
  cwt->add_option("--out", f.out, "CSV output path (stdout when empty)");

  auto* kernel = app.add_subcommand("kernel", "Kernel samples and the two-regime bound check");
  add_h(kernel);
  add_k(kernel);
  kernel->add_option("--out", f.out, "CSV output path (stdout when empty)");

  auto* sweep = app.add_subcommand("sweep", "Run a config: CSV and markdown report under --out");
  sweep->add_option("--config", f.config, "experiment config")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out", f.out, "output root directory")->required();

  auto* report = app.add_subcommand("report", "Rebuild the markdown report from a sweep's CSV");
  report->add_option("--config", f.config, "experiment config")->required()->check(CLI::ExistingFile);
  report->add_option("--out", f.out, "output root directory holding the CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (construct->parsed()) {
      if (!f.out.empty()) {
        TAlphaSpec spec;
        spec.h = parse_scalar(f.h);
        spec.alpha = f.alpha == "alpha_k" ? 1.0 / (f.k + 1) : parse_scalar(f.alpha);
        write_field(std::filesystem::path(f.out), build_t_alpha(spec, t_alpha_grid(spec)));
      }
      return run_text(header("construct", f) + construct_section(f) + "[norm]\np = " + f.p + "\n", "");
    }
    if (defect->parsed()) {
      const std::string ks = std::to_string(f.k);
      return run_text(header("defect", f) + construct_section(f) +
                          "[defect]\nsymbol = circle_minus_one\nsymbol2 = contact_circle(k=" + ks +
                          ", c=1)\npowers = 1:0, 0:1, 1:1, 2:0\n",
                      f.out);
    }
    if (propagate->parsed()) {
      return run_text(header("propagate", f) + "[construct]\nfield = flat_model\nk = " + std::to_string(f.k) +
                          "\n[norm]\np = 2, inf\n[propagate]\ngraph = curved_drift\ndt = 5e-2\n[norm]\np = 2, inf\n"
                          "[defect]\nsymbol = dx1\npowers = 1\n",
                      f.out);
    }
    if (cwt->parsed()) {
      return run_text(header("cwt", f) + "[construct]\nfield = flat_model\nk = " + std::to_string(f.k) + "\n[cwt]\n",
                      f.out);
    }
    if (kernel->parsed()) {
      const std::string text = header("kernel", f) + "[kernel]\nk = " + std::to_string(f.k) +
                               "\nj = 0, 2, 4\na = h^0.3, 0.5\nt = 0, 0.02, 0.05, 0.1\n[assert]\nkernel_bound = kernel_sup\n";
      const ExperimentConfig c = parse_config(text);
      const RunReport r = evaluate(c, run_sweep(c));
      if (f.out.empty()) {
        write_csv(std::cout, r.sweep.rows);
      } else {
        std::ofstream o(f.out, std::ios::binary);
        write_csv(o, r.sweep.rows);
      }
      for (const auto& a : r.assertions) std::cerr << (a.pass ? "PASS " : "FAIL ") << a.description << ": " << a.detail << "\n";
      return r.pass() ? 0 : 2;
    }
    if (sweep->parsed()) {
      const auto outputs = run_experiment(load_config(f.config), f.out);
      for (const auto& a : outputs.report.assertions)
        std::cout << (a.pass ? "PASS " : "FAIL ") << a.description << " measured=" << a.measured << "\n";
      std::cout << "wrote " << outputs.csv.string() << " and " << outputs.markdown.string() << "\n";
      return outputs.report.pass() ? 0 : 2;
    }
    if (report->parsed()) {
      const ExperimentConfig c = load_config(f.config);
      const auto csv = std::filesystem::path(f.out) / (c.output + ".csv");
      std::ifstream in(csv);
      if (!in) throw InvalidInput("cannot read " + csv.string());
      SweepResult s;
      s.rows = read_csv(in);
      const RunReport r = evaluate(c, std::move(s));
      const auto md = std::filesystem::path(f.out) / (c.output + ".md");
      std::ofstream o(md, std::ios::binary);
      o << render_markdown(r, false);
      for (const auto& a : r.assertions) std::cout << (a.pass ? "PASS " : "FAIL ") << a.description << " measured=" << a.measured << "\n";
      std::cout << "wrote " << md.string() << "\n";
      return r.pass() ? 0 : 2;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
