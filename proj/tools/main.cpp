/**
 * @file main.cpp
 * @brief bergman-lab command line: config runner, bundled demos and single-purpose front-ends.
 *
 * Exit status: 0 success, 1 asserted invariant failed, 2 schema or parameter error, 3 budget exhausted.
 */
#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

#include "bergman/pipeline.hpp"

namespace fs = std::filesystem;
using bergman::json;

namespace {

struct Common {
  std::string out;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  double budget = 0;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--out", c.out, "output directory (default: $BERGMAN_OUT or ./runs)");
  app->add_option("--seed", c.seed, "root seed override");
  app->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
  app->add_option("--budget-seconds", c.budget, "time budget override")->check(CLI::NonNegativeNumber);
}

fs::path demo_dir() {
  if (const char* e = std::getenv("BERGMAN_DEMO_DIR")) return e;
  return BERGMAN_DEMO_DIR;
}

fs::path out_root(const Common& c) {
  if (!c.out.empty()) return c.out;
  if (const char* e = std::getenv("BERGMAN_OUT")) return e;
  return "runs";
}

/// A path, or the name of a bundled demo.
fs::path resolve_config(const std::string& s) {
  if (fs::exists(s)) return s;
  fs::path demo = demo_dir() / (s + ".json");
  if (fs::exists(demo)) return demo;
  throw bergman::SchemaError("no config file or bundled demo named '" + s + "'");
}

int execute(json config, const Common& c) {
  if (c.seed) config["seed"] = *c.seed;
  bergman::set_threads(c.threads);
  auto res = bergman::run_config(config, c.budget);
  fs::path dir = out_root(c) / res.name;
  bergman::write_report(res, config, dir);
  for (const auto& p : res.pipelines)
    for (const auto& a : p.assertions) {
      std::cout << (a.pass ? "PASS " : "FAIL ") << p.id << ": " << a.metric << " = " << a.actual << " (required " << a.op << " " << a.value << ")";
      if (!a.pass && !p.witness.empty()) std::cout << " witness " << p.witness.dump();
      std::cout << "\n";
    }
  std::cout << "summary: " << (dir / "summary.json").string() << " [" << (res.pass ? "pass" : "fail") << "]\n";
  return res.pass ? 0 : 1;
}

/// "annulus:0.5", "halfdisc", "whole", "net:spacing:delta_min", "radii:count" or a JSON object.
json set_preset(const std::string& s) {
  if (!s.empty() && s.front() == '{') return json::parse(s);
  auto parts = std::vector<std::string>{};
  std::stringstream ss(s);
  for (std::string t; std::getline(ss, t, ':');) parts.push_back(t);
  auto num = [&](std::size_t i, double def) { return parts.size() > i ? std::stod(parts[i]) : def; };
  if (parts.empty()) throw bergman::SchemaError("empty set preset");
  const std::string& k = parts[0];
  if (k == "annulus") return {{"kind", "annulus"}, {"r0", num(1, 0.5)}};
  if (k == "halfdisc") return {{"kind", "halfspace"}, {"normal", {1.0, 0.0}}};
  if (k == "whole") return {{"kind", "whole"}};
  if (k == "net") return {{"kind", "curve_net"}, {"spacing", num(1, 0.4)}, {"delta_min", num(2, 5e-3)}};
  if (k == "radii") return {{"kind", "radii"}, {"count", static_cast<int>(num(1, 64))}};
  throw bergman::SchemaError("unknown set preset '" + s + "'");
}

json parse_point(const std::string& s) {
  json a = json::array();
  std::stringstream ss(s);
  for (std::string t; std::getline(ss, t, ',');) a.push_back(std::stod(t));
  if (a.size() != 2 && a.size() != 4) throw bergman::SchemaError("points are 're,im' or 're1,im1,re2,im2'");
  return a;
}

/// "metric>=value" style assertions.
json parse_asserts(const std::vector<std::string>& in) {
  json out = json::array();
  for (const auto& s : in) {
    std::size_t pos = s.find_first_of("<>=");
    if (pos == std::string::npos || pos == 0) throw bergman::SchemaError("assertion '" + s + "' is not metric<op>value");
    std::size_t end = s.find_first_not_of("<>=", pos);
    if (end == std::string::npos) throw bergman::SchemaError("assertion '" + s + "' has no value");
    out.push_back({{"metric", s.substr(0, pos)}, {"op", s.substr(pos, end - pos)}, {"value", std::stod(s.substr(end))}});
  }
  return out;
}

json single(const std::string& name, const std::string& domain, json pipeline, const std::vector<std::string>& asserts, json sets = json::object()) {
  if (!asserts.empty()) pipeline["assert"] = parse_asserts(asserts);
  json c = {{"name", name}, {"seed", 1}, {"domain", {{"kind", domain}}}, {"pipelines", json::array({pipeline})}};
  if (!sets.empty()) c["sets"] = sets;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Numerical experiments for weighted Bergman spaces: kernels, Kobayashi balls, dominating sets, sampling and reverse Carleson measures"};
  app.require_subcommand(1);
  Common common;

  std::string config_path;
  auto* run = app.add_subcommand("run", "run a config file or bundled demo");
  run->add_option("--config,config", config_path, "config path or demo name")->required();
  add_common(run, common);

  auto* list = app.add_subcommand("list-demos", "list bundled demo configs");

  std::string domain = "disc", set = "annulus:0.5";
  std::vector<std::string> asserts;
  auto front = [&](const char* name, const char* help) {
    auto* s = app.add_subcommand(name, help);
    add_common(s, common);
    s->add_option("--domain", domain, "disc or ball")->check(CLI::IsMember({"disc", "ball"}));
    s->add_option("--assert", asserts, "assertion metric<op>value (repeatable)");
    return s;
  };

  std::vector<double> alphas{0.0};
  int degree = -1;
  auto* kernel = front("kernel", "series kernel against the closed form");
  kernel->add_option("--alpha", alphas, "weight exponents");
  kernel->add_option("--degree", degree, "truncation degree");

  std::string zs = "0.5,0", ws = "0.9,0.1";
  double radius = 0.5;
  auto* kob = front("kobayashi", "Kobayashi distance and ball volume");
  kob->add_option("--z", zs, "first point re,im[,re2,im2]");
  kob->add_option("--w", ws, "second point");
  kob->add_option("--r", radius, "ball radius (tanh of the Kobayashi radius)");

  int jmax = 8;
  double p = 2, alpha = 0;
  auto* dens = front("density", "relative density over collar centers");
  dens->add_option("--set", set, "set preset or JSON");
  dens->add_option("--r", radius, "ball radius");
  dens->add_option("--jmax", jmax, "collar depth 2^-jmax");

  auto* ber = front("berezin", "Berezin transform of an indicator over collar centers");
  ber->add_option("--set", set, "set preset or JSON");
  ber->add_option("--p", p, "exponent");
  ber->add_option("--alpha", alpha, "weight exponent");
  ber->add_option("--jmax", jmax, "collar depth 2^-jmax");

  std::vector<double> gammas{0.4, 0.2, 0.1, 0.05};
  int max_degree = 30, grid = 128;
  auto* ts = front("three-sphere", "Carleman weights and the three-sphere bound");
  ts->add_option("--gamma", gammas, "relative sizes of E in Y");
  ts->add_option("--max-degree", max_degree, "largest polynomial degree");
  ts->add_option("--grid", grid, "grid resolution");

  std::vector<int> degrees{10, 30, 50};
  auto* dom = front("dominate", "empirical domination constant over a degree schedule");
  dom->add_option("--set", set, "set preset or JSON");
  dom->add_option("--degrees", degrees, "degree schedule");
  dom->add_option("--p", p, "exponent");
  dom->add_option("--alpha", alpha, "weight exponent");

  double spacing = 0.2;
  bool sector = false;
  auto* smp = front("sample", "point sampling constant on a hyperbolic lattice");
  smp->add_option("--spacing", spacing, "lattice spacing");
  smp->add_option("--degrees", degrees, "degree schedule");
  smp->add_flag("--remove-sector", sector, "also run with a boundary sector deleted");

  std::vector<double> spacings{0.2, 0.1};
  auto* rc = front("reverse-carleson", "reverse Carleson check for lattice sampling measures");
  rc->add_option("--spacing", spacings, "lattice spacings (coarse to fine)");
  rc->add_option("--degrees", degrees, "degree schedule");

  int fit_trials = 200, check_trials = 100;
  auto* zer = front("zeros", "argument-principle counts and the doubling bound");
  zer->add_option("--fit-trials", fit_trials, "calibration trials");
  zer->add_option("--check-trials", check_trials, "verification trials");
  zer->add_option("--degree", degree, "polynomial degree");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*list) {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(demo_dir()))
        if (e.path().extension() == ".json") files.push_back(e.path());
      std::sort(files.begin(), files.end());
      for (const auto& f : files) {
        auto j = bergman::load_config(f);
        std::cout << f.stem().string() << "\t" << j.value("covers", "") << "\n";
      }
      return 0;
    }
    if (*run) return execute(bergman::load_config(resolve_config(config_path)), common);

    auto centers = json{{"kind", "collar"}, {"jmax", jmax}};
    auto ensemble = json{{"degree", 10}, {"random_count", 10}, {"kernel_points", {{0.0, -0.95}, {-0.9, 0.3}}}};
    if (*kernel) {
      json pl = {{"op", "kernel"}, {"alpha", alphas}};
      if (degree > 0) pl["degree"] = degree;
      return execute(single("kernel", domain, pl, asserts), common);
    }
    if (*kob) return execute(single("kobayashi", domain, {{"op", "kobayashi"}, {"r", radius}, {"pairs", {{parse_point(zs), parse_point(ws)}}}}, asserts), common);
    if (*dens)
      return execute(single("density", domain, {{"op", "density"}, {"set", "E"}, {"r", radius}, {"centers", centers}}, asserts, {{"E", set_preset(set)}}), common);
    if (*ber)
      return execute(single("berezin", domain, {{"op", "berezin"}, {"set", "E"}, {"p", p}, {"alpha", alpha}, {"centers", centers}}, asserts,
                            {{"E", set_preset(set)}}),
                     common);
    if (*ts)
      return execute(single("three-sphere", "disc",
                            {{"op", "three-sphere"},
                             {"X", {{"kind", "disc"}, {"r", 0.5}}},
                             {"Y", {{"kind", "disc"}, {"r", 0.125}}},
                             {"gammas", gammas},
                             {"max_degree", max_degree},
                             {"grid", grid}},
                            asserts),
                     common);
    if (*dom)
      return execute(single("dominate", domain, {{"op", "dominate"}, {"set", "E"}, {"p", p}, {"alpha", alpha}, {"degrees", degrees}, {"ensemble", ensemble}},
                            asserts, {{"E", set_preset(set)}}),
                     common);
    if (*smp) {
      json variants = {{"lattice", {{"kind", "lattice"}, {"spacing", spacing}, {"delta_min", 2e-3}}}};
      if (sector)
        variants["sector_removed"] = {{"kind", "lattice"}, {"spacing", spacing}, {"delta_min", 2e-3},
                                      {"remove_sector", {{"theta", bergman::pi}, {"half_width", 0.4}, {"rmin", 0.7}}}};
      return execute(single("sample", "disc", {{"op", "sample"}, {"variants", variants}, {"reference", "lattice"}, {"degrees", degrees}, {"ensemble", ensemble}},
                            asserts),
                     common);
    }
    if (*rc)
      return execute(single("reverse-carleson", "disc",
                            {{"op", "reverse-carleson"},
                             {"spacings", spacings},
                             {"degrees", degrees},
                             {"scan_centers", {{"kind", "scan"}, {"jmax", 6}}},
                             {"density_centers", {{"kind", "collar"}, {"rays", 8}, {"jmax", 4}}},
                             {"ensemble", ensemble}},
                            asserts),
                     common);
    if (*zer) {
      json pl = {{"op", "zeros"}, {"fit_trials", fit_trials}, {"check_trials", check_trials}};
      if (degree > 0) pl["degree"] = degree;
      return execute(single("zeros", "disc", pl, asserts), common);
    }
  } catch (const bergman::SchemaError& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return 2;
  } catch (const bergman::BudgetExceeded& e) {
    std::cerr << "budget exhausted: " << e.what() << "\n";
    return 3;
  } catch (const json::exception& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return 2;
  } catch (const bergman::BergmanError& e) {
    std::cerr << "parameter error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
