// Command-line front end: solve, diagnose, bench and generate.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "poba/poba.hpp"

namespace fs = std::filesystem;

namespace {

struct SolverSpec {
  poba::SolverKind kind;
  int precision;
  std::string label;
};

SolverSpec parse_solver_spec(const std::string& s) {
  std::string name = s;
  int precision = 64;
  if (name.size() > 2 && (name.ends_with("32") || name.ends_with("64"))) {
    precision = std::stoi(name.substr(name.size() - 2));
    name.resize(name.size() - 2);
    if (name.ends_with("-")) name.pop_back();
  }
  return {poba::parse_solver_kind(name), precision, s};
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

poba::BalProblem load_problem(const std::string& path) {
  auto parsed = poba::load_bal(path);
  if (parsed.pruned_cameras || parsed.pruned_points)
    std::cerr << "warning: pruned " << parsed.pruned_cameras << " cameras and "
              << parsed.pruned_points << " points without observations\n";
  return std::move(parsed.problem);
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void write_file(const fs::path& path, const std::string& content) {
  auto out = open_output(path);
  out << content;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Power-series bundle adjustment"};
  app.require_subcommand(1);

  // solve
  auto* solve = app.add_subcommand("solve", "Run Levenberg-Marquardt on a BAL problem");
  std::string input, solver_name = "poba", trace_out, summary_out;
  int precision = 64, max_order = 20, max_iterations = 50, threads = 1;
  double epsilon = 0.01, sigma = 0.0;
  std::uint64_t seed = 0;
  std::size_t max_cluster_size = 100;
  solve->add_option("--input", input, "BAL problem file")->required()->check(CLI::ExistingFile);
  solve->add_option("--solver", solver_name, "poba|pcg|pcg-power|direct|post")
      ->check(CLI::IsMember({"poba", "pcg", "pcg-power", "direct", "post"}));
  solve->add_option("--precision", precision, "block precision")->check(CLI::IsMember({32, 64}));
  solve->add_option("--epsilon", epsilon, "series stop threshold");
  solve->add_option("--max-order", max_order, "maximal series order");
  solve->add_option("--sigma", sigma, "Gaussian noise on points and translations");
  solve->add_option("--seed", seed, "noise seed");
  solve->add_option("--trace-out", trace_out, "trace CSV path");
  solve->add_option("--summary-out", summary_out, "summary JSON path");
  solve->add_option("--max-cluster-size", max_cluster_size, "cluster cap for --solver post");
  solve->add_option("--max-iterations", max_iterations, "LM iteration cap");
  solve->add_option("--threads", threads, "worker threads for landmark passes");

  // diagnose
  auto* diagnose = app.add_subcommand("diagnose", "Series error against its theoretical bound");
  std::string report_out;
  double diag_lambda = 1e-4;
  diagnose->add_option("--input", input, "BAL problem file")->required()->check(CLI::ExistingFile);
  diagnose->add_option("--max-order", max_order, "largest order m to report");
  diagnose->add_option("--report-out", report_out, "CSV with m,bound,measured_error")->required();
  diagnose->add_option("--sigma", sigma, "Gaussian noise on points and translations");
  diagnose->add_option("--seed", seed, "noise seed");
  diagnose->add_option("--lambda", diag_lambda, "damping of the analysed system");

  // bench
  auto* bench = app.add_subcommand("bench", "Benchmark solvers and emit performance profiles");
  std::string problems_dir, solvers_list = "poba64,poba32,pcg", tau_list = "0.1,0.01,0.003,0.001",
                            out_dir;
  double bench_sigma = 0.01;
  bench->add_option("--problems", problems_dir, "directory of BAL files")->required()
      ->check(CLI::ExistingDirectory);
  bench->add_option("--solvers", solvers_list, "comma separated solver list");
  bench->add_option("--tau", tau_list, "comma separated tolerances");
  bench->add_option("--out", out_dir, "output directory")->required();
  bench->add_option("--sigma", bench_sigma, "Gaussian noise on points and translations");
  bench->add_option("--seed", seed, "noise seed");
  bench->add_option("--max-iterations", max_iterations, "LM iteration cap");

  // generate
  auto* generate = app.add_subcommand("generate", "Write a synthetic BAL problem");
  std::string kind = "random", gen_out;
  std::size_t gen_cameras = 10, gen_points = 200;
  generate->add_option("--kind", kind, "random|ladybug")->check(CLI::IsMember({"random", "ladybug"}));
  auto* cameras_opt = generate->add_option("--cameras", gen_cameras, "camera count");
  auto* points_opt = generate->add_option("--points", gen_points, "point count");
  generate->add_option("--seed", seed, "generator seed");
  generate->add_option("--out", gen_out, "output BAL path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*solve) {
      const auto problem = poba::perturb(load_problem(input), sigma, seed);
      poba::LmConfig cfg;
      cfg.solver = poba::parse_solver_kind(solver_name);
      cfg.precision = precision;
      cfg.epsilon = epsilon;
      cfg.max_order = max_order;
      cfg.max_cluster_size = max_cluster_size;
      cfg.max_outer_iterations = max_iterations;
      cfg.num_threads = threads;
      auto res = poba::run(problem, cfg, seed);
      res.trace.problem = fs::path(input).stem().string();
      if (!trace_out.empty()) {
        auto out = open_output(trace_out);
        poba::write_trace(res.trace, out);
      }
      const auto summary = poba::summary_json(res.trace);
      if (!summary_out.empty()) write_file(summary_out, summary.dump(2) + "\n");
      std::cout << summary.dump() << "\n";
      std::cout << "termination: " << res.trace.termination << "\n";
      return 0;
    }

    if (*diagnose) {
      const auto problem = poba::perturb(load_problem(input), sigma, seed);
      const auto sys = poba::assemble<double>(problem, diag_lambda);
      const auto est = poba::estimate_spectral_radius(sys, 1e-12, 200000);
      const auto rep = poba::verify_error_bound(sys, max_order);
      auto out = open_output(report_out);
      out << "m,bound,measured_error\n";
      out.precision(17);
      for (std::size_t m = 0; m < rep.error_bound.size(); ++m)
        out << m << ',' << rep.error_bound[m] << ',' << rep.measured_error_curve[m] << '\n';
      std::cout.precision(10);
      std::cout << "rho(P) dense = " << rep.rho_P << ", power iteration = " << est.rho
                << (est.converged ? "" : " (not converged)") << " after " << est.iterations
                << " iterations\n";
      std::cout << (rep.first_violation < 0 ? "bound holds for all m\n"
                                            : "bound violated at m = " +
                                                  std::to_string(rep.first_violation) + "\n");
      return rep.first_violation < 0 ? 0 : 2;
    }

    if (*bench) {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(problems_dir))
        if (e.is_regular_file()) files.push_back(e.path());
      std::sort(files.begin(), files.end());
      if (files.empty()) throw std::runtime_error("no problems in " + problems_dir);
      fs::create_directories(out_dir);
      std::vector<SolverSpec> specs;
      for (const auto& s : split(solvers_list, ',')) specs.push_back(parse_solver_spec(s));
      std::vector<poba::RunRecord> records;
      nlohmann::json summaries = nlohmann::json::array();
      for (const auto& f : files) {
        const auto problem = poba::perturb(load_problem(f.string()), bench_sigma, seed);
        for (const auto& spec : specs) {
          poba::LmConfig cfg;
          cfg.solver = spec.kind;
          cfg.precision = spec.precision;
          cfg.max_outer_iterations = max_iterations;
          auto res = poba::run(problem, cfg, seed);
          res.trace.problem = f.stem().string();
          res.trace.solver = spec.label;
          auto tout = open_output(fs::path(out_dir) / (f.stem().string() + "__" + spec.label + ".csv"));
          poba::write_trace(res.trace, tout);
          records.push_back(poba::RunRecord::from_trace(res.trace));
          summaries.push_back(poba::summary_json(res.trace));
          std::cout << f.stem().string() << " " << spec.label << " final_cost="
                    << res.trace.final_cost() << " time=" << res.trace.total_time_s() << "s\n";
        }
      }
      write_file(fs::path(out_dir) / "summary.json", summaries.dump(2) + "\n");
      std::ostringstream tables;
      for (const auto& t : split(tau_list, ',')) {
        const double tau = std::stod(t);
        std::ostringstream csv;
        poba::write_profile_csv(poba::performance_profile(records, tau, poba::default_alpha_grid()),
                                csv);
        write_file(fs::path(out_dir) / ("profile_tau_" + t + ".csv"), csv.str());
        poba::write_solved_table(records, tau, tables);
      }
      write_file(fs::path(out_dir) / "solved_tables.csv", tables.str());
      std::cout << tables.str();
      return 0;
    }

    if (*generate) {
      poba::BalProblem p;
      if (kind == "ladybug") {
        p = poba::make_ladybug_like(seed == 0 ? 49 : seed, cameras_opt->count() ? gen_cameras : 49,
                                    points_opt->count() ? gen_points : 7776);
      } else {
        poba::SyntheticOptions opt;
        opt.num_cameras = gen_cameras;
        opt.num_points = gen_points;
        opt.seed = seed;
        p = poba::make_synthetic_problem(opt);
      }
      auto out = open_output(gen_out);
      poba::serialize_bal(p, out);
      std::cout << "wrote " << p.num_cameras() << " cameras, " << p.num_points() << " points, "
                << p.num_observations() << " observations to " << gen_out << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
