#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "rmdpg/config.hpp"
#include "rmdpg/runio.hpp"
#include "rmdpg/verify.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitNumerical = 1;
constexpr int kExitUsage = 2;

int resolve_threads(int cli_threads, int config_threads) {
  if (cli_threads > 0) return cli_threads;
  if (const char* env = std::getenv("RMDPG_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return config_threads;
}

int cmd_run(const std::string& config_path, const std::string& out_dir, int cli_threads, bool dump_kernels_flag) {
  const auto cfg = rmdpg::load_run_config(config_path);
  auto problem = rmdpg::make_problem(cfg);
  auto opt = rmdpg::make_run_options(cfg);
  opt.threads = resolve_threads(cli_threads, cfg.threads);

  std::filesystem::create_directories(out_dir);
  const auto res = rmdpg::run_pipeline(problem, opt);

  const std::string csv_name = cfg.csv.empty() ? cfg.default_csv_name() : cfg.csv;
  const std::string csv_path = (std::filesystem::path(out_dir) / csv_name).string();
  rmdpg::write_file(csv_path, rmdpg::records_to_csv(res.records));
  rmdpg::write_file(csv_path + ".timings.txt", rmdpg::records_to_timings(res.records));

  if (cfg.dump_meshes) {
    std::ostringstream os;
    res.final_mesh.write(os);
    rmdpg::write_file((std::filesystem::path(out_dir) / (csv_name + ".mesh.txt")).string(), os.str());
    const rmdpg::TrialLayout layout(res.final_mesh, rmdpg::make_kernel_config(problem.config));
    rmdpg::write_file((std::filesystem::path(out_dir) / (csv_name + ".solution.txt")).string(),
                      rmdpg::dump_solution_text(res.final_mesh, layout, res.final_solution));
  }
  if (cfg.dump_kernels || dump_kernels_flag) {
    const auto kcfg = rmdpg::make_kernel_config(problem.config);
    const auto grad_r = rmdpg::p1_gradients(res.final_mesh, res.final_solution.r);
    rmdpg::write_file((std::filesystem::path(out_dir) / (csv_name + ".kernels.txt")).string(),
                      rmdpg::dump_kernels_text(res.final_mesh, kcfg, grad_r));
  }

  std::cout << "wrote " << csv_path << "\n";
  for (const auto& r : res.records)
    std::cout << "level " << r.level << ": #T " << r.n_triangles << ", dofs " << r.dofs << ", eta "
              << rmdpg::format_g17(r.eta) << "\n";
  if (res.records.size() >= 2) std::cout << rmdpg::rate_table(res.records);
  return kExitOk;
}

int cmd_verify(std::uint64_t seed, bool flip) {
  rmdpg::VerifyOptions opt;
  opt.seed = seed;
  opt.flip_trace_sign = flip;
  const auto results = rmdpg::run_verification(opt);
  bool all = true;
  for (const auto& r : results) {
    std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << ": " << r.detail << "\n";
    all = all && r.pass;
  }
  return all ? kExitOk : kExitNumerical;
}

int cmd_plotdata(const std::string& csv_path, double slope, const std::string& out_path) {
  std::ifstream in(csv_path);
  if (!in) throw rmdpg::ConfigError("cannot open csv '" + csv_path + "'");
  const auto table = rmdpg::read_csv(in);
  const std::string data = rmdpg::plotdata_from_csv(table, slope);
  if (out_path.empty())
    std::cout << data;
  else
    rmdpg::write_file(out_path, data);
  return kExitOk;
}

int cmd_mesh_info(const std::string& mesh_path, const std::string& config_path, const std::string& write_path) {
  rmdpg::Mesh mesh;
  if (!mesh_path.empty()) {
    std::ifstream in(mesh_path);
    if (!in) throw rmdpg::ConfigError("cannot open mesh '" + mesh_path + "'");
    mesh = rmdpg::Mesh::read(in);
  } else if (!config_path.empty()) {
    const auto cfg = rmdpg::load_run_config(config_path);
    const auto problem = rmdpg::make_problem(cfg);
    mesh = problem.initial_mesh(cfg.initial_n > 0 ? cfg.initial_n : problem.default_initial_n);
  } else {
    throw rmdpg::ConfigError("mesh-info needs --mesh or --config");
  }
  int boundary = 0;
  std::map<std::string, int> tags;
  for (const auto& e : mesh.edges)
    if (e.boundary) {
      ++boundary;
      tags[rmdpg::bc_name(e.tag)] += 1;
    }
  std::cout << "vertices " << mesh.n_vertices() << "\n"
            << "triangles " << mesh.n_triangles() << "\n"
            << "edges " << mesh.n_edges() << " (boundary " << boundary << ")\n"
            << "area " << rmdpg::format_g17(mesh.total_area()) << "\n"
            << "min angle " << rmdpg::format_g17(mesh.min_angle() * 180.0 / M_PI) << " deg\n";
  for (const auto& [tag, count] : tags) std::cout << "tag " << tag << ": " << count << " edges\n";
  if (!write_path.empty()) {
    std::ostringstream os;
    mesh.write(os);
    rmdpg::write_file(write_path, os.str());
    std::cout << "wrote " << write_path << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Three-stage DPG solver for Reissner-Mindlin plate bending"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".", csv_path, out_path, mesh_path, write_path;
  int threads = 0;
  std::uint64_t seed = 0;
  double slope = -0.5;
  bool flip = false, dump_kernels_flag = false;

  auto* run = app.add_subcommand("run", "run an experiment from a JSON config and write the convergence CSV");
  run->add_option("--config", config_path, "JSON config file")->required();
  run->add_option("--out-dir", out_dir, "output directory");
  run->add_option("--threads", threads, "override thread count (env RMDPG_THREADS also applies)");
  run->add_flag("--dump-kernels", dump_kernels_flag, "dump per-element kernels of the final level");

  auto* verify = app.add_subcommand("verify", "run the built-in oracle suite");
  verify->add_option("--seed", seed, "seed for the randomized checks");
  verify->add_flag("--mutate-trace-sign", flip, "debug hook: inject a trace sign flip (checks must fail)");

  auto* plot = app.add_subcommand("plotdata", "emit log-log series with guide lines from a run CSV");
  plot->add_option("csv", csv_path, "CSV produced by run")->required();
  plot->add_option("--slope", slope, "guide-line slope (e.g. -0.5 or -0.3333)");
  plot->add_option("--out", out_path, "output file (default stdout)");

  auto* info = app.add_subcommand("mesh-info", "print statistics of a mesh file or a problem's initial mesh");
  info->add_option("--mesh", mesh_path, "mesh file in the text format");
  info->add_option("--config", config_path, "JSON config whose initial mesh is inspected");
  info->add_option("--write-mesh", write_path, "serialize the mesh to this path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (run->parsed()) return cmd_run(config_path, out_dir, threads, dump_kernels_flag);
    if (verify->parsed()) return cmd_verify(seed, flip);
    if (plot->parsed()) return cmd_plotdata(csv_path, slope, out_path);
    if (info->parsed()) return cmd_mesh_info(mesh_path, config_path, write_path);
  } catch (const rmdpg::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitUsage;
}
