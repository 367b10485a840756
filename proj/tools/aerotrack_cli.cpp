#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "aerotrack/map_spec.hpp"
#include "aerotrack/perception.hpp"
#include "aerotrack/tracker.hpp"

namespace fs = std::filesystem;
using namespace aerotrack;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitScenarioFailed = 2;

void print_metrics(const std::string& name, const Metrics& m) {
  std::printf("scenario           %s\n", name.c_str());
  std::printf("success            %s\n", m.success ? "yes" : "no");
  std::printf("collided           %s\n", m.collided ? "yes" : "no");
  std::printf("mean distance      %.3f m\n", m.mean_distance);
  std::printf("max distance       %.3f m\n", m.max_distance);
  std::printf("longest far span   %.2f s\n", m.longest_far_stretch);
  std::printf("line of sight      %.3f\n", m.los_fraction);
  std::printf("observed           %.3f\n", m.observed_fraction);
  std::printf("path visibility    %.3f (%d cycles)\n", m.path_los_fraction, m.path_cycles);
  std::printf("loss episodes      %d (rediscovered %d, mean %.2f s)\n", m.loss_episodes, m.rediscovered,
              m.mean_relocation_time);
  std::printf("plan failures      %d / %d cycles\n", m.plan_failures, m.cycles);
  std::printf("planning time      %.2f ms mean (search %.2f, corridor %.2f, optimize %.2f), %.2f ms max\n",
              m.mean_planning_ms, m.mean_search_ms, m.mean_corridor_ms, m.mean_optimize_ms, m.max_planning_ms);
}

std::vector<Variant> parse_variants(const std::string& list) {
  std::vector<Variant> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(parse_variant(item));
  }
  if (out.empty()) throw InvalidScenario("no variants given");
  return out;
}

std::vector<RegressionSample> load_regression_dataset(const std::string& path) {
  const auto j = load_json_file(path);
  const nlohmann::json* samples = &j;
  if (j.is_object()) {
    if (!j.contains("samples")) throw InvalidSpec(path + ": samples: missing required field");
    samples = &j.at("samples");
  }
  if (!samples->is_array()) throw InvalidSpec(path + ": samples: expected an array");
  std::vector<RegressionSample> out;
  for (std::size_t i = 0; i < samples->size(); ++i) {
    const std::string p = "samples[" + std::to_string(i) + "]";
    detail::FieldReader r((*samples)[i], p);
    RegressionSample s;
    s.features.body_px = r.number("body_px");
    s.features.u_px = r.number("u_px");
    s.truth_cam = r.vec<3>("camera_position");
    out.push_back(s);
  }
  return out;
}

int cmd_run(const std::string& path, std::optional<std::uint64_t> seed, const std::string& variant,
            const std::string& trace, bool timings) {
  Scenario s = apply_variant(load_scenario(path), parse_variant(variant));
  const auto result = run_scenario(s, seed.value_or(s.seed));
  if (!trace.empty()) {
    std::ofstream out(trace);
    if (!out) throw InvalidSpec(trace + ": cannot open for writing");
    write_trace_csv(out, result.trace, timings);
  }
  print_metrics(s.name, result.metrics);
  return result.metrics.success ? kExitOk : kExitScenarioFailed;
}

int cmd_benchmark(const std::string& dir, int runs, const std::string& variants, const std::string& out_path,
                  unsigned workers) {
  std::vector<fs::path> files;
  if (fs::is_regular_file(dir)) {
    files.push_back(dir);
  } else {
    if (!fs::is_directory(dir)) throw InvalidScenario(dir + ": not a file or directory");
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Scenario> scenarios;
  for (const auto& f : files) scenarios.push_back(load_scenario(f.string()));
  const auto rows = benchmark(scenarios, parse_variants(variants), runs, workers);
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw InvalidSpec(out_path + ": cannot open for writing");
    write_benchmark_csv(out, rows);
  }
  std::cout << format_benchmark_table(rows);
  return kExitOk;
}

int cmd_fit_regression(const std::string& path, const std::string& out_path) {
  const auto fit = fit_regression(load_regression_dataset(path));
  const auto& p = fit.params;
  nlohmann::json j;
  j["lambda"] = p.lambda;
  j["k"] = p.k;
  j["a"] = p.a;
  j["b"] = p.b;
  j["z_const"] = p.z_const;
  j["rms_residual"] = fit.rms_residual;
  j["converged_starts"] = fit.converged_starts;
  if (out_path.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    std::ofstream out(out_path);
    if (!out) throw InvalidSpec(out_path + ": cannot open for writing");
    out << j.dump(2) << "\n";
    std::printf("rms residual %.4f m, %d converged starts\n", fit.rms_residual, fit.converged_starts);
  }
  return kExitOk;
}

int cmd_gen_map(const std::string& path, const std::string& out_path, std::optional<double> slice_z) {
  const auto j = load_json_file(path);
  const MapSpec spec = parse_map_spec(j.contains("map") ? j.at("map") : j, j.contains("map") ? "map" : "mapspec");
  const OccupancyGrid grid = build_map(spec);
  const auto& d = grid.dims();
  std::printf("dims %d x %d x %d at %.3f m, %zu occupied voxels (%.2f%%)\n", d.x(), d.y(), d.z(), grid.resolution(),
              grid.count_occupied(), 100.0 * grid.count_occupied() / (double(d.x()) * d.y() * d.z()));
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw InvalidSpec(out_path + ": cannot open for writing");
    out << "ix,iy,iz\n";
    for (int x = 0; x < d.x(); ++x)
      for (int y = 0; y < d.y(); ++y)
        for (int z = 0; z < d.z(); ++z)
          if (grid.occupied(Vec3i(x, y, z))) out << x << ',' << y << ',' << z << "\n";
  }
  if (slice_z) {
    const int iz = grid.to_index(Vec3(grid.origin().x(), grid.origin().y(), *slice_z)).z();
    if (iz < 0 || iz >= d.z()) throw InvalidSpec("--slice height lies outside the map");
    for (int y = d.y() - 1; y >= 0; --y) {
      std::string line;
      for (int x = 0; x < d.x(); ++x) line += grid.occupied(Vec3i(x, y, iz)) ? '#' : '.';
      std::cout << line << "\n";
    }
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Closed-loop aerial target tracking simulator"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Simulate one scenario");
  std::string scenario_path, trace_path, variant = "full";
  std::optional<std::uint64_t> seed;
  bool timings = false;
  run->add_option("scenario", scenario_path, "Scenario JSON")->required();
  run->add_option("--seed", seed, "Override the scenario seed");
  run->add_option("--trace", trace_path, "Write the per-cycle trace CSV");
  run->add_option("--variant", variant, "full, no_occ or no_search");
  run->add_flag("--timings", timings, "Add stage timing columns to the trace");

  auto* bench = app.add_subcommand("benchmark", "Seeded runs over a scenario directory");
  std::string bench_dir, variants = "full,no_occ", bench_out;
  int runs = 10;
  unsigned workers = 0;
  bench->add_option("dir", bench_dir, "Directory of scenario JSON files (or one file)")->required();
  bench->add_option("--runs", runs, "Runs per scenario and variant")->check(CLI::NonNegativeNumber);
  bench->add_option("--variants", variants, "Comma separated: full,no_occ,no_search");
  bench->add_option("--out", bench_out, "Write results CSV");
  bench->add_option("--workers", workers, "Worker threads (0: hardware concurrency)");

  auto* fit = app.add_subcommand("fit-regression", "Fit the image-to-position regression");
  std::string dataset, params_out;
  fit->add_option("dataset", dataset, "JSON with samples of body_px, u_px, camera_position")->required();
  fit->add_option("--out", params_out, "Write parameters JSON");

  auto* gen = app.add_subcommand("gen-map", "Rasterize a map description");
  std::string mapspec, voxels_out;
  std::optional<double> slice;
  gen->add_option("mapspec", mapspec, "Map spec JSON (or a scenario with a map field)")->required();
  gen->add_option("--out", voxels_out, "Write occupied voxel indices as CSV");
  gen->add_option("--slice", slice, "Print a top-down slice at this height");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(scenario_path, seed, variant, trace_path, timings);
    if (*bench) return cmd_benchmark(bench_dir, runs, variants, bench_out, workers);
    if (*fit) return cmd_fit_regression(dataset, params_out);
    if (*gen) return cmd_gen_map(mapspec, voxels_out, slice);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
