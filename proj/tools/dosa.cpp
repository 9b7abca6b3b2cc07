#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dosa/correction.hpp"
#include "dosa/format.hpp"
#include "dosa/oracle.hpp"
#include "dosa/perfmodel.hpp"
#include "dosa/sampling.hpp"
#include "dosa/search.hpp"
#include "dosa/workload.hpp"

namespace fs = std::filesystem;
using namespace dosa;

namespace {

// Worker cap: DOSA_THREADS when set, hardware concurrency otherwise.
int worker_count() {
  if (const char* env = std::getenv("DOSA_THREADS")) {
    int n = std::atoi(env);
    if (n >= 1) return n;
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 1;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  if (!out.flush()) throw std::runtime_error("write failed: " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fnv1a_hex(const std::string& data) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Every command with file outputs writes a manifest listing them with
// content hashes, plus the configuration needed to reproduce the run.
struct Manifest {
  std::string command;
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<fs::path> outputs;

  void add(const std::string& key, const std::string& value) {
    config.emplace_back(key, value);
  }
  std::string render() const {
    std::ostringstream out;
    out << "# dosa-manifest-v1\n";
    out << "command " << command << "\n";
    auto now = std::chrono::system_clock::now().time_since_epoch();
    out << "timestamp_unix "
        << std::chrono::duration_cast<std::chrono::seconds>(now).count()
        << "\n";
    for (const auto& [k, v] : config) out << k << " " << v << "\n";
    for (const auto& p : outputs)
      out << "output " << p.filename().string() << " fnv1a="
          << fnv1a_hex(read_file(p)) << "\n";
    return out.str();
  }
};

void print_config(const Manifest& m) {
  std::cout << "config: command=" << m.command;
  for (const auto& [k, v] : m.config) std::cout << " " << k << "=" << v;
  std::cout << "\n";
}

// ---------------------------------------------------------------------------
// search

int cmd_search(const std::string& workload_path, const std::string& arch_path,
               const std::string& strategy_name_arg, int seeds, int steps,
               int round_every, std::int64_t budget,
               const std::string& baseline, std::uint64_t seed,
               const std::string& out_dir) {
  Network net = load_workload(workload_path);
  search::SearchConfig cfg;
  cfg.templ = load_arch_template(arch_path);
  if (!search::parse_strategy(strategy_name_arg, &cfg.strategy))
    throw std::invalid_argument("unknown strategy: " + strategy_name_arg);
  cfg.n_start_points = seeds;
  cfg.steps_per_start = steps;
  cfg.rounding_period = round_every;
  cfg.eval_budget = budget;
  cfg.seed = seed;
  cfg.validate();
  if (baseline != "none" && baseline != "random")
    throw std::invalid_argument("unknown baseline: " + baseline);

  Manifest man;
  man.command = "search";
  man.add("workload", workload_path);
  man.add("arch_template", arch_path);
  man.add("strategy", strategy_name(cfg.strategy));
  man.add("seeds", std::to_string(seeds));
  man.add("steps", std::to_string(steps));
  man.add("round_every", std::to_string(round_every));
  man.add("budget", std::to_string(budget));
  man.add("baseline", baseline);
  man.add("seed", std::to_string(seed));
  print_config(man);

  search::SearchResult res = search::run_gd(net, cfg);
  search::SearchResult base;
  if (baseline == "random")
    base = search::random_search(net, cfg.templ, budget, seed);

  fs::create_directories(out_dir);
  fs::path dir(out_dir);
  write_file(dir / "search_trace.csv", search::trace_to_csv(res.trace));
  man.outputs.push_back(dir / "search_trace.csv");
  write_file(dir / "best_design.txt",
             search::serialize_design(res.best_arch, res.best_mappings));
  man.outputs.push_back(dir / "best_design.txt");
  if (baseline == "random") {
    write_file(dir / "baseline_trace.csv", search::trace_to_csv(base.trace));
    man.outputs.push_back(dir / "baseline_trace.csv");
  }

  std::ostringstream sum;
  sum << "# dosa-summary-v1\n";
  sum << "workload " << (net.name.empty() ? workload_path : net.name) << "\n";
  sum << "strategy " << strategy_name(cfg.strategy) << "\n";
  sum << "seed " << seed << "\n";
  sum << "evals_used " << res.evals_used << "\n";
  sum << "best_edp " << fmt_double(res.best_edp) << "\n";
  sum << "start_edp " << fmt_double(res.start_edp) << "\n";
  sum << "improvement_vs_start " << fmt_double(res.start_edp / res.best_edp)
      << "\n";
  sum << "best_" << serialize_arch(res.best_arch);
  if (baseline == "random") {
    sum << "baseline_evals_used " << base.evals_used << "\n";
    sum << "baseline_best_edp " << fmt_double(base.best_edp) << "\n";
    sum << "baseline_over_gd " << fmt_double(base.best_edp / res.best_edp)
        << "\n";
  }
  write_file(dir / "summary.txt", sum.str());
  man.outputs.push_back(dir / "summary.txt");
  write_file(dir / "manifest.txt", man.render());

  std::cout << "best EDP " << fmt_double(res.best_edp) << " after "
            << res.evals_used << " evaluations ("
            << fmt_fixed(res.start_edp / res.best_edp, 2)
            << "x over start point)\n";
  return 0;
}

// ---------------------------------------------------------------------------
// correlate

struct CorrelateRow {
  int index = 0;
  int layer = 0;
  double model_latency = 0, oracle_latency = 0;
  double model_energy = 0, oracle_energy = 0;
  double traffic_rel_err = 0;
};

int cmd_correlate(const std::string& workload_path, int n_samples,
                  std::uint64_t seed, const std::string& out_dir) {
  Network net = load_workload(workload_path);
  ArchTemplate templ;
  if (n_samples < 0) throw std::invalid_argument("--samples must be >= 0");

  Manifest man;
  man.command = "correlate";
  man.add("workload", workload_path);
  man.add("samples", std::to_string(n_samples));
  man.add("seed", std::to_string(seed));
  man.add("threads", std::to_string(worker_count()));
  print_config(man);

  // Draw every sample up front so the parallel section is deterministic.
  Rng rng(seed);
  std::vector<std::pair<int, LayerMapping>> samples;
  samples.reserve(n_samples);
  for (int i = 0; i < n_samples; ++i) {
    int li = static_cast<int>(rng.below(net.layers.size()));
    samples.emplace_back(li, random_mapping(rng, net.layers[li].shape));
  }

  std::vector<CorrelateRow> rows(n_samples);
  std::atomic<int> next{0};
  std::string failure;
  std::mutex failure_mu;
  auto work = [&] {
    for (int i; (i = next.fetch_add(1)) < n_samples;) {
      const auto& [li, m] = samples[i];
      const LayerShape& layer = net.layers[li].shape;
      try {
        ArchConfig arch = infer_min_hw({m}, {&layer}, templ);
        PerfEstimate est = estimate_layer(m, layer, arch);
        TrafficReport sim = oracle::simulate_traffic(m, layer, templ.bypass);
        double spatial = m.factors.at(kSpatial, 1, DimC) *
                         m.factors.at(kSpatial, 2, DimK);
        CorrelateRow& r = rows[i];
        r.index = i;
        r.layer = li;
        r.model_latency = est.latency;
        r.model_energy = est.energy;
        r.oracle_latency = latency_from_traffic(sim, spatial, arch);
        r.oracle_energy = energy_from_traffic(sim, arch);
        r.traffic_rel_err = oracle::max_rel_err(est.traffic, sim, templ.bypass);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(failure_mu);
        if (failure.empty())
          failure = "layer " + std::to_string(li) + " (" +
                    layer.to_string() + "): " + e.what();
      }
    }
  };
  int n_threads = std::min(worker_count(), std::max(1, n_samples));
  std::vector<std::thread> pool;
  for (int t = 1; t < n_threads; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (!failure.empty()) throw std::runtime_error(failure);

  std::ostringstream csv;
  csv << "# dosa-correlate-v1\n";
  csv << "index,layer,model_latency,oracle_latency,model_energy,"
         "oracle_energy,model_edp,oracle_edp,traffic_rel_err\n";
  double mae_lat = 0, mae_en = 0, mae_edp = 0;
  for (const auto& r : rows) {
    double m_edp = r.model_latency * r.model_energy;
    double o_edp = r.oracle_latency * r.oracle_energy;
    csv << r.index << "," << r.layer << "," << fmt_double(r.model_latency)
        << "," << fmt_double(r.oracle_latency) << ","
        << fmt_double(r.model_energy) << "," << fmt_double(r.oracle_energy)
        << "," << fmt_double(m_edp) << "," << fmt_double(o_edp) << ","
        << fmt_double(r.traffic_rel_err) << "\n";
    mae_lat += std::abs(r.model_latency - r.oracle_latency);
    mae_en += std::abs(r.model_energy - r.oracle_energy);
    mae_edp += std::abs(m_edp - o_edp);
  }

  fs::create_directories(out_dir);
  fs::path dir(out_dir);
  write_file(dir / "correlate.csv", csv.str());
  man.outputs.push_back(dir / "correlate.csv");

  std::ostringstream sum;
  sum << "# dosa-summary-v1\n";
  sum << "samples " << n_samples << "\n";
  if (n_samples == 0) {
    sum << "mae undefined (no samples)\n";
  } else {
    sum << "mae_latency " << fmt_double(mae_lat / n_samples) << "\n";
    sum << "mae_energy " << fmt_double(mae_en / n_samples) << "\n";
    sum << "mae_edp " << fmt_double(mae_edp / n_samples) << "\n";
  }
  write_file(dir / "summary.txt", sum.str());
  man.outputs.push_back(dir / "summary.txt");
  write_file(dir / "manifest.txt", man.render());
  std::cout << sum.str();
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate

void check_capacity(const LayerMapping& m, const LayerShape& layer, int index,
                    const ArchConfig& arch) {
  constexpr double kTol = 1e-9;
  double pe = pe_requirement(m.factors);
  double pe_avail = static_cast<double>(arch.num_pes());
  if (pe > pe_avail * (1 + kTol))
    throw std::runtime_error(
        "layer " + std::to_string(index) + ": spatial factors need " +
        fmt_double(pe) + " PEs, array has " + fmt_double(pe_avail));
  CapacityReport cap = capacity_requirements(m.factors, layer);
  double acc = cap.words[kLevelAcc][TenO];
  if (acc > arch.acc_words_final() * (1 + kTol))
    throw std::runtime_error(
        "layer " + std::to_string(index) + ": accumulator needs " +
        fmt_double(acc) + " words, capacity is " +
        fmt_double(arch.acc_words_final()));
  double sp = cap.words[kLevelSp][TenW] + cap.words[kLevelSp][TenI];
  if (sp > arch.sp_words_final() * (1 + kTol))
    throw std::runtime_error(
        "layer " + std::to_string(index) + ": scratchpad needs " +
        fmt_double(sp) + " words, capacity is " +
        fmt_double(arch.sp_words_final()));
}

int cmd_evaluate(const std::string& design_path,
                 const std::string& workload_path,
                 const std::string& correction_path) {
  Network net = load_workload(workload_path);
  ArchTemplate templ;
  ArchConfig arch;
  std::vector<LayerMapping> mappings;
  search::parse_design(read_file(design_path), templ, &arch, &mappings);
  if (mappings.size() != net.layers.size())
    throw std::runtime_error(
        "design has " + std::to_string(mappings.size()) +
        " mappings, workload has " + std::to_string(net.layers.size()) +
        " layers");
  for (std::size_t i = 0; i < mappings.size(); ++i) {
    ValidationResult v = validate(mappings[i], net.layers[i].shape);
    if (!v)
      throw std::runtime_error("layer " + std::to_string(i) + ": " +
                               v.diagnostics.front());
    check_capacity(mappings[i], net.layers[i].shape, static_cast<int>(i),
                   arch);
  }

  correction::CorrectionModel corr;
  bool corrected = !correction_path.empty();
  if (corrected) corr = correction::CorrectionModel::load(correction_path);

  std::cout << "config: command=evaluate design=" << design_path
            << " workload=" << workload_path;
  if (corrected) std::cout << " correction=" << correction_path;
  std::cout << "\n" << serialize_arch(arch);

  NetworkPerf perf = estimate_network(mappings, net, arch);
  double corr_latency_sum = 0;
  for (std::size_t i = 0; i < perf.layers.size(); ++i) {
    const PerfEstimate& pe = perf.layers[i];
    std::cout << "layer " << i << " repeat=" << net.layers[i].repeat
              << " latency=" << fmt_double(pe.latency)
              << " energy=" << fmt_double(pe.energy);
    if (corrected) {
      correction::MeasuredSample s;
      s.layer = net.layers[i].shape;
      s.mapping = mappings[i];
      s.pe_side = arch.pe_side;
      s.acc_words = arch.acc_words_final();
      s.sp_words = arch.sp_words_final();
      double c = correction::corrected_latency(
          pe.latency, correction::features(s), corr);
      corr_latency_sum += static_cast<double>(net.layers[i].repeat) * c;
      std::cout << " corrected_latency=" << fmt_double(c);
    }
    std::cout << "\n";
  }
  std::cout << "network latency=" << fmt_double(perf.latency)
            << " energy=" << fmt_double(perf.energy)
            << " edp=" << fmt_double(perf.edp) << "\n";
  if (corrected)
    std::cout << "network corrected_latency=" << fmt_double(corr_latency_sum)
              << " corrected_edp="
              << fmt_double(corr_latency_sum * perf.energy) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train-correction

int cmd_train_correction(const std::string& samples_path, int epochs,
                         std::uint64_t seed, const std::string& out_path) {
  ArchTemplate templ;
  std::vector<std::string> diags;
  correction::Dataset data =
      correction::load_samples(samples_path, templ, seed, 0.2, &diags);
  for (const auto& d : diags) std::cerr << "warning: " << d << "\n";

  correction::TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.seed = seed;

  Manifest man;
  man.command = "train-correction";
  man.add("samples", samples_path);
  man.add("epochs", std::to_string(epochs));
  man.add("seed", std::to_string(seed));
  man.add("train_samples", std::to_string(data.train.size()));
  man.add("test_samples", std::to_string(data.test.size()));
  print_config(man);

  correction::TrainResult res = correction::train(data, cfg);
  fs::path out(out_path);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_file(out, res.model.serialize());
  man.outputs.push_back(out);

  std::ostringstream curve;
  curve << "# dosa-losscurve-v1\n";
  curve << "epoch,train_mse,test_mse\n";
  for (std::size_t e = 0; e < res.loss_curve.size(); ++e)
    curve << (e + 1) << "," << fmt_double(res.loss_curve[e].first) << ","
          << fmt_double(res.loss_curve[e].second) << "\n";
  fs::path curve_path = out_path + ".loss.csv";
  write_file(curve_path, curve.str());
  man.outputs.push_back(curve_path);
  write_file(fs::path(out_path + ".manifest.txt"), man.render());

  std::cout << "final train MSE " << fmt_double(res.loss_curve.back().first)
            << ", test MSE " << fmt_double(res.loss_curve.back().second)
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentiable performance-model co-search toolkit"};
  app.require_subcommand(1);

  std::string workload, arch_template, strategy = "iterative";
  std::string baseline = "none", out_dir, design, correction_path, samples_path;
  int seeds = 7, steps = 1490, round_every = 500, n_samples = 0, epochs = 400;
  std::int64_t budget = -1;
  std::uint64_t seed = 0;

  CLI::App* s = app.add_subcommand("search", "Co-search mappings and hardware");
  s->add_option("--workload", workload)->required();
  s->add_option("--arch-template", arch_template)->required();
  s->add_option("--strategy", strategy)
      ->check(CLI::IsMember({"none", "iterative", "softmax"}));
  s->add_option("--seeds", seeds);
  s->add_option("--steps", steps);
  s->add_option("--round-every", round_every);
  s->add_option("--budget", budget);
  s->add_option("--baseline", baseline)
      ->check(CLI::IsMember({"none", "random"}));
  s->add_option("--seed", seed);
  s->add_option("--out", out_dir)->required();

  CLI::App* c = app.add_subcommand(
      "correlate", "Compare the analytical model against the simulator");
  c->add_option("--workload", workload)->required();
  c->add_option("--samples", n_samples)->required();
  c->add_option("--seed", seed);
  c->add_option("--out", out_dir)->required();

  CLI::App* e = app.add_subcommand("evaluate", "Price a design on a workload");
  e->add_option("--design", design)->required();
  e->add_option("--workload", workload)->required();
  e->add_option("--correction", correction_path);

  CLI::App* t = app.add_subcommand("train-correction",
                                   "Fit the latency-correction regressor");
  t->add_option("--samples", samples_path)->required();
  t->add_option("--epochs", epochs);
  t->add_option("--seed", seed);
  t->add_option("--out", out_dir)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    std::cerr << app.help();
    return 2;
  }

  try {
    if (s->parsed())
      return cmd_search(workload, arch_template, strategy, seeds, steps,
                        round_every, budget, baseline, seed, out_dir);
    if (c->parsed()) return cmd_correlate(workload, n_samples, seed, out_dir);
    if (e->parsed()) return cmd_evaluate(design, workload, correction_path);
    if (t->parsed())
      return cmd_train_correction(samples_path, epochs, seed, out_dir);
  } catch (const std::invalid_argument& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 2;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 2;
}
