#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <string>

#include "dosa/correction.hpp"
#include "dosa/workload.hpp"

// Generates a synthetic measured-latency sample CSV: random mappings on
// random hardware, with a structured residual standing in for a real
// cycle-accurate measurement source.

int main(int argc, char** argv) {
  CLI::App app{"Synthetic latency-sample generator"};
  std::string workload, out;
  int count = 200;
  std::uint64_t seed = 0;
  double noise = 0.05;
  bool plain = false;
  app.add_option("--workload", workload)->required();
  app.add_option("--count", count);
  app.add_option("--seed", seed);
  app.add_option("--noise", noise);
  app.add_flag("--no-residual", plain,
               "measured = analytical * noise only (no structured bias)");
  app.add_option("--out", out)->required();
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    return app.exit(ex) == 0 ? 0 : 2;
  }

  try {
    dosa::Network net = dosa::load_workload(workload);
    dosa::ArchTemplate templ;
    auto samples = dosa::correction::synthetic_samples(net, templ, count, seed,
                                                       noise, !plain);
    std::ofstream f(out, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + out);
    f << dosa::correction::samples_to_csv(samples);
    std::cout << "wrote " << samples.size() << " samples to " << out << "\n";
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}
