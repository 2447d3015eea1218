#include <fstream>
#include <iostream>

#include "stokes/experiment.hpp"

int main(int argc, char** argv) {
  stokes::ExperimentConfig cfg;
  try {
    cfg = stokes::parse_config(argc, argv);
  } catch (const stokes::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n"
              << "usage: stokes_precond condnum|infsup|fortin-verify|lemma-check|mesh-export [--domain d1,d2] "
                 "[--element taylor_hood|mini] [--eps 1,0.1] [--levels 2..5] [--out file] [--format markdown|csv] "
                 "[--config file]\n";
    return 2;
  }
  try {
    if (cfg.output.empty()) return stokes::run(cfg, std::cout, std::cerr);
    std::ofstream f(cfg.output, std::ios::binary);
    if (!f) {
      std::cerr << "error: cannot open '" << cfg.output << "' for writing\n";
      return 2;
    }
    return stokes::run(cfg, f, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
