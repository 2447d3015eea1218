#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "stokes/assembly.hpp"
#include "stokes/mesh.hpp"

namespace stokes {

enum class Task { condnum, infsup, fortin, lemmas, mesh_export };
enum class OutputFormat { markdown, csv };

std::string_view to_string(Task t);
/// Accepts the subcommand names (condnum, infsup, fortin-verify, lemma-check, mesh-export)
/// and the short task names (fortin, lemmas).
Task parse_task(std::string_view name);

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  std::vector<Domain> domains{Domain::square, Domain::lshape, Domain::slit};
  Element element = Element::taylor_hood;
  std::vector<double> eps_list{1.0, 0.1, 0.01};  // decreasing, in (0, 1]
  int level_min = 2, level_max = 5;
  std::vector<Task> tasks{Task::condnum};
  std::string output;  // empty: stdout
  OutputFormat format = OutputFormat::markdown;
  bool fortin_norms = true;
  unsigned threads = 0;  // 0: STOKES_PRECOND_THREADS or hardware concurrency

  void validate() const;
};

/// Command line: <subcommand> [--domain ...] [--element ...] [--eps a,b] [--levels a..b]
/// [--out path] [--format csv|markdown] [--config file]. Flags override the file.
ExperimentConfig parse_config(const std::vector<std::string>& args);
ExperimentConfig parse_config(int argc, const char* const* argv);

/// Config file body: flat key=value lines, or a JSON object when the first
/// non-blank character is '{'. `source` names the file in error messages.
void apply_config_text(ExperimentConfig& cfg, const std::string& text, const std::string& source);

std::vector<double> parse_eps_list(const std::string& s);
std::pair<int, int> parse_levels(const std::string& s);
std::vector<Domain> parse_domain_list(const std::string& s);

/// Worker count: explicit value, else STOKES_PRECOND_THREADS, else hardware concurrency.
unsigned worker_count(unsigned requested = 0);

/// Runs every requested task and writes the report. Returns 0 iff every cell was
/// computed and every check passed.
int run(const ExperimentConfig& cfg, std::ostream& out, std::ostream& log);

/// Fixed-notation formatting in the classic locale.
std::string format_number(double v, int precision);

}  // namespace stokes
