#include "stokes/experiment.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <locale>
#include <map>
#include <optional>
#include <sstream>
#include <thread>

#include "stokes/fortin.hpp"
#include "stokes/infsup.hpp"
#include "stokes/linalg.hpp"

namespace stokes {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(trim(cur));
  return out;
}

double parse_double(const std::string& s, const std::string& what) {
  std::istringstream is(s);
  is.imbue(std::locale::classic());
  double v = 0.0;
  is >> v;
  if (s.empty() || is.fail() || !is.eof()) throw ConfigError("invalid " + what + " value '" + s + "'");
  return v;
}

int parse_int(const std::string& s, const std::string& what) {
  std::size_t pos = 0;
  int v = 0;
  try {
    v = std::stoi(s, &pos);
  } catch (const std::exception&) {
    throw ConfigError("invalid " + what + " value '" + s + "'");
  }
  if (pos != s.size()) throw ConfigError("invalid " + what + " value '" + s + "'");
  return v;
}

// value flags checked for conflicting repetitions
const std::vector<std::string> kValueFlags{"--domain", "--element", "--eps", "--levels", "--out", "--format", "--config"};

void check_repeated_flags(const std::vector<std::string>& args) {
  std::map<std::string, std::pair<std::string, std::size_t>> seen;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a.rfind("--", 0) != 0) continue;
    std::string flag = a, value;
    std::size_t pos = i + 1;
    if (const auto eq = a.find('='); eq != std::string::npos) {
      flag = a.substr(0, eq);
      value = a.substr(eq + 1);
    } else if (i + 1 < args.size()) {
      value = args[i + 1];
    }
    if (std::find(kValueFlags.begin(), kValueFlags.end(), flag) == kValueFlags.end()) continue;
    const auto it = seen.find(flag);
    if (it == seen.end()) {
      seen.emplace(flag, std::make_pair(value, pos));
    } else if (it->second.first != value) {
      throw ConfigError("conflicting values for " + flag + ": '" + it->second.first + "' (command line, argument " +
                        std::to_string(it->second.second) + ") and '" + value + "' (command line, argument " +
                        std::to_string(pos) + ")");
    }
  }
}

OutputFormat parse_format(const std::string& s) {
  if (s == "markdown" || s == "md") return OutputFormat::markdown;
  if (s == "csv") return OutputFormat::csv;
  throw ConfigError("unknown format '" + s + "'");
}

void set_key(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  try {
    if (key == "domain" || key == "domains") cfg.domains = parse_domain_list(value);
    else if (key == "element") cfg.element = parse_element(value);
    else if (key == "eps") cfg.eps_list = parse_eps_list(value);
    else if (key == "levels") std::tie(cfg.level_min, cfg.level_max) = parse_levels(value);
    else if (key == "out" || key == "output") cfg.output = value;
    else if (key == "format") cfg.format = parse_format(value);
    else if (key == "tasks" || key == "task") {
      cfg.tasks.clear();
      for (const auto& t : split(value, ',')) cfg.tasks.push_back(parse_task(t));
    } else if (key == "fortin_norms") cfg.fortin_norms = value == "true" || value == "1";
    else if (key == "threads") cfg.threads = static_cast<unsigned>(parse_int(value, "threads"));
    else throw ConfigError("unknown key '" + key + "'");
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

std::string json_scalar(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number()) {
    std::ostringstream os;
    os.imbue(std::locale::classic());
    os << std::setprecision(17) << v.get<double>();
    return os.str();
  }
  throw ConfigError("unsupported JSON value " + v.dump());
}

std::string json_value(const std::string& key, const nlohmann::json& v) {
  if (v.is_array()) {
    std::vector<std::string> parts;
    for (const auto& x : v) parts.push_back(json_scalar(x));
    if (key == "levels") {
      if (parts.size() != 2) throw ConfigError("levels array must be [min, max]");
      return parts[0] + ".." + parts[1];
    }
    std::string s;
    for (std::size_t i = 0; i < parts.size(); ++i) s += (i ? "," : "") + parts[i];
    return s;
  }
  return json_scalar(v);
}

}  // namespace

std::string_view to_string(Task t) {
  switch (t) {
    case Task::condnum: return "condnum";
    case Task::infsup: return "infsup";
    case Task::fortin: return "fortin-verify";
    case Task::lemmas: return "lemma-check";
    case Task::mesh_export: return "mesh-export";
  }
  return "?";
}

Task parse_task(std::string_view name) {
  if (name == "condnum") return Task::condnum;
  if (name == "infsup") return Task::infsup;
  if (name == "fortin" || name == "fortin-verify") return Task::fortin;
  if (name == "lemmas" || name == "lemma-check") return Task::lemmas;
  if (name == "mesh-export") return Task::mesh_export;
  throw ConfigError("unknown task '" + std::string(name) + "'");
}

void ExperimentConfig::validate() const {
  if (domains.empty()) throw ConfigError("no domain selected");
  if (eps_list.empty()) throw ConfigError("no eps value given");
  for (double e : eps_list)
    if (!(e > 0.0 && e <= 1.0)) throw ConfigError("eps must lie in (0, 1], got " + format_number(e, 6));
  for (std::size_t i = 1; i < eps_list.size(); ++i)
    if (!(eps_list[i] < eps_list[i - 1])) throw ConfigError("eps list must be strictly decreasing");
  if (level_min < 1 || level_max < level_min) throw ConfigError("levels must satisfy 1 <= min <= max");
  if (tasks.empty()) throw ConfigError("no task selected");
}

std::vector<double> parse_eps_list(const std::string& s) {
  std::vector<double> out;
  for (const auto& p : split(s, ',')) out.push_back(parse_double(p, "eps"));
  if (out.empty()) throw ConfigError("invalid eps value '" + s + "'");
  std::sort(out.begin(), out.end(), std::greater<>());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::pair<int, int> parse_levels(const std::string& s) {
  const auto dots = s.find("..");
  if (dots == std::string::npos) {
    const int l = parse_int(trim(s), "levels");
    return {l, l};
  }
  return {parse_int(trim(s.substr(0, dots)), "levels"), parse_int(trim(s.substr(dots + 2)), "levels")};
}

std::vector<Domain> parse_domain_list(const std::string& s) {
  if (s == "all") return {Domain::square, Domain::lshape, Domain::slit};
  std::vector<Domain> out;
  for (const auto& p : split(s, ',')) {
    try {
      const Domain d = parse_domain(p);
      if (std::find(out.begin(), out.end(), d) == out.end()) out.push_back(d);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  return out;
}

void apply_config_text(ExperimentConfig& cfg, const std::string& text, const std::string& source) {
  const std::string body = trim(text);
  if (!body.empty() && body.front() == '{') {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(source + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError(source + ": top level must be an object");
    for (const auto& [key, v] : j.items()) {
      try {
        set_key(cfg, key, json_value(key, v));
      } catch (const ConfigError& e) {
        throw ConfigError(source + ": key '" + key + "': " + e.what());
      }
    }
    return;
  }
  std::map<std::string, std::pair<std::string, int>> seen;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw ConfigError(where + ": expected key=value");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (const auto it = seen.find(key); it != seen.end() && it->second.first != value)
      throw ConfigError("conflicting values for " + key + ": '" + it->second.first + "' (" + source + ":" +
                        std::to_string(it->second.second) + ") and '" + value + "' (" + where + ")");
    seen[key] = {value, lineno};
    try {
      set_key(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
}

ExperimentConfig parse_config(const std::vector<std::string>& args) {
  check_repeated_flags(args);
  CLI::App app{"Preconditioned eps-Stokes experiments"};
  app.fallthrough();
  app.require_subcommand(1);
  std::string domain, element, eps, levels, out, format, config;
  bool no_norms = false;
  app.add_option("--domain", domain, "square,lshape,slit or all")->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.add_option("--element", element, "taylor_hood or mini")->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.add_option("--eps", eps, "comma list in (0,1]")->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.add_option("--levels", levels, "a..b")->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.add_option("--out", out, "output file (default stdout)")->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.add_option("--format", format, "markdown or csv")->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.add_option("--config", config, "key=value or JSON file")->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.add_flag("--no-norms", no_norms, "fortin-verify: skip the operator norm estimates");
  std::vector<CLI::App*> subs;
  for (Task t : {Task::condnum, Task::infsup, Task::fortin, Task::lemmas, Task::mesh_export})
    subs.push_back(app.add_subcommand(std::string(to_string(t))));
  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    throw ConfigError(app.help());
  } catch (const CLI::ParseError& e) {
    throw ConfigError(e.what());
  }
  ExperimentConfig cfg;
  for (CLI::App* s : subs)
    if (s->parsed()) cfg.tasks = {parse_task(s->get_name())};
  if (!config.empty()) {
    std::ifstream f(config);
    if (!f) throw ConfigError("cannot read config file '" + config + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    apply_config_text(cfg, ss.str(), config);
    // the subcommand wins over a tasks key
    for (CLI::App* s : subs)
      if (s->parsed()) cfg.tasks = {parse_task(s->get_name())};
  }
  if (!domain.empty()) set_key(cfg, "domain", domain);
  if (!element.empty()) set_key(cfg, "element", element);
  if (!eps.empty()) set_key(cfg, "eps", eps);
  if (!levels.empty()) set_key(cfg, "levels", levels);
  if (!out.empty()) cfg.output = out;
  if (!format.empty()) set_key(cfg, "format", format);
  if (no_norms) cfg.fortin_norms = false;
  cfg.validate();
  return cfg;
}

ExperimentConfig parse_config(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return parse_config(args);
}

unsigned worker_count(unsigned requested) {
  unsigned n = requested;
  if (n == 0) {
    if (const char* env = std::getenv("STOKES_PRECOND_THREADS")) {
      try {
        n = static_cast<unsigned>(std::max(1, std::stoi(env)));
      } catch (const std::exception&) {
        n = 0;
      }
    }
  }
  if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
  return n;
}

std::string format_number(double v, int precision) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

namespace {

std::string sci(double v) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::scientific << std::setprecision(3) << v;
  return os.str();
}

std::string csv_number(double v) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::setprecision(10) << v;
  return os.str();
}

template <class R>
struct Outcome {
  std::optional<R> value;
  std::string error;
};

// Evaluates jobs on a worker pool; results keep the job order.
template <class R>
std::vector<Outcome<R>> run_pool(const std::vector<std::function<R()>>& jobs, unsigned workers) {
  std::vector<Outcome<R>> out(jobs.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        out[i].value = jobs[i]();
      } catch (const std::exception& e) {
        out[i].error = e.what();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(jobs.size())));
  std::vector<std::thread> pool;
  for (unsigned k = 1; k < n; ++k) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  return out;
}

std::string h_label(int level) { return "2^-" + std::to_string(level); }

struct Grid {
  Domain domain;
  double eps;
  int level;
};

std::vector<Grid> eps_grid(const ExperimentConfig& cfg) {
  std::vector<Grid> g;
  for (Domain d : cfg.domains)
    for (double e : cfg.eps_list)
      for (int l = cfg.level_min; l <= cfg.level_max; ++l) g.push_back({d, e, l});
  return g;
}

std::string eps_label(double e) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << e;
  return os.str();
}

// condnum and infsup share the (domain, eps, level) layout
int scalar_table(const ExperimentConfig& cfg, std::ostream& out, std::ostream& log, Task task) {
  const auto grid = eps_grid(cfg);
  std::vector<std::function<double()>> jobs;
  for (const auto& c : grid)
    jobs.emplace_back([c, &cfg, task] {
      const TriMesh mesh = build_mesh(c.domain, c.level);
      const MixedSpaces sp = build_mixed_spaces(cfg.element, mesh);
      if (task == Task::infsup) return discrete_infsup(c.eps, sp, mesh);
      const SaddleSystem sys = build_saddle(c.eps, sp, mesh);
      const BlockPrecond P(sys, assemble(MatrixKind::stiff_p, sp, mesh), assemble(MatrixKind::mass_p, sp, mesh));
      return condition_number(sys, P);
    });
  const auto res = run_pool(jobs, worker_count(cfg.threads));
  int failures = 0;
  for (std::size_t i = 0; i < res.size(); ++i)
    if (!res[i].value) {
      ++failures;
      log << to_string(task) << " " << to_string(grid[i].domain) << " eps=" << eps_label(grid[i].eps)
          << " level=" << grid[i].level << ": " << res[i].error << "\n";
    }
  const bool infsup = task == Task::infsup;
  const std::string col = infsup ? "alpha" : "kappa";
  if (cfg.format == OutputFormat::csv) {
    out << "domain,element,eps,level,h," << col << "\n";
    for (std::size_t i = 0; i < res.size(); ++i)
      out << to_string(grid[i].domain) << "," << to_string(cfg.element) << "," << eps_label(grid[i].eps) << ","
          << grid[i].level << "," << csv_number(std::ldexp(1.0, -grid[i].level)) << ","
          << (res[i].value ? csv_number(*res[i].value) : "ERR") << "\n";
  } else {
    std::size_t i = 0;
    for (Domain d : cfg.domains) {
      out << "## " << (infsup ? "Inf-sup constant" : "Condition number") << ", " << to_string(cfg.element) << ", "
          << to_string(d) << "\n\n| eps \\ h |";
      for (int l = cfg.level_min; l <= cfg.level_max; ++l) out << " " << h_label(l) << " |";
      out << "\n|---|";
      for (int l = cfg.level_min; l <= cfg.level_max; ++l) out << "---|";
      out << "\n";
      for (double e : cfg.eps_list) {
        out << "| " << eps_label(e) << " |";
        for (int l = cfg.level_min; l <= cfg.level_max; ++l, ++i)
          out << " " << (res[i].value ? format_number(*res[i].value, infsup ? 4 : 2) : "ERR") << " |";
        out << "\n";
      }
      out << "\n";
    }
  }
  return failures;
}

int fortin_table(const ExperimentConfig& cfg, std::ostream& out, std::ostream& log) {
  struct Cell {
    Domain domain;
    int level;
  };
  std::vector<Cell> cells;
  for (Domain d : cfg.domains)
    for (int l = cfg.level_min; l <= cfg.level_max; ++l) cells.push_back({d, l});
  std::vector<std::function<FortinReport()>> jobs;
  for (const auto& c : cells)
    jobs.emplace_back([c, &cfg] { return fortin_report(cfg.element, build_mesh(c.domain, c.level), 20, 20240611u, cfg.fortin_norms); });
  const auto res = run_pool(jobs, worker_count(cfg.threads));
  int failures = 0;
  std::vector<std::string> status(res.size());
  for (std::size_t i = 0; i < res.size(); ++i) {
    if (!res[i].value) {
      ++failures;
      status[i] = "ERR";
      log << "fortin-verify " << to_string(cells[i].domain) << " level=" << cells[i].level << ": " << res[i].error << "\n";
    } else if (!res[i].value->passed()) {
      ++failures;
      status[i] = "FAIL";
    } else {
      status[i] = "PASS";
    }
  }
  auto dims = [](const FortinReport& r, bool bubble) {
    return r.dims ? std::to_string(bubble ? r.dims->bubble_dim : r.dims->z0_dim) : std::string("-");
  };
  auto norm = [&](double v) { return cfg.fortin_norms ? format_number(v, 4) : std::string("-"); };
  if (cfg.format == OutputFormat::csv) {
    out << "domain,element,level,commuting_residual,transpose_defect,norm_l2,norm_h1,dim_bubble,dim_z0,status\n";
    for (std::size_t i = 0; i < res.size(); ++i) {
      out << to_string(cells[i].domain) << "," << to_string(cfg.element) << "," << cells[i].level << ",";
      if (const auto& r = res[i].value)
        out << csv_number(r->commuting) << "," << csv_number(r->transpose_defect) << ","
            << (cfg.fortin_norms ? csv_number(r->norms.l2) : "-") << "," << (cfg.fortin_norms ? csv_number(r->norms.h1) : "-")
            << "," << dims(*r, true) << "," << dims(*r, false);
      else
        out << "ERR,ERR,ERR,ERR,ERR,ERR";
      out << "," << status[i] << "\n";
    }
    return failures;
  }
  std::size_t i = 0;
  for (Domain d : cfg.domains) {
    out << "## Fortin operator, " << to_string(cfg.element) << ", " << to_string(d)
        << "\n\n| h | commuting residual | transpose defect | L2 norm | H1 norm | dim V_b | dim Z_0 | status |\n"
        << "|---|---|---|---|---|---|---|---|\n";
    for (int l = cfg.level_min; l <= cfg.level_max; ++l, ++i) {
      out << "| " << h_label(l) << " | ";
      if (const auto& r = res[i].value)
        out << sci(r->commuting) << " | " << sci(r->transpose_defect) << " | " << norm(r->norms.l2) << " | "
            << norm(r->norms.h1) << " | " << dims(*r, true) << " | " << dims(*r, false);
      else
        out << "ERR | ERR | ERR | ERR | ERR | ERR";
      out << " | " << status[i] << " |\n";
    }
    out << "\n";
  }
  return failures;
}

int lemma_table(const ExperimentConfig& cfg, std::ostream& out, std::ostream& log) {
  struct Cell {
    Domain domain;
    int level;
  };
  struct Result {
    std::vector<LemmaCheck> checks;
  };
  std::vector<Cell> cells;
  for (Domain d : cfg.domains)
    for (int l = cfg.level_min; l <= cfg.level_max; ++l) cells.push_back({d, l});
  std::vector<std::function<Result()>> jobs;
  for (const auto& c : cells)
    jobs.emplace_back([c] {
      const TriMesh mesh = build_mesh(c.domain, c.level);
      Result r{lemma_suite(mesh)};
      const DimensionIdentity di = dimension_identity(mesh);
      LemmaCheck dim{"dimension_identity"};
      dim.count = di.bubble_dim;
      dim.max_error = static_cast<double>(std::abs(di.bubble_dim - di.z0_dim));
      dim.passed = di.holds();
      r.checks.push_back(dim);
      return r;
    });
  const auto res = run_pool(jobs, worker_count(cfg.threads));
  int failures = 0;
  for (std::size_t i = 0; i < res.size(); ++i) {
    if (!res[i].value) {
      ++failures;
      log << "lemma-check " << to_string(cells[i].domain) << " level=" << cells[i].level << ": " << res[i].error << "\n";
      continue;
    }
    for (const auto& c : res[i].value->checks)
      if (!c.passed) ++failures;
  }
  auto row = [&](const LemmaCheck& c, const std::string& sep, bool md) {
    std::ostringstream os;
    os << c.name << sep << c.count << sep << (md ? sci(c.max_error) : csv_number(c.max_error)) << sep
       << (c.inequality ? (md ? sci(c.min_margin) : csv_number(c.min_margin)) : "-") << sep << (c.passed ? "PASS" : "FAIL");
    return os.str();
  };
  if (cfg.format == OutputFormat::csv) {
    out << "domain,level,check,count,max_error,min_margin,status\n";
    for (std::size_t i = 0; i < res.size(); ++i) {
      const std::string key = std::string(to_string(cells[i].domain)) + "," + std::to_string(cells[i].level) + ",";
      if (!res[i].value) {
        out << key << "ERR,ERR,ERR,ERR,ERR\n";
        continue;
      }
      for (const auto& c : res[i].value->checks) out << key << row(c, ",", false) << "\n";
    }
    return failures;
  }
  std::size_t i = 0;
  for (Domain d : cfg.domains) {
    out << "## Lemma checks, " << to_string(d) << "\n\n| h | check | count | max error | min margin | status |\n"
        << "|---|---|---|---|---|---|\n";
    for (int l = cfg.level_min; l <= cfg.level_max; ++l, ++i) {
      if (!res[i].value) {
        out << "| " << h_label(l) << " | ERR | ERR | ERR | ERR | ERR |\n";
        continue;
      }
      for (const auto& c : res[i].value->checks) out << "| " << h_label(l) << " | " << row(c, " | ", true) << " |\n";
    }
    out << "\n";
  }
  return failures;
}

int mesh_dump(const ExperimentConfig& cfg, std::ostream& out, std::ostream& log) {
  int failures = 0;
  for (Domain d : cfg.domains)
    for (int l = cfg.level_min; l <= cfg.level_max; ++l) {
      try {
        const TriMesh mesh = build_mesh(d, l);
        out << "# mesh " << to_string(d) << " level " << l << "\n";
        write_mesh(out, mesh);
      } catch (const std::exception& e) {
        ++failures;
        log << "mesh-export " << to_string(d) << " level=" << l << ": " << e.what() << "\n";
      }
    }
  return failures;
}

}  // namespace

int run(const ExperimentConfig& cfg, std::ostream& out, std::ostream& log) {
  cfg.validate();
  int failures = 0;
  for (Task t : cfg.tasks) {
    switch (t) {
      case Task::condnum:
      case Task::infsup: failures += scalar_table(cfg, out, log, t); break;
      case Task::fortin: failures += fortin_table(cfg, out, log); break;
      case Task::lemmas: failures += lemma_table(cfg, out, log); break;
      case Task::mesh_export: failures += mesh_dump(cfg, out, log); break;
    }
  }
  return failures == 0 ? 0 : 1;
}

}  // namespace stokes
