#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "stokes/experiment.hpp"

using namespace stokes;
namespace fs = std::filesystem;

namespace {

std::string run_to_string(const ExperimentConfig& cfg, int* code = nullptr) {
  std::ostringstream out, log;
  const int rc = run(cfg, out, log);
  if (code) *code = rc;
  return out.str();
}

fs::path temp_file(const std::string& name, const std::string& body) {
  const fs::path p = fs::temp_directory_path() / ("stokes_cli_" + std::to_string(::getpid()) + "_" + name);
  std::ofstream(p) << body;
  return p;
}

std::string error_of(const std::vector<std::string>& args) {
  try {
    parse_config(args);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

struct Proc {
  int code = -1;
  std::string out;
};

Proc run_binary(const std::string& args) {
  const char* bin = std::getenv("STOKES_PRECOND_BIN");
  if (!bin) return {};
  const std::string cmd = std::string(bin) + " " + args + " 2>&1";
  Proc p;
  FILE* f = ::popen(cmd.c_str(), "r");
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) p.out.append(buf, n);
  const int st = ::pclose(f);
  p.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return p;
}

}  // namespace

TEST(ParseConfig, Defaults) {
  const ExperimentConfig c = parse_config({"condnum"});
  EXPECT_EQ(c.domains.size(), 3u);
  EXPECT_EQ(c.element, Element::taylor_hood);
  EXPECT_EQ(c.eps_list, (std::vector<double>{1.0, 0.1, 0.01}));
  EXPECT_EQ(c.level_min, 2);
  EXPECT_EQ(c.level_max, 5);
  EXPECT_EQ(c.tasks, std::vector<Task>{Task::condnum});
  EXPECT_EQ(c.format, OutputFormat::markdown);
  EXPECT_TRUE(c.output.empty());
}

TEST(ParseConfig, Overrides) {
  const ExperimentConfig c =
      parse_config({"infsup", "--domain", "lshape,slit", "--element", "mini", "--eps", "0.01,1,0.1", "--levels", "1..3", "--format", "csv"});
  EXPECT_EQ(c.domains, (std::vector<Domain>{Domain::lshape, Domain::slit}));
  EXPECT_EQ(c.element, Element::mini);
  EXPECT_EQ(c.eps_list, (std::vector<double>{1.0, 0.1, 0.01}));
  EXPECT_EQ(c.level_min, 1);
  EXPECT_EQ(c.level_max, 3);
  EXPECT_EQ(c.tasks, std::vector<Task>{Task::infsup});
  EXPECT_EQ(c.format, OutputFormat::csv);
  EXPECT_EQ(parse_config({"fortin-verify", "--no-norms"}).fortin_norms, false);
  EXPECT_EQ(parse_config({"lemma-check"}).tasks, std::vector<Task>{Task::lemmas});
}

TEST(ParseConfig, RejectsMalformedValues) {
  EXPECT_NE(error_of({"condnum", "--eps", "1,abc"}), "");
  EXPECT_NE(error_of({"condnum", "--eps", "0"}), "");
  EXPECT_NE(error_of({"condnum", "--eps", "1.5"}), "");
  EXPECT_NE(error_of({"condnum", "--levels", "3..2"}), "");
  EXPECT_NE(error_of({"condnum", "--levels", "0..2"}), "");
  EXPECT_NE(error_of({"condnum", "--domain", "disk"}), "");
  EXPECT_NE(error_of({"condnum", "--element", "p3"}), "");
  EXPECT_NE(error_of({"condnum", "--format", "xml"}), "");
  EXPECT_NE(error_of({}), "");
  EXPECT_NE(error_of({"solve"}), "");
}

TEST(ParseConfig, ConflictingFlagsNameBothSources) {
  const std::string e = error_of({"condnum", "--eps", "1", "--eps", "0.5"});
  EXPECT_NE(e.find("conflicting"), std::string::npos);
  EXPECT_NE(e.find("'1'"), std::string::npos);
  EXPECT_NE(e.find("'0.5'"), std::string::npos);
  // repeating the same value is not a conflict
  EXPECT_EQ(error_of({"condnum", "--eps", "1", "--eps", "1"}), "");
}

TEST(ConfigFile, KeyValue) {
  const fs::path p = temp_file("kv.cfg", "# experiment\ndomain = slit\nelement=mini\neps=1,0.1\nlevels=1..2\nformat=csv\n");
  const ExperimentConfig c = parse_config({"condnum", "--config", p.string()});
  EXPECT_EQ(c.domains, std::vector<Domain>{Domain::slit});
  EXPECT_EQ(c.element, Element::mini);
  EXPECT_EQ(c.eps_list, (std::vector<double>{1.0, 0.1}));
  EXPECT_EQ(c.level_max, 2);
  EXPECT_EQ(c.format, OutputFormat::csv);
  fs::remove(p);
}

TEST(ConfigFile, Json) {
  const fs::path p = temp_file("c.json", R"({"domains": ["square", "lshape"], "element": "mini", "eps": [1, 0.01], "levels": "2..3"})");
  const ExperimentConfig c = parse_config({"infsup", "--config", p.string()});
  EXPECT_EQ(c.domains, (std::vector<Domain>{Domain::square, Domain::lshape}));
  EXPECT_EQ(c.eps_list, (std::vector<double>{1.0, 0.01}));
  EXPECT_EQ(c.level_min, 2);
  EXPECT_EQ(c.level_max, 3);
  fs::remove(p);
}

TEST(ConfigFile, FlagsOverrideFile) {
  const fs::path p = temp_file("o.cfg", "element=mini\nlevels=1..2\n");
  const ExperimentConfig c = parse_config({"condnum", "--config", p.string(), "--element", "taylor_hood"});
  EXPECT_EQ(c.element, Element::taylor_hood);
  EXPECT_EQ(c.level_max, 2);
  fs::remove(p);
}

TEST(ConfigFile, ConflictInFileIsReported) {
  const fs::path p = temp_file("dup.cfg", "eps=1\neps=0.5\n");
  const std::string e = error_of({"condnum", "--config", p.string()});
  EXPECT_NE(e.find("conflicting"), std::string::npos);
  EXPECT_NE(e.find(":2"), std::string::npos);
  fs::remove(p);
  const fs::path bad = temp_file("bad.cfg", "colour=blue\n");
  EXPECT_NE(error_of({"condnum", "--config", bad.string()}), "");
  fs::remove(bad);
  EXPECT_NE(error_of({"condnum", "--config", "/nonexistent/stokes.cfg"}), "");
}

TEST(ParseHelpers, Lists) {
  EXPECT_EQ(parse_eps_list("0.1, 1,0.1"), (std::vector<double>{1.0, 0.1}));
  EXPECT_EQ(parse_levels("3"), std::make_pair(3, 3));
  EXPECT_EQ(parse_levels("2..4"), std::make_pair(2, 4));
  EXPECT_EQ(parse_domain_list("all").size(), 3u);
  EXPECT_EQ(format_number(13.456, 2), "13.46");
  EXPECT_EQ(worker_count(3), 3u);
}

TEST(Run, MarkdownLayout) {
  ExperimentConfig c = parse_config({"condnum", "--domain", "square", "--eps", "1,0.1", "--levels", "1..2"});
  int rc = -1;
  const std::string s = run_to_string(c, &rc);
  EXPECT_EQ(rc, 0);
  EXPECT_NE(s.find("## Condition number, taylor_hood, square"), std::string::npos);
  EXPECT_NE(s.find("| eps \\ h | 2^-1 | 2^-2 |"), std::string::npos);
  EXPECT_NE(s.find("| 1 | "), std::string::npos);
  EXPECT_NE(s.find("| 0.1 | "), std::string::npos);
}

TEST(Run, DeterministicAcrossThreadCounts) {
  ExperimentConfig c = parse_config({"condnum", "--domain", "all", "--element", "mini", "--eps", "1,0.01", "--levels", "1..2", "--format", "csv"});
  c.threads = 1;
  const std::string a = run_to_string(c);
  c.threads = 4;
  const std::string b = run_to_string(c);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, run_to_string(c));
  EXPECT_EQ(a.find(','), a.find("domain,") + 6);
  EXPECT_EQ(a.find("e+"), std::string::npos);
}

TEST(Run, InfsupCsvHasPositiveAlpha) {
  const ExperimentConfig c = parse_config({"infsup", "--domain", "lshape", "--element", "mini", "--eps", "0.1", "--levels", "2", "--format", "csv"});
  std::istringstream is(run_to_string(c));
  std::string header, row;
  std::getline(is, header);
  std::getline(is, row);
  EXPECT_EQ(header, "domain,element,eps,level,h,alpha");
  const double alpha = std::stod(row.substr(row.rfind(',') + 1));
  EXPECT_GT(alpha, 0.0);
}

TEST(Run, LemmaCheckPasses) {
  int rc = -1;
  const std::string s = run_to_string(parse_config({"lemma-check", "--domain", "square", "--levels", "1", "--format", "csv"}), &rc);
  EXPECT_EQ(rc, 0);
  EXPECT_NE(s.find("dimension_identity"), std::string::npos);
  EXPECT_EQ(s.find("FAIL"), std::string::npos);
}

TEST(Run, InadmissibleMeshGivesErrorCell) {
  int rc = -1;
  const std::string s =
      run_to_string(parse_config({"fortin-verify", "--domain", "lshape", "--levels", "1", "--format", "csv", "--no-norms"}), &rc);
  EXPECT_EQ(rc, 1);
  EXPECT_NE(s.find("ERR"), std::string::npos);
}

TEST(Binary, ExitCodes) {
  if (!std::getenv("STOKES_PRECOND_BIN")) GTEST_SKIP() << "binary path not provided";
  const Proc bad = run_binary("condnum --domain disk");
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.out.find("error:"), std::string::npos);
  EXPECT_EQ(run_binary("condnum --eps 1 --eps 0.5").code, 2);
  const Proc ok = run_binary("condnum --domain square --levels 1 --eps 1 --format csv");
  EXPECT_EQ(ok.code, 0);
  EXPECT_NE(ok.out.find("square,taylor_hood,1,1,"), std::string::npos);
}

TEST(Binary, WritesOutputFile) {
  if (!std::getenv("STOKES_PRECOND_BIN")) GTEST_SKIP() << "binary path not provided";
  const fs::path p = fs::temp_directory_path() / ("stokes_cli_mesh_" + std::to_string(::getpid()));
  EXPECT_EQ(run_binary("mesh-export --domain slit --levels 1 --out " + p.string()).code, 0);
  std::ifstream f(p);
  std::string first;
  std::getline(f, first);
  EXPECT_EQ(first.rfind("# mesh", 0), 0u);
  fs::remove(p);
}
