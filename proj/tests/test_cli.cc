#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "helpers.hh"

#include "dprisk/io.hh"

using namespace dprisk;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string output;
};

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("dprisk_test_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Run cli(const fs::path& dir, const std::string& args) {
  const auto log = dir / "cli_output.txt";
  const std::string cmd = std::string("\"") + DPRISK_CLI_PATH + "\" " + args + " > \"" +
                          log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.output = slurp(log);
  return r;
}

std::string prefix(const fs::path& dir, const std::string& name) {
  return "\"" + (dir / name).string() + "\"";
}

}  // namespace

TEST_CASE("bad arguments exit with code 2") {
  const auto dir = scratch_dir("args");
  CHECK(cli(dir, "").code == 2);
  CHECK(cli(dir, "no-such-command").code == 2);
  CHECK(cli(dir, "sample --pi 0.1").code == 2);

  const auto t = testutil::table_from_counts(testutil::single_var(3), {2, 1, 3}, 0.5);
  io::write_table(t, (dir / "t").string());
  io::write_file((dir / "cfg.json").string(), R"({"burnin": 10})");
  const auto r = cli(dir, "fit-dp --table " + prefix(dir, "t") + " --seed 1 --config " +
                              prefix(dir, "cfg.json") + " --out-dir " + prefix(dir, "dp"));
  CHECK(r.code == 2);
  CHECK(r.output.find("burnin") != std::string::npos);
  io::write_file((dir / "cfg.json").string(), R"({"sampler": {"burnin": 10}})");
  CHECK(cli(dir, "fit-dp --table " + prefix(dir, "t") + " --seed 1 --config " +
                     prefix(dir, "cfg.json") + " --out-dir " + prefix(dir, "dp")).code == 2);

  CHECK(cli(dir, "fit-ml --table " + prefix(dir, "missing")).code == 2);
  CHECK(cli(dir, "fit-ml --table " + prefix(dir, "t") + " --spec 'I + A*Z'").code == 2);
  fs::remove_all(dir);
}

TEST_CASE("a table without sample uniques exits with code 3") {
  const auto dir = scratch_dir("degenerate");
  const auto t = testutil::table_from_counts(testutil::single_var(3), {2, 4, 3}, 0.5);
  io::write_table(t, (dir / "t").string());
  const auto r = cli(dir, "risk --table " + prefix(dir, "t") +
                              " --spec I --seed 1 --burn-in 20 --draws 20 --out-dir " +
                              prefix(dir, "risk"));
  CHECK(r.code == 3);
  CHECK(r.output.find("error:") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("a fit without an ML estimate exits with code 4") {
  const auto dir = scratch_dir("numeric");
  const auto t = testutil::table_from_counts(testutil::single_var(3), {2, 0, 3}, 0.5);
  io::write_table(t, (dir / "t").string());
  const auto r = cli(dir, "fit-ml --table " + prefix(dir, "t"));
  CHECK(r.code == 4);
  CHECK(r.output.find("converged: no") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("seeded commands are byte-for-byte reproducible") {
  const auto dir = scratch_dir("repro");
  std::string outputs[2];
  for (int rep = 0; rep < 2; ++rep) {
    const auto sub = dir / std::to_string(rep);
    fs::create_directories(sub);
    REQUIRE(cli(sub, "generate --variables A:3,B:4 --re gamma --N 400 --seed 3 --out " +
                         prefix(sub, "pop")).code == 0);
    REQUIRE(cli(sub, "sample --population " + prefix(sub, "pop") + " --pi 0.1 --seed 4 --out " +
                         prefix(sub, "sam")).code == 0);
    const auto r = cli(sub, "risk --table " + prefix(sub, "sam") +
                                " --spec I --seed 5 --burn-in 50 --draws 50 --out-dir " +
                                prefix(sub, "risk"));
    REQUIRE(r.code == 0);
    outputs[rep] = slurp(sub / "pop.csv") + slurp(sub / "sam.csv") + r.output;
    std::set<fs::path> files;
    for (const auto& e : fs::directory_iterator(sub / "risk")) files.insert(e.path().filename());
    for (const auto& f : files) outputs[rep] += f.string() + "\n" + slurp(sub / "risk" / f);
  }
  CHECK(outputs[0] == outputs[1]);
  CHECK_FALSE(outputs[0].empty());
  fs::remove_all(dir);
}

TEST_CASE("report renders a risk JSON") {
  const auto dir = scratch_dir("report");
  REQUIRE(cli(dir, "generate --variables A:3,B:4 --re gamma --N 400 --seed 3 --out " +
                       prefix(dir, "pop")).code == 0);
  REQUIRE(cli(dir, "sample --population " + prefix(dir, "pop") + " --pi 0.1 --seed 4 --out " +
                       prefix(dir, "sam")).code == 0);
  REQUIRE(cli(dir, "risk --table " + prefix(dir, "sam") +
                       " --spec I --seed 5 --burn-in 50 --draws 50 --out-dir " +
                       prefix(dir, "risk")).code == 0);
  const auto r = cli(dir, "report " + prefix(dir, "risk/risk.json"));
  CHECK(r.code == 0);
  CHECK(r.output.find("tau1") != std::string::npos);
  fs::remove_all(dir);
}
