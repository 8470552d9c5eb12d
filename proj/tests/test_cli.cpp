#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "cli.hpp"
#include "doctest.h"
#include "wseg/dataset_io.hpp"
#include "wseg/eval.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = wseg::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() /
                     ("wseg_cli_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

// Small dataset plus quick training flags.
const std::vector<std::string> kSmall = {"--classes", "3",  "--simple", "30",    "--complex",
                                         "10",        "--val", "6",     "--height", "32",
                                         "--width",   "32"};
const std::vector<std::string> kQuick = {"--init-epochs", "3", "--mstep-epochs", "2"};

std::vector<std::string> cat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("gen-data writes one manifest line per record") {
  const fs::path dir = scratch("gen");
  const Run r = cli({"gen-data", "--simple", "10", "--complex", "5", "--out", dir.string()});
  REQUIRE(r.code == 0);
  CHECK(r.out == "simple 10\ncomplex 5\nval 0\nrecords 15\n");
  CHECK(count_lines(slurp(dir / "manifest.jsonl")) == 15);
  CHECK(fs::exists(dir / "dataset.json"));

  SUBCASE("a second run is byte-identical") {
    const fs::path again = scratch("gen_again");
    REQUIRE(cli({"gen-data", "--simple", "10", "--complex", "5", "--out", again.string()}).code == 0);
    CHECK(slurp(again / "manifest.jsonl") == slurp(dir / "manifest.jsonl"));
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
      if (!entry.is_regular_file()) continue;
      CHECK(slurp(entry.path()) == slurp(again / fs::relative(entry.path(), dir)));
    }
  }
  SUBCASE("the dataset loads back") {
    const auto ds = wseg::load_dataset(dir);
    CHECK(ds.simple.size() == 10);
    CHECK(ds.complex.size() == 5);
  }
}

TEST_CASE("usage errors exit 2") {
  const fs::path dir = scratch("usage");
  CHECK(cli({"gen-data", "--classes", "0", "--out", dir.string()}).code == 2);
  CHECK(cli({"gen-data", "--classes", "9", "--out", dir.string()}).code == 2);
  CHECK(cli({}).code == 2);
  CHECK(cli({"no-such-command"}).code == 2);
  CHECK(cli({"gen-data", "--bogus"}).code == 2);
  CHECK(cli({"--help"}).code == 0);
  // missing dataset
  CHECK(cli({"train-init", "--out", (dir / "empty").string()}).code == 2);
  CHECK(cli({"eval", "--oracle", "--out", (dir / "empty").string()}).code == 2);
  // eval wants exactly one source
  CHECK(cli({"eval", "--out", dir.string()}).code == 2);
}

TEST_CASE("grad-check") {
  const Run ok = cli({"grad-check"});
  CHECK(ok.code == 0);
  CHECK(ok.out.find("trials 100\n") != std::string::npos);
  CHECK(ok.out.find("PASS\n") != std::string::npos);
  const Run strict = cli({"grad-check", "--trials", "5", "--tolerance", "0"});
  CHECK(strict.code == 1);
  CHECK(strict.out.find("FAIL\n") != std::string::npos);
  CHECK(strict.err.find("at trial") != std::string::npos);
}

TEST_CASE("eval --oracle scores 100") {
  const fs::path dir = scratch("oracle");
  REQUIRE(cli(cat({"gen-data", "--out", dir.string()}, kSmall)).code == 0);
  const Run r = cli({"eval", "--oracle", "--out", dir.string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("Oracle") != std::string::npos);
  const auto report = wseg::report_from_json(slurp(dir / "reports" / "eval_report.json"));
  CHECK(report.stages.at(0).scores.miou == 1.0);
  CHECK(r.out.find("100.0") != std::string::npos);
}

TEST_CASE("run-em pipeline") {
  const fs::path dir = scratch("em");
  REQUIRE(cli(cat({"gen-data", "--out", dir.string()}, kSmall)).code == 0);
  const Run r = cli(cat({"run-em", "--out", dir.string(), "--iterations", "2"}, kQuick));
  REQUIRE(r.code == 0);
  for (const char* stem : {"init", "iter1", "iter2"}) {
    CHECK(fs::exists(dir / "checkpoints" / (std::string(stem) + ".wst")));
    CHECK(fs::exists(dir / "checkpoints" / (std::string(stem) + ".json")));
    CHECK(fs::exists(dir / "reports" / (std::string(stem) + ".json")));
  }
  const std::string report = slurp(dir / "reports" / "em_report.json");
  CHECK(wseg::report_from_json(report).stages.size() == 3);
  CHECK(r.out == slurp(dir / "reports" / "em_report.txt"));

  SUBCASE("report subcommand reprints the saved report") {
    const Run t = cli({"report", "--out", dir.string()});
    CHECK(t.code == 0);
    CHECK(t.out == slurp(dir / "reports" / "em_report.txt"));
    const Run j = cli({"report", "--out", dir.string(), "--format", "json"});
    CHECK(j.out == report);
  }
  SUBCASE("eval of a checkpoint matches the stage score") {
    const Run e = cli({"eval", "--checkpoint", (dir / "checkpoints" / "iter2.wst").string(), "--out",
                       dir.string()});
    REQUIRE(e.code == 0);
    const auto ev = wseg::report_from_json(slurp(dir / "reports" / "eval_report.json"));
    CHECK(ev.stages.at(0).scores.miou == wseg::report_from_json(report).stages.at(2).scores.miou);
  }
  SUBCASE("resume from iter1 reproduces the full run") {
    const fs::path b = scratch("em_resume");
    fs::copy(dir, b, fs::copy_options::recursive);
    fs::remove(b / "checkpoints" / "iter2.wst");
    fs::remove(b / "reports" / "em_report.json");
    const Run again = cli(cat({"run-em", "--out", b.string(), "--iterations", "2", "--from-checkpoint",
                               (b / "checkpoints" / "iter1.wst").string()},
                              kQuick));
    REQUIRE(again.code == 0);
    CHECK(slurp(b / "reports" / "em_report.json") == report);
    CHECK(slurp(b / "checkpoints" / "iter2.wst") == slurp(dir / "checkpoints" / "iter2.wst"));
  }
  SUBCASE("WSEG_THREADS does not change results") {
    const fs::path b = scratch("em_threads");
    REQUIRE(cli(cat({"gen-data", "--out", b.string()}, kSmall)).code == 0);
    ::setenv("WSEG_THREADS", "2", 1);
    const Run t = cli(cat({"run-em", "--out", b.string(), "--iterations", "2"}, kQuick));
    ::unsetenv("WSEG_THREADS");
    REQUIRE(t.code == 0);
    CHECK(slurp(b / "reports" / "em_report.json") == report);
    CHECK(slurp(b / "checkpoints" / "iter2.wst") == slurp(dir / "checkpoints" / "iter2.wst"));
  }
}

TEST_CASE("config file values apply and flags override them") {
  const fs::path dir = scratch("config");
  REQUIRE(cli(cat({"gen-data", "--out", dir.string()}, kSmall)).code == 0);
  const fs::path ini = dir / "quick.ini";
  std::ofstream(ini) << "init-epochs = 2\niterations = 1\n";
  REQUIRE(cli({"run-em", "--config", ini.string(), "--out", dir.string(), "--mstep-epochs", "1"}).code == 0);
  auto r = wseg::report_from_json(slurp(dir / "reports" / "em_report.json"));
  REQUIRE(r.stages.size() == 2);
  CHECK(r.stages[0].loss_curve.size() == 3);
  CHECK(r.stages[1].loss_curve.size() == 2);

  REQUIRE(cli({"run-em", "--config", ini.string(), "--out", dir.string(), "--mstep-epochs", "1",
               "--init-epochs", "1"})
              .code == 0);
  r = wseg::report_from_json(slurp(dir / "reports" / "em_report.json"));
  CHECK(r.stages[0].loss_curve.size() == 2);
}

TEST_CASE("train-init writes only the initial stage") {
  const fs::path dir = scratch("init");
  REQUIRE(cli(cat({"gen-data", "--out", dir.string()}, kSmall)).code == 0);
  REQUIRE(cli(cat({"train-init", "--out", dir.string()}, kQuick)).code == 0);
  CHECK(fs::exists(dir / "checkpoints" / "init.wst"));
  CHECK_FALSE(fs::exists(dir / "checkpoints" / "iter1.wst"));
  CHECK(wseg::report_from_json(slurp(dir / "reports" / "init_report.json")).stages.size() == 1);
}

TEST_CASE("numerical failure exits 3") {
  const fs::path dir = scratch("diverge");
  REQUIRE(cli(cat({"gen-data", "--out", dir.string()}, kSmall)).code == 0);
  const Run r = cli({"train-init", "--out", dir.string(), "--init-lr", "1e300", "--init-epochs", "3"});
  CHECK(r.code == 3);
  CHECK(r.err.find("Initial") != std::string::npos);
}
