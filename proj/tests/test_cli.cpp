#include <doctest.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "vperturb/cli/cli.hpp"
#include "vperturb/cli/config.hpp"
#include "vperturb/errors.hpp"

using namespace vperturb;
namespace fs = std::filesystem;

namespace {

const char* kBase = R"([model]
kind = "quadratic"
dim = 3

[dataset]
n_train = 80
n_eval = 160

[sgd]
T = 12
eta = 0.1
batch = 8
seed = 4

[schedule]
kind = "fixed_isotropic"
sigma = 0.1

[proxies]
m = 40
m_T = 200
seed = 9
)";

struct Workdir {
  fs::path dir;
  explicit Workdir(const std::string& name) : dir(fs::temp_directory_path() / ("vperturb_cli_" + name)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Workdir() { fs::remove_all(dir); }
  std::string path(const std::string& f) const { return (dir / f).string(); }
  std::string write(const std::string& f, const std::string& text) const {
    std::ofstream(dir / f) << text;
    return path(f);
  }
};

std::string slurp(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

std::size_t column(const std::vector<std::string>& header, const std::string& name) {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  FAIL("missing column " << name);
  return 0;
}

}  // namespace

TEST_CASE("config parsing: required keys, unknown keys and checkpoints") {
  const auto c = cli::parse_config(kBase);
  CHECK(c.sgd.horizon == 12);
  CHECK(c.all_checkpoints);
  CHECK(c.proxies.checkpoints.size() == 11);
  CHECK(c.schedule.dim == 3);
  CHECK(c.reference.ghost_seed == 5);

  std::string missing = kBase;
  missing.replace(missing.find("T = 12\n"), 7, "");
  try {
    cli::parse_config(missing);
    FAIL("accepted");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("sgd.T") != std::string::npos);
  }
  try {
    cli::parse_config(std::string(kBase) + "[output]\ncolour = \"red\"\n");
    FAIL("accepted");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("output.colour") != std::string::npos);
  }
  CHECK_THROWS_AS(cli::parse_config(std::string(kBase) + "[extras]\nx = 1\n"), ConfigError);
  CHECK_THROWS_AS(cli::parse_config("[model\n"), ConfigError);

  std::string listed = kBase;
  listed.replace(listed.find("m = 40"), 6, "checkpoints = [1, 5, 10]\nm = 40");
  const auto l = cli::parse_config(listed);
  CHECK_FALSE(l.all_checkpoints);
  CHECK(l.proxies.checkpoints == std::vector<std::size_t>{1, 5, 10});
  listed.replace(listed.find("[1, 5, 10]"), 10, "[1, 50]");
  CHECK_THROWS_AS(cli::parse_config(listed), ConfigError);
}

TEST_CASE("explicit covariances parse as diagonals or matrices") {
  const auto c = cli::parse_config(std::string(kBase) +
                                   "[reference]\nmode = \"explicit\"\ncovariances = [[0.1, 0.2, 0.3], "
                                   "[[0.1, 0.0, 0.0], [0.0, 0.2, 0.01], [0.0, 0.01, 0.3]]]\n");
  REQUIRE(c.reference.covariances.size() == 2);
  CHECK(c.reference.covariances[0].kind() == gauss::Covariance::Kind::Diagonal);
  CHECK(c.reference.covariances[1].kind() == gauss::Covariance::Kind::Dense);
  CHECK_THROWS_AS(cli::parse_config(std::string(kBase) + "[reference]\nmode = \"explicit\"\n"), ConfigError);
}

TEST_CASE("config hash tracks the resolved configuration") {
  auto a = cli::parse_config(kBase);
  auto b = cli::parse_config(kBase);
  CHECK(cli::config_hash(a) == cli::config_hash(b));
  cli::override_seed(b, 77);
  CHECK(b.sgd.seed == 77);
  CHECK(b.proxies.seed == 77);
  CHECK(cli::config_hash(a) != cli::config_hash(b));
}

TEST_CASE("train, diagnose and bound are byte-for-byte reproducible") {
  Workdir w("determinism");
  const auto cfg = w.write("c.toml", kBase);
  std::string first[4];
  // the identical command line, run twice, writes identical bytes
  for (int round = 0; round < 2; ++round) {
    REQUIRE(run({"--config", cfg, "train", "--out", w.path("t.jsonl")}).code == 0);
    REQUIRE(run({"--config", cfg, "diagnose", "--trajectory", w.path("t.jsonl"), "--out", w.path("d")}).code == 0);
    REQUIRE(run({"bound", "--summary", w.path("d.json"), "--out", w.path("b.json")}).code == 0);
    const std::string files[4] = {slurp(w.path("t.jsonl")), slurp(w.path("d.json")), slurp(w.path("d.csv")),
                                  slurp(w.path("b.json"))};
    for (int i = 0; i < 4; ++i) {
      CAPTURE(i);
      CHECK_FALSE(files[i].empty());
      if (round == 0) {
        first[i] = files[i];
      } else {
        CHECK(files[i] == first[i]);
      }
    }
  }
}

TEST_CASE("outputs carry the reproducibility chain") {
  Workdir w("chain");
  const auto cfg = w.write("c.toml", kBase);
  REQUIRE(run({"--config", cfg, "train", "--out", w.path("t.jsonl")}).code == 0);
  REQUIRE(run({"--config", cfg, "diagnose", "--trajectory", w.path("t.jsonl"), "--out", w.path("d")}).code == 0);
  const auto s = nlohmann::json::parse(slurp(w.path("d.json")));
  for (const char* key : {"tool_version", "config_hash", "trajectory_hash", "seeds", "config"}) {
    CAPTURE(key);
    CHECK(s.contains(key));
  }
  CHECK(s["seeds"]["sgd_seed"] == 4);
  CHECK(s["seeds"]["proxies_seed"] == 9);
  const std::string csv = slurp(w.path("d.csv"));
  for (const char* key : {"# tool_version:", "# config_hash:", "# trajectory_hash:", "# seeds:", "# config:"}) {
    CHECK(csv.find(key) != std::string::npos);
  }
  const auto b = run({"bound", "--summary", w.path("d.json")});
  REQUIRE(b.code == 0);
  const auto bj = nlohmann::json::parse(b.out);
  CHECK(bj["trajectory_hash"] == s["trajectory_hash"]);
  CHECK(bj["config_hash"] == s["config_hash"]);
  CHECK(bj["bound"]["total"].get<double>() > 0.0);
}

TEST_CASE("fixed isotropic synchronized diagnose has a zero cost column") {
  Workdir w("fixed");
  const auto cfg = w.write("c.toml", kBase);
  REQUIRE(run({"--config", cfg, "train", "--out", w.path("t.jsonl")}).code == 0);
  REQUIRE(run({"--config", cfg, "diagnose", "--trajectory", w.path("t.jsonl"), "--out", w.path("d")}).code == 0);
  const auto rows = csv_rows(slurp(w.path("d.csv")));
  REQUIRE(rows.size() == 12);
  const auto c = column(rows[0], "C_hat");
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(std::stod(rows[i][c]) == 0.0);
}

TEST_CASE("ghost reference on an adaptive schedule prices mismatch") {
  Workdir w("ghost");
  std::string text = kBase;
  text.replace(text.find("kind = \"fixed_isotropic\""), 24, "kind = \"adaptive_diagonal\"");
  text += "[reference]\nmode = \"ghost\"\n";
  const auto cfg = w.write("c.toml", text);
  REQUIRE(run({"--config", cfg, "train", "--out", w.path("t.jsonl")}).code == 0);
  REQUIRE(run({"--config", cfg, "diagnose", "--trajectory", w.path("t.jsonl"), "--out", w.path("d")}).code == 0);
  const auto rows = csv_rows(slurp(w.path("d.csv")));
  const auto c = column(rows[0], "C_hat");
  bool positive = false;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double v = std::stod(rows[i][c]);
    CHECK(v >= 0.0);
    positive = positive || v > 0.0;
  }
  CHECK(positive);
  // a synchronized bound is refused for this summary
  const auto b = run({"bound", "--summary", w.path("d.json"), "--variant", "synchronized"});
  CHECK(b.code == cli::kExitConfig);
  CHECK(b.err.find("synchronized") != std::string::npos);
  CHECK(run({"bound", "--summary", w.path("d.json"), "--variant", "comparable"}).code == 0);
  // synchronized references for this data-dependent schedule are inadmissible
  std::string sync = kBase;
  sync.replace(sync.find("kind = \"fixed_isotropic\""), 24, "kind = \"adaptive_diagonal\"");
  const auto scfg = w.write("s.toml", sync);
  CHECK(run({"--config", scfg, "diagnose", "--trajectory", w.path("t.jsonl"), "--out", w.path("s")}).code ==
        cli::kExitConfig);
}

TEST_CASE("a checkpoint list gives one row per listed step") {
  Workdir w("checkpoints");
  std::string text = kBase;
  text.replace(text.find("m = 40"), 6, "checkpoints = [1, 5, 10]\nm = 40");
  const auto cfg = w.write("c.toml", text);
  REQUIRE(run({"--config", cfg, "train", "--out", w.path("t.jsonl")}).code == 0);
  REQUIRE(run({"--config", cfg, "diagnose", "--trajectory", w.path("t.jsonl"), "--out", w.path("d")}).code == 0);
  const auto rows = csv_rows(slurp(w.path("d.csv")));
  REQUIRE(rows.size() == 4);
  CHECK(rows[1][0] == "1");
  CHECK(rows[2][0] == "5");
  CHECK(rows[3][0] == "10");
}

TEST_CASE("compare replays one trajectory under each schedule") {
  Workdir w("compare");
  const auto cfg = w.write("c.toml", kBase);
  REQUIRE(run({"--config", cfg, "train", "--out", w.path("t.jsonl")}).code == 0);
  const auto r = run({"--config", cfg, "compare", "--trajectory", w.path("t.jsonl"), "--schedules",
                      "fixed_isotropic,adaptive_scalar"});
  REQUIRE(r.code == 0);
  const auto rows = csv_rows(r.out);
  REQUIRE(rows.size() == 3);
  const auto h = column(rows[0], "trajectory_hash");
  CHECK(rows[1][h] == rows[2][h]);
  CHECK(rows[1][column(rows[0], "schedule")] == "fixed_isotropic");
  // the adaptive schedule falls back to a ghost reference
  CHECK(rows[2][column(rows[0], "reference")] == "ghost");
  CHECK(run({"--config", cfg, "compare", "--schedules", "fixed_isotropic,warp"}).code == cli::kExitConfig);
  const auto j = run({"--config", cfg, "--format", "json", "compare", "--schedules", "fixed_isotropic"});
  REQUIRE(j.code == 0);
  CHECK(nlohmann::json::parse(j.out)["rows"].size() == 1);
}

TEST_CASE("exit codes") {
  Workdir w("codes");
  const auto cfg = w.write("c.toml", kBase);
  CHECK(run({}).code == cli::kExitConfig);
  CHECK(run({"frobnicate"}).code == cli::kExitConfig);
  CHECK(run({"--help"}).code == 0);
  CHECK(run({"--config", w.path("nope.toml"), "train"}).code == cli::kExitConfig);
  std::string missing = kBase;
  missing.replace(missing.find("T = 12\n"), 7, "");
  const auto m = run({"--config", w.write("m.toml", missing), "train", "--out", w.path("x.jsonl")});
  CHECK(m.code == cli::kExitConfig);
  CHECK(m.err.find("sgd.T") != std::string::npos);
  // bad trajectory file is a data error
  w.write("bad.jsonl", "{\"version\": 1}\nnot json\n");
  CHECK(run({"--config", cfg, "diagnose", "--trajectory", w.path("bad.jsonl"), "--out", w.path("d")}).code ==
        cli::kExitData);
  CHECK(run({"--config", cfg, "diagnose", "--trajectory", w.path("absent.jsonl"), "--out", w.path("d")}).code ==
        cli::kExitData);
  // a trajectory from another model is incompatible
  REQUIRE(run({"--config", cfg, "train", "--out", w.path("t.jsonl")}).code == 0);
  std::string d4 = kBase;
  d4.replace(d4.find("dim = 3"), 7, "dim = 4");
  CHECK(run({"--config", w.write("d4.toml", d4), "diagnose", "--trajectory", w.path("t.jsonl"), "--out",
             w.path("d")})
            .code == cli::kExitData);
  // seed override changes the run, so the old trajectory no longer matches
  CHECK(run({"--config", cfg, "--seed-override", "99", "diagnose", "--trajectory", w.path("t.jsonl"), "--out",
             w.path("d")})
            .code == cli::kExitData);
  CHECK(run({"bound", "--summary", w.path("missing.json")}).code == cli::kExitData);
  CHECK(run({"--config", cfg, "--format", "xml", "train"}).code == cli::kExitConfig);
  std::string fluc = kBase;
  fluc.replace(fluc.find("seed = 4"), 8, "seed = 4\nsubbatches = 0");
  fluc += "deviation_mode = \"fluc\"\n";
  const auto fcfg = w.write("f.toml", fluc);
  REQUIRE(run({"--config", fcfg, "train", "--out", w.path("f.jsonl")}).code == 0);
  CHECK(run({"--config", fcfg, "diagnose", "--trajectory", w.path("f.jsonl"), "--out", w.path("f")}).code ==
        cli::kExitConfig);
}

TEST_CASE("verify reports success with exit code 0") {
  const auto r = run({"verify", "--sweep", "5"});
  CHECK(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["passed"] == true);
  CHECK(j["checks"].size() == 10);
}

TEST_CASE("exception classes map to exit codes") {
  CHECK(cli::exit_code_for(ConfigError("x")) == 2);
  CHECK(cli::exit_code_for(AdmissibilityError("x")) == 2);
  CHECK(cli::exit_code_for(FormatError("x")) == 3);
  CHECK(cli::exit_code_for(RunError("x")) == 3);
  CHECK(cli::exit_code_for(DomainError("x")) == 3);
}
