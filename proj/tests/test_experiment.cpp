#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "support/oracles.hpp"
#include "tmeig/experiment.hpp"

using namespace tmeig;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("tmeig_test_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string write_file(const fs::path& path, const std::string& body) {
  std::ofstream out(path);
  out << body;
  return path.string();
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

constexpr const char* kScalarConfig = R"({
  "experiment": "estimator-compare",
  "model": {"type": "scalar-gaussian"},
  "kinds": ["m", "pos"],
  "L": 2000,
  "p": 0.3333333333333333,
  "replicates": 3,
  "seed": 7
})";

}  // namespace

TEST_SUITE("experiment") {

TEST_CASE("scalar estimator-compare run produces one row per kind and replicate") {
  TempDir tmp;
  const std::string config_path = write_file(tmp.path / "config.json", kScalarConfig);
  RunOptions options;
  options.out = (tmp.path / "out").string();
  const RunResult result = run_config_file(config_path, options);
  CHECK(result.n_cells == 6);
  CHECK(result.n_failed == 0);

  const std::string csv = read_file(tmp.path / "out" / "sweep.csv");
  CHECK(csv.rfind("kind,p,L,M,N,replicate,seed,value,exact,error\n", 0) == 0);
  int lines = 0;
  for (char c : csv)
    if (c == '\n') ++lines;
  CHECK(lines == 7);  // header + 6 rows

  // Values sit near the scalar closed form.
  const double exact = 0.5 * std::log(2.0);
  std::istringstream stream(csv);
  std::string line;
  std::getline(stream, line);
  while (std::getline(stream, line)) {
    const auto first = line.find(',');
    std::size_t pos = 0;
    std::vector<std::string> cells;
    while (pos != std::string::npos) {
      const auto next = line.find(',', pos);
      cells.push_back(line.substr(pos, next - pos));
      pos = next == std::string::npos ? next : next + 1;
    }
    const double value = std::stod(cells[7]);
    CHECK(std::abs(value - exact) < 0.15);
    CHECK(std::stod(cells[8]) == doctest::Approx(exact));
  }

  CHECK(fs::exists(tmp.path / "out" / "aggregates.json"));
  const std::string manifest = read_file(tmp.path / "out" / "manifest.json");
  CHECK(manifest.find("config_sha256") != std::string::npos);
  CHECK(manifest.find("n_cells") != std::string::npos);
}

TEST_CASE("reruns of the same config produce identical CSVs") {
  TempDir tmp;
  const std::string config_path = write_file(tmp.path / "config.json", kScalarConfig);
  RunOptions first, second;
  first.out = (tmp.path / "a").string();
  second.out = (tmp.path / "b").string();
  run_config_file(config_path, first);
  run_config_file(config_path, second);
  CHECK(read_file(tmp.path / "a" / "sweep.csv") == read_file(tmp.path / "b" / "sweep.csv"));
  CHECK(read_file(tmp.path / "a" / "aggregates.json") ==
        read_file(tmp.path / "b" / "aggregates.json"));
}

TEST_CASE("a seed override changes the outputs deterministically") {
  TempDir tmp;
  const std::string config_path = write_file(tmp.path / "config.json", kScalarConfig);
  RunOptions base, reseeded;
  base.out = (tmp.path / "a").string();
  reseeded.out = (tmp.path / "b").string();
  reseeded.seed = 1234;
  run_config_file(config_path, base);
  run_config_file(config_path, reseeded);
  CHECK(read_file(tmp.path / "a" / "sweep.csv") != read_file(tmp.path / "b" / "sweep.csv"));
}

TEST_CASE("unknown keys are rejected with their field path") {
  TempDir tmp;
  const std::string config_path = write_file(tmp.path / "bad.json", R"({
    "experiment": "estimator-compare",
    "model": {"type": "scalar-gaussian"},
    "kinds": ["m"],
    "L": 100,
    "p": 0.25,
    "replicates": 1,
    "seed": 1,
    "unexpected": true
  })");
  try {
    load_config(config_path);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field == "config.unexpected");
  }
}

TEST_CASE("missing required fields name the path") {
  TempDir tmp;
  const std::string config_path = write_file(tmp.path / "bad.json", R"({
    "experiment": "estimator-compare",
    "model": {"type": "scalar-gaussian"},
    "kinds": ["m"],
    "L": 100,
    "p": 0.25,
    "replicates": 1
  })");
  try {
    load_config(config_path);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field == "config.seed");
  }
}

TEST_CASE("model field validation") {
  TempDir tmp;
  const std::string config_path = write_file(tmp.path / "bad.json", R"({
    "experiment": "estimator-compare",
    "model": {"type": "linear-gaussian", "n_x": 2, "n_y": 4, "decay": 0.8, "model_seed": 1},
    "kinds": ["m"],
    "L": 100,
    "p": 0.25,
    "replicates": 1,
    "seed": 1
  })");
  try {
    load_config(config_path);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field == "config.model.n_y");
  }
}

TEST_CASE("invalid JSON is a config error") {
  TempDir tmp;
  const std::string config_path = write_file(tmp.path / "bad.json", "{nope");
  CHECK_THROWS_AS(load_config(config_path), ConfigError);
}

TEST_CASE("dimred-grid config round trip") {
  TempDir tmp;
  const std::string config_path = write_file(tmp.path / "dimred.json", R"({
    "experiment": "dimred-grid",
    "model": {"type": "linear-gaussian", "n_x": 5, "n_y": 3, "decay": 0.8, "model_seed": 3},
    "methods": ["CMI", "PCA"],
    "estimators": ["pos", "gaussian"],
    "r": [1, 2],
    "s": [1, 2],
    "L": 800,
    "p": 0.3333333333333333,
    "replicates": 2,
    "seed": 11
  })");
  RunOptions options;
  options.out = (tmp.path / "out").string();
  const RunResult result = run_config_file(config_path, options);
  CHECK(result.n_cells == 2 * 2 * 2 * 2 * 2);
  CHECK(result.n_failed == 0);
  const std::string pos_csv = read_file(tmp.path / "out" / "dimred_pos.csv");
  CHECK(pos_csv.rfind("method,r,s,replicate,seed,value,exact_projected,bound\n", 0) == 0);
  CHECK(fs::exists(tmp.path / "out" / "dimred_gaussian.csv"));
}

TEST_CASE("moessbauer experiment requires the moessbauer model") {
  TempDir tmp;
  const std::string config_path = write_file(tmp.path / "bad.json", R"({
    "experiment": "moessbauer",
    "model": {"type": "scalar-gaussian"},
    "kinds": ["pos"],
    "L": [500],
    "p": 0.3333333333333333,
    "replicates": 1,
    "seed": 1
  })");
  CHECK_THROWS_AS(load_config(config_path), ConfigError);
}

TEST_CASE("allocation-sweep config accepts grids") {
  TempDir tmp;
  const std::string config_path = write_file(tmp.path / "sweep.json", R"({
    "experiment": "allocation-sweep",
    "model": {"type": "scalar-gaussian"},
    "kinds": ["m", "nmc"],
    "L": [300, 600],
    "p": [0.125, 0.75],
    "replicates": 2,
    "seed": 5
  })");
  const ExperimentConfig config = load_config(config_path);
  CHECK(config.l_grid.size() == 2);
  CHECK(config.exponents.size() == 2);
  RunOptions options;
  options.out = (tmp.path / "out").string();
  const RunResult result = run_config(config, file_sha256(config_path), options);
  CHECK(result.n_cells == 2 * 2 * 2 * 2);
  CHECK(result.n_failed == 0);
}

}  // TEST_SUITE
