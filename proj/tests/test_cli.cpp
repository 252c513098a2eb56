#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "lcirt/lcirt.hpp"

namespace {

namespace fs = std::filesystem;

const std::string kTool = LCIRT_CLI_PATH;

struct RunResult {
  int exit_code = -1;
  std::string stdout_text;
};

RunResult run_tool(const std::string& args, const fs::path& dir) {
  const fs::path out = dir / "stdout.txt";
  const std::string cmd = kTool + " " + args + " > " + out.string() + " 2> " +
                          (dir / "stderr.txt").string();
  const int raw = std::system(cmd.c_str());
  RunResult result;
  result.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  std::ifstream in(out);
  std::stringstream ss;
  ss << in.rdbuf();
  result.stdout_text = ss.str();
  return result;
}

fs::path make_workdir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("lcirt_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

// Small three-class, two-dimension dataset written through the simulator.
void write_synthetic_inputs(const fs::path& dir) {
  lcirt::GeneratorSpec spec;
  spec.kind = lcirt::GeneratorKind::twopl;
  spec.twopl.k = 3;
  spec.twopl.s = 2;
  spec.twopl.weights = {0.35, 0.35, 0.3};
  spec.twopl.gamma = {1.0, 1.3, 0.9, 1.0, 1.2, 0.8};
  spec.twopl.beta = {0.0, 0.4, -0.5, 0.0, 0.6, -0.3};
  spec.twopl.partition = lcirt::DimensionPartition(2, {1, 1, 1, 2, 2, 2});
  spec.twopl.anchors = lcirt::anchor_items(spec.twopl.partition);
  spec.twopl.theta = lcirt::Matrix(3, 2);
  spec.twopl.theta(0, 0) = -2.0;
  spec.twopl.theta(0, 1) = -1.5;
  spec.twopl.theta(1, 0) = 0.0;
  spec.twopl.theta(1, 1) = 1.0;
  spec.twopl.theta(2, 0) = 2.0;
  spec.twopl.theta(2, 1) = -0.5;
  spec.n = 400;
  spec.seed = 2025;
  const auto sim = lcirt::simulate(spec);
  lcirt::save_response_csv(sim.data, (dir / "data.csv").string());
  std::ostringstream partition;
  lcirt::save_partition_csv(spec.twopl.partition, sim.data.items(), partition);
  write_file(dir / "partition.csv", partition.str());
}

}  // namespace

TEST_CASE("select-k emits a table and a selected line", "[cli]") {
  const auto dir = make_workdir("selectk");
  write_synthetic_inputs(dir);
  const auto result = run_tool("select-k --data " + (dir / "data.csv").string() +
                                   " --k 1..2 --starts 1 --out " + (dir / "bic.csv").string(),
                               dir);
  REQUIRE(result.exit_code == 0);
  CHECK(result.stdout_text.find("selected: ") != std::string::npos);
  std::ifstream bic(dir / "bic.csv");
  std::string header;
  std::getline(bic, header);
  CHECK(header == "k,loglik,m,bic");
  int rows = 0;
  std::string line;
  while (std::getline(bic, line)) {
    if (!line.empty()) ++rows;
  }
  CHECK(rows == 2);
}

TEST_CASE("select-k with a single k gives a one-row table", "[cli]") {
  const auto dir = make_workdir("selectk_single");
  write_synthetic_inputs(dir);
  const auto result = run_tool("select-k --data " + (dir / "data.csv").string() +
                                   " --k 3..3 --starts 1 --out " + (dir / "bic.csv").string(),
                               dir);
  REQUIRE(result.exit_code == 0);
  CHECK(result.stdout_text.find("selected: 3") != std::string::npos);
  std::ifstream bic(dir / "bic.csv");
  std::string content((std::istreambuf_iterator<char>(bic)), std::istreambuf_iterator<char>());
  CHECK(content.rfind("k,loglik,m,bic\n3,", 0) == 0);
}

TEST_CASE("invalid data is a validation error with a JSON document", "[cli]") {
  const auto dir = make_workdir("invalid");
  write_file(dir / "bad.csv", "A,B\n1,2\n");
  const auto result = run_tool("select-k --data " + (dir / "bad.csv").string() + " --k 1..2", dir);
  CHECK(result.exit_code == 2);
  const auto j = nlohmann::json::parse(result.stdout_text);
  CHECK(j.at("error").at("kind").get<std::string>() == "data-validation");
  CHECK(j.at("error").at("message").get<std::string>().find("row 1") != std::string::npos);
}

TEST_CASE("usage errors exit with code 1", "[cli]") {
  const auto dir = make_workdir("usage");
  const auto result = run_tool("select-k --data nowhere.csv --k 7..1", dir);
  CHECK(result.exit_code == 1);
}

TEST_CASE("simulate is deterministic and round-trips through select-k", "[cli]") {
  const auto dir = make_workdir("simulate");
  nlohmann::json spec{{"model", "lc"},
                      {"n", 60},
                      {"seed", 1},
                      {"weights", {0.5, 0.5}},
                      {"success_probs",
                       {{0.2, 0.8}, {0.3, 0.7}, {0.25, 0.9}}}};
  write_file(dir / "spec.json", spec.dump());
  const auto a = run_tool("simulate --spec " + (dir / "spec.json").string() + " --out " +
                              (dir / "a.csv").string(),
                          dir);
  REQUIRE(a.exit_code == 0);
  const auto b = run_tool("simulate --spec " + (dir / "spec.json").string() + " --out " +
                              (dir / "b.csv").string(),
                          dir);
  REQUIRE(b.exit_code == 0);
  std::ifstream fa(dir / "a.csv"), fb(dir / "b.csv");
  const std::string ca((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
  const std::string cb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
  CHECK(ca == cb);

  const auto fit = run_tool("select-k --data " + (dir / "a.csv").string() +
                                " --k 1..2 --starts 1 --out " + (dir / "bic.csv").string(),
                            dir);
  CHECK(fit.exit_code == 0);

  // n = 0 is rejected before any work happens.
  spec["n"] = 0;
  write_file(dir / "zero.json", spec.dump());
  const auto zero = run_tool("simulate --spec " + (dir / "zero.json").string(), dir);
  CHECK(zero.exit_code == 1);
}

TEST_CASE("fit-2pl, select-items, correlations compose through files", "[cli]") {
  const auto dir = make_workdir("compose");
  write_synthetic_inputs(dir);

  const auto fit = run_tool("fit-2pl --data " + (dir / "data.csv").string() + " --partition " +
                                (dir / "partition.csv").string() +
                                " --k 3 --starts 1 --out-json " + (dir / "fit.json").string() +
                                " --out-report " + (dir / "report.csv").string() +
                                " --out-sweep " + (dir / "sweep.csv").string(),
                            dir);
  REQUIRE(fit.exit_code == 0);

  std::ifstream report(dir / "report.csv");
  std::string header;
  std::getline(report, header);
  CHECK(header == "d,j,item,gamma,beta,D_star");

  const auto items = run_tool("select-items --report " + (dir / "report.csv").string() +
                                  " --threshold 0.0 --out-items " + (dir / "items.csv").string(),
                              dir);
  REQUIRE(items.exit_code == 0);
  std::ifstream kept(dir / "items.csv");
  std::getline(kept, header);
  CHECK(header == "item_code,group_index");
  int rows = 0;
  std::string line;
  while (std::getline(kept, line)) {
    if (!line.empty()) ++rows;
  }
  CHECK(rows == 6);  // threshold 0 keeps every item

  const auto corr = run_tool("correlations --fit " + (dir / "fit.json").string() + " --out " +
                                 (dir / "corr.csv").string(),
                             dir);
  REQUIRE(corr.exit_code == 0);
  std::ifstream corr_file(dir / "corr.csv");
  std::getline(corr_file, header);
  CHECK(header == "d,1,2");
}

TEST_CASE("pipeline failure preserves completed-stage artifacts", "[cli]") {
  // k = 2 reaches the clustering stage and fails there (no degrees of
  // freedom for the merge test); every earlier table must already be on disk.
  const auto dir = make_workdir("pipeline_halt");
  write_synthetic_inputs(dir);
  const auto result = run_tool(
      "pipeline --data " + (dir / "data.csv").string() + " --partition " +
          (dir / "partition.csv").string() + " --k-range 2..2 --threshold 0.0 --starts 1 " +
          "--out-dir " + (dir / "bundle").string(),
      dir);
  CHECK(result.exit_code == 1);
  const auto j = nlohmann::json::parse(result.stdout_text);
  CHECK(j.at("error").at("message").get<std::string>().find("degrees of freedom") !=
        std::string::npos);
  for (const std::string name :
       {"config.json", "bic_table.csv", "lc_fit.json", "lc_discriminant.csv",
        "twopl_fit.json", "selected_items.csv", "twopl_selected_fit.json"}) {
    INFO(name);
    CHECK(fs::exists(dir / "bundle" / name));
  }
  CHECK_FALSE(fs::exists(dir / "bundle" / "cluster_path.csv"));
}

TEST_CASE("pipeline writes a full bundle", "[cli][slow]") {
  const auto dir = make_workdir("pipeline");
  write_synthetic_inputs(dir);
  const auto result = run_tool(
      "pipeline --data " + (dir / "data.csv").string() + " --partition " +
          (dir / "partition.csv").string() + " --k-range 3..3 --threshold 0.0 --starts 1 " +
          "--out-dir " + (dir / "bundle").string(),
      dir);
  REQUIRE(result.exit_code == 0);
  for (const std::string name :
       {"config.json", "bic_table.csv", "lc_fit.json", "lc_discriminant.csv",
        "lc_threshold_sweep.csv", "twopl_fit.json", "twopl_discriminant.csv",
        "twopl_threshold_sweep.csv", "selected_items.csv", "selected_item_counts.csv",
        "twopl_selected_fit.json", "cluster_path.csv", "dendrogram.txt", "dendrogram.dot",
        "selected_partition.csv", "final_fit.json", "ability_correlations.csv",
        "summary.json"}) {
    INFO(name);
    CHECK(fs::exists(dir / "bundle" / name));
  }
  CHECK(result.stdout_text.find("chosen k: 3") != std::string::npos);
}
