#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "sadl/moments.hpp"
#include "sadl_cli/formats.hpp"

namespace {

namespace fs = std::filesystem;

struct RunResult {
  int exit_code = -1;
  std::string output;
};

RunResult run_cli(const std::string& args) {
  const std::string command = std::string(SADL_CLI_PATH) + " " + args + " 2>/dev/null";
  RunResult result;
  FILE* pipe = popen(command.c_str(), "r");
  if (pipe == nullptr) return result;
  char buffer[512];
  while (fgets(buffer, sizeof(buffer), pipe) != nullptr) {
    result.output += buffer;
  }
  const int status = pclose(pipe);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("sadl_cli_test_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override {
    std::error_code ec;
    fs::remove_all(dir_, ec);
  }

  fs::path write_file(const std::string& name, const std::string& content) {
    const fs::path path = dir_ / name;
    std::ofstream out(path, std::ios::binary);
    out << content;
    return path;
  }

  fs::path dir_;
};

TEST_F(CliTest, GenDensityInteriorHeadSumsToOne) {
  const fs::path ann = write_file(
      "ann.json", R"({"width": 64, "height": 64, "points": [[32.0, 32.0]]})");
  const fs::path out = dir_ / "d.bin";
  const RunResult r = run_cli("gen-density --annotations " + ann.string() +
                              " --beta 8 --out " + out.string());
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_EQ(r.output.substr(0, 4), "sum=");
  const double sum = std::stod(r.output.substr(4));
  EXPECT_NEAR(sum, 1.0, 1e-4);
  EXPECT_TRUE(fs::exists(out));
}

TEST_F(CliTest, GenDensityEmptySceneZeroSumAndZeroHeatmap) {
  const fs::path ann =
      write_file("empty.json", R"({"width": 32, "height": 32, "points": []})");
  const fs::path out = dir_ / "d.bin";
  const fs::path pgm = dir_ / "h.pgm";
  const RunResult r =
      run_cli("gen-density --annotations " + ann.string() + " --out " +
              out.string() + " --heatmap " + pgm.string());
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_EQ(r.output, "sum=0.000000\n");

  const std::string bytes = read_bytes(pgm);
  const std::string header = "P5\n32 32\n255\n";
  ASSERT_EQ(bytes.substr(0, header.size()), header);
  for (std::size_t i = header.size(); i < bytes.size(); ++i) {
    EXPECT_EQ(bytes[i], '\0');
  }
  EXPECT_EQ(bytes.size(), header.size() + 32 * 32);
}

TEST_F(CliTest, GenDensityExitCodes) {
  const fs::path bad = write_file("bad.json", "{ not json");
  const fs::path out = dir_ / "never.bin";
  EXPECT_EQ(run_cli("gen-density --annotations " + bad.string() + " --out " +
                    out.string())
                .exit_code,
            2);
  EXPECT_FALSE(fs::exists(out));

  EXPECT_EQ(run_cli("gen-density --annotations " + (dir_ / "missing.json").string() +
                    " --out " + out.string())
                .exit_code,
            3);

  const fs::path ann =
      write_file("ok.json", R"({"width": 16, "height": 16, "points": []})");
  EXPECT_EQ(run_cli("gen-density --annotations " + ann.string() + " --out " +
                    (dir_ / "no_such_dir" / "x.bin").string())
                .exit_code,
            3);

  // out-of-bounds annotation is an input error
  const fs::path oob = write_file(
      "oob.json", R"({"width": 16, "height": 16, "points": [[16.0, 2.0]]})");
  EXPECT_EQ(run_cli("gen-density --annotations " + oob.string() + " --out " +
                    out.string())
                .exit_code,
            2);
}

TEST_F(CliTest, DensityFileRoundTripIsBitwise) {
  const fs::path ann = write_file(
      "ann.json", R"({"width": 24, "height": 20, "points": [[3.5, 4.5], [17.0, 11.25]]})");
  const fs::path out = dir_ / "d.bin";
  ASSERT_EQ(run_cli("gen-density --annotations " + ann.string() + " --scale 2 --out " +
                    out.string())
                .exit_code,
            0);
  const std::string original = read_bytes(out);

  const sadl::DensityMap map = sadl_cli::read_density_file(out);
  EXPECT_EQ(map.grid.scale_index, 2);
  EXPECT_EQ(map.grid.factor, 2);
  EXPECT_EQ(map.grid.width, 12);
  EXPECT_EQ(map.grid.height, 10);
  const fs::path copy = dir_ / "copy.bin";
  sadl_cli::write_density_file(copy, map);
  EXPECT_EQ(read_bytes(copy), original);
}

TEST_F(CliTest, DensityFileRejectsCorruption) {
  const fs::path ann =
      write_file("ann.json", R"({"width": 8, "height": 8, "points": []})");
  const fs::path out = dir_ / "d.bin";
  ASSERT_EQ(run_cli("gen-density --annotations " + ann.string() + " --out " +
                    out.string())
                .exit_code,
            0);
  std::string bytes = read_bytes(out);
  write_file("truncated.bin", bytes.substr(0, bytes.size() - 4));
  EXPECT_THROW(sadl_cli::read_density_file(dir_ / "truncated.bin"),
               sadl_cli::ParseError);
  bytes[0] = 'X';
  write_file("magic.bin", bytes);
  EXPECT_THROW(sadl_cli::read_density_file(dir_ / "magic.bin"), sadl_cli::ParseError);
}

TEST_F(CliTest, CliOutputsAreDeterministic) {
  const fs::path ann = write_file(
      "ann.json", R"({"width": 32, "height": 32, "points": [[10.5, 20.25], [25.0, 8.0]]})");
  for (int rep = 0; rep < 2; ++rep) {
    const std::string suffix = std::to_string(rep);
    ASSERT_EQ(run_cli("gen-density --annotations " + ann.string() + " --out " +
                      (dir_ / ("d" + suffix + ".bin")).string() + " --heatmap " +
                      (dir_ / ("h" + suffix + ".pgm")).string())
                  .exit_code,
              0);
  }
  EXPECT_EQ(read_bytes(dir_ / "d0.bin"), read_bytes(dir_ / "d1.bin"));
  EXPECT_EQ(read_bytes(dir_ / "h0.pgm"), read_bytes(dir_ / "h1.pgm"));
}

TEST_F(CliTest, LossOnMeanMapsIsSmall) {
  // for a single head the per-scale mean map is the kernel of variance
  // alpha + beta_s, which gen-density produces directly
  const fs::path ann = write_file(
      "ann.json", R"({"width": 128, "height": 128, "points": [[64.0, 64.0]]})");
  std::vector<std::string> pred_flags;
  const double alpha = 8.0;
  for (int s = 1; s <= 3; ++s) {
    const double beta_s = 8.0 / (1 << (s - 1));
    const fs::path out = dir_ / ("mean" + std::to_string(s) + ".bin");
    char cmd[512];
    std::snprintf(cmd, sizeof(cmd),
                  "gen-density --annotations %s --scale %d --beta %.17g --out %s",
                  ann.string().c_str(), s, alpha + beta_s, out.string().c_str());
    ASSERT_EQ(run_cli(cmd).exit_code, 0);
    pred_flags.push_back(" --pred " + out.string());
  }
  std::string args = "loss --annotations " + ann.string();
  for (const std::string& flag : pred_flags) args += flag;
  const RunResult r = run_cli(args);
  ASSERT_EQ(r.exit_code, 0);
  const std::size_t total_pos = r.output.find("total=");
  ASSERT_NE(total_pos, std::string::npos);
  EXPECT_LE(std::stod(r.output.substr(total_pos + 6)), 1e-2);
}

TEST_F(CliTest, LossOnZeroMapsCountsHeads) {
  const fs::path ann = write_file(
      "ann.json",
      R"({"width": 40, "height": 40, "points": [[10.0, 10.0], [30.0, 12.5], [20.0, 28.0]]})");
  const sadl::Scene scene = sadl_cli::read_annotations(ann);
  const sadl::ScaleConfig config = sadl::ScaleConfig::defaults(3);
  std::string args = "loss --annotations " + ann.string();
  for (const sadl::ScaleGrid& grid : sadl::build_grids(scene, config)) {
    const fs::path out = dir_ / ("zero" + std::to_string(grid.scale_index) + ".bin");
    sadl_cli::write_density_file(out, sadl::DensityMap(grid));
    args += " --pred " + out.string();
  }
  const RunResult r = run_cli(args);
  ASSERT_EQ(r.exit_code, 0);

  double reg_total = 0.0;
  std::size_t pos = 0;
  while ((pos = r.output.find("reg=", pos)) != std::string::npos) {
    reg_total += std::stod(r.output.substr(pos + 4));
    pos += 4;
  }
  EXPECT_NEAR(reg_total, 9.0, 1e-9);  // N heads on each of S scales
}

TEST_F(CliTest, LossRejectsMismatchedGrids) {
  const fs::path ann = write_file(
      "ann.json", R"({"width": 40, "height": 40, "points": [[20.0, 20.0]]})");
  const fs::path other = write_file(
      "other.json", R"({"width": 48, "height": 48, "points": []})");
  std::string args = "loss --annotations " + ann.string();
  const sadl::Scene wrong_scene = sadl_cli::read_annotations(other);
  const sadl::ScaleConfig config = sadl::ScaleConfig::defaults(3);
  for (const sadl::ScaleGrid& grid : sadl::build_grids(wrong_scene, config)) {
    const fs::path out = dir_ / ("wrong" + std::to_string(grid.scale_index) + ".bin");
    sadl_cli::write_density_file(out, sadl::DensityMap(grid));
    args += " --pred " + out.string();
  }
  EXPECT_EQ(run_cli(args).exit_code, 2);
}

TEST_F(CliTest, VerifySuitesPassAndCorruptionFails) {
  EXPECT_EQ(run_cli("verify --suite lowrank --seed 7").exit_code, 0);
  EXPECT_EQ(run_cli("verify --suite gradient --seed 7").exit_code, 0);
  EXPECT_EQ(
      run_cli("verify --suite lowrank --seed 7 --debug-corrupt-tolerances").exit_code,
      1);
}

TEST_F(CliTest, FitWritesReportAndHeatmapsDeterministically) {
  const fs::path spec = write_file("spec.json", R"({
    "width": 32, "height": 32, "head_count": 5,
    "margin": 8.0, "jitter_alpha": 8.0, "seed": 4
  })");
  for (int rep = 0; rep < 2; ++rep) {
    const fs::path report = dir_ / ("report" + std::to_string(rep) + ".txt");
    const fs::path maps = dir_ / ("maps" + std::to_string(rep));
    const RunResult r = run_cli("fit --spec " + spec.string() + " --report " +
                                report.string() + " --heatmaps " + maps.string() +
                                " --max-iters 300");
    ASSERT_EQ(r.exit_code, 0);
    EXPECT_NE(r.output.find("iterations="), std::string::npos);
  }
  EXPECT_EQ(read_bytes(dir_ / "report0.txt"), read_bytes(dir_ / "report1.txt"));
  EXPECT_EQ(read_bytes(dir_ / "maps0" / "scale1.pgm"),
            read_bytes(dir_ / "maps1" / "scale1.pgm"));

  const std::string report = read_bytes(dir_ / "report0.txt");
  EXPECT_NE(report.find("gt_count=5"), std::string::npos);
  EXPECT_NE(report.find("scale=1 count="), std::string::npos);
  EXPECT_NE(report.find("iter=0 loss="), std::string::npos);
}

TEST_F(CliTest, SweepEmitsOneRowPerCell) {
  const fs::path out = dir_ / "sweep.csv";
  const RunResult r = run_cli(
      "sweep --alpha-grid 2,8 --beta-grid 8 --seeds 2 --width 32 --height 32 "
      "--count-min 3 --count-max 5 --margin 6 --max-iters 150 --out " +
      out.string());
  ASSERT_EQ(r.exit_code, 0);

  std::ifstream csv(out);
  std::string line;
  int rows = 0;
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    ++rows;
    double alpha = 0.0, beta = 0.0, mae = 0.0;
    ASSERT_EQ(std::sscanf(line.c_str(), "%lf,%lf,%lf", &alpha, &beta, &mae), 3);
    EXPECT_TRUE(std::isfinite(mae));
  }
  EXPECT_EQ(rows, 2);
}

TEST_F(CliTest, SingleCellSweep) {
  const fs::path out = dir_ / "one.csv";
  const RunResult r = run_cli(
      "sweep --alpha-grid 8 --beta-grid 8 --seeds 1 --width 24 --height 24 "
      "--count-min 2 --count-max 2 --margin 6 --max-iters 120 --out " +
      out.string());
  ASSERT_EQ(r.exit_code, 0);
  std::ifstream csv(out);
  std::string line;
  int rows = 0;
  while (std::getline(csv, line)) {
    if (!line.empty()) ++rows;
  }
  EXPECT_EQ(rows, 1);
}

}  // namespace
