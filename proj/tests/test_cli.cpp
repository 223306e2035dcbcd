#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>
#include <sys/wait.h>
#include <vector>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "test_util.hpp"

namespace {

const std::string kCli = SPOOFDET_CLI_PATH;

struct CmdResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr interleaved
};

CmdResult run_cmd(const std::string& args) {
  const std::string full = kCli + " " + args + " 2>&1";
  FILE* pipe = popen(full.c_str(), "r");
  REQUIRE(pipe != nullptr);
  CmdResult res;
  char buf[512];
  while (std::fgets(buf, sizeof(buf), pipe) != nullptr) res.output += buf;
  const int status = pclose(pipe);
  res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return res;
}

// Small corpus + model + schedule flags shared by the pipeline tests.
std::string tiny_flags() {
  return "--synth.L 3 --synth.T_raw 24 --synth.D 10 --synth.n_train_per_class 6 "
         "--synth.n_eval_per_class 4 --synth.artifact_band_lo 1 --synth.artifact_band_hi 3 "
         "--mhfa.H 2 --mhfa.D_cmp 4 --mhfa.E 6 "
         "--train.max_epochs 2 --train.warmup_epochs 1 --train.batch_size 4 "
         "--train.crop_frames 16";
}

std::map<std::string, std::string> dir_bytes(const std::filesystem::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    out[std::filesystem::relative(entry.path(), root).string()] =
        testutil::read_bytes(entry.path().string());
  }
  return out;
}

}  // namespace

TEST_CASE("usage errors exit with status 2") {
  CHECK(run_cmd("").exit_code == 2);
  CHECK(run_cmd("frobnicate").exit_code == 2);
  CHECK(run_cmd("synth --no-such-flag 1").exit_code == 2);
  CHECK(run_cmd("eer").exit_code == 2);  // missing required positional
  CHECK(run_cmd("fuse a.txt").exit_code == 2);  // missing required --out
  const CmdResult help = run_cmd("--help");
  CHECK(help.exit_code == 0);
  CHECK(help.output.find("synth") != std::string::npos);
  CHECK(help.output.find("gradcheck") != std::string::npos);
}

TEST_CASE("module failures exit with status 1") {
  const CmdResult missing = run_cmd("eer /definitely/not/here.txt");
  CHECK(missing.exit_code == 1);
  CHECK(missing.output.find("spoofdet:") != std::string::npos);

  testutil::TempDir dir("cli_badscore");
  testutil::write_bytes(dir.file("bad.txt"), "one two\n");
  const CmdResult bad = run_cmd("eer " + dir.file("bad.txt"));
  CHECK(bad.exit_code == 1);
  CHECK(bad.output.find("line 1") != std::string::npos);
}

TEST_CASE("eer subcommand prints the fixed-point rate") {
  testutil::TempDir dir("cli_eer");
  testutil::write_bytes(dir.file("perfect.txt"),
                        "s1 spoof g0 -2.0\ns2 spoof g0 -1.0\nb1 bonafide - 1.0\nb2 bonafide - 2.0\n");
  CmdResult r = run_cmd("eer " + dir.file("perfect.txt"));
  CHECK(r.exit_code == 0);
  CHECK(r.output == "EER 0.000000\n");

  testutil::write_bytes(dir.file("chance.txt"),
                        "s1 spoof g0 0.0\ns2 spoof g0 1.0\nb1 bonafide - 0.0\nb2 bonafide - 1.0\n");
  r = run_cmd("eer " + dir.file("chance.txt"));
  CHECK(r.exit_code == 0);
  CHECK(r.output == "EER 0.500000\n");
}

TEST_CASE("gradcheck passes clean, demands detection under --fault") {
  const CmdResult clean = run_cmd("gradcheck --seed 7");
  CHECK(clean.exit_code == 0);
  double err = 1.0;
  int param = -1;
  REQUIRE(std::sscanf(clean.output.c_str(), "max relative error %lf (parameter %d", &err,
                      &param) == 2);
  CHECK(err <= 1e-4);

  const CmdResult fault = run_cmd("gradcheck --seed 7 --fault");
  CHECK(fault.exit_code == 0);
  REQUIRE(std::sscanf(fault.output.c_str(), "max relative error %lf (parameter %d", &err,
                      &param) == 2);
  CHECK(err >= 0.3);
  CHECK(param == 2);
}

TEST_CASE("synth is deterministic and archives its configuration") {
  testutil::TempDir dir("cli_synth");
  const std::string wd_a = dir.file("a");
  const std::string wd_b = dir.file("b");
  const CmdResult ra = run_cmd("synth --workdir " + wd_a + " " + tiny_flags());
  REQUIRE(ra.exit_code == 0);
  CHECK(ra.output.find("wrote ") != std::string::npos);
  CHECK(ra.output.find("gen_s0") != std::string::npos);
  CHECK(ra.output.find("unseen") != std::string::npos);
  const CmdResult rb = run_cmd("synth --workdir " + wd_b + " " + tiny_flags());
  REQUIRE(rb.exit_code == 0);

  // The generated data trees (manifest + features) are byte-identical; the
  // archived run_config.json differs only through the workdir path, so it is
  // compared semantically below instead.
  const auto files_a = dir_bytes(std::filesystem::path(wd_a) / "data");
  const auto files_b = dir_bytes(std::filesystem::path(wd_b) / "data");
  REQUIRE(!files_a.empty());
  REQUIRE(files_a.size() == files_b.size());
  for (const auto& [rel, bytes] : files_a) {
    REQUIRE(files_b.contains(rel));
    CHECK(bytes == files_b.at(rel));
  }

  const nlohmann::json cfg_a = nlohmann::json::parse(
      testutil::read_bytes((std::filesystem::path(wd_a) / "run_config.json").string()));
  CHECK(cfg_a.at("synth").at("L").get<int>() == 3);
  CHECK(cfg_a.at("synth").at("D").get<int>() == 10);
  CHECK(cfg_a.at("train").at("batch_size").get<int>() == 4);
  CHECK(cfg_a.at("workdir").get<std::string>() == wd_a);
  CHECK(cfg_a.at("manifest").get<std::string>() ==
        (std::filesystem::path(wd_a) / "data" / "manifest.jsonl").string());
}

TEST_CASE("a config file seeds the run and flags override it") {
  testutil::TempDir dir("cli_cfg");
  const std::string cfg_path = dir.file("run.json");
  testutil::write_bytes(cfg_path, R"({"seed": 5, "synth": {"L": 3, "T_raw": 12, "D": 6,
    "n_train_per_class": 2, "n_eval_per_class": 1, "artifact_band_lo": 1,
    "artifact_band_hi": 2}})");
  const std::string wd = dir.file("w");
  const CmdResult r =
      run_cmd("synth --config " + cfg_path + " --workdir " + wd + " --synth.D 8");
  REQUIRE(r.exit_code == 0);

  const nlohmann::json archived = nlohmann::json::parse(
      testutil::read_bytes((std::filesystem::path(wd) / "run_config.json").string()));
  CHECK(archived.at("seed").get<int>() == 5);           // from the config file
  CHECK(archived.at("synth").at("T_raw").get<int>() == 12);
  CHECK(archived.at("synth").at("D").get<int>() == 8);  // dotted override wins
  CHECK_FALSE(archived.at("synth").contains("seed"));   // still derived from the top seed

  // The generated feature dimensionality follows the override.
  const CmdResult bad = run_cmd("synth --config " + dir.file("absent.json"));
  CHECK(bad.exit_code == 1);
}

TEST_CASE("full pipeline: synth, train, score, eer, fuse") {
  testutil::TempDir dir("cli_pipe");
  const std::string wd = dir.file("w");
  REQUIRE(run_cmd("synth --workdir " + wd + " " + tiny_flags()).exit_code == 0);

  const CmdResult train =
      run_cmd("train --workdir " + wd + " " + tiny_flags());
  REQUIRE(train.exit_code == 0);
  CHECK(train.output.find("best dev EER") != std::string::npos);
  const std::string final_ckpt =
      (std::filesystem::path(wd) / "train" / "final.ckpt").string();
  const std::string best_ckpt =
      (std::filesystem::path(wd) / "train" / "best.ckpt").string();
  REQUIRE(std::filesystem::exists(final_ckpt));
  REQUIRE(std::filesystem::exists(best_ckpt));

  // Retraining into a fresh workdir reproduces the checkpoint byte for byte.
  const std::string wd2 = dir.file("w2");
  REQUIRE(run_cmd("synth --workdir " + wd2 + " " + tiny_flags()).exit_code == 0);
  REQUIRE(run_cmd("train --workdir " + wd2 + " " + tiny_flags()).exit_code == 0);
  CHECK(testutil::read_bytes(final_ckpt) ==
        testutil::read_bytes((std::filesystem::path(wd2) / "train" / "final.ckpt").string()));

  const std::string manifest =
      (std::filesystem::path(wd) / "data" / "manifest.jsonl").string();
  const CmdResult score =
      run_cmd("score --workdir " + wd + " --checkpoint " + final_ckpt + " --manifest " +
              manifest + " --split dev --train.crop_frames 16");
  REQUIRE(score.exit_code == 0);
  const std::string dev_scores =
      (std::filesystem::path(wd) / "scores" / "dev.txt").string();
  REQUIRE(std::filesystem::exists(dev_scores));

  // Scoring is reproducible byte for byte through an explicit --out.
  const std::string again = dir.file("dev_again.txt");
  REQUIRE(run_cmd("score --workdir " + wd + " --checkpoint " + final_ckpt + " --manifest " +
                  manifest + " --split dev --train.crop_frames 16 --out " + again)
              .exit_code == 0);
  CHECK(testutil::read_bytes(dev_scores) == testutil::read_bytes(again));

  const CmdResult eer = run_cmd("eer " + dev_scores);
  REQUIRE(eer.exit_code == 0);
  double eer_value = -1.0;
  REQUIRE(std::sscanf(eer.output.c_str(), "EER %lf", &eer_value) == 1);
  CHECK(eer_value >= 0.0);
  CHECK(eer_value <= 1.0);

  // Fusing a system with itself preserves its EER exactly.
  const std::string fused = dir.file("fused.txt");
  const CmdResult fuse =
      run_cmd("fuse " + dev_scores + " " + dev_scores + " --out " + fused);
  REQUIRE(fuse.exit_code == 0);
  const CmdResult eer2 = run_cmd("eer " + fused);
  CHECK(eer2.output == eer.output);

  // An unknown split is a module error, not a usage error.
  CHECK(run_cmd("score --workdir " + wd + " --checkpoint " + final_ckpt + " --manifest " +
                manifest + " --split dev2")
            .exit_code == 1);
}
