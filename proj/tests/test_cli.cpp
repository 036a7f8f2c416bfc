/*
 * Copyright (c) 2026 the canet authors
 *
 * Licensed under the Apache License, Version 2.0;
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 */
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <doctest.h>

#include "canet/dataset.hpp"

using namespace canet;
namespace fs = std::filesystem;

namespace {

const char* kCli = CANET_CLI_PATH;

fs::path work_dir() {
  static fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "canet_cli_tests";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

/// Runs the CLI, captures combined output, returns the exit code.
int run(const std::string& args, std::string* output = nullptr) {
  fs::path log = work_dir() / "cmd_output.txt";
  std::string cmd = std::string(kCli) + " " + args + " > " + log.string() + " 2>&1";
  int rc = std::system(cmd.c_str());
  if (output) {
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    *output = ss.str();
  }
  return rc == -1 ? -1 : WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int count_lines(const std::string& s) {
  int n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

/// Shared tiny dataset + fast-training flag string.
const std::string kTrainFlags =
    " --learning_rate 1e-3 --d_w 32 --batch_size 64 --dropout_p 0.1 --num_attrs 4 --num_objs 4";

fs::path dataset_dir() {
  static fs::path dir = [] {
    fs::path d = work_dir() / "data";
    REQUIRE(run("synth --seed 3 --num_attrs 4 --num_objs 4 --d_x 24 --samples_per_pair 10 --out " +
                d.string()) == 0);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_CASE("synth writes a loadable dataset and is seed-deterministic") {
  fs::path d1 = work_dir() / "synth_a";
  fs::path d2 = work_dir() / "synth_b";
  std::string out;
  REQUIRE(run("synth --seed 9 --out " + d1.string(), &out) == 0);
  CHECK(out.find("samples:") != std::string::npos);
  REQUIRE(run("synth --seed 9 --out " + d2.string()) == 0);
  CHECK(slurp(d1 / "features.bin") == slurp(d2 / "features.bin"));
  CHECK(slurp(d1 / "split.tsv") == slurp(d2 / "split.tsv"));
  Dataset ds = load_dataset(d1 / "manifest.tsv", d1 / "features.bin");
  CHECK(ds.vocab.num_attrs() == 6);
  CHECK(ds.vocab.num_objs() == 5);
}

TEST_CASE("unknown config keys are rejected by name") {
  fs::path cfg = work_dir() / "bad.cfg";
  std::ofstream(cfg) << "seed = 1\nbogus_knob = 2\n";
  std::string out;
  CHECK(run("synth --config " + cfg.string() + " --out " + (work_dir() / "x").string(), &out) == 1);
  CHECK(out.find("bogus_knob") != std::string::npos);

  std::string out2;
  CHECK(run("synth --not_a_flag 1 --out " + (work_dir() / "y").string(), &out2) == 1);
  CHECK(out2.find("not_a_flag") != std::string::npos);
}

TEST_CASE("config file values are overridden by flags") {
  fs::path cfg = work_dir() / "layered.cfg";
  std::ofstream(cfg) << "num_attrs = 3\nnum_objs = 7\n";
  fs::path out_dir = work_dir() / "layered_out";
  std::string out;
  REQUIRE(run("synth --config " + cfg.string() + " --num_objs 4 --seed 2 --out " +
              out_dir.string(), &out) == 0);
  CHECK(out.find("attributes: 3") != std::string::npos);  // from file
  CHECK(out.find("objects: 4") != std::string::npos);     // flag wins
}

TEST_CASE("train writes a log with a single header comment and a checkpoint") {
  fs::path out = work_dir() / "train1";
  std::string echoed;
  REQUIRE(run("train --data " + dataset_dir().string() + kTrainFlags +
              " --seed 4 --max_epochs 3 --variant no_H --out " + out.string(), &echoed) == 0);
  CHECK(echoed.find("variant=no_H") != std::string::npos);  // effective config echoed
  CHECK(fs::exists(out / "checkpoint" / "model.bin"));
  CHECK(fs::exists(out / "checkpoint" / "model.idx"));
  std::string log = slurp(out / "train_log.csv");
  CHECK(log.rfind("# variant=no_H seed=4", 0) == 0);
  CHECK(log.find("epoch,L_a,L_o,L_ao,L,val_auc") != std::string::npos);
  CHECK(count_lines(log) == 2 + 3);  // header comment + column row + 3 epochs
}

TEST_CASE("training twice and resuming reproduce checkpoints bitwise") {
  std::string data = dataset_dir().string();
  fs::path full1 = work_dir() / "full1";
  fs::path full2 = work_dir() / "full2";
  std::string common = "train --data " + data + kTrainFlags + " --seed 6 --max_epochs 4 --out ";
  REQUIRE(run(common + full1.string()) == 0);
  REQUIRE(run(common + full2.string()) == 0);
  CHECK(slurp(full1 / "checkpoint" / "model.bin") == slurp(full2 / "checkpoint" / "model.bin"));
  CHECK(slurp(full1 / "checkpoint" / "model.idx") == slurp(full2 / "checkpoint" / "model.idx"));

  fs::path half = work_dir() / "half";
  fs::path resumed = work_dir() / "resumed";
  REQUIRE(run("train --data " + data + kTrainFlags + " --seed 6 --max_epochs 2 --out " +
              half.string()) == 0);
  REQUIRE(run("train --data " + data + kTrainFlags + " --seed 6 --max_epochs 4 --resume " +
              (half / "checkpoint").string() + " --out " + resumed.string()) == 0);
  CHECK(slurp(resumed / "checkpoint" / "model.bin") == slurp(full1 / "checkpoint" / "model.bin"));
}

TEST_CASE("eval is deterministic and reports the six metrics") {
  std::string data = dataset_dir().string();
  fs::path train_out = work_dir() / "train_eval";
  REQUIRE(run("train --data " + data + kTrainFlags + " --seed 4 --max_epochs 5 --out " +
              train_out.string()) == 0);
  fs::path e1 = work_dir() / "eval1";
  fs::path e2 = work_dir() / "eval2";
  std::string base = "eval --data " + data + " --checkpoint " +
                     (train_out / "checkpoint").string() + " --out ";
  REQUIRE(run(base + e1.string()) == 0);
  REQUIRE(run(base + e2.string()) == 0);
  CHECK(slurp(e1 / "report.csv") == slurp(e2 / "report.csv"));
  CHECK(slurp(e1 / "curve.csv") == slurp(e2 / "curve.csv"));
  std::string csv = slurp(e1 / "report.csv");
  for (const char* field : {"best_attr", "best_obj", "best_seen", "best_unseen", "best_hm", "auc"})
    CHECK(csv.find(field) != std::string::npos);

  // alpha override changes fusion but never the bias-independent heads
  fs::path e3 = work_dir() / "eval3";
  REQUIRE(run(base + e3.string() + " --alpha 1.0") == 0);
  auto first_lines = [](const std::string& s) { return s.substr(0, s.find("best_seen")); };
  CHECK(first_lines(slurp(e3 / "report.csv")) == first_lines(csv));
}

TEST_CASE("alpha-sweep emits 11 rows consistent with standalone eval") {
  std::string data = dataset_dir().string();
  fs::path train_out = work_dir() / "train_sweep";
  REQUIRE(run("train --data " + data + kTrainFlags + " --seed 8 --max_epochs 5 --out " +
              train_out.string()) == 0);
  fs::path sweep_out = work_dir() / "sweep";
  REQUIRE(run("alpha-sweep --data " + data + " --checkpoint " +
              (train_out / "checkpoint").string() + " --out " + sweep_out.string()) == 0);
  std::string table = slurp(sweep_out / "alpha_sweep.csv");
  CHECK(count_lines(table) == 12);  // header + 11 alphas
  CHECK(table.rfind("alpha,auc,best_seen,best_unseen", 0) == 0);

  fs::path ev = work_dir() / "sweep_eval";
  REQUIRE(run("eval --data " + data + " --checkpoint " + (train_out / "checkpoint").string() +
              " --alpha 0.4 --out " + ev.string()) == 0);
  std::string report = slurp(ev / "report.csv");
  double eval_auc = -1.0;
  {
    std::istringstream in(report);
    std::string line;
    while (std::getline(in, line))
      if (line.rfind("auc,", 0) == 0) eval_auc = std::stod(line.substr(4));
  }
  double sweep_auc = -2.0;
  {
    std::istringstream in(table);
    std::string line;
    while (std::getline(in, line))
      if (line.rfind("0.4", 0) == 0) {
        size_t c1 = line.find(',');
        sweep_auc = std::stod(line.substr(c1 + 1));
      }
  }
  CHECK(eval_auc == sweep_auc);
}

TEST_CASE("gradcheck passes normally and fails with the planted-bug hook") {
  std::string out;
  CHECK(run("gradcheck --seed 12", &out) == 0);
  CHECK(out.find("full loss") != std::string::npos);
  CHECK(out.find("FAIL") == std::string::npos);

  std::string out2;
  CHECK(run("gradcheck --seed 12 --corrupt-backward", &out2) == 2);
  CHECK(out2.find("FAIL") != std::string::npos);
}

TEST_CASE("error paths use distinct exit codes") {
  std::string out;
  CHECK(run("eval --data " + dataset_dir().string() + " --out " + (work_dir() / "e").string(),
            &out) == 1);  // missing checkpoint
  CHECK(out.find("checkpoint") != std::string::npos);
  CHECK(run("train --out " + (work_dir() / "t").string(), &out) == 1);  // missing dataset
  CHECK(run("synth --unseen_fraction 2.0 --out " + (work_dir() / "s").string(), &out) == 1);
  CHECK(out.find("unseen_fraction") != std::string::npos);
}
