/*
 * Copyright (c) 2026 the canet authors
 *
 * Licensed under the Apache License, Version 2.0;
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 */
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "canet/checkpoint.hpp"
#include "canet/dataset.hpp"
#include "canet/errors.hpp"
#include "canet/evaluation.hpp"
#include "canet/gradcheck_driver.hpp"
#include "canet/model.hpp"
#include "canet/run_config.hpp"
#include "canet/training.hpp"

namespace fs = std::filesystem;
using namespace canet;

namespace {

struct CliArgs {
  std::string config_path;
  std::map<std::string, std::string> overrides;  // key -> value, applied after file
  bool corrupt_backward = false;
};

/// Defaults < config file < flags.
RunConfig resolve_config(const CliArgs& args) {
  RunConfig cfg;
  if (!args.config_path.empty()) load_config_file(args.config_path, cfg);
  for (const auto& [k, v] : args.overrides) cfg.set(k, v);
  return cfg;
}

void add_common_options(CLI::App* cmd, CliArgs& args) {
  cmd->add_option("--config", args.config_path, "key=value configuration file");
  for (const std::string& key : RunConfig::known_keys()) {
    std::string k = key;
    cmd->add_option_function<std::string>(
        "--" + key, [&args, k](const std::string& v) { args.overrides[k] = v; });
  }
}

void echo_config(std::ostream& out, const RunConfig& c) {
  out << "num_attrs=" << c.num_attrs << "\nnum_objs=" << c.num_objs << "\nd_x=" << c.d_x
      << "\nnoise_sigma=" << c.noise_sigma << "\nunseen_fraction=" << c.unseen_fraction
      << "\nsamples_per_pair=" << c.samples_per_pair << "\nlearning_rate=" << c.learning_rate
      << "\nweight_decay=" << c.weight_decay << "\nbatch_size=" << c.batch_size
      << "\nmax_epochs=" << c.max_epochs << "\ntau=" << c.tau << "\nalpha=" << c.alpha
      << "\ndropout_p=" << c.dropout_p << "\nseed=" << c.seed << "\nvariant=" << c.variant
      << "\nteacher_forcing=" << (c.teacher_forcing ? "true" : "false")
      << "\ntrain_embeddings=" << (c.train_embeddings ? "true" : "false") << "\nd_w=" << c.d_w
      << "\npatience=" << c.patience << "\neval_every=" << c.eval_every << "\ndata=" << c.data
      << "\nout=" << c.out << "\nphase=" << c.phase << "\n";
}

Dataset load_data_dir(const RunConfig& cfg) {
  if (cfg.data.empty()) throw ConfigError("no dataset directory given (set 'data')");
  fs::path dir = cfg.data;
  Dataset ds = load_dataset(dir / "manifest.tsv", dir / "features.bin");
  SplitReport rep = validate_split(ds.vocab, ds.split, ds.samples);
  if (!rep.pass) {
    std::string msg = "dataset " + dir.string() + " fails split validation:";
    for (const auto& v : rep.violations) msg += "\n  " + v;
    throw ValidationError(msg);
  }
  return ds;
}

EmbeddingInit embeddings_from(const RunConfig& cfg) {
  EmbeddingInit emb;
  if (!cfg.attr_embeddings.empty()) emb.attr_table = load_matrix_file(cfg.attr_embeddings);
  if (!cfg.obj_embeddings.empty()) emb.obj_table = load_matrix_file(cfg.obj_embeddings);
  return emb;
}

int cmd_synth(const RunConfig& cfg) {
  SyntheticSpec spec = cfg.synthetic_spec();
  spec.validate();
  Dataset ds = generate_synthetic(spec);
  save_dataset(cfg.out, ds);
  std::cout << "wrote dataset to " << cfg.out << "\n"
            << "attributes: " << ds.vocab.num_attrs() << "\nobjects: " << ds.vocab.num_objs()
            << "\nsamples: " << ds.samples.size() << "\ntrain pairs: " << ds.split.train_seen.size()
            << "\nval unseen pairs: " << ds.split.val_unseen.size()
            << "\ntest unseen pairs: " << ds.split.test_unseen.size() << "\n";
  return 0;
}

/// Trains into `out_dir` (checkpoint/ + train_log.csv); shared with ablate.
GzslReport train_and_report(const RunConfig& cfg, const Dataset& ds, const fs::path& out_dir,
                            bool do_eval) {
  TrainConfig tc = cfg.train_config();
  tc.validate();

  TrainState state;
  if (!cfg.resume.empty()) {
    state = load_checkpoint(cfg.resume);
  } else {
    ModelConfig mc = model_config_from(tc, ds);
    state = TrainState::fresh(init_params(mc, tc.seed, embeddings_from(cfg)), tc.seed);
  }

  fs::create_directories(out_dir);
  std::ofstream log(out_dir / "train_log.csv");
  if (!log) throw IoError("cannot open " + (out_dir / "train_log.csv").string() + " for writing");
  std::time_t now = std::time(nullptr);
  char stamp[64];
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%S", std::gmtime(&now));
  log << "# variant=" << variant_name(tc.variant) << " seed=" << tc.seed << " time=" << stamp
      << "\n";
  log << "epoch,L_a,L_o,L_ao,L,val_auc\n";
  log << std::setprecision(17);
  train(tc, ds, state, [&](const EpochLog& e) {
    log << e.epoch << "," << e.mean.attr << "," << e.mean.obj << "," << e.mean.comp << ","
        << e.mean.total << "," << e.val_auc << "\n";
  });
  log.close();
  save_checkpoint(out_dir / "checkpoint", state);

  GzslReport rep;
  if (do_eval) {
    auto test = samples_of_phase(ds, parse_phase(cfg.phase));
    rep = evaluate(state.params, test, ds.split, parse_phase(cfg.phase), cfg.alpha,
                   cfg.batch_size);
  }
  return rep;
}

int cmd_train(const RunConfig& cfg) {
  Dataset ds = load_data_dir(cfg);
  echo_config(std::cout, cfg);
  train_and_report(cfg, ds, cfg.out, false);
  std::cout << "checkpoint: " << (fs::path(cfg.out) / "checkpoint").string() << "\n"
            << "log: " << (fs::path(cfg.out) / "train_log.csv").string() << "\n";
  return 0;
}

int cmd_eval(const RunConfig& cfg) {
  if (cfg.checkpoint.empty()) throw ConfigError("no checkpoint given (set 'checkpoint')");
  Dataset ds = load_data_dir(cfg);
  TrainState state = load_checkpoint(cfg.checkpoint);
  if (state.params.cfg.num_attrs != ds.vocab.num_attrs() ||
      state.params.cfg.num_objs != ds.vocab.num_objs() || state.params.cfg.d_x != ds.d_x)
    throw ValidationError("checkpoint model does not match dataset dimensions");
  Phase phase = parse_phase(cfg.phase);
  auto samples = samples_of_phase(ds, phase);
  GzslReport rep = evaluate(state.params, samples, ds.split, phase, cfg.alpha, cfg.batch_size);

  fs::create_directories(cfg.out);
  std::ofstream txt(fs::path(cfg.out) / "report.txt");
  std::ofstream csv(fs::path(cfg.out) / "report.csv");
  std::ofstream cur(fs::path(cfg.out) / "curve.csv");
  if (!txt || !csv || !cur) throw IoError("cannot write reports under " + cfg.out);
  write_report_table(txt, rep);
  write_report_csv(csv, rep);
  write_curve_csv(cur, rep);
  write_report_table(std::cout, rep);
  return 0;
}

int cmd_gradcheck(const RunConfig& cfg, bool corrupt) {
  const double tol = 1e-4;
  bool ok = true;
  std::cout << std::setprecision(6);
  for (const GradCheckCase& c : layer_gradchecks(cfg.seed)) {
    bool pass = c.report.pass(tol);
    ok = ok && pass;
    std::cout << "layer " << c.name << ": max rel err " << c.report.max_rel_err << " ("
              << c.report.coords_checked << " coords) " << (pass ? "pass" : "FAIL") << "\n";
  }
  GradCheckReport full = full_loss_gradcheck(cfg.seed, 1e-5, parse_variant(cfg.variant), corrupt);
  bool pass = full.pass(tol);
  ok = ok && pass;
  std::cout << "full loss: max rel err " << full.max_rel_err << " (" << full.coords_checked
            << " coords, worst " << full.worst_coord << ") " << (pass ? "pass" : "FAIL") << "\n";
  return ok ? 0 : 2;
}

int cmd_alpha_sweep(const RunConfig& cfg) {
  if (cfg.checkpoint.empty()) throw ConfigError("no checkpoint given (set 'checkpoint')");
  Dataset ds = load_data_dir(cfg);
  TrainState state = load_checkpoint(cfg.checkpoint);
  Phase phase = parse_phase(cfg.phase);
  auto samples = samples_of_phase(ds, phase);

  fs::create_directories(cfg.out);
  std::ofstream out(fs::path(cfg.out) / "alpha_sweep.csv");
  if (!out) throw IoError("cannot write " + (fs::path(cfg.out) / "alpha_sweep.csv").string());
  out << std::setprecision(17);
  std::cout << std::setprecision(17);
  out << "alpha,auc,best_seen,best_unseen\n";
  std::cout << "alpha,auc,best_seen,best_unseen\n";
  for (int i = 0; i <= 10; ++i) {
    double alpha = i / 10.0;
    GzslReport rep = evaluate(state.params, samples, ds.split, phase, alpha, cfg.batch_size);
    out << alpha << "," << rep.auc << "," << rep.best_seen << "," << rep.best_unseen << "\n";
    std::cout << alpha << "," << rep.auc << "," << rep.best_seen << "," << rep.best_unseen << "\n";
  }
  return 0;
}

int cmd_ablate(const RunConfig& cfg) {
  Dataset ds = load_data_dir(cfg);
  fs::create_directories(cfg.out);
  std::ofstream out(fs::path(cfg.out) / "ablate.csv");
  if (!out) throw IoError("cannot write " + (fs::path(cfg.out) / "ablate.csv").string());
  out << std::setprecision(17);
  out << "variant,best_attr,best_obj,best_seen,best_unseen,best_hm,auc\n";
  std::cout << "variant,best_attr,best_obj,best_seen,best_unseen,best_hm,auc\n";
  for (Variant v : {Variant::full, Variant::no_attr_obj_losses, Variant::no_comp_loss,
                    Variant::no_g_h_p, Variant::no_p, Variant::no_h, Variant::no_x_in_beta}) {
    RunConfig vc = cfg;
    vc.variant = variant_name(v);
    GzslReport rep =
        train_and_report(vc, ds, fs::path(cfg.out) / variant_name(v), true);
    out << variant_name(v) << "," << rep.best_attr << "," << rep.best_obj << "," << rep.best_seen
        << "," << rep.best_unseen << "," << rep.best_hm << "," << rep.auc << "\n";
    std::cout << variant_name(v) << "," << rep.best_attr << "," << rep.best_obj << ","
              << rep.best_seen << "," << rep.best_unseen << "," << rep.best_hm << "," << rep.auc
              << std::setprecision(17) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conditional attribute network: synthesis, training and evaluation"};
  app.require_subcommand(1);

  CliArgs args;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  CLI::App* train_c = app.add_subcommand("train", "train a model on a dataset directory");
  CLI::App* eval_c = app.add_subcommand("eval", "evaluate a checkpoint (calibrated GZSL)");
  CLI::App* gradchk = app.add_subcommand("gradcheck", "finite-difference gradient check");
  CLI::App* sweep = app.add_subcommand("alpha-sweep", "evaluate across alpha in {0,0.1,...,1}");
  CLI::App* ablate = app.add_subcommand("ablate", "train+evaluate every model variant");
  for (CLI::App* c : {synth, train_c, eval_c, gradchk, sweep, ablate})
    add_common_options(c, args);
  gradchk->add_flag("--corrupt-backward", args.corrupt_backward)->group("");  // test hook

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    RunConfig cfg = resolve_config(args);
    if (synth->parsed()) return cmd_synth(cfg);
    if (train_c->parsed()) return cmd_train(cfg);
    if (eval_c->parsed()) return cmd_eval(cfg);
    if (gradchk->parsed()) return cmd_gradcheck(cfg, args.corrupt_backward);
    if (sweep->parsed()) return cmd_alpha_sweep(cfg);
    if (ablate->parsed()) return cmd_ablate(cfg);
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
