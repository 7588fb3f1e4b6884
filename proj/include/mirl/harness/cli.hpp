// Copyright 2026 The MIRL Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mirl/core/runtime.hpp"
#include "mirl/harness/config.hpp"
#include "mirl/harness/selftest.hpp"
#include "mirl/probes/grad_norm.hpp"
#include "mirl/probes/reconstruction.hpp"
#include "mirl/probes/sweep.hpp"
#include "mirl/training/finetune.hpp"
#include "mirl/training/pretrain.hpp"

namespace mirl {

struct RunData {
  Dataset train;
  Dataset test;
};

inline Dataset subset(const Dataset& ds, const std::vector<std::size_t>& idx) {
  Dataset out;
  out.num_classes = ds.num_classes;
  out.images = make_batch(ds, idx, nullptr);
  return out;
}

/// Synthetic data draws independent train and test sets. A directory is
/// split by a seeded shuffle, holding out min(data.test_count, n/2) images.
inline RunData load_run_data(const RunConfig& cfg) {
  const auto& vit = cfg.model.vit;
  if (vit.image_h != vit.image_w) throw ConfigError("only square images are supported");
  RunData d;
  if (cfg.data.source == "synthetic") {
    d.train = make_synthetic_dataset(cfg.data.count, vit.image_h, vit.channels,
                                     mix_seed(cfg.seed, 101));
    d.test = make_synthetic_dataset(cfg.data.test_count, vit.image_h, vit.channels,
                                    mix_seed(cfg.seed, 102));
    return d;
  }
  auto all = load_image_directory(cfg.data.path, vit.image_h, vit.channels);
  std::vector<std::size_t> idx(all.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(mix_seed(cfg.seed, 103));
  rng.shuffle(idx.begin(), idx.end());
  const std::size_t held = std::min(cfg.data.test_count, all.size() / 2);
  d.test = subset(all, {idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(held)});
  d.train = subset(all, {idx.begin() + static_cast<std::ptrdiff_t>(held), idx.end()});
  return d;
}

namespace detail {

inline void require_runnable(const RunConfig& cfg) {
  if (!cfg.runnable) {
    throw ConfigError("this configuration sets run.runnable=false: it documents reference "
                      "hyperparameters and is not meant to run at desk scale");
  }
}

inline std::filesystem::path prepare_output(const RunConfig& cfg) {
  std::filesystem::path dir(cfg.output_dir);
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "config.resolved.cfg", std::ios::trunc);
  out << resolved_config_text(cfg);
  if (!out) throw Error("cannot write " + (dir / "config.resolved.cfg").string());
  return dir;
}

inline Checkpoint require_checkpoint(const RunConfig& cfg) {
  if (cfg.checkpoint.empty()) throw ConfigError("this command needs run.checkpoint");
  return load_checkpoint(cfg.checkpoint);
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::trunc);
  out << j.dump(2) << '\n';
  if (!out) throw Error("cannot write " + path.string());
}

inline void print_summary(std::ostream& out, const ProbeResult& r) {
  out << "sweep_var,mean,variance,seeds\n";
  for (const auto& s : r.summary()) {
    out << s.sweep_var << ',' << s.mean << ',' << s.variance << ',' << s.count << '\n';
  }
}

inline int cmd_pretrain(const RunConfig& cfg, std::ostream& out) {
  require_runnable(cfg);
  const auto data = load_run_data(cfg);
  const auto dir = prepare_output(cfg);
  MirlModel<float> model(cfg.model, cfg.seed);
  Pretrainer<float> trainer(model, data.train, cfg.pretrain, cfg.seed);
  if (!cfg.resume.empty()) trainer.restore(load_checkpoint(cfg.resume));
  MetricsWriter writer((dir / "metrics.jsonl").string());
  const auto losses = trainer.run(0, &writer);
  save_checkpoint((dir / "checkpoint.mirl").string(), trainer.checkpoint(resolved_config_text(cfg)));
  out << "pretrain: " << trainer.step() << " steps";
  if (!losses.empty()) out << ", loss " << losses.front() << " -> " << losses.back();
  out << "\ncheckpoint: " << (dir / "checkpoint.mirl").string() << '\n';
  return 0;
}

inline int cmd_finetune(const RunConfig& cfg, std::ostream& out) {
  require_runnable(cfg);
  ParameterStore<float> weights;
  if (!cfg.checkpoint.empty()) {
    weights = store_from_checkpoint<float>(load_checkpoint(cfg.checkpoint), "", false);
  }
  const auto data = load_run_data(cfg);
  const auto dir = prepare_output(cfg);
  MetricsWriter writer((dir / "metrics.jsonl").string());
  const auto res = finetune(weights, cfg.model.vit, data.train, data.test, cfg.finetune, cfg.seed,
                            &writer);
  write_json(dir / "result.json",
             {{"accuracy", res.accuracy}, {"ema_accuracy", res.ema_accuracy}, {"steps", res.steps}});
  out << "finetune: " << res.steps << " steps, accuracy " << res.accuracy << "%, ema "
      << res.ema_accuracy << "%\n";
  return 0;
}

inline int cmd_probe_reinit(const RunConfig& cfg, std::ostream& out) {
  require_runnable(cfg);
  const auto weights = store_from_checkpoint<float>(require_checkpoint(cfg), "", false);
  const auto data = load_run_data(cfg);
  const auto dir = prepare_output(cfg);
  const auto res = reinit_sweep(weights, cfg.model.vit, cfg.probe.k, cfg.probe.seeds, data.train,
                                data.test, cfg.eval);
  write_probe_csv((dir / "reinit.csv").string(), res);
  write_probe_summary_csv((dir / "reinit_summary.csv").string(), res);
  print_summary(out, res);
  return 0;
}

inline int cmd_probe_truncate(const RunConfig& cfg, std::ostream& out) {
  require_runnable(cfg);
  const auto data = load_run_data(cfg);
  const auto mode = parse_truncation_mode(cfg.probe.mode);
  truncated_config(cfg.model, mode, cfg.probe.keep);
  const auto dir = prepare_output(cfg);
  ProbeResult all;
  for (auto seed : cfg.probe.seeds) {
    const auto tag = "seed" + std::to_string(seed);
    MetricsWriter writer((dir / ("metrics_" + tag + ".jsonl")).string());
    auto res = truncated_pretrain<float>(mode, cfg.probe.keep, cfg.model, data.train, cfg.pretrain,
                                         data.train, data.test, cfg.eval, seed, &writer,
                                         resolved_config_text(cfg));
    save_checkpoint((dir / ("truncated_" + tag + ".mirl")).string(), res.checkpoint);
    all.probe = res.result.probe;
    all.seeds.push_back(seed);
    for (auto& r : res.result.records) all.records.push_back(r);
    out << tag << ": loaded " << res.loaded << " tensors, metric " << res.result.records[0].metric
        << '\n';
  }
  write_probe_csv((dir / "truncate.csv").string(), all);
  write_probe_summary_csv((dir / "truncate_summary.csv").string(), all);
  print_summary(out, all);
  return 0;
}

inline int cmd_probe_gradnorm(const RunConfig& cfg, std::ostream& out) {
  require_runnable(cfg);
  const auto data = load_run_data(cfg);
  std::vector<std::pair<std::string, ModelConfig>> runs{
      {to_string(cfg.model.objective.mode), cfg.model}};
  if (cfg.probe.compare && cfg.model.objective.mode != ObjectiveMode::Mae) {
    ModelConfig single = cfg.model;
    single.vit.segments = 1;
    single.objective.mode = ObjectiveMode::Mae;
    single.objective.lambda.reset();
    single.objective.dagger_omega.reset();
    single.validate();
    runs.emplace_back("mae", single);
  }
  const auto dir = prepare_output(cfg);
  auto opt = cfg.pretrain;
  opt.optim.fixed_steps = cfg.probe.steps;
  opt.optim.warmup_epochs = 0.0;
  std::vector<std::pair<std::string, std::vector<GradNormRecord>>> series;
  for (const auto& [label, mcfg] : runs) {
    MirlModel<float> model(mcfg, cfg.seed);
    Pretrainer<float> trainer(model, data.train, opt, cfg.seed);
    MetricsWriter writer((dir / ("gradnorm_" + label + ".jsonl")).string());
    series.emplace_back(label, grad_norm_probe(trainer, mcfg.vit.depth, cfg.probe.steps,
                                               cfg.probe.blocks, &writer));
    double mean = 0.0;
    for (const auto& r : series.back().second) mean += r.norm;
    if (!series.back().second.empty()) mean /= static_cast<double>(series.back().second.size());
    out << label << ": " << series.back().second.size() << " records, mean norm " << mean << '\n';
  }
  write_grad_norm_csv((dir / "grad_norms.csv").string(), series);
  return 0;
}

inline int cmd_reconstruct(const RunConfig& cfg, std::ostream& out) {
  require_runnable(cfg);
  const auto ck = require_checkpoint(cfg);
  RunConfig model_cfg = cfg;
  if (!ck.config.empty()) model_cfg = validate_config(parse_config_text(ck.config, "checkpoint"));
  const auto data = load_run_data(cfg);
  const auto dir = prepare_output(cfg);
  MirlModel<float> model(model_cfg.model, model_cfg.seed);
  restore_store(ck, model.store());
  std::vector<std::size_t> idx(std::min(cfg.probe.images, data.test.size()));
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const auto images = make_batch(data.test, idx, nullptr);
  const auto paths = reconstruction_dump(model, images, (dir / "recon").string(),
                                         mix_seed(cfg.seed, RngRoles::kMask), cfg.probe.pair);
  out << "reconstruct: wrote " << paths.size() << " panels to " << (dir / "recon").string()
      << '\n';
  return 0;
}

inline int cmd_gradcheck(const RunConfig& cfg, std::ostream& out) {
  auto mcfg = gradcheck_model_config(cfg.model.objective);
  mcfg.mask_ratio = cfg.model.mask_ratio;
  GradCheckOptions opt;
  opt.tolerance = cfg.gradcheck_tolerance;
  const auto rep = model_grad_check(mcfg, cfg.seed, opt);
  std::size_t checked = 0;
  for (const auto& e : rep.entries) checked += e.checked;
  out << "gradcheck: " << rep.entries.size() << " tensors, " << checked
      << " elements, max rel err " << rep.max_rel_err() << " (tolerance " << opt.tolerance
      << ")\n";
  for (const auto& name : rep.failures()) out << "  above tolerance: " << name << '\n';
  return rep.max_rel_err() <= opt.tolerance ? 0 : 1;
}

inline int cmd_selftest(const RunConfig&, std::ostream& out) {
  const auto checks = run_selftest(out);
  const bool ok = std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.ok; });
  out << (ok ? "selftest passed\n" : "selftest FAILED\n");
  return ok ? 0 : 1;
}

/// Turns leftover `--key value` / `--key=value` arguments into overrides.
inline void apply_extra_args(RawConfig& raw, const std::vector<std::string>& extras) {
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const auto& a = extras[i];
    if (a.rfind("--", 0) != 0) throw ConfigError("unexpected argument '" + a + "'");
    auto body = a.substr(2);
    if (body.find('=') == std::string::npos) {
      if (i + 1 >= extras.size()) throw ConfigError("option " + a + " needs a value");
      body += "=" + extras[++i];
    }
    apply_override(raw, body);
  }
}

}  // namespace detail

/// Entry point of the `mirl` tool. Returns the process exit code: 0 on
/// success, 1 when a check fails, 2 on usage or configuration errors.
inline int cli_main(int argc, char** argv, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  configure_allocator();
  CLI::App app{"Masked image residual learning: pre-training, probes and checks", "mirl"};
  app.require_subcommand(1);
  struct Command {
    const char* name;
    const char* help;
    int (*run)(const RunConfig&, std::ostream&);
  };
  const Command commands[] = {
      {"pretrain", "pre-train a model and write metrics and a checkpoint", detail::cmd_pretrain},
      {"finetune", "fine-tune run.checkpoint (or a fresh encoder) on labels", detail::cmd_finetune},
      {"probe-reinit", "re-initialize tail blocks and score each sweep point", detail::cmd_probe_reinit},
      {"probe-truncate", "pre-train a truncated encoder, expand and score it", detail::cmd_probe_truncate},
      {"probe-gradnorm", "record per-block gradient norms", detail::cmd_probe_gradnorm},
      {"reconstruct", "write reconstruction panels from run.checkpoint", detail::cmd_reconstruct},
      {"gradcheck", "finite-difference check of the full loss on a tiny model", detail::cmd_gradcheck},
      {"selftest", "run the built-in invariant checks", detail::cmd_selftest},
  };
  std::string config_path;
  std::vector<std::string> sets;
  std::vector<std::pair<CLI::App*, const Command*>> subs;
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("-c,--config", config_path, "flat 'section.key = value' config file");
    sub->add_option("--set", sets, "override, key=value (repeatable)");
    sub->allow_extras();
    sub->footer("Any config key may also be given as --section.key value.");
    subs.emplace_back(sub, &c);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }
  for (const auto& [sub, cmd] : subs) {
    if (!sub->parsed()) continue;
    RunConfig cfg;
    try {
      RawConfig raw = config_path.empty() ? RawConfig{} : load_config_file(config_path);
      for (const auto& s : sets) apply_override(raw, s);
      detail::apply_extra_args(raw, sub->remaining());
      cfg = validate_config(raw);
    } catch (const Error& e) {
      err << "mirl " << cmd->name << ": " << e.what() << '\n';
      return 2;
    }
    try {
      return cmd->run(cfg, out);
    } catch (const ConfigError& e) {
      err << "mirl " << cmd->name << ": " << e.what() << '\n';
      return 2;
    } catch (const std::exception& e) {
      err << "mirl " << cmd->name << ": " << e.what() << '\n';
      return 1;
    }
  }
  return 2;
}

}  // namespace mirl
