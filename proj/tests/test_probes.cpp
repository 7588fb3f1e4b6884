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
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "mirl/probes/grad_norm.hpp"
#include "mirl/probes/reconstruction.hpp"
#include "mirl/probes/sweep.hpp"
#include "test_util.hpp"

namespace mirl {
namespace {

using test::quick_options;
using test::random_images;
using test::temp_path;
using test::tiny_config;

std::size_t count_lines(const std::string& path) {
  std::ifstream in(path);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

EvalSpec quick_eval() {
  EvalSpec spec;
  spec.probe.epochs = 20;
  return spec;
}

TEST(ProbeRecords, SummaryMeanAndVariance) {
  ProbeResult r{"p", {{"p", 0, 1, 10.0}, {"p", 0, 2, 20.0}, {"p", 0, 3, 30.0}, {"p", 2, 1, 5.0}},
                {1, 2, 3}};
  auto s = r.summary();
  ASSERT_EQ(s.size(), 2u);
  EXPECT_DOUBLE_EQ(s[0].mean, 20.0);
  EXPECT_DOUBLE_EQ(s[0].variance, 100.0);
  EXPECT_EQ(s[0].count, 3u);
  EXPECT_DOUBLE_EQ(s[1].mean, 5.0);
  EXPECT_DOUBLE_EQ(s[1].variance, 0.0);
}

TEST(ProbeRecords, CsvLayout) {
  ProbeResult r{"reinit", {{"reinit", 1, 7, 42.5}}, {7}};
  const auto path = temp_path("mirl_probe.csv");
  write_probe_csv(path, r);
  std::ifstream in(path);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "probe,sweep_var,seed,metric");
  EXPECT_EQ(row, "reinit,1,7,42.5");
  std::filesystem::remove(path);
}

TEST(ReinitSweep, OneRowPerPointAndSeed) {
  auto cfg = tiny_config(2, 16, 2);
  MirlModel<float> model(cfg, 3);
  auto train = make_synthetic_dataset(30, 16, 3, 4), test = make_synthetic_dataset(20, 16, 3, 5);
  auto res = reinit_sweep(model.store(), cfg.vit, {0, 1, 2}, {1, 2}, train, test, quick_eval());
  EXPECT_EQ(res.records.size(), 6u);
  const auto path = temp_path("mirl_reinit.csv");
  write_probe_csv(path, res);
  EXPECT_EQ(count_lines(path), 7u);
  std::filesystem::remove(path);
  EXPECT_THROW(reinit_sweep(model.store(), cfg.vit, {3}, {1}, train, test, quick_eval()),
               ConfigError);
}

TEST(ReinitSweep, ZeroBlocksEqualsDirectEvaluation) {
  auto cfg = tiny_config(2, 16, 2);
  MirlModel<float> model(cfg, 6);
  auto train = make_synthetic_dataset(30, 16, 3, 7), test = make_synthetic_dataset(20, 16, 3, 8);
  auto res = reinit_sweep(model.store(), cfg.vit, {0}, {4}, train, test, quick_eval());
  Encoder<float> direct = model.encoder();
  EXPECT_EQ(res.records[0].metric,
            probe_encoder(direct, train, test, quick_eval().probe).test_accuracy);
}

TEST(ReinitSweep, ReinitializesOnlyTheTail) {
  auto cfg = tiny_config(4, 16, 2);
  MirlModel<float> model(cfg, 9);
  auto store = encoder_store(cfg.vit, model.store(), 10);
  Rng rng(11);
  reinit_tail(store, 4, 1, rng);
  for (const auto& p : store) {
    const bool tail = p.name.rfind(encoder_block_prefix(3), 0) == 0;
    const bool same = p.tensor.values() == model.store().at(p.name).tensor.values();
    if (tail && p.init != Init::Ones && p.init != Init::Zeros) {
      EXPECT_FALSE(same) << p.name;
    } else if (!tail) {
      EXPECT_TRUE(same) << p.name;
    }
  }
}

TEST(TruncatedPretrain, ConfigRules) {
  auto full = tiny_config(4, 16, 2);
  auto mae = truncated_config(full, TruncationMode::Mae, 2);
  EXPECT_EQ(mae.vit.depth, 2u);
  EXPECT_EQ(mae.vit.segments, 1u);
  EXPECT_EQ(mae.objective.mode, ObjectiveMode::Mae);
  EXPECT_EQ(truncated_config(full, TruncationMode::Mirl, 4).vit.depth, 4u);
  EXPECT_THROW(truncated_config(full, TruncationMode::Mirl, 0), ConfigError);
  EXPECT_THROW(truncated_config(full, TruncationMode::Mirl, 5), ConfigError);
  EXPECT_THROW(truncated_config(full, TruncationMode::Mirl, 3), ConfigError);
  EXPECT_THROW(parse_truncation_mode("beit"), ConfigError);
}

TEST(TruncatedPretrain, ExpandedPrefixMatchesPretrainedWeights) {
  auto full = tiny_config(4, 16, 2);
  auto data = make_synthetic_dataset(16, 16, 3, 12), test = make_synthetic_dataset(10, 16, 3, 13);
  auto res = truncated_pretrain<float>(TruncationMode::Mae, 2, full, data, quick_options(3), data,
                                       test, quick_eval(), 14);
  EXPECT_GT(res.loaded, 0u);
  std::size_t prefix = 0;
  for (const auto& p : res.expanded) {
    const auto* rec = res.checkpoint.find(p.name);
    if (p.name.rfind("encoder.blocks.2.", 0) == 0 || p.name.rfind("encoder.blocks.3.", 0) == 0) {
      EXPECT_EQ(rec, nullptr) << p.name;
      continue;
    }
    ASSERT_NE(rec, nullptr) << p.name;
    EXPECT_EQ(p.tensor.values(), rec->as<float>()) << p.name;
    ++prefix;
  }
  EXPECT_EQ(prefix, res.loaded);
  ASSERT_EQ(res.result.records.size(), 1u);
  EXPECT_EQ(res.result.records[0].sweep_var, 2.0);
}

TEST(TruncatedPretrain, FullDepthIsThePlainRun) {
  auto full = tiny_config(2, 16, 2);
  auto data = make_synthetic_dataset(16, 16, 3, 15), test = make_synthetic_dataset(10, 16, 3, 16);
  auto res = truncated_pretrain<float>(TruncationMode::Mirl, 2, full, data, quick_options(3), data,
                                       test, quick_eval(), 17);
  MirlModel<float> model(full, 17);
  Pretrainer<float> tr(model, data, quick_options(3), 17);
  tr.run();
  for (const auto& p : model.store()) {
    const auto* rec = res.checkpoint.find(p.name);
    ASSERT_NE(rec, nullptr) << p.name;
    EXPECT_EQ(rec->as<float>(), p.tensor.values()) << p.name;
  }
}

TEST(GradNorm, GroupsFollowParameterNames) {
  EXPECT_EQ(grad_norm_group("attn.qkv.weight"), "attn_qkv");
  EXPECT_EQ(grad_norm_group("attn.proj.bias"), "fc");
  EXPECT_EQ(grad_norm_group("mlp.fc1.weight"), "mlp");
  EXPECT_EQ(grad_norm_group("norm1.weight"), "layer_norm");
  EXPECT_EQ(grad_norm_group("norm2.bias"), "layer_norm");
  EXPECT_EQ(grad_norm_group("did.q.weight"), "");
}

TEST(GradNorm, MatchesRecomputedNorms) {
  auto cfg = tiny_config(2, 16, 2);
  auto ds = make_synthetic_dataset(16, 16, 3, 18);
  MirlModel<double> model(cfg, 19);
  Pretrainer<double> tr(model, ds, quick_options(2), 20);
  std::vector<std::map<std::string, double>> squares;
  tr.set_grad_hook([&](std::size_t, const ParameterStore<double>& store, nlohmann::json&) {
    std::map<std::string, double> sq;
    for (const auto& p : store) {
      if (p.name.rfind("encoder.blocks.", 0) != 0 || !p.tensor.has_grad()) continue;
      const auto rest = p.name.substr(15);
      const auto block = rest.substr(0, rest.find('.'));
      std::string group = "other";
      if (rest.find(".attn.qkv.") != std::string::npos) group = "attn_qkv";
      if (rest.find(".attn.proj.") != std::string::npos) group = "fc";
      if (rest.find(".mlp.") != std::string::npos) group = "mlp";
      if (rest.find(".norm") != std::string::npos) group = "layer_norm";
      for (double g : p.tensor.grad()) sq[block + "/" + group] += g * g;
    }
    squares.push_back(sq);
  });
  tr.run();

  MirlModel<double> again(cfg, 19);
  Pretrainer<double> tr2(again, ds, quick_options(2), 20);
  auto recs = grad_norm_probe(tr2, cfg.vit.depth, 2);
  ASSERT_EQ(recs.size(), 2u * 2u * 4u);
  for (const auto& r : recs) {
    const double expect = std::sqrt(squares.at(r.step).at(std::to_string(r.block) + "/" + r.group));
    EXPECT_NEAR(r.norm, expect, 1e-10);
    EXPECT_GT(r.norm, 0.0);
  }
}

TEST(GradNorm, ZeroLearningRateStillRecords) {
  auto cfg = tiny_config(2, 16, 2);
  auto ds = make_synthetic_dataset(16, 16, 3, 21);
  MirlModel<float> model(cfg, 22);
  Pretrainer<float> tr(model, ds, quick_options(3, 0.0), 23);
  auto recs = grad_norm_probe(tr, cfg.vit.depth, 3, {1});
  ASSERT_EQ(recs.size(), 3u * 4u);
  for (const auto& r : recs) {
    EXPECT_EQ(r.block, 1u);
    EXPECT_GT(r.norm, 0.0);
  }
}

TEST(GradNorm, ZeroWeightGivesZeroNorms) {
  auto cfg = tiny_config(2, 16, 2);
  cfg.objective.lambda = std::vector<double>{0.0};
  auto ds = make_synthetic_dataset(16, 16, 3, 24);
  MirlModel<float> model(cfg, 25);
  Pretrainer<float> tr(model, ds, quick_options(2), 26);
  for (const auto& r : grad_norm_probe(tr, cfg.vit.depth, 2)) EXPECT_EQ(r.norm, 0.0);
}

TEST(Reconstruction, PanelsAreValidAndConsistent) {
  auto cfg = tiny_config(2, 16, 2);
  MirlModel<float> model(cfg, 27);
  auto img = random_images(2, 16, 28);
  Rng rng(29);
  auto plans = sample_masks(2, 16, 0.75, rng);
  auto panels = reconstruction_panels(model, img, plans, 0);
  for (const auto* p : {&panels.masked, &panels.reconstruction, &panels.residual, &panels.main}) {
    ASSERT_EQ(p->values.size(), img.values.size());
    for (double v : p->values) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
  auto pairs = model.decoders().decode_pairs(model.encode(patchify<float>(img, 4), plans));
  auto recon = unpatchify(add(pairs[0].main, pairs[0].residual), 4, 16, 16);
  auto main = unpatchify(pairs[0].main, 4, 16, 16);
  for (std::size_t i = 0; i < recon.values.size(); ++i) {
    EXPECT_EQ(panels.reconstruction.values[i], std::clamp(recon.values[i], 0.0, 1.0));
    EXPECT_EQ(panels.main.values[i], std::clamp(main.values[i], 0.0, 1.0));
  }
  for (std::size_t b = 0; b < 2; ++b) {
    const auto flags = (*plans)[b].masked_flags();
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < 16; ++y)
        for (std::size_t x = 0; x < 16; ++x) {
          const bool masked = flags[(y / 4) * 4 + x / 4];
          const double expect = masked ? 0.5 : img.at(b, c, y, x);
          EXPECT_EQ(panels.masked.at(b, c, y, x), static_cast<double>(static_cast<float>(expect)));
        }
  }
  EXPECT_THROW(reconstruction_panels(model, img, plans, 1), ConfigError);
}

TEST(Reconstruction, DumpWritesFivePanelsPerImage) {
  auto cfg = tiny_config(2, 16, 2);
  MirlModel<float> model(cfg, 30);
  const auto dir = temp_path("mirl_recon_test");
  std::filesystem::remove_all(dir);
  auto paths = reconstruction_dump(model, random_images(3, 16, 31), dir, 32);
  EXPECT_EQ(paths.size(), 15u);
  for (const auto& p : paths) {
    auto back = read_pnm(p);
    EXPECT_EQ(back.width, 16u);
    EXPECT_EQ(back.channels, 3u);
  }
  std::filesystem::remove_all(dir);
}

TEST(Reconstruction, RejectsUnpairedModels) {
  auto cfg = tiny_config(2, 16, 2);
  cfg.objective.mode = ObjectiveMode::MultiDecoder;
  MirlModel<float> model(cfg, 33);
  auto img = random_images(1, 16, 34);
  EXPECT_THROW(reconstruction_dump(model, img, temp_path("mirl_recon_bad"), 35), ConfigError);
}

}  // namespace
}  // namespace mirl
