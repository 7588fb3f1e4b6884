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

#include <cmath>
#include <filesystem>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include <unistd.h>

#include "mirl/core/grad_check.hpp"
#include "mirl/harness/config.hpp"
#include "mirl/objectives/coarse_fine.hpp"
#include "mirl/training/checkpoint.hpp"
#include "mirl/training/model.hpp"

namespace mirl {

/// Depth 4, width 16, G=2 encoder on 16x16 images with 4x4 patches and a
/// one-block decoder of width 8; small enough for exhaustive gradient checks.
inline ModelConfig gradcheck_model_config(const ObjectiveConfig& objective = {}) {
  ModelConfig cfg;
  cfg.vit.name = "gradcheck";
  cfg.vit.depth = 4;
  cfg.vit.hidden = 16;
  cfg.vit.mlp = 32;
  cfg.vit.heads = 2;
  cfg.vit.segments = objective.mode == ObjectiveMode::Mae ? 1 : 2;
  cfg.vit.patch = 4;
  cfg.vit.image_h = cfg.vit.image_w = 16;
  cfg.decoder.blocks = 1;
  cfg.decoder.hidden = 8;
  cfg.decoder.heads = 2;
  cfg.objective = objective;
  cfg.objective.lambda.reset();
  cfg.objective.infonce_blocks = std::min<std::size_t>(cfg.objective.infonce_blocks, 1);
  return cfg;
}

/// Images on the pixel grid drawn uniformly from [0, 1].
inline ImageBatch random_grid_images(std::size_t count, std::size_t size, std::size_t channels,
                                     std::uint64_t seed) {
  Rng rng(seed);
  ImageBatch img(count, channels, size, size);
  for (auto& v : img.values) v = quantize_pixel(rng.uniform());
  img.labels.assign(count, 0);
  return img;
}

/// Finite-difference check of the full training loss in double precision
/// with respect to every trainable parameter.
inline GradCheckReport model_grad_check(const ModelConfig& cfg, std::uint64_t seed,
                                        const GradCheckOptions& opt = {}) {
  MirlModel<double> model(cfg, seed);
  const auto& vit = cfg.vit;
  const auto images = random_grid_images(2, vit.image_h, vit.channels, seed + 1);
  Rng mask_rng(seed + 2);
  const auto plans = sample_masks(2, vit.num_patches(), cfg.mask_ratio, mask_rng);
  const auto patches = patchify<double>(images, vit.patch);
  const auto targets = model.make_targets(images);
  std::vector<Parameter<double>*> params;
  for (auto& p : model.store())
    if (p.tensor.requires_grad()) params.push_back(&p);
  return grad_check<double>(
      [&] { return model.loss(patches, plans, targets).total_tensor; }, params, opt);
}

struct SelftestCheck {
  std::string name;
  bool ok = false;
  std::string detail;
};

namespace detail {

inline bool run_check(std::vector<SelftestCheck>& out, const std::string& name,
                      const std::function<std::string()>& body) {
  SelftestCheck c{name, false, {}};
  try {
    c.detail = body();
    c.ok = c.detail.empty();
  } catch (const std::exception& e) {
    c.detail = std::string("exception: ") + e.what();
  }
  out.push_back(c);
  return c.ok;
}

inline std::string expect(bool cond, const std::string& what) { return cond ? "" : what; }

}  // namespace detail

/// Fast invariant suite; prints one line per check and returns every result.
inline std::vector<SelftestCheck> run_selftest(std::ostream& log,
                                               const std::string& scratch_dir = {}) {
  using detail::expect;
  std::vector<SelftestCheck> checks;
  const auto images = random_grid_images(2, 16, 3, 11);

  detail::run_check(checks, "mask_count", [] {
    Rng rng(3);
    auto plan = sample_mask(196, 0.75, rng);
    return expect(plan.masked.size() == 147 && plan.visible.size() == 49,
                  "expected 147 masked of 196, got " + std::to_string(plan.masked.size()));
  });

  detail::run_check(checks, "loss_identity_G4", [&] {
    auto cfg = gradcheck_model_config();
    cfg.vit.segments = 4;
    MirlModel<double> model(cfg, 5);
    Rng rng(6);
    auto plans = sample_masks(2, cfg.vit.num_patches(), cfg.mask_ratio, rng);
    auto rep = model.loss(images, plans);
    double sum = 0.0;
    for (auto l : rep.per_pair) sum += 0.5 * l;
    return expect(std::abs(rep.total - sum) <= 1e-12 * std::abs(sum),
                  "total differs from the weighted pair sum");
  });

  detail::run_check(checks, "mask_locality", [&] {
    const auto cfg = gradcheck_model_config();
    MirlModel<double> model(cfg, 7);
    Rng rng(8);
    auto plans = sample_masks(2, cfg.vit.num_patches(), cfg.mask_ratio, rng);
    const auto px = patchify<double>(images, cfg.vit.patch);
    auto targets = model.make_targets(images);
    const double before = model.loss(px, plans, targets).total;
    std::vector<double> t(targets.per_term[0].values());
    const std::size_t k = cfg.vit.patch_dim(), n = cfg.vit.num_patches();
    for (std::size_t b = 0; b < plans->size(); ++b)
      for (auto i : (*plans)[b].visible)
        for (std::size_t j = 0; j < k; ++j) t[(b * n + i) * k + j] = rng.uniform();
    targets.per_term[0] = Tensor<double>(targets.per_term[0].shape(), t);
    return expect(model.loss(px, plans, targets).total == before,
                  "loss changed when visible targets changed");
  });

  detail::run_check(checks, "segment_composition", [&] {
    const auto cfg = gradcheck_model_config();
    MirlModel<double> model(cfg, 9);
    auto plans = full_visibility(2, cfg.vit.num_patches());
    auto z0 = model.encoder().embed_visible(patchify<double>(images, cfg.vit.patch), plans);
    auto seg = model.encoder().encode_segments(z0).per_segment.back().tokens.values();
    auto mono = model.encoder().forward(z0).tokens.values();
    return expect(seg == mono, "segmented and monolithic forward differ");
  });

  detail::run_check(checks, "single_segment_is_mae", [&] {
    auto mirl_cfg = gradcheck_model_config();
    mirl_cfg.vit.segments = 1;
    auto mae_cfg = mirl_cfg;
    mae_cfg.objective.mode = ObjectiveMode::Mae;
    MirlModel<double> a(mirl_cfg, 10), b(mae_cfg, 10);
    Rng r1(12), r2(12);
    auto pa = sample_masks(2, mirl_cfg.vit.num_patches(), 0.75, r1);
    auto pb = sample_masks(2, mae_cfg.vit.num_patches(), 0.75, r2);
    return expect(a.loss(images, pa).total == b.loss(images, pb).total,
                  "G=1 loss differs from the MAE loss");
  });

  detail::run_check(checks, "coarse_plus_fine", [&] {
    auto cf = coarse_fine_targets(images, 2.0);
    for (std::size_t i = 0; i < images.values.size(); ++i) {
      if (cf.coarse.values[i] + cf.fine.values[i] != images.values[i]) {
        return std::string("coarse + fine != x");
      }
    }
    return std::string();
  });

  detail::run_check(checks, "checkpoint_roundtrip", [&] {
    const auto cfg = gradcheck_model_config();
    MirlModel<float> model(cfg, 13);
    Checkpoint ck;
    ck.config = "selftest";
    append_store(ck, model.store());
    const auto dir = scratch_dir.empty() ? std::filesystem::temp_directory_path()
                                         : std::filesystem::path(scratch_dir);
    const auto path = (dir / ("mirl_selftest_" + std::to_string(::getpid()) + ".ckpt")).string();
    save_checkpoint(path, ck);
    auto back = load_checkpoint(path);
    std::filesystem::remove(path);
    MirlModel<float> other(cfg, 14);
    restore_store(back, other.store());
    for (const auto& p : model.store()) {
      if (p.tensor.values() != other.store().at(p.name).tensor.values()) {
        return "tensor " + p.name + " differs";
      }
    }
    return std::string();
  });

  detail::run_check(checks, "config_roundtrip", [] {
    const auto cfg = validate_config({}, nullptr);
    const auto text = resolved_config_text(cfg);
    return expect(resolved_config_text(validate_config(parse_config_text(text), nullptr)) == text,
                  "resolved config does not reproduce itself");
  });

  detail::run_check(checks, "gradcheck_sampled", [] {
    GradCheckOptions opt;
    opt.max_elements = 8;
    auto rep = model_grad_check(gradcheck_model_config(), 15, opt);
    char buf[64];
    std::snprintf(buf, sizeof buf, "max rel err %.3g", rep.max_rel_err());
    return expect(rep.ok(), buf);
  });

  for (const auto& c : checks) {
    log << (c.ok ? "ok   " : "FAIL ") << c.name << (c.detail.empty() ? "" : ": " + c.detail)
        << '\n';
  }
  return checks;
}

}  // namespace mirl
