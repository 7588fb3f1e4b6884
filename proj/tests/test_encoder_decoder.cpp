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

#include <map>

#include "test_util.hpp"

namespace mirl {
namespace {

using test::ptrs;
using test::random_const;
using test::random_images;
using test::tiny_config;
using test::weighted_sum;

void zero(Tensor<double>& t) {
  auto d = t.mutable_data();
  std::fill(d.begin(), d.end(), 0.0);
}

std::map<std::string, std::vector<double>> snapshot(const ParameterStore<double>& s) {
  std::map<std::string, std::vector<double>> out;
  for (const auto& p : s) out[p.name] = p.tensor.values();
  return out;
}

TEST(Block, ZeroedSublayersAreIdentity) {
  ParameterStore<double> store;
  Rng rng(1);
  auto block = TransformerBlock<double>::create(store, "b", 8, 16, 2, rng);
  zero(block.attn.proj.weight);
  zero(block.attn.proj.bias);
  zero(block.mlp.fc2.weight);
  zero(block.mlp.fc2.bias);
  auto x = random_const({2, 5, 8}, rng);
  EXPECT_EQ(block(x).values(), x.values());
}

TEST(Block, ShapePreservedForAnyLength) {
  ParameterStore<double> store;
  Rng rng(2);
  auto block = TransformerBlock<double>::create(store, "b", 8, 16, 2, rng);
  for (std::size_t t : {1u, 3u, 7u}) {
    auto x = random_const({2, t, 8}, rng);
    EXPECT_EQ(block(x).shape(), x.shape());
  }
}

TEST(Block, TwoTokenGradientCheck) {
  ParameterStore<double> store;
  Rng rng(3);
  auto block = TransformerBlock<double>::create(store, "b", 4, 8, 2, rng);
  // Enlarge weights so every path contributes measurably.
  for (auto& p : store)
    if (p.init == Init::TruncNormal)
      for (auto& v : p.tensor.mutable_data()) v *= 20.0;
  std::vector<Parameter<double>> xs{test::random_param("x", {1, 2, 4}, rng)};
  auto params = ptrs(store);
  params.push_back(&xs[0]);
  auto rep = grad_check<double>([&] { return weighted_sum(block(xs[0].tensor)); }, params);
  EXPECT_TRUE(rep.ok()) << rep.max_rel_err();
}

TEST(EncoderConfig, SegmentArithmetic) {
  ViTConfig cfg;
  cfg.depth = 24;
  cfg.segments = 4;
  EXPECT_EQ(cfg.blocks_per_segment(), 6u);
  ViTConfig s54;
  ASSERT_TRUE(vit_preset("ViT-S-54", s54));
  EXPECT_EQ(s54.depth, 54u);
  EXPECT_EQ(s54.hidden, 384u);
  EXPECT_EQ(s54.mlp, 1536u);
  EXPECT_EQ(s54.heads, 12u);
  s54.segments = 6;
  s54.validate();
  EXPECT_EQ(s54.blocks_per_segment(), 9u);
  ViTConfig b24, b48;
  ASSERT_TRUE(vit_preset("ViT-B-24", b24));
  ASSERT_TRUE(vit_preset("ViT-B-48", b48));
  EXPECT_EQ(b24.depth, 24u);
  EXPECT_EQ(b48.depth, 48u);
  EXPECT_EQ(b48.hidden, 768u);
}

TEST(EncoderConfig, RejectsInvalidSegments) {
  ViTConfig cfg;
  cfg.segments = 3;
  cfg.depth = 9;
  try {
    cfg.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("G-g+1"), std::string::npos);
  }
  cfg.segments = 4;
  cfg.depth = 6;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.depth = 8;
  cfg.hidden = 30;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

struct Built {
  ParameterStore<double> store;
  Encoder<double> enc;
  TokenSequence<double> z0;

  explicit Built(ViTConfig cfg, std::uint64_t seed = 4) {
    Rng rng(seed);
    enc = Encoder<double>(store, cfg, rng);
    Rng mr(seed + 1);
    auto img = random_images(2, cfg.image_h, seed + 2);
    z0 = enc.embed_visible(patchify<double>(img, cfg.patch), sample_masks(2, cfg.num_patches(), 0.75, mr));
  }
};

TEST(Encoder, SegmentCompositionEqualsMonolithic) {
  for (std::size_t g : {1u, 2u, 4u}) {
    auto cfg = tiny_config(4, 16, g).vit;
    Built b(cfg);
    auto state = b.enc.encode_segments(b.z0);
    ASSERT_EQ(state.segments(), g);
    EXPECT_EQ(state.per_segment.back().tokens.values(), b.enc.forward(b.z0).tokens.values());
    EXPECT_EQ(state.z(0).tokens.values(), b.z0.tokens.values());
    for (std::size_t s = 0; s < g; ++s) {
      const std::size_t per = cfg.depth / g;
      EXPECT_EQ(state.per_segment[s].tokens.values(), b.enc.run_blocks(b.z0, 0, (s + 1) * per).tokens.values());
      EXPECT_EQ(state.per_segment[s].depth_tag, static_cast<int>(s + 1));
      EXPECT_EQ(state.per_segment[s].plans, b.z0.plans);
    }
  }
}

TEST(Encoder, ReinitTail) {
  auto cfg = tiny_config(6, 16, 2).vit;
  Built b(cfg);
  for (auto& p : b.store)
    for (auto& v : p.tensor.mutable_data()) v += 1.0;
  const auto before = snapshot(b.store);
  Rng rng(10);
  reinit_tail(b.store, cfg.depth, 0, rng);
  EXPECT_EQ(snapshot(b.store), before);

  reinit_tail(b.store, cfg.depth, 3, rng);
  const auto after = snapshot(b.store);
  std::set<std::string> changed_blocks;
  for (const auto& [name, vals] : after) {
    if (vals == before.at(name)) continue;
    ASSERT_TRUE(name.starts_with("encoder.blocks.")) << name;
    changed_blocks.insert(name.substr(0, name.find('.', 15)));
  }
  EXPECT_EQ(changed_blocks, (std::set<std::string>{"encoder.blocks.3", "encoder.blocks.4", "encoder.blocks.5"}));
  for (std::size_t i = 0; i < 3; ++i)
    for (auto* p : b.store.with_prefix(encoder_block_prefix(i))) EXPECT_EQ(p->tensor.values(), before.at(p->name));

  reinit_tail(b.store, cfg.depth, cfg.depth, rng);
  for (const auto& [name, vals] : snapshot(b.store))
    if (name.starts_with("encoder.blocks.")) EXPECT_NE(vals, before.at(name)) << name;
  EXPECT_THROW(reinit_tail(b.store, cfg.depth, cfg.depth + 1, rng), ConfigError);
}

TEST(Encoder, TruncateAndLoadMap) {
  auto cfg = tiny_config(7, 16, 1).vit;
  auto small = truncate(cfg, 4);
  EXPECT_EQ(small.depth, 4u);
  EXPECT_EQ(truncate(cfg, 7).depth, 7u);
  EXPECT_THROW(truncate(cfg, 0), ConfigError);
  EXPECT_THROW(truncate(cfg, 8), ConfigError);

  Built pre(small, 20);
  Built full(cfg, 21);
  const auto fresh = snapshot(full.store);
  const auto copied = load_truncated_encoder(full.store, pre.store);
  EXPECT_EQ(copied, pre.store.size());
  for (const auto& p : full.store) {
    if (pre.store.contains(p.name)) {
      EXPECT_EQ(p.tensor.values(), pre.store.at(p.name).tensor.values()) << p.name;
    } else {
      EXPECT_EQ(p.tensor.values(), fresh.at(p.name)) << p.name;
      EXPECT_TRUE(p.name.starts_with("encoder.blocks.4") || p.name.starts_with("encoder.blocks.5") ||
                  p.name.starts_with("encoder.blocks.6"))
          << p.name;
    }
  }
}

// Hand-built sequence with N=4 patches for decoder bookkeeping checks.
TokenSequence<double> sequence(const std::vector<std::size_t>& visible, std::size_t width, Rng& rng) {
  auto plans = std::make_shared<MaskBatch>();
  MaskPlan p;
  p.num_patches = 4;
  p.visible = visible;
  for (std::size_t i = 0; i < 4; ++i)
    if (std::find(visible.begin(), visible.end(), i) == visible.end()) p.masked.push_back(i);
  plans->push_back(p);
  return {random_const({1, visible.size() + 1, width}, rng), plans, 1};
}

TEST(Decoder, FillWithoutMasksIsProjection) {
  ParameterStore<double> store;
  Rng rng(30);
  auto embed = LinearParams<double>::create(store, "e", 6, 8, rng);
  auto mask = store.add("m", {1, 8}, Init::TruncNormal, rng);
  auto pos = store.add("p", {5, 8}, Init::TruncNormal, rng);
  auto z = sequence({0, 1, 2, 3}, 6, rng);
  EXPECT_EQ(fill_mask_tokens(z, embed, mask, pos, false).values(), embed(z.tokens).values());
}

TEST(Decoder, MaskedSlotsShareTheMaskToken) {
  ParameterStore<double> store;
  Rng rng(31);
  auto embed = LinearParams<double>::create(store, "e", 6, 8, rng);
  auto mask = store.add("m", {1, 8}, Init::TruncNormal, rng);
  auto pos = store.add("p", {5, 8}, Init::TruncNormal, rng);
  auto z = sequence({2}, 6, rng);
  auto u = fill_mask_tokens(z, embed, mask, pos, false);
  for (std::size_t slot : {1u, 2u, 4u})
    for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(u.data()[slot * 8 + j], mask.data()[j]);
}

TEST(Decoder, VisibleStorageOrderDoesNotMatter) {
  ParameterStore<double> store;
  Rng rng(32);
  auto embed = LinearParams<double>::create(store, "e", 6, 8, rng);
  auto mask = store.add("m", {1, 8}, Init::TruncNormal, rng);
  auto pos = store.add("p", {5, 8}, Init::TruncNormal, rng);
  auto z = sequence({0, 2, 3}, 6, rng);
  // Same tokens stored in order (3, 0, 2).
  auto plans = std::make_shared<MaskBatch>(*z.plans);
  (*plans)[0].visible = {3, 0, 2};
  auto perm = gather_rows(reshape(z.tokens, {4, 6}), {0, 3, 1, 2});
  TokenSequence<double> zp{reshape(perm, {1, 4, 6}), plans, 1};
  EXPECT_EQ(fill_mask_tokens(zp, embed, mask, pos).values(), fill_mask_tokens(z, embed, mask, pos).values());
}

TEST(Did, SinglePriorTokenReturnsItsValue) {
  ParameterStore<double> store;
  Rng rng(33);
  auto cross = CrossAttention<double>::create(store, "did", 3, 1, rng);
  zero(cross.kv.weight);
  zero(cross.kv.bias);
  zero(cross.proj.weight);
  zero(cross.proj.bias);
  for (std::size_t i = 0; i < 3; ++i) {
    cross.kv.weight.mutable_data()[i * 6 + i] = 1.0;      // keys
    cross.kv.weight.mutable_data()[i * 6 + 3 + i] = 1.0;  // values
    cross.proj.weight.mutable_data()[i * 3 + i] = 1.0;
  }
  auto prior = random_const({1, 1, 3}, rng);
  auto queries = random_const({1, 4, 3}, rng);
  std::vector<double> w;
  auto out = did_attention(queries, prior, cross, &w);
  for (std::size_t q = 0; q < 4; ++q)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(out.data()[q * 3 + j], prior.data()[j], 1e-15);
  for (double v : w) EXPECT_EQ(v, 1.0);
}

TEST(Did, WeightsSumToOneAndGradientCheck) {
  ParameterStore<double> store;
  Rng rng(34);
  auto cross = CrossAttention<double>::create(store, "did", 4, 2, rng);
  for (auto& p : store)
    if (p.init == Init::TruncNormal)
      for (auto& v : p.tensor.mutable_data()) v *= 25.0;
  std::vector<Parameter<double>> io{test::random_param("u", {1, 3, 4}, rng),
                                    test::random_param("z", {1, 3, 4}, rng)};
  std::vector<double> w;
  did_attention(io[0].tensor, io[1].tensor, cross, &w);
  for (std::size_t r = 0; r < w.size() / 3; ++r) EXPECT_NEAR(w[3 * r] + w[3 * r + 1] + w[3 * r + 2], 1.0, 1e-6);
  auto params = ptrs(store);
  params.push_back(&io[0]);
  params.push_back(&io[1]);
  auto rep = grad_check<double>([&] { return weighted_sum(did_attention(io[0].tensor, io[1].tensor, cross)); }, params);
  EXPECT_TRUE(rep.ok()) << rep.max_rel_err();
  EXPECT_THROW(did_attention(io[0].tensor, Tensor<double>::zeros({1, 0, 4}), cross), Error);
}

TEST(Did, PriorConcatenatesEarlierSegmentsNewestFirst) {
  auto cfg = tiny_config(4, 16, 4).vit;
  Built b(cfg);
  auto state = b.enc.encode_segments(b.z0);
  auto prior = prior_sequence(state, 3);
  const std::size_t t = b.z0.length();
  ASSERT_EQ(prior.dim(1), 3 * t);
  auto expect = concat<double>({state.z(2).tokens, state.z(1).tokens, state.z(0).tokens}, 1);
  EXPECT_EQ(prior.values(), expect.values());
  EXPECT_THROW(prior_sequence(state, 0), Error);
}

struct ModelFixture {
  ModelConfig cfg;
  std::unique_ptr<MirlModel<double>> model;
  ImageBatch img;
  MaskBatchPtr plans;

  ModelFixture(std::size_t g, std::size_t depth = 4, bool did = true, std::uint64_t seed = 40) {
    cfg = tiny_config(depth, 16, g);
    cfg.decoder.did = did;
    model = std::make_unique<MirlModel<double>>(cfg, seed);
    img = random_images(2, cfg.vit.image_h, seed + 1);
    Rng rng(seed + 2);
    plans = sample_masks(2, cfg.vit.num_patches(), 0.75, rng);
  }
  SegmentedEncoderState<double> state() const {
    return model->encode(patchify<double>(img, cfg.vit.patch), plans);
  }
};

TEST(DecodePairs, PairingFollowsShortcutOrder) {
  for (std::size_t g : {2u, 4u, 6u}) {
    ModelFixture f(g, g == 6 ? 6 : 4);
    auto state = f.state();
    auto pairs = f.model->decoders().decode_pairs(state);
    ASSERT_EQ(pairs.size(), g / 2);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      EXPECT_EQ(pairs[i].g, i + 1);
      EXPECT_EQ(pairs[i].main.values(), f.model->decoders().decoder(i + 1)(state).values());
      EXPECT_EQ(pairs[i].residual.values(), f.model->decoders().decoder(g - i)(state).values());
      EXPECT_EQ(pairs[i].main.shape(), (Shape{2, 16, 48}));
    }
  }
}

TEST(DecodePairs, SingleSegmentGivesMainOnly) {
  ModelFixture f(1);
  auto pairs = f.model->decoders().decode_pairs(f.state());
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_FALSE(pairs[0].residual.defined());
}

TEST(DecodePairs, MultiDecoderBranchesEqualPixelLoss) {
  ModelFixture f(2);
  f.cfg.objective.mode = ObjectiveMode::MultiDecoder;
  MirlModel<double> model(f.cfg, 40);
  auto state = model.encode(patchify<double>(f.img, 4), f.plans);
  auto preds = model.decoders().multi_decoder_outputs(state);
  ASSERT_EQ(preds.size(), 2u);
  auto report = model.loss(f.img, f.plans);
  auto target = patchify<double>(f.img, 4);
  for (std::size_t i = 0; i < 2; ++i)
    EXPECT_EQ(report.per_pair[i], pixel_loss(preds[i], target, *f.plans).item());
  EXPECT_EQ(report.lambda, (std::vector<double>{0.5, 0.5}));
}

TEST(DecodePairs, ZeroedDidEqualsDisabled) {
  ModelFixture with(2, 4, true), without(2, 4, false);
  with.model->store().copy_from(without.model->store());
  for (auto& p : with.model->store())
    if (p.name.find(".did.proj.") != std::string::npos) zero(p.tensor);
  auto a = with.model->decoders().decode_pairs(with.state());
  auto b = without.model->decoders().decode_pairs(without.state());
  EXPECT_EQ(a[0].main.values(), b[0].main.values());
  EXPECT_EQ(a[0].residual.values(), b[0].residual.values());
  // DID parameters live only in each decoder's first block.
  for (const auto& p : with.model->store())
    if (p.name.find(".did") != std::string::npos) EXPECT_NE(p.name.find(".blocks.0."), std::string::npos) << p.name;
}

TEST(DecodePairs, SharedMaskTokenByDefault) {
  ModelFixture f(4);
  EXPECT_TRUE(f.model->store().contains("decoder.mask_token"));
  EXPECT_FALSE(f.model->store().contains("decoder.1.mask_token"));
  auto cfg = f.cfg;
  cfg.decoder.shared_mask_token = false;
  MirlModel<double> m(cfg, 1);
  EXPECT_FALSE(m.store().contains("decoder.mask_token"));
  EXPECT_TRUE(m.store().contains("decoder.4.mask_token"));
}

}  // namespace
}  // namespace mirl
