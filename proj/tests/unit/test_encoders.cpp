#include <cmath>

#include <gtest/gtest.h>

#include "priorclip/data.hpp"
#include "priorclip/encoders.hpp"
#include "priorclip/errors.hpp"

using namespace priorclip;

namespace {

double cosine(std::span<const double> a, std::span<const double> b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

void expect_rows_equal(const Tensor& t, std::size_t r1, std::size_t r2, double tol) {
  for (std::size_t c = 0; c < t.cols(); ++c) EXPECT_NEAR(t.at(r1, c), t.at(r2, c), tol);
}

}  // namespace

TEST(ImageEncoder, SixteenPixelsPatchFourGivesSixteenTokens) {
  ParameterStore store(1);
  EncoderConfig cfg;
  ImageEncoder enc(store, "image", cfg, {3, 16, 4});
  SyntheticImage img{std::vector<double>(3 * 16 * 16, 0.5), 0};
  auto out = enc.encode(img);
  EXPECT_EQ(out.tokens.shape(), (Shape{16, cfg.embed_dim}));
  EXPECT_EQ(out.f_cls.shape(), (Shape{1, cfg.embed_dim}));
}

TEST(ImageEncoder, PatchMustTileImage) {
  ParameterStore store(1);
  EXPECT_THROW(ImageEncoder(store, "image", EncoderConfig{}, {3, 16, 5}), ConfigError);
}

TEST(ImageEncoder, ZeroImageWithoutPositionsGivesIdenticalTokens) {
  ParameterStore store(2);
  EncoderConfig cfg;
  cfg.position_encoding = false;
  ImageEncoder enc(store, "image", cfg, {3, 16, 4});
  auto out = enc.encode(SyntheticImage{std::vector<double>(3 * 16 * 16, 0.0), 0});
  for (std::size_t r = 1; r < out.tokens.rows(); ++r) expect_rows_equal(out.tokens, 0, r, 1e-12);
}

TEST(ImageEncoder, IdenticalImagesIdenticalOutputs) {
  ParameterStore store(3);
  ImageEncoder enc(store, "image", EncoderConfig{}, {3, 16, 4});
  std::vector<double> px(3 * 16 * 16);
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = double(i % 7) / 7.0;
  auto a = enc.encode(SyntheticImage{px, 0});
  auto b = enc.encode(SyntheticImage{px, 0});
  EXPECT_EQ(a.tokens.to_vector(), b.tokens.to_vector());
  EXPECT_EQ(a.f_cls.to_vector(), b.f_cls.to_vector());
}

TEST(TextEncoder, SingleTokenText) {
  ParameterStore store(4);
  TextEncoder enc(store, "text", EncoderConfig{}, 20, 8);
  auto out = enc.encode(std::vector<std::size_t>{5});
  EXPECT_EQ(out.tokens.shape(), (Shape{1, 32}));
}

TEST(TextEncoder, OutOfVocabularyIsInputError) {
  ParameterStore store(4);
  TextEncoder enc(store, "text", EncoderConfig{}, 20, 8);
  EXPECT_THROW(enc.encode(std::vector<std::size_t>{3, 20}), InputError);
  EXPECT_THROW(enc.encode(std::vector<std::size_t>(9, 1)), InputError);
}

TEST(TextEncoder, PermutationEquivariantWithoutPositions) {
  ParameterStore store(5);
  EncoderConfig cfg;
  cfg.position_encoding = false;
  TextEncoder enc(store, "text", cfg, 20, 8);
  auto a = enc.encode(std::vector<std::size_t>{3, 7, 11, 2});
  auto b = enc.encode(std::vector<std::size_t>{11, 3, 2, 7});
  const std::size_t perm[4] = {2, 0, 3, 1};  // row i of b is row perm[i] of a
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < a.tokens.cols(); ++c) EXPECT_NEAR(b.tokens.at(i, c), a.tokens.at(perm[i], c), 1e-12);
  for (std::size_t c = 0; c < a.t_cls.cols(); ++c) EXPECT_NEAR(a.t_cls.at(0, c), b.t_cls.at(0, c), 1e-12);
}

TEST(TextEncoder, PaddedBatchMatchesSingleEncoding) {
  ParameterStore store(6);
  TextEncoder enc(store, "text", EncoderConfig{}, 20, 8);
  std::vector<std::vector<std::size_t>> caps = {{1, 2, 3, 4, 5}, {6, 7}};
  Sequences seq = enc.encode(caps);
  auto single = enc.encode(caps[1]);
  for (std::size_t c = 0; c < 32; ++c) EXPECT_NEAR(seq.tokens.at(seq.length, c), single.t_cls.at(0, c), 1e-12);
}

TEST(InstructionEncoder, FrozenTableLookupIsStable) {
  ParameterStore store(7);
  InstructionEncoder enc(store, "instruction", InstructionSource::frozen_scene_table, 4, 8, {3, 16, 4});
  EXPECT_EQ(enc.encode(std::size_t{2}).f_ins.to_vector(), enc.encode(std::size_t{2}).f_ins.to_vector());
  EXPECT_FALSE(store.entries().front().trainable);
  EXPECT_THROW(enc.encode(std::size_t{4}), InputError);
}

TEST(InstructionEncoder, TwoClassTableIsOrthogonal) {
  ParameterStore store(8);
  InstructionEncoder enc(store, "instruction", InstructionSource::frozen_scene_table, 2, 32, {3, 16, 4});
  auto a = enc.encode(std::size_t{0}).f_ins.to_vector();
  auto b = enc.encode(std::size_t{1}).f_ins.to_vector();
  double dot = 0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  EXPECT_NEAR(dot, 0.0, 1e-12);
}

TEST(InstructionEncoder, ConvPrePhaseSeparatesClasses) {
  CorpusSpec spec;
  spec.num_classes = 4;
  spec.images_per_class = 16;
  spec.seed = 11;
  Dataset ds = generate_corpus(spec);
  ParameterStore store(9);
  InstructionEncoder enc(store, "instruction", InstructionSource::toy_conv_encoder, 4, 32, ds.geometry());
  Tensor px = dataset_pixels(ds);
  auto labels = dataset_labels(ds);
  auto result = enc.pretrain(store, px, labels, 200, 0.5, 32, 3);
  EXPECT_GT(result.train_accuracy, 0.9);
  for (const auto& e : store.entries()) EXPECT_FALSE(e.trainable) << e.name;

  Tensor f = enc.encode(labels, px);
  double same = 0, cross = 0;
  std::size_t ns = 0, nc = 0;
  for (std::size_t i = 0; i < f.rows(); ++i)
    for (std::size_t j = i + 1; j < f.rows(); ++j) {
      double c = cosine(f.values().subspan(i * 32, 32), f.values().subspan(j * 32, 32));
      if (labels[i] == labels[j]) same += c, ++ns;
      else cross += c, ++nc;
    }
  EXPECT_GT(same / ns, cross / nc);
}
