#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "priorclip/errors.hpp"
#include "priorclip/retrieval.hpp"
#include "priorclip/rng.hpp"
#include "priorclip/verify.hpp"

using namespace priorclip;

namespace {

RetrievalTable table_2x2(std::vector<std::size_t> txt2img) {
  RetrievalTable t;
  t.num_images = 2;
  t.num_texts = 2;
  t.sim = {0.9, 0.1, 0.2, 0.8};
  t.txt2img = txt2img;
  t.img2txt.resize(2);
  for (std::size_t j = 0; j < 2; ++j) t.img2txt[txt2img[j]].push_back(j);
  return t;
}

}  // namespace

TEST(Similarity, Examples) {
  auto s = similarity_matrix(Tensor::matrix({{3, 4}}), Tensor::matrix({{4, 3}}));
  EXPECT_NEAR(s[0], 0.96, 1e-15);
  auto eye = similarity_matrix(Tensor::matrix({{1, 0}, {0, 1}}), Tensor::matrix({{1, 0}, {0, 1}}));
  EXPECT_EQ(eye, (std::vector<double>{1, 0, 0, 1}));
  auto ones = similarity_matrix(Tensor::matrix({{0.6, 0.8}, {0.6, 0.8}}), Tensor::matrix({{0.6, 0.8}}));
  for (double v : ones) EXPECT_NEAR(v, 1.0, 1e-15);
}

TEST(Recall, SeparableDiagonal) {
  auto t = table_2x2({0, 1});
  EXPECT_EQ(recall_at_k(t, 1, Direction::image_to_text), 100.0);
  EXPECT_EQ(recall_at_k(t, 1, Direction::text_to_image), 100.0);
}

TEST(Recall, AntiDiagonal) {
  auto t = table_2x2({1, 0});
  EXPECT_EQ(recall_at_k(t, 1, Direction::image_to_text), 0.0);
  EXPECT_EQ(recall_at_k(t, 2, Direction::image_to_text), 100.0);
  EXPECT_EQ(recall_at_k(t, 1, Direction::text_to_image), 0.0);
  EXPECT_EQ(recall_at_k(t, 2, Direction::text_to_image), 100.0);
}

TEST(Recall, AllCaptionsOfOneImage) {
  RetrievalTable t;
  t.num_images = 1;
  t.num_texts = 5;
  t.sim = {0.3, -0.2, 0.9, 0.1, 0.0};
  t.txt2img = {0, 0, 0, 0, 0};
  t.img2txt = {{0, 1, 2, 3, 4}};
  EXPECT_EQ(recall_at_k(t, 1, Direction::image_to_text), 100.0);
}

TEST(Recall, TiesGoToLowerIndex) {
  RetrievalTable u;
  u.num_images = 2;
  u.num_texts = 2;
  u.sim = {0.5, 0.5, 0.5, 0.5};
  u.txt2img = {1, 0};
  u.img2txt = {{1}, {0}};
  EXPECT_EQ(recall_at_k(u, 1, Direction::image_to_text), 50.0);
  EXPECT_EQ(recall_at_k(u, 1, Direction::text_to_image), 50.0);
}

TEST(Recall, KBeyondCandidatesIsConfigError) {
  auto t = table_2x2({0, 1});
  EXPECT_THROW(recall_at_k(t, 3, Direction::image_to_text), ConfigError);
  EXPECT_THROW(recall_at_k(t, 0, Direction::image_to_text), ConfigError);
}

TEST(Recall, InconsistentTableIsInputError) {
  auto t = table_2x2({0, 1});
  t.sim[1] = std::nan("");
  EXPECT_THROW(t.validate(), InputError);
}

TEST(MeanRecall, PublishedRow) {
  RecallReport r{18.36, 42.04, 55.53, 13.36, 44.47, 61.73, 0};
  EXPECT_NEAR(mean_recall(r), 39.25, 0.005);
  EXPECT_EQ(mean_recall(RecallReport{}), 0.0);
  EXPECT_EQ(mean_recall(RecallReport{100, 100, 100, 100, 100, 100, 0}), 100.0);
}

TEST(RecallReport, JsonKeysAndRoundTrip) {
  RecallReport r{10, 20, 30, 40, 50, 60, 35};
  auto j = nlohmann::json::parse(r.to_json());
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  std::sort(keys.begin(), keys.end());
  EXPECT_EQ(keys, (std::vector<std::string>{"i2t_r1", "i2t_r10", "i2t_r5", "mr", "t2i_r1", "t2i_r10", "t2i_r5"}));
  auto back = RecallReport::from_json(r.to_json());
  EXPECT_EQ(back.t2i_r5, 50);
  EXPECT_EQ(back.mr, 35);
}

TEST(Evaluate, MonotoneAndRankBased) {
  Rng rng(2);
  RetrievalTable t;
  t.num_images = 6;
  t.num_texts = 12;
  for (std::size_t i = 0; i < 72; ++i) t.sim.push_back(rng.uniform(-1, 1));
  t.img2txt.resize(6);
  for (std::size_t j = 0; j < 12; ++j) {
    t.txt2img.push_back(j / 2);
    t.img2txt[j / 2].push_back(j);
  }
  RecallReport a = evaluate(t);
  EXPECT_LE(a.i2t_r1, a.i2t_r5);
  EXPECT_LE(a.i2t_r5, a.i2t_r10);
  EXPECT_LE(a.t2i_r1, a.t2i_r5);
  EXPECT_LE(a.t2i_r5, a.t2i_r10);
  EXPECT_NEAR(a.mr, mean_recall(a), 1e-12);
  for (auto& s : t.sim) s = std::exp(3 * s) - 2;
  RecallReport b = evaluate(t);
  EXPECT_EQ(a.to_json(), b.to_json());
}

TEST(RecallOracles, ExhaustiveSortAndPublishedMean) {
  EXPECT_TRUE(check_recall_oracle(500, 3).passed);
  EXPECT_TRUE(check_published_mean_recall().passed);
}
