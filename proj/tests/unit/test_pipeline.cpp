#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "priorclip/checkpoint.hpp"
#include "priorclip/errors.hpp"
#include "priorclip/pipeline.hpp"

using namespace priorclip;
namespace fs = std::filesystem;

namespace {

CorpusSpec corpus(std::uint64_t seed, Granularity g = Granularity::fine) {
  CorpusSpec s;
  s.num_classes = 4;
  s.images_per_class = 6;
  s.granularity = g;
  s.seed = seed;
  return s;
}

TrainConfig tiny() {
  TrainConfig c;
  c.data.train = "(memory)";
  c.model.encoder.embed_dim = 8;
  c.model.encoder.hidden_dim = 8;
  c.model.encoder.blocks = 1;
  c.model.spatial_layers = 1;
  c.model.temporal_layers = 1;
  c.optim.batch_size = 8;
  c.optim.steps = 12;
  c.optim.eval_every = 6;
  return c;
}

TrainData tiny_data() {
  return {generate_corpus(corpus(1)), generate_corpus(corpus(2)), generate_corpus(corpus(3))};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "priorclip-unit-pipeline" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Pipeline, SameSeedSameHistory) {
  TrainData data = tiny_data();
  TrainResult a = train_model(tiny(), data), b = train_model(tiny(), data);
  EXPECT_EQ(history_csv(a.history), history_csv(b.history));
  EXPECT_EQ(a.final_metrics.to_json(), b.final_metrics.to_json());
  TrainConfig other = tiny();
  other.seed = 1;
  EXPECT_NE(history_csv(train_model(other, data).history), history_csv(a.history));
}

TEST(Pipeline, HistoryHasEvalRowsAndFiniteLosses) {
  TrainResult r = train_model(tiny(), tiny_data());
  ASSERT_EQ(r.history.size(), 12u);
  EXPECT_TRUE(r.history[5].eval.has_value());
  EXPECT_TRUE(r.history[11].eval.has_value());
  EXPECT_FALSE(r.history[0].eval.has_value());
  for (const auto& h : r.history) EXPECT_TRUE(std::isfinite(h.loss));
  std::string csv = history_csv(r.history);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "step,loss,l_c,l_a,i2t_r1,i2t_r5,i2t_r10,t2i_r1,t2i_r5,t2i_r10,mr");
  EXPECT_TRUE(r.best_validation.has_value());
}

TEST(Pipeline, ArtifactsAndEvalRoundTrip) {
  fs::path dir = scratch("artifacts");
  TrainConfig c = tiny();
  TrainData data = tiny_data();
  TrainResult r = train_model(c, data);
  write_training_artifacts(r, c, dir);
  for (const char* f : {"checkpoint.bin", "last.bin", "history.csv", "metrics.json", "config.json"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  EXPECT_EQ(slurp(dir / "metrics.json"), r.final_metrics.to_json());
  auto model = model_from_checkpoint(load_checkpoint(dir / "checkpoint.bin"));
  EXPECT_EQ(evaluate_model(*model, *data.test).to_json(), r.final_metrics.to_json());
}

TEST(Pipeline, StageRulesAndWarnings) {
  Dataset fine = generate_corpus(corpus(1)), coarse = generate_corpus(corpus(1, Granularity::coarse));
  TrainConfig c = tiny();
  c.stage = Stage::stage1_pretrain;
  StagePlan p1 = plan_stage(c, coarse);
  EXPECT_FALSE(p1.config.model.spatial_pae);
  EXPECT_FALSE(p1.config.model.temporal_pae);
  EXPECT_EQ(p1.config.loss.lambda_cs, 0.0);
  EXPECT_TRUE(p1.warnings.empty());
  EXPECT_EQ(plan_stage(c, fine).warnings.size(), 1u);

  c.stage = Stage::stage2_finetune;
  c.model.belief = RefineMode::hard;
  StagePlan p2 = plan_stage(c, coarse);
  EXPECT_TRUE(p2.config.model.spatial_pae);
  EXPECT_FALSE(p2.config.model.temporal_pae);
  EXPECT_NE(p2.config.model.belief, RefineMode::hard);
  bool coarse_warned = false;
  for (const auto& w : p2.warnings) coarse_warned = coarse_warned || w.find("coarse") != std::string::npos;
  EXPECT_TRUE(coarse_warned);
}

TEST(Pipeline, Stage2NeedsStage1Checkpoint) {
  TrainConfig c = tiny();
  c.stage = Stage::stage2_finetune;
  fs::path dir = scratch("stage2");
  write_dataset(generate_corpus(corpus(1)), dir / "train.jsonl");
  c.data.train = (dir / "train.jsonl").string();
  EXPECT_THROW(run_training(c, dir / "out"), ConfigError);
  c.init_checkpoint = (dir / "missing.bin").string();
  EXPECT_THROW(run_training(c, dir / "out"), ConfigError);
}

TEST(Pipeline, Stage2FreezesInstructionEncoder) {
  TrainConfig s1 = tiny();
  s1.stage = Stage::stage1_pretrain;
  s1.model.instruction = InstructionSource::learned_scene_table;
  TrainConfig s2 = s1;
  s2.stage = Stage::stage2_finetune;
  TrainData coarse{generate_corpus(corpus(1, Granularity::coarse)), std::nullopt, std::nullopt};
  OpenDomainResult r = train_open_domain(s1, coarse, s2, tiny_data());
  const auto* before = r.stage1.last.find("instruction.table");
  const auto* after = r.stage2.last.find("instruction.table");
  ASSERT_NE(before, nullptr);
  ASSERT_NE(after, nullptr);
  EXPECT_EQ(before->values, after->values);
  EXPECT_NE(r.stage1.last.find("image.cls")->values, r.stage2.last.find("image.cls")->values);
}

TEST(Pipeline, EmptyStage1EqualsScratch) {
  TrainConfig s1 = tiny();
  s1.stage = Stage::stage1_pretrain;
  s1.optim.steps = 0;
  TrainConfig s2 = tiny();
  s2.stage = Stage::stage2_finetune;
  TrainData data = tiny_data();
  OpenDomainResult staged = train_open_domain(s1, data, s2, data);
  TrainResult scratch_run = train_model(s2, data);
  EXPECT_EQ(history_csv(staged.stage2.history), history_csv(scratch_run.history));
}

TEST(Pipeline, SweepSingleValueMatchesPlainRun) {
  TrainConfig c = tiny();
  TrainData data = tiny_data();
  auto points = sweep(c, data, SweepAxis::lambda_cs, {1.0});
  ASSERT_EQ(points.size(), 1u);
  EXPECT_EQ(points[0].report.to_json(), train_model(c, data).final_metrics.to_json());
  std::string csv = sweep_csv(SweepAxis::lambda_cs, points);
  EXPECT_EQ(csv.substr(0, csv.find(',')), "lambda_cs");
  EXPECT_THROW(sweep(c, data, SweepAxis::filter_size, {2.5}), ConfigError);
  auto hard = sweep(c, data, SweepAxis::filter_size, {3});
  EXPECT_EQ(hard.size(), 1u);
}

TEST(Pipeline, AblationFlagsSelectModules) {
  Dataset ds = generate_corpus(corpus(1));
  for (int mask = 0; mask < 8; ++mask) {
    TrainConfig c = tiny();
    c.model.spatial_pae = mask & 1;
    c.model.temporal_pae = mask & 2;
    c.loss.lambda_cs = (mask & 4) ? 1.0 : 0.0;
    PriorClipModel m(c.model, c.loss, DataShape::of(ds), 0);
    EXPECT_EQ(m.active().spatial_pae, bool(mask & 1));
    EXPECT_EQ(m.active().temporal_pae, bool(mask & 2));
    EXPECT_EQ(m.active().affiliation_loss, bool(mask & 4));
  }
}

TEST(Pipeline, HardFilterSizeBounded) {
  Dataset ds = generate_corpus(corpus(1));
  TrainConfig c = tiny();
  c.model.belief = RefineMode::hard;
  c.model.filter_size = 18;  // m + 1 = 17
  EXPECT_THROW(PriorClipModel(c.model, c.loss, DataShape::of(ds), 0), ConfigError);
}

TEST(Pipeline, ResumeIsBitIdentical) {
  TrainData data{generate_corpus(corpus(5)), std::nullopt, std::nullopt};
  TrainConfig full = tiny();
  full.optim.steps = 20;
  full.optim.eval_every = 0;
  TrainResult straight = train_model(full, data);
  TrainConfig half = full;
  half.optim.steps = 10;
  TrainResult first = train_model(half, data);
  fs::path dir = scratch("resume");
  save_checkpoint(first.last, dir / "r.bin");
  Checkpoint loaded = load_checkpoint(dir / "r.bin");
  EXPECT_EQ(loaded.step, 10u);
  TrainResult resumed = train_model(full, data, nullptr, &loaded);
  ASSERT_EQ(resumed.history.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(resumed.history[i].loss, straight.history[10 + i].loss);
  for (std::size_t i = 0; i < straight.last.params.size(); ++i)
    EXPECT_EQ(straight.last.params[i].values, resumed.last.params[i].values) << straight.last.params[i].name;
}

TEST(Checkpoint, CorruptFilesRejected) {
  fs::path dir = scratch("corrupt");
  EXPECT_THROW(load_checkpoint(dir / "none.bin"), ConfigError);
  {
    std::ofstream out(dir / "bad.bin", std::ios::binary);
    out << "NOTACKPT";
  }
  EXPECT_THROW(load_checkpoint(dir / "bad.bin"), InputError);
  TrainResult r = train_model(tiny(), tiny_data());
  save_checkpoint(r.last, dir / "ok.bin");
  std::string bytes = slurp(dir / "ok.bin");
  {
    std::ofstream out(dir / "short.bin", std::ios::binary);
    out << bytes.substr(0, bytes.size() - 9);
  }
  EXPECT_THROW(load_checkpoint(dir / "short.bin"), InputError);
}
