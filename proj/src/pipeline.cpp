#include "priorclip/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "priorclip/errors.hpp"

namespace priorclip {

using nlohmann::json;

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void emit(const TrainOptions& options, const std::string& line) {
  if (options.log) options.log(line);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
}

}  // namespace

std::string history_csv(const std::vector<HistoryRow>& rows) {
  std::string s = "step,loss,l_c,l_a,i2t_r1,i2t_r5,i2t_r10,t2i_r1,t2i_r5,t2i_r10,mr\n";
  for (const auto& r : rows) {
    s += std::to_string(r.step) + "," + fmt(r.loss) + "," + fmt(r.l_c) + "," + fmt(r.l_a);
    if (r.eval) {
      const auto& e = *r.eval;
      for (double v : {e.i2t_r1, e.i2t_r5, e.i2t_r10, e.t2i_r1, e.t2i_r5, e.t2i_r10, e.mr}) s += "," + fmt(v);
    } else {
      s += ",,,,,,,";
    }
    s += "\n";
  }
  return s;
}

TrainData TrainData::load(const DataPaths& paths) {
  if (paths.train.empty()) throw ConfigError("data.train is required");
  TrainData d{load_dataset(paths.train), std::nullopt, std::nullopt};
  if (!paths.val.empty()) d.val = load_dataset(paths.val);
  if (!paths.test.empty()) d.test = load_dataset(paths.test);
  return d;
}

StagePlan plan_stage(const TrainConfig& config, const Dataset& train) {
  StagePlan plan{config, {}};
  auto& c = plan.config;
  switch (config.stage) {
    case Stage::closed_domain:
      break;
    case Stage::stage1_pretrain:
      c.model.spatial_pae = false;
      c.model.temporal_pae = false;
      c.loss.lambda_cs = 0.0;
      if (train.spec.granularity != Granularity::coarse) {
        plan.warnings.push_back("stage1-pretrain expects a coarse-granularity corpus; training data is fine-grained");
      }
      break;
    case Stage::stage2_finetune:
      c.model.spatial_pae = true;
      c.model.temporal_pae = false;
      if (c.model.belief == RefineMode::hard) {
        c.model.belief = RefineMode::soft_sequence;
        plan.warnings.push_back("stage2-finetune uses soft belief; hard filtering request replaced by soft-sequence");
      }
      if (train.spec.granularity != Granularity::fine) {
        plan.warnings.push_back("stage2-finetune expects a fine-granularity corpus; training data is coarse");
      }
      break;
  }
  return plan;
}

RecallReport evaluate_model(const PriorClipModel& model, const Dataset& dataset) {
  DatasetEmbeddings e = embed_dataset(model, dataset);
  return evaluate(make_retrieval_table(e.images, e.texts, e.txt2img));
}

std::unique_ptr<PriorClipModel> model_from_checkpoint(const Checkpoint& ck) {
  TrainConfig cfg = TrainConfig::from_json(ck.config);
  auto model = std::make_unique<PriorClipModel>(cfg.model, cfg.loss, ck.shape, cfg.seed);
  restore_parameters(*model, ck.params, true);
  for (auto& e : model->params().entries()) {
    if (const auto* b = ck.find(e.name)) {
      e.trainable = b->trainable;
      e.tensor.set_requires_grad(b->trainable);
    }
  }
  return model;
}

namespace {

Checkpoint capture(const PriorClipModel& model, const TrainConfig& cfg, std::size_t step, const Rng& rng,
                   const std::vector<std::vector<double>>& velocity) {
  Checkpoint ck;
  ck.config = cfg.to_json();
  ck.shape = model.data_shape();
  ck.step = step;
  ck.rng_state = rng.state();
  ck.params = snapshot_parameters(model);
  const auto& entries = model.params().entries();
  for (std::size_t i = 0; i < velocity.size(); ++i) {
    if (!velocity[i].empty()) ck.velocity.push_back({entries[i].name, entries[i].tensor.shape(), true, velocity[i]});
  }
  return ck;
}

void sgd_step(ParameterStore& store, std::vector<std::vector<double>>& velocity, double lr, double momentum,
              bool round_f32) {
  auto& entries = store.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& e = entries[i];
    if (!e.trainable || !e.tensor.has_grad()) continue;
    auto g = e.tensor.grad();
    auto p = e.tensor.mutable_values();
    if (momentum > 0.0) {
      auto& v = velocity[i];
      if (v.empty()) v.assign(p.size(), 0.0);
      for (std::size_t j = 0; j < p.size(); ++j) {
        v[j] = momentum * v[j] + g[j];
        p[j] -= lr * v[j];
      }
    } else {
      for (std::size_t j = 0; j < p.size(); ++j) p[j] -= lr * g[j];
    }
    if (round_f32) {
      for (auto& x : p) x = static_cast<double>(static_cast<float>(x));
    }
  }
}

}  // namespace

TrainResult train_model(const TrainConfig& raw, const TrainData& data, const Checkpoint* init,
                        const Checkpoint* resume, const TrainOptions& options) {
  StagePlan plan = plan_stage(raw, data.train);
  const TrainConfig& cfg = plan.config;
  cfg.validate();
  for (const auto& w : plan.warnings) emit(options, "warning: " + w);
  PrecisionGuard precision(cfg.precision);

  const DataShape shape = DataShape::of(data.train);
  for (const auto* other : {data.val ? &*data.val : nullptr, data.test ? &*data.test : nullptr}) {
    if (other && !(DataShape::of(*other) == shape)) {
      throw ConfigError("validation/test corpus geometry or vocabulary differs from the training corpus");
    }
  }
  PriorClipModel model(cfg.model, cfg.loss, shape, cfg.seed);
  Rng rng(mix_seed(cfg.seed, "train"));
  std::vector<std::vector<double>> velocity(model.params().entries().size());
  std::size_t start = 0;

  if (resume) {
    if (!(resume->shape == shape)) throw ConfigError("resume checkpoint was trained on a different corpus shape");
    restore_parameters(model, resume->params, true);
    rng.restore(resume->rng_state);
    start = resume->step;
    const auto& entries = model.params().entries();
    for (const auto& v : resume->velocity) {
      for (std::size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].name == v.name) velocity[i] = v.values;
      }
    }
  } else if (init) {
    restore_parameters(model, init->params, false);
  } else {
    auto pre = model.prepare_instruction(data.train, cfg.seed);
    if (!pre.loss_history.empty()) {
      emit(options, "instruction pre-phase: train accuracy " + fmt(pre.train_accuracy));
    }
  }
  if (cfg.stage == Stage::stage2_finetune) model.freeze_instruction();

  TrainResult result;
  result.warnings = plan.warnings;
  result.active = model.active();
  emit(options, "modules: " + result.active.describe());

  BatchIterator batches(data.train.records.size(), cfg.optim.batch_size, mix_seed(cfg.seed, "batches"));
  batches.seek(start);
  const std::size_t every = cfg.optim.eval_every == 0 ? batches.batches_per_epoch() : cfg.optim.eval_every;
  const bool round_f32 = cfg.precision == Precision::f32;
  std::optional<Checkpoint> best;
  double best_mr = -1.0;

  for (std::size_t step = start; step < cfg.optim.steps; ++step) {
    PairBatch batch = make_pair_batch(data.train, batches.next(), &rng);
    ForwardContext ctx{&rng, cfg.model.dropout};
    LossBreakdown lb;
    try {
      lb = model.loss(batch, ctx);
      if (!std::isfinite(lb.total.item())) throw NumericError("non-finite loss");
      model.params().zero_grad();
      lb.total.backward();
    } catch (const NumericError& e) {
      throw NumericError("training diverged at step " + std::to_string(step + 1) + ": " + e.what() +
                         " (try a smaller optim.learning_rate)");
    }
    sgd_step(model.params(), velocity, cfg.optim.learning_rate, cfg.optim.momentum, round_f32);
    HistoryRow row{step + 1, lb.total.item(), lb.l_c, lb.l_a, std::nullopt};
    const bool last = step + 1 == cfg.optim.steps;
    if (data.val && ((step + 1) % every == 0 || last)) {
      row.eval = evaluate_model(model, *data.val);
      emit(options, "step " + std::to_string(step + 1) + " loss " + fmt(row.loss) + " val mR " + fmt(row.eval->mr));
      if (row.eval->mr > best_mr) {
        best_mr = row.eval->mr;
        best = capture(model, cfg, step + 1, rng, velocity);
        result.best_validation = row.eval;
      }
    } else if ((step + 1) % every == 0 || last) {
      emit(options, "step " + std::to_string(step + 1) + " loss " + fmt(row.loss));
    }
    result.history.push_back(std::move(row));
  }

  result.last = capture(model, cfg, std::max(start, cfg.optim.steps), rng, velocity);
  result.best = best ? std::move(*best) : result.last;
  const Dataset& final_set = data.test ? *data.test : data.val ? *data.val : data.train;
  if (best) {
    auto best_model = model_from_checkpoint(result.best);
    result.final_metrics = evaluate_model(*best_model, final_set);
  } else {
    result.final_metrics = evaluate_model(model, final_set);
  }
  return result;
}

TrainResult train_closed_domain(const TrainConfig& config, const TrainData& data, const TrainOptions& options) {
  TrainConfig c = config;
  c.stage = Stage::closed_domain;
  return train_model(c, data, nullptr, nullptr, options);
}

OpenDomainResult train_open_domain(const TrainConfig& stage1, const TrainData& stage1_data, const TrainConfig& stage2,
                                   const TrainData& stage2_data, const TrainOptions& options) {
  TrainConfig s1 = stage1;
  s1.stage = Stage::stage1_pretrain;
  TrainConfig s2 = stage2;
  s2.stage = Stage::stage2_finetune;
  OpenDomainResult r;
  r.stage1 = train_model(s1, stage1_data, nullptr, nullptr, options);
  r.stage2 = train_model(s2, stage2_data, &r.stage1.last, nullptr, options);
  return r;
}

std::string to_string(SweepAxis axis) { return axis == SweepAxis::filter_size ? "filter_size" : "lambda_cs"; }

SweepAxis sweep_axis_from_string(const std::string& name) {
  if (name == "filter_size") return SweepAxis::filter_size;
  if (name == "lambda_cs") return SweepAxis::lambda_cs;
  throw ConfigError("unknown sweep axis '" + name + "' (expected filter_size or lambda_cs)");
}

std::vector<SweepPoint> sweep(const TrainConfig& config, const TrainData& data, SweepAxis axis,
                              const std::vector<double>& values, const TrainOptions& options) {
  if (values.empty()) throw ConfigError("sweep: no values given");
  std::vector<SweepPoint> points;
  for (double v : values) {
    TrainConfig c = config;
    if (axis == SweepAxis::filter_size) {
      if (!(v >= 1.0) || v != std::floor(v)) throw ConfigError("sweep: filter_size values must be positive integers");
      c.model.belief = RefineMode::hard;
      c.model.filter_size = static_cast<std::size_t>(v);
    } else {
      if (!(v >= 0.0)) throw ConfigError("sweep: lambda_cs values must be nonnegative");
      c.loss.lambda_cs = v;
    }
    emit(options, "sweep " + to_string(axis) + "=" + fmt(v));
    points.push_back({v, train_model(c, data, nullptr, nullptr, options).final_metrics});
  }
  return points;
}

std::string sweep_csv(SweepAxis axis, const std::vector<SweepPoint>& points) {
  std::string s = to_string(axis) + ",i2t_r1,i2t_r5,i2t_r10,t2i_r1,t2i_r5,t2i_r10,mr\n";
  for (const auto& p : points) {
    const auto& e = p.report;
    s += fmt(p.value);
    for (double v : {e.i2t_r1, e.i2t_r5, e.i2t_r10, e.t2i_r1, e.t2i_r5, e.t2i_r10, e.mr}) s += "," + fmt(v);
    s += "\n";
  }
  return s;
}

void write_training_artifacts(const TrainResult& result, const TrainConfig& config, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_checkpoint(result.best, dir / "checkpoint.bin");
  save_checkpoint(result.last, dir / "last.bin");
  write_text(dir / "history.csv", history_csv(result.history));
  write_text(dir / "metrics.json", result.final_metrics.to_json());
  write_text(dir / "config.json", config.to_json().dump(2) + "\n");
}

TrainResult run_training(const TrainConfig& config, const std::filesystem::path& out_dir, const TrainOptions& options) {
  TrainData data = TrainData::load(config.data);
  std::optional<Checkpoint> init, resume;
  if (!config.resume_checkpoint.empty()) {
    resume = load_checkpoint(config.resume_checkpoint);
  } else if (config.stage == Stage::stage2_finetune) {
    if (config.init_checkpoint.empty()) throw ConfigError("stage2-finetune requires init_checkpoint (a stage-1 checkpoint)");
    if (!std::filesystem::exists(config.init_checkpoint)) {
      throw ConfigError("stage-1 checkpoint not found: " + config.init_checkpoint);
    }
    init = load_checkpoint(config.init_checkpoint);
  }
  TrainResult r = train_model(config, data, init ? &*init : nullptr, resume ? &*resume : nullptr, options);
  write_training_artifacts(r, plan_stage(config, data.train).config, out_dir);
  return r;
}

}  // namespace priorclip
