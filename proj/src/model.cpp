#include "priorclip/model.hpp"

#include <cmath>

#include "priorclip/errors.hpp"
#include "priorclip/ops.hpp"

namespace priorclip {

using nlohmann::json;
using nlohmann::ordered_json;

DataShape DataShape::of(const Dataset& dataset) {
  DataShape s;
  s.num_classes = dataset.spec.num_classes;
  s.vocab_size = dataset.spec.vocab_size;
  s.max_caption_len = dataset.spec.caption_max_len;
  s.geometry = dataset.geometry();
  return s;
}

ordered_json DataShape::to_json() const {
  ordered_json j;
  j["num_classes"] = num_classes;
  j["vocab_size"] = vocab_size;
  j["max_caption_len"] = max_caption_len;
  j["image_size"] = geometry.size;
  j["patch_size"] = geometry.patch;
  j["channels"] = geometry.channels;
  return j;
}

DataShape DataShape::from_json(const json& j) {
  DataShape s;
  try {
    s.num_classes = j.at("num_classes").get<std::size_t>();
    s.vocab_size = j.at("vocab_size").get<std::size_t>();
    s.max_caption_len = j.at("max_caption_len").get<std::size_t>();
    s.geometry.size = j.at("image_size").get<std::size_t>();
    s.geometry.patch = j.at("patch_size").get<std::size_t>();
    s.geometry.channels = j.at("channels").get<std::size_t>();
  } catch (const json::exception& e) {
    throw InputError(std::string("data shape: ") + e.what());
  }
  return s;
}

bool DataShape::operator==(const DataShape& o) const {
  return num_classes == o.num_classes && vocab_size == o.vocab_size && max_caption_len == o.max_caption_len &&
         geometry.size == o.geometry.size && geometry.patch == o.geometry.patch &&
         geometry.channels == o.geometry.channels;
}

std::string ActiveModules::describe() const {
  std::string s = "encoders";
  if (spatial_pae) {
    s += "+belief(" + to_string(belief);
    if (belief == RefineMode::hard) s += ",k=" + std::to_string(filter_size);
    s += ")+spatial_pae";
  }
  if (temporal_pae) s += "+temporal_pae";
  s += affiliation_loss ? " | L_c+L_a" : " | L_c";
  return s;
}

PriorClipModel::PriorClipModel(const ModelConfig& model, const LossConfig& loss, const DataShape& shape,
                               std::uint64_t seed)
    : model_(model), loss_(loss), shape_(shape), store_(std::make_unique<ParameterStore>(seed)) {
  loss_.validate();
  shape_.geometry.validate();
  const std::size_t d = model_.encoder.embed_dim;
  auto& store = *store_;
  image_ = std::make_unique<ImageEncoder>(store, "image", model_.encoder, shape_.geometry);
  text_ = std::make_unique<TextEncoder>(store, "text", model_.encoder, shape_.vocab_size, shape_.max_caption_len);
  instruction_ = std::make_unique<InstructionEncoder>(store, "instruction", model_.instruction, shape_.num_classes, d,
                                                      shape_.geometry);
  const std::size_t hidden = d * model_.pae_ffn_mult;
  spatial_ = SpatialPae(store, "spatial", d, model_.pae_heads, hidden, model_.spatial_layers);
  temporal_ = TemporalPae(store, "temporal", d, model_.pae_heads, hidden, model_.temporal_layers);
  t_logit_ = store.constant("t_logit", {1}, loss_.t_logit);
  store.set_trainable("t_logit", loss_.trainable_t);
  const std::size_t len = visual_length();
  if (model_.belief == RefineMode::hard && model_.filter_size > len) {
    throw ConfigError("filter_size " + std::to_string(model_.filter_size) + " exceeds the " + std::to_string(len) +
                      " visual tokens");
  }
}

ActiveModules PriorClipModel::active() const {
  ActiveModules a;
  a.spatial_pae = model_.spatial_pae;
  a.temporal_pae = model_.temporal_pae;
  a.affiliation_loss = loss_.lambda_cs > 0.0;
  a.belief = model_.belief;
  a.filter_size = model_.filter_size == 0 ? visual_length() : model_.filter_size;
  return a;
}

Tensor PriorClipModel::embed_images(const Tensor& pixels, std::span<const std::size_t> labels,
                                    const ForwardContext& ctx) const {
  Sequences seq = image_->encode(pixels, ctx);
  Tensor f_cls = seq.token(0);
  if (!model_.spatial_pae) return f_cls;
  Tensor f_ins = instruction_->encode(labels, pixels);
  Tensor belief = batch_belief(f_ins, seq.tokens, seq.length);
  const std::size_t k = model_.filter_size == 0 ? seq.length : model_.filter_size;
  BatchRefined refined = batch_refine(seq.tokens, belief, seq.length, model_.belief, k);
  Sequences r{refined.tokens, seq.batch, refined.length, {}};
  return compose_vision_embedding(f_cls, spatial_(r, f_ins, ctx));
}

Tensor PriorClipModel::embed_texts(const std::vector<std::vector<std::size_t>>& captions,
                                   const ForwardContext& ctx) const {
  Sequences seq = text_->encode(captions, ctx);
  Tensor t_cls = seq.token(0);
  if (!model_.temporal_pae) return t_cls;
  return compose_text_embedding(t_cls, temporal_(seq, ctx));
}

Tensor PriorClipModel::logit_scale() const { return ops::exp(t_logit_); }

LossBreakdown PriorClipModel::loss(const PairBatch& batch, const ForwardContext& ctx) const {
  Tensor v = embed_images(batch.pixels, batch.labels, ctx);
  Tensor t = embed_texts(batch.captions, ctx);
  LossBreakdown out;
  Tensor l_c = contrastive_loss(v, t, loss_.tau);
  out.l_c = l_c.item();
  if (loss_.lambda_cs > 0.0) {
    Tensor l_a = affiliation_loss(v, t, batch.labels, shape_.num_classes, logit_scale(), loss_.epsilon);
    out.l_a = l_a.item();
    out.total = total_loss(l_c, l_a, loss_.lambda_cs);
  } else {
    out.total = l_c;
  }
  return out;
}

InstructionEncoder::PretrainResult PriorClipModel::prepare_instruction(const Dataset& train, std::uint64_t seed) {
  if (model_.instruction != InstructionSource::toy_conv_encoder || model_.instruction_pretrain_steps == 0) return {};
  auto labels = dataset_labels(train);
  return instruction_->pretrain(*store_, dataset_pixels(train), labels, model_.instruction_pretrain_steps,
                                model_.instruction_pretrain_lr, 32, mix_seed(seed, "instruction-pretrain"));
}

void PriorClipModel::freeze_instruction() { store_->set_trainable("instruction.", false); }

DatasetEmbeddings embed_dataset(const PriorClipModel& model, const Dataset& dataset, std::size_t chunk) {
  if (dataset.records.empty()) throw InputError("embed: dataset has no records");
  if (!(DataShape::of(dataset) == model.data_shape())) {
    throw InputError("embed: dataset geometry/vocabulary does not match the model");
  }
  NoGradGuard no_grad;
  DatasetEmbeddings out;
  std::vector<Tensor> image_parts, text_parts;
  const std::size_t n = dataset.records.size();
  for (std::size_t start = 0; start < n; start += chunk) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(n, start + chunk); ++i) idx.push_back(i);
    PairBatch b = make_pair_batch(dataset, idx, nullptr);
    image_parts.push_back(model.embed_images(b.pixels, b.labels));
  }
  std::vector<std::vector<std::size_t>> pending;
  auto flush = [&] {
    if (pending.empty()) return;
    text_parts.push_back(model.embed_texts(pending));
    pending.clear();
  };
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& cap : dataset.records[i].captions) {
      pending.push_back(cap);
      out.txt2img.push_back(i);
      if (pending.size() == chunk) flush();
    }
  }
  flush();
  out.images = image_parts.size() == 1 ? image_parts.front() : ops::concat_rows(image_parts);
  out.texts = text_parts.size() == 1 ? text_parts.front() : ops::concat_rows(text_parts);
  return out;
}

}  // namespace priorclip
