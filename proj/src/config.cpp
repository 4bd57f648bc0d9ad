#include "priorclip/config.hpp"

#include <fstream>
#include <sstream>

#include "priorclip/errors.hpp"

namespace priorclip {

using nlohmann::json;
using nlohmann::ordered_json;

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::closed_domain: return "closed-domain";
    case Stage::stage1_pretrain: return "stage1-pretrain";
    case Stage::stage2_finetune: return "stage2-finetune";
  }
  return "?";
}

Stage stage_from_string(const std::string& name) {
  if (name == "closed-domain") return Stage::closed_domain;
  if (name == "stage1-pretrain") return Stage::stage1_pretrain;
  if (name == "stage2-finetune") return Stage::stage2_finetune;
  throw ConfigError("unknown stage '" + name + "'");
}

std::string to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

Precision precision_from_string(const std::string& name) {
  if (name == "f64") return Precision::f64;
  if (name == "f32") return Precision::f32;
  throw ConfigError("unknown precision '" + name + "' (expected f64 or f32)");
}

void TrainConfig::validate() const {
  auto positive = [](std::size_t v, const char* what) {
    if (v == 0) throw ConfigError(std::string("config: ") + what + " must be >= 1");
  };
  const auto& e = model.encoder;
  positive(e.embed_dim, "model.embed_dim");
  positive(e.hidden_dim, "model.hidden_dim");
  positive(e.heads, "model.heads");
  positive(e.blocks, "model.blocks");
  positive(e.ffn_mult, "model.ffn_mult");
  positive(model.pae_heads, "model.pae_heads");
  positive(model.pae_ffn_mult, "model.pae_ffn_mult");
  positive(model.spatial_layers, "model.spatial_layers");
  positive(model.temporal_layers, "model.temporal_layers");
  positive(optim.batch_size, "optim.batch_size");
  if (e.hidden_dim % e.heads != 0) throw ConfigError("config: model.heads must divide model.hidden_dim");
  if (e.embed_dim % model.pae_heads != 0) throw ConfigError("config: model.pae_heads must divide model.embed_dim");
  if (!(model.dropout >= 0.0 && model.dropout < 1.0)) throw ConfigError("config: model.dropout must lie in [0, 1)");
  if (!(optim.learning_rate > 0.0)) throw ConfigError("config: optim.learning_rate must be positive");
  if (!(optim.momentum >= 0.0 && optim.momentum < 1.0)) throw ConfigError("config: optim.momentum must lie in [0, 1)");
  loss.validate();
  if (data.train.empty()) throw ConfigError("config: data.train is required");
}

ordered_json TrainConfig::to_json() const {
  ordered_json j;
  j["schema_version"] = kConfigSchemaVersion;
  j["stage"] = to_string(stage);
  j["seed"] = seed;
  j["precision"] = to_string(precision);
  j["data"] = {{"train", data.train}, {"val", data.val}, {"test", data.test}};
  ordered_json m;
  m["embed_dim"] = model.encoder.embed_dim;
  m["hidden_dim"] = model.encoder.hidden_dim;
  m["heads"] = model.encoder.heads;
  m["blocks"] = model.encoder.blocks;
  m["ffn_mult"] = model.encoder.ffn_mult;
  m["position_encoding"] = model.encoder.position_encoding;
  m["pae_heads"] = model.pae_heads;
  m["pae_ffn_mult"] = model.pae_ffn_mult;
  m["spatial_layers"] = model.spatial_layers;
  m["temporal_layers"] = model.temporal_layers;
  m["dropout"] = model.dropout;
  m["spatial_pae"] = model.spatial_pae;
  m["temporal_pae"] = model.temporal_pae;
  m["belief"] = to_string(model.belief);
  m["filter_size"] = model.filter_size;
  m["instruction"] = to_string(model.instruction);
  m["instruction_pretrain_steps"] = model.instruction_pretrain_steps;
  m["instruction_pretrain_lr"] = model.instruction_pretrain_lr;
  j["model"] = m;
  j["loss"] = {{"tau", loss.tau},
               {"t_logit", loss.t_logit},
               {"trainable_t", loss.trainable_t},
               {"lambda_cs", loss.lambda_cs},
               {"epsilon", loss.epsilon}};
  j["optim"] = {{"learning_rate", optim.learning_rate},
                {"momentum", optim.momentum},
                {"steps", optim.steps},
                {"batch_size", optim.batch_size},
                {"eval_every", optim.eval_every}};
  j["init_checkpoint"] = init_checkpoint;
  j["resume_checkpoint"] = resume_checkpoint;
  return j;
}

namespace {

bool same_kind(const json& expected, const json& given) {
  if (expected.is_number_float()) return given.is_number();
  if (expected.is_number_unsigned() || expected.is_number_integer()) {
    return given.is_number_unsigned() || (given.is_number_integer() && given.get<long long>() >= 0);
  }
  return expected.type() == given.type();
}

const char* kind_name(const json& v) {
  if (v.is_number_float()) return "number";
  if (v.is_number()) return "nonnegative integer";
  return v.type_name();
}

}  // namespace

void merge_checked(json& base, const json& patch, const std::string& where) {
  if (!patch.is_object()) throw ConfigError("config" + (where.empty() ? "" : " '" + where + "'") + ": expected an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!base.contains(key)) throw ConfigError("config: unknown key '" + path + "'");
    json& slot = base[key];
    if (slot.is_object()) {
      merge_checked(slot, value, path);
      continue;
    }
    if (!same_kind(slot, value)) {
      throw ConfigError("config: '" + path + "' expects " + kind_name(slot) + ", got " + value.type_name());
    }
    slot = value;
  }
}

namespace {

json nest(const std::string& key, json value) {
  std::size_t end = key.size();
  while (true) {
    const auto dot = end == 0 ? std::string::npos : key.rfind('.', end - 1);
    const std::size_t begin = dot == std::string::npos ? 0 : dot + 1;
    if (begin == end) throw ConfigError("override key '" + key + "' has an empty path segment");
    value = json{{key.substr(begin, end - begin), std::move(value)}};
    if (dot == std::string::npos) return value;
    end = dot;
  }
}

}  // namespace

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json probe = config;
  try {
    merge_checked(probe, nest(key, value));
  } catch (const ConfigError&) {
    // A string field may receive text that happens to parse as JSON.
    if (value.is_string()) throw;
    probe = config;
    try {
      merge_checked(probe, nest(key, json(text)));
    } catch (const ConfigError&) {
      probe = config;
      merge_checked(probe, nest(key, value));
    }
  }
  config = std::move(probe);
}

TrainConfig TrainConfig::from_json(const json& j) {
  json full = TrainConfig{}.to_json();
  merge_checked(full, j);
  if (full.at("schema_version").get<int>() != kConfigSchemaVersion) {
    throw ConfigError("config: unsupported schema_version " + full.at("schema_version").dump());
  }
  TrainConfig c;
  c.stage = stage_from_string(full["stage"].get<std::string>());
  c.seed = full["seed"].get<std::uint64_t>();
  c.precision = precision_from_string(full["precision"].get<std::string>());
  const auto& d = full["data"];
  c.data = {d["train"].get<std::string>(), d["val"].get<std::string>(), d["test"].get<std::string>()};
  const auto& m = full["model"];
  c.model.encoder.embed_dim = m["embed_dim"].get<std::size_t>();
  c.model.encoder.hidden_dim = m["hidden_dim"].get<std::size_t>();
  c.model.encoder.heads = m["heads"].get<std::size_t>();
  c.model.encoder.blocks = m["blocks"].get<std::size_t>();
  c.model.encoder.ffn_mult = m["ffn_mult"].get<std::size_t>();
  c.model.encoder.position_encoding = m["position_encoding"].get<bool>();
  c.model.pae_heads = m["pae_heads"].get<std::size_t>();
  c.model.pae_ffn_mult = m["pae_ffn_mult"].get<std::size_t>();
  c.model.spatial_layers = m["spatial_layers"].get<std::size_t>();
  c.model.temporal_layers = m["temporal_layers"].get<std::size_t>();
  c.model.dropout = m["dropout"].get<double>();
  c.model.spatial_pae = m["spatial_pae"].get<bool>();
  c.model.temporal_pae = m["temporal_pae"].get<bool>();
  c.model.belief = refine_mode_from_string(m["belief"].get<std::string>());
  c.model.filter_size = m["filter_size"].get<std::size_t>();
  c.model.instruction = instruction_source_from_string(m["instruction"].get<std::string>());
  c.model.instruction_pretrain_steps = m["instruction_pretrain_steps"].get<std::size_t>();
  c.model.instruction_pretrain_lr = m["instruction_pretrain_lr"].get<double>();
  const auto& l = full["loss"];
  c.loss.tau = l["tau"].get<double>();
  c.loss.t_logit = l["t_logit"].get<double>();
  c.loss.trainable_t = l["trainable_t"].get<bool>();
  c.loss.lambda_cs = l["lambda_cs"].get<double>();
  c.loss.epsilon = l["epsilon"].get<double>();
  const auto& o = full["optim"];
  c.optim.learning_rate = o["learning_rate"].get<double>();
  c.optim.momentum = o["momentum"].get<double>();
  c.optim.steps = o["steps"].get<std::size_t>();
  c.optim.batch_size = o["batch_size"].get<std::size_t>();
  c.optim.eval_every = o["eval_every"].get<std::size_t>();
  c.init_checkpoint = full["init_checkpoint"].get<std::string>();
  c.resume_checkpoint = full["resume_checkpoint"].get<std::string>();
  return c;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

TrainConfig load_train_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  json full = TrainConfig{}.to_json();
  if (!path.empty()) merge_checked(full, read_json_file(path));
  for (const auto& o : overrides) apply_override(full, o);
  return TrainConfig::from_json(full);
}

}  // namespace priorclip
