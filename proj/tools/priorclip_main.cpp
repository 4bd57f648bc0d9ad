// priorclip: corpus generation, training, evaluation, sweeps and self-checks.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "priorclip/config.hpp"
#include "priorclip/data.hpp"
#include "priorclip/errors.hpp"
#include "priorclip/pipeline.hpp"
#include "priorclip/verify.hpp"

namespace fs = std::filesystem;
using namespace priorclip;

namespace {

fs::path output_root() {
  if (const char* env = std::getenv("PRIORCLIP_OUT"); env && *env) return env;
  return "priorclip-out";
}

fs::path out_dir(const std::string& given, const char* command) {
  return given.empty() ? output_root() / command : fs::path(given);
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
}

void log_line(const std::string& line) { std::cerr << line << '\n'; }

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("sweep: '" + item + "' is not a number");
    }
  }
  return out;
}

struct Common {
  std::string config;
  std::string out;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON configuration file");
  cmd->add_option("--out", c.out, "Output directory (default $PRIORCLIP_OUT/<command>)");
  cmd->add_option("--set", c.sets, "Override key=value (dotted path); repeatable");
  cmd->add_option("--seed", c.seed, "Seed override");
}

TrainConfig resolve_train_config(const Common& c) {
  std::vector<std::string> sets = c.sets;
  if (c.seed) sets.push_back("seed=" + std::to_string(*c.seed));
  return load_train_config(c.config, sets);
}

int cmd_gen_data(const Common& c, const std::string& name) {
  nlohmann::json spec = CorpusSpec{}.to_json();
  if (!c.config.empty()) merge_checked(spec, read_json_file(c.config));
  for (const auto& s : c.sets) apply_override(spec, s);
  if (c.seed) spec["seed"] = *c.seed;
  CorpusSpec cs = CorpusSpec::from_json(spec);
  Dataset ds = generate_corpus(cs);
  const fs::path dir = out_dir(c.out, "data");
  const fs::path file = dir / name;
  write_dataset(ds, file);
  write_file(dir / (fs::path(name).stem().string() + ".manifest.json"), dataset_manifest(ds, file).dump(2) + "\n");
  std::cout << file.string() << "\n";
  return 0;
}

int cmd_train(const Common& c) {
  TrainConfig cfg = resolve_train_config(c);
  const fs::path dir = out_dir(c.out, "train");
  TrainResult r = run_training(cfg, dir, {log_line});
  std::cout << "mR " << r.final_metrics.mr << "  (" << (dir / "metrics.json").string() << ")\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data, const std::string& out) {
  Checkpoint ck = load_checkpoint(checkpoint);
  auto model = model_from_checkpoint(ck);
  RecallReport r = evaluate_model(*model, load_dataset(data));
  const fs::path dir = out_dir(out, "eval");
  write_file(dir / "metrics.json", r.to_json());
  std::cout << r.to_json();
  return 0;
}

int cmd_dump(const std::string& checkpoint, const std::string& data, const std::string& out) {
  Checkpoint ck = load_checkpoint(checkpoint);
  auto model = model_from_checkpoint(ck);
  Dataset ds = load_dataset(data);
  DatasetEmbeddings e = embed_dataset(*model, ds);
  const std::size_t d = e.images.cols();
  std::string csv = "id,modality,label";
  for (std::size_t k = 0; k < d; ++k) csv += ",e" + std::to_string(k);
  csv += "\n";
  char buf[32];
  auto row = [&](const std::string& id, const char* modality, std::size_t label, const Tensor& t, std::size_t r) {
    csv += id + "," + modality + "," + std::to_string(label);
    for (std::size_t k = 0; k < d; ++k) {
      std::snprintf(buf, sizeof buf, ",%.9g", t.at(r, k));
      csv += buf;
    }
    csv += "\n";
  };
  for (std::size_t i = 0; i < ds.records.size(); ++i) row(ds.records[i].id, "image", ds.records[i].scene_label, e.images, i);
  std::vector<std::size_t> seen(ds.records.size(), 0);
  for (std::size_t j = 0; j < e.txt2img.size(); ++j) {
    const auto& rec = ds.records[e.txt2img[j]];
    row(rec.id + "#" + std::to_string(seen[e.txt2img[j]]++), "text", rec.scene_label, e.texts, j);
  }
  const fs::path file = out.empty() ? output_root() / "embeddings.csv" : fs::path(out);
  write_file(file, csv);
  std::cout << file.string() << "\n";
  return 0;
}

int cmd_sweep(const Common& c, const std::string& axis_name, const std::string& values) {
  TrainConfig cfg = resolve_train_config(c);
  const SweepAxis axis = sweep_axis_from_string(axis_name);
  TrainData data = TrainData::load(cfg.data);
  auto points = sweep(cfg, data, axis, parse_values(values), {log_line});
  const fs::path dir = out_dir(c.out, "sweep");
  write_file(dir / ("sweep_" + to_string(axis) + ".csv"), sweep_csv(axis, points));
  std::cout << sweep_csv(axis, points);
  return 0;
}

int cmd_verify(const std::string& suite_name, const std::string& out, std::size_t seeds) {
  VerifyOptions opt;
  if (seeds > 0) opt.seeds = seeds;
  auto results = run_verification(verify_suite_from_string(suite_name), opt);
  std::string report;
  bool ok = true;
  for (const auto& r : results) {
    report += (r.passed ? "PASS  " : "FAIL  ") + r.name + "  " + r.detail + "\n";
    ok = ok && r.passed;
  }
  std::cout << report;
  if (!out.empty()) write_file(out, report);
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"priorclip: prior-guided image-text retrieval at desk scale"};
  app.require_subcommand(1);

  Common gen, train, sweep_opts;
  std::string dataset_name = "dataset.jsonl";
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic corpus and its manifest");
  add_common(gen_cmd, gen);
  gen_cmd->add_option("--name", dataset_name, "Dataset file name inside --out");

  auto* train_cmd = app.add_subcommand("train", "Train; writes checkpoint.bin, history.csv, metrics.json");
  add_common(train_cmd, train);

  std::string ck_path, data_path, eval_out, dump_out;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint; writes metrics.json");
  eval_cmd->add_option("--checkpoint", ck_path)->required();
  eval_cmd->add_option("--data", data_path)->required();
  eval_cmd->add_option("--out", eval_out, "Output directory");

  auto* dump_cmd = app.add_subcommand("dump-embeddings", "Write image and caption embeddings as CSV");
  dump_cmd->add_option("--checkpoint", ck_path)->required();
  dump_cmd->add_option("--data", data_path)->required();
  dump_cmd->add_option("--out", dump_out, "Output CSV file");

  std::string axis, values;
  auto* sweep_cmd = app.add_subcommand("sweep", "Train and evaluate once per value of one axis");
  add_common(sweep_cmd, sweep_opts);
  sweep_cmd->add_option("--axis", axis, "filter_size or lambda_cs")->required();
  sweep_cmd->add_option("--values", values, "Comma-separated values")->required();

  std::string suite = "all", verify_out;
  std::size_t seeds = 0;
  auto* verify_cmd = app.add_subcommand("verify", "Run self-checks: gradients, oracles, invariants or all");
  verify_cmd->add_option("suite", suite, "Suite name")->check(CLI::IsMember({"gradients", "oracles", "invariants", "all"}));
  verify_cmd->add_option("--out", verify_out, "Also write the report to this file");
  verify_cmd->add_option("--seeds", seeds, "Random cases per gradient check");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : exit_code(ErrorCategory::config);
  }

  try {
    if (*gen_cmd) return cmd_gen_data(gen, dataset_name);
    if (*train_cmd) return cmd_train(train);
    if (*eval_cmd) return cmd_eval(ck_path, data_path, eval_out);
    if (*dump_cmd) return cmd_dump(ck_path, data_path, dump_out);
    if (*sweep_cmd) return cmd_sweep(sweep_opts, axis, values);
    if (*verify_cmd) return cmd_verify(suite, verify_out, seeds);
  } catch (const Error& e) {
    std::cerr << "error [" << category_name(e.category()) << "]: " << e.what() << '\n';
    return exit_code(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
