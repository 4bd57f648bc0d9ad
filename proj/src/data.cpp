#include "priorclip/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "priorclip/errors.hpp"

namespace priorclip {

using nlohmann::json;
using nlohmann::ordered_json;

std::string to_string(Granularity g) { return g == Granularity::coarse ? "coarse" : "fine"; }

Granularity granularity_from_string(const std::string& name) {
  if (name == "coarse") return Granularity::coarse;
  if (name == "fine") return Granularity::fine;
  throw ConfigError("unknown granularity '" + name + "' (expected coarse or fine)");
}

namespace {

constexpr std::size_t kCountLevels = 3;
constexpr std::size_t kMinFillers = 4;
constexpr std::size_t kFineRequired = 3;  // class, colour, count

}  // namespace

Vocabulary Vocabulary::layout(const CorpusSpec& spec) {
  Vocabulary v;
  v.num_groups = (spec.num_classes + 1) / 2;
  v.class_base = 1;
  v.group_base = v.class_base + 2 * spec.num_classes;
  v.variant_base = v.group_base + v.num_groups;
  v.count_base = v.variant_base + spec.variants;
  v.filler_base = v.count_base + kCountLevels;
  v.size = spec.vocab_size;
  return v;
}

std::size_t CorpusSpec::min_vocab_size() const {
  Vocabulary v = Vocabulary::layout(*this);
  return v.filler_base + kMinFillers;
}

void CorpusSpec::validate() const {
  auto positive = [](std::size_t x, const char* name) {
    if (x == 0) throw ConfigError(std::string("corpus: ") + name + " must be >= 1");
  };
  positive(num_classes, "num_classes");
  positive(images_per_class, "images_per_class");
  positive(captions_per_image, "captions_per_image");
  positive(image_size, "image_size");
  positive(patch_size, "patch_size");
  positive(variants, "variants");
  if (image_size % patch_size != 0) throw ConfigError("corpus: patch_size must divide image_size");
  const std::size_t side = image_size / patch_size;
  if (side * side < kCountLevels) throw ConfigError("corpus: image must hold at least 3 patches");
  if (!(noise >= 0.0 && noise < 1.0)) throw ConfigError("corpus: noise must lie in [0, 1)");
  if (caption_min_len < kFineRequired) throw ConfigError("corpus: caption_min_len must be >= 3");
  if (caption_max_len < caption_min_len) throw ConfigError("corpus: caption_max_len < caption_min_len");
  if (vocab_size < min_vocab_size()) {
    throw ConfigError("corpus: vocabulary too small for class separation (need >= " +
                      std::to_string(min_vocab_size()) + ", got " + std::to_string(vocab_size) + ")");
  }
}

ordered_json CorpusSpec::to_json() const {
  ordered_json j;
  j["num_classes"] = num_classes;
  j["images_per_class"] = images_per_class;
  j["captions_per_image"] = captions_per_image;
  j["image_size"] = image_size;
  j["patch_size"] = patch_size;
  j["vocab_size"] = vocab_size;
  j["caption_min_len"] = caption_min_len;
  j["caption_max_len"] = caption_max_len;
  j["variants"] = variants;
  j["granularity"] = to_string(granularity);
  j["noise"] = noise;
  j["seed"] = seed;
  j["world_seed"] = world_seed;
  return j;
}

CorpusSpec CorpusSpec::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("corpus spec must be a JSON object");
  CorpusSpec s;
  auto count = [&](const std::string& key, const json& v) -> std::size_t {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
      throw ConfigError("corpus spec: '" + key + "' must be a nonnegative integer");
    }
    return v.get<std::size_t>();
  };
  for (const auto& [key, v] : j.items()) {
    if (key == "num_classes") s.num_classes = count(key, v);
    else if (key == "images_per_class") s.images_per_class = count(key, v);
    else if (key == "captions_per_image") s.captions_per_image = count(key, v);
    else if (key == "image_size") s.image_size = count(key, v);
    else if (key == "patch_size") s.patch_size = count(key, v);
    else if (key == "vocab_size") s.vocab_size = count(key, v);
    else if (key == "caption_min_len") s.caption_min_len = count(key, v);
    else if (key == "caption_max_len") s.caption_max_len = count(key, v);
    else if (key == "variants") s.variants = count(key, v);
    else if (key == "seed") s.seed = count(key, v);
    else if (key == "world_seed") s.world_seed = count(key, v);
    else if (key == "noise") {
      if (!v.is_number()) throw ConfigError("corpus spec: 'noise' must be a number");
      s.noise = v.get<double>();
    } else if (key == "granularity") {
      if (!v.is_string()) throw ConfigError("corpus spec: 'granularity' must be a string");
      s.granularity = granularity_from_string(v.get<std::string>());
    } else if (key == "schema_version") {
      continue;
    } else {
      throw ConfigError("corpus spec: unknown key '" + key + "'");
    }
  }
  return s;
}

std::size_t Dataset::num_captions() const {
  std::size_t n = 0;
  for (const auto& r : records) n += r.captions.size();
  return n;
}

namespace {

using Colour = std::array<double, 3>;

double colour_distance(const Colour& a, const Colour& b) {
  double s = 0;
  for (int c = 0; c < 3; ++c) s += (a[c] - b[c]) * (a[c] - b[c]);
  return std::sqrt(s);
}

// Rejection-sampled colours with a shrinking separation target.
std::vector<Colour> spread_colours(Rng& rng, std::size_t n, double lo, double hi, double separation) {
  std::vector<Colour> out;
  int misses = 0;
  while (out.size() < n) {
    Colour c{rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)};
    bool ok = std::all_of(out.begin(), out.end(), [&](const Colour& o) { return colour_distance(c, o) >= separation; });
    if (ok) {
      out.push_back(c);
      misses = 0;
    } else if (++misses > 200) {
      separation *= 0.9;
      misses = 0;
    }
  }
  return out;
}

struct World {
  std::vector<Colour> backgrounds;
  std::vector<Colour> variant_colours;
  std::vector<std::vector<bool>> shapes;  // per class, patch x patch mask
};

World make_world(const CorpusSpec& spec) {
  Rng rng(mix_seed(spec.world_seed, "world"));
  World w;
  w.backgrounds = spread_colours(rng, spec.num_classes, 0.1, 0.6, 0.3);
  w.variant_colours = spread_colours(rng, spec.variants, 0.5, 1.0, 0.3);
  const std::size_t p2 = spec.patch_size * spec.patch_size;
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    std::vector<bool> mask(p2, false);
    std::size_t on = 0;
    while (on < std::max<std::size_t>(1, p2 / 3)) {
      for (std::size_t i = 0; i < p2; ++i) {
        mask[i] = rng.bernoulli(0.5);
      }
      on = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
    }
    w.shapes.push_back(std::move(mask));
  }
  return w;
}

double quantize(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

std::vector<double> render_image(const CorpusSpec& spec, const World& world, std::size_t label, std::size_t variant,
                                 std::size_t count, Rng& rng) {
  const std::size_t s = spec.image_size;
  const std::size_t p = spec.patch_size;
  const std::size_t side = s / p;
  const std::size_t m = side * side;
  std::vector<double> px(3 * s * s);
  const Colour& bg = world.backgrounds[label];
  for (int c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < s * s; ++i) px[c * s * s + i] = bg[c] + rng.uniform(-0.04, 0.04);
  }
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(std::span<std::size_t>(order));
  auto paint = [&](std::size_t patch, auto pixel) {
    const std::size_t pr = (patch / side) * p;
    const std::size_t pc = (patch % side) * p;
    for (std::size_t y = 0; y < p; ++y) {
      for (std::size_t x = 0; x < p; ++x) {
        for (int c = 0; c < 3; ++c) {
          auto& v = px[c * s * s + (pr + y) * s + (pc + x)];
          v = pixel(y * p + x, c, v);
        }
      }
    }
  };
  const Colour& fg = world.variant_colours[variant];
  const auto& shape = world.shapes[label];
  for (std::size_t k = 0; k < count; ++k) {
    paint(order[k], [&](std::size_t i, int c, double v) { return shape[i] ? fg[c] : v; });
  }
  const auto clutter = static_cast<std::size_t>(std::floor(spec.noise * static_cast<double>(m) + 0.5));
  for (std::size_t k = 0; k < clutter && count + k < m; ++k) {
    paint(order[count + k], [&](std::size_t, int, double) { return rng.uniform(); });
  }
  for (auto& v : px) v = quantize(v);
  return px;
}

std::vector<std::size_t> make_caption(const CorpusSpec& spec, const Vocabulary& vocab, std::size_t label,
                                      std::size_t variant, std::size_t count, Rng& rng) {
  const std::size_t len = spec.caption_min_len + rng.below(spec.caption_max_len - spec.caption_min_len + 1);
  std::vector<std::size_t> tokens;
  const std::size_t synonym = vocab.class_base + 2 * label + rng.below(2);
  if (spec.granularity == Granularity::fine) {
    tokens.push_back(synonym);
    tokens.push_back(vocab.variant_base + variant);
    tokens.push_back(vocab.count_base + count - 1);
  } else {
    tokens.push_back(rng.bernoulli(0.6) ? vocab.group_base + label / 2 : synonym);
    if (rng.bernoulli(0.3)) tokens.push_back(vocab.variant_base + variant);
  }
  while (tokens.size() < len) tokens.push_back(vocab.filler_base + rng.below(vocab.filler_count()));
  rng.shuffle(std::span<std::size_t>(tokens));
  return tokens;
}

}  // namespace

Dataset generate_corpus(const CorpusSpec& spec) {
  spec.validate();
  const World world = make_world(spec);
  const Vocabulary vocab = Vocabulary::layout(spec);
  Rng rng(mix_seed(spec.seed, "corpus"));
  Dataset ds;
  ds.spec = spec;
  ds.records.reserve(spec.num_classes * spec.images_per_class);
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    for (std::size_t i = 0; i < spec.images_per_class; ++i) {
      const std::size_t variant = i % spec.variants;
      const std::size_t count = 1 + (i / spec.variants) % kCountLevels;
      DatasetRecord r;
      char id[48];
      std::snprintf(id, sizeof id, "c%zu-%04zu", c, i);
      r.id = id;
      r.scene_label = c;
      r.pixels = render_image(spec, world, c, variant, count, rng);
      for (std::size_t k = 0; k < spec.captions_per_image; ++k) {
        r.captions.push_back(make_caption(spec, vocab, c, variant, count, rng));
      }
      ds.records.push_back(std::move(r));
    }
  }
  return ds;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write dataset file " + path.string());
  ordered_json header;
  header["schema_version"] = kDatasetSchemaVersion;
  header["kind"] = "priorclip-dataset";
  header["records"] = dataset.records.size();
  header["spec"] = dataset.spec.to_json();
  out << header.dump() << '\n';
  for (const auto& r : dataset.records) {
    ordered_json j;
    j["id"] = r.id;
    j["scene_label"] = r.scene_label;
    j["pixels"] = r.pixels;
    j["captions"] = r.captions;
    out << j.dump() << '\n';
  }
  if (!out) throw InputError("failed writing dataset file " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open dataset file " + path.string());
  Dataset ds;
  std::string line;
  std::size_t lineno = 0;
  std::size_t expected = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("malformed JSON: ") + e.what(), lineno);
    }
    if (!j.is_object()) throw ParseError("expected a JSON object", lineno);
    try {
      if (!have_header) {
        if (!j.contains("schema_version")) throw ParseError("missing dataset header", lineno);
        if (j.at("schema_version").get<int>() != kDatasetSchemaVersion) {
          throw ParseError("unsupported schema_version " + j.at("schema_version").dump(), lineno);
        }
        ds.spec = CorpusSpec::from_json(j.at("spec"));
        ds.spec.validate();
        expected = j.at("records").get<std::size_t>();
        have_header = true;
        continue;
      }
      for (const auto& [key, v] : j.items()) {
        if (key != "id" && key != "scene_label" && key != "pixels" && key != "captions") {
          if (key == "gen_seed") throw ParseError("gen_seed image payloads are not supported", lineno);
          throw ParseError("unknown record field '" + key + "'", lineno);
        }
      }
      DatasetRecord r;
      r.id = j.at("id").get<std::string>();
      r.scene_label = j.at("scene_label").get<std::size_t>();
      r.pixels = j.at("pixels").get<std::vector<double>>();
      r.captions = j.at("captions").get<std::vector<std::vector<std::size_t>>>();
      const std::size_t s = ds.spec.image_size;
      if (r.scene_label >= ds.spec.num_classes) throw ParseError("scene_label out of range", lineno);
      if (r.pixels.size() != 3 * s * s) throw ParseError("pixel count does not match image size", lineno);
      if (r.captions.size() != ds.spec.captions_per_image) throw ParseError("caption count does not match spec", lineno);
      for (const auto& cap : r.captions) {
        if (cap.empty() || cap.size() > ds.spec.caption_max_len) throw ParseError("caption length out of range", lineno);
        for (auto t : cap) {
          if (t >= ds.spec.vocab_size) throw ParseError("token id outside vocabulary", lineno);
        }
      }
      ds.records.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw ParseError(std::string("bad field: ") + e.what(), lineno);
    } catch (const ConfigError& e) {
      throw ParseError(e.what(), lineno);
    }
  }
  if (!have_header) throw ParseError("empty dataset file", lineno + 1);
  if (ds.records.size() != expected) {
    throw ParseError("header announces " + std::to_string(expected) + " records, found " +
                         std::to_string(ds.records.size()),
                     lineno);
  }
  return ds;
}

std::string file_checksum(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 14];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

ordered_json dataset_manifest(const Dataset& dataset, const std::filesystem::path& path) {
  std::vector<std::size_t> histogram(dataset.spec.num_classes, 0);
  for (const auto& r : dataset.records) ++histogram[r.scene_label];
  ordered_json j;
  j["schema_version"] = kDatasetSchemaVersion;
  j["dataset"] = path.filename().string();
  j["records"] = dataset.records.size();
  j["captions"] = dataset.num_captions();
  j["num_classes"] = dataset.spec.num_classes;
  j["class_histogram"] = histogram;
  j["checksum"] = "fnv1a64:" + file_checksum(path);
  return j;
}

BatchIterator::BatchIterator(std::size_t num_records, std::size_t batch_size, std::uint64_t seed, bool shuffle)
    : num_records_(num_records), batch_size_(batch_size), seed_(seed), shuffle_(shuffle) {
  if (num_records == 0) throw InputError("batch iterator: no records");
  if (batch_size == 0) throw ConfigError("batch iterator: batch_size must be >= 1");
  current_ = epoch_batches(0);
}

std::size_t BatchIterator::batches_per_epoch() const { return (num_records_ + batch_size_ - 1) / batch_size_; }

std::vector<std::vector<std::size_t>> BatchIterator::epoch_batches(std::size_t epoch) const {
  std::vector<std::size_t> order(num_records_);
  std::iota(order.begin(), order.end(), 0);
  if (shuffle_) {
    Rng rng(mix_seed(seed_, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(std::span<std::size_t>(order));
  }
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < num_records_; i += batch_size_) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(num_records_, i + batch_size_)));
  }
  return out;
}

std::vector<std::size_t> BatchIterator::next() {
  if (position_ == current_.size()) {
    ++epoch_;
    position_ = 0;
    current_ = epoch_batches(epoch_);
  }
  return current_[position_++];
}

void BatchIterator::seek(std::size_t step) {
  const std::size_t per = batches_per_epoch();
  epoch_ = step / per;
  position_ = step % per;
  current_ = epoch_batches(epoch_);
}

PairBatch make_pair_batch(const Dataset& dataset, const std::vector<std::size_t>& indices, Rng* rng) {
  if (indices.empty()) throw InputError("pair batch: empty index list");
  PairBatch b;
  const std::size_t width = dataset.records.front().pixels.size();
  std::vector<double> px;
  px.reserve(indices.size() * width);
  for (auto i : indices) {
    if (i >= dataset.records.size()) throw InputError("pair batch: record index out of range");
    const auto& r = dataset.records[i];
    b.record_indices.push_back(i);
    b.labels.push_back(r.scene_label);
    px.insert(px.end(), r.pixels.begin(), r.pixels.end());
    const std::size_t pick = rng ? static_cast<std::size_t>(rng->below(r.captions.size())) : 0;
    b.captions.push_back(r.captions[pick]);
  }
  b.pixels = Tensor({indices.size(), width}, std::move(px));
  return b;
}

Tensor dataset_pixels(const Dataset& dataset) {
  if (dataset.records.empty()) throw InputError("dataset has no records");
  const std::size_t width = dataset.records.front().pixels.size();
  std::vector<double> px;
  px.reserve(dataset.records.size() * width);
  for (const auto& r : dataset.records) px.insert(px.end(), r.pixels.begin(), r.pixels.end());
  return Tensor({dataset.records.size(), width}, std::move(px));
}

std::vector<std::size_t> dataset_labels(const Dataset& dataset) {
  std::vector<std::size_t> out;
  for (const auto& r : dataset.records) out.push_back(r.scene_label);
  return out;
}

}  // namespace priorclip
