#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "priorclip/encoders.hpp"
#include "priorclip/rng.hpp"
#include "priorclip/tensor.hpp"

namespace priorclip {

inline constexpr int kDatasetSchemaVersion = 1;

enum class Granularity { coarse, fine };

std::string to_string(Granularity g);
Granularity granularity_from_string(const std::string& name);

/// Parameters of a synthetic scene corpus.
///
/// Each scene class has a background colour and an object shape. Image i of
/// a class carries attribute variant (i mod variants) as the object colour and
/// 1 + (i / variants) mod 3 object copies at random patch positions. Fine
/// captions name the class, colour and count; coarse captions mostly name a
/// shared scene group. `world_seed` fixes colours, shapes and vocabulary
/// meaning, so corpora with different `seed` share one world.
struct CorpusSpec {
  std::size_t num_classes = 8;
  std::size_t images_per_class = 32;
  std::size_t captions_per_image = 5;
  std::size_t image_size = 16;
  std::size_t patch_size = 4;
  std::size_t vocab_size = 64;
  std::size_t caption_min_len = 4;
  std::size_t caption_max_len = 8;
  std::size_t variants = 5;
  Granularity granularity = Granularity::fine;
  double noise = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t world_seed = 7;

  /// Throws ConfigError (including "vocabulary too small").
  void validate() const;
  ImageGeometry geometry() const { return {3, image_size, patch_size}; }
  std::size_t min_vocab_size() const;

  nlohmann::ordered_json to_json() const;
  /// Unknown keys are rejected.
  static CorpusSpec from_json(const nlohmann::json& j);
};

struct DatasetRecord {
  std::string id;
  std::size_t scene_label = 0;
  std::vector<double> pixels;  // 3 x H x W, channel-major
  std::vector<std::vector<std::size_t>> captions;

  bool operator==(const DatasetRecord&) const = default;
};

struct Dataset {
  CorpusSpec spec;
  std::vector<DatasetRecord> records;

  ImageGeometry geometry() const { return spec.geometry(); }
  std::size_t max_caption_len() const { return spec.caption_max_len; }
  std::size_t num_captions() const;
};

/// Token ids reserved by the vocabulary layout.
struct Vocabulary {
  std::size_t pad = 0;
  std::size_t class_base = 1;  // two synonyms per class
  std::size_t group_base = 0;
  std::size_t variant_base = 0;
  std::size_t count_base = 0;
  std::size_t filler_base = 0;
  std::size_t size = 0;
  std::size_t num_groups = 0;

  static Vocabulary layout(const CorpusSpec& spec);
  std::size_t filler_count() const { return size - filler_base; }
};

Dataset generate_corpus(const CorpusSpec& spec);

void write_dataset(const Dataset& dataset, const std::filesystem::path& path);
/// Throws ParseError carrying the 1-based line number on malformed input.
Dataset load_dataset(const std::filesystem::path& path);

/// 64-bit FNV-1a of a file's bytes, as 16 hex digits.
std::string file_checksum(const std::filesystem::path& path);

/// Record counts, class histogram and checksum of a written dataset.
nlohmann::ordered_json dataset_manifest(const Dataset& dataset, const std::filesystem::path& path);

/// Seeded epoch permutations over n records, cut into batches; the last
/// batch of an epoch may be short.
class BatchIterator {
 public:
  BatchIterator(std::size_t num_records, std::size_t batch_size, std::uint64_t seed, bool shuffle = true);

  /// Next batch of record indices; crosses into the next epoch as needed.
  std::vector<std::size_t> next();
  std::size_t epoch() const { return epoch_; }
  std::size_t batches_per_epoch() const;
  /// Batches of a given epoch without advancing.
  std::vector<std::vector<std::size_t>> epoch_batches(std::size_t epoch) const;
  /// Positions the iterator at global batch index `step`.
  void seek(std::size_t step);

 private:
  std::size_t num_records_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  bool shuffle_;
  std::size_t epoch_ = 0;
  std::size_t position_ = 0;
  std::vector<std::vector<std::size_t>> current_;
};

/// Aligned image/text pairs: one caption per image, picked with `rng`
/// (or the first caption when rng is null).
struct PairBatch {
  std::vector<std::size_t> record_indices;
  std::vector<std::size_t> labels;
  Tensor pixels;  // B x (3*H*W)
  std::vector<std::vector<std::size_t>> captions;

  std::size_t size() const { return labels.size(); }
};

PairBatch make_pair_batch(const Dataset& dataset, const std::vector<std::size_t>& indices, Rng* rng);

/// All images of a dataset as one B x (3*H*W) tensor.
Tensor dataset_pixels(const Dataset& dataset);
std::vector<std::size_t> dataset_labels(const Dataset& dataset);

}  // namespace priorclip
