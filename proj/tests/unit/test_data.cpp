#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "priorclip/data.hpp"
#include "priorclip/errors.hpp"

using namespace priorclip;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "priorclip-unit-data";
  fs::create_directories(dir);
  return dir / name;
}

CorpusSpec small(std::uint64_t seed = 1) {
  CorpusSpec s;
  s.num_classes = 3;
  s.images_per_class = 4;
  s.seed = seed;
  return s;
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  return lines;
}

void write_lines(const fs::path& p, const std::vector<std::string>& lines) {
  std::ofstream out(p);
  for (const auto& l : lines) out << l << "\n";
}

std::size_t parse_error_line(const fs::path& p) {
  try {
    load_dataset(p);
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

}  // namespace

TEST(Corpus, ShapesAndCounts) {
  Dataset ds = generate_corpus(small());
  ASSERT_EQ(ds.records.size(), 12u);
  for (const auto& r : ds.records) {
    EXPECT_EQ(r.pixels.size(), 3u * 16 * 16);
    EXPECT_EQ(r.captions.size(), 5u);
    EXPECT_LT(r.scene_label, 3u);
    for (double v : r.pixels) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    for (const auto& c : r.captions) {
      EXPECT_GE(c.size(), 4u);
      EXPECT_LE(c.size(), 8u);
      for (auto t : c) EXPECT_LT(t, 64u);
    }
  }
}

// Per-channel mean pixels, classified by the perpendicular bisector of the
// two class centroids.
TEST(Corpus, TwoClassesLinearlySeparableOnMeanPixels) {
  CorpusSpec s;
  s.num_classes = 2;
  s.images_per_class = 40;
  s.seed = 21;
  Dataset ds = generate_corpus(s);
  auto features = [](const DatasetRecord& r) {
    std::vector<double> f(3, 0.0);
    const std::size_t plane = r.pixels.size() / 3;
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < plane; ++i) f[c] += r.pixels[c * plane + i] / plane;
    return f;
  };
  std::vector<double> mu[2] = {std::vector<double>(3, 0.0), std::vector<double>(3, 0.0)};
  for (const auto& r : ds.records) {
    auto f = features(r);
    for (int c = 0; c < 3; ++c) mu[r.scene_label][c] += f[c] / 40.0;
  }
  std::size_t correct = 0;
  for (const auto& r : ds.records) {
    auto f = features(r);
    double score = 0;
    for (int c = 0; c < 3; ++c) score += (mu[1][c] - mu[0][c]) * (f[c] - 0.5 * (mu[0][c] + mu[1][c]));
    correct += (score > 0) == (r.scene_label == 1);
  }
  EXPECT_EQ(correct, ds.records.size());
}

TEST(Corpus, SameSeedSameBytesAndRoundTrip) {
  Dataset a = generate_corpus(small(5));
  write_dataset(a, scratch("a.jsonl"));
  write_dataset(generate_corpus(small(5)), scratch("b.jsonl"));
  EXPECT_EQ(file_checksum(scratch("a.jsonl")), file_checksum(scratch("b.jsonl")));
  Dataset back = load_dataset(scratch("a.jsonl"));
  EXPECT_EQ(back.records, a.records);
  EXPECT_EQ(back.spec.to_json(), a.spec.to_json());
  write_dataset(generate_corpus(small(6)), scratch("c.jsonl"));
  EXPECT_NE(file_checksum(scratch("a.jsonl")), file_checksum(scratch("c.jsonl")));
}

TEST(Corpus, ManifestCounts) {
  Dataset a = generate_corpus(small(2));
  write_dataset(a, scratch("m.jsonl"));
  auto m = dataset_manifest(a, scratch("m.jsonl"));
  EXPECT_EQ(m["records"], 12);
  EXPECT_EQ(m["captions"], 60);
  EXPECT_EQ(m["class_histogram"].dump(), "[4,4,4]");
  EXPECT_EQ(m["checksum"], "fnv1a64:" + file_checksum(scratch("m.jsonl")));
}

TEST(Corpus, VocabularyTooSmall) {
  CorpusSpec s = small();
  s.vocab_size = s.min_vocab_size() - 1;
  EXPECT_THROW(generate_corpus(s), ConfigError);
  s.vocab_size = s.min_vocab_size();
  EXPECT_NO_THROW(generate_corpus(s));
}

TEST(Corpus, SpecValidation) {
  CorpusSpec s = small();
  s.noise = 1.0;
  EXPECT_THROW(s.validate(), ConfigError);
  s = small();
  s.patch_size = 5;
  EXPECT_THROW(s.validate(), ConfigError);
  EXPECT_THROW(CorpusSpec::from_json({{"num_clases", 3}}), ConfigError);
}

TEST(Corpus, NoiseAddsClutter) {
  CorpusSpec s = small(3);
  Dataset clean = generate_corpus(s);
  s.noise = 0.5;
  Dataset noisy = generate_corpus(s);
  EXPECT_NE(clean.records[0].pixels, noisy.records[0].pixels);
}

TEST(Corpus, CoarseCaptionsShareTokensAcrossClasses) {
  auto distinct_token_overlap = [](const Dataset& ds) {
    std::vector<std::set<std::size_t>> per_class(ds.spec.num_classes);
    for (const auto& r : ds.records)
      for (const auto& c : r.captions) per_class[r.scene_label].insert(c.begin(), c.end());
    std::size_t shared = 0;
    for (auto t : per_class[0]) shared += per_class[1].count(t);
    return shared;
  };
  CorpusSpec s = small(4);
  Dataset fine = generate_corpus(s);
  s.granularity = Granularity::coarse;
  Dataset coarse = generate_corpus(s);
  EXPECT_GT(distinct_token_overlap(coarse), distinct_token_overlap(fine));
}

TEST(DatasetFile, ParseErrorsCarryLineNumbers) {
  write_dataset(generate_corpus(small()), scratch("p.jsonl"));
  auto lines = read_lines(scratch("p.jsonl"));

  auto broken = lines;
  broken[3] = "{not json";
  write_lines(scratch("p1.jsonl"), broken);
  EXPECT_EQ(parse_error_line(scratch("p1.jsonl")), 4u);

  broken = lines;
  auto rec = nlohmann::json::parse(broken[2]);
  rec["scene_label"] = 99;
  broken[2] = rec.dump();
  write_lines(scratch("p2.jsonl"), broken);
  EXPECT_EQ(parse_error_line(scratch("p2.jsonl")), 3u);

  broken = lines;
  rec = nlohmann::json::parse(broken[5]);
  rec.erase("pixels");
  rec["gen_seed"] = 4;
  broken[5] = rec.dump();
  write_lines(scratch("p3.jsonl"), broken);
  EXPECT_EQ(parse_error_line(scratch("p3.jsonl")), 6u);

  broken = lines;
  auto header = nlohmann::json::parse(broken[0]);
  header["schema_version"] = 2;
  broken[0] = header.dump();
  write_lines(scratch("p4.jsonl"), broken);
  EXPECT_EQ(parse_error_line(scratch("p4.jsonl")), 1u);

  broken = lines;
  broken.pop_back();
  write_lines(scratch("p5.jsonl"), broken);
  EXPECT_THROW(load_dataset(scratch("p5.jsonl")), ParseError);
}

TEST(DatasetFile, MissingFileIsInputError) {
  EXPECT_THROW(load_dataset(scratch("does-not-exist.jsonl")), InputError);
}

TEST(BatchIterator, EveryRecordOncePerEpochWithPartialBatch) {
  BatchIterator it(10, 4, 3);
  EXPECT_EQ(it.batches_per_epoch(), 3u);
  for (int epoch = 0; epoch < 3; ++epoch) {
    std::vector<int> seen(10, 0);
    std::vector<std::size_t> sizes;
    for (int b = 0; b < 3; ++b) {
      auto batch = it.next();
      sizes.push_back(batch.size());
      for (auto i : batch) ++seen[i];
    }
    EXPECT_EQ(sizes, (std::vector<std::size_t>{4, 4, 2}));
    for (int c : seen) EXPECT_EQ(c, 1);
  }
}

TEST(BatchIterator, SeededAndSeekable) {
  BatchIterator a(17, 5, 9), b(17, 5, 9), c(17, 5, 10);
  std::vector<std::vector<std::size_t>> first;
  for (int i = 0; i < 9; ++i) first.push_back(a.next());
  for (int i = 0; i < 9; ++i) EXPECT_EQ(b.next(), first[i]);
  EXPECT_NE(c.epoch_batches(0), a.epoch_batches(0));
  BatchIterator d(17, 5, 9);
  d.seek(6);
  EXPECT_EQ(d.next(), first[6]);
  BatchIterator plain(5, 2, 1, false);
  EXPECT_EQ(plain.next(), (std::vector<std::size_t>{0, 1}));
}

TEST(PairBatch, PicksOneCaptionPerImage) {
  Dataset ds = generate_corpus(small());
  PairBatch b = make_pair_batch(ds, {0, 5, 7}, nullptr);
  EXPECT_EQ(b.pixels.shape(), (Shape{3, 3 * 16 * 16}));
  EXPECT_EQ(b.captions[1], ds.records[5].captions[0]);
  EXPECT_EQ(b.labels[2], ds.records[7].scene_label);
  Rng rng(1);
  PairBatch r = make_pair_batch(ds, {0, 5, 7}, &rng);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& caps = ds.records[r.record_indices[i]].captions;
    EXPECT_NE(std::find(caps.begin(), caps.end(), r.captions[i]), caps.end());
  }
}
