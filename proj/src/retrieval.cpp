#include "priorclip/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "priorclip/errors.hpp"
#include "priorclip/ops.hpp"

namespace priorclip {

void RetrievalTable::validate() const {
  if (num_images == 0 || num_texts == 0) throw InputError("retrieval table: empty");
  if (sim.size() != num_images * num_texts) throw InputError("retrieval table: similarity size mismatch");
  if (txt2img.size() != num_texts || img2txt.size() != num_images) throw InputError("retrieval table: map size mismatch");
  for (double s : sim) {
    if (!std::isfinite(s)) throw InputError("retrieval table: non-finite similarity");
  }
  for (std::size_t j = 0; j < num_texts; ++j) {
    if (txt2img[j] >= num_images) throw InputError("retrieval table: caption maps to unknown image");
  }
  for (std::size_t i = 0; i < num_images; ++i) {
    if (img2txt[i].empty()) throw InputError("retrieval table: image " + std::to_string(i) + " has no caption");
    for (auto j : img2txt[i]) {
      if (j >= num_texts || txt2img[j] != i) throw InputError("retrieval table: inconsistent ground truth maps");
    }
  }
}

std::string RecallReport::to_json() const {
  nlohmann::ordered_json j;
  j["i2t_r1"] = i2t_r1;
  j["i2t_r5"] = i2t_r5;
  j["i2t_r10"] = i2t_r10;
  j["t2i_r1"] = t2i_r1;
  j["t2i_r5"] = t2i_r5;
  j["t2i_r10"] = t2i_r10;
  j["mr"] = mr;
  return j.dump(2) + "\n";
}

RecallReport RecallReport::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("recall report: ") + e.what());
  }
  RecallReport r;
  try {
    r.i2t_r1 = j.at("i2t_r1").get<double>();
    r.i2t_r5 = j.at("i2t_r5").get<double>();
    r.i2t_r10 = j.at("i2t_r10").get<double>();
    r.t2i_r1 = j.at("t2i_r1").get<double>();
    r.t2i_r5 = j.at("t2i_r5").get<double>();
    r.t2i_r10 = j.at("t2i_r10").get<double>();
    r.mr = j.at("mr").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("recall report: ") + e.what());
  }
  return r;
}

std::vector<double> similarity_matrix(const Tensor& image, const Tensor& text) {
  if (image.ndim() != 2 || text.ndim() != 2 || image.cols() != text.cols()) {
    throw DimensionError("similarity_matrix: embedding widths differ");
  }
  NoGradGuard no_grad;
  return ops::matmul(ops::l2_normalize(image), ops::transpose(ops::l2_normalize(text))).to_vector();
}

RetrievalTable make_retrieval_table(const Tensor& image, const Tensor& text, std::vector<std::size_t> txt2img) {
  RetrievalTable t;
  t.num_images = image.rows();
  t.num_texts = text.rows();
  t.sim = similarity_matrix(image, text);
  t.img2txt.assign(t.num_images, {});
  for (std::size_t j = 0; j < txt2img.size(); ++j) {
    if (txt2img[j] < t.num_images) t.img2txt[txt2img[j]].push_back(j);
  }
  t.txt2img = std::move(txt2img);
  t.validate();
  return t;
}

namespace {

// Candidate a outranks b: higher similarity, or equal with lower index.
bool outranks(double sa, std::size_t a, double sb, std::size_t b) { return sa > sb || (sa == sb && a < b); }

// 0-based rank of the best-placed ground-truth candidate.
std::size_t best_rank(std::size_t n, auto score, const std::vector<std::size_t>& truth) {
  std::size_t best = truth.front();
  for (auto g : truth) {
    if (outranks(score(g), g, score(best), best)) best = g;
  }
  std::size_t rank = 0;
  const double sb = score(best);
  for (std::size_t j = 0; j < n; ++j) {
    if (j != best && outranks(score(j), j, sb, best)) ++rank;
  }
  return rank;
}

}  // namespace

double recall_at_k(const RetrievalTable& table, std::size_t k, Direction direction) {
  const std::size_t candidates = direction == Direction::image_to_text ? table.num_texts : table.num_images;
  if (k == 0 || k > candidates) {
    throw ConfigError("recall_at_k: K=" + std::to_string(k) + " outside [1, " + std::to_string(candidates) + "]");
  }
  std::size_t hits = 0;
  if (direction == Direction::image_to_text) {
    for (std::size_t i = 0; i < table.num_images; ++i) {
      auto score = [&](std::size_t j) { return table.at(i, j); };
      hits += best_rank(table.num_texts, score, table.img2txt[i]) < k;
    }
    return 100.0 * static_cast<double>(hits) / static_cast<double>(table.num_images);
  }
  for (std::size_t j = 0; j < table.num_texts; ++j) {
    auto score = [&](std::size_t i) { return table.at(i, j); };
    hits += best_rank(table.num_images, score, std::vector<std::size_t>{table.txt2img[j]}) < k;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(table.num_texts);
}

double mean_recall(const RecallReport& r) {
  return (r.i2t_r1 + r.i2t_r5 + r.i2t_r10 + r.t2i_r1 + r.t2i_r5 + r.t2i_r10) / 6.0;
}

RecallReport evaluate(const RetrievalTable& table) {
  table.validate();
  auto r = [&](std::size_t k, Direction d) {
    const std::size_t n = d == Direction::image_to_text ? table.num_texts : table.num_images;
    return recall_at_k(table, std::min(k, n), d);
  };
  RecallReport rep;
  rep.i2t_r1 = r(1, Direction::image_to_text);
  rep.i2t_r5 = r(5, Direction::image_to_text);
  rep.i2t_r10 = r(10, Direction::image_to_text);
  rep.t2i_r1 = r(1, Direction::text_to_image);
  rep.t2i_r5 = r(5, Direction::text_to_image);
  rep.t2i_r10 = r(10, Direction::text_to_image);
  rep.mr = mean_recall(rep);
  return rep;
}

}  // namespace priorclip
