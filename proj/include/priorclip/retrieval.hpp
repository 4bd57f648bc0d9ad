#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "priorclip/tensor.hpp"

namespace priorclip {

struct RetrievalTable {
  std::size_t num_images = 0;
  std::size_t num_texts = 0;
  std::vector<double> sim;                          // num_images x num_texts, row-major
  std::vector<std::vector<std::size_t>> img2txt;    // ground-truth captions per image
  std::vector<std::size_t> txt2img;                 // ground-truth image per caption

  double at(std::size_t i, std::size_t j) const { return sim[i * num_texts + j]; }
  /// Throws InputError when the maps are inconsistent or sim is non-finite.
  void validate() const;
};

struct RecallReport {
  double i2t_r1 = 0, i2t_r5 = 0, i2t_r10 = 0;
  double t2i_r1 = 0, t2i_r5 = 0, t2i_r10 = 0;
  double mr = 0;

  /// Flat JSON with keys i2t_r1 .. t2i_r10, mr.
  std::string to_json() const;
  static RecallReport from_json(const std::string& text);
};

enum class Direction { image_to_text, text_to_image };

/// Cosine similarities between rows of V (N_img x d) and T (N_txt x d).
std::vector<double> similarity_matrix(const Tensor& image, const Tensor& text);

/// Builds a table from embeddings and the caption -> image map.
RetrievalTable make_retrieval_table(const Tensor& image, const Tensor& text, std::vector<std::size_t> txt2img);

/// Percentage of queries whose top-K candidates (descending similarity, lower
/// index first on ties) contain a ground-truth match. Throws ConfigError when
/// K is 0 or exceeds the number of candidates.
double recall_at_k(const RetrievalTable& table, std::size_t k, Direction direction);

/// Mean of the six recall values.
double mean_recall(const RecallReport& report);

/// R@{1,5,10} in both directions plus mR. K values larger than the candidate
/// count are clamped to it.
RecallReport evaluate(const RetrievalTable& table);

}  // namespace priorclip
