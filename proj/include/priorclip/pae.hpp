#pragma once

#include <string>
#include <utility>
#include <vector>

#include "priorclip/layers.hpp"

namespace priorclip {

struct PaelOutput {
  Sequences self_out;   // H_S after self-attention + FFN
  Sequences cross_out;  // H_C after cross-attending to the refined H_S
};

/// Progressive attention encoder layer. The self branch refines H_S first;
/// the cross branch then uses H_C as queries over the refined H_S.
class Pael {
 public:
  Pael() = default;
  Pael(ParameterStore& store, const std::string& name, std::size_t width, std::size_t heads, std::size_t hidden);

  PaelOutput operator()(const Sequences& self_in, const Sequences& cross_in, const ForwardContext& ctx = {}) const;
  /// Single-sample convenience: H_S (N x d), H_C (N' x d).
  std::pair<Tensor, Tensor> operator()(const Tensor& self_in, const Tensor& cross_in) const;

  TransformerBlock self_branch;
  CrossAttentionBlock cross_branch;
};

/// Instruction-guided stack over the refined visual tokens:
///   F^i = PAEL(F^{i-1}, W_s^i F_ins).cross_out,  f_loc = Head(F^{n_v}[0]).
class SpatialPae {
 public:
  SpatialPae() = default;
  SpatialPae(ParameterStore& store, const std::string& name, std::size_t width, std::size_t heads,
             std::size_t hidden, std::size_t layers);

  /// refined: batch sequences of k tokens; f_ins: batch x d. Returns batch x d.
  Tensor operator()(const Sequences& refined, const Tensor& f_ins, const ForwardContext& ctx = {}) const;
  /// refined: k x d, f_ins: 1 x d or d. Returns 1 x d.
  Tensor operator()(const Tensor& refined, const Tensor& f_ins) const;

  std::size_t layers() const { return units.size(); }

  std::vector<Pael> units;
  std::vector<Linear> projections;
  Linear head;
};

/// Self-activated stack over the text sequence [t_cls, F_t]:
///   F^i = PAEL(F^{i-1}, W_t^i F^{i-1}).cross_out,  t_loc = Head(F^{n_t}[0]).
class TemporalPae {
 public:
  TemporalPae() = default;
  TemporalPae(ParameterStore& store, const std::string& name, std::size_t width, std::size_t heads,
              std::size_t hidden, std::size_t layers);

  Tensor operator()(const Sequences& text, const ForwardContext& ctx = {}) const;
  /// t_cls: 1 x d, tokens: n x d (n may be 0 when `tokens` is undefined).
  Tensor operator()(const Tensor& t_cls, const Tensor& tokens) const;

  std::size_t layers() const { return units.size(); }

  std::vector<Pael> units;
  std::vector<Linear> projections;
  Linear head;
};

/// v_emb = f_cls + f_loc.
Tensor compose_vision_embedding(const Tensor& f_cls, const Tensor& f_loc);
/// t_emb = t_cls + t_loc.
Tensor compose_text_embedding(const Tensor& t_cls, const Tensor& t_loc);

}  // namespace priorclip
