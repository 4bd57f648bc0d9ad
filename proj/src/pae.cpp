#include "priorclip/pae.hpp"

#include "priorclip/errors.hpp"

namespace priorclip {

namespace {

Tensor as_row(const Tensor& v) { return v.ndim() == 1 ? ops::reshape(v, {1, v.numel()}) : v; }

Sequences single(const Tensor& tokens) { return Sequences{tokens, 1, tokens.rows(), {}}; }

}  // namespace

Pael::Pael(ParameterStore& store, const std::string& name, std::size_t width, std::size_t heads, std::size_t hidden)
    : self_branch(store, name + ".self", width, heads, hidden),
      cross_branch(store, name + ".cross", width, heads, hidden) {}

PaelOutput Pael::operator()(const Sequences& self_in, const Sequences& cross_in, const ForwardContext& ctx) const {
  if (self_in.width() != cross_in.width()) {
    throw DimensionError("PAEL: widths differ (" + std::to_string(self_in.width()) + " vs " +
                         std::to_string(cross_in.width()) + ")");
  }
  Sequences refined = self_branch(self_in, ctx);
  Sequences crossed = cross_branch(cross_in, refined, ctx);
  return {refined, crossed};
}

std::pair<Tensor, Tensor> Pael::operator()(const Tensor& self_in, const Tensor& cross_in) const {
  if (self_in.ndim() != 2 || cross_in.ndim() != 2) throw DimensionError("PAEL: expected token matrices");
  auto out = (*this)(single(self_in), single(cross_in));
  return {out.self_out.tokens, out.cross_out.tokens};
}

SpatialPae::SpatialPae(ParameterStore& store, const std::string& name, std::size_t width, std::size_t heads,
                       std::size_t hidden, std::size_t layers) {
  if (layers == 0) throw ConfigError("spatial PAE: at least one layer required");
  for (std::size_t i = 0; i < layers; ++i) {
    units.emplace_back(store, name + ".unit" + std::to_string(i), width, heads, hidden);
    projections.emplace_back(store, name + ".proj" + std::to_string(i), width, width, false);
  }
  head = Linear(store, name + ".head", width, width);
}

Tensor SpatialPae::operator()(const Sequences& refined, const Tensor& f_ins, const ForwardContext& ctx) const {
  if (f_ins.ndim() != 2 || f_ins.rows() != refined.batch) throw DimensionError("spatial PAE: f_ins must be batch x d");
  if (f_ins.cols() != refined.width()) throw DimensionError("spatial PAE: f_ins width mismatch");
  // Replicate each sample's instruction k times.
  std::vector<std::size_t> rep(refined.batch * refined.length);
  for (std::size_t i = 0; i < rep.size(); ++i) rep[i] = i / refined.length;
  Sequences current = refined;
  for (std::size_t i = 0; i < units.size(); ++i) {
    Sequences guide{ops::gather_rows(projections[i](f_ins), rep), refined.batch, refined.length, refined.lengths};
    current = units[i](current, guide, ctx).cross_out;
  }
  return head(current.token(0));
}

Tensor SpatialPae::operator()(const Tensor& refined, const Tensor& f_ins) const {
  if (refined.ndim() != 2) throw DimensionError("spatial PAE: refined tokens must be a matrix");
  return (*this)(single(refined), as_row(f_ins));
}

TemporalPae::TemporalPae(ParameterStore& store, const std::string& name, std::size_t width, std::size_t heads,
                         std::size_t hidden, std::size_t layers) {
  if (layers == 0) throw ConfigError("temporal PAE: at least one layer required");
  for (std::size_t i = 0; i < layers; ++i) {
    units.emplace_back(store, name + ".unit" + std::to_string(i), width, heads, hidden);
    projections.emplace_back(store, name + ".proj" + std::to_string(i), width, width, false);
  }
  head = Linear(store, name + ".head", width, width);
}

Tensor TemporalPae::operator()(const Sequences& text, const ForwardContext& ctx) const {
  Sequences current = text;
  for (std::size_t i = 0; i < units.size(); ++i) {
    Sequences activation = current;
    activation.tokens = projections[i](current.tokens);
    current = units[i](current, activation, ctx).cross_out;
  }
  return head(current.token(0));
}

Tensor TemporalPae::operator()(const Tensor& t_cls, const Tensor& tokens) const {
  Tensor head_row = as_row(t_cls);
  Tensor seq = head_row;
  if (tokens.defined()) {
    std::vector<Tensor> parts{head_row, tokens};
    seq = ops::concat_rows(parts);
  }
  return (*this)(single(seq));
}

Tensor compose_vision_embedding(const Tensor& f_cls, const Tensor& f_loc) { return ops::add(f_cls, f_loc); }

Tensor compose_text_embedding(const Tensor& t_cls, const Tensor& t_loc) { return ops::add(t_cls, t_loc); }

}  // namespace priorclip
