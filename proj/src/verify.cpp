#include "priorclip/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>

#include "priorclip/belief.hpp"
#include "priorclip/checkpoint.hpp"
#include "priorclip/data.hpp"
#include "priorclip/errors.hpp"
#include "priorclip/grad_check.hpp"
#include "priorclip/losses.hpp"
#include "priorclip/ops.hpp"
#include "priorclip/pae.hpp"
#include "priorclip/pipeline.hpp"
#include "priorclip/retrieval.hpp"

namespace priorclip {

VerifySuite verify_suite_from_string(const std::string& name) {
  if (name == "gradients") return VerifySuite::gradients;
  if (name == "oracles") return VerifySuite::oracles;
  if (name == "invariants") return VerifySuite::invariants;
  if (name == "all") return VerifySuite::all;
  throw ConfigError("unknown verify suite '" + name + "'");
}

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

Tensor random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = scale * rng.normal();
  return Tensor({rows, cols}, std::move(v));
}

std::size_t between(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
}

// sum(out * w): a readout that gives every output coordinate its own weight.
Tensor readout(const Tensor& out, const Tensor& w) { return ops::sum(ops::mul(out, w)); }

}  // namespace

std::vector<std::string> gradient_targets() {
  return {"contrastive_loss", "affiliation_loss", "pael", "spatial_pae", "temporal_pae", "soft_reweight"};
}

CheckResult check_gradients(const std::string& target, const VerifyOptions& options) {
  constexpr double kLimit = 1e-4;
  constexpr std::size_t d = 4;
  double worst = 0.0;
  std::size_t worst_seed = 0;
  for (std::size_t s = 0; s < options.seeds; ++s) {
    Rng rng(mix_seed(mix_seed(options.base_seed, target), s));
    ParameterStore store(rng.next_u64());
    double err = 0.0;
    if (target == "contrastive_loss") {
      const std::size_t b = between(rng, 2, 6);
      err = grad_check([](const std::vector<Tensor>& x) { return contrastive_loss(x[0], x[1], 0.07); },
                       {random_matrix(rng, b, d), random_matrix(rng, b, d)});
    } else if (target == "affiliation_loss") {
      const std::size_t b = between(rng, 2, 8);
      std::size_t c = between(rng, 1, 3);
      std::vector<std::size_t> labels(b);
      for (auto& l : labels) l = rng.below(c);
      // A single-class batch makes the loss constant (log B); keep two classes.
      if (std::all_of(labels.begin(), labels.end(), [&](std::size_t l) { return l == labels[0]; })) {
        labels[0] = (labels[1] + 1) % 2;
        c = std::max<std::size_t>(c, 2);
      }
      err = grad_check(
          [&](const std::vector<Tensor>& x) { return affiliation_loss(x[0], x[1], labels, c, 1.0 / 0.07); },
          {random_matrix(rng, b, d), random_matrix(rng, b, d)});
    } else if (target == "pael") {
      Pael layer(store, "pael", d, 2, 2 * d);
      const std::size_t n = between(rng, 1, 4), nc = between(rng, 1, 4);
      Tensor w_self = random_matrix(rng, n, d), w_cross = random_matrix(rng, nc, d);
      err = grad_check(
          [&](const std::vector<Tensor>& x) {
            auto [hs, hc] = layer(x[0], x[1]);
            return ops::add(readout(hs, w_self), readout(hc, w_cross));
          },
          {random_matrix(rng, n, d), random_matrix(rng, nc, d)});
    } else if (target == "spatial_pae") {
      SpatialPae spae(store, "spatial", d, 2, 2 * d, 2);
      const std::size_t k = between(rng, 1, 5);
      Tensor w = random_matrix(rng, 1, d);
      err = grad_check([&](const std::vector<Tensor>& x) { return readout(spae(x[0], x[1]), w); },
                       {random_matrix(rng, k, d), random_matrix(rng, 1, d)});
    } else if (target == "temporal_pae") {
      TemporalPae tpae(store, "temporal", d, 2, 2 * d, 3);
      const std::size_t n = between(rng, 1, 5);
      Tensor w = random_matrix(rng, 1, d);
      err = grad_check([&](const std::vector<Tensor>& x) { return readout(tpae(x[0], x[1]), w); },
                       {random_matrix(rng, 1, d), random_matrix(rng, n, d)});
    } else if (target == "soft_reweight") {
      const std::size_t len = between(rng, 2, 8);
      const RefineMode mode = s % 2 == 0 ? RefineMode::soft_sequence : RefineMode::soft_aggregate;
      Tensor w = random_matrix(rng, mode == RefineMode::soft_sequence ? len : 1, d);
      err = grad_check(
          [&](const std::vector<Tensor>& x) {
            BeliefMatrix m = belief_matrix(x[1], x[0]);
            return readout(soft_reweight(x[0], m, mode).tokens, w);
          },
          {random_matrix(rng, len, d), random_matrix(rng, 1, d)});
    } else {
      throw ConfigError("unknown gradient target '" + target + "'");
    }
    if (err > worst) {
      worst = err;
      worst_seed = s;
    }
  }
  CheckResult r;
  r.name = "grad_check " + target;
  r.value = worst;
  r.limit = kLimit;
  r.passed = worst < kLimit;
  r.detail = "max rel err " + num(worst) + " over " + std::to_string(options.seeds) + " seeds (worst case #" +
             std::to_string(worst_seed) + ")";
  return r;
}

namespace {

std::vector<double> random_beliefs(Rng& rng, std::size_t len, bool tie_heavy) {
  std::vector<double> b(len);
  for (auto& x : b) x = tie_heavy ? 0.25 * static_cast<double>(rng.below(3)) : rng.uniform();
  return b;
}

}  // namespace

CheckResult check_rank_oracle(std::size_t cases, std::uint64_t seed) {
  Rng rng(mix_seed(seed, "rank-oracle"));
  std::size_t mismatches = 0;
  for (std::size_t c = 0; c < cases; ++c) {
    auto b = random_beliefs(rng, between(rng, 1, 24), c % 2 == 0);
    RankVector got = ranks(b);
    for (std::size_t j = 0; j < b.size(); ++j) {
      std::size_t expect = 1;
      for (std::size_t k = 0; k < b.size(); ++k) expect += b[k] < b[j];
      if (got[j] != expect) {
        ++mismatches;
        break;
      }
    }
  }
  return {"rank oracle", mismatches == 0,
          std::to_string(cases - mismatches) + "/" + std::to_string(cases) + " vectors match (half tie-heavy)",
          static_cast<double>(mismatches), 0.0};
}

CheckResult check_hard_filter_oracle(std::size_t cases, std::uint64_t seed) {
  Rng rng(mix_seed(seed, "hard-filter-oracle"));
  std::size_t mismatches = 0;
  for (std::size_t c = 0; c < cases; ++c) {
    const std::size_t len = between(rng, 1, 20);
    const std::size_t k = between(rng, 1, len);
    auto b = random_beliefs(rng, len, c % 2 == 0);
    Tensor tokens = random_matrix(rng, len, 3);
    RefinedFeatures r = hard_filter(tokens, BeliefMatrix{Tensor({1, len}, b)}, k);

    std::vector<std::size_t> order(len);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return b[x] > b[y] || (b[x] == b[y] && x < y); });
    order.resize(k);

    std::vector<double> kept, best;
    for (auto i : r.kept_indices) kept.push_back(b[i]);
    for (auto i : order) best.push_back(b[i]);
    std::vector<double> kept_sorted = kept, best_sorted = best;
    std::sort(kept_sorted.begin(), kept_sorted.end());
    std::sort(best_sorted.begin(), best_sorted.end());
    bool ok = kept_sorted == best_sorted && r.kept_indices == order && r.tokens.rows() == k;
    for (std::size_t i = 0; ok && i < k; ++i) {
      for (std::size_t col = 0; col < 3; ++col) ok = ok && r.tokens.at(i, col) == tokens.at(order[i], col);
    }
    mismatches += !ok;
  }
  return {"hard-filter oracle", mismatches == 0,
          std::to_string(cases - mismatches) + "/" + std::to_string(cases) +
              " cases: k largest kept, ties to lower index, rows copied",
          static_cast<double>(mismatches), 0.0};
}

namespace {

std::vector<std::vector<double>> normalized_rows(const Tensor& x) {
  std::vector<std::vector<double>> out(x.rows(), std::vector<double>(x.cols()));
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double n = 0;
    for (std::size_t j = 0; j < x.cols(); ++j) n += x.at(i, j) * x.at(i, j);
    n = std::sqrt(n);
    for (std::size_t j = 0; j < x.cols(); ++j) out[i][j] = x.at(i, j) / n;
  }
  return out;
}

// Per-class means computed with explicit loops, then the two row-wise
// cross-entropies of the class-center logits.
double affiliation_loop(const Tensor& image, const Tensor& text, const std::vector<std::size_t>& labels,
                        std::size_t classes, double scale, double eps) {
  const auto v = normalized_rows(image), t = normalized_rows(text);
  const std::size_t b = v.size(), d = v[0].size();
  std::vector<std::vector<double>> vc(classes, std::vector<double>(d, 0.0)), tc = vc;
  std::vector<double> count(classes, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    count[labels[i]] += 1.0;
    for (std::size_t k = 0; k < d; ++k) {
      vc[labels[i]][k] += v[i][k];
      tc[labels[i]][k] += t[i][k];
    }
  }
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t k = 0; k < d; ++k) {
      vc[c][k] /= count[c] + eps;
      tc[c][k] /= count[c] + eps;
    }
  }
  auto ce = [&](const std::vector<std::vector<double>>& q, const std::vector<std::vector<double>>& centers) {
    double total = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
      std::vector<double> z(b);
      for (std::size_t j = 0; j < b; ++j) {
        double dot = 0;
        for (std::size_t k = 0; k < d; ++k) dot += q[i][k] * centers[labels[j]][k];
        z[j] = scale * dot;
      }
      const double mx = *std::max_element(z.begin(), z.end());
      double se = 0;
      for (double x : z) se += std::exp(x - mx);
      total += -(z[i] - mx - std::log(se));
    }
    return total / static_cast<double>(b);
  };
  return 0.5 * (ce(v, tc) + ce(t, vc));
}

}  // namespace

CheckResult check_affiliation_oracle(std::size_t batches, std::uint64_t seed) {
  constexpr double kLimit = 1e-8;
  Rng rng(mix_seed(seed, "affiliation-oracle"));
  double worst = 0.0;
  for (std::size_t n = 0; n < batches; ++n) {
    const std::size_t b = between(rng, 1, 16), c = between(rng, 1, 5), d = between(rng, 2, 8);
    std::vector<std::size_t> labels(b);
    for (auto& l : labels) l = rng.below(c);
    Tensor v = random_matrix(rng, b, d), t = random_matrix(rng, b, d);
    const double scale = std::exp(rng.uniform(-1.0, 3.0));
    const double got = affiliation_loss(v, t, labels, c, scale, 1e-12).item();
    worst = std::max(worst, std::abs(got - affiliation_loop(v, t, labels, c, scale, 1e-12)));
  }
  return {"affiliation-loss oracle", worst < kLimit,
          "max |matrix - loop| " + num(worst) + " over " + std::to_string(batches) + " batches (B<=16, C<=5)", worst,
          kLimit};
}

CheckResult check_unique_label_reduction(std::size_t batches, std::uint64_t seed) {
  constexpr double kLimit = 1e-6;
  constexpr double tau = 0.07;
  Rng rng(mix_seed(seed, "unique-label"));
  double worst = 0.0;
  for (std::size_t n = 0; n < batches; ++n) {
    const std::size_t b = between(rng, 1, 12), c = between(rng, b, b + 4), d = between(rng, 2, 8);
    std::vector<std::size_t> all(c);
    std::iota(all.begin(), all.end(), 0);
    rng.shuffle(std::span<std::size_t>(all));
    std::vector<std::size_t> labels(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(b));
    Tensor v = random_matrix(rng, b, d), t = random_matrix(rng, b, d);
    const double la = affiliation_loss(v, t, labels, c, 1.0 / tau, 1e-12).item();
    const double lc = contrastive_loss(v, t, tau).item();
    worst = std::max(worst, std::abs(la - 0.5 * lc));
  }
  return {"unique-label reduction", worst < kLimit,
          "max |L_a - L_c/2| " + num(worst) + " over " + std::to_string(batches) + " batches", worst, kLimit};
}

CheckResult check_published_mean_recall() {
  RecallReport r;
  r.i2t_r1 = 18.36;
  r.i2t_r5 = 42.04;
  r.i2t_r10 = 55.53;
  r.t2i_r1 = 13.36;
  r.t2i_r5 = 44.47;
  r.t2i_r10 = 61.73;
  const double mr = mean_recall(r);
  const double delta = std::abs(mr - 39.25);
  return {"published mean recall", delta <= 0.005,
          "mean(18.36, 42.04, 55.53, 13.36, 44.47, 61.73) = " + std::to_string(mr) + " vs 39.25", delta, 0.005};
}

CheckResult check_recall_oracle(std::size_t tables, std::uint64_t seed) {
  Rng rng(mix_seed(seed, "recall-oracle"));
  std::size_t mismatches = 0;
  for (std::size_t n = 0; n < tables; ++n) {
    RetrievalTable t;
    t.num_images = between(rng, 1, 12);
    t.img2txt.assign(t.num_images, {});
    for (std::size_t i = 0; i < t.num_images; ++i) {
      const std::size_t caps = between(rng, 1, 3);
      for (std::size_t c = 0; c < caps; ++c) {
        t.img2txt[i].push_back(t.txt2img.size());
        t.txt2img.push_back(i);
      }
    }
    t.num_texts = t.txt2img.size();
    const bool ties = n % 2 == 0;
    for (std::size_t k = 0; k < t.num_images * t.num_texts; ++k) {
      t.sim.push_back(ties ? 0.5 * static_cast<double>(rng.below(3)) - 0.5 : rng.uniform(-1.0, 1.0));
    }
    // Exhaustive: fully sort each query's candidates, find the first hit.
    auto first_hit = [](std::vector<std::pair<double, std::size_t>> scored, auto is_truth) {
      std::sort(scored.begin(), scored.end(),
                [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
      for (std::size_t p = 0; p < scored.size(); ++p) {
        if (is_truth(scored[p].second)) return p;
      }
      return scored.size();
    };
    std::vector<std::size_t> i2t_pos, t2i_pos;
    for (std::size_t i = 0; i < t.num_images; ++i) {
      std::vector<std::pair<double, std::size_t>> s;
      for (std::size_t j = 0; j < t.num_texts; ++j) s.emplace_back(t.at(i, j), j);
      i2t_pos.push_back(first_hit(s, [&](std::size_t j) { return t.txt2img[j] == i; }));
    }
    for (std::size_t j = 0; j < t.num_texts; ++j) {
      std::vector<std::pair<double, std::size_t>> s;
      for (std::size_t i = 0; i < t.num_images; ++i) s.emplace_back(t.at(i, j), i);
      t2i_pos.push_back(first_hit(s, [&](std::size_t i) { return t.txt2img[j] == i; }));
    }
    bool ok = true;
    auto pct = [](const std::vector<std::size_t>& pos, std::size_t k) {
      std::size_t hits = 0;
      for (auto p : pos) hits += p < k;
      return 100.0 * static_cast<double>(hits) / static_cast<double>(pos.size());
    };
    for (std::size_t k = 1; k <= t.num_texts; ++k) ok = ok && recall_at_k(t, k, Direction::image_to_text) == pct(i2t_pos, k);
    for (std::size_t k = 1; k <= t.num_images; ++k) ok = ok && recall_at_k(t, k, Direction::text_to_image) == pct(t2i_pos, k);
    mismatches += !ok;
  }
  return {"recall@K oracle", mismatches == 0,
          std::to_string(tables - mismatches) + "/" + std::to_string(tables) + " random tables match the exhaustive sort",
          static_cast<double>(mismatches), 0.0};
}

namespace {

CorpusSpec small_spec(std::uint64_t seed) {
  CorpusSpec s;
  s.num_classes = 4;
  s.images_per_class = 6;
  s.seed = seed;
  return s;
}

CheckResult dataset_round_trip(const std::filesystem::path& dir) {
  Dataset ds = generate_corpus(small_spec(3));
  write_dataset(ds, dir / "a.jsonl");
  write_dataset(generate_corpus(small_spec(3)), dir / "b.jsonl");
  Dataset back = load_dataset(dir / "a.jsonl");
  const bool same_records = back.records == ds.records;
  const bool same_bytes = file_checksum(dir / "a.jsonl") == file_checksum(dir / "b.jsonl");
  return {"dataset round trip + determinism", same_records && same_bytes,
          std::string("load(write(x)) ") + (same_records ? "==" : "!=") + " x; same-seed files " +
              (same_bytes ? "identical" : "differ"),
          0.0, 0.0};
}

CheckResult epoch_coverage() {
  bool ok = true;
  for (std::size_t n : {1u, 7u, 32u, 33u}) {
    for (std::size_t bs : {1u, 5u, 32u}) {
      BatchIterator it(n, bs, 11);
      for (std::size_t epoch = 0; epoch < 3; ++epoch) {
        std::vector<std::size_t> seen(n, 0);
        for (std::size_t b = 0; b < it.batches_per_epoch(); ++b) {
          for (auto i : it.next()) ++seen[i];
        }
        ok = ok && std::all_of(seen.begin(), seen.end(), [](std::size_t c) { return c == 1; });
      }
    }
  }
  return {"epoch coverage", ok, "every record exactly once per epoch, partial last batch included", 0.0, 0.0};
}

CheckResult class_signal() {
  CorpusSpec spec;
  spec.seed = 101;
  Dataset train = generate_corpus(spec);
  spec.seed = 202;
  spec.images_per_class = 10;
  Dataset test = generate_corpus(spec);
  const std::size_t c = spec.num_classes, dim = train.records[0].pixels.size();
  std::vector<std::vector<double>> centroid(c, std::vector<double>(dim, 0.0));
  std::vector<double> count(c, 0.0);
  for (const auto& r : train.records) {
    count[r.scene_label] += 1;
    for (std::size_t k = 0; k < dim; ++k) centroid[r.scene_label][k] += r.pixels[k];
  }
  for (std::size_t l = 0; l < c; ++l) {
    for (auto& x : centroid[l]) x /= count[l];
  }
  std::size_t correct = 0;
  for (const auto& r : test.records) {
    std::size_t best = 0;
    double best_d = INFINITY;
    for (std::size_t l = 0; l < c; ++l) {
      double dd = 0;
      for (std::size_t k = 0; k < dim; ++k) dd += (r.pixels[k] - centroid[l][k]) * (r.pixels[k] - centroid[l][k]);
      if (dd < best_d) {
        best_d = dd;
        best = l;
      }
    }
    correct += best == r.scene_label;
  }
  const double acc = 100.0 * static_cast<double>(correct) / static_cast<double>(test.records.size());
  return {"class signal", acc >= 95.0, "nearest-centroid accuracy on raw pixels " + num(acc) + "% (noise 0)", acc, 95.0};
}

CheckResult softmax_laws(std::uint64_t seed) {
  Rng rng(mix_seed(seed, "softmax-laws"));
  double worst_sum = 0.0;
  bool equivariant = true;
  for (int n = 0; n < 100; ++n) {
    const std::size_t len = between(rng, 1, 12);
    Tensor x = random_matrix(rng, 1, len, 3.0);
    auto p = ops::softmax(x, 1).to_vector();
    worst_sum = std::max(worst_sum, std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0));
    std::vector<std::size_t> perm(len);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(std::span<std::size_t>(perm));
    std::vector<double> xp(len);
    for (std::size_t i = 0; i < len; ++i) xp[i] = x.at(0, perm[i]);
    auto pp = ops::softmax(Tensor({1, len}, xp), 1).to_vector();
    for (std::size_t i = 0; i < len; ++i) equivariant = equivariant && std::abs(pp[i] - p[perm[i]]) <= 1e-15;
  }
  return {"softmax laws", worst_sum < 1e-6 && equivariant,
          "max |sum - 1| " + num(worst_sum) + ", permutation-equivariant: " + (equivariant ? "yes" : "no"), worst_sum,
          1e-6};
}

TrainConfig tiny_train_config() {
  TrainConfig c;
  c.data.train = "(memory)";
  c.model.encoder.embed_dim = 8;
  c.model.encoder.hidden_dim = 8;
  c.model.encoder.blocks = 1;
  c.model.spatial_layers = 1;
  c.model.temporal_layers = 1;
  c.optim.batch_size = 8;
  c.optim.learning_rate = 0.05;
  return c;
}

CheckResult checkpoint_resume(const std::filesystem::path& dir) {
  TrainData data{generate_corpus(small_spec(5)), std::nullopt, std::nullopt};
  TrainConfig full = tiny_train_config();
  full.optim.steps = 20;
  TrainResult straight = train_model(full, data);

  TrainConfig half = full;
  half.optim.steps = 10;
  TrainResult first = train_model(half, data);
  save_checkpoint(first.last, dir / "resume.bin");
  Checkpoint loaded = load_checkpoint(dir / "resume.bin");
  TrainResult resumed = train_model(full, data, nullptr, &loaded);

  bool same = straight.last.params.size() == resumed.last.params.size();
  for (std::size_t i = 0; same && i < straight.last.params.size(); ++i) {
    same = straight.last.params[i].values == resumed.last.params[i].values;
  }
  for (std::size_t i = 0; same && i < 10; ++i) same = straight.history[10 + i].loss == resumed.history[i].loss;
  return {"checkpoint resume", same, "save at step 10, reload, train to 20: parameters and losses bit-identical",
          0.0, 0.0};
}

CheckResult ablation_flags() {
  Dataset ds = generate_corpus(small_spec(1));
  const DataShape shape = DataShape::of(ds);
  bool ok = true;
  std::string seen;
  for (int mask = 0; mask < 8; ++mask) {
    TrainConfig c = tiny_train_config();
    c.model.spatial_pae = mask & 1;
    c.model.temporal_pae = mask & 2;
    c.loss.lambda_cs = (mask & 4) ? 1.0 : 0.0;
    PriorClipModel model(c.model, c.loss, shape, 0);
    ActiveModules a = model.active();
    ok = ok && a.spatial_pae == bool(mask & 1) && a.temporal_pae == bool(mask & 2) && a.affiliation_loss == bool(mask & 4);
  }
  return {"ablation flags", ok, "8 spatial/temporal/affiliation combinations map to the expected active modules", 0.0,
          0.0};
}

}  // namespace

std::vector<CheckResult> check_invariants(const VerifyOptions& options) {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("priorclip-verify-" + std::to_string(mix_seed(options.base_seed, "dir") % 1000000));
  std::filesystem::create_directories(dir);
  std::vector<CheckResult> out;
  out.push_back(dataset_round_trip(dir));
  out.push_back(epoch_coverage());
  out.push_back(class_signal());
  out.push_back(softmax_laws(options.base_seed));
  out.push_back(checkpoint_resume(dir));
  out.push_back(ablation_flags());
  std::error_code ec;
  std::filesystem::remove_all(dir, ec);
  return out;
}

std::vector<CheckResult> run_verification(VerifySuite suite, const VerifyOptions& options) {
  std::vector<CheckResult> out;
  const bool all = suite == VerifySuite::all;
  if (all || suite == VerifySuite::gradients) {
    for (const auto& t : gradient_targets()) out.push_back(check_gradients(t, options));
  }
  if (all || suite == VerifySuite::oracles) {
    out.push_back(check_rank_oracle(1000, options.base_seed));
    out.push_back(check_hard_filter_oracle(1000, options.base_seed));
    out.push_back(check_affiliation_oracle(200, options.base_seed));
    out.push_back(check_unique_label_reduction(100, options.base_seed));
    out.push_back(check_published_mean_recall());
    out.push_back(check_recall_oracle(500, options.base_seed));
  }
  if (all || suite == VerifySuite::invariants) {
    auto inv = check_invariants(options);
    out.insert(out.end(), inv.begin(), inv.end());
  }
  return out;
}

}  // namespace priorclip
