#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace priorclip {

/// Outcome of one self-check. `value` is the measured quantity (error,
/// accuracy, ...) and `limit` the bound it was held to.
struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double value = 0.0;
  double limit = 0.0;
};

enum class VerifySuite { gradients, oracles, invariants, all };

VerifySuite verify_suite_from_string(const std::string& name);

struct VerifyOptions {
  std::size_t seeds = 100;   // random cases per gradient target
  std::uint64_t base_seed = 20240611;
};

/// Gradient targets: contrastive_loss, affiliation_loss, pael, spatial_pae,
/// temporal_pae, soft_reweight. Max relative error over `seeds` random cases
/// (inputs and readout weights redrawn per case) must stay below 1e-4.
std::vector<std::string> gradient_targets();
CheckResult check_gradients(const std::string& target, const VerifyOptions& options);

/// ranks() against a brute-force strict-less count; exact.
CheckResult check_rank_oracle(std::size_t cases, std::uint64_t seed);
/// hard_filter() against a full sort by (belief desc, index asc); exact.
CheckResult check_hard_filter_oracle(std::size_t cases, std::uint64_t seed);
/// Matrix-form affiliation loss against a per-class loop; |delta| < 1e-8.
CheckResult check_affiliation_oracle(std::size_t batches, std::uint64_t seed);
/// Distinct labels, eps = 1e-12, exp(t) = 1/tau: |L_a - L_c/2| < 1e-6.
CheckResult check_unique_label_reduction(std::size_t batches, std::uint64_t seed);
/// Mean of six published recalls reproduces the published mR within 0.005.
CheckResult check_published_mean_recall();
/// recall_at_k against an exhaustive sort on random tables (ties included).
CheckResult check_recall_oracle(std::size_t tables, std::uint64_t seed);

/// Fast structural properties: dataset round trip and determinism, epoch
/// coverage, class signal, softmax laws, checkpoint resume, ablation flags.
std::vector<CheckResult> check_invariants(const VerifyOptions& options);

std::vector<CheckResult> run_verification(VerifySuite suite, const VerifyOptions& options = {});

}  // namespace priorclip
