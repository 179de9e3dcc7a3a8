#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "tinyguard/detector.hpp"
#include "tinyguard/update.hpp"

namespace tinyguard {

enum class AttackKind {
  none,
  random_noise,
  sign_flip,
  scaling,
  label_flip,
  adaptive_pgd,
};

std::string to_string(AttackKind kind);
AttackKind attack_kind_from_string(const std::string& name);

struct AdaptivePgdParams {
  double lambda_s = 1.0;   // stealth weight (fingerprint term), >= 0
  double lambda_a = 1.0;   // alignment weight (cosine term), > 0
  int steps = 200;
  double step_size = 0.0;  // 0: auto 0.05 * ||g_honest||
  double decay = 0.99;     // geometric step decay
  int subsample = 256;     // coordinates per finite-difference step

  bool operator==(const AdaptivePgdParams&) const = default;
};

struct AttackChoice {
  AttackKind kind = AttackKind::none;
  double noise_sigma = 1.0;   // random_noise
  double flip_scale = 1.0;    // sign_flip alpha
  double scale_factor = 5.0;  // scaling beta
  AdaptivePgdParams pgd;

  bool operator==(const AttackChoice&) const = default;
};

struct AdaptiveAttackResult {
  GradientUpdate adversarial;
  double fingerprint_mse = 0.0;    // mean squared feature gap, standardized space
  double attack_alignment = 0.0;   // cosine to the poison direction
};

/// i.i.d. N(0, sigma^2) vector of the template's dimension.
GradientUpdate random_noise_attack(const GradientUpdate& tmpl, double sigma,
                                   std::uint64_t seed);

/// g* = -alpha * g.
GradientUpdate sign_flip_attack(const GradientUpdate& honest, double alpha);

/// g* = beta * g.
GradientUpdate scaling_attack(const GradientUpdate& honest, double beta);

/// White-box projected gradient descent on
///   lambda_s * ||phi(g) - phi(g_honest)||^2 - lambda_a * CosSim(g, v_poison)
/// subject to ||g||_2 = ||g_honest||_2. The fingerprint term lives in the
/// standardized feature space given by `scaler` (fitted on the honest
/// population); its gradient is estimated by central differences over a
/// random coordinate subsample, re-drawn every step. The cosine term has an
/// analytic gradient. Every iterate is projected back onto the sphere.
AdaptiveAttackResult adaptive_pgd_attack(const GradientUpdate& honest_ref,
                                         const GradientUpdate& poison_dir,
                                         const AdaptivePgdParams& params,
                                         const FeatureScaler& scaler,
                                         const FingerprintOptions& fopts,
                                         std::uint64_t seed);

/// Dispatch: honest clients pass through untouched; Byzantine submissions are
/// replaced per the chosen attack. label_flip is a data-level attack and is a
/// no-op here; adaptive_pgd derives its reference, scaler, and poison
/// direction (negated honest mean) from the non-Byzantine updates.
std::vector<GradientUpdate> apply_attack(const std::vector<GradientUpdate>& gradients,
                                         const AttackChoice& choice,
                                         const std::set<int>& byzantine_ids,
                                         std::uint64_t round_seed,
                                         const FingerprintOptions& fopts = {});

}  // namespace tinyguard
