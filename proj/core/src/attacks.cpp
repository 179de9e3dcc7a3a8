#include "tinyguard/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tinyguard/errors.hpp"
#include "tinyguard/rng.hpp"

namespace tinyguard {

std::string to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::none: return "none";
    case AttackKind::random_noise: return "random_noise";
    case AttackKind::sign_flip: return "sign_flip";
    case AttackKind::scaling: return "scaling";
    case AttackKind::label_flip: return "label_flip";
    case AttackKind::adaptive_pgd: return "adaptive_pgd";
  }
  return "none";
}

AttackKind attack_kind_from_string(const std::string& name) {
  if (name == "none") return AttackKind::none;
  if (name == "random_noise") return AttackKind::random_noise;
  if (name == "sign_flip") return AttackKind::sign_flip;
  if (name == "scaling") return AttackKind::scaling;
  if (name == "label_flip") return AttackKind::label_flip;
  if (name == "adaptive_pgd") return AttackKind::adaptive_pgd;
  throw ConfigError("unknown attack kind: " + name);
}

GradientUpdate random_noise_attack(const GradientUpdate& tmpl, double sigma,
                                   std::uint64_t seed) {
  if (!(sigma > 0.0)) throw ConfigError("noise sigma must be positive");
  check_consistent(tmpl);
  GradientUpdate out = tmpl;
  Rng rng(seed);
  for (auto& v : out.values) v = sigma * rng.normal();
  return out;
}

GradientUpdate sign_flip_attack(const GradientUpdate& honest, double alpha) {
  if (!(alpha > 0.0)) throw ConfigError("sign-flip scale must be positive");
  check_consistent(honest);
  GradientUpdate out = honest;
  for (auto& v : out.values) v = -alpha * v;
  return out;
}

GradientUpdate scaling_attack(const GradientUpdate& honest, double beta) {
  if (!(beta > 0.0)) throw ConfigError("scaling factor must be positive");
  check_consistent(honest);
  GradientUpdate out = honest;
  for (auto& v : out.values) v = beta * v;
  return out;
}

namespace {

void project_to_sphere(std::vector<double>& v, double radius) {
  const double norm = l2_norm(v);
  if (norm == 0.0) return;
  const double s = radius / norm;
  for (auto& x : v) x *= s;
}

// Sum of squared standardized feature gaps to the reference.
double fingerprint_gap(const GradientUpdate& g, const FeatureScaler& scaler,
                       const FingerprintOptions& fopts,
                       const std::vector<double>& ref_z) {
  const auto z = scaler.transform(extract_fingerprint(g, fopts));
  double acc = 0.0;
  for (std::size_t c = 0; c < z.size(); ++c) {
    const double diff = z[c] - ref_z[c];
    acc += diff * diff;
  }
  return acc;
}

}  // namespace

AdaptiveAttackResult adaptive_pgd_attack(const GradientUpdate& honest_ref,
                                         const GradientUpdate& poison_dir,
                                         const AdaptivePgdParams& params,
                                         const FeatureScaler& scaler,
                                         const FingerprintOptions& fopts,
                                         std::uint64_t seed) {
  check_consistent(honest_ref);
  check_consistent(poison_dir);
  if (honest_ref.values.size() != poison_dir.values.size()) {
    throw DimensionError("poison direction does not match the reference dimension");
  }
  if (!(params.lambda_s >= 0.0)) throw ConfigError("lambda_s must be non-negative");
  if (!(params.lambda_a > 0.0)) throw ConfigError("lambda_a must be positive");
  if (params.steps < 1) throw ConfigError("adaptive attack needs at least one step");
  if (params.subsample < 1) throw ConfigError("subsample must be positive");
  if (!(params.decay > 0.0) || params.decay > 1.0) {
    throw ConfigError("step decay must lie in (0, 1]");
  }
  const double poison_norm = l2_norm(poison_dir.values);
  if (poison_norm == 0.0) throw ConfigError("poison direction is zero");
  const double radius = l2_norm(honest_ref.values);
  if (radius == 0.0) throw ConfigError("honest reference is zero");

  const std::size_t d = honest_ref.values.size();
  const std::vector<double> ref_z =
      scaler.transform(extract_fingerprint(honest_ref, fopts));

  Rng rng(seed);
  GradientUpdate g = honest_ref;
  // Small symmetric kick so the iterate can leave saddle points (the poison
  // direction is typically antipodal to the reference).
  const double kick = 0.02 * radius / std::sqrt(static_cast<double>(d));
  for (auto& v : g.values) v += kick * rng.normal();
  project_to_sphere(g.values, radius);

  const double step0 = params.step_size > 0.0 ? params.step_size : 0.05 * radius;
  const std::size_t sub = std::min<std::size_t>(static_cast<std::size_t>(params.subsample), d);
  const double fd_h = 1e-4 * radius / std::sqrt(static_cast<double>(d));
  std::vector<double> grad(d);

  double lr = step0;
  for (int t = 0; t < params.steps; ++t) {
    std::fill(grad.begin(), grad.end(), 0.0);

    if (params.lambda_s > 0.0) {
      const auto coords = rng.sample_without_replacement(d, sub);
      // Unbiased subsampled estimate: scale the sparse gradient by d / |S|.
      const double scale =
          params.lambda_s * static_cast<double>(d) / static_cast<double>(sub);
      for (std::size_t j : coords) {
        const double orig = g.values[j];
        g.values[j] = orig + fd_h;
        const double fplus = fingerprint_gap(g, scaler, fopts, ref_z);
        g.values[j] = orig - fd_h;
        const double fminus = fingerprint_gap(g, scaler, fopts, ref_z);
        g.values[j] = orig;
        grad[j] += scale * (fplus - fminus) / (2.0 * fd_h);
      }
    }

    // Analytic cosine gradient: d/dg cos(g, v) = v/(|g||v|) - cos * g/|g|^2.
    const double gnorm = l2_norm(g.values);
    const double cosv = dot(g.values, poison_dir.values) / (gnorm * poison_norm);
    for (std::size_t j = 0; j < d; ++j) {
      const double dcos = poison_dir.values[j] / (gnorm * poison_norm) -
                          cosv * g.values[j] / (gnorm * gnorm);
      grad[j] -= params.lambda_a * dcos;
    }

    // Normalized-gradient step: the displacement is exactly lr, so the blend
    // of the two terms sets the direction and the decayed schedule sets the
    // progress, independent of the sphere radius and of lambda magnitudes.
    const double gnorm_total = l2_norm(grad);
    if (gnorm_total > 0.0) {
      const double scale_step = lr / gnorm_total;
      for (std::size_t j = 0; j < d; ++j) g.values[j] -= scale_step * grad[j];
      project_to_sphere(g.values, radius);
    }
    lr *= params.decay;
  }

  AdaptiveAttackResult res;
  const double gap = fingerprint_gap(g, scaler, fopts, ref_z);
  const std::size_t kept = scaler.kept_columns().size();
  res.fingerprint_mse = kept > 0 ? gap / static_cast<double>(kept) : 0.0;
  res.attack_alignment = cosine_similarity(g.values, poison_dir.values);
  res.adversarial = std::move(g);
  return res;
}

std::vector<GradientUpdate> apply_attack(const std::vector<GradientUpdate>& gradients,
                                         const AttackChoice& choice,
                                         const std::set<int>& byzantine_ids,
                                         std::uint64_t round_seed,
                                         const FingerprintOptions& fopts) {
  for (int id : byzantine_ids) {
    const bool known = std::any_of(gradients.begin(), gradients.end(),
                                   [&](const auto& g) { return g.client_id == id; });
    if (!known) {
      throw ConfigError("byzantine id " + std::to_string(id) +
                        " does not match any submitted update");
    }
  }

  std::vector<GradientUpdate> out = gradients;
  if (choice.kind == AttackKind::none || choice.kind == AttackKind::label_flip ||
      byzantine_ids.empty()) {
    return out;  // label flipping happens in the data pipeline
  }

  if (choice.kind == AttackKind::adaptive_pgd) {
    std::vector<std::size_t> honest;
    for (std::size_t i = 0; i < gradients.size(); ++i) {
      if (!byzantine_ids.count(gradients[i].client_id)) honest.push_back(i);
    }
    if (honest.empty()) {
      throw ConfigError("adaptive attack requires at least one honest update");
    }
    const GradientUpdate honest_mean = mean_update(gradients, honest);
    std::vector<Fingerprint> honest_fps;
    honest_fps.reserve(honest.size());
    for (std::size_t i : honest) {
      honest_fps.push_back(extract_fingerprint(gradients[i], fopts));
    }
    const FeatureScaler scaler = FeatureScaler::fit(honest_fps);
    GradientUpdate poison = honest_mean;
    for (auto& v : poison.values) v = -v;

    for (std::size_t i = 0; i < out.size(); ++i) {
      if (!byzantine_ids.count(out[i].client_id)) continue;
      const auto seed =
          derive_seed(round_seed, "pgd/" + std::to_string(out[i].client_id));
      auto res = adaptive_pgd_attack(honest_mean, poison, choice.pgd, scaler, fopts, seed);
      res.adversarial.client_id = out[i].client_id;
      res.adversarial.sample_count = out[i].sample_count;
      out[i] = std::move(res.adversarial);
    }
    return out;
  }

  for (auto& g : out) {
    if (!byzantine_ids.count(g.client_id)) continue;
    switch (choice.kind) {
      case AttackKind::random_noise:
        g = random_noise_attack(
            g, choice.noise_sigma,
            derive_seed(round_seed, "noise/" + std::to_string(g.client_id)));
        break;
      case AttackKind::sign_flip:
        g = sign_flip_attack(g, choice.flip_scale);
        break;
      case AttackKind::scaling:
        g = scaling_attack(g, choice.scale_factor);
        break;
      default:
        throw ConfigError("unhandled attack kind");
    }
  }
  return out;
}

}  // namespace tinyguard
