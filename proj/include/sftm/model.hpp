#pragma once

// Closed-form mathematics of the stochastic forest-transition model:
// recovery rate p(x), forest value q(x), discounted utilities, net expected
// gain G(x), deforestation rate r(x) and the drift/diffusion fields of
//
//   dx = [p(x) z - r(x) x] dt + s1 x z dW
//   dy = [r(x) x - eta y] dt + s2 y z dW,      z = 1 - x - y.

#include <array>
#include <string>
#include <string_view>
#include <vector>

namespace sftm {

enum class Hypothesis { FSH, ESH };

std::string_view to_string(Hypothesis h);
/// Accepts "fsh"/"esh" in any letter case; throws ConfigError otherwise.
Hypothesis parse_hypothesis(std::string_view text);

struct ModelParams {
  double mu = 0.0;      // base recovery rate
  double h = 0.0;       // recovery coefficient
  double eta = 0.0;     // abandonment rate
  double beta = 0.0;    // decision sharpness
  double delta = 0.0;   // base forest return
  double lambda = 0.0;  // forest value slope
  double gamma = 0.0;   // discount factor
  double alpha = 0.0;   // agricultural utility
  Hypothesis hypothesis = Hypothesis::FSH;

  static constexpr std::size_t kCount = 8;
  static constexpr std::array<std::string_view, kCount> kNames = {
      "mu", "h", "eta", "beta", "delta", "lambda", "gamma", "alpha"};

  std::array<double, kCount> to_array() const;
  static ModelParams from_array(const std::array<double, kCount>& values, Hypothesis hyp);

  /// Mutable access by name; throws ConfigError for unknown names.
  double& by_name(std::string_view name);
  double by_name(std::string_view name) const;

  bool operator==(const ModelParams&) const = default;
};

struct NoiseParams {
  double sigma1 = 0.0;
  double sigma2 = 0.0;
  bool operator==(const NoiseParams&) const = default;
};

/// Forest and agricultural proportions; abandoned land is the remainder.
struct LandState {
  double x = 0.0;
  double y = 0.0;

  double abandoned() const { return 1.0 - x - y; }
  /// Open triangle: x > 0, y > 0, x + y < 1.
  bool in_triangle() const { return x > 0.0 && y > 0.0 && x + y < 1.0; }
  /// Closed triangle shrunk by eps: x, y >= eps and x + y <= 1 - eps.
  bool in_closed_triangle(double eps) const {
    return x >= eps && y >= eps && x + y <= 1.0 - eps;
  }
  bool operator==(const LandState&) const = default;
};

struct Utilities {
  double forest = 0.0;       // V_F
  double agriculture = 0.0;  // V_A
  double abandoned = 0.0;    // V_E
};

struct ValidationResult {
  std::vector<std::string> violations;

  bool ok() const { return violations.empty(); }
  explicit operator bool() const { return ok(); }
  /// Violations joined with "; ".
  std::string message() const;
};

/// Checks every constraint on the eight model parameters and both noise
/// intensities; reports each violated constraint by name.
ValidationResult validate_params(const ModelParams& p, const NoiseParams& n);
/// Model-parameter constraints only (noise not checked).
ValidationResult validate_model_params(const ModelParams& p);

/// p(x) = mu + h x. Throws DomainError outside [0, 1].
double recovery_rate(const ModelParams& p, double x);
/// q(x): FSH delta + lambda (1 - x), ESH delta + lambda x. Throws DomainError outside [0, 1].
double forest_value(const ModelParams& p, double x);
/// Solves the three discounted-utility equations by substitution.
Utilities utilities(const ModelParams& p, double x);
/// Closed-form G(x) = V_A - V_F. x is clamped to [0, 1].
double net_gain(const ModelParams& p, double x);
/// Overflow-safe logistic 1 / (1 + exp(-t)).
double logistic(double t);
/// r(x) = logistic(beta G(x)). x is clamped to [0, 1].
double deforestation_rate(const ModelParams& p, double x);

struct Rates {
  double dx = 0.0;
  double dy = 0.0;
};

Rates drift(const ModelParams& p, const LandState& s);
/// Diffusion coefficients; both components share one Brownian driver.
Rates diffusion(const NoiseParams& n, const LandState& s);

/// Parameter set used for the sample-path and sensitivity figures:
/// mu=0.2 h=0.3 eta=0.7 beta=2 delta=0.7 lambda=1 gamma=0.5 alpha=2.
ModelParams preset_paper4(Hypothesis hyp);
NoiseParams preset_paper4_noise();
inline constexpr LandState kPaper4Initial{0.2, 0.3};

}  // namespace sftm
