#include "sftm/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include "sftm/error.hpp"

namespace sftm {

std::string_view to_string(Hypothesis h) {
  return h == Hypothesis::FSH ? "fsh" : "esh";
}

Hypothesis parse_hypothesis(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "fsh") return Hypothesis::FSH;
  if (lower == "esh") return Hypothesis::ESH;
  throw ConfigError("unknown hypothesis '" + std::string(text) + "' (expected fsh or esh)");
}

std::array<double, ModelParams::kCount> ModelParams::to_array() const {
  return {mu, h, eta, beta, delta, lambda, gamma, alpha};
}

ModelParams ModelParams::from_array(const std::array<double, kCount>& v, Hypothesis hyp) {
  return ModelParams{v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], hyp};
}

double& ModelParams::by_name(std::string_view name) {
  if (name == "mu") return mu;
  if (name == "h") return h;
  if (name == "eta") return eta;
  if (name == "beta") return beta;
  if (name == "delta") return delta;
  if (name == "lambda") return lambda;
  if (name == "gamma") return gamma;
  if (name == "alpha") return alpha;
  throw ConfigError("unknown model parameter '" + std::string(name) + "'");
}

double ModelParams::by_name(std::string_view name) const {
  return const_cast<ModelParams&>(*this).by_name(name);
}

std::string ValidationResult::message() const {
  std::ostringstream out;
  for (std::size_t i = 0; i < violations.size(); ++i) {
    if (i) out << "; ";
    out << violations[i];
  }
  return out.str();
}

namespace {

void require(std::vector<std::string>& out, bool holds, const char* constraint) {
  if (!holds) out.emplace_back(constraint);
}

// NaN fails every comparison, so non-finite input is always reported.
void check_model(const ModelParams& p, std::vector<std::string>& out) {
  require(out, p.mu > 0.0, "mu>0");
  require(out, p.h > 0.0, "h>0");
  require(out, p.mu + p.h < 1.0, "mu+h<1");
  require(out, p.eta > 0.0 && p.eta < 1.0, "0<eta<1");
  require(out, p.gamma > 0.0 && p.gamma < 1.0, "0<gamma<1");
  require(out, p.delta > 0.0 && p.delta < 1.0, "0<delta<1");
  require(out, p.beta > 0.0 && std::isfinite(p.beta), "beta>0");
  require(out, p.lambda > 0.0 && std::isfinite(p.lambda), "lambda>0");
  require(out, p.alpha > 0.0 && std::isfinite(p.alpha), "alpha>0");
  if (p.hypothesis == Hypothesis::FSH) {
    require(out, p.delta <= p.alpha, "delta<=alpha");
  } else {
    require(out, p.delta + p.lambda <= p.alpha, "delta+lambda<=alpha");
  }
}

void check_domain(double x, const char* what) {
  if (!(x >= 0.0 && x <= 1.0)) {
    std::ostringstream msg;
    msg << what << ": forest proportion " << x << " outside [0,1]";
    throw DomainError(msg.str());
  }
}

double q_unchecked(const ModelParams& p, double x) {
  return p.hypothesis == Hypothesis::FSH ? p.delta + p.lambda * (1.0 - x)
                                         : p.delta + p.lambda * x;
}

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

}  // namespace

ValidationResult validate_model_params(const ModelParams& p) {
  ValidationResult r;
  check_model(p, r.violations);
  return r;
}

ValidationResult validate_params(const ModelParams& p, const NoiseParams& n) {
  ValidationResult r;
  check_model(p, r.violations);
  require(r.violations, n.sigma1 > 0.0 && std::isfinite(n.sigma1), "sigma1>0");
  require(r.violations, n.sigma2 > 0.0 && std::isfinite(n.sigma2), "sigma2>0");
  return r;
}

double recovery_rate(const ModelParams& p, double x) {
  check_domain(x, "recovery_rate");
  return p.mu + p.h * x;
}

double forest_value(const ModelParams& p, double x) {
  check_domain(x, "forest_value");
  return q_unchecked(p, x);
}

Utilities utilities(const ModelParams& p, double x) {
  const double rec = recovery_rate(p, x);
  const double q = forest_value(p, x);
  const double g = p.gamma;
  Utilities u;
  u.forest = q / (1.0 - g);
  u.abandoned = g * rec * u.forest / (1.0 - g * (1.0 - rec));
  u.agriculture = (p.alpha + g * p.eta * u.abandoned) / (1.0 - g * (1.0 - p.eta));
  return u;
}

double net_gain(const ModelParams& p, double x) {
  x = clamp01(x);
  const double rec = p.mu + p.h * x;
  const double q = q_unchecked(p, x);
  const double g = p.gamma;
  const double numerator = p.alpha * (1.0 - g * (1.0 - rec)) - (1.0 - g * (1.0 - p.eta - rec)) * q;
  const double denominator = (1.0 - g * (1.0 - p.eta)) * (1.0 - g * (1.0 - rec));
  return numerator / denominator;
}

double logistic(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double deforestation_rate(const ModelParams& p, double x) {
  return logistic(p.beta * net_gain(p, x));
}

Rates drift(const ModelParams& p, const LandState& s) {
  const double x = clamp01(s.x);
  const double rec = p.mu + p.h * x;
  const double r = deforestation_rate(p, x);
  const double z = s.abandoned();
  return {rec * z - r * s.x, r * s.x - p.eta * s.y};
}

Rates diffusion(const NoiseParams& n, const LandState& s) {
  const double z = s.abandoned();
  return {n.sigma1 * s.x * z, n.sigma2 * s.y * z};
}

ModelParams preset_paper4(Hypothesis hyp) {
  return ModelParams{0.2, 0.3, 0.7, 2.0, 0.7, 1.0, 0.5, 2.0, hyp};
}

NoiseParams preset_paper4_noise() { return NoiseParams{1.0, 1.0}; }

}  // namespace sftm
