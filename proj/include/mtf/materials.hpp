#pragma once

// Constitutive laws and activation models.
//
// Stress and tangent are expressed in curvilinear contravariant components with
// Voigt ordering (11, 22, 12). Strain increments are engineering (dE11, dE22, 2 dE12)
// so that dS = C dE with C(i, j) = 2 dS^{i}/dC_{j}.

#include "mtf/geometry.hpp"

#include <iostream>
#include <variant>

namespace mtf {

using Voigt = Eigen::Vector3d;
using VoigtMatrix = Eigen::Matrix3d;

inline constexpr std::array<std::array<int, 2>, 3> kVoigtPairs = {{{0, 0}, {1, 1}, {0, 1}}};

/// Symmetric 2x2 tensor to Voigt (11, 22, 12).
inline Voigt to_voigt(const Mat2& t) { return {t(0, 0), t(1, 1), t(0, 1)}; }

inline Mat2 from_voigt(const Voigt& v) {
  Mat2 t;
  t << v[0], v[2], v[2], v[1];
  return t;
}

/// Fourth-order tensor T^{abcd} = x^{ab} y^{cd} in Voigt form.
inline VoigtMatrix voigt_outer(const Mat2& x, const Mat2& y) { return to_voigt(x) * to_voigt(y).transpose(); }

/// Symmetrized product x^{ac} x^{bd} + x^{ad} x^{bc} in Voigt form.
inline VoigtMatrix voigt_sym_product(const Mat2& x) {
  VoigtMatrix m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const auto [a, b] = kVoigtPairs[i];
      const auto [c, d] = kVoigtPairs[j];
      m(i, j) = x(a, c) * x(b, d) + x(a, d) * x(b, c);
    }
  return m;
}

/// Stress S^{ab}, tangent 2 dS/dC and strain energy density per unit reference volume.
struct StressTangent {
  Voigt stress = Voigt::Zero();
  VoigtMatrix tangent = VoigtMatrix::Zero();
  double energy = 0.0;

  StressTangent& operator+=(const StressTangent& o) {
    stress += o.stress;
    tangent += o.tangent;
    energy += o.energy;
    return *this;
  }
};

inline void require_spd(const Mat2& m, const char* what) {
  if (!(m(0, 0) > 0.0 && m.determinant() > 0.0) || std::abs(m(0, 1) - m(1, 0)) > 1e-12 * m.norm())
    throw InvalidStateError(std::string(what) + " is not symmetric positive definite");
}

// ---------------------------------------------------------------------------
// Passive laws

struct FiberAnisotropy {
  double Ep = 21.0;    ///< kPa
  double alpha = 5.5;  ///< -
};

/// Incompressible Neo-Hookean under plane stress, optionally with exponential fibers.
struct NeoHookean {
  double mu = 500.0;  ///< kPa
  std::optional<FiberAnisotropy> anisotropy;
};

/// Linear St. Venant-Kirchhoff plane-stress law (small-strain benchmarks).
struct SaintVenantKirchhoff {
  double young = 1.0;
  double poisson = 0.0;
};

using Material = std::variant<NeoHookean, SaintVenantKirchhoff>;

/// S = mu (G_ref^{-1} - J0^{-2} C^{-1}), J0^2 = det C / det G_ref; the thickness stretch
/// C_33 = J0^{-2} is condensed analytically.
inline StressTangent neo_hookean_stress(const Mat2& g_ref, const Mat2& c, double mu) {
  require_spd(g_ref, "reference metric");
  require_spd(c, "deformed metric");
  const Mat2 gi_ref = g_ref.inverse();
  const Mat2 ci = c.inverse();
  const double j2inv = g_ref.determinant() / c.determinant();
  StressTangent out;
  out.stress = mu * to_voigt(gi_ref - j2inv * ci);
  out.tangent = mu * j2inv * (2.0 * voigt_outer(ci, ci) + voigt_sym_product(ci));
  out.energy = 0.5 * mu * ((gi_ref.array() * c.array()).sum() + j2inv - 3.0);
  return out;
}

/// Fiber stretch lambda_f = sqrt(f^a C_ab f^b).
inline double fiber_stretch(const Mat2& c, const Vec2& f) {
  const double l2 = f.dot(c * f);
  if (!(l2 > 0.0)) throw InvalidStateError("non-positive fiber stretch");
  return std::sqrt(l2);
}

/// Scalar profile phi(lambda) of S_ani = phi f f, with dphi/dlambda.
inline std::pair<double, double> anisotropy_profile(double lambda, const FiberAnisotropy& p) {
  if (!(lambda > 0.0)) throw InvalidStateError("non-positive fiber stretch");
  const double e = std::exp(p.alpha * (lambda - 1.0));
  const double phi = p.Ep / p.alpha * (e - 1.0) / lambda;
  const double dphi = p.Ep / p.alpha * (p.alpha * e / lambda - (e - 1.0) / (lambda * lambda));
  return {phi, dphi};
}

/// Exponential fiber stress S_ani = Ep/(alpha lambda) (exp(alpha(lambda - 1)) - 1) f f.
inline StressTangent anisotropic_stress(const Mat2& c, const Vec2& f, const FiberAnisotropy& p) {
  const double lambda = fiber_stretch(c, f);
  const auto [phi, dphi] = anisotropy_profile(lambda, p);
  const Mat2 ff = f * f.transpose();
  StressTangent out;
  out.stress = phi * to_voigt(ff);
  out.tangent = (dphi / lambda) * voigt_outer(ff, ff);
  const double x = p.alpha * (lambda - 1.0);
  out.energy = p.Ep / (p.alpha * p.alpha) * (std::exp(x) - x - 1.0);
  return out;
}

/// Plane-stress St. Venant-Kirchhoff: S = C : E with E = (C - G_ref)/2.
inline StressTangent saint_venant_stress(const Mat2& g_ref, const Mat2& c, const SaintVenantKirchhoff& p) {
  require_spd(g_ref, "reference metric");
  const Mat2 gi = g_ref.inverse();
  const double k = p.young / (1.0 - p.poisson * p.poisson);
  StressTangent out;
  out.tangent = k * (p.poisson * voigt_outer(gi, gi) + 0.5 * (1.0 - p.poisson) * voigt_sym_product(gi));
  const Mat2 e = 0.5 * (c - g_ref);
  const Voigt ev(e(0, 0), e(1, 1), 2.0 * e(0, 1));
  out.stress = out.tangent * ev;
  out.energy = 0.5 * ev.dot(out.stress);
  return out;
}

/// Passive response of a material at a through-thickness point.
inline StressTangent passive_stress(const Material& m, const Mat2& g_ref, const Mat2& c, const Vec2& fiber) {
  return std::visit(
      [&](const auto& law) -> StressTangent {
        using T = std::decay_t<decltype(law)>;
        if constexpr (std::is_same_v<T, NeoHookean>) {
          StressTangent s = neo_hookean_stress(g_ref, c, law.mu);
          if (law.anisotropy) s += anisotropic_stress(c, fiber, *law.anisotropy);
          return s;
        } else {
          return saint_venant_stress(g_ref, c, law);
        }
      },
      m);
}

/// Contravariant fiber components f^a = f0 . a^a at a reference frame. The out-of-plane part
/// is discarded and the in-plane part rescaled to unit length, so lambda_f = 1 at rest;
/// @p weak is set when the in-plane part of f0 is shorter than 0.99.
inline Vec2 project_fiber(const SurfaceFrame& ref, const Vec3& f0, bool* weak = nullptr) {
  const Vec2 f(f0.dot(ref.a_contra[0]), f0.dot(ref.a_contra[1]));
  const double len = (f[0] * ref.a[0] + f[1] * ref.a[1]).norm();
  if (weak) *weak = len < 0.99;
  if (!(len > 1e-12)) throw InvalidStateError("fiber direction is normal to the surface");
  return f / len;
}

// ---------------------------------------------------------------------------
// Active stress

/// Active stress value and its stretch derivative.
struct ActiveStress {
  double sigma = 0.0;
  double dsigma_dlambda = 0.0;
};

/// S_a = sigma/lambda^2 f f; tangent (sigma'/lambda^3 - 2 sigma/lambda^4) f f f f.
/// Energy is sigma ln(lambda), exact only for stretch-independent sigma.
inline StressTangent active_stress_tensor(const Mat2& c, const Vec2& f, const ActiveStress& a) {
  const double lambda = fiber_stretch(c, f);
  const Mat2 ff = f * f.transpose();
  StressTangent out;
  if (a.sigma == 0.0 && a.dsigma_dlambda == 0.0) return out;
  const double l2 = lambda * lambda;
  out.stress = (a.sigma / l2) * to_voigt(ff);
  out.tangent = (a.dsigma_dlambda / (l2 * lambda) - 2.0 * a.sigma / (l2 * l2)) * voigt_outer(ff, ff);
  out.energy = a.sigma * std::log(lambda);
  return out;
}

// ---------------------------------------------------------------------------
// Imposed (IM) activation

enum class TimeLaw { constant, pulse };

struct ImposedActivationParams {
  double lambda0 = 1.24;
  double lambda_min = 0.86;
  double lambda_max = 1.34;
  double lambda_s = 1.14;
  double peak = 9.0;       ///< P-hat, kPa
  double t_bar = 210.0;    ///< ms
  TimeLaw law = TimeLaw::constant;
  bool floor_at_zero = false;

  void validate() const {
    if (!(lambda_min < lambda0 && lambda0 < lambda_max)) throw ConfigError("IM activation: need lambda_min < lambda0 < lambda_max");
    if (lambda0 == 1.0) throw ConfigError("IM activation: lambda0 must differ from 1");
    if (peak < 0.0) throw ConfigError("IM activation: peak stress must be nonnegative");
    if (law == TimeLaw::pulse && !(t_bar > 0.0)) throw ConfigError("IM activation: t_bar must be positive");
  }
};

/// q(t) = (t/T)^2 exp(1 - (t/T)^2).
inline double pulse_time_law(double t, double t_bar) {
  const double s = (t / t_bar) * (t / t_bar);
  return s * std::exp(1.0 - s);
}

inline double time_factor(double t, const ImposedActivationParams& p) {
  return p.law == TimeLaw::constant ? 1.0 : pulse_time_law(t, p.t_bar);
}

/// sigma_a = P q {1 - [lambda + (lambda_s - 1) - lambda0]^2 / (1 - lambda0)^2} inside
/// [lambda_min, lambda_max], zero outside. @p scale multiplies P q (ramping).
inline ActiveStress imposed_activation(double lambda, double t, const ImposedActivationParams& p, double scale = 1.0) {
  if (lambda < p.lambda_min || lambda > p.lambda_max) return {};
  const double amp = scale * p.peak * time_factor(t, p);
  const double d = 1.0 - p.lambda0;
  const double x = lambda + (p.lambda_s - 1.0) - p.lambda0;
  ActiveStress a{amp * (1.0 - x * x / (d * d)), -amp * 2.0 * x / (d * d)};
  if (p.floor_at_zero && a.sigma < 0.0) return {};
  return a;
}

// ---------------------------------------------------------------------------
// Coupled (CO) activation

struct CoupledActivationParams {
  double k_sigma = 0.122;  ///< kPa/mV
  double v_r = -80.0;      ///< mV
  double zeta0 = 0.1;
  double zeta_inf = 1.0;
  double xi_v = 1.0;       ///< 1/mV
  double v_bar = 0.0;      ///< mV

  void validate() const {
    if (!(zeta0 > 0.0 && zeta_inf > 0.0)) throw ConfigError("CO activation: zeta0 and zeta_inf must be positive");
  }
};

/// zeta(v) = zeta0 + (zeta_inf - zeta0) exp(-exp(-xi (v - v_bar))).
inline double activation_rate_factor(double v, const CoupledActivationParams& p) {
  return p.zeta0 + (p.zeta_inf - p.zeta0) * std::exp(-std::exp(-p.xi_v * (v - p.v_bar)));
}

/// d sigma_a/dt = zeta(v) [k_sigma (v - v_r) - sigma_a].
inline double coupled_activation_rate(double sigma, double v, const CoupledActivationParams& p) {
  return activation_rate_factor(v, p) * (p.k_sigma * (v - p.v_r) - sigma);
}

// ---------------------------------------------------------------------------
// Aliev-Panfilov cell model

enum class IonicModel {
  /// I* = k v*(v* - a)(v* - 1) + v* w: the standard excitable cubic.
  cubic,
  /// I* = k v*(v* - a) - v* w, evaluated literally; not excitable.
  printed,
};

struct AlievPanfilovParams {
  double k_v = 8.0;
  double a = 0.15;
  double b = 0.15;
  double mu1 = 0.2;
  double mu2 = 0.3;
  double e0 = 0.002;
  double r_v = 100.0;   ///< mV
  double s_v = -80.0;   ///< mV
  double r_t = 12.9;    ///< ms
  double D = 0.002;     ///< mm^2/ms per unit C_m
  double C_m = 1.0;
  double v0 = -80.0;
  double w0 = 0.0;
  double sigma0 = 0.0;
  IonicModel model = IonicModel::cubic;

  void validate() const {
    if (!(r_v > 0.0 && r_t > 0.0 && C_m > 0.0)) throw ConfigError("cell model: r_v, r_t and C_m must be positive");
    if (!(D >= 0.0)) throw ConfigError("cell model: D must be nonnegative");
  }
};

/// Ionic current (mV/ms, entering as -I) and recovery rate (1/ms) in physical units.
struct IonicRates {
  double current = 0.0;
  double dwdt = 0.0;
};

inline IonicRates aliev_panfilov_rhs(double v, double w, const AlievPanfilovParams& p) {
  const double x = (v - p.s_v) / p.r_v;
  const double i_star = p.model == IonicModel::cubic ? p.k_v * x * (x - p.a) * (x - 1.0) + x * w
                                                     : p.k_v * x * (x - p.a) - x * w;
  const double dw_star = (p.e0 + p.mu1 * w / (p.mu2 + x)) * (-w - p.k_v * x * (x - p.b - 1.0));
  return {i_star * p.r_v / p.r_t, dw_star / p.r_t};
}

}  // namespace mtf
