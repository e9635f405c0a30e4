#pragma once

// Generalized-alpha integration of M a + C v + F_int(u) = F_ext with C = c M,
// Newton on the end-of-step accelerations.

#include "mtf/shell.hpp"

#include <cstdio>
#include <istream>
#include <optional>
#include <ostream>

namespace mtf {

struct SpectralParams {
  double alpha_m = 0.0, alpha_f = 0.0, beta = 0.0, gamma = 0.0;
};

/// alpha_m = (2 - r)/(1 + r), alpha_f = 1/(1 + r), beta = (1 - alpha_f + alpha_m)^2/4,
/// gamma = 1/2 - alpha_f + alpha_m.
inline SpectralParams derive_spectral_params(double rho_inf) {
  if (!(rho_inf >= 0.0 && rho_inf <= 1.0)) throw DomainError("spectral radius must lie in [0, 1]");
  SpectralParams s;
  s.alpha_m = (2.0 - rho_inf) / (1.0 + rho_inf);
  s.alpha_f = 1.0 / (1.0 + rho_inf);
  const double d = 1.0 - s.alpha_f + s.alpha_m;
  s.beta = 0.25 * d * d;
  s.gamma = 0.5 - s.alpha_f + s.alpha_m;
  return s;
}

/// How activation at the alpha level mixes the interval end values.
enum class ActivationWeighting {
  printed,     ///< alpha_f on t_i, 1 - alpha_f on t_{i+1}
  consistent,  ///< same convention as the displacement: alpha_f on t_{i+1}
};

/// Initial Newton iterate of a step.
enum class StepPredictor {
  same_acceleration,  ///< a_{i+1} = a_i
  same_displacement,  ///< a_{i+1} such that u_{i+1} = u_i
};

struct GeneralizedAlphaParams {
  double rho_inf = 0.5;
  double dt = 0.0;       ///< ms
  double damping = 0.0;  ///< c in C = c M, 1/ms
  ActivationWeighting weighting = ActivationWeighting::printed;
  StepPredictor predictor = StepPredictor::same_displacement;

  [[nodiscard]] SpectralParams spectral() const { return derive_spectral_params(rho_inf); }

  /// Weights (w_i, w_{i+1}) of the interval end activations.
  [[nodiscard]] std::pair<double, double> activation_weights() const {
    const double af = spectral().alpha_f;
    return weighting == ActivationWeighting::printed ? std::pair{af, 1.0 - af} : std::pair{1.0 - af, af};
  }

  void validate() const {
    (void)spectral();
    if (!(dt > 0.0)) throw ConfigError("time step must be positive");
    if (!(damping >= 0.0)) throw ConfigError("damping coefficient must be nonnegative");
  }
};

struct DynamicState {
  Vector u, v, a;
  int step = 0;
};

/// Step interval handed to the force callback.
struct StepInterval {
  int step = 0;  ///< index i of the interval [t_i, t_{i+1}]
  double t0 = 0.0, t1 = 0.0;
  double w0 = 0.0, w1 = 0.0;  ///< activation weights of t_i and t_{i+1}
};

/// Internal minus external force (and its tangent) at the alpha-level displacement.
using ForceFn = std::function<ShellAssembly(const Vector& u, const StepInterval& interval, AssemblyRequest req)>;

class GeneralizedAlpha {
 public:
  GeneralizedAlpha(GeneralizedAlphaParams params, SparseMatrix mass, std::vector<bool> fixed, ForceFn force,
                   NewtonOptions options = {})
      : params_(params), spec_(params.spectral()), mass_(std::move(mass)), force_(std::move(force)),
        options_(options), fixed_(std::move(fixed)), solver_(fixed_) {
    params_.validate();
    if (mass_.rows() != mass_.cols() || static_cast<std::size_t>(mass_.rows()) != fixed_.size())
      throw DomainError("mass matrix size does not match the constraint mask");
  }

  [[nodiscard]] const GeneralizedAlphaParams& params() const { return params_; }
  [[nodiscard]] const SpectralParams& spectral() const { return spec_; }
  [[nodiscard]] const SparseMatrix& mass() const { return mass_; }
  [[nodiscard]] double time(int step) const { return step * params_.dt; }

  /// At-rest state of the given size.
  [[nodiscard]] DynamicState rest_state() const {
    const auto n = mass_.rows();
    return {Vector::Zero(n), Vector::Zero(n), Vector::Zero(n), 0};
  }

  /// Consistent initial accelerations: M a_0 = F_ext - F_int(u_0) - C v_0 on the free DOFs.
  void initialize(DynamicState& s) {
    check_state(s);
    const StepInterval at{s.step, time(s.step), time(s.step), 1.0, 0.0};
    const ShellAssembly f = force_(s.u, at, {true, false, false});
    const Vector rhs = -(f.residual + params_.damping * (mass_ * s.v));
    ReducedSolver ms(fixed_);
    ms.factorize(ms.restrict_matrix(mass_));
    s.a = ms.expand(ms.solve(ms.restrict_vector(rhs)));
  }

  /// Advances s from t_i to t_{i+1}. Throws SolverError naming the step on failure.
  NewtonReport step(DynamicState& s) {
    check_state(s);
    const double dt = params_.dt, c = params_.damping;
    const auto [w0, w1] = params_.activation_weights();
    const StepInterval iv{s.step, time(s.step), time(s.step + 1), w0, w1};
    Vector a1 = s.a;
    if (params_.predictor == StepPredictor::same_displacement)
      a1 = -(s.v / (spec_.beta * dt) + (0.5 / spec_.beta - 1.0) * s.a);
    const double jm = spec_.alpha_m + spec_.alpha_f * spec_.gamma * dt * c;
    const double jk = spec_.alpha_f * spec_.beta * dt * dt;
    const NewtonReport rep = newton_iterate(
        a1,
        [&](const Vector& x, bool tangent) {
          const Levels lv = levels(s, x);
          ShellAssembly f = force_(lv.u_alpha, iv, {true, tangent, false});
          const Vector r = mass_ * (lv.a_alpha + c * lv.v_alpha) + f.residual;
          NewtonEvaluation ev{solver_.restrict_vector(r), {}};
          if (tangent) ev.jacobian = jm * mass_ + jk * f.tangent;
          return ev;
        },
        solver_, options_, "time step " + std::to_string(s.step));
    const Levels lv = levels(s, a1);
    s.u = lv.u1;
    s.v = lv.v1;
    s.a = a1;
    ++s.step;
    return rep;
  }

  /// Norm of the alpha-level residual on the free DOFs recomputed from two stored states.
  [[nodiscard]] double residual_norm(const DynamicState& prev, const DynamicState& next) const {
    const auto [w0, w1] = params_.activation_weights();
    const StepInterval iv{prev.step, time(prev.step), time(prev.step + 1), w0, w1};
    const double af = spec_.alpha_f, am = spec_.alpha_m;
    const Vector ua = af * next.u + (1.0 - af) * prev.u;
    const Vector va = af * next.v + (1.0 - af) * prev.v;
    const Vector aa = am * next.a + (1.0 - am) * prev.a;
    const ShellAssembly f = force_(ua, iv, {true, false, false});
    return solver_.restrict_vector(mass_ * (aa + params_.damping * va) + f.residual).norm();
  }

  [[nodiscard]] double kinetic_energy(const DynamicState& s) const { return 0.5 * s.v.dot(mass_ * s.v); }

 private:
  struct Levels {
    Vector u1, v1, u_alpha, v_alpha, a_alpha;
  };

  [[nodiscard]] Levels levels(const DynamicState& s, const Vector& a1) const {
    const double dt = params_.dt, b = spec_.beta, g = spec_.gamma;
    const double af = spec_.alpha_f, am = spec_.alpha_m;
    Levels l;
    l.u1 = s.u + dt * s.v + (0.5 * dt * dt) * ((1.0 - 2.0 * b) * s.a + 2.0 * b * a1);
    l.v1 = s.v + dt * ((1.0 - g) * s.a + g * a1);
    l.u_alpha = af * l.u1 + (1.0 - af) * s.u;
    l.v_alpha = af * l.v1 + (1.0 - af) * s.v;
    l.a_alpha = am * a1 + (1.0 - am) * s.a;
    return l;
  }

  void check_state(const DynamicState& s) const {
    const auto n = mass_.rows();
    if (s.u.size() != n || s.v.size() != n || s.a.size() != n)
      throw DomainError("dynamic state has the wrong size");
    for (std::size_t i = 0; i < fixed_.size(); ++i)
      if (fixed_[i] && (s.v[i] != 0.0 || s.a[i] != 0.0))
        throw InvalidStateError("constrained DOFs must have zero velocity and acceleration");
  }

  GeneralizedAlphaParams params_;
  SpectralParams spec_;
  SparseMatrix mass_;
  ForceFn force_;
  NewtonOptions options_;
  std::vector<bool> fixed_;
  ReducedSolver solver_;
};

// ---------------------------------------------------------------------------
// Shell coupling

/// Activation field at time t; an empty function means no activation.
using TimeActivation = std::function<ActivationFn(double t)>;

/// w0 * a0 + w1 * a1 on both the stress and its stretch derivative.
inline ActivationFn blend_activation(ActivationFn a0, ActivationFn a1, double w0, double w1) {
  if (!a0 && !a1) return {};
  return [a0 = std::move(a0), a1 = std::move(a1), w0, w1](std::size_t qp, double lambda) {
    ActiveStress s{0.0, 0.0};
    if (a0 && w0 != 0.0) {
      const ActiveStress x = a0(qp, lambda);
      s.sigma += w0 * x.sigma;
      s.dsigma_dlambda += w0 * x.dsigma_dlambda;
    }
    if (a1 && w1 != 0.0) {
      const ActiveStress x = a1(qp, lambda);
      s.sigma += w1 * x.sigma;
      s.dsigma_dlambda += w1 * x.dsigma_dlambda;
    }
    return s;
  };
}

/// Shell internal force with the activation interpolated in time over the step.
inline ForceFn shell_force(const ShellModel& model, TimeActivation activation) {
  return [&model, activation = std::move(activation)](const Vector& u, const StepInterval& iv, AssemblyRequest req) {
    ActivationFn act;
    if (activation) act = blend_activation(activation(iv.t0), activation(iv.t1), iv.w0, iv.w1);
    return assemble(model, u, act, req);
  };
}

/// Generalized-alpha integrator for a shell model, starting at rest.
inline GeneralizedAlpha make_shell_integrator(const ShellModel& model, const GeneralizedAlphaParams& params,
                                              TimeActivation activation, const NewtonOptions& options = {}) {
  if (!model.prescribed().empty())
    throw UnsupportedError("dynamic runs support homogeneous displacement constraints only");
  return {params, mass_matrix(model), model.fixed(), shell_force(model, std::move(activation)), options};
}

struct DynamicRun {
  DynamicState final_state;
  std::vector<NewtonReport> reports;
};

/// Integrates @p steps steps from @p start (at rest when empty); the observer sees the
/// initial state and every converged step.
inline DynamicRun run_dynamic(GeneralizedAlpha& integrator, int steps, std::optional<DynamicState> start = {},
                              const std::function<void(const DynamicState&)>& observer = {}) {
  if (steps < 0) throw ConfigError("step count must be nonnegative");
  DynamicRun run;
  run.final_state = start ? *start : integrator.rest_state();
  if (!start) integrator.initialize(run.final_state);
  if (observer) observer(run.final_state);
  for (int k = 0; k < steps; ++k) {
    run.reports.push_back(integrator.step(run.final_state));
    if (observer) observer(run.final_state);
  }
  return run;
}

// ---------------------------------------------------------------------------
// Restart files (hexadecimal floating point, bit-exact round trip)

inline void write_state(std::ostream& os, const DynamicState& s) {
  char buf[64];
  os << "mtf-dynamic-state 1\n" << s.step << ' ' << s.u.size() << '\n';
  for (const Vector* x : {&s.u, &s.v, &s.a}) {
    for (Eigen::Index i = 0; i < x->size(); ++i) {
      std::snprintf(buf, sizeof buf, "%a", (*x)[i]);
      os << buf << (i + 1 == x->size() ? '\n' : ' ');
    }
    if (x->size() == 0) os << '\n';
  }
}

inline DynamicState read_state(std::istream& is) {
  std::string tag;
  int version = 0;
  is >> tag >> version;
  if (tag != "mtf-dynamic-state" || version != 1) throw ConfigError("not a dynamic state file");
  DynamicState s;
  Eigen::Index n = 0;
  is >> s.step >> n;
  if (!is || n < 0) throw ConfigError("corrupt dynamic state header");
  for (Vector* x : {&s.u, &s.v, &s.a}) {
    x->resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      std::string tok;
      is >> tok;
      char* end = nullptr;
      (*x)[i] = std::strtod(tok.c_str(), &end);
      if (tok.empty() || end != tok.c_str() + tok.size()) throw ConfigError("corrupt dynamic state value");
    }
  }
  return s;
}

}  // namespace mtf
