#include "rnnlab/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "rnnlab/quadrature.hpp"

namespace rnnlab {

namespace {

// Phi_N^{(i)}(x): the i-th derivative of the standard normal cdf.
double cdf_derivative(int i, double x) {
  if (i == 0) return normal_cdf(x);
  const double sign = ((i - 1) % 2 == 0) ? 1.0 : -1.0;
  return sign * hermite_he(i - 1, x) * normal_pdf(x);
}

double psi(int i, double b, double kappa) {
  if (i == 0) return 1.0;
  const double sign = ((i - 1) % 2 == 0) ? 1.0 : -1.0;
  return sign * hermite_he(i - 1, b / (2.0 * kappa));
}

// Weighted nodes for the window variable u.
QuadratureRule window_rule(const NoiseModel& noise, int n) {
  QuadratureRule rule;
  if (!(noise.window_half_width > 0)) {
    rule.nodes = {0.0};
    rule.weights = {1.0};
    return rule;
  }
  rule = gauss_legendre(n);
  double total = 0.0;
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
    rule.nodes[k] *= noise.window_half_width;
    const double s = noise.window_scale;
    const double dens = std::isfinite(s) ? std::exp(-0.5 * rule.nodes[k] * rule.nodes[k] / (s * s)) : 1.0;
    rule.weights[k] *= dens;
    total += rule.weights[k];
  }
  for (double& w : rule.weights) w /= total;
  return rule;
}

// D_i = E_{b,u}[psi_i(b; kappa_psi) Phi_N^{(i)}((b/2 + u)/kappa_eval)]
std::vector<double> moment_normalizers(int K, double kappa_psi, double kappa_eval, const QuadratureRule& gb,
                                       const QuadratureRule& gu) {
  std::vector<double> D(static_cast<std::size_t>(K) + 1, 0.0);
  for (std::size_t p = 0; p < gb.nodes.size(); ++p) {
    const double b = gb.nodes[p];
    for (std::size_t q = 0; q < gu.nodes.size(); ++q) {
      const double w = gb.weights[p] * gu.weights[q];
      const double x = (0.5 * b + gu.nodes[q]) / kappa_eval;
      for (int i = 0; i <= K; ++i) D[static_cast<std::size_t>(i)] += w * psi(i, b, kappa_psi) * cdf_derivative(i, x);
    }
  }
  return D;
}

double series_expectation(const std::vector<double>& beta, const std::vector<double>& D, double t, double kappa) {
  double acc = 0.0;
  for (std::size_t i = 0; i < beta.size(); ++i) {
    if (beta[i] == 0.0) continue;
    acc += beta[i] * std::pow(t / kappa, static_cast<double>(i)) * D[i];
  }
  return acc;
}

constexpr double kHalfSqrt3 = 0.86602540378443864676;

}  // namespace

double FitFunction::raw(double z, double b) const {
  if (hermite_coeffs.empty()) return 0.0;
  const int K = static_cast<int>(hermite_coeffs.size()) - 1;
  const auto hz = hermite_he_all(K, z);
  const auto hb = hermite_he_all(std::max(K - 1, 0), b / (2.0 * kappa));
  double acc = hermite_coeffs[0];
  for (int i = 1; i <= K; ++i) {
    const double beta = hermite_coeffs[static_cast<std::size_t>(i)];
    if (beta == 0.0) continue;
    const double sign = ((i - 1) % 2 == 0) ? 1.0 : -1.0;
    acc += beta * hz[static_cast<std::size_t>(i)] * sign * hb[static_cast<std::size_t>(i - 1)];
  }
  return acc;
}

double FitFunction::operator()(double z, double b) const { return std::clamp(raw(z, b), -clamp, clamp); }

double FitFunction::at(const Vector& a, const Vector& wstar) const {
  const auto dx = wstar.size();
  if (a.size() < dx) throw std::invalid_argument("FitFunction: input shorter than w*");
  return (*this)(a.head(dx).dot(wstar), a[dx - 1]);
}

double FitFunction::on_target(double t) const { return off_target(t, 1.0); }

double FitFunction::off_target(double t, double gamma) const {
  if (hermite_coeffs.empty()) return 0.0;
  const int K = static_cast<int>(hermite_coeffs.size()) - 1;
  const double kappa_eval = std::sqrt(gamma * gamma * noise.sigma * noise.sigma + 0.75);
  const auto gb = gauss_hermite(96);
  const auto gu = window_rule(noise, 32);
  const auto D = moment_normalizers(K, kappa, kappa_eval, gb, gu);
  return series_expectation(hermite_coeffs, D, t, kappa_eval);
}

nlohmann::ordered_json FitFunction::report() const {
  nlohmann::ordered_json j;
  j["target"] = describe_series(target);
  j["sigma"] = noise.sigma;
  j["window_half_width"] = noise.window_half_width;
  j["kappa"] = kappa;
  j["clamp"] = clamp;
  j["hermite_coeffs"] = hermite_coeffs;
  j["normalizers"] = normalizers;
  j["residual_t"] = residual_t;
  j["residuals"] = residuals;
  j["max_residual"] = max_residual;
  j["precondition_ok"] = precondition_ok;
  return j;
}

FitFunction calibrate_fit(const TaylorSeries& phi, const NoiseModel& noise, double eps_e, const FitOptions& opts) {
  if (!(eps_e > 0 && eps_e < 1)) throw std::invalid_argument("calibrate_fit: eps_e must lie in (0,1)");
  if (!(noise.sigma >= 0) || !(noise.window_half_width >= 0)) {
    throw std::invalid_argument("calibrate_fit: noise scales must be nonnegative");
  }
  FitFunction H;
  H.target = phi;
  H.noise = noise;
  H.kappa = std::sqrt(noise.sigma * noise.sigma + 0.75);
  const double R = std::max(noise.sigma, 1.0);
  H.clamp = opts.clamp > 0 ? opts.clamp : complexity_eps(phi, R, eps_e, opts.c_star);
  H.precondition_ok = eps_e * complexity_sound(phi, R, opts.c_star) < 1.0;
  if (phi.is_zero()) return H;

  const int K = phi.degree();
  const auto gb = gauss_hermite(opts.quad_b);
  const auto gu = window_rule(noise, opts.quad_u);
  H.normalizers = moment_normalizers(K, H.kappa, H.kappa, gb, gu);
  H.hermite_coeffs.assign(static_cast<std::size_t>(K) + 1, 0.0);
  for (int i = 0; i <= K; ++i) {
    const double c = phi.coeff(i);
    if (c == 0.0) continue;
    const double Di = H.normalizers[static_cast<std::size_t>(i)];
    if (std::abs(Di) < 1e-12) {
      throw CalibrationError("calibrate_fit: vanishing moment at degree " + std::to_string(i), {});
    }
    H.hermite_coeffs[static_cast<std::size_t>(i)] = c * std::pow(H.kappa, i) / Di;
  }

  // Residual bound on a grid of t = <w*, x*>: the unclamped expectation is
  // re-evaluated with an independent (finer) quadrature, and the clamp can
  // move the expectation by at most E|H - clamp(H)|.
  const auto gb_fine = gauss_hermite(2 * opts.quad_b + 1);
  const auto gu_fine = window_rule(noise, 2 * opts.quad_u + 1);
  const auto D_fine = moment_normalizers(K, H.kappa, H.kappa, gb_fine, gu_fine);
  double clamp_excess = 0.0;
  {
    const auto gz = gauss_hermite(64);
    const auto gbb = gauss_hermite(64);
    for (std::size_t p = 0; p < gz.nodes.size(); ++p) {
      for (std::size_t q = 0; q < gbb.nodes.size(); ++q) {
        const double h = H.raw(gz.nodes[p], gbb.nodes[q]);
        clamp_excess += gz.weights[p] * gbb.weights[q] * std::max(0.0, std::abs(h) - H.clamp);
      }
    }
  }
  const int grid = 9;
  for (int g = 0; g < grid; ++g) {
    const double t = -kHalfSqrt3 + 2.0 * kHalfSqrt3 * g / (grid - 1);
    const double r = std::abs(series_expectation(H.hermite_coeffs, D_fine, t, H.kappa) - phi(t)) + clamp_excess;
    H.residual_t.push_back(t);
    H.residuals.push_back(r);
    H.max_residual = std::max(H.max_residual, r);
  }
  if (opts.check_residual && H.max_residual > eps_e / 2) {
    std::ostringstream os;
    os << "calibrate_fit: residual " << H.max_residual << " exceeds eps_e/2 = " << eps_e / 2
       << " (clamp contribution " << clamp_excess << ")";
    throw CalibrationError(os.str(), H.residuals);
  }
  return H;
}

FitFunction fit_indicator_function(const TaylorSeries& phi, double sigma, double eps_e, const FitOptions& opts) {
  if (!(sigma >= 0.1)) throw std::invalid_argument("fit_indicator_function: sigma must be at least 0.1");
  NoiseModel noise;
  noise.sigma = sigma;
  return calibrate_fit(phi, noise, eps_e, opts);
}

double WStarBundle::row_norm_2_inf() const {
  if (factors.rank() == 0) return 0.0;
  const Eigen::MatrixXd G = factors.V.transpose() * factors.V;
  double best = 0.0;
  for (Eigen::Index k = 0; k < factors.U.rows(); ++k) {
    const Eigen::RowVectorXd u = factors.U.row(k);
    best = std::max(best, (u * G * u.transpose())(0, 0));
  }
  return std::sqrt(best);
}

nlohmann::ordered_json WStarBundle::report() const {
  nlohmann::ordered_json j;
  j["eps_e"] = eps_e;
  j["eps_x"] = eps_x;
  j["C_range"] = C_range;
  j["frobenius_norm"] = frobenius_norm();
  j["row_norm_2_inf"] = row_norm_2_inf();
  j["tau"] = tau;
  j["overlap"] = overlap;
  auto norms = nlohmann::ordered_json::array();
  for (const auto& [k, c] : normalizers) norms.push_back({{"i", k[0]}, {"j", k[1]}, {"s", k[2]}, {"C", c}});
  j["normalizers"] = norms;
  auto cal = nlohmann::ordered_json::array();
  for (const auto& [k, c] : calibration) {
    cal.push_back({{"i", k.i}, {"j", k.j}, {"r", k.r}, {"s", k.s}, {"eps_c", c.eps_c},
                   {"eps_c_prime", c.eps_c_prime}, {"window_fraction", c.window_fraction},
                   {"sigma", c.sigma}, {"kappa", c.kappa}, {"clamp", c.clamp},
                   {"max_residual", c.max_residual}});
  }
  j["terms"] = cal;
  return j;
}

WStarBundle build_w_star(const NetworkParams& params, const TargetFunction& F, const ForwardTrace& null_trace,
                         double eps_e, double eps_x, RngStream& rng, const WStarOptions& opts) {
  const int L = F.L();
  const auto m = params.W.rows();
  const int d = F.d();
  if (null_trace.L() != L) throw std::invalid_argument("build_w_star: null trace length mismatch");
  if (params.B.rows() != d || params.A.cols() != F.d_x() + 1) {
    throw std::invalid_argument("build_w_star: network and target dimensions disagree");
  }
  check_eps_x(eps_x, L);

  WStarBundle out;
  out.eps_e = eps_e;
  out.eps_x = eps_x;
  const int n_src = L - 2;  // source tokens i = 2..L-1
  out.factors.U = Matrix::Zero(m, n_src);
  out.factors.V = Matrix::Zero(m, n_src);
  out.tau.assign(static_cast<std::size_t>(L), 0.0);
  out.overlap.assign(static_cast<std::size_t>(L), 1.0);
  for (int i = 2; i <= L - 1; ++i) out.factors.V.col(i - 2) = null_trace.h[static_cast<std::size_t>(i - 1)];
  if (F.terms().empty()) return out;

  // e_s^T Back^(0)_{i->j} for every (i, j, s) from one sweep per (j, s).
  std::map<std::array<int, 3>, Vector> back0;
  for (int j = 3; j <= L; ++j) {
    for (int s = 1; s <= d; ++s) {
      auto rows = back_rows(null_trace, params.W, params.B, j, Vector::Unit(d, s - 1));
      for (int i = 2; i < j; ++i) back0[{i, j, s}] = std::move(rows[static_cast<std::size_t>(i)]);
    }
  }
  for (const auto& [key, b] : back0) {
    const double hn2 = null_trace.h[static_cast<std::size_t>(key[0] - 1)].squaredNorm();
    const double C = b.squaredNorm() * hn2 / static_cast<double>(m);
    if (C < 1e-3 / d) {
      throw std::runtime_error("build_w_star: degenerate normalizer C_{" + std::to_string(key[0]) + "->" +
                               std::to_string(key[1]) + "," + std::to_string(key[2]) + "} = " + std::to_string(C));
    }
    out.normalizers[key] = C;
  }

  // Pilot estimate of how far h_{i-1} leaves the direction of h^(0)_{i-1}.
  if (opts.pilot_samples > 0) {
    std::vector<double> tau2(static_cast<std::size_t>(L), 0.0), ov(static_cast<std::size_t>(L), 0.0);
    for (int n = 0; n < opts.pilot_samples; ++n) {
      const auto xs = sample_true_sequence(L, F.d_x(), opts.tokens, rng);
      const auto tr = forward(params, to_actual(xs, eps_x));
      for (int i = 2; i <= L - 1; ++i) {
        const Vector& h0 = null_trace.h[static_cast<std::size_t>(i - 1)];
        const Vector& h = tr.h[static_cast<std::size_t>(i - 1)];
        const double h0n = h0.norm();
        const double along = h0.dot(h) / h0n;
        tau2[static_cast<std::size_t>(i)] += std::max(0.0, h.squaredNorm() - along * along);
        ov[static_cast<std::size_t>(i)] += along / h0n;
      }
    }
    for (int i = 2; i <= L - 1; ++i) {
      out.tau[static_cast<std::size_t>(i)] = std::sqrt(tau2[static_cast<std::size_t>(i)] / opts.pilot_samples);
      out.overlap[static_cast<std::size_t>(i)] = ov[static_cast<std::size_t>(i)] / opts.pilot_samples;
    }
  }

  // Row inputs in noise units: a_hat_k = sqrt(m/2) a_k, and the window
  // statistic <w_k, h^(0)_{i-1}>.
  const double scale = std::sqrt(static_cast<double>(m) / 2.0);
  const Matrix A_hat = scale * params.A;
  std::vector<Vector> window_stat(static_cast<std::size_t>(L));
  for (int i = 2; i <= L - 1; ++i) {
    window_stat[static_cast<std::size_t>(i)] = params.W * null_trace.h[static_cast<std::size_t>(i - 1)];
  }

  const double sqrt_m = std::sqrt(static_cast<double>(m));
  for (const auto& [key, term] : F.terms()) {
    if (term.phi.is_zero()) continue;
    const int i = key.i;
    const auto iu = static_cast<std::size_t>(i);
    const double h0n = null_trace.h[static_cast<std::size_t>(i - 1)].norm();
    const double r = out.overlap[iu];
    const double R = std::max(out.tau[iu] / eps_x, 1.0);
    const double Cprime = opts.fit.clamp > 0 ? opts.fit.clamp : complexity_eps(term.phi, R, eps_e, opts.c_star);
    const double eps_c = opts.eps_c > 0 ? opts.eps_c : eps_e * eps_x / (4.0 * Cprime);

    NoiseModel noise;
    noise.sigma = out.tau[iu] / eps_x;
    noise.window_half_width = r * eps_c / (std::numbers::sqrt2 * eps_x);
    noise.window_scale = r * h0n / eps_x;
    const FitFunction H = calibrate_fit(term.phi, noise, eps_e, opts.fit);

    TermCalibration cal;
    cal.eps_c = eps_c;
    cal.eps_c_prime = std::erf(eps_c / (2.0 * h0n));
    cal.sigma = noise.sigma;
    cal.kappa = H.kappa;
    cal.clamp = H.clamp;
    cal.max_residual = H.max_residual;
    out.C_range = std::max(out.C_range, 4.0 * Cprime * Cprime / (eps_e * eps_x));

    const double C = out.normalizers.at({i, key.j, key.s});
    const Vector& b0 = back0.at({i, key.j, key.s});
    const Vector& ws = window_stat[iu];
    const double coef = 1.0 / (static_cast<double>(m) * C * cal.eps_c_prime * r);
    std::size_t in_window = 0;
    for (Eigen::Index k = 0; k < m; ++k) {
      if (std::abs(ws[k]) > eps_c / sqrt_m) continue;
      ++in_window;
      out.factors.U(k, i - 2) += coef * H.at(A_hat.row(k).transpose(), term.wstar) * b0[k];
    }
    cal.window_fraction = static_cast<double>(in_window) / static_cast<double>(m);
    out.calibration[key] = cal;
  }
  return out;
}

double existence_error(const NetworkParams& params, const WStarBundle& wsb, const TargetFunction& F,
                       const TrueSequence& xstar, const Matrix* perturbation) {
  const ActualSequence x = to_actual(xstar, wsb.eps_x);
  std::vector<Vector> f;
  if (perturbation) {
    NetworkParams shifted{params.dims, params.W + *perturbation, params.A, params.B};
    const auto tr = forward(shifted, x);
    f = first_order_all(tr, shifted, [&](const Vector& h) { return wsb.factors.apply(h); });
  } else {
    const auto tr = forward(params, x);
    f = first_order_all(tr, params, [&](const Vector& h) { return wsb.factors.apply(h); });
  }
  double err = 0.0;
  for (int j = 3; j <= F.L(); ++j) {
    const Vector target = eval_target_vector(F, xstar, j);
    err = std::max(err, (f[static_cast<std::size_t>(j)] - target).cwiseAbs().maxCoeff());
  }
  return err;
}

LemmaReport verify_existence(const NetworkParams& params, const WStarBundle& wsb, const TargetFunction& F,
                             const TrueSequence& xstar, double eps_target, const Matrix* perturbation) {
  LemmaReport rep;
  rep.lemma_id = "existence";
  rep.trials = 1;
  const double err = existence_error(params, wsb, F, xstar, perturbation);
  rep.set("max_abs_error", err);
  rep.set("frobenius_norm", wsb.frobenius_norm());
  rep.set("row_norm_2_inf", wsb.row_norm_2_inf());
  rep.envelope = "max_{j,s} |f_{j,s}(W*) - F*_{j,s}(x*)| <= eps_target";
  rep.envelope_constant = eps_target;
  rep.pass = err <= eps_target;
  rep.echo("m", static_cast<double>(params.W.rows()));
  rep.echo("L", F.L());
  rep.echo("d", F.d());
  rep.echo("eps_x", wsb.eps_x);
  rep.echo("eps_e", wsb.eps_e);
  if (perturbation) rep.echo("perturbation_spectral_norm", spectral_norm(*perturbation, 1e-6));
  return rep;
}

}  // namespace rnnlab
