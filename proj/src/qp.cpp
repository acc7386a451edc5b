#include "camtraj/qp.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace camtraj {

namespace {

using Eigen::VectorXd;

double infNorm(const VectorXd& v) { return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>(); }

// Largest α keeping s + α ds ≥ 0 on the active set (infinite if unblocked).
double maxStep(const VectorXd& s, const VectorXd& ds, const std::vector<int>& idx) {
  double alpha = std::numeric_limits<double>::infinity();
  for (int i : idx) {
    if (ds[i] < 0.0) alpha = std::min(alpha, -s[i] / ds[i]);
  }
  return alpha;
}

}  // namespace

std::string toString(QpStatus status) {
  switch (status) {
    case QpStatus::kSolved: return "solved";
    case QpStatus::kMaxIterations: return "max-iterations";
    case QpStatus::kNumericalError: return "numerical-error";
  }
  return "unknown";
}

namespace {

QpResult solveScaled(const QpProblem& qp, const VectorXd& x_start, const QpSettings& settings);

}  // namespace

// Ruiz equilibration of the KKT matrix [H Aᵀ; A 0]: columns and rows are
// rescaled until their largest entries are close to one.
QpResult solveQp(const QpProblem& qp, const VectorXd& x_start, const QpSettings& settings) {
  const int n = static_cast<int>(qp.c.size());
  const int m = static_cast<int>(qp.b.size());
  VectorXd d = VectorXd::Ones(n), e = VectorXd::Ones(m);
  SparseMat H = qp.H.selfadjointView<Eigen::Lower>();
  SparseMat A = qp.A;
  for (int pass = 0; pass < settings.equilibration_passes; ++pass) {
    VectorXd col = VectorXd::Zero(n), row = VectorXd::Zero(m);
    for (int j = 0; j < n; ++j) {
      for (SparseMat::InnerIterator it(H, j); it; ++it) col[j] = std::max(col[j], std::abs(it.value()));
      for (SparseMat::InnerIterator it(A, j); it; ++it) {
        col[j] = std::max(col[j], std::abs(it.value()));
        row[it.row()] = std::max(row[it.row()], std::abs(it.value()));
      }
    }
    const VectorXd dc = col.unaryExpr([](double v) { return v > 1e-8 ? 1.0 / std::sqrt(v) : 1.0; });
    const VectorXd dr = row.unaryExpr([](double v) { return v > 1e-8 ? 1.0 / std::sqrt(v) : 1.0; });
    H = dc.asDiagonal() * H * dc.asDiagonal();
    A = dr.asDiagonal() * A * dc.asDiagonal();
    d = d.cwiseProduct(dc);
    e = e.cwiseProduct(dr);
  }
  if (settings.equilibration_passes == 0) return solveScaled(qp, x_start, settings);

  QpProblem sq;
  sq.H = H.triangularView<Eigen::Lower>();
  sq.c = d.cwiseProduct(qp.c);
  sq.A = A;
  sq.b = e.cwiseProduct(qp.b);
  sq.lower = qp.lower.cwiseQuotient(d);
  sq.upper = qp.upper.cwiseQuotient(d);
  QpResult res = solveScaled(sq, x_start.cwiseQuotient(d), settings);
  res.x = res.x.cwiseProduct(d);
  res.y = res.y.cwiseProduct(e);
  res.z_lower = res.z_lower.cwiseQuotient(d);
  res.z_upper = res.z_upper.cwiseQuotient(d);
  return res;
}

namespace {

QpResult solveScaled(const QpProblem& qp, const VectorXd& x_start, const QpSettings& settings) {
  const int n = static_cast<int>(qp.c.size());
  const int m = static_cast<int>(qp.b.size());
  constexpr double kInf = std::numeric_limits<double>::infinity();

  std::vector<int> lo_idx, hi_idx;
  for (int i = 0; i < n; ++i) {
    if (qp.lower[i] > -kInf) lo_idx.push_back(i);
    if (qp.upper[i] < kInf) hi_idx.push_back(i);
  }
  const int nb = static_cast<int>(lo_idx.size() + hi_idx.size());

  QpResult res;
  VectorXd x = x_start;
  for (int i = 0; i < n; ++i) {
    const double lo = qp.lower[i], hi = qp.upper[i];
    if (lo > -kInf && hi < kInf) {
      const double margin = std::min(1e-2 * std::max(1.0, hi - lo), 0.25 * (hi - lo));
      x[i] = std::clamp(x[i], lo + margin, hi - margin);
    } else if (lo > -kInf) {
      x[i] = std::max(x[i], lo + 1e-2);
    } else if (hi < kInf) {
      x[i] = std::min(x[i], hi - 1e-2);
    }
  }
  VectorXd y = VectorXd::Zero(m);
  VectorXd zl = VectorXd::Zero(n), zu = VectorXd::Zero(n);
  VectorXd sl = VectorXd::Zero(n), su = VectorXd::Zero(n);
  for (int i : lo_idx) zl[i] = 1.0;
  for (int i : hi_idx) zu[i] = 1.0;

  // KKT lower triangle: [H + Σ + ρI, ·; A, -δI]. Diagonal slots are always
  // present so that only their values change between iterations.
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(qp.H.nonZeros() + qp.A.nonZeros() + n + m);
  for (int col = 0; col < n; ++col) {
    for (SparseMat::InnerIterator it(qp.H, col); it; ++it) {
      if (it.row() > col) trip.emplace_back(it.row(), col, it.value());
    }
    trip.emplace_back(col, col, 0.0);
  }
  for (int col = 0; col < n; ++col) {
    for (SparseMat::InnerIterator it(qp.A, col); it; ++it) trip.emplace_back(n + it.row(), col, it.value());
  }
  for (int r = 0; r < m; ++r) trip.emplace_back(n + r, n + r, -settings.reg_dual);
  SparseMat K(n + m, n + m);
  K.setFromTriplets(trip.begin(), trip.end());
  K.makeCompressed();

  VectorXd h_diag = VectorXd::Zero(n);
  for (int col = 0; col < n; ++col) {
    for (SparseMat::InnerIterator it(qp.H, col); it; ++it) {
      if (it.row() == col) h_diag[col] += it.value();
    }
  }
  std::vector<int> diag_slot(n);
  for (int col = 0; col < n; ++col) {
    for (int p = K.outerIndexPtr()[col]; p < K.outerIndexPtr()[col + 1]; ++p) {
      if (K.innerIndexPtr()[p] == col) {
        diag_slot[col] = p;
        break;
      }
    }
  }

  Eigen::SimplicialLDLT<SparseMat, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt;
  ldlt.analyzePattern(K);

  const SparseMat H_full = qp.H.selfadjointView<Eigen::Lower>();
  const SparseMat At = qp.A.transpose();
  VectorXd sigma = VectorXd::Zero(n);

  // Solves the unregularized reduced system with iterative refinement.
  auto solveKkt = [&](const VectorXd& r1, const VectorXd& r2, VectorXd& dx, VectorXd& q) {
    VectorXd rhs(n + m);
    rhs << r1, r2;
    VectorXd sol = ldlt.solve(rhs);
    for (int k = 0; k < settings.refinement_steps; ++k) {
      const VectorXd sx = sol.head(n), sq = sol.tail(m);
      VectorXd resid(n + m);
      resid.head(n) = r1 - (H_full * sx + sigma.cwiseProduct(sx) + At * sq);
      resid.tail(m) = r2 - qp.A * sx;
      if (infNorm(resid.head(n)) <= 1e-10 * (1.0 + infNorm(r1)) && infNorm(resid.tail(m)) <= 1e-13 * (1.0 + infNorm(r2))) {
        break;
      }
      sol += ldlt.solve(resid);
    }
    dx = sol.head(n);
    q = sol.tail(m);
  };

  const double scale_b = 1.0 + infNorm(qp.b);
  const double scale_c = 1.0 + infNorm(qp.c);
  constexpr double kAcceptableFactor = 1e3;
  auto acceptable = [&](double rp_norm, double rd_norm, double gap, double factor) {
    return rp_norm <= factor * settings.tol_primal * scale_b && rd_norm <= factor * settings.tol_dual * scale_c &&
           gap <= factor * settings.tol_gap;
  };
  VectorXd last_x = x, last_y = y, last_zl = zl, last_zu = zu;
  res.primal_residual = res.dual_residual = res.gap = std::numeric_limits<double>::infinity();

  for (int iter = 0; iter <= settings.max_iterations; ++iter) {
    for (int i : lo_idx) sl[i] = x[i] - qp.lower[i];
    for (int i : hi_idx) su[i] = qp.upper[i] - x[i];

    const VectorXd rd = H_full * x + qp.c - At * y - zl + zu;
    const VectorXd rp = qp.A * x - qp.b;
    double mu = 0.0;
    for (int i : lo_idx) mu += sl[i] * zl[i];
    for (int i : hi_idx) mu += su[i] * zu[i];
    mu = nb > 0 ? mu / nb : 0.0;

    const double rp_norm = infNorm(rp), rd_norm = infNorm(rd);
    if (!std::isfinite(rp_norm) || !std::isfinite(rd_norm) || !std::isfinite(mu)) {
      // Fall back to the last finite iterate.
      x = last_x;
      y = last_y;
      zl = last_zl;
      zu = last_zu;
      res.status = acceptable(res.primal_residual, res.dual_residual, res.gap, kAcceptableFactor)
                       ? QpStatus::kSolved
                       : QpStatus::kNumericalError;
      break;
    }
    res.iterations = iter;
    res.primal_residual = rp_norm;
    res.dual_residual = rd_norm;
    res.gap = mu;
    last_x = x;
    last_y = y;
    last_zl = zl;
    last_zu = zu;
    if (acceptable(rp_norm, rd_norm, mu, 1.0)) {
      res.status = QpStatus::kSolved;
      break;
    }
    // Once the gap is far below tolerance the residuals are at working precision.
    if (mu <= 1e-3 * settings.tol_gap && nb > 0) {
      res.status = acceptable(rp_norm, rd_norm, mu, kAcceptableFactor) ? QpStatus::kSolved : QpStatus::kNumericalError;
      break;
    }
    if (iter == settings.max_iterations) {
      res.status = acceptable(rp_norm, rd_norm, mu, kAcceptableFactor) ? QpStatus::kSolved : QpStatus::kMaxIterations;
      break;
    }

    sigma.setZero();
    for (int i : lo_idx) sigma[i] += zl[i] / sl[i];
    for (int i : hi_idx) sigma[i] += zu[i] / su[i];
    for (int i = 0; i < n; ++i) K.valuePtr()[diag_slot[i]] = h_diag[i] + sigma[i] + settings.reg_primal;
    ldlt.factorize(K);
    if (ldlt.info() != Eigen::Success) {
      res.status = QpStatus::kNumericalError;
      break;
    }

    VectorXd dx, q;
    VectorXd rcl = VectorXd::Zero(n), rcu = VectorXd::Zero(n);
    auto direction = [&](VectorXd& dzl, VectorXd& dzu) {
      VectorXd r1 = -rd;
      for (int i : lo_idx) r1[i] += rcl[i] / sl[i];
      for (int i : hi_idx) r1[i] -= rcu[i] / su[i];
      solveKkt(r1, -rp, dx, q);
      dzl.setZero(n);
      dzu.setZero(n);
      for (int i : lo_idx) dzl[i] = (rcl[i] - zl[i] * dx[i]) / sl[i];
      for (int i : hi_idx) dzu[i] = (rcu[i] + zu[i] * dx[i]) / su[i];
    };
    auto stepLength = [&](const VectorXd& dzl, const VectorXd& dzu) {
      const VectorXd neg_dx = -dx;
      double a = maxStep(sl, dx, lo_idx);
      a = std::min(a, maxStep(su, neg_dx, hi_idx));
      a = std::min(a, maxStep(zl, dzl, lo_idx));
      a = std::min(a, maxStep(zu, dzu, hi_idx));
      return a;
    };

    // Predictor.
    for (int i : lo_idx) rcl[i] = -sl[i] * zl[i];
    for (int i : hi_idx) rcu[i] = -su[i] * zu[i];
    VectorXd dzl_aff, dzu_aff;
    direction(dzl_aff, dzu_aff);
    const VectorXd dx_aff = dx;
    const double a_aff = std::min(1.0, stepLength(dzl_aff, dzu_aff));

    double sigma_c = 0.0;
    if (nb > 0) {
      double mu_aff = 0.0;
      for (int i : lo_idx) mu_aff += (sl[i] + a_aff * dx_aff[i]) * (zl[i] + a_aff * dzl_aff[i]);
      for (int i : hi_idx) mu_aff += (su[i] - a_aff * dx_aff[i]) * (zu[i] + a_aff * dzu_aff[i]);
      mu_aff /= nb;
      sigma_c = std::pow(std::max(mu_aff, 0.0) / std::max(mu, 1e-300), 3.0);
      sigma_c = std::min(sigma_c, 1.0);
    }

    // Corrector.
    for (int i : lo_idx) rcl[i] = sigma_c * mu - sl[i] * zl[i] - dx_aff[i] * dzl_aff[i];
    for (int i : hi_idx) rcu[i] = sigma_c * mu - su[i] * zu[i] + dx_aff[i] * dzu_aff[i];
    VectorXd dzl, dzu;
    direction(dzl, dzu);
    const double alpha = std::min(1.0, 0.995 * stepLength(dzl, dzu));

    x += alpha * dx;
    y -= alpha * q;
    zl += alpha * dzl;
    zu += alpha * dzu;
  }

  res.x = std::move(x);
  res.y = std::move(y);
  res.z_lower = std::move(zl);
  res.z_upper = std::move(zu);
  return res;
}

}  // namespace

}  // namespace camtraj
