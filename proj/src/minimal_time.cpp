#include "posctl/minimal_time.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <unsupported/Eigen/MatrixFunctions>

#include "posctl/errors.hpp"

namespace posctl {

namespace {

constexpr double kPi = std::numbers::pi;

}  // namespace

double SturmLiouvilleBasis::eval(int n, double r) const {
  return std::cos(mu.at(static_cast<std::size_t>(n - 1)) * std::abs(r));
}

double SturmLiouvilleBasis::identity(int n) const {
  const auto i = static_cast<std::size_t>(n - 1);
  return omega0 * alpha.at(i) * alpha.at(i) / (2.0 * (lambda.at(i) + a));
}

double SturmLiouvilleBasis::max_identity_error() const {
  double worst = 0.0;
  for (int n = 1; n <= n_max; ++n) worst = std::max(worst, std::abs(identity(n) - 1.0));
  return worst;
}

SturmLiouvilleBasis sl_basis(double a, int n_max) {
  if (n_max < 1) throw ConfigurationError("n_max must be at least 1");
  SturmLiouvilleBasis b;
  b.a = a;
  b.n_max = n_max;
  for (int n = 1; n <= n_max; ++n) {
    const double mu = (n - 0.5) * kPi;
    b.mu.push_back(mu);
    b.lambda.push_back(mu * mu - a);
    b.alpha.push_back(n % 2 == 0 ? mu : -mu);
  }
  b.nonpositive_first = b.lambda.front() <= 0.0;
  return b;
}

GammaCertificate gamma_certificate_from_coefficients(const Eigen::VectorXd& y0_coeff,
                                                     const Eigen::VectorXd& yf0_coeff,
                                                     const SturmLiouvilleBasis& basis,
                                                     double tol) {
  if (y0_coeff.size() != yf0_coeff.size() || y0_coeff.size() > basis.n_max) {
    throw StructuralError("coefficient vectors must have equal length at most n_max");
  }
  GammaCertificate g;
  for (Eigen::Index i = 0; i < y0_coeff.size(); ++i) {
    g.gamma_candidates.push_back((y0_coeff(i) - yf0_coeff(i)) /
                                 (-basis.alpha[static_cast<std::size_t>(i)]));
  }
  if (g.gamma_candidates.empty()) return g;
  const auto [lo, hi] = std::minmax_element(g.gamma_candidates.begin(), g.gamma_candidates.end());
  g.spread = *hi - *lo;
  g.is_constant = g.spread <= tol;
  if (g.is_constant) g.common_value = 0.5 * (*hi + *lo);
  g.certifies_positive_time = !g.is_constant || std::abs(g.common_value) > tol;
  return g;
}

Eigen::VectorXd sl_coefficients(const std::function<double(double)>& field, const ProbeBall& ball,
                                const SturmLiouvilleBasis& basis, int quad_points) {
  if (!(ball.radius > 0.0)) throw StructuralError("probe ball radius must be positive");
  if (quad_points < 5) throw ConfigurationError("quad_points must be at least 5");
  const Eigen::VectorXd w = simpson_weights(quad_points, -1.0, 1.0);
  Eigen::VectorXd values(quad_points);
  for (int k = 0; k < quad_points; ++k) {
    const double r = -1.0 + 2.0 * k / (quad_points - 1);
    values(k) = field(ball.center + ball.radius * r);
  }
  Eigen::VectorXd c(basis.n_max);
  for (int n = 1; n <= basis.n_max; ++n) {
    double s = 0.0;
    for (int k = 0; k < quad_points; ++k) {
      const double r = -1.0 + 2.0 * k / (quad_points - 1);
      s += w(k) * values(k) * basis.eval(n, r);
    }
    c(n - 1) = s;
  }
  return c;
}

GammaCertificate gamma_certificate(const std::function<double(double)>& y0_restricted,
                                   const std::function<double(double)>& yf0_restricted,
                                   const ProbeBall& ball, const SturmLiouvilleBasis& basis,
                                   double tol) {
  return gamma_certificate_from_coefficients(sl_coefficients(y0_restricted, ball, basis),
                                             sl_coefficients(yf0_restricted, ball, basis), basis,
                                             tol);
}

double ball_potential(const SystemSpec& spec, const ProbeBall& ball) {
  return spec.A(0, 0) * ball.radius * ball.radius / spec.D(0, 0);
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::feasible: return "feasible";
    case Verdict::infeasible: return "infeasible";
    case Verdict::indeterminate: return "indeterminate";
  }
  return "unknown";
}

std::string to_string(ObstructionVerdict v) {
  switch (v) {
    case ObstructionVerdict::obstructed: return "obstructed";
    case ObstructionVerdict::not_obstructed: return "not_obstructed";
    case ObstructionVerdict::not_applicable: return "not_applicable";
  }
  return "unknown";
}

QpResult min_norm_qp(const Eigen::MatrixXd& C, const Eigen::VectorXd& b, int max_iterations,
                     double tol) {
  // Goldfarb-Idnani with H = I. J is orthogonal and R upper triangular with
  // J^T N = [R; 0] for the matrix N of active constraint normals.
  const Eigen::Index nv = C.cols();
  QpResult res;
  res.x = Eigen::VectorXd::Zero(nv);
  Eigen::MatrixXd J = Eigen::MatrixXd::Identity(nv, nv);
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(nv, nv);
  std::vector<Eigen::Index> active;
  std::vector<double> u;
  const double inf = std::numeric_limits<double>::infinity();

  auto rotate_J = [&](Eigen::Index i, double cs, double sn) {
    double* a = J.col(i).data();
    double* c = J.col(i + 1).data();
    for (Eigen::Index k = 0; k < nv; ++k) {
      const double j0 = a[k], j1 = c[k];
      a[k] = cs * j0 + sn * j1;
      c[k] = -sn * j0 + cs * j1;
    }
  };
  auto drop = [&](std::size_t l) {
    const auto q = static_cast<Eigen::Index>(active.size());
    const auto li = static_cast<Eigen::Index>(l);
    for (Eigen::Index c = li; c + 1 < q; ++c) R.col(c) = R.col(c + 1);
    R.col(q - 1).setZero();
    for (Eigen::Index i = li; i + 1 < q; ++i) {
      const double a = R(i, i), c2 = R(i + 1, i);
      const double r = std::hypot(a, c2);
      if (r == 0.0) continue;
      const double cs = a / r, sn = c2 / r;
      for (Eigen::Index c = i; c < q - 1; ++c) {
        const double r0 = R(i, c), r1 = R(i + 1, c);
        R(i, c) = cs * r0 + sn * r1;
        R(i + 1, c) = -sn * r0 + cs * r1;
      }
      rotate_J(i, cs, sn);
    }
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(l));
    u.erase(u.begin() + static_cast<std::ptrdiff_t>(l));
  };

  // Any violated constraint may enter next, so candidates are taken in
  // batches from one full residual evaluation.
  std::vector<Eigen::Index> candidates;
  std::size_t next = 0;
  for (;;) {
    Eigen::Index p = -1;
    double sp = 0.0;
    while (p < 0) {
      if (next == candidates.size()) {
        const Eigen::VectorXd s = C * res.x - b;
        candidates.clear();
        next = 0;
        for (Eigen::Index i = 0; i < s.size(); ++i) {
          if (s(i) < -tol) candidates.push_back(i);
        }
        if (candidates.empty()) break;
        const std::size_t keep = std::min<std::size_t>(candidates.size(), 64);
        std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                          candidates.end(), [&](Eigen::Index a, Eigen::Index c) { return s(a) < s(c); });
        candidates.resize(keep);
      }
      const Eigen::Index i = candidates[next++];
      const double si = C.row(i).dot(res.x) - b(i);
      if (si < -tol) {
        p = i;
        sp = si;
      }
    }
    if (p < 0) {
      res.converged = true;
      res.feasible = true;
      break;
    }
    const Eigen::VectorXd np = C.row(p).transpose();
    double u_plus = 0.0;
    for (bool added = false; !added;) {
      if (++res.iterations > max_iterations) {
        res.active = static_cast<int>(active.size());
        return res;
      }
      const auto q = static_cast<Eigen::Index>(active.size());
      Eigen::VectorXd d = J.transpose() * np;
      const Eigen::VectorXd z = J.rightCols(nv - q) * d.tail(nv - q);
      Eigen::VectorXd r;
      if (q > 0) r = R.topLeftCorner(q, q).triangularView<Eigen::Upper>().solve(d.head(q));
      double t1 = inf;
      std::size_t l = 0;
      for (Eigen::Index j = 0; j < q; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        if (r(j) > 1e-14 && u[ju] / r(j) < t1) {
          t1 = u[ju] / r(j);
          l = ju;
        }
      }
      const double t2 = z.norm() > 1e-12 * np.norm() ? -sp / z.dot(np) : inf;
      const double t = std::min(t1, t2);
      if (!std::isfinite(t)) {
        res.converged = true;
        res.feasible = false;
        res.active = static_cast<int>(active.size());
        return res;
      }
      for (Eigen::Index j = 0; j < q; ++j) u[static_cast<std::size_t>(j)] -= t * r(j);
      u_plus += t;
      if (std::isfinite(t2)) {
        res.x += t * z;
        sp = np.dot(res.x) - b(p);
      }
      if (t2 <= t1) {
        // zero d below position q by rotations from the bottom up
        for (Eigen::Index i = nv - 2; i >= q; --i) {
          const double a = d(i), c2 = d(i + 1);
          const double rr = std::hypot(a, c2);
          if (rr == 0.0) continue;
          d(i) = rr;
          d(i + 1) = 0.0;
          rotate_J(i, a / rr, c2 / rr);
        }
        R.col(q).head(q + 1) = d.head(q + 1);
        active.push_back(p);
        u.push_back(u_plus);
        added = true;
      } else {
        drop(l);
      }
    }
  }
  res.active = static_cast<int>(active.size());
  return res;
}

namespace {

/// Piecewise-constant control on `knots` intervals, whitened so that the
/// L2 cost is the Euclidean norm of the parameters. States are affine in the
/// parameters; they are tabulated at every audit substep.
struct Discretization {
  ModalSystem sys;
  int J = 0;
  int n = 0;
  int m = 0;
  int cm = 0;
  int K = 0;
  int sub = 1;  // audit substeps per knot
  double h = 0.0;
  Eigen::MatrixXd unwhiten;               // cm x cm: u = unwhiten * w per channel
  std::vector<Eigen::VectorXd> free;      // substeps 1..K sub, flattened states
  std::vector<Eigen::MatrixXd> response;  // after r + 1 substeps: flattened state x (cm m)
  SpectralState target;

  Eigen::Index nv() const { return static_cast<Eigen::Index>(K) * cm * m; }
  Eigen::Index rows() const { return static_cast<Eigen::Index>(J + 1) * n; }

  /// Linear part of the flattened state at substep i, restricted to the
  /// modes of component c.
  Eigen::MatrixXd state_map(int i, int c) const {
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(J + 1, nv());
    const Eigen::Index s0 = static_cast<Eigen::Index>(c) * (J + 1);
    for (int k = 0; k * sub < i; ++k) {
      X.middleCols(static_cast<Eigen::Index>(k) * cm * m, cm * m) =
          response[static_cast<std::size_t>(i - k * sub - 1)].middleRows(s0, J + 1);
    }
    return X;
  }
  Eigen::VectorXd free_modes(int i, int c) const {
    return free[static_cast<std::size_t>(i - 1)].segment(static_cast<Eigen::Index>(c) * (J + 1), J + 1);
  }
};

Discretization discretize(const FeasibilityProblem& P) {
  if (!(P.T > 0.0)) throw ConfigurationError("T must be positive");
  if (P.knots < 1) throw ConfigurationError("knots must be at least 1");
  if (P.audit_factor < 1) throw ConfigurationError("audit_factor must be at least 1");
  if (P.constraint_points < 2) throw ConfigurationError("constraint_points must be at least 2");
  if (P.control_highest_mode < 0 || P.control_highest_mode > P.state_modes) {
    throw ConfigurationError("control_highest_mode must lie in 0..state_modes");
  }
  Discretization d;
  d.sys = ModalSystem::neumann(P.spec, P.state_modes);
  d.J = P.state_modes;
  d.n = d.sys.n();
  d.m = d.sys.m();
  d.cm = P.control_highest_mode + 1;
  d.K = P.knots;
  d.sub = P.audit_factor;
  d.h = P.T / P.knots;
  for (const SpectralState* s : {&P.y0, &P.target_seed}) {
    if (s->highest_mode() != d.J || s->components() != d.n) {
      throw StructuralError("data must have state_modes + 1 modes and n components");
    }
  }
  const Eigen::MatrixXd Gcc = d.sys.coupling.topLeftCorner(d.cm, d.cm);
  const Eigen::LLT<Eigen::MatrixXd> llt(Gcc);
  if (llt.info() != Eigen::Success) throw StructuralError("control coupling is not positive definite");
  const Eigen::MatrixXd Lt = llt.matrixU();
  d.unwhiten = Lt.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(d.cm, d.cm)) /
               std::sqrt(d.h);

  const ModePropagator prop(d.sys, d.h / d.sub);
  const int total = d.K * d.sub;
  Eigen::MatrixXd x = P.y0.coeff;
  for (int i = 1; i <= total; ++i) {
    prop.free_step(x);
    d.free.emplace_back(Eigen::Map<const Eigen::VectorXd>(x.data(), x.size()));
  }
  const Eigen::MatrixXd& G = d.sys.coupling;
  d.response.assign(static_cast<std::size_t>(total), Eigen::MatrixXd(d.rows(), d.cm * d.m));
  for (int c = 0; c < d.m; ++c) {
    for (int i = 0; i < d.cm; ++i) {
      const Eigen::MatrixXd forcing = G.col(i) * d.sys.B.col(c).transpose();
      Eigen::MatrixXd s = Eigen::MatrixXd::Zero(d.J + 1, d.n);
      for (int r = 0; r < total; ++r) {
        if (r < d.sub) {
          prop.forced_step(s, forcing);
        } else {
          prop.free_step(s);
        }
        d.response[static_cast<std::size_t>(r)].col(c * d.cm + i) =
            Eigen::Map<const Eigen::VectorXd>(s.data(), s.size());
      }
    }
  }
  for (auto& R : d.response) {
    for (int c = 0; c < d.m; ++c) R.middleCols(c * d.cm, d.cm) = R.middleCols(c * d.cm, d.cm) * d.unwhiten;
  }
  d.target = propagate_free(d.sys, P.target_seed, P.T);
  return d;
}

ControlSignal control_from(const Discretization& d, const Eigen::VectorXd& w) {
  ControlSegment seg;
  seg.t0 = 0.0;
  seg.h = d.h / d.sub;
  seg.steps = d.K * d.sub;
  for (int k = 0; k < d.K; ++k) {
    Eigen::MatrixXd u(d.cm, d.m);
    for (int c = 0; c < d.m; ++c) {
      u.col(c) = d.unwhiten * w.segment((static_cast<Eigen::Index>(k) * d.m + c) * d.cm, d.cm);
    }
    for (int s = 0; s < d.sub; ++s) seg.values.push_back(u);
  }
  ControlSignal sig(d.cm, d.m);
  sig.append(seg);
  return sig;
}

/// Rows of "state >= floor" in the whitened parameters: value = H w + base.
struct RowSet {
  Eigen::MatrixXd H;
  Eigen::VectorXd base;

  void add(const Eigen::MatrixXd& rows, const Eigen::VectorXd& values) {
    const Eigen::Index r0 = H.rows();
    H.conservativeResize(r0 + rows.rows(), rows.cols());
    base.conservativeResize(r0 + rows.rows());
    H.bottomRows(rows.rows()) = rows;
    base.tail(rows.rows()) = values;
  }
};

}  // namespace

FeasibilityResult feasibility(const FeasibilityProblem& P) {
  const Discretization d = discretize(P);
  FeasibilityResult res;
  res.T = P.T;
  const int total = d.K * d.sub;

  // endpoint: controlled modes of every component at T
  const Eigen::Index eq_rows = static_cast<Eigen::Index>(d.cm) * d.n;
  Eigen::MatrixXd Ceq(eq_rows, d.nv());
  Eigen::VectorXd deq(eq_rows);
  for (int c = 0; c < d.n; ++c) {
    const Eigen::MatrixXd X = d.state_map(total, c);
    const Eigen::VectorXd f = d.free_modes(total, c);
    for (int p = 0; p < d.cm; ++p) {
      const Eigen::Index e = static_cast<Eigen::Index>(c) * d.cm + p;
      Ceq.row(e) = X.row(p);
      deq(e) = d.target.coeff(p, c) - f(p);
    }
  }
  const Eigen::VectorXd scale = Ceq.rowwise().norm().cwiseMax(1e-300).cwiseInverse();
  const Eigen::MatrixXd Cs = scale.asDiagonal() * Ceq;
  const Eigen::VectorXd ds = scale.asDiagonal() * deq;
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(Cs, Eigen::ComputeThinU | Eigen::ComputeFullV);
  const Eigen::VectorXd& sv = svd.singularValues();
  Eigen::Index rank = 0;
  while (rank < sv.size() && sv(rank) > 1e-12 * sv(0)) ++rank;
  const Eigen::MatrixXd V = svd.matrixV();
  const auto pinv = [&](const Eigen::VectorXd& rhs) -> Eigen::VectorXd {
    return V.leftCols(rank) * (sv.head(rank).cwiseInverse().asDiagonal() *
                               (svd.matrixU().leftCols(rank).transpose() * rhs));
  };
  const Eigen::VectorXd wp = pinv(ds);
  const Eigen::MatrixXd Z = V.rightCols(d.nv() - rank);
  const bool constrained = std::isfinite(P.M);

  // base rows: every knot, every component, constraint grid
  RowSet rows;
  const GridEvaluator coarse(d.J, P.constraint_points);
  const GridEvaluator fine(d.J, P.constraint_points * P.audit_factor);
  if (constrained) {
    for (int j = 1; j <= d.K; ++j) {
      for (int c = 0; c < d.n; ++c) {
        const int i = j * d.sub;
        rows.add(coarse.table() * d.state_map(i, c), coarse.table() * d.free_modes(i, c));
      }
    }
  }

  // Audit on the fine grid; violated audit points join the constraint set
  // and the program is solved again.
  EvolveOptions audit;
  audit.grid_points = P.constraint_points * P.audit_factor;
  std::ostringstream detail;
  const int rounds = 12;
  for (int round = 0; round < rounds; ++round) {
    Eigen::VectorXd w = wp;
    if (constrained && Z.cols() > 0) {
      const Eigen::MatrixXd Cq = rows.H * Z;
      const Eigen::VectorXd bq =
          Eigen::VectorXd::Constant(rows.H.rows(), -P.M) - rows.base - rows.H * wp;
      const Eigen::VectorXd norms = Cq.rowwise().norm();
      std::vector<Eigen::Index> keep;
      bool empty_set = false;
      for (Eigen::Index i = 0; i < Cq.rows(); ++i) {
        if (norms(i) > 1e-14) {
          keep.push_back(i);
        } else if (bq(i) > P.kkt_tol) {
          empty_set = true;
        }
      }
      QpResult qp;
      if (!empty_set) {
        Eigen::MatrixXd Ck(static_cast<Eigen::Index>(keep.size()), Cq.cols());
        Eigen::VectorXd bk(Ck.rows());
        for (std::size_t i = 0; i < keep.size(); ++i) {
          const auto ii = static_cast<Eigen::Index>(i);
          Ck.row(ii) = Cq.row(keep[i]) / norms(keep[i]);
          bk(ii) = bq(keep[i]) / norms(keep[i]);
        }
        qp = min_norm_qp(Ck, bk, P.max_iterations, P.kkt_tol);
        res.iterations += qp.iterations;
        res.active_constraints = qp.active;
      }
      if (empty_set || (qp.converged && !qp.feasible)) {
        res.verdict = Verdict::infeasible;
        detail << "constraint set empty with " << rows.H.rows() << " sampled constraints";
        res.detail = detail.str();
        return res;
      }
      if (!qp.converged) {
        res.verdict = Verdict::indeterminate;
        detail << "iteration cap reached";
        res.detail = detail.str();
        return res;
      }
      w = wp + Z * qp.x;
    }
    // one refinement step against round-off in the endpoint rows
    w += pinv(ds - Cs * w);

    ControlSignal control = control_from(d, w);
    TrajectoryRecord rec = evolve(d.sys, P.y0, control, audit);
    // large controls lose digits in the endpoint; refine against the
    // simulated residual
    for (int fix = 0; fix < 2; ++fix) {
      const Eigen::MatrixXd miss = d.target.coeff.topRows(d.cm) - rec.final_state().coeff.topRows(d.cm);
      if (miss.norm() <= 0.1 * P.steer_tol) break;
      w += pinv(scale.asDiagonal() * Eigen::Map<const Eigen::VectorXd>(miss.data(), miss.size()));
      control = control_from(d, w);
      rec = evolve(d.sys, P.y0, control, audit);
    }
    double worst = std::numeric_limits<double>::infinity();
    for (const auto& mn : rec.minima) worst = std::min(worst, mn.minCoeff());
    res.min_state = worst;
    res.endpoint_defect =
        (rec.final_state().coeff.topRows(d.cm) - d.target.coeff.topRows(d.cm)).norm();
    res.control_norm = control.l2_norm(d.sys.coupling);
    res.control = control;
    if (!constrained || worst >= -P.M - P.certify_tol) {
      if (res.endpoint_defect > P.steer_tol) {
        res.verdict = Verdict::indeterminate;
        detail << "endpoint defect " << res.endpoint_defect << " above tolerance";
      } else {
        res.verdict = Verdict::feasible;
        detail << "audit minimum " << worst << " after " << round << " refinements";
      }
      res.detail = detail.str();
      return res;
    }
    // add the most violated fine point of every violated substep and component
    int added = 0;
    for (int i = 1; i <= total; ++i) {
      const auto& state = rec.states[static_cast<std::size_t>(i)];
      const Eigen::MatrixXd vals = fine.values(state);
      for (int c = 0; c < d.n; ++c) {
        Eigen::Index at = 0;
        if (vals.col(c).minCoeff(&at) >= -P.M - P.certify_tol) continue;
        rows.add(fine.table().row(at) * d.state_map(i, c),
                 fine.table().row(at) * d.free_modes(i, c));
        ++added;
      }
    }
    if (added == 0) break;
  }
  res.verdict = Verdict::indeterminate;
  detail << "audit minimum " << res.min_state << " still below the floor after " << rounds
         << " refinements";
  res.detail = detail.str();
  return res;
}

BisectionResult bisect_minimal_time(const FeasibilityProblem& problem, double T_lo, double T_hi,
                                    int iterations) {
  if (!(T_lo > 0.0 && T_lo < T_hi)) throw SetupError("need 0 < T_lo < T_hi");
  BisectionResult out;
  auto probe = [&](double T) {
    FeasibilityProblem p = problem;
    p.T = T;
    const FeasibilityResult r = feasibility(p);
    out.evaluations.push_back({T, r.verdict, r.min_state});
    return r.verdict;
  };
  if (probe(T_lo) == Verdict::feasible) throw SetupError("T_lo is already feasible");
  if (probe(T_hi) != Verdict::feasible) throw SetupError("T_hi is not feasible");
  double lo = T_lo, hi = T_hi;
  for (int i = 0; i < iterations; ++i) {
    const double mid = 0.5 * (lo + hi);
    (probe(mid) == Verdict::feasible ? hi : lo) = mid;
  }
  out.lo = lo;
  out.hi = hi;
  out.T_bar_estimate = 0.5 * (lo + hi);
  for (const auto& a : out.evaluations) {
    for (const auto& b : out.evaluations) {
      if (a.verdict == Verdict::feasible && b.verdict != Verdict::feasible && b.T > a.T) {
        out.monotone_consistent = false;
      }
    }
  }
  return out;
}

bool matches_mass_pattern(const SystemSpec& spec, std::string* why) {
  auto fail = [why](const char* reason) {
    if (why) *why = reason;
    return false;
  };
  constexpr double tol = 1e-12;
  if (spec.n() != 2) return fail("needs two components");
  if (std::abs(spec.D(0, 1)) > tol || std::abs(spec.D(1, 0)) > tol) return fail("needs diagonal D");
  if (spec.B.row(0).cwiseAbs().maxCoeff() > tol) return fail("control must act on the second component only");
  if (std::abs(spec.A(0, 0)) > tol || std::abs(spec.A(1, 0)) > tol) {
    return fail("needs a11 = a21 = 0");
  }
  if (std::abs(spec.A(0, 1) + spec.A(1, 1)) > tol || spec.A(0, 1) < -tol) {
    return fail("needs a12 = -a22 >= 0");
  }
  return true;
}

MassObstruction mass_obstruction(const SystemSpec& spec, const SpectralState& y0,
                                 const SpectralState& yf0, double T) {
  MassObstruction mo;
  std::string why;
  if (!matches_mass_pattern(spec, &why)) {
    mo.reason = why;
    return mo;
  }
  if (y0.components() != 2 || yf0.components() != 2) {
    throw StructuralError("data must have two components");
  }
  // e_0 = 1 on (0,1): the mode-0 coefficient is the integral
  mo.controlled_lower = y0.coeff(0, 0);
  mo.target_upper = yf0.coeff(0, 0) + yf0.coeff(0, 1);
  const Eigen::Vector2d mean(yf0.coeff(0, 0), yf0.coeff(0, 1));
  mo.target_mass = ((spec.A * T).exp() * mean)(0);
  const double tol = 1e-12 * std::max(1.0, std::abs(mo.target_upper));
  if (mo.controlled_lower > mo.target_upper + tol) {
    mo.verdict = ObstructionVerdict::obstructed;
    mo.reason = "int y1 cannot decrease under a nonnegative y2, but the target's int y1 stays below it";
  } else {
    mo.verdict = ObstructionVerdict::not_obstructed;
    mo.reason = "mass bounds are compatible";
  }
  return mo;
}

}  // namespace posctl
