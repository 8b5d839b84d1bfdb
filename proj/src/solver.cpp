#include "ofmpc/solver.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

namespace ofmpc {

std::string to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::optimal:
            return "optimal";
        case SolveStatus::infeasible:
            return "infeasible";
        case SolveStatus::max_iter:
            return "max_iter";
    }
    return "unknown";
}

namespace detail {

namespace {

Vec apply_j(const Vec& v) {
    Vec out = -v;
    out(0) = v(0);
    return out;
}

double j_norm_sq(const Vec& v) { return v(0) * v(0) - v.tail(v.size() - 1).squaredNorm(); }

}  // namespace

Vec SocScaling::apply(const Vec& v) const {
    return eta * (2.0 * w.dot(v) * w - apply_j(v));
}

Vec SocScaling::apply_inverse(const Vec& v) const {
    const Vec a = apply_j(w);
    return (2.0 * a.dot(v) * a - apply_j(v)) / eta;
}

SocScaling nt_scaling(const Vec& s, const Vec& z) {
    const double sn = std::sqrt(j_norm_sq(s));
    const double zn = std::sqrt(j_norm_sq(z));
    const Vec sb = s / sn;
    const Vec zb = z / zn;
    const double gamma = std::sqrt(0.5 * (1.0 + zb.dot(sb)));
    // wbar defines the squared scaling 2 wbar wbar' - J; its square root uses
    // v = (wbar + e) / sqrt(2 (wbar_0 + 1)).
    Vec v = (sb + apply_j(zb)) / (2.0 * gamma);
    v(0) += 1.0;
    SocScaling out;
    out.w = v / std::sqrt(2.0 * v(0));
    out.eta = std::sqrt(sn / zn);
    return out;
}

double soc_max_step(const Vec& u, const Vec& du) {
    const double inf = std::numeric_limits<double>::infinity();
    const Eigen::Index n = u.size();
    const auto u1 = u.tail(n - 1);
    const auto d1 = du.tail(n - 1);
    const double a = du(0) * du(0) - d1.squaredNorm();
    const double b = 2.0 * (u(0) * du(0) - u1.dot(d1));
    const double c = u(0) * u(0) - u1.squaredNorm();
    if (c <= 0.0) {
        return 0.0;
    }
    // Smallest positive root of a t^2 + b t + c, where c > 0.
    double best = inf;
    const double scale = std::max({std::abs(a), std::abs(b), c});
    if (std::abs(a) <= 1e-15 * scale) {
        if (b < 0.0) {
            best = -c / b;
        }
    } else {
        const double disc = b * b - 4.0 * a * c;
        if (disc >= 0.0) {
            const double sq = std::sqrt(disc);
            const double q = -0.5 * (b + (b >= 0.0 ? sq : -sq));
            const double r1 = q / a;
            const double r2 = (q != 0.0) ? c / q : inf;
            for (double r : {r1, r2}) {
                if (r > 0.0 && r < best) {
                    best = r;
                }
            }
        }
    }
    // Moving along a direction with du0 < 0 that never meets the boundary
    // quadratic would leave through the apex; guard the linear part too.
    if (du(0) < 0.0) {
        best = std::min(best, -u(0) / du(0));
    }
    return best;
}

}  // namespace detail

namespace {

using detail::SocScaling;

struct ConeProgram {
    Vec c;
    Mat G;
    Vec h;
    std::vector<std::pair<int, int>> cones;  // (offset, dim)
    double offset = 0.0;                     // added to c'x for the relative gap
};

struct IpmResult {
    Vec x, s, z;
    bool converged = false;
    int iterations = 0;
    double gap = 0.0;
};

Vec jordan_product(const Vec& u, const Vec& v) {
    Vec out(u.size());
    out(0) = u.dot(v);
    out.tail(u.size() - 1) = u(0) * v.tail(v.size() - 1) + v(0) * u.tail(u.size() - 1);
    return out;
}

/// Solves lambda o x = d.
Vec jordan_divide(const Vec& lambda, const Vec& d) {
    const Eigen::Index n = lambda.size();
    const double l0 = lambda(0);
    const auto l1 = lambda.tail(n - 1);
    const double det = l0 * l0 - l1.squaredNorm();
    Vec out(n);
    out(0) = (l0 * d(0) - l1.dot(d.tail(n - 1))) / det;
    out.tail(n - 1) = (d.tail(n - 1) - out(0) * l1) / l0;
    return out;
}

void shift_into_cones(Vec& v, const std::vector<std::pair<int, int>>& cones) {
    double alpha = -std::numeric_limits<double>::infinity();
    for (const auto& [off, dim] : cones) {
        const auto seg = v.segment(off, dim);
        alpha = std::max(alpha, seg.tail(dim - 1).norm() - seg(0));
    }
    if (alpha >= -1e-8 * std::max(1.0, v.norm())) {
        for (const auto& [off, dim] : cones) {
            v(off) += 1.0 + alpha;
        }
    }
}

IpmResult solve_cone_program(const ConeProgram& cp, const Vec* x0, int max_iter, double feas_tol,
                             double gap_tol) {
    const Eigen::Index n = cp.G.cols();
    const int ncones = static_cast<int>(cp.cones.size());

    std::vector<Mat> g_rows;
    for (const auto& [off, dim] : cp.cones) {
        g_rows.push_back(cp.G.middleRows(off, dim));
    }
    const Mat gtg_all = cp.G.transpose() * cp.G;

    IpmResult res;
    Eigen::LLT<Mat> init(gtg_all);
    if (x0 != nullptr) {
        res.x = *x0;
    } else {
        res.x = init.solve(cp.G.transpose() * cp.h);
    }
    res.s = cp.h - cp.G * res.x;
    res.z = -cp.G * init.solve(cp.c);
    shift_into_cones(res.s, cp.cones);
    shift_into_cones(res.z, cp.cones);

    const double hnorm = std::max(1.0, cp.h.norm());
    const double cnorm = std::max(1.0, cp.c.norm());

    std::vector<SocScaling> scal(static_cast<std::size_t>(ncones));
    Vec lambda(cp.h.size());
    IpmResult best = res;
    double best_merit = std::numeric_limits<double>::infinity();
    int stall = 0;

    for (int it = 0; it <= max_iter; ++it) {
        res.iterations = it;
        const Vec rx = cp.G.transpose() * res.z + cp.c;
        const Vec rz = cp.G * res.x + res.s - cp.h;
        const double gap = res.s.dot(res.z);
        const double pcost = cp.c.dot(res.x) + cp.offset;
        res.gap = gap;
        const double pres = rz.norm() / hnorm;
        const double dres = rx.norm() / cnorm;
        const double rel_gap = gap / std::max(1.0, std::abs(pcost));
        if (pres <= feas_tol && dres <= feas_tol && rel_gap <= gap_tol) {
            res.converged = true;
            return res;
        }
        const double merit = std::max({pres, dres, rel_gap});
        if (merit < best_merit) {
            best_merit = merit;
            best = res;
            stall = 0;
        } else if (++stall >= 3) {
            break;
        }
        if (it == max_iter) {
            break;
        }

        // Scaled constraint matrix W^-1 G, formed per cone as
        // (1/eta)(2 a (a'G) - J G) with a = J w.
        Mat gs(cp.G.rows(), n);
        for (int i = 0; i < ncones; ++i) {
            const auto [off, dim] = cp.cones[static_cast<std::size_t>(i)];
            SocScaling& sc = scal[static_cast<std::size_t>(i)];
            sc = detail::nt_scaling(res.s.segment(off, dim), res.z.segment(off, dim));
            lambda.segment(off, dim) = sc.apply(res.z.segment(off, dim));
            Vec a = -sc.w;
            a(0) = sc.w(0);
            const Mat& gi = g_rows[static_cast<std::size_t>(i)];
            auto blk = gs.middleRows(off, dim);
            blk = gi;
            blk.row(0) = -gi.row(0);
            blk.noalias() += 2.0 * a * (a.transpose() * gi);
            blk /= sc.eta;
        }
        Mat normal(n, n);
        normal.setZero();
        normal.selfadjointView<Eigen::Lower>().rankUpdate(gs.transpose());
        normal = normal.selfadjointView<Eigen::Lower>();
        Eigen::LLT<Mat> fact(normal);
        Eigen::LDLT<Mat> fact_fallback;
        const bool use_llt = fact.info() == Eigen::Success;
        if (!use_llt) {
            fact_fallback.compute(normal);
        }
        auto normal_solve = [&](const Vec& rhs) {
            Vec x = use_llt ? Vec(fact.solve(rhs)) : Vec(fact_fallback.solve(rhs));
            // One step of iterative refinement against the product form.
            const Vec r = rhs - gs.transpose() * (gs * x);
            x += use_llt ? Vec(fact.solve(r)) : Vec(fact_fallback.solve(r));
            return x;
        };

        auto apply_w = [&](const Vec& v, bool inverse) {
            Vec out(v.size());
            for (int i = 0; i < ncones; ++i) {
                const auto [off, dim] = cp.cones[static_cast<std::size_t>(i)];
                const SocScaling& sc = scal[static_cast<std::size_t>(i)];
                out.segment(off, dim) = inverse ? sc.apply_inverse(v.segment(off, dim)) : sc.apply(v.segment(off, dim));
            }
            return out;
        };

        // Newton system with complementarity right-hand side ds:
        //   G'dz = -rx,  G dx + dsv = -rz,  lambda o (W dz + W^-1 dsv) = ds.
        auto solve_dir = [&](const Vec& ds, Vec& dx, Vec& dz, Vec& dsv) {
            Vec u(ds.size());
            for (const auto& [off, dim] : cp.cones) {
                u.segment(off, dim) = jordan_divide(lambda.segment(off, dim), ds.segment(off, dim));
            }
            const Vec q = apply_w(rz, true) + u;
            dx = normal_solve(-rx - gs.transpose() * q);
            const Vec y = gs * dx + q;
            dz = apply_w(y, true);
            dsv = apply_w(u - y, false);
        };

        auto max_step = [&](const Vec& dsv, const Vec& dz) {
            double alpha = std::numeric_limits<double>::infinity();
            for (const auto& [off, dim] : cp.cones) {
                alpha = std::min(alpha, detail::soc_max_step(res.s.segment(off, dim), dsv.segment(off, dim)));
                alpha = std::min(alpha, detail::soc_max_step(res.z.segment(off, dim), dz.segment(off, dim)));
            }
            return alpha;
        };

        Vec ds_aff(cp.h.size());
        for (const auto& [off, dim] : cp.cones) {
            ds_aff.segment(off, dim) = -jordan_product(lambda.segment(off, dim), lambda.segment(off, dim));
        }
        Vec dx_a, dz_a, dsv_a;
        solve_dir(ds_aff, dx_a, dz_a, dsv_a);
        const double alpha_aff = std::min(1.0, max_step(dsv_a, dz_a));
        const double gap_aff = (res.s + alpha_aff * dsv_a).dot(res.z + alpha_aff * dz_a);
        const double sigma = std::clamp(std::pow(std::max(gap_aff, 0.0) / gap, 3.0), 0.0, 1.0);
        const double mu = gap / ncones;

        const Vec ws = apply_w(dsv_a, true);
        const Vec wz = apply_w(dz_a, false);
        Vec ds = ds_aff;
        for (const auto& [off, dim] : cp.cones) {
            ds.segment(off, dim) -= jordan_product(ws.segment(off, dim), wz.segment(off, dim));
            ds(off) += sigma * mu;
        }
        Vec dx, dz, dsv;
        solve_dir(ds, dx, dz, dsv);
        const double alpha = std::min(1.0, 0.99 * max_step(dsv, dz));
        if (!(alpha > 0.0) || !dx.allFinite()) {
            break;
        }
        res.x += alpha * dx;
        res.s += alpha * dsv;
        res.z += alpha * dz;
    }
    return best;
}

struct EigenSplit {
    Mat range;     // n x r, orthonormal
    Vec values;    // r positive eigenvalues
    Mat null;      // n x (n - r)
};

EigenSplit split_psd(const Mat& a, double rank_tol) {
    const Eigen::Index n = a.rows();
    EigenSplit out;
    if (n == 0) {
        out.range = Mat(0, 0);
        out.null = Mat(0, 0);
        return out;
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(linalg::symmetrize(a));
    const Vec& ev = es.eigenvalues();
    const double cut = rank_tol * std::max(ev.maxCoeff(), 0.0);
    std::vector<Eigen::Index> pos, zero;
    for (Eigen::Index i = 0; i < n; ++i) {
        (ev(i) > cut && ev(i) > 0.0 ? pos : zero).push_back(i);
    }
    out.range.resize(n, static_cast<Eigen::Index>(pos.size()));
    out.values.resize(static_cast<Eigen::Index>(pos.size()));
    out.null.resize(n, static_cast<Eigen::Index>(zero.size()));
    for (std::size_t k = 0; k < pos.size(); ++k) {
        out.range.col(static_cast<Eigen::Index>(k)) = es.eigenvectors().col(pos[k]);
        out.values(static_cast<Eigen::Index>(k)) = ev(pos[k]);
    }
    for (std::size_t k = 0; k < zero.size(); ++k) {
        out.null.col(static_cast<Eigen::Index>(k)) = es.eigenvectors().col(zero[k]);
    }
    return out;
}

Mat factor_from_split(const EigenSplit& e) {
    return e.values.cwiseSqrt().asDiagonal() * e.range.transpose();
}

constexpr double kRankTol = 1e-13;

/// Minimizer of a convex quadratic over an affine set x0 + Z y.
Vec minimize_on_affine(const QuadraticForm& f, const Vec& x0, const Mat& Z) {
    if (Z.cols() == 0) {
        return x0;
    }
    const Mat hz = Z.transpose() * f.hess * Z;
    const Vec gz = Z.transpose() * (f.hess * x0 + f.lin);
    const Vec y = hz.completeOrthogonalDecomposition().solve(-gz);
    return x0 + Z * y;
}

void finish(const QcqpProblem& p, const QcqpTolerances& tol, QcqpSolution& sol) {
    sol.cost_value = p.cost.value(sol.theta);
    sol.constraint_value = std::isfinite(p.budget) ? p.constraint.value(sol.theta) : p.constraint.value(sol.theta);
    const KktReport kkt = check_kkt(p, sol.theta);
    sol.kkt_residual = kkt.scaled_stationarity;
    sol.multiplier = kkt.multiplier;
    (void)tol;
}

}  // namespace

double min_form_value(const QuadraticForm& f) {
    const EigenSplit e = split_psd(f.hess, kRankTol);
    const Vec coeff = e.range.transpose() * f.lin;
    const double outside = (f.lin - e.range * coeff).norm();
    if (outside > 1e-10 * std::max(1.0, f.lin.norm())) {
        return -std::numeric_limits<double>::infinity();
    }
    return f.constant - 0.5 * coeff.cwiseAbs2().cwiseQuotient(e.values).sum();
}

namespace {

/// Refines a solution through the multiplier equation: theta(nu) minimizes
/// cost + nu constraint, and nu is found by a safeguarded Newton iteration on
/// constraint(theta(nu)) = budget. Requires a positive definite cost Hessian.
bool polish(const Mat& hc, const Vec& gc, const Mat& hk, const Vec& gk, double bk, bool constrained, double tol_k,
            Vec& phi) {
    Eigen::LLT<Mat> base(hc);
    if (base.info() != Eigen::Success) {
        return false;
    }
    Vec theta = base.solve(-gc);
    auto con = [&](const Vec& t) { return 0.5 * t.dot(hk * t) + gk.dot(t); };
    if (!constrained || con(theta) <= bk) {
        phi = theta;
        return true;
    }
    const Vec gk_phi = hk * phi + gk;
    const Vec gc_phi = hc * phi + gc;
    double nu = gk_phi.squaredNorm() > 0.0 ? std::max(0.0, -gc_phi.dot(gk_phi) / gk_phi.squaredNorm()) : 0.0;
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    for (int it = 0; it < 60; ++it) {
        Eigen::LLT<Mat> f(hc + nu * hk);
        if (f.info() != Eigen::Success) {
            return false;
        }
        theta = f.solve(-(gc + nu * gk));
        const double r = con(theta) - bk;
        if (std::abs(r) <= tol_k || (r < 0.0 && r > -tol_k)) {
            phi = theta;
            return true;
        }
        (r > 0.0 ? lo : hi) = nu;
        const Vec g = hk * theta + gk;
        const double deriv = -g.dot(f.solve(g));
        double next = deriv < 0.0 ? nu - r / deriv : std::numeric_limits<double>::quiet_NaN();
        if (!(next > lo && next < hi)) {
            next = std::isfinite(hi) ? 0.5 * (lo + hi) : 2.0 * nu + 1.0;
        }
        if (std::isfinite(hi) && hi - lo <= 1e-15 * hi) {
            break;
        }
        nu = next;
    }
    return false;
}

}

QcqpSolution solve_qcqp(const QcqpProblem& p, const QcqpTolerances& tol, const Vec* warm_start) {
    const int n = p.cost.dim();
    if (p.cost.hess.rows() != n || p.cost.hess.cols() != n || p.constraint.dim() != n ||
        p.constraint.hess.rows() != n || p.constraint.hess.cols() != n) {
        throw DimensionMismatch("solve_qcqp: inconsistent problem dimensions");
    }
    if (warm_start != nullptr && warm_start->size() != n) {
        throw DimensionMismatch("solve_qcqp: warm start has wrong length");
    }

    QcqpSolution sol;
    const bool has_budget = std::isfinite(p.budget);
    const bool trivial_con =
        p.constraint.hess.cwiseAbs().maxCoeff() == 0.0 && p.constraint.lin.cwiseAbs().maxCoeff() == 0.0;
    const double feas_abs = tol.feas_rel * (1.0 + (has_budget ? std::abs(p.budget) : 0.0));
    const bool constrained = has_budget && !(trivial_con && p.constraint.constant <= p.budget);

    // Cost scaled to O(1) and variables equilibrated on the cost diagonal.
    const Vec theta_ref = warm_start != nullptr ? *warm_start : Vec::Zero(n);
    const double sc = std::max(1.0, std::abs(p.cost.value(theta_ref)));
    const Vec hdiag = p.cost.hess.diagonal() / sc;
    const double dfloor = 1e-12 * std::max(hdiag.maxCoeff(), 1e-300);
    Vec d(n);
    for (int i = 0; i < n; ++i) {
        d(i) = hdiag(i) > dfloor ? 1.0 / std::sqrt(hdiag(i)) : 1.0;
    }
    const auto D = d.asDiagonal();
    Mat hc = D * p.cost.hess * D / sc;
    Vec gc = d.cwiseProduct(p.cost.lin) / sc;
    const double sk = constrained ? std::max(1.0, std::abs(p.budget)) : 1.0;
    Mat hk;
    Vec gk;
    double bk = 0.0;
    EigenSplit ks;
    if (constrained) {
        hk = D * p.constraint.hess * D / sk;
        gk = d.cwiseProduct(p.constraint.lin) / sk;
        bk = (p.budget - p.constraint.constant) / sk;
        ks = split_psd(hk, kRankTol);
        const Vec coeff = ks.range.transpose() * gk;
        const double outside = (gk - ks.range * coeff).norm();
        if (outside <= 1e-8 * std::max(1.0, gk.norm())) {
            const Vec theta_min = d.cwiseProduct(-ks.range * coeff.cwiseQuotient(ks.values));
            const double min_val = p.constraint.value(theta_min);
            sol.min_constraint_value = min_val;
            if (min_val > p.budget + feas_abs) {
                sol.theta = theta_min;
                sol.status = SolveStatus::infeasible;
                finish(p, tol, sol);
                return sol;
            }
            if (min_val >= p.budget - feas_abs) {
                // The feasible set collapses onto the constraint's minimizing
                // affine set; optimize the cost there directly.
                sol.theta = minimize_on_affine(p.cost, theta_min, D * ks.null);
                sol.status = SolveStatus::optimal;
                finish(p, tol, sol);
                return sol;
            }
        } else {
            sol.min_constraint_value = -std::numeric_limits<double>::infinity();
        }
    }

    Mat gcf;
    Mat basis;  // empty => identity
    Eigen::LLT<Mat> llt(hc);
    if (llt.info() == Eigen::Success) {
        gcf = llt.matrixU();
    } else {
        const EigenSplit cs = split_psd(hc, kRankTol);
        gcf = factor_from_split(cs);
        if (cs.values.size() < n) {
            Mat combined = hc;
            if (constrained) {
                combined += hk + gk * gk.transpose();
            }
            const EigenSplit all = split_psd(combined, kRankTol);
            if (all.values.size() < n) {
                basis = all.range;
                if ((gc - basis * (basis.transpose() * gc)).norm() > 1e-10 * std::max(1.0, gc.norm())) {
                    // Cost decreases without bound along a free direction.
                    sol.theta = theta_ref;
                    sol.status = SolveStatus::max_iter;
                    finish(p, tol, sol);
                    return sol;
                }
                hc = basis.transpose() * hc * basis;
                gc = basis.transpose() * gc;
                gcf = factor_from_split(split_psd(hc, kRankTol));
                if (constrained) {
                    hk = basis.transpose() * hk * basis;
                    gk = basis.transpose() * gk;
                    ks = split_psd(hk, kRankTol);
                }
            }
        }
    }
    const Eigen::Index nv = basis.size() > 0 ? basis.cols() : n;
    const Mat gkf = constrained ? factor_from_split(ks) : Mat();

    // Variables x = (phi, t). Cone 1: ||(sqrt2 Gc phi, t - 1)|| <= t + 1.
    // Cone 2: ||(sqrt2 Gk phi, r - 1)|| <= r + 1 with r = bk - gk' phi.
    const Eigen::Index r1 = gcf.rows();
    const Eigen::Index r2 = constrained ? gkf.rows() : 0;
    const Eigen::Index m = (r1 + 2) + (constrained ? r2 + 2 : 0);
    ConeProgram cp;
    cp.c = Vec::Zero(nv + 1);
    cp.c.head(nv) = gc;
    cp.c(nv) = 1.0;
    cp.offset = p.cost.constant / sc;
    cp.G = Mat::Zero(m, nv + 1);
    cp.h = Vec::Zero(m);
    cp.G(0, nv) = -1.0;
    cp.h(0) = 1.0;
    cp.G(1, nv) = -1.0;
    cp.h(1) = -1.0;
    cp.G.block(2, 0, r1, nv) = -std::sqrt(2.0) * gcf;
    cp.cones.emplace_back(0, static_cast<int>(r1 + 2));
    if (constrained) {
        const Eigen::Index o = r1 + 2;
        cp.G.block(o, 0, 1, nv) = gk.transpose();
        cp.h(o) = bk + 1.0;
        cp.G.block(o + 1, 0, 1, nv) = gk.transpose();
        cp.h(o + 1) = bk - 1.0;
        cp.G.block(o + 2, 0, r2, nv) = -std::sqrt(2.0) * gkf;
        cp.cones.emplace_back(static_cast<int>(o), static_cast<int>(r2 + 2));
    }

    Vec x0;
    if (warm_start != nullptr) {
        Vec phi0 = warm_start->cwiseQuotient(d);
        if (basis.size() > 0) {
            phi0 = basis.transpose() * phi0;
        }
        x0 = Vec::Zero(nv + 1);
        x0.head(nv) = phi0;
        x0(nv) = 0.5 * phi0.dot(hc * phi0) + 1.0;
    }

    const IpmResult ipm = solve_cone_program(cp, warm_start != nullptr ? &x0 : nullptr, tol.max_iter, tol.feas_rel,
                                             tol.gap_rel);
    Vec phi = ipm.x.head(nv);
    if (basis.size() > 0) {
        phi = basis * phi;
    }
    sol.iterations = ipm.iterations;
    sol.gap = ipm.gap * sc;

    bool polished = false;
    if (basis.size() == 0) {
        Vec refined = phi;
        const double tol_k = 1e-3 * feas_abs / sk;
        if (polish(hc, gc, hk, gk, bk, constrained, tol_k, refined)) {
            const Vec theta_ref_sol = d.cwiseProduct(refined);
            const double c_new = p.cost.value(theta_ref_sol);
            const double c_old = p.cost.value(d.cwiseProduct(phi));
            const bool feas_new = !constrained || p.constraint.value(theta_ref_sol) <= p.budget + feas_abs;
            if (feas_new && (!ipm.converged || c_new <= c_old + tol.gap_rel * std::max(1.0, std::abs(c_old)))) {
                phi = refined;
                polished = true;
            }
        }
    }
    sol.theta = d.cwiseProduct(phi);
    finish(p, tol, sol);
    const bool feasible = !constrained || sol.constraint_value <= p.budget + feas_abs;
    sol.status = ((ipm.converged || polished) && feasible) ? SolveStatus::optimal : SolveStatus::max_iter;
    return sol;
}

KktReport check_kkt(const QcqpProblem& p, const Vec& theta) {
    KktReport r;
    const Vec gc = p.cost.gradient(theta);
    const bool has_budget = std::isfinite(p.budget);
    Vec gk = has_budget ? p.constraint.gradient(theta) : Vec::Zero(theta.size());
    const double slack = has_budget ? p.budget - p.constraint.value(theta) : std::numeric_limits<double>::infinity();
    const double gk2 = gk.squaredNorm();
    if (has_budget && gk2 > 0.0) {
        r.multiplier = std::max(0.0, -gc.dot(gk) / gk2);
    }
    r.stationarity = (gc + r.multiplier * gk).norm();
    const double scale = 1.0 + p.cost.lin.norm() + (p.cost.hess * theta).norm();
    r.scaled_stationarity = r.stationarity / scale;
    r.complementarity = has_budget ? r.multiplier * slack : 0.0;
    r.primal_infeasibility = has_budget ? std::max(0.0, -slack) : 0.0;
    return r;
}

void dump_instance(std::ostream& os, const QcqpProblem& p, const QcqpSolution& sol) {
    const Eigen::IOFormat fmt(Eigen::FullPrecision, Eigen::DontAlignCols, " ", "\n");
    os << std::setprecision(17);
    os << "# qcqp instance\n";
    os << "dim " << p.cost.dim() << "\n";
    os << "budget " << p.budget << "\n";
    os << "cost.constant " << p.cost.constant << "\n";
    os << "cost.lin\n" << p.cost.lin.transpose().format(fmt) << "\n";
    os << "cost.hess\n" << p.cost.hess.format(fmt) << "\n";
    os << "constraint.constant " << p.constraint.constant << "\n";
    os << "constraint.lin\n" << p.constraint.lin.transpose().format(fmt) << "\n";
    os << "constraint.hess\n" << p.constraint.hess.format(fmt) << "\n";
    os << "# solution\n";
    os << "status " << to_string(sol.status) << "\n";
    os << "iterations " << sol.iterations << "\n";
    os << "cost_value " << sol.cost_value << "\n";
    os << "constraint_value " << sol.constraint_value << "\n";
    os << "multiplier " << sol.multiplier << "\n";
    os << "kkt_residual " << sol.kkt_residual << "\n";
    os << "theta\n" << sol.theta.transpose().format(fmt) << "\n";
}

}  // namespace ofmpc
