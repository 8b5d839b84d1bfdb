#pragma once

#include "ofmpc/assembly.hpp"

#include <iosfwd>
#include <limits>
#include <string>

namespace ofmpc {

/// min cost(theta)  s.t.  constraint(theta) <= budget, both convex quadratics.
/// A non-finite budget drops the constraint.
struct QcqpProblem {
    QuadraticForm cost;
    QuadraticForm constraint;
    double budget = std::numeric_limits<double>::infinity();
};

struct QcqpTolerances {
    double feas_rel = 1e-8;  ///< constraint may exceed budget by feas_rel (1 + |budget|)
    double gap_rel = 1e-8;   ///< relative duality gap
    double kkt_rel = 1e-6;   ///< scaled stationarity residual
    int max_iter = 100;
};

enum class SolveStatus { optimal, infeasible, max_iter };

std::string to_string(SolveStatus s);

struct QcqpSolution {
    Vec theta;
    double cost_value = 0.0;
    double constraint_value = 0.0;
    SolveStatus status = SolveStatus::max_iter;
    double kkt_residual = 0.0;
    double multiplier = 0.0;
    double gap = 0.0;
    int iterations = 0;
    /// Smallest attainable constraint value; meaningful when infeasible.
    double min_constraint_value = 0.0;
};

/// Second-order-cone reformulation of the QCQP: each Hessian is factored as
/// G'G and the quadratics become two rotated cones on epigraph variables.
/// The cone program is solved by a primal-dual interior-point method with
/// Nesterov-Todd scaling and Mehrotra correction. `warm_start`, when given,
/// seeds the primal iterate.
QcqpSolution solve_qcqp(const QcqpProblem& p, const QcqpTolerances& tol = {}, const Vec* warm_start = nullptr);

struct KktReport {
    double multiplier = 0.0;       ///< nu >= 0
    double stationarity = 0.0;     ///< ||grad cost + nu grad constraint||
    double scaled_stationarity = 0.0;
    double complementarity = 0.0;  ///< nu (budget - constraint)
    double primal_infeasibility = 0.0;
};

KktReport check_kkt(const QcqpProblem& p, const Vec& theta);

/// min_theta constraint(theta); -inf when unbounded below.
double min_form_value(const QuadraticForm& f);

/// Writes a self-describing text dump of an instance and its solution.
void dump_instance(std::ostream& os, const QcqpProblem& p, const QcqpSolution& sol);

namespace detail {

/// Nesterov-Todd scaling point of a second-order cone:
/// W = eta (2 w w' - J), W z = W^-1 s.
struct SocScaling {
    double eta = 1.0;
    Vec w;
    Vec apply(const Vec& v) const;
    Vec apply_inverse(const Vec& v) const;
};

SocScaling nt_scaling(const Vec& s, const Vec& z);

/// Largest alpha with u + alpha du in the cone (infinity if unbounded).
double soc_max_step(const Vec& u, const Vec& du);

}  // namespace detail

}  // namespace ofmpc
