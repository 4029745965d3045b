#pragma once

#include <string>
#include <vector>

#include "acdc/types.hpp"

namespace acdc {

/// min 1/2 x'Hx + g'x  s.t.  A_eq x = b_eq,  A_in x <= b_in.  H must be positive definite.
struct QpProblem {
    Matrix h;
    Vector g;
    Matrix a_eq;
    Vector b_eq;
    Matrix a_in;
    Vector b_in;

    int variables() const { return static_cast<int>(g.size()); }
    /// Resizes the constraint blocks to zero rows for `n` variables.
    static QpProblem unconstrained(const Matrix& h, const Vector& g);
};

enum class QpStatus { Optimal, Infeasible, IterationLimit };
std::string_view to_string(QpStatus s);

struct QpOptions {
    int max_iterations = 1000;
};

struct KktResiduals {
    double stationarity = 0.0;     // |Hx + g + A_eq' lambda + A_in' mu|_inf
    double primal = 0.0;           // worst equality or inequality violation
    double complementarity = 0.0;  // max |mu_i * slack_i|
    double dual = 0.0;             // most negative multiplier, as a positive number
};

struct QpResult {
    QpStatus status = QpStatus::Optimal;
    Vector x;
    Vector lambda;  // equality multipliers
    Vector mu;      // inequality multipliers, >= 0
    double objective = 0.0;
    int iterations = 0;
    std::vector<int> active;          // active inequality rows, in order of activation
    std::vector<int> most_violated;   // on infeasibility: inequality rows ranked by violation
    KktResiduals kkt;
};

/// Dual active-set method of Goldfarb and Idnani. Deterministic: ties go to the lowest row index.
/// Throws Error when H is not positive definite or the dimensions disagree.
QpResult solve_qp(const QpProblem& problem, const QpOptions& options = {});

KktResiduals kkt_residuals(const QpProblem& problem, const Vector& x, const Vector& lambda, const Vector& mu);

}  // namespace acdc
