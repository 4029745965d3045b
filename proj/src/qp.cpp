#include "acdc/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace acdc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kEps = std::numeric_limits<double>::epsilon();

// Working set of the dual method. Columns of J span the null space of the active normals once
// rotated; R is the upper-triangular factor of the active normals in J coordinates.
struct Factor {
    Matrix j;
    Matrix r;
    double r_norm = 1.0;
    int iq = 0;
};

// Appends the constraint whose J-coordinates are d. Returns false if it is linearly dependent.
bool add_constraint(Factor& f, Vector& d) {
    const int n = static_cast<int>(f.j.rows());
    for (int j = n - 1; j >= f.iq + 1; --j) {
        double cc = d[j - 1];
        double ss = d[j];
        double h = std::hypot(cc, ss);
        if (h == 0.0) continue;
        d[j] = 0.0;
        ss /= h;
        cc /= h;
        if (cc < 0.0) {
            cc = -cc;
            ss = -ss;
            d[j - 1] = -h;
        } else {
            d[j - 1] = h;
        }
        double xny = ss / (1.0 + cc);
        for (int k = 0; k < n; ++k) {
            double t1 = f.j(k, j - 1);
            double t2 = f.j(k, j);
            f.j(k, j - 1) = t1 * cc + t2 * ss;
            f.j(k, j) = xny * (t1 + f.j(k, j - 1)) - t2;
        }
    }
    ++f.iq;
    f.r.col(f.iq - 1).head(f.iq) = d.head(f.iq);
    if (std::abs(d[f.iq - 1]) <= kEps * f.r_norm) return false;
    f.r_norm = std::max(f.r_norm, std::abs(d[f.iq - 1]));
    return true;
}

// Removes working-set entry `constraint` (a row id stored in `active`) and restores triangularity.
void delete_constraint(Factor& f, std::vector<int>& active, Vector& u, int first_inequality, int constraint) {
    const int n = static_cast<int>(f.r.rows());
    int qq = -1;
    for (int i = first_inequality; i < f.iq; ++i)
        if (active[i] == constraint) {
            qq = i;
            break;
        }
    if (qq < 0) return;
    for (int i = qq; i < f.iq - 1; ++i) {
        active[i] = active[i + 1];
        u[i] = u[i + 1];
        f.r.col(i) = f.r.col(i + 1);
    }
    active[f.iq - 1] = active[f.iq];
    u[f.iq - 1] = u[f.iq];
    active[f.iq] = 0;
    u[f.iq] = 0.0;
    for (int j = 0; j < f.iq; ++j) f.r(j, f.iq - 1) = 0.0;
    --f.iq;
    if (f.iq == 0) return;
    for (int j = qq; j < f.iq; ++j) {
        double cc = f.r(j, j);
        double ss = f.r(j + 1, j);
        double h = std::hypot(cc, ss);
        if (h == 0.0) continue;
        cc /= h;
        ss /= h;
        f.r(j + 1, j) = 0.0;
        if (cc < 0.0) {
            f.r(j, j) = -h;
            cc = -cc;
            ss = -ss;
        } else {
            f.r(j, j) = h;
        }
        double xny = ss / (1.0 + cc);
        for (int k = j + 1; k < f.iq; ++k) {
            double t1 = f.r(j, k);
            double t2 = f.r(j + 1, k);
            f.r(j, k) = t1 * cc + t2 * ss;
            f.r(j + 1, k) = xny * (t1 + f.r(j, k)) - t2;
        }
        for (int k = 0; k < n; ++k) {
            double t1 = f.j(k, j);
            double t2 = f.j(k, j + 1);
            f.j(k, j) = t1 * cc + t2 * ss;
            f.j(k, j + 1) = xny * (f.j(k, j) + t1) - t2;
        }
    }
}

}  // namespace

QpProblem QpProblem::unconstrained(const Matrix& h, const Vector& g) {
    QpProblem p;
    p.h = h;
    p.g = g;
    p.a_eq.resize(0, g.size());
    p.b_eq.resize(0);
    p.a_in.resize(0, g.size());
    p.b_in.resize(0);
    return p;
}

std::string_view to_string(QpStatus s) {
    switch (s) {
        case QpStatus::Optimal: return "optimal";
        case QpStatus::Infeasible: return "infeasible";
        case QpStatus::IterationLimit: return "iteration_limit";
    }
    return "?";
}

KktResiduals kkt_residuals(const QpProblem& p, const Vector& x, const Vector& lambda, const Vector& mu) {
    KktResiduals k;
    Vector grad = p.h * x + p.g;
    if (p.a_eq.rows() > 0) grad += p.a_eq.transpose() * lambda;
    if (p.a_in.rows() > 0) grad += p.a_in.transpose() * mu;
    k.stationarity = grad.size() > 0 ? grad.cwiseAbs().maxCoeff() : 0.0;
    for (int i = 0; i < p.a_eq.rows(); ++i)
        k.primal = std::max(k.primal, std::abs(p.a_eq.row(i).dot(x) - p.b_eq[i]));
    for (int i = 0; i < p.a_in.rows(); ++i) {
        double slack = p.b_in[i] - p.a_in.row(i).dot(x);
        k.primal = std::max(k.primal, -slack);
        k.complementarity = std::max(k.complementarity, std::abs(mu[i] * slack));
        k.dual = std::max(k.dual, -mu[i]);
    }
    return k;
}

QpResult solve_qp(const QpProblem& p, const QpOptions& options) {
    const int n = p.variables();
    const int me = static_cast<int>(p.a_eq.rows());
    const int mi = static_cast<int>(p.a_in.rows());
    if (p.h.rows() != n || p.h.cols() != n || p.a_eq.cols() != n || p.b_eq.size() != me || p.a_in.cols() != n ||
        p.b_in.size() != mi)
        throw Error("QP dimensions are inconsistent");

    Eigen::LLT<Matrix> chol(p.h);
    if (chol.info() != Eigen::Success) throw Error("QP Hessian is not positive definite");

    // Normals in the >= 0 convention of the method: n'x + c >= 0 (or = 0 for equalities).
    auto normal_in = [&](int i) -> Vector { return -p.a_in.row(i).transpose(); };
    auto offset_in = [&](int i) { return p.b_in[i]; };

    Factor f;
    f.j = chol.matrixU().solve(Matrix::Identity(n, n));
    f.r = Matrix::Zero(n, n);
    const double c1 = p.h.trace();
    const double c2 = f.j.trace();

    QpResult res;
    Vector x = -chol.solve(p.g);
    Vector u = Vector::Zero(me + mi + 1);
    std::vector<int> active(me + mi + 1, 0);
    Vector d(n), z(n), r = Vector::Zero(me + mi + 1);

    auto directions = [&](const Vector& np) {
        d = f.j.transpose() * np;
        z = f.j.rightCols(n - f.iq) * d.tail(n - f.iq);
        if (f.iq > 0)
            r.head(f.iq) = f.r.topLeftCorner(f.iq, f.iq).triangularView<Eigen::Upper>().solve(d.head(f.iq));
    };

    for (int i = 0; i < me; ++i) {
        Vector np = p.a_eq.row(i).transpose();
        directions(np);
        double t2 = 0.0;
        double zn = z.dot(np);
        if (z.squaredNorm() > kEps) t2 = (p.b_eq[i] - np.dot(x)) / zn;
        x += t2 * z;
        u[f.iq] = t2;
        u.head(f.iq) -= t2 * r.head(f.iq);
        active[i] = -i - 1;
        if (!add_constraint(f, d)) throw Error("QP equality constraints are linearly dependent");
    }

    std::vector<char> in_active(mi, 0);
    Vector s(mi);
    auto finish = [&](QpStatus status) {
        res.status = status;
        res.x = x;
        res.lambda = Vector::Zero(me);
        res.mu = Vector::Zero(mi);
        for (int k = 0; k < f.iq; ++k) {
            if (k < me) res.lambda[-active[k] - 1] = -u[k];
            else {
                res.mu[active[k]] = u[k];
                res.active.push_back(active[k]);
            }
        }
        res.objective = 0.5 * x.dot(p.h * x) + p.g.dot(x);
        res.kkt = kkt_residuals(p, x, res.lambda, res.mu);
        if (status == QpStatus::Infeasible) {
            std::vector<int> rows;
            for (int i = 0; i < mi; ++i)
                if (p.a_in.row(i).dot(x) - p.b_in[i] > 1e-9) rows.push_back(i);
            std::stable_sort(rows.begin(), rows.end(), [&](int a, int b) {
                return p.a_in.row(a).dot(x) - p.b_in[a] > p.a_in.row(b).dot(x) - p.b_in[b];
            });
            res.most_violated = rows;
        }
        return res;
    };

    while (true) {
        if (++res.iterations > options.max_iterations) return finish(QpStatus::IterationLimit);
        double psi = 0.0;
        for (int i = 0; i < mi; ++i) {
            s[i] = normal_in(i).dot(x) + offset_in(i);
            psi += std::min(0.0, s[i]);
        }
        if (std::abs(psi) <= mi * kEps * c1 * c2 * 100.0) return finish(QpStatus::Optimal);

        std::vector<char> excluded(mi, 0);
        bool added = false;
        while (!added) {
            // Snapshot for the degenerate-addition rollback.
            const Factor f_old = f;
            const Vector u_old = u;
            const Vector x_old = x;
            const std::vector<int> active_old = active;
            const std::vector<char> in_active_old = in_active;
            const Vector s_old = s;

            int ip = -1;
            double worst = 0.0;
            for (int i = 0; i < mi; ++i)
                if (!in_active[i] && !excluded[i] && s[i] < worst) {
                    worst = s[i];
                    ip = i;
                }
            if (ip < 0) return finish(QpStatus::Optimal);

            const Vector np = normal_in(ip);
            u[f.iq] = 0.0;
            active[f.iq] = ip;

            while (true) {
                directions(np);
                double t1 = kInf;
                int l = -1;
                for (int k = me; k < f.iq; ++k)
                    if (r[k] > 0.0 && u[k] / r[k] < t1) {
                        t1 = u[k] / r[k];
                        l = active[k];
                    }
                double zn = z.dot(np);
                double t2 = (z.squaredNorm() > kEps && zn != 0.0) ? -s[ip] / zn : kInf;
                double t = std::min(t1, t2);
                if (t >= kInf) return finish(QpStatus::Infeasible);
                if (++res.iterations > options.max_iterations) return finish(QpStatus::IterationLimit);

                if (t2 >= kInf) {
                    u.head(f.iq) -= t * r.head(f.iq);
                    u[f.iq] += t;
                    in_active[l] = 0;
                    delete_constraint(f, active, u, me, l);
                    continue;
                }
                x += t * z;
                u.head(f.iq) -= t * r.head(f.iq);
                u[f.iq] += t;
                if (t == t2) {
                    if (!add_constraint(f, d)) {
                        f = f_old;
                        u = u_old;
                        x = x_old;
                        active = active_old;
                        in_active = in_active_old;
                        s = s_old;
                        excluded[ip] = 1;
                        break;
                    }
                    in_active[ip] = 1;
                    added = true;
                    break;
                }
                in_active[l] = 0;
                delete_constraint(f, active, u, me, l);
                s[ip] = np.dot(x) + offset_in(ip);
            }
        }
    }
}

}  // namespace acdc
