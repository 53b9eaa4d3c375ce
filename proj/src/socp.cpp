#include "p2pflow/socp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace p2pflow {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw Error("socp", msg); }

constexpr double kInf = std::numeric_limits<double>::infinity();

using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Internal standard form:  min c'x  s.t.  A x = b,  G x + s = h,  s in K,
// K = R+^l x Q^{d_1} x ... x Q^{d_k}.
// ---------------------------------------------------------------------------
struct Standard {
    int n = 0, p = 0, m = 0, l = 0;
    VectorXd c;
    MatrixXd A;
    VectorXd b;
    MatrixXd G;
    VectorXd h;
    std::vector<int> soc_dim;
    std::vector<int> soc_start;

    // caller-facing row maps
    int n_in = 0;                // first n_in LP rows are A_in rows
    std::vector<int> lo_row;     // per variable, -1 if absent
    std::vector<int> hi_row;
};

Standard build_standard(const ConicProgram& prog) {
    Standard st;
    st.n = prog.n;
    st.c = -prog.c; // maximize -> minimize
    st.p = prog.a_eq.size() > 0 ? static_cast<int>(prog.a_eq.rows()) : 0;
    if (st.p > 0) {
        st.A = prog.a_eq;
        st.b = prog.b_eq;
    } else {
        st.A.resize(0, st.n);
        st.b.resize(0);
    }
    st.n_in = prog.a_in.size() > 0 ? static_cast<int>(prog.a_in.rows()) : 0;
    st.lo_row.assign(st.n, -1);
    st.hi_row.assign(st.n, -1);

    int l = st.n_in;
    for (int i = 0; i < st.n; ++i) {
        if (prog.lo.size() > 0 && prog.lo[i] > -kInf) st.lo_row[i] = l++;
        if (prog.hi.size() > 0 && prog.hi[i] < kInf) st.hi_row[i] = l++;
    }
    st.l = l;

    int m = l;
    for (const SocConstraint& soc : prog.socs) {
        const int dim = 1 + static_cast<int>(soc.G.rows());
        st.soc_dim.push_back(dim);
        st.soc_start.push_back(m);
        m += dim;
    }
    st.m = m;

    st.G = MatrixXd::Zero(m, st.n);
    st.h = VectorXd::Zero(m);
    if (st.n_in > 0) {
        st.G.topRows(st.n_in) = prog.a_in;
        st.h.head(st.n_in) = prog.b_in;
    }
    for (int i = 0; i < st.n; ++i) {
        if (st.lo_row[i] >= 0) {
            st.G(st.lo_row[i], i) = -1.0;
            st.h[st.lo_row[i]] = -prog.lo[i];
        }
        if (st.hi_row[i] >= 0) {
            st.G(st.hi_row[i], i) = 1.0;
            st.h[st.hi_row[i]] = prog.hi[i];
        }
    }
    for (size_t k = 0; k < prog.socs.size(); ++k) {
        const SocConstraint& soc = prog.socs[k];
        const int r0 = st.soc_start[k];
        if (soc.d.size() > 0) st.G.row(r0) = -soc.d.transpose();
        st.h[r0] = soc.e;
        st.G.block(r0 + 1, 0, soc.G.rows(), st.n) = -soc.G;
        st.h.segment(r0 + 1, soc.h.size()) = soc.h;
    }
    if (st.m == 0) fail("program has no inequality constraints or cones");
    return st;
}

// ---------------------------------------------------------------------------
// Cone algebra
// ---------------------------------------------------------------------------
struct Scalings {
    VectorXd lp_w2;                 // s_i / z_i
    std::vector<double> eta2;       // per soc
    std::vector<VectorXd> v;        // NT point per soc, v0^2 - ||v1||^2 = 1
};

class Cone {
public:
    explicit Cone(const Standard& st) : st_(st) {}

    int degree() const { return st_.l + static_cast<int>(st_.soc_dim.size()); }

    bool update_scalings(const VectorXd& s, const VectorXd& z, Scalings& w,
                         VectorXd& lambda) const {
        w.lp_w2.resize(st_.l);
        for (int i = 0; i < st_.l; ++i) {
            if (s[i] <= 0.0 || z[i] <= 0.0) return false;
            w.lp_w2[i] = s[i] / z[i];
        }
        w.eta2.resize(st_.soc_dim.size());
        w.v.resize(st_.soc_dim.size());
        for (size_t k = 0; k < st_.soc_dim.size(); ++k) {
            const int o = st_.soc_start[k];
            const int d = st_.soc_dim[k];
            const double sres = s[o] * s[o] - s.segment(o + 1, d - 1).squaredNorm();
            const double zres = z[o] * z[o] - z.segment(o + 1, d - 1).squaredNorm();
            if (sres <= 0.0 || zres <= 0.0) return false;
            const double snorm = std::sqrt(sres);
            const double znorm = std::sqrt(zres);
            const VectorXd sbar = s.segment(o, d) / snorm;
            const VectorXd zbar = z.segment(o, d) / znorm;
            const double gamma = std::sqrt(0.5 * (1.0 + sbar.dot(zbar)));
            VectorXd v(d);
            v[0] = (0.5 / gamma) * (sbar[0] + zbar[0]);
            v.tail(d - 1) = (0.5 / gamma) * (sbar.tail(d - 1) - zbar.tail(d - 1));
            w.eta2[k] = snorm / znorm;
            w.v[k] = v;
        }
        scale(w, z, lambda);
        return true;
    }

    // lambda = W z
    void scale(const Scalings& w, const VectorXd& z, VectorXd& out) const {
        out.resize(st_.m);
        for (int i = 0; i < st_.l; ++i) out[i] = std::sqrt(w.lp_w2[i]) * z[i];
        for (size_t k = 0; k < st_.soc_dim.size(); ++k) {
            const int o = st_.soc_start[k];
            const int d = st_.soc_dim[k];
            const double eta = std::sqrt(w.eta2[k]);
            const VectorXd& v = w.v[k];
            const double a = v[0];
            const double zeta = v.tail(d - 1).dot(z.segment(o + 1, d - 1));
            out[o] = eta * (a * z[o] + zeta);
            out.segment(o + 1, d - 1) =
                eta * (z.segment(o + 1, d - 1) + (z[o] + zeta / (1.0 + a)) * v.tail(d - 1));
        }
    }

    void apply_w2(const Scalings& w, const VectorXd& u, VectorXd& out) const {
        out.resize(st_.m);
        for (int i = 0; i < st_.l; ++i) out[i] = w.lp_w2[i] * u[i];
        for (size_t k = 0; k < st_.soc_dim.size(); ++k) {
            const int o = st_.soc_start[k];
            const int d = st_.soc_dim[k];
            const VectorXd& v = w.v[k];
            const double dot = v.dot(u.segment(o, d));
            // W^2 = eta2 (2 v v' - J)
            out[o] = w.eta2[k] * (2.0 * v[0] * dot - u[o]);
            out.segment(o + 1, d - 1) =
                w.eta2[k] * (2.0 * v.tail(d - 1) * dot + u.segment(o + 1, d - 1));
        }
    }

    void apply_w2inv(const Scalings& w, const VectorXd& u, VectorXd& out) const {
        out.resize(st_.m);
        for (int i = 0; i < st_.l; ++i) out[i] = u[i] / w.lp_w2[i];
        for (size_t k = 0; k < st_.soc_dim.size(); ++k) {
            const int o = st_.soc_start[k];
            const int d = st_.soc_dim[k];
            const VectorXd& v = w.v[k];
            // (2 v v' - J)^-1 = 2 (Jv)(Jv)' - J
            double dot = v[0] * u[o] - v.tail(d - 1).dot(u.segment(o + 1, d - 1));
            out[o] = (2.0 * v[0] * dot - u[o]) / w.eta2[k];
            out.segment(o + 1, d - 1) =
                (-2.0 * v.tail(d - 1) * dot + u.segment(o + 1, d - 1)) / w.eta2[k];
        }
    }

    // w = u o v, Jordan product
    void product(const VectorXd& u, const VectorXd& v, VectorXd& out) const {
        out.resize(st_.m);
        for (int i = 0; i < st_.l; ++i) out[i] = u[i] * v[i];
        for (size_t k = 0; k < st_.soc_dim.size(); ++k) {
            const int o = st_.soc_start[k];
            const int d = st_.soc_dim[k];
            out[o] = u.segment(o, d).dot(v.segment(o, d));
            out.segment(o + 1, d - 1) =
                u[o] * v.segment(o + 1, d - 1) + v[o] * u.segment(o + 1, d - 1);
        }
    }

    // out = u \ w, inverse Jordan product
    void division(const VectorXd& u, const VectorXd& w, VectorXd& out) const {
        out.resize(st_.m);
        for (int i = 0; i < st_.l; ++i) out[i] = w[i] / u[i];
        for (size_t k = 0; k < st_.soc_dim.size(); ++k) {
            const int o = st_.soc_start[k];
            const int d = st_.soc_dim[k];
            const double u0 = u[o];
            const double w0 = w[o];
            const double rho = u0 * u0 - u.segment(o + 1, d - 1).squaredNorm();
            const double zeta = u.segment(o + 1, d - 1).dot(w.segment(o + 1, d - 1));
            out[o] = (u0 * w0 - zeta) / rho;
            out.segment(o + 1, d - 1) = ((zeta / u0 - w0) / rho) * u.segment(o + 1, d - 1) +
                                        w.segment(o + 1, d - 1) / u0;
        }
    }

    // Shifts r into the interior of the cone.
    void bring_to_cone(const VectorXd& r, VectorXd& s) const {
        double alpha = -0.99;
        for (int i = 0; i < st_.l; ++i)
            if (r[i] <= 0.0 && -r[i] > alpha) alpha = -r[i];
        for (size_t k = 0; k < st_.soc_dim.size(); ++k) {
            const int o = st_.soc_start[k];
            const int d = st_.soc_dim[k];
            const double cres = r[o] - r.segment(o + 1, d - 1).norm();
            if (cres <= 0.0 && -cres > alpha) alpha = -cres;
        }
        alpha += 1.0;
        s = r;
        for (int i = 0; i < st_.l; ++i) s[i] += alpha;
        for (size_t k = 0; k < st_.soc_dim.size(); ++k) s[st_.soc_start[k]] += alpha;
    }

    // Maximum step to the cone boundary in scaled variables.
    double line_search(const VectorXd& lambda, const VectorXd& ds, const VectorXd& dz,
                       double tau, double dtau, double kap, double dkap) const {
        double alpha = 1e10;
        for (int i = 0; i < st_.l; ++i) {
            const double rho = ds[i] / lambda[i];
            const double sig = dz[i] / lambda[i];
            if (rho < 0.0) alpha = std::min(alpha, -1.0 / rho);
            if (sig < 0.0) alpha = std::min(alpha, -1.0 / sig);
        }
        if (dtau < 0.0) alpha = std::min(alpha, -tau / dtau);
        if (dkap < 0.0) alpha = std::min(alpha, -kap / dkap);
        for (size_t k = 0; k < st_.soc_dim.size(); ++k) {
            const int o = st_.soc_start[k];
            const int d = st_.soc_dim[k];
            const double lk2 =
                lambda[o] * lambda[o] - lambda.segment(o + 1, d - 1).squaredNorm();
            if (lk2 <= 0.0) continue;
            const double lknorm = std::sqrt(lk2);
            const VectorXd lkbar = lambda.segment(o, d) / lknorm;
            const double inv = 1.0 / lknorm;

            const auto boundary_step = [&](const VectorXd& dir) {
                const double bar_dot = lkbar[0] * dir[o] -
                                       lkbar.tail(d - 1).dot(dir.segment(o + 1, d - 1));
                const double factor = (bar_dot + dir[o]) / (lkbar[0] + 1.0);
                VectorXd rho(d);
                rho[0] = inv * bar_dot;
                rho.tail(d - 1) =
                    inv * (dir.segment(o + 1, d - 1) - factor * lkbar.tail(d - 1));
                return rho.tail(d - 1).norm() - rho[0];
            };
            const double step = std::max({0.0, boundary_step(ds), boundary_step(dz)});
            if (step > 0.0) alpha = std::min(alpha, 1.0 / step);
        }
        return std::min(alpha, 1.0);
    }

private:
    const Standard& st_;
};

// ---------------------------------------------------------------------------
// Reduced KKT solver: eliminate dz to get
//   [G'W^-2 G   A'] [dx]   [bx + G'W^-2 bz]
//   [A          0 ] [dy] = [by]
//   dz = W^-2 (G dx - bz)
// ---------------------------------------------------------------------------
class KktSolver {
public:
    KktSolver(const Standard& st, const Cone& cone) : st_(st), cone_(cone) {}

    bool factor(const Scalings& w) {
        w_ = &w;
        MatrixXd winv_g(st_.m, st_.n);
        VectorXd col(st_.m), out(st_.m);
        for (int j = 0; j < st_.n; ++j) {
            col = st_.G.col(j);
            cone_.apply_w2inv(w, col, out);
            winv_g.col(j) = out;
        }
        const int dim = st_.n + st_.p;
        MatrixXd kkt = MatrixXd::Zero(dim, dim);
        kkt.topLeftCorner(st_.n, st_.n) = st_.G.transpose() * winv_g;
        if (st_.p > 0) {
            kkt.topRightCorner(st_.n, st_.p) = st_.A.transpose();
            kkt.bottomLeftCorner(st_.p, st_.n) = st_.A;
        }
        lu_.compute(kkt);
        return kkt.allFinite();
    }

    // Solves for (dx, dy, dz) given rhs blocks; two refinement passes against
    // the full unreduced KKT system.
    void solve(const VectorXd& bx, const VectorXd& by, const VectorXd& bz, VectorXd& dx,
               VectorXd& dy, VectorXd& dz) const {
        dx = VectorXd::Zero(st_.n);
        dy = VectorXd::Zero(st_.p);
        dz = VectorXd::Zero(st_.m);
        VectorXd rx = bx, ry = by, rz = bz;
        VectorXd tmp_m(st_.m), cx(st_.n), cy(st_.p), cz(st_.m);
        for (int pass = 0; pass < 3; ++pass) {
            cone_.apply_w2inv(*w_, rz, tmp_m);
            VectorXd rhs(st_.n + st_.p);
            rhs.head(st_.n) = rx + st_.G.transpose() * tmp_m;
            if (st_.p > 0) rhs.tail(st_.p) = ry;
            const VectorXd sol = lu_.solve(rhs);
            cx = sol.head(st_.n);
            if (st_.p > 0) cy = sol.tail(st_.p);
            cone_.apply_w2inv(*w_, VectorXd(st_.G * cx - rz), cz);
            dx += cx;
            dz += cz;
            if (st_.p > 0) dy += cy;
            if (pass == 2) break;
            // residuals of the full system
            cone_.apply_w2(*w_, dz, tmp_m);
            rx = bx - st_.G.transpose() * dz;
            if (st_.p > 0) {
                rx -= st_.A.transpose() * dy;
                ry = by - st_.A * dx;
            }
            rz = bz - (st_.G * dx - tmp_m);
            const double res = rx.lpNorm<Eigen::Infinity>() +
                               (st_.p > 0 ? ry.lpNorm<Eigen::Infinity>() : 0.0) +
                               rz.lpNorm<Eigen::Infinity>();
            if (res < 1e-14 * (1.0 + bx.lpNorm<Eigen::Infinity>() +
                               bz.lpNorm<Eigen::Infinity>()))
                break;
        }
    }

private:
    const Standard& st_;
    const Cone& cone_;
    const Scalings* w_ = nullptr;
    Eigen::PartialPivLU<MatrixXd> lu_;
};

struct Iterate {
    VectorXd x, y, z, s;
    double tau = 1.0, kap = 1.0;
    double pres = kInf, dres = kInf, gap = kInf, relgap = kInf, mu = kInf;
    double pcost = 0.0, dcost = 0.0;
    double pinfres = kInf, dinfres = kInf;
    bool pinf_seen = false, dinf_seen = false;
    int iter = 0;
};

} // namespace

const char* to_string(SolveStatus s) {
    switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::unbounded: return "unbounded";
    case SolveStatus::max_iterations: return "max-iterations";
    case SolveStatus::numerical_error: return "numerical-error";
    }
    return "?";
}

void ConicProgram::validate() const {
    if (n <= 0) fail("program has no variables");
    if (c.size() != n) fail("objective dimension mismatch");
    if (a_eq.size() > 0 && a_eq.cols() != n) fail("A_eq column count mismatch");
    if (a_eq.rows() != b_eq.size()) fail("A_eq/b_eq row mismatch");
    if (a_in.size() > 0 && a_in.cols() != n) fail("A_in column count mismatch");
    if (a_in.rows() != b_in.size()) fail("A_in/b_in row mismatch");
    if (lo.size() > 0 && lo.size() != n) fail("lower bound dimension mismatch");
    if (hi.size() > 0 && hi.size() != n) fail("upper bound dimension mismatch");
    if (lo.size() > 0 && hi.size() > 0)
        for (int i = 0; i < n; ++i)
            if (lo[i] > hi[i]) fail("lower bound exceeds upper bound for variable " + std::to_string(i));
    for (const SocConstraint& soc : socs) {
        if (soc.G.rows() < 1) fail("SOC must have at least one row");
        if (soc.G.cols() != n) fail("SOC G column count mismatch");
        if (soc.h.size() != soc.G.rows()) fail("SOC G/h row mismatch");
        if (soc.d.size() > 0 && soc.d.size() != n) fail("SOC d dimension mismatch");
    }
}

ConicSolution solve_conic(const ConicProgram& prog, const SolveOptions& opts) {
    prog.validate();
    const Standard st = build_standard(prog);
    const Cone cone(st);
    KktSolver kkt(st, cone);

    const double feastol = opts.tol;
    const double abstol = opts.tol;
    const double reltol = opts.tol;
    const double feastol_inacc = std::max(1e-4, opts.tol * 1e4);
    constexpr double kStepGamma = 0.98;
    constexpr double kStepMin = 1e-6;
    constexpr double kSigmaMin = 1e-4;
    constexpr double kSigmaMax = 1.0;

    ConicSolution out;
    const auto finish = [&](const Iterate& it, SolveStatus status, const std::string& msg) {
        out.status = status;
        out.message = msg;
        out.iterations = it.iter;
        const double tau = it.tau != 0.0 ? it.tau : 1.0;
        out.x = it.x / tau;
        out.objective = prog.c.dot(out.x);
        out.primal_residual = it.pres;
        out.dual_residual = it.dres;
        out.duality_gap = it.gap;
        if (status == SolveStatus::infeasible) out.certificate_residual = it.pinfres;
        if (status == SolveStatus::unbounded) out.certificate_residual = it.dinfres;
        const VectorXd z_unscaled = it.z / tau;
        const VectorXd s_unscaled = it.s / tau;
        out.ineq_slack.resize(st.n_in);
        out.ineq_dual.resize(st.n_in);
        for (int i = 0; i < st.n_in; ++i) {
            out.ineq_slack[i] = s_unscaled[i];
            out.ineq_dual[i] = z_unscaled[i];
        }
        for (size_t k = 0; k < st.soc_dim.size(); ++k) {
            const int o = st.soc_start[k];
            const int d = st.soc_dim[k];
            out.soc_slack.push_back(s_unscaled[o] -
                                    s_unscaled.segment(o + 1, d - 1).norm());
            out.soc_dual.push_back(z_unscaled[o]);
        }
        return out;
    };

    Iterate it;
    it.x = VectorXd::Zero(st.n);
    it.y = VectorXd::Zero(st.p);

    // Initialization with identity scaling.
    {
        Scalings w0;
        w0.lp_w2 = VectorXd::Ones(st.l);
        w0.eta2.assign(st.soc_dim.size(), 1.0);
        for (size_t k = 0; k < st.soc_dim.size(); ++k) {
            VectorXd v = VectorXd::Zero(st.soc_dim[k]);
            v[0] = 1.0;
            w0.v.push_back(v);
        }
        if (!kkt.factor(w0)) return finish(it, SolveStatus::numerical_error, "initial factorization failed");
        VectorXd dx, dy, dz;
        kkt.solve(VectorXd::Zero(st.n), st.b, st.h, dx, dy, dz);
        it.x = dx;
        cone.bring_to_cone(VectorXd(-dz), it.s);
        kkt.solve(VectorXd(-st.c), VectorXd::Zero(st.p), VectorXd::Zero(st.m), dx, dy, dz);
        it.y = dy;
        cone.bring_to_cone(dz, it.z);
    }

    const double resx0 = std::max(1.0, st.c.norm());
    const double resy0 = std::max(1.0, st.b.norm());
    const double resz0 = std::max(1.0, st.h.norm());

    Scalings w;
    VectorXd lambda;
    VectorXd rx, ry, rz;
    double rt = 0.0;
    Iterate best = it;
    bool have_best = false;
    double pres_prev = kInf;

    const auto check_exit = [&](bool reduced) -> SolveStatus {
        const double ft = reduced ? feastol_inacc : feastol;
        const double at = reduced ? feastol_inacc : abstol;
        const double rt_ = reduced ? feastol_inacc : reltol;
        const double cx = st.c.dot(it.x);
        const double by = st.p > 0 ? st.b.dot(it.y) : 0.0;
        const double hz = st.h.dot(it.z);
        if ((-cx > 0.0 || -by - hz >= -at) && it.pres < ft && it.dres < ft &&
            (it.gap < at || it.relgap < rt_))
            return SolveStatus::optimal;
        if (it.dinf_seen && it.dinfres < ft && it.tau < it.kap) return SolveStatus::unbounded;
        if (it.pinf_seen && it.pinfres < ft && it.tau < it.kap) return SolveStatus::infeasible;
        return SolveStatus::numerical_error; // sentinel for "not converged"
    };

    for (it.iter = 0; it.iter <= opts.max_iter; ++it.iter) {
        // Residuals.
        rx = -st.G.transpose() * it.z;
        if (st.p > 0) rx -= st.A.transpose() * it.y;
        const double hresx = rx.norm();
        rx -= it.tau * st.c;
        double hresy = 0.0;
        if (st.p > 0) {
            ry = st.A * it.x;
            hresy = ry.norm();
            ry -= it.tau * st.b;
        } else {
            ry.resize(0);
        }
        rz = it.s + st.G * it.x;
        const double hresz = rz.norm();
        rz -= it.tau * st.h;
        const double cx = st.c.dot(it.x);
        const double by = st.p > 0 ? st.b.dot(it.y) : 0.0;
        const double hz = st.h.dot(it.z);
        rt = it.kap + cx + by + hz;

        const double nx = it.x.norm(), ny = it.y.norm(), nz = it.z.norm(), ns = it.s.norm();
        it.gap = it.s.dot(it.z);
        it.mu = (it.gap + it.kap * it.tau) / (cone.degree() + 1);
        it.pcost = cx / it.tau;
        it.dcost = -(hz + by) / it.tau;
        if (it.pcost < 0.0)
            it.relgap = it.gap / (-it.pcost);
        else if (it.dcost > 0.0)
            it.relgap = it.gap / it.dcost;
        else
            it.relgap = kInf;
        const double nry = st.p > 0 ? ry.norm() / std::max(resy0 + nx, 1.0) : 0.0;
        const double nrz = rz.norm() / std::max(resz0 + nx + ns, 1.0);
        it.pres = std::max(nry, nrz) / it.tau;
        it.dres = rx.norm() / std::max(resx0 + ny + nz, 1.0) / it.tau;
        it.pinf_seen = (hz + by) / std::max(ny + nz, 1.0) < -reltol;
        it.dinf_seen = cx / std::max(nx, 1.0) < -reltol;
        if (it.pinf_seen) it.pinfres = hresx / std::max(ny + nz, 1.0);
        if (it.dinf_seen)
            it.dinfres = std::max(hresy / std::max(nx, 1.0), hresz / std::max(nx + ns, 1.0));

        if (opts.verbose)
            std::fprintf(stderr, "it %2d  pcost %+.6e  gap %.3e  pres %.3e  dres %.3e  k/t %.3e\n",
                         it.iter, it.pcost, it.gap, it.pres, it.dres, it.kap / it.tau);

        // Diverging or NaN iterate: fall back to the best one seen.
        if (it.iter > 0 && (it.pres > 100.0 * pres_prev || !std::isfinite(it.pcost) ||
                            it.gap < -1e-10)) {
            if (have_best) it = best;
            const SolveStatus code = check_exit(true);
            if (code != SolveStatus::numerical_error)
                return finish(it, code == SolveStatus::optimal ? SolveStatus::max_iterations : code,
                              "stopped at reduced accuracy after unreliable direction");
            return finish(it, SolveStatus::numerical_error, "unreliable search direction");
        }
        pres_prev = it.pres;

        const SolveStatus code = check_exit(false);
        if (code != SolveStatus::numerical_error) return finish(it, code, "");

        if (it.iter == opts.max_iter) {
            const SolveStatus rcode = check_exit(true);
            if (rcode == SolveStatus::infeasible || rcode == SolveStatus::unbounded)
                return finish(it, rcode, "reduced-accuracy certificate at iteration cap");
            return finish(it, SolveStatus::max_iterations, "iteration cap reached");
        }

        if (!have_best || (it.gap >= 0.0 && it.gap <= best.gap && it.pres <= best.pres * 10)) {
            best = it;
            have_best = true;
        }

        if (!cone.update_scalings(it.s, it.z, w, lambda))
            return finish(it, SolveStatus::numerical_error, "iterate left the cone");
        if (!kkt.factor(w))
            return finish(it, SolveStatus::numerical_error, "KKT factorization failed");

        VectorXd dx1, dy1, dz1;
        kkt.solve(VectorXd(-st.c), st.b, st.h, dx1, dy1, dz1);
        const double dtau_denom =
            it.kap / it.tau - st.c.dot(dx1) - (st.p > 0 ? st.b.dot(dy1) : 0.0) - st.h.dot(dz1);

        // Affine (predictor) direction.
        VectorXd dx2, dy2, dz2;
        kkt.solve(rx, VectorXd(st.p > 0 ? VectorXd(-ry) : VectorXd()), VectorXd(it.s - rz),
                  dx2, dy2, dz2);
        const double dtauaff =
            (rt - it.kap + st.c.dot(dx2) + (st.p > 0 ? st.b.dot(dy2) : 0.0) + st.h.dot(dz2)) /
            dtau_denom;
        VectorXd dzaff = dz2 + dtauaff * dz1;
        VectorXd w_dzaff;
        cone.scale(w, dzaff, w_dzaff);
        VectorXd dsaff_by_w = -w_dzaff - lambda;
        const double dkapaff = -it.kap - it.kap / it.tau * dtauaff;
        const double step_aff =
            cone.line_search(lambda, dsaff_by_w, w_dzaff, it.tau, dtauaff, it.kap, dkapaff);

        const double sigma =
            std::clamp(std::pow(1.0 - step_aff, 3.0), kSigmaMin, kSigmaMax);

        // Combined (predictor-corrector) direction.
        VectorXd ds1, ds2;
        cone.product(lambda, lambda, ds1);
        cone.product(dsaff_by_w, w_dzaff, ds2);
        const double sigmamu = sigma * it.mu;
        ds1 += ds2;
        for (int i = 0; i < st.l; ++i) ds1[i] -= sigmamu;
        for (size_t k = 0; k < st.soc_dim.size(); ++k) ds1[st.soc_start[k]] -= sigmamu;
        VectorXd lambda_div_ds;
        cone.division(lambda, ds1, lambda_div_ds);
        VectorXd w_lds;
        cone.scale(w, lambda_div_ds, w_lds);
        const double oms = 1.0 - sigma;
        kkt.solve(VectorXd(oms * rx), VectorXd(st.p > 0 ? VectorXd(-oms * ry) : VectorXd()),
                  VectorXd(-oms * rz + w_lds), dx2, dy2, dz2);
        const double bkap = it.kap * it.tau + dkapaff * dtauaff - sigmamu;
        const double dtau = (oms * rt - bkap / it.tau + st.c.dot(dx2) +
                             (st.p > 0 ? st.b.dot(dy2) : 0.0) + st.h.dot(dz2)) /
                            dtau_denom;
        dx2 += dtau * dx1;
        if (st.p > 0) dy2 += dtau * dy1;
        dz2 += dtau * dz1;
        VectorXd w_dz;
        cone.scale(w, dz2, w_dz);
        VectorXd ds_by_w = -(lambda_div_ds + w_dz);
        const double dkap = -(bkap + it.kap * dtau) / it.tau;

        const double step =
            kStepGamma * cone.line_search(lambda, ds_by_w, w_dz, it.tau, dtau, it.kap, dkap);
        if (step <= kStepMin) {
            if (have_best) it = best;
            const SolveStatus rcode = check_exit(true);
            if (rcode == SolveStatus::infeasible || rcode == SolveStatus::unbounded)
                return finish(it, rcode, "reduced-accuracy certificate after stall");
            if (rcode == SolveStatus::optimal)
                return finish(it, SolveStatus::max_iterations, "stalled at reduced accuracy");
            return finish(it, SolveStatus::numerical_error, "no further progress possible");
        }

        VectorXd ds;
        cone.scale(w, ds_by_w, ds);
        it.x += step * dx2;
        if (st.p > 0) it.y += step * dy2;
        it.z += step * dz2;
        it.s += step * ds;
        it.kap += step * dkap;
        it.tau += step * dtau;
    }
    return finish(it, SolveStatus::max_iterations, "iteration cap reached");
}

std::string dump_program(const ConicProgram& prog) {
    prog.validate();
    const Standard st = build_standard(prog);
    std::ostringstream os;
    const auto row = [&](const Eigen::RowVectorXd& r) {
        for (int j = 0; j < r.size(); ++j) os << (j ? " " : "") << r[j];
    };
    os << "# conic program, standard form: min c'x  s.t. Ax=b, Gx+s=h, s in K\n";
    os << "n " << st.n << "\np " << st.p << "\nm " << st.m << "\nl " << st.l << "\nq";
    for (int d : st.soc_dim) os << " " << d;
    os << "\nc ";
    row(st.c.transpose());
    os << "\n";
    for (int i = 0; i < st.p; ++i) {
        os << "A ";
        row(st.A.row(i));
        os << " | " << st.b[i] << "\n";
    }
    for (int i = 0; i < st.m; ++i) {
        os << "G ";
        row(st.G.row(i));
        os << " | " << st.h[i] << "\n";
    }
    return os.str();
}

} // namespace p2pflow
