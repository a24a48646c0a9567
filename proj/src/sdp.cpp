#include "lsmpc/sdp.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "lsmpc/errors.hpp"

namespace lsmpc {

Eigen::MatrixXd AffineBlock::eval(const Eigen::VectorXd& y) const {
    Eigen::MatrixXd m = constant;
    for (const auto& [v, coeff] : terms) {
        if (v >= y.size()) throw DimensionMismatch("decision vector too short");
        m += y[v] * coeff;
    }
    return m;
}

void AffineBlock::symmetrize() {
    auto sym = [&](Eigen::MatrixXd& m) {
        if (m.rows() != m.cols())
            throw DimensionMismatch("constraint block not square");
        const double a = (m - m.transpose()).cwiseAbs().maxCoeff();
        if (a > 1e-12 * std::max(1.0, m.cwiseAbs().maxCoeff()))
            throw NonSymmetricAssembly("block '" + label + "' asymmetric by " +
                                       std::to_string(a));
        m = 0.5 * (m + m.transpose()).eval();
    };
    sym(constant);
    for (auto& [v, m] : terms) {
        (void)v;
        sym(m);
        if (constant.rows() != m.rows())
            throw DimensionMismatch("coefficient dimension differs from block");
    }
}

AffineBlock AffineBlock::reduced(const Eigen::MatrixXd& W) const {
    AffineBlock out;
    out.constant = W.transpose() * constant * W;
    out.terms.reserve(terms.size());
    for (const auto& [v, m] : terms)
        out.terms.emplace_back(v, (W.transpose() * m * W).eval());
    out.eps = eps;
    out.label = label;
    return out;
}

void SdpProblem::add_block(AffineBlock b) {
    b.symmetrize();
    blocks.push_back(std::move(b));
}

void SdpProblem::validate() const {
    for (const auto& b : blocks) {
        if (b.eps < 0) throw InvalidInput("negative strictness margin");
        for (const auto& [v, m] : b.terms) {
            (void)m;
            if (v < 0 || v >= decision_dim)
                throw InvalidInput("constraint references unknown variable");
        }
    }
    if (objective && objective->size() != decision_dim)
        throw DimensionMismatch("objective dimension mismatch");
}

std::string to_string(SdpStatus s) {
    switch (s) {
        case SdpStatus::Feasible: return "Feasible";
        case SdpStatus::Infeasible: return "Infeasible";
        case SdpStatus::MaxIter: return "MaxIter";
        case SdpStatus::NumericalFailure: return "NumericalFailure";
    }
    return "?";
}

namespace {

// Internal scaled constraint: T(x) = base + sum_v x_v G[v] must stay PD.
struct Cone {
    Eigen::MatrixXd base;
    std::vector<std::pair<int, Eigen::MatrixXd>> G;

    Eigen::MatrixXd eval(const Eigen::VectorXd& x) const {
        Eigen::MatrixXd m = base;
        for (const auto& [v, g] : G) m += x[v] * g;
        return m;
    }
};

struct BarrierEval {
    bool interior = false;
    double phi = 0.0;  // -sum logdet
};

BarrierEval barrier_value(const std::vector<Cone>& cones,
                          const Eigen::VectorXd& x) {
    BarrierEval out;
    double phi = 0.0;
    for (const auto& c : cones) {
        Eigen::MatrixXd T = c.eval(x);
        Eigen::LLT<Eigen::MatrixXd> llt(T);
        if (llt.info() != Eigen::Success) return out;
        const auto& L = llt.matrixL();
        double ld = 0.0;
        for (Eigen::Index i = 0; i < T.rows(); ++i) {
            const double d = L(i, i);
            if (!(d > 0.0) || !std::isfinite(d)) return out;
            ld += std::log(d);
        }
        phi -= 2.0 * ld;
    }
    out.interior = true;
    out.phi = phi;
    return out;
}

// Newton minimization of kappa * c.x + phi(x); returns achieved decrement.
int newton_stage(const std::vector<Cone>& cones, const Eigen::VectorXd& c,
                 double kappa, Eigen::VectorXd& x, int max_steps) {
    const int p = static_cast<int>(x.size());
    int steps = 0;
    for (; steps < max_steps; ++steps) {
        Eigen::VectorXd grad = kappa * c;
        Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(p, p);
        for (const auto& cone : cones) {
            Eigen::MatrixXd T = cone.eval(x);
            Eigen::LLT<Eigen::MatrixXd> llt(T);
            if (llt.info() != Eigen::Success)
                throw NumericalFailure("lost interiority during Newton step");
            std::vector<Eigen::MatrixXd> TiG(cone.G.size());
            for (size_t a = 0; a < cone.G.size(); ++a)
                TiG[a] = llt.solve(cone.G[a].second);
            for (size_t a = 0; a < cone.G.size(); ++a) {
                const int va = cone.G[a].first;
                grad[va] -= TiG[a].trace();
                for (size_t b = a; b < cone.G.size(); ++b) {
                    const int vb = cone.G[b].first;
                    const double h =
                        (TiG[a].array() * TiG[b].transpose().array()).sum();
                    hess(va, vb) += h;
                    if (va != vb) hess(vb, va) += h;
                }
            }
        }
        const double ridge = 1e-13 * (1.0 + hess.trace() / p);
        hess.diagonal().array() += ridge;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
        if (ldlt.info() != Eigen::Success)
            throw NumericalFailure("Newton system factorization failed");
        Eigen::VectorXd dir = -ldlt.solve(grad);
        const double decrement2 = -grad.dot(dir);
        if (!(decrement2 > 0) || !std::isfinite(decrement2)) break;
        if (decrement2 * 0.5 < 1e-11) break;
        // damped step to stay well inside the cone
        const double damp = 1.0 / (1.0 + std::sqrt(decrement2));
        double alpha = std::min(1.0, 1.5 * damp);
        const BarrierEval here = barrier_value(cones, x);
        const double f_here = kappa * c.dot(x) + here.phi;
        bool moved = false;
        for (int ls = 0; ls < 60; ++ls) {
            Eigen::VectorXd cand = x + alpha * dir;
            const BarrierEval be = barrier_value(cones, cand);
            if (be.interior) {
                const double f_cand = kappa * c.dot(cand) + be.phi;
                if (f_cand <= f_here + 0.25 * alpha * grad.dot(dir)) {
                    x = cand;
                    moved = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if (!moved) break;
    }
    return steps;
}

double unscaled_margin(const SdpProblem& pb, const Eigen::VectorXd& y) {
    double margin = -std::numeric_limits<double>::infinity();
    for (const auto& b : pb.blocks) {
        Eigen::MatrixXd m = b.eval(y);
        m.diagonal().array() += b.eps;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m,
                                                          Eigen::EigenvaluesOnly);
        margin = std::max(margin, es.eigenvalues().maxCoeff());
    }
    for (const auto& [v, lo] : pb.lower_bounds)
        margin = std::max(margin, lo - y[v]);
    for (const auto& [v, hi] : pb.upper_bounds)
        margin = std::max(margin, y[v] - hi);
    if (!std::isfinite(margin)) margin = 0.0;
    return margin;
}

}  // namespace

SdpSolution solve(const SdpProblem& problem, double tol) {
    SdpOptions opts;
    opts.tol = tol;
    return solve(problem, opts);
}

SdpSolution solve(const SdpProblem& problem, const SdpOptions& opts) {
    problem.validate();
    const int p = problem.decision_dim;
    SdpSolution sol;
    sol.y = Eigen::VectorXd::Zero(p);

    // Scaled cones over (y, t); t is variable index p.
    std::vector<Cone> cones;
    double total_dim = 0.0;
    for (const auto& b : problem.blocks) {
        Cone c;
        Eigen::MatrixXd shifted = b.constant;
        shifted.diagonal().array() += b.eps;
        double scale = shifted.cwiseAbs().maxCoeff();
        for (const auto& [v, m] : b.terms)
            scale = std::max(scale, m.cwiseAbs().maxCoeff());
        scale = 1.0 / std::clamp(scale, 1e-8, 1e12);
        c.base = -scale * shifted;
        for (const auto& [v, m] : b.terms) c.G.emplace_back(v, (-scale * m).eval());
        c.G.emplace_back(p, Eigen::MatrixXd::Identity(b.dim(), b.dim()));
        cones.push_back(std::move(c));
        total_dim += static_cast<double>(b.dim());
    }
    auto bound_cone = [&](int v, double b, double sgn) {
        // sgn*(y_v - b) >= 0 as a 1x1 cone
        Cone c;
        c.base = Eigen::MatrixXd::Constant(1, 1, -sgn * b);
        c.G.emplace_back(v, Eigen::MatrixXd::Constant(1, 1, sgn));
        c.G.emplace_back(p, Eigen::MatrixXd::Identity(1, 1));
        cones.push_back(std::move(c));
        total_dim += 1.0;
    };
    for (const auto& [v, lo] : problem.lower_bounds) bound_cone(v, lo, 1.0);
    for (const auto& [v, hi] : problem.upper_bounds) bound_cone(v, hi, -1.0);
    total_dim += 1.0;  // the t variable's own barrier below

    if (cones.empty()) {
        sol.status = SdpStatus::Feasible;
        sol.margin = 0.0;
        if (problem.objective) sol.objective_value = 0.0;
        return sol;
    }

    // --- phase I: minimize t so that every cone + t I is PD ---------------
    Eigen::VectorXd x = Eigen::VectorXd::Zero(p + 1);
    double t0 = 0.0;
    for (const auto& c : cones) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c.base,
                                                          Eigen::EigenvaluesOnly);
        t0 = std::max(t0, -es.eigenvalues().minCoeff());
    }
    x[p] = t0 + 1.0;
    Eigen::VectorXd c_phase1 = Eigen::VectorXd::Zero(p + 1);
    c_phase1[p] = 1.0;
    // keep t itself bounded below so phase I stays well-posed
    std::vector<Cone> cones1 = cones;
    {
        Cone tc;
        tc.base = Eigen::MatrixXd::Constant(1, 1, 10.0 * (t0 + 1.0));
        tc.G.emplace_back(p, Eigen::MatrixXd::Identity(1, 1));
        cones1.push_back(std::move(tc));
    }

    try {
        double kappa = 1.0;
        const double kappa_max = total_dim / std::max(opts.tol * 1e-2, 1e-14);
        int stage = 0;
        for (; stage < opts.max_stages; ++stage) {
            sol.newton_steps +=
                newton_stage(cones1, c_phase1, kappa, x, opts.max_newton_per_stage);
            if (x[p] < -1e-4 && !problem.objective) break;
            if (x[p] < -1e-4 && problem.objective) break;
            if (kappa > kappa_max) break;
            kappa *= 10.0;
        }
        if (stage >= opts.max_stages) {
            sol.status = SdpStatus::MaxIter;
            sol.y = x.head(p);
            sol.margin = unscaled_margin(problem, sol.y);
            return sol;
        }
        if (x[p] >= 0.0) {
            sol.status = SdpStatus::Infeasible;
            sol.y = x.head(p);
            sol.margin = unscaled_margin(problem, sol.y);
            return sol;
        }

        // strictly feasible start for phase II
        Eigen::VectorXd y = x.head(p);

        if (!problem.objective) {
            sol.status = SdpStatus::Feasible;
            sol.y = y;
            sol.margin = unscaled_margin(problem, y);
            return sol;
        }

        // --- phase II: minimize the objective over the original cones -----
        std::vector<Cone> cones2;
        cones2.reserve(cones.size());
        for (const auto& c : cones) {
            Cone cc;
            cc.base = c.base;
            for (const auto& [v, g] : c.G)
                if (v < p) cc.G.emplace_back(v, g);
            cones2.push_back(std::move(cc));
        }
        const Eigen::VectorXd obj = *problem.objective;
        double kappa2 = 1.0;
        const double kappa2_max = total_dim / std::max(opts.tol, 1e-14);
        int stage2 = 0;
        for (; stage2 < opts.max_stages; ++stage2) {
            sol.newton_steps +=
                newton_stage(cones2, obj, kappa2, y, opts.max_newton_per_stage);
            if (kappa2 > kappa2_max) break;
            kappa2 *= 10.0;
        }
        sol.status = (stage2 >= opts.max_stages) ? SdpStatus::MaxIter
                                                 : SdpStatus::Feasible;
        sol.y = y;
        sol.margin = unscaled_margin(problem, y);
        sol.objective_value = obj.dot(y);
        if (sol.status == SdpStatus::Feasible && sol.margin > opts.tol)
            sol.status = SdpStatus::NumericalFailure;
        return sol;
    } catch (const NumericalFailure&) {
        sol.status = SdpStatus::NumericalFailure;
        sol.y = x.head(p);
        sol.margin = unscaled_margin(problem, sol.y);
        return sol;
    }
}

std::vector<BlockMargin> verify_certificate(const std::vector<AffineBlock>& blocks,
                                            const Eigen::VectorXd& y) {
    std::vector<BlockMargin> out;
    out.reserve(blocks.size());
    for (const auto& b : blocks) {
        Eigen::MatrixXd m = b.eval(y);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m,
                                                          Eigen::EigenvaluesOnly);
        BlockMargin bm;
        bm.label = b.label;
        bm.max_eig = es.eigenvalues().maxCoeff();
        bm.min_eig = es.eigenvalues().minCoeff();
        out.push_back(std::move(bm));
    }
    return out;
}

double worst_margin(const std::vector<BlockMargin>& margins) {
    double w = -std::numeric_limits<double>::infinity();
    for (const auto& m : margins) w = std::max(w, m.max_eig);
    return w;
}

}  // namespace lsmpc
