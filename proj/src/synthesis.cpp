#include "lsmpc/synthesis.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <cstdlib>
#include <future>
#include <thread>

#include "lsmpc/coordination.hpp"

namespace lsmpc {

namespace {

std::vector<int> neighbor_ids(const SubsystemRules& sub) {
    std::vector<int> js;
    for (const auto& [j, fij] : sub.f) js.push_back(j);
    return js;  // std::map keeps them ascending
}

double require_positive(double v, const char* name) {
    if (!(v > 0)) throw InvalidInput(std::string(name) + " must be positive");
    return v;
}

}  // namespace

Eigen::MatrixXd SubsystemGains::blend_gain(const Eigen::VectorXd& mu) const {
    if (k.empty()) throw MissingGain("empty gain list");
    if (mu.size() > static_cast<Eigen::Index>(k.size()))
        throw MissingGain("gain set has fewer rules than membership weights");
    Eigen::MatrixXd km = Eigen::MatrixXd::Zero(k[0].rows(), k[0].cols());
    for (Eigen::Index l = 0; l < mu.size(); ++l) km += mu[l] * k[l];
    return km;
}

double GainSet::worst_margin() const {
    double w = -std::numeric_limits<double>::infinity();
    for (const auto& g : subsystems)
        for (const auto& m : g.certificate_margins) w = std::max(w, m.max_eig);
    return w;
}

void GainSet::validate_dims(const LargeScaleSystem& sys) const {
    if (static_cast<int>(subsystems.size()) != sys.size())
        throw DimensionMismatch("gain set subsystem count mismatch");
    for (int i = 0; i < sys.size(); ++i) {
        const auto& g = subsystems[i];
        const auto& s = sys.sub(i);
        if (static_cast<int>(g.k.size()) != s.rule_count())
            throw MissingGain("gain rules != subsystem rules");
        for (const auto& k : g.k)
            if (k.rows() != s.input_dim() || k.cols() != s.state_dim())
                throw DimensionMismatch("gain dimension mismatch");
        if (!(g.sigma > 0)) throw InvalidInput("sigma must be positive");
    }
}

void SynthesisHyperparams::validate(const LargeScaleSystem& sys) const {
    const size_t N = sys.subsystems.size();
    auto need = [&](size_t got, const char* name) {
        if (got != N)
            throw InvalidInput(std::string(name) + " must have one entry per subsystem");
    };
    need(lambda.size(), "lambda");
    need(rho_state.size(), "rho_state");
    need(rho_delay.size(), "rho_delay");
    need(varpi.size(), "varpi");
    need(tau.size(), "tau");
    need(input_energy.size(), "input_energy");
    need(X.size(), "X");
    for (size_t i = 0; i < N; ++i) {
        if (!(lambda[i] > 0.0 && lambda[i] < 1.0))
            throw InvalidInput("lambda must lie in (0,1)");
        require_positive(varpi[i], "varpi");
        require_positive(tau[i], "tau");
        require_positive(input_energy[i], "input_energy H");
        if (!(rho_state[i] >= 0 && rho_delay[i] >= 0) ||
            std::abs(rho_state[i] + rho_delay[i] - 1.0) > 1e-12)
            throw InvalidInput("rho_state + rho_delay must equal 1");
        const auto n = sys.sub(static_cast<int>(i)).state_dim();
        if (X[i].rows() != n || X[i].cols() != n)
            throw DimensionMismatch("X dimension mismatch");
        if ((X[i] - X[i].transpose()).cwiseAbs().maxCoeff() > 1e-12)
            throw InvalidInput("X must be symmetric");
        Eigen::LLT<Eigen::MatrixXd> llt(X[i]);
        if (llt.info() != Eigen::Success)
            throw InvalidInput("X must be positive definite");
    }
    if (!(alpha >= 2.0)) throw InvalidInput("alpha must be >= 2");
    if (Q.rows() != Q.cols()) throw DimensionMismatch("Q must be square");
    if (R.rows() != R.cols()) throw DimensionMismatch("R must be square");
    if (eps_strict < 0) throw InvalidInput("eps_strict must be >= 0");
}

SubsystemVars SubsystemVars::layout(const SubsystemRules& sub, bool with_xbar) {
    SubsystemVars v;
    v.r = sub.rule_count();
    v.n = sub.state_dim();
    v.m = sub.input_dim();
    v.k_base = 0;
    v.sigma = static_cast<int>(v.r * v.m * v.n);
    v.z_base = v.sigma + 1;
    const int zlen = static_cast<int>(v.n * (v.n + 1) / 2);
    if (with_xbar) {
        v.xbar_base = v.z_base + zlen;
        v.total = v.xbar_base + static_cast<int>(v.n);
    } else {
        v.xbar_base = -1;
        v.total = v.z_base + zlen;
    }
    return v;
}

AffineMatrix SubsystemVars::gain(int rule) const {
    return AffineMatrix::variable(m, n, k_base + rule * static_cast<int>(m * n));
}

AffineMatrix SubsystemVars::sigma_times(const Eigen::MatrixXd& mat) const {
    AffineMatrix s = AffineMatrix::scalar_identity(sigma, mat.rows());
    return s.right_mult(mat);
}

AffineMatrix SubsystemVars::z_matrix() const {
    return AffineMatrix::variable_symmetric(n, z_base);
}

AffineMatrix SubsystemVars::xbar_row() const {
    if (xbar_base < 0) return AffineMatrix::constant(Eigen::MatrixXd::Zero(1, n));
    return AffineMatrix::variable(1, n, xbar_base);
}

AffineBlock build_rpi_lmi(const LargeScaleSystem& sys,
                          const SynthesisHyperparams& hp, int i, int l, int m,
                          const SubsystemVars& vars) {
    const auto& sub = sys.sub(i);
    const int N = sys.size();
    const auto n = sub.state_dim();
    const auto c = sub.disturbance_dim();
    if (l < 0 || l >= sub.rule_count() || m < 0 || m >= sub.rule_count())
        throw InvalidInput("rule vertex out of range");
    const Eigen::MatrixXd& Xi = hp.X[i];
    const Eigen::MatrixXd& Ximu = hp.X_mu(i);
    const double lam = hp.lambda[i];
    const double sq = std::sqrt(hp.alpha);
    const auto js = neighbor_ids(sub);

    // Theta = A_l + B_l k_m, affine in the gain unknowns
    const AffineMatrix Theta =
        AffineMatrix::constant(sub.A[l]) + vars.gain(m).left_mult(sub.B[l]);
    const Eigen::MatrixXd& Ad = sub.A_d[l];
    const Eigen::MatrixXd& w = sub.w[l];

    Eigen::MatrixXd fXf = Eigen::MatrixXd::Zero(n, n);
    for (int j : js) {
        const Eigen::MatrixXd& fij = sub.f.at(j);
        fXf += fij.transpose() * hp.X[j - 1] * fij;
    }

    std::vector<Eigen::Index> sizes{c, n, n};
    for (int j : js) sizes.push_back(sub.f.at(j).cols());
    sizes.push_back(n);
    BlockAssembler assembler(sizes);
    const int row_d = 0, row_x = 1, row_xd = 2;
    const int row_slack = 3 + static_cast<int>(js.size());

    assembler.set(row_d, row_d,
                  AffineMatrix::constant(w.transpose() * Xi * w) -
                      vars.sigma_times(lam * hp.varpi[i] *
                                       Eigen::MatrixXd::Identity(c, c)));
    assembler.set(row_x, row_d, Theta.transpose().right_mult(Xi * w));
    assembler.set(row_x, row_x,
                  N * sq * fXf - hp.rho_state[i] * (1.0 - lam) * Ximu);
    assembler.set(row_xd, row_d, Ad.transpose() * Xi * w);
    assembler.set(row_xd, row_x, Theta.left_mult(Ad.transpose() * Xi));
    assembler.set(row_xd, row_xd,
                  Ad.transpose() * Xi * Ad - (1.0 - lam) * hp.rho_delay[i] * Ximu);
    for (size_t a = 0; a < js.size(); ++a) {
        const Eigen::MatrixXd& fa = sub.f.at(js[a]);
        const int row_a = 3 + static_cast<int>(a);
        assembler.set(row_a, row_d, fa.transpose() * Xi * w);
        assembler.set(row_a, row_x,
                      Theta.left_mult((1.0 - sq) * fa.transpose() * Xi));
        assembler.set(row_a, row_xd, fa.transpose() * Xi * Ad);
        for (size_t b = 0; b <= a; ++b) {
            const Eigen::MatrixXd& fb = sub.f.at(js[b]);
            assembler.set(row_a, 3 + static_cast<int>(b),
                          -(hp.alpha - 1.0) * fa.transpose() * Xi * fb);
        }
    }
    assembler.set(row_slack, row_x, Theta.left_mult(Xi));
    assembler.set(row_slack, row_slack, (-1.0 / N) * Xi.transpose());

    auto asm_out = assembler.assemble();
    AffineBlock block;
    block.constant = std::move(asm_out.constant);
    block.terms = std::move(asm_out.terms);
    block.eps = hp.eps_strict;
    block.label = "rpi[i=" + std::to_string(i + 1) + ",l=" + std::to_string(l + 1) +
                  ",m=" + std::to_string(m + 1) + "]";
    return block;
}

InputConstraintBlocks build_input_constraint_lmi(const LargeScaleSystem& sys,
                                                 const SynthesisHyperparams& hp,
                                                 int i, int l,
                                                 const SubsystemVars& vars) {
    (void)hp;
    const auto& sub = sys.sub(i);
    const auto n = sub.state_dim();
    const auto m = sub.input_dim();
    InputConstraintBlocks out;

    BlockAssembler assembler({n, m});
    assembler.set(0, 0, vars.z_matrix());
    assembler.set(1, 0, vars.gain(l));
    assembler.set(1, 1, Eigen::MatrixXd::Identity(m, m));
    auto a = assembler.assemble();
    AffineBlock psd;  // [[Z, k'],[k, I]] >= 0, stored negated
    psd.constant = -a.constant;
    for (auto& [v, mt] : a.terms) psd.terms.emplace_back(v, (-mt).eval());
    psd.eps = 0.0;
    psd.label = "input[i=" + std::to_string(i + 1) + ",l=" + std::to_string(l + 1) + "]";
    out.psd = std::move(psd);

    // Z_ss <= u_s,max^2 for each input channel s
    const AffineMatrix Z = vars.z_matrix();
    for (Eigen::Index s = 0; s < m; ++s) {
        AffineBlock cap;
        Eigen::MatrixXd pick = Eigen::MatrixXd::Zero(1, n);
        pick(0, s) = 1.0;
        AffineMatrix zss = Z.left_mult(pick).right_mult(pick.transpose());
        const double bound = sys.u_max[i][s] * sys.u_max[i][s];
        cap.constant = zss.constant_part() -
                       Eigen::MatrixXd::Constant(1, 1, bound);
        for (const auto& [v, mt] : zss.variable_parts())
            cap.terms.emplace_back(v, mt);
        cap.eps = 0.0;
        cap.label = "input_cap[i=" + std::to_string(i + 1) + ",s=" +
                    std::to_string(s + 1) + "]";
        out.channel_caps.push_back(std::move(cap));
    }
    return out;
}

AffineBlock build_terminal_lmi(const LargeScaleSystem& sys,
                               const SynthesisHyperparams& hp, int i, int l,
                               int m, const SubsystemVars& vars,
                               const CoordinationState& coord,
                               int expected_iteration) {
    if (coord.iteration != expected_iteration)
        throw CoordinationStateStale("coordination iteration " +
                                     std::to_string(coord.iteration) +
                                     " != expected " +
                                     std::to_string(expected_iteration));
    const auto& sub = sys.sub(i);
    const int N = sys.size();
    const auto n = sub.state_dim();
    const auto c = sub.disturbance_dim();
    const auto mdim = sub.input_dim();
    const Eigen::MatrixXd& Xi = hp.X[i];
    const Eigen::MatrixXd& Ximu = hp.X_mu(i);
    const double sq = std::sqrt(hp.alpha);
    const double H = hp.input_energy[i];
    const auto js = neighbor_ids(sub);

    const VectorXd z0 = coord.z.at(i).empty() ? VectorXd::Zero(n)
                                              : coord.z.at(i).front();
    const bool with_coord = z0.norm() > 0.0;
    if (with_coord && vars.xbar_base < 0)
        throw InvalidInput("terminal row active but layout lacks X_bar vars");

    const AffineMatrix Theta =
        AffineMatrix::constant(sub.A[l]) + vars.gain(m).left_mult(sub.B[l]);
    const Eigen::MatrixXd& Ad = sub.A_d[l];
    const Eigen::MatrixXd& w = sub.w[l];
    Eigen::MatrixXd fXf = Eigen::MatrixXd::Zero(n, n);
    for (int j : js) {
        const Eigen::MatrixXd& fij = sub.f.at(j);
        fXf += fij.transpose() * hp.X[j - 1] * fij;
    }

    std::vector<Eigen::Index> sizes{c, n, n};
    for (int j : js) sizes.push_back(sub.f.at(j).cols());
    if (with_coord) sizes.push_back(1);
    sizes.push_back(mdim);
    sizes.push_back(n);
    BlockAssembler assembler(sizes);
    const int row_d = 0, row_x = 1, row_xd = 2;
    const int row_co = with_coord ? 3 + static_cast<int>(js.size()) : -1;
    const int row_h = 3 + static_cast<int>(js.size()) + (with_coord ? 1 : 0);
    const int row_slack = row_h + 1;

    assembler.set(row_d, row_d,
                  AffineMatrix::constant(w.transpose() * Xi * w) -
                      vars.sigma_times(hp.tau[i] *
                                       Eigen::MatrixXd::Identity(c, c)));
    assembler.set(row_x, row_d, Theta.transpose().right_mult(Xi * w));
    assembler.set(row_x, row_x,
                  AffineMatrix::constant(N * sq * fXf - hp.rho_state[i] * Ximu) +
                      vars.sigma_times(hp.Q));
    assembler.set(row_xd, row_d, Ad.transpose() * Xi * w);
    assembler.set(row_xd, row_x, Theta.left_mult(Ad.transpose() * Xi));
    assembler.set(row_xd, row_xd,
                  Ad.transpose() * Xi * Ad - hp.rho_delay[i] * Ximu);
    for (size_t a = 0; a < js.size(); ++a) {
        const Eigen::MatrixXd& fa = sub.f.at(js[a]);
        const int row_a = 3 + static_cast<int>(a);
        assembler.set(row_a, row_d, fa.transpose() * Xi * w);
        assembler.set(row_a, row_x,
                      Theta.left_mult((1.0 - sq) * fa.transpose() * Xi));
        assembler.set(row_a, row_xd, fa.transpose() * Xi * Ad);
        for (size_t b = 0; b <= a; ++b) {
            const Eigen::MatrixXd& fb = sub.f.at(js[b]);
            assembler.set(row_a, 3 + static_cast<int>(b),
                          -(hp.alpha - 1.0) * fa.transpose() * Xi * fb);
        }
    }
    if (with_coord) {
        // row entries -1/2 (X_bar' + sigma delta_j') f_ij and diagonal
        // (sigma delta_i' z_i + X_bar' z_i), all affine
        for (size_t a = 0; a < js.size(); ++a) {
            const int j = js[a];
            const Eigen::MatrixXd& fij = sub.f.at(j);
            const VectorXd dj = coord.delta.at(j - 1).empty()
                                    ? VectorXd::Zero(n)
                                    : coord.delta.at(j - 1).front();
            if (dj.size() != n)
                throw DimensionMismatch(
                    "delta_j dimension incompatible with f_ij row space");
            AffineMatrix mixed =
                vars.xbar_row() +
                vars.sigma_times(Eigen::MatrixXd::Identity(1, 1))
                    .right_mult(dj.transpose());
            assembler.set(row_co, 3 + static_cast<int>(a),
                          mixed.right_mult(fij) * -0.5);
        }
        const VectorXd di = coord.delta.at(i).empty() ? VectorXd::Zero(n)
                                                      : coord.delta.at(i).front();
        AffineMatrix diag =
            vars.sigma_times(Eigen::MatrixXd::Constant(1, 1, di.dot(z0))) +
            vars.xbar_row().right_mult(z0);
        assembler.set(row_co, row_co, diag);
    }
    assembler.set(row_h, row_x, vars.gain(m) * H);
    assembler.set(row_h, row_h, -H * Eigen::MatrixXd::Identity(mdim, mdim));
    assembler.set(row_slack, row_x, Theta.left_mult(Xi));
    assembler.set(row_slack, row_slack, (-1.0 / N) * Xi.transpose());

    auto asm_out = assembler.assemble();
    AffineBlock block;
    block.constant = std::move(asm_out.constant);
    block.terms = std::move(asm_out.terms);
    block.eps = hp.eps_strict;
    block.label = "terminal[i=" + std::to_string(i + 1) + ",l=" +
                  std::to_string(l + 1) + ",m=" + std::to_string(m + 1) + "]";
    return block;
}

std::vector<AffineBlock> build_level_lmi(const std::vector<VectorXd>& history,
                                         const Eigen::MatrixXd& X_i,
                                         const SubsystemVars& vars) {
    const auto n = X_i.rows();
    // conditioning guard before inverting
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(X_i);
    const double lmin = es.eigenvalues().minCoeff();
    const double lmax = es.eigenvalues().maxCoeff();
    if (!(lmin > 0) || lmax / lmin > 1e10)
        throw SingularX("X not invertible to conditioning threshold 1e10");
    const Eigen::MatrixXd Xinv = X_i.inverse();

    std::vector<AffineBlock> blocks;
    for (size_t s = 0; s < history.size(); ++s) {
        const VectorXd& x = history[s];
        if (x.size() != n) throw DimensionMismatch("history sample dimension");
        BlockAssembler assembler({Eigen::Index(1), n});
        assembler.set(0, 0, vars.sigma_times(Eigen::MatrixXd::Identity(1, 1)));
        assembler.set(1, 0, Eigen::MatrixXd(x));
        assembler.set(1, 1, vars.sigma_times(Xinv));
        auto a = assembler.assemble();
        AffineBlock block;  // >= 0 required, store negated
        block.constant = -a.constant;
        for (auto& [v, m] : a.terms) block.terms.emplace_back(v, (-m).eval());
        block.eps = 0.0;
        block.label = "level[s=" + std::to_string(s) + "]";
        blocks.push_back(std::move(block));
    }
    return blocks;
}

Eigen::MatrixXd structural_reducer(const LargeScaleSystem& sys, int i,
                                   BlockShape shape) {
    const auto& sub = sys.sub(i);
    const auto n = sub.state_dim();
    const auto c = sub.disturbance_dim();
    const auto mdim = sub.input_dim();
    const auto js = neighbor_ids(sub);

    std::vector<Eigen::MatrixXd> diag_blocks;
    diag_blocks.push_back(Eigen::MatrixXd::Identity(c, c));
    diag_blocks.push_back(Eigen::MatrixXd::Identity(n, n));
    diag_blocks.push_back(Eigen::MatrixXd::Identity(n, n));
    for (int j : js) {
        const Eigen::MatrixXd& fij = sub.f.at(j);
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(fij, Eigen::ComputeFullV);
        const auto& sv = svd.singularValues();
        Eigen::Index rank = 0;
        const double thresh = 1e-12 * std::max(1.0, sv.size() ? sv[0] : 0.0);
        for (Eigen::Index a = 0; a < sv.size(); ++a)
            if (sv[a] > thresh) ++rank;
        diag_blocks.push_back(svd.matrixV().leftCols(rank));
    }
    if (shape == BlockShape::terminal_with_coord)
        diag_blocks.push_back(Eigen::MatrixXd::Identity(1, 1));
    if (shape != BlockShape::rpi)
        diag_blocks.push_back(Eigen::MatrixXd::Identity(mdim, mdim));
    diag_blocks.push_back(Eigen::MatrixXd::Identity(n, n));

    Eigen::Index rows = 0, cols = 0;
    for (const auto& b : diag_blocks) {
        rows += b.rows();
        cols += b.cols();
    }
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(rows, cols);
    Eigen::Index r0 = 0, c0 = 0;
    for (const auto& b : diag_blocks) {
        W.block(r0, c0, b.rows(), b.cols()) = b;
        r0 += b.rows();
        c0 += b.cols();
    }
    return W;
}

namespace {

struct LoweredProblem {
    SdpProblem sdp;
    std::vector<AffineBlock> raw_blocks;   // reduced blocks, for verification
    SubsystemVars vars;
};

LoweredProblem lower_subsystem(const LargeScaleSystem& sys,
                               const SynthesisHyperparams& hp, int i,
                               const CoordinationState& coord,
                               const std::vector<VectorXd>& history) {
    const auto& sub = sys.sub(i);
    const auto n = sub.state_dim();
    const VectorXd z0 = coord.z.at(i).empty() ? VectorXd::Zero(n)
                                              : coord.z.at(i).front();
    const bool with_coord = z0.norm() > 0.0;
    LoweredProblem lp;
    lp.vars = SubsystemVars::layout(sub, with_coord);
    lp.sdp.decision_dim = lp.vars.total;

    const Eigen::MatrixXd W16 = reducer16(sys, i);
    const Eigen::MatrixXd W26 = structural_reducer(sys, i, with_coord);
    for (int l = 0; l < sub.rule_count(); ++l) {
        for (int m = 0; m < sub.rule_count(); ++m) {
            lp.sdp.add_block(build_rpi_lmi(sys, hp, i, l, m, lp.vars).reduced(W16));
            lp.sdp.add_block(
                build_terminal_lmi(sys, hp, i, l, m, lp.vars, coord,
                                   coord.iteration)
                    .reduced(W26));
        }
        auto input = build_input_constraint_lmi(sys, hp, i, l, lp.vars);
        lp.sdp.add_block(std::move(input.psd));
        if (l == 0)
            for (auto& cap : input.channel_caps) lp.sdp.add_block(std::move(cap));
    }
    for (auto& blk : build_level_lmi(history, hp.X[i], lp.vars))
        lp.sdp.add_block(std::move(blk));

    Eigen::VectorXd c = Eigen::VectorXd::Zero(lp.vars.total);
    c[lp.vars.sigma] = 1.0;
    lp.sdp.objective = c;
    lp.sdp.lower_bounds.emplace_back(lp.vars.sigma, 1e-12);
    lp.raw_blocks = lp.sdp.blocks;
    return lp;
}

SubsystemGains extract_gains(const LoweredProblem& lp, const SdpSolution& sol,
                             const SubsystemRules& sub) {
    SubsystemGains g;
    const auto& v = lp.vars;
    for (int l = 0; l < v.r; ++l) {
        Eigen::MatrixXd k(v.m, v.n);
        for (Eigen::Index r = 0; r < v.m; ++r)
            for (Eigen::Index cidx = 0; cidx < v.n; ++cidx)
                k(r, cidx) = sol.y[v.k_base + l * v.m * v.n + r * v.n + cidx];
        g.k.push_back(std::move(k));
    }
    g.sigma = sol.y[v.sigma];
    g.Z = Eigen::MatrixXd::Zero(v.n, v.n);
    int zi = v.z_base;
    for (Eigen::Index r = 0; r < v.n; ++r)
        for (Eigen::Index cidx = r; cidx < v.n; ++cidx) {
            g.Z(r, cidx) = sol.y[zi];
            g.Z(cidx, r) = sol.y[zi];
            ++zi;
        }
    g.X_bar = Eigen::VectorXd::Zero(v.n);
    if (v.xbar_base >= 0)
        for (Eigen::Index r = 0; r < v.n; ++r)
            g.X_bar[r] = sol.y[v.xbar_base + r];
    (void)sub;
    return g;
}

int thread_budget(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("FUZZY_LSMPC_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw ? static_cast<int>(hw) : 1;
}

}  // namespace

GainSet synthesize(const LargeScaleSystem& sys, const SynthesisHyperparams& hp,
                   const CoordinationState& coord,
                   const std::vector<std::vector<VectorXd>>& x_history,
                   const SynthesisOptions& opts) {
    sys.validate();
    hp.validate(sys);
    coord.validate(sys);
    if (x_history.size() != sys.subsystems.size())
        throw DimensionMismatch("history subsystem count mismatch");

    const int N = sys.size();
    auto solve_one = [&](int i) -> SubsystemGains {
        LoweredProblem lp = lower_subsystem(sys, hp, i, coord, x_history[i]);
        SdpSolution sol = solve(lp.sdp, opts.solve_tol);
        if (sol.status == SdpStatus::Infeasible)
            throw InfeasibleSynthesis(
                "subsystem " + std::to_string(i + 1) +
                    " synthesis infeasible (best margin " +
                    std::to_string(sol.margin) + ")",
                i + 1, "rpi+input+terminal+level", sol.margin);
        if (sol.status != SdpStatus::Feasible)
            throw NumericalFailure("subsystem " + std::to_string(i + 1) +
                                   " solver status " + to_string(sol.status));
        SubsystemGains g = extract_gains(lp, sol, sys.sub(i));
        // independent certificate; never report Feasible without it
        auto margins = verify_certificate(lp.raw_blocks, sol.y);
        for (const auto& bm : margins) {
            CertificateMargin cm;
            cm.family = bm.label;
            cm.max_eig = bm.max_eig;
            g.certificate_margins.push_back(std::move(cm));
        }
        for (const auto& bm : margins)
            if (!(bm.max_eig < 0.0))
                throw InfeasibleSynthesis(
                    "subsystem " + std::to_string(i + 1) +
                        " certificate rejected: block '" + bm.label +
                        "' max eigenvalue " + std::to_string(bm.max_eig),
                    i + 1, bm.label, bm.max_eig);
        return g;
    };

    GainSet out;
    out.hp = hp;
    out.subsystems.resize(N);
    const int threads = std::min(thread_budget(opts.threads), N);
    if (threads <= 1) {
        for (int i = 0; i < N; ++i) out.subsystems[i] = solve_one(i);
    } else {
        std::vector<std::future<SubsystemGains>> futs;
        futs.reserve(N);
        for (int i = 0; i < N; ++i)
            futs.push_back(std::async(std::launch::async, solve_one, i));
        for (int i = 0; i < N; ++i) out.subsystems[i] = futs[i].get();
    }
    return out;
}

Eigen::MatrixXd build_appendix_a1(const LargeScaleSystem& sys,
                                  const SynthesisHyperparams& hp, int i, int l,
                                  int m, const std::vector<Eigen::MatrixXd>& k,
                                  double sigma) {
    const auto& sub = sys.sub(i);
    const int N = sys.size();
    const auto n = sub.state_dim();
    const auto c = sub.disturbance_dim();
    const Eigen::MatrixXd& Xi = hp.X[i];
    const Eigen::MatrixXd& Ximu = hp.X_mu(i);
    const double lam = hp.lambda[i];
    const double sq = std::sqrt(hp.alpha);
    const auto js = neighbor_ids(sub);
    const Eigen::MatrixXd Theta = sub.A[l] + sub.B[l] * k.at(m);
    const Eigen::MatrixXd& Ad = sub.A_d[l];
    const Eigen::MatrixXd& w = sub.w[l];
    Eigen::MatrixXd fXf = Eigen::MatrixXd::Zero(n, n);
    for (int j : js) fXf += sub.f.at(j).transpose() * hp.X[j - 1] * sub.f.at(j);

    Eigen::Index dim = c + 2 * n;
    for (int j : js) dim += sub.f.at(j).cols();
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(dim, dim);
    auto seg = [&](int idx) -> Eigen::Index {  // row offsets
        if (idx == 0) return 0;
        if (idx == 1) return c;
        if (idx == 2) return c + n;
        Eigen::Index off = c + 2 * n;
        for (int a = 0; a < idx - 3; ++a) off += sub.f.at(js[a]).cols();
        return off;
    };
    const Eigen::MatrixXd phi =
        N * Theta.transpose() * Xi * Theta + N * sq * fXf -
        hp.rho_state[i] * (1.0 - lam) * Ximu;
    M.block(seg(0), seg(0), c, c) =
        w.transpose() * Xi * w -
        sigma * lam * hp.varpi[i] * Eigen::MatrixXd::Identity(c, c);
    M.block(seg(1), seg(0), n, c) = Theta.transpose() * Xi * w;
    M.block(seg(1), seg(1), n, n) = phi;
    M.block(seg(2), seg(0), n, c) = Ad.transpose() * Xi * w;
    M.block(seg(2), seg(1), n, n) = Ad.transpose() * Xi * Theta;
    M.block(seg(2), seg(2), n, n) =
        Ad.transpose() * Xi * Ad - (1.0 - lam) * hp.rho_delay[i] * Ximu;
    for (size_t a = 0; a < js.size(); ++a) {
        const Eigen::MatrixXd& fa = sub.f.at(js[a]);
        const auto ra = seg(3 + static_cast<int>(a));
        M.block(ra, seg(0), fa.cols(), c) = fa.transpose() * Xi * w;
        M.block(ra, seg(1), fa.cols(), n) =
            (1.0 - sq) * fa.transpose() * Xi * Theta;
        M.block(ra, seg(2), fa.cols(), n) = fa.transpose() * Xi * Ad;
        for (size_t b = 0; b <= a; ++b) {
            const Eigen::MatrixXd& fb = sub.f.at(js[b]);
            M.block(ra, seg(3 + static_cast<int>(b)), fa.cols(), fb.cols()) =
                -(hp.alpha - 1.0) * fa.transpose() * Xi * fb;
        }
    }
    Eigen::MatrixXd sym = M.selfadjointView<Eigen::Lower>();
    return sym;
}

Eigen::MatrixXd build_appendix_b1(const LargeScaleSystem& sys,
                                  const SynthesisHyperparams& hp, int i, int l,
                                  int m, const std::vector<Eigen::MatrixXd>& k,
                                  double sigma, const Eigen::VectorXd& x_bar,
                                  const std::vector<Eigen::VectorXd>& delta,
                                  const Eigen::VectorXd& z) {
    const auto& sub = sys.sub(i);
    const int N = sys.size();
    const auto n = sub.state_dim();
    const auto c = sub.disturbance_dim();
    const Eigen::MatrixXd& Xi = hp.X[i];
    const Eigen::MatrixXd& Ximu = hp.X_mu(i);
    const double sq = std::sqrt(hp.alpha);
    const double H = hp.input_energy[i];
    const auto js = neighbor_ids(sub);
    const Eigen::MatrixXd Theta = sub.A[l] + sub.B[l] * k.at(m);
    const Eigen::MatrixXd& Ad = sub.A_d[l];
    const Eigen::MatrixXd& w = sub.w[l];
    Eigen::MatrixXd fXf = Eigen::MatrixXd::Zero(n, n);
    for (int j : js) fXf += sub.f.at(j).transpose() * hp.X[j - 1] * sub.f.at(j);
    const bool with_coord = z.size() > 0 && z.norm() > 0.0;

    Eigen::Index dim = c + 2 * n;
    for (int j : js) dim += sub.f.at(j).cols();
    if (with_coord) dim += 1;
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(dim, dim);
    auto seg = [&](int idx) -> Eigen::Index {
        if (idx == 0) return 0;
        if (idx == 1) return c;
        if (idx == 2) return c + n;
        Eigen::Index off = c + 2 * n;
        for (int a = 0; a < idx - 3 && a < static_cast<int>(js.size()); ++a)
            off += sub.f.at(js[a]).cols();
        return off;
    };
    const Eigen::MatrixXd chi =
        N * Theta.transpose() * Xi * Theta + N * sq * fXf -
        hp.rho_state[i] * Ximu + sigma * hp.Q +
        k.at(m).transpose() * (H * k.at(m));
    M.block(seg(0), seg(0), c, c) =
        w.transpose() * Xi * w - sigma * hp.tau[i] * Eigen::MatrixXd::Identity(c, c);
    M.block(seg(1), seg(0), n, c) = Theta.transpose() * Xi * w;
    M.block(seg(1), seg(1), n, n) = chi;
    M.block(seg(2), seg(0), n, c) = Ad.transpose() * Xi * w;
    M.block(seg(2), seg(1), n, n) = Ad.transpose() * Xi * Theta;
    M.block(seg(2), seg(2), n, n) = Ad.transpose() * Xi * Ad - hp.rho_delay[i] * Ximu;
    for (size_t a = 0; a < js.size(); ++a) {
        const Eigen::MatrixXd& fa = sub.f.at(js[a]);
        const auto ra = seg(3 + static_cast<int>(a));
        M.block(ra, seg(0), fa.cols(), c) = fa.transpose() * Xi * w;
        M.block(ra, seg(1), fa.cols(), n) =
            (1.0 - sq) * fa.transpose() * Xi * Theta;
        M.block(ra, seg(2), fa.cols(), n) = fa.transpose() * Xi * Ad;
        for (size_t b = 0; b <= a; ++b) {
            const Eigen::MatrixXd& fb = sub.f.at(js[b]);
            M.block(ra, seg(3 + static_cast<int>(b)), fa.cols(), fb.cols()) =
                -(hp.alpha - 1.0) * fa.transpose() * Xi * fb;
        }
    }
    if (with_coord) {
        const Eigen::Index rc = dim - 1;
        for (size_t a = 0; a < js.size(); ++a) {
            const int j = js[a];
            const Eigen::MatrixXd& fij = sub.f.at(j);
            const Eigen::VectorXd dj = delta.at(j - 1);
            M.block(rc, seg(3 + static_cast<int>(a)), 1, fij.cols()) =
                -0.5 * (x_bar + sigma * dj).transpose() * fij;
        }
        M(rc, rc) = sigma * delta.at(i).dot(z) + x_bar.dot(z);
    }
    Eigen::MatrixXd sym = M.selfadjointView<Eigen::Lower>();
    return sym;
}

double schur_oracle_check(const Eigen::MatrixXd& full_block,
                          const Eigen::MatrixXd& expansion,
                          Eigen::Index trailing_rows) {
    const Eigen::Index dim = full_block.rows();
    if (trailing_rows <= 0 || trailing_rows >= dim)
        throw InvalidInput("trailing row count out of range");
    const Eigen::Index head = dim - trailing_rows;
    const Eigen::MatrixXd A = full_block.topLeftCorner(head, head);
    const Eigen::MatrixXd B = full_block.bottomLeftCorner(trailing_rows, head);
    const Eigen::MatrixXd D = full_block.bottomRightCorner(trailing_rows,
                                                           trailing_rows);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(D);
    if (!lu.isInvertible())
        throw SingularSchurPivot("trailing pivot block is singular");
    const Eigen::MatrixXd schur = A - B.transpose() * lu.solve(B);
    if (expansion.rows() != head || expansion.cols() != head)
        throw DimensionMismatch("expansion dimension mismatch");
    return (schur - expansion).cwiseAbs().maxCoeff();
}

}  // namespace lsmpc
