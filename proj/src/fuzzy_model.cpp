#include "lsmpc/fuzzy_model.hpp"

#include <cmath>
#include <iostream>

#include "lsmpc/rng.hpp"
#include "lsmpc/synthesis.hpp"

namespace lsmpc {

VectorXd MembershipFn::raw(const VectorXd& z) const {
    if (kind == "cos2") {
        if (state_index >= z.size())
            throw DimensionMismatch("membership premise shorter than state_index");
        const double c = std::cos(z[state_index]);
        VectorXd mu(2);
        mu << c * c, 1.0 - c * c;
        return mu;
    }
    if (kind == "cos2_sym3") {
        if (state_index >= z.size())
            throw DimensionMismatch("membership premise shorter than state_index");
        const double c = std::cos(z[state_index]);
        const double center = c * c;
        VectorXd mu(3);
        mu << 0.5 * (1.0 - center), center, 0.5 * (1.0 - center);
        return mu;
    }
    if (kind == "uniform")
        return VectorXd::Constant(rule_count, 1.0 / rule_count);
    if (kind == "custom" && custom) return custom(z);
    throw InvalidInput("unknown membership kind '" + kind + "'");
}

void SubsystemRules::validate() const {
    if (A.empty()) throw InvalidInput("subsystem with no rules");
    const auto n = A[0].rows();
    const auto m = B.at(0).cols();
    const auto c = w.at(0).cols();
    if (A.size() != B.size() || A.size() != A_d.size() || A.size() != w.size())
        throw DimensionMismatch("per-rule matrix lists differ in length");
    for (size_t l = 0; l < A.size(); ++l) {
        if (A[l].rows() != n || A[l].cols() != n)
            throw DimensionMismatch("A rule dimension mismatch");
        if (A_d[l].rows() != n || A_d[l].cols() != n)
            throw DimensionMismatch("A_d rule dimension mismatch");
        if (B[l].rows() != n || B[l].cols() != m)
            throw DimensionMismatch("B rule dimension mismatch");
        if (w[l].rows() != n || w[l].cols() != c)
            throw DimensionMismatch("w rule dimension mismatch");
    }
    for (const auto& [j, fij] : f) {
        if (j == index) throw InvalidInput("self interconnection f_ii");
        if (fij.rows() != n)
            throw DimensionMismatch("interconnection row dimension mismatch");
    }
}

MatrixXd LargeScaleSystem::coupling(int i, int j) const {
    const auto& fi = subsystems.at(i).f;
    auto it = fi.find(j + 1);
    if (it != fi.end()) return it->second;
    return MatrixXd::Zero(subsystems.at(i).state_dim(),
                          subsystems.at(j).state_dim());
}

void LargeScaleSystem::validate() const {
    if (subsystems.empty()) throw InvalidInput("empty system");
    if (delay_bound < 1) throw InvalidInput("delay bound h must be >= 1");
    if (gamma.size() != subsystems.size() || u_max.size() != subsystems.size())
        throw DimensionMismatch("gamma/u_max length != subsystem count");
    for (size_t i = 0; i < subsystems.size(); ++i) {
        subsystems[i].validate();
        if (subsystems[i].index != static_cast<int>(i) + 1)
            throw InvalidInput("subsystem indices must be 1..N in order");
        if (gamma[i] <= 0) throw InvalidInput("gamma must be positive");
        if (u_max[i].size() != subsystems[i].input_dim())
            throw DimensionMismatch("u_max channel count mismatch");
        if ((u_max[i].array() <= 0).any())
            throw InvalidInput("u_max must be positive");
        for (const auto& [j, fij] : subsystems[i].f) {
            if (j < 1 || j > static_cast<int>(subsystems.size()))
                throw InvalidInput("interconnection references unknown subsystem");
            if (fij.cols() != subsystems[j - 1].state_dim())
                throw DimensionMismatch("interconnection column dimension mismatch");
        }
    }
}

int DelaySchedule::at(int k) const {
    if (kind == "constant") return constant;
    if (kind == "periodic") {
        if (period.empty()) throw InvalidInput("empty periodic delay schedule");
        return period[static_cast<size_t>(k) % period.size()];
    }
    if (kind == "uniform_random") {
        // stateless: hash (seed, k) to a value in {-h..-1}
        RandomStream rs(seed, static_cast<std::uint64_t>(k) + 0x51ul);
        return -1 - static_cast<int>(rs.raw() % static_cast<std::uint64_t>(h));
    }
    throw InvalidInput("unknown delay schedule kind '" + kind + "'");
}

void DelaySchedule::validate() const {
    if (h < 1) throw InvalidInput("delay schedule h must be >= 1");
    auto check = [&](int d) {
        if (d < -h || d > -1)
            throw InvalidInput("delay value outside {-h..-1}");
    };
    if (kind == "constant") check(constant);
    else if (kind == "periodic") {
        if (period.empty()) throw InvalidInput("empty periodic delay schedule");
        for (int d : period) check(d);
    } else if (kind != "uniform_random") {
        throw InvalidInput("unknown delay schedule kind '" + kind + "'");
    }
}

DelayBuffer::DelayBuffer(const LargeScaleSystem& sys,
                         const std::vector<std::vector<VectorXd>>& history)
    : h_(sys.delay_bound) {
    if (history.size() != sys.subsystems.size())
        throw DimensionMismatch("history subsystem count mismatch");
    ring_.resize(history.size());
    for (size_t i = 0; i < history.size(); ++i) {
        if (static_cast<int>(history[i].size()) != h_ + 1)
            throw BufferUnderflow("initial history must supply x[-h..0] (" +
                                  std::to_string(h_ + 1) + " samples)");
        for (const auto& x : history[i])
            if (x.size() != sys.subsystems[i].state_dim())
                throw DimensionMismatch("history state dimension mismatch");
        ring_[i] = history[i];
    }
}

const VectorXd& DelayBuffer::at(int i, int offset) const {
    if (offset > 0 || offset < -h_)
        throw BufferUnderflow("delay offset outside stored window");
    const auto& r = ring_.at(i);
    return r[r.size() - 1 + offset];
}

void DelayBuffer::push(const std::vector<VectorXd>& next) {
    for (size_t i = 0; i < ring_.size(); ++i) {
        ring_[i].push_back(next.at(i));
        ring_[i].erase(ring_[i].begin());
    }
}

VectorXd evaluate_membership(const SubsystemRules& sub, const VectorXd& z) {
    VectorXd raw = sub.membership.raw(z);
    if (raw.size() != sub.rule_count())
        throw DimensionMismatch("membership weight count != rule count");
    if ((raw.array() < 0).any())
        throw InvalidInput("negative raw membership weight");
    const double s = raw.sum();
    if (s < 1e-300) throw AllZeroWeights("all firing strengths underflowed");
    return raw / s;
}

BlendedMatrices blend(const SubsystemRules& sub, const VectorXd& mu) {
    if (mu.size() != sub.rule_count())
        throw DimensionMismatch("blend weight count != rule count");
    BlendedMatrices out;
    out.A = MatrixXd::Zero(sub.A[0].rows(), sub.A[0].cols());
    out.B = MatrixXd::Zero(sub.B[0].rows(), sub.B[0].cols());
    out.A_d = MatrixXd::Zero(sub.A_d[0].rows(), sub.A_d[0].cols());
    out.w = MatrixXd::Zero(sub.w[0].rows(), sub.w[0].cols());
    for (int l = 0; l < sub.rule_count(); ++l) {
        out.A += mu[l] * sub.A[l];
        out.B += mu[l] * sub.B[l];
        out.A_d += mu[l] * sub.A_d[l];
        out.w += mu[l] * sub.w[l];
    }
    return out;
}

VectorXd control_output(const GainSet& gains, int i, const VectorXd& mu,
                        const VectorXd& x) {
    const auto& g = gains.subsystems.at(i);
    if (static_cast<int>(g.k.size()) < mu.size())
        throw MissingGain("gain set has fewer rules than membership weights");
    MatrixXd k_mu = MatrixXd::Zero(g.k[0].rows(), g.k[0].cols());
    for (int l = 0; l < mu.size(); ++l) k_mu += mu[l] * g.k[l];
    if (k_mu.cols() != x.size())
        throw DimensionMismatch("gain/state dimension mismatch");
    return k_mu * x;
}

StepResult step_closed_loop(const LargeScaleSystem& sys, const GainSet& gains,
                            DelayBuffer& buffer, int k,
                            const std::vector<VectorXd>& d,
                            const DelaySchedule& schedule,
                            bool warn_on_violation) {
    const int N = sys.size();
    if (static_cast<int>(d.size()) != N)
        throw DimensionMismatch("disturbance count != subsystem count");
    const int dk = schedule.at(k);
    StepResult out;
    out.x_next.resize(N);
    out.u.resize(N);
    out.mu.resize(N);
    out.x_delayed.resize(N);
    std::vector<VectorXd> current(N);
    for (int i = 0; i < N; ++i) current[i] = buffer.at(i, 0);
    for (int i = 0; i < N; ++i) {
        const auto& sub = sys.sub(i);
        const double g2 = sys.gamma[i] * sys.gamma[i];
        if (d[i].squaredNorm() > g2 * (1.0 + 1e-12)) {
            if (warn_on_violation)
                std::cerr << "warning: disturbance outside D_" << i + 1
                          << " at step " << k << "\n";
            else
                throw InvalidInput("disturbance violates d'd <= gamma^2");
        }
        const VectorXd mu = evaluate_membership(sub, current[i]);
        const BlendedMatrices bm = blend(sub, mu);
        const VectorXd xd = buffer.at(i, dk);
        const MatrixXd k_mu = gains.subsystems.at(i).blend_gain(mu);
        const VectorXd u = k_mu * current[i];
        VectorXd xp = (bm.A + bm.B * k_mu) * current[i] + bm.A_d * xd + bm.w * d[i];
        for (const auto& [j, fij] : sub.f) xp += fij * current[j - 1];
        out.x_next[i] = xp;
        out.u[i] = u;
        out.mu[i] = mu;
        out.x_delayed[i] = xd;
    }
    buffer.push(out.x_next);
    return out;
}

}  // namespace lsmpc
