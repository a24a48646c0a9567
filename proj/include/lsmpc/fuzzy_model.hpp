#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "lsmpc/errors.hpp"

namespace lsmpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Normalized membership evaluator. Serializable kinds plus an arbitrary
// callback for tests; the premise vector is the subsystem's own state.
struct MembershipFn {
    // cos2:      mu1 = cos^2(z[state_index]), mu2 = 1 - mu1          (2 rules)
    // cos2_sym3: mu2 = cos^2(z[state_index]), mu1 = mu3 = (1-mu2)/2  (3 rules)
    // uniform:   equal weights                                        (r rules)
    // custom:    raw callback, renormalized by evaluate_membership
    std::string kind = "uniform";
    int state_index = 0;
    int rule_count = 1;
    std::function<VectorXd(const VectorXd&)> custom;

    VectorXd raw(const VectorXd& z) const;
};

struct SubsystemRules {
    int index = 0;                       // 1-based subsystem id
    std::vector<MatrixXd> A;             // per rule, n x n
    std::vector<MatrixXd> B;             // per rule, n x m
    std::vector<MatrixXd> A_d;           // per rule, n x n
    std::vector<MatrixXd> w;             // per rule, n x c
    std::map<int, MatrixXd> f;           // j -> n x n_j, j != index
    MembershipFn membership;

    int rule_count() const { return static_cast<int>(A.size()); }
    Eigen::Index state_dim() const { return A.at(0).rows(); }
    Eigen::Index input_dim() const { return B.at(0).cols(); }
    Eigen::Index disturbance_dim() const { return w.at(0).cols(); }

    void validate() const;               // dimensional consistency across rules
};

struct LargeScaleSystem {
    std::vector<SubsystemRules> subsystems;
    int delay_bound = 1;                 // h >= 1
    std::vector<double> gamma;           // per subsystem disturbance radius
    std::vector<VectorXd> u_max;         // per subsystem, per channel bound

    int size() const { return static_cast<int>(subsystems.size()); }
    const SubsystemRules& sub(int i) const { return subsystems.at(i); }
    // interconnection i -> j (0-based), zero matrix when absent
    MatrixXd coupling(int i, int j) const;
    void validate() const;
};

// d(k) in {-h, ..., -1}
struct DelaySchedule {
    std::string kind = "constant";       // constant | periodic | uniform_random
    int constant = -1;
    std::vector<int> period;
    std::uint64_t seed = 0;
    int h = 1;

    int at(int k) const;
    void validate() const;
};

// Ring of past states per subsystem covering offsets -h..0.
class DelayBuffer {
   public:
    DelayBuffer(const LargeScaleSystem& sys,
                const std::vector<std::vector<VectorXd>>& history);

    // state of subsystem i at offset in [-h, 0] relative to the newest entry
    const VectorXd& at(int i, int offset) const;
    void push(const std::vector<VectorXd>& next);
    int horizon() const { return h_; }

   private:
    int h_;
    std::vector<std::vector<VectorXd>> ring_;   // [i][0..h], oldest first
};

// --- operations ------------------------------------------------------------

// Normalized weights: >= 0, sum 1. Raw weights renormalized; throws
// AllZeroWeights if everything underflows.
VectorXd evaluate_membership(const SubsystemRules& sub, const VectorXd& z);

struct BlendedMatrices {
    MatrixXd A, B, A_d, w;
};

BlendedMatrices blend(const SubsystemRules& sub, const VectorXd& mu);

struct GainSet;  // defined in synthesis.hpp

VectorXd control_output(const GainSet& gains, int i, const VectorXd& mu,
                        const VectorXd& x);

struct StepResult {
    std::vector<VectorXd> x_next;
    std::vector<VectorXd> u;
    std::vector<VectorXd> mu;            // memberships used per subsystem
    std::vector<VectorXd> x_delayed;
};

// One closed-loop step of the whole large-scale system. Disturbance
// admissibility (d^T d <= gamma^2) is checked; violations throw unless
// warn_on_violation.
StepResult step_closed_loop(const LargeScaleSystem& sys, const GainSet& gains,
                            DelayBuffer& buffer, int k,
                            const std::vector<VectorXd>& d,
                            const DelaySchedule& schedule,
                            bool warn_on_violation = false);

}  // namespace lsmpc
