#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "lsmpc/coordination.hpp"
#include "lsmpc/fuzzy_model.hpp"
#include "lsmpc/synthesis.hpp"

namespace lsmpc {

// Per-subsystem disturbance source; every emitted d satisfies |d| <= gamma_i.
struct DisturbanceModel {
    std::string kind = "zero";           // zero|uniform_ball|sinusoid|custom
    std::uint64_t seed = 0;
    double amplitude = 0.0;              // sinusoid, <= gamma
    double period = 10.0;
    std::vector<std::vector<VectorXd>> custom;  // [i][k], validated on load

    void validate(const LargeScaleSystem& sys, int steps) const;
};

struct SubsystemTrace {
    std::vector<VectorXd> x;             // 0..steps
    std::vector<VectorXd> u;             // 0..steps-1
    std::vector<VectorXd> d;
    std::vector<double> stage_cost;
    std::vector<double> V;               // 0..steps
    std::vector<double> V_bar;           // 0..steps-1 (needs the delay index)
    std::vector<bool> in_rpi;            // 0..steps
};

struct Trajectory {
    std::vector<SubsystemTrace> subs;
    std::vector<int> delay_index;        // d(k) per step
    std::vector<std::vector<VectorXd>> history;  // initial segment [-h..0]
    int steps = 0;
    std::uint64_t seed = 0;
    std::string config_hash;
    std::string gains_id;

    int size() const { return static_cast<int>(subs.size()); }
};

Trajectory simulate(const LargeScaleSystem& sys, const GainSet& gains,
                    const std::vector<std::vector<VectorXd>>& x_history,
                    const DisturbanceModel& dist, int steps,
                    const DelaySchedule& schedule);

// Eq. (13): x'Qx + u'Ru - tau d'd
double stage_cost(const VectorXd& x, const VectorXd& u, const VectorXd& d,
                  const MatrixXd& Q, const MatrixXd& R, double tau);

struct CostReport {
    std::vector<std::vector<double>> J_i;   // [i][t], t = 0..steps-T
    std::vector<double> J;                  // summed over subsystems
};

// Eq. (12) evaluated on the realized trajectory with prediction length T.
CostReport total_cost(const LargeScaleSystem& sys, const GainSet& gains,
                      const Trajectory& traj, int T);

struct RpiCheck {
    double value = 0.0;                  // max of the two quadratic forms
    bool inside = false;                 // closed set: value <= sigma
};

RpiCheck rpi_membership(const VectorXd& x, const VectorXd& x_d,
                        const MatrixXd& X_i, double sigma);

struct RazumikhinValues {
    std::vector<double> V;               // x(k)' P x(k)
    std::vector<double> V_bar;           // max over offsets {d(k), 0}
};

RazumikhinValues razumikhin_values(const Trajectory& traj, int i,
                                   const MatrixXd& X_i, double sigma);

struct MonteCarloReport {
    int samples = 0;
    int exits = 0;                       // one-step departures from Omega
    int ineq15_violations = 0;           // Eq. (15) aggregate violations
};

MonteCarloReport verify_rpi_montecarlo(const LargeScaleSystem& sys,
                                       const GainSet& gains, int samples,
                                       std::uint64_t seed,
                                       double tolerance = 1e-9);

struct IssReport {
    bool pass = false;
    double max_residual = 0.0;
    int first_failure_step = -1;
    double psi_min = 0.0;                // eigenvalue sandwich of Eq. (31)
    double psi_max = 0.0;
};

// Pointwise Eq.-(35) check: V_{k+1} - Vbar_k + x'Qx - tau d'd <= eps_iss.
IssReport verify_iss_decrease(const LargeScaleSystem& sys, const Trajectory& traj,
                              const GainSet& gains, double eps_iss = 0.0);

struct TerminalDecreaseReport {
    bool pass = false;
    double max_residual = 0.0;
    int checked_steps = 0;               // zero-state steps are skipped
};

// Eq. (24): sum_i V(x_i+) - V(x_i) < -sum_i H_i(.) at nonzero in-set states.
TerminalDecreaseReport verify_terminal_decrease(const LargeScaleSystem& sys,
                                                const Trajectory& traj,
                                                const CoordinationState& coord,
                                                const GainSet& gains);

}  // namespace lsmpc
