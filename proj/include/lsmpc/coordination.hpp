#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "lsmpc/fuzzy_model.hpp"
#include "lsmpc/synthesis.hpp"

namespace lsmpc {

struct Trajectory;  // simulation.hpp

// Two-level coordination data: multipliers, interaction estimates and
// co-states over the horizon k = 0..K-1.
struct CoordinationState {
    std::vector<std::vector<VectorXd>> delta;   // [i][k]
    std::vector<std::vector<VectorXd>> z;       // [i][k]
    std::vector<std::vector<VectorXd>> p_bar;   // [i][k]
    std::vector<MatrixXd> C;                    // fixed coupling, default I
    int iteration = 0;
    int K = 0;

    static CoordinationState zero(const LargeScaleSystem& sys, int K);
    void validate(const LargeScaleSystem& sys) const;
};

struct CoordinationReport {
    std::vector<double> error_per_iteration;
    bool converged = false;
    int iterations_used = 0;
};

// Hamiltonian of Eq. (18) over a simulated slice; terminal term is the
// Eq.-(25) cost at the final state.
double hamiltonian(const LargeScaleSystem& sys, const GainSet& gains,
                   const CoordinationState& coord, const Trajectory& traj);

// delta_i(k) = -C_i^T p_bar_i(k+1); p_bar is held per-iteration constant,
// so the last horizon entry reuses the same co-state.
std::vector<std::vector<VectorXd>> update_multipliers(const CoordinationState& coord);

// z_i(k) = sum_{j != i} f_ij x_j(k)
std::vector<std::vector<VectorXd>> update_interactions(const LargeScaleSystem& sys,
                                                       const CoordinationState& coord,
                                                       const Trajectory& traj);

// e = sum_i sum_{k=1}^{K-1} ||z_i(k) - sum f_ij x_j(k)||^2
double interaction_error(const LargeScaleSystem& sys,
                         const CoordinationState& coord,
                         const Trajectory& traj);

struct AlgorithmConfig {
    int K = 8;
    double epsilon_e = 1e-6;
    int max_iterations = 20;
    std::uint64_t seed = 0;
    double gamma_scale = 1.0;            // scales the disturbance radius
    std::string disturbance_kind = "uniform_ball";  // zero|uniform_ball|sinusoid
    double sinusoid_period = 10.0;
    DelaySchedule delay;
    SynthesisOptions synthesis;
};

struct AlgorithmResult {
    std::optional<GainSet> gains;
    CoordinationReport report;
    std::optional<Trajectory> trajectory;
    CoordinationState coord;
};

// Steps 1-4 of the control algorithm: init, per-subsystem synthesis,
// K-step simulation, interaction-error convergence check, multiplier update.
AlgorithmResult run_algorithm(const LargeScaleSystem& sys,
                              const SynthesisHyperparams& hp,
                              const std::vector<std::vector<VectorXd>>& x_history,
                              const AlgorithmConfig& config);

}  // namespace lsmpc
