#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace lsmpc {

// One affine symmetric constraint  F0 + sum_v y_v F[v]  <=  -eps * I.
// Coefficient matrices are stored sparsely over the variables they touch.
struct AffineBlock {
    Eigen::MatrixXd constant;
    std::vector<std::pair<int, Eigen::MatrixXd>> terms;
    double eps = 0.0;
    std::string label;

    Eigen::Index dim() const { return constant.rows(); }
    Eigen::MatrixXd eval(const Eigen::VectorXd& y) const;
    void symmetrize();                   // also checks 1e-12 symmetry
    AffineBlock reduced(const Eigen::MatrixXd& W) const;  // W^T (.) W
};

struct SdpProblem {
    int decision_dim = 0;
    std::vector<AffineBlock> blocks;
    std::optional<Eigen::VectorXd> objective;            // minimize c . y
    std::vector<std::pair<int, double>> lower_bounds;    // y_v >= b
    std::vector<std::pair<int, double>> upper_bounds;    // y_v <= b

    void add_block(AffineBlock b);
    void validate() const;
};

enum class SdpStatus { Feasible, Infeasible, MaxIter, NumericalFailure };

std::string to_string(SdpStatus s);

struct SdpSolution {
    SdpStatus status = SdpStatus::NumericalFailure;
    Eigen::VectorXd y;
    // most positive eigenvalue of F(y) + eps I across blocks; <= 0 when
    // strictly feasible. For Infeasible this is the best margin achieved.
    double margin = 0.0;
    std::optional<double> objective_value;
    int newton_steps = 0;
};

struct SdpOptions {
    double tol = 1e-8;
    int max_stages = 80;
    int max_newton_per_stage = 120;
};

// Two-phase log-det barrier interior-point method (dense, for small blocks).
SdpSolution solve(const SdpProblem& problem, double tol = 1e-8);
SdpSolution solve(const SdpProblem& problem, const SdpOptions& opts);

struct BlockMargin {
    std::string label;
    double max_eig;      // of F(y), eps excluded
    double min_eig;
};

// Independent certificate check: per-block extreme eigenvalues at fixed y,
// computed with a fresh symmetric eigensolver. Sole authority for acceptance.
std::vector<BlockMargin> verify_certificate(const std::vector<AffineBlock>& blocks,
                                            const Eigen::VectorXd& y);

double worst_margin(const std::vector<BlockMargin>& margins);

}  // namespace lsmpc
