#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "lsmpc/affine.hpp"
#include "lsmpc/fuzzy_model.hpp"
#include "lsmpc/sdp.hpp"

namespace lsmpc {

enum class XMuRule { same_as_x };

// Fixed values of the bilinear terms; per Remark 3 these are chosen and held
// while gains and sigma are optimized.
struct SynthesisHyperparams {
    std::vector<double> lambda;          // per subsystem, in (0,1)
    double alpha = 2.0;                  // >= 2
    std::vector<double> rho_state;       // rho_i, per subsystem
    std::vector<double> rho_delay;       // rho_id, per subsystem; sums to 1
    std::vector<double> varpi;           // per subsystem, > 0
    std::vector<double> tau;             // per subsystem, > 0
    Eigen::MatrixXd Q;                   // stage state weight, PSD
    Eigen::MatrixXd R;                   // stage input weight, PD
    std::vector<double> input_energy;    // H_i
    std::vector<Eigen::MatrixXd> X;      // shape matrices, PD
    XMuRule x_mu_rule = XMuRule::same_as_x;
    double eps_strict = 1e-7;            // strictness margin for (16)/(26)

    void validate(const LargeScaleSystem& sys) const;
    // X_imu under the active rule (identical to X_i for same_as_x)
    const Eigen::MatrixXd& X_mu(int i) const { return X.at(i); }
};

struct CertificateMargin {
    std::string family;                  // rpi | input | terminal | level
    int rule_l = 0, rule_m = 0;
    double max_eig = 0.0;
};

struct SubsystemGains {
    std::vector<Eigen::MatrixXd> k;      // per rule, m x n
    double sigma = 0.0;                  // level scalar
    Eigen::MatrixXd Z;                   // input-constraint slack, n x n
    Eigen::VectorXd X_bar;               // co-state scaling, zero when unused
    std::vector<CertificateMargin> certificate_margins;

    Eigen::MatrixXd blend_gain(const Eigen::VectorXd& mu) const;
};

struct GainSet {
    std::vector<SubsystemGains> subsystems;
    SynthesisHyperparams hp;

    double worst_margin() const;
    void validate_dims(const LargeScaleSystem& sys) const;
};

struct CoordinationState;  // coordination.hpp

// Decision-vector layout for one subsystem's synthesis problem.
struct SubsystemVars {
    int r = 0;
    Eigen::Index n = 0, m = 0;
    int k_base = 0;          // r * m * n entries, rule-major then row-major
    int sigma = 0;
    int z_base = 0;          // n (n + 1) / 2 packed upper triangle
    int xbar_base = -1;      // n entries, or -1 when the terminal row is absent
    int total = 0;

    static SubsystemVars layout(const SubsystemRules& sub, bool with_xbar);
    AffineMatrix gain(int rule) const;
    AffineMatrix sigma_times(const Eigen::MatrixXd& mat) const;
    AffineMatrix z_matrix() const;
    AffineMatrix xbar_row() const;       // 1 x n
};

// --- builders: printed-shape symmetric blocks, affine in the unknowns ------

// Theorem 1 / Eq. (16) at rule vertex l, gain vertex m (0-based), rows
// [d; x; xd; xj (ascending, j != i); slack].
AffineBlock build_rpi_lmi(const LargeScaleSystem& sys,
                          const SynthesisHyperparams& hp, int i, int l, int m,
                          const SubsystemVars& vars);

// Eq. (17): first block [[Z, k_l^T],[k_l, I]] >= 0 returned in NSD form,
// second the per-channel caps Z_ss <= u_max^2 as 1x1 NSD blocks.
struct InputConstraintBlocks {
    AffineBlock psd;                     // negated: -[[Z,k^T],[k,I]] <= 0
    std::vector<AffineBlock> channel_caps;
};
InputConstraintBlocks build_input_constraint_lmi(const LargeScaleSystem& sys,
                                                 const SynthesisHyperparams& hp,
                                                 int i, int l,
                                                 const SubsystemVars& vars);

// Theorem 2 / Eq. (26) at vertex (l,m), instantiated at the coordination
// state's current step. The coordination row is present iff z_i(0) != 0.
// Rows: [d; x; xd; xj...; coord?; H; slack].
AffineBlock build_terminal_lmi(const LargeScaleSystem& sys,
                               const SynthesisHyperparams& hp, int i, int l,
                               int m, const SubsystemVars& vars,
                               const CoordinationState& coord,
                               int expected_iteration);

// Eq. (29): one block per history sample, returned in NSD form
// -[[sigma, x^T],[x, sigma X^-1]] <= 0.
std::vector<AffineBlock> build_level_lmi(const std::vector<VectorXd>& history,
                                         const Eigen::MatrixXd& X_i,
                                         const SubsystemVars& vars);

// Basis of the complement of the structural kernel of the printed blocks:
// identity on every row group except interconnection rows, which reduce to
// range(f_ij^T). Rank-deficient couplings otherwise pin a zero eigenvalue.
enum class BlockShape { rpi, terminal, terminal_with_coord };
Eigen::MatrixXd structural_reducer(const LargeScaleSystem& sys, int i,
                                   BlockShape shape);

struct SynthesisOptions {
    double solve_tol = 1e-8;
    int threads = 0;                     // 0: FUZZY_LSMPC_THREADS or hardware
};

// Step 2 of the control algorithm: per subsystem, min sigma_i subject to
// (16), (17), (26), (29); margins re-verified independently before returning.
GainSet synthesize(const LargeScaleSystem& sys, const SynthesisHyperparams& hp,
                   const CoordinationState& coord,
                   const std::vector<std::vector<VectorXd>>& x_history,
                   const SynthesisOptions& opts = {});

// --- appendix oracles -------------------------------------------------------

// Direct assembly of the Schur-reduced expansions at fixed numeric values.
Eigen::MatrixXd build_appendix_a1(const LargeScaleSystem& sys,
                                  const SynthesisHyperparams& hp, int i, int l,
                                  int m, const std::vector<Eigen::MatrixXd>& k,
                                  double sigma);

Eigen::MatrixXd build_appendix_b1(const LargeScaleSystem& sys,
                                  const SynthesisHyperparams& hp, int i, int l,
                                  int m, const std::vector<Eigen::MatrixXd>& k,
                                  double sigma, const Eigen::VectorXd& x_bar,
                                  const std::vector<Eigen::VectorXd>& delta,
                                  const Eigen::VectorXd& z);

// Numerically Schur-complements the trailing slack row(s) of an assembled
// printed block and returns the max element deviation from the expansion.
double schur_oracle_check(const Eigen::MatrixXd& full_block,
                          const Eigen::MatrixXd& expansion,
                          Eigen::Index trailing_rows);

}  // namespace lsmpc
