#pragma once

#include <Eigen/Core>
#include <map>

#include "lsmpc/errors.hpp"

namespace lsmpc {

// Small dense matrix affine in a decision vector: M0 + sum_v y_v M[v].
// Only constant-by-affine products are provided, which keeps every builder
// expression provably affine in the unknowns.
class AffineMatrix {
   public:
    AffineMatrix() = default;
    AffineMatrix(Eigen::Index rows, Eigen::Index cols)
        : m0_(Eigen::MatrixXd::Zero(rows, cols)) {}

    static AffineMatrix constant(const Eigen::MatrixXd& m) {
        AffineMatrix a;
        a.m0_ = m;
        return a;
    }

    // rows x cols unknown, entries mapped row-major onto y[base .. base+rows*cols)
    static AffineMatrix variable(Eigen::Index rows, Eigen::Index cols, int base);

    // n x n symmetric unknown over packed upper-triangle vars starting at base
    static AffineMatrix variable_symmetric(Eigen::Index n, int base);

    // scalar unknown y[index] times I (dim x dim)
    static AffineMatrix scalar_identity(int index, Eigen::Index dim);

    Eigen::Index rows() const { return m0_.rows(); }
    Eigen::Index cols() const { return m0_.cols(); }

    AffineMatrix operator+(const AffineMatrix& o) const;
    AffineMatrix operator-(const AffineMatrix& o) const;
    AffineMatrix operator*(double s) const;
    AffineMatrix transpose() const;
    AffineMatrix left_mult(const Eigen::MatrixXd& c) const;   // c * this
    AffineMatrix right_mult(const Eigen::MatrixXd& c) const;  // this * c

    Eigen::MatrixXd eval(const Eigen::VectorXd& y) const;
    const Eigen::MatrixXd& constant_part() const { return m0_; }
    const std::map<int, Eigen::MatrixXd>& variable_parts() const { return mv_; }

   private:
    Eigen::MatrixXd m0_;
    std::map<int, Eigen::MatrixXd> mv_;
};

inline AffineMatrix operator*(double s, const AffineMatrix& a) { return a * s; }

// Assembles a symmetric block matrix from affine entries addressed by
// block-row/block-column; missing lower-triangle entries mirror the upper.
class BlockAssembler {
   public:
    explicit BlockAssembler(std::vector<Eigen::Index> block_sizes);

    void set(int br, int bc, const AffineMatrix& entry);
    void set(int br, int bc, const Eigen::MatrixXd& entry);

    // Emits F0 + terms with a symmetry check on assembly.
    struct Assembled {
        Eigen::MatrixXd constant;
        std::vector<std::pair<int, Eigen::MatrixXd>> terms;
    };
    Assembled assemble() const;

    Eigen::Index dim() const { return dim_; }

   private:
    std::vector<Eigen::Index> sizes_;
    std::vector<Eigen::Index> offsets_;
    Eigen::Index dim_ = 0;
    std::map<std::pair<int, int>, AffineMatrix> entries_;
};

}  // namespace lsmpc
