#include "lsmpc/affine.hpp"

namespace lsmpc {

AffineMatrix AffineMatrix::variable(Eigen::Index rows, Eigen::Index cols,
                                    int base) {
    AffineMatrix a(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) {
            Eigen::MatrixXd unit = Eigen::MatrixXd::Zero(rows, cols);
            unit(r, c) = 1.0;
            a.mv_[base + static_cast<int>(r * cols + c)] = unit;
        }
    return a;
}

AffineMatrix AffineMatrix::variable_symmetric(Eigen::Index n, int base) {
    AffineMatrix a(n, n);
    int v = base;
    for (Eigen::Index r = 0; r < n; ++r)
        for (Eigen::Index c = r; c < n; ++c) {
            Eigen::MatrixXd unit = Eigen::MatrixXd::Zero(n, n);
            unit(r, c) = 1.0;
            unit(c, r) = 1.0;
            a.mv_[v++] = unit;
        }
    return a;
}

AffineMatrix AffineMatrix::scalar_identity(int index, Eigen::Index dim) {
    AffineMatrix a(dim, dim);
    a.mv_[index] = Eigen::MatrixXd::Identity(dim, dim);
    return a;
}

AffineMatrix AffineMatrix::operator+(const AffineMatrix& o) const {
    if (rows() != o.rows() || cols() != o.cols())
        throw DimensionMismatch("affine matrix addition shape mismatch");
    AffineMatrix a = *this;
    a.m0_ += o.m0_;
    for (const auto& [v, m] : o.mv_) {
        auto it = a.mv_.find(v);
        if (it == a.mv_.end()) a.mv_[v] = m;
        else it->second += m;
    }
    return a;
}

AffineMatrix AffineMatrix::operator-(const AffineMatrix& o) const {
    return *this + o * -1.0;
}

AffineMatrix AffineMatrix::operator*(double s) const {
    AffineMatrix a = *this;
    a.m0_ *= s;
    for (auto& [v, m] : a.mv_) m *= s;
    return a;
}

AffineMatrix AffineMatrix::transpose() const {
    AffineMatrix a;
    a.m0_ = m0_.transpose();
    for (const auto& [v, m] : mv_) a.mv_[v] = m.transpose();
    return a;
}

AffineMatrix AffineMatrix::left_mult(const Eigen::MatrixXd& c) const {
    if (c.cols() != rows())
        throw DimensionMismatch("left multiplication shape mismatch");
    AffineMatrix a;
    a.m0_ = c * m0_;
    for (const auto& [v, m] : mv_) a.mv_[v] = c * m;
    return a;
}

AffineMatrix AffineMatrix::right_mult(const Eigen::MatrixXd& c) const {
    if (cols() != c.rows())
        throw DimensionMismatch("right multiplication shape mismatch");
    AffineMatrix a;
    a.m0_ = m0_ * c;
    for (const auto& [v, m] : mv_) a.mv_[v] = m * c;
    return a;
}

Eigen::MatrixXd AffineMatrix::eval(const Eigen::VectorXd& y) const {
    Eigen::MatrixXd m = m0_;
    for (const auto& [v, coeff] : mv_) {
        if (v >= y.size()) throw DimensionMismatch("decision vector too short");
        m += y[v] * coeff;
    }
    return m;
}

BlockAssembler::BlockAssembler(std::vector<Eigen::Index> block_sizes)
    : sizes_(std::move(block_sizes)) {
    offsets_.resize(sizes_.size());
    Eigen::Index off = 0;
    for (size_t b = 0; b < sizes_.size(); ++b) {
        offsets_[b] = off;
        off += sizes_[b];
    }
    dim_ = off;
}

void BlockAssembler::set(int br, int bc, const AffineMatrix& entry) {
    if (entry.rows() != sizes_.at(br) || entry.cols() != sizes_.at(bc))
        throw DimensionMismatch("block entry shape mismatch");
    entries_[{br, bc}] = entry;
}

void BlockAssembler::set(int br, int bc, const Eigen::MatrixXd& entry) {
    set(br, bc, AffineMatrix::constant(entry));
}

BlockAssembler::Assembled BlockAssembler::assemble() const {
    Assembled out;
    out.constant = Eigen::MatrixXd::Zero(dim_, dim_);
    std::map<int, Eigen::MatrixXd> terms;
    auto place = [&](int br, int bc, const AffineMatrix& e) {
        const auto r0 = offsets_[br], c0 = offsets_[bc];
        out.constant.block(r0, c0, sizes_[br], sizes_[bc]) = e.constant_part();
        for (const auto& [v, m] : e.variable_parts()) {
            auto it = terms.find(v);
            if (it == terms.end())
                it = terms.emplace(v, Eigen::MatrixXd::Zero(dim_, dim_)).first;
            it->second.block(r0, c0, sizes_[br], sizes_[bc]) = m;
        }
    };
    for (size_t br = 0; br < sizes_.size(); ++br) {
        for (size_t bc = 0; bc < sizes_.size(); ++bc) {
            auto it = entries_.find({static_cast<int>(br), static_cast<int>(bc)});
            if (it != entries_.end()) {
                place(static_cast<int>(br), static_cast<int>(bc), it->second);
            } else {
                auto mirror = entries_.find({static_cast<int>(bc), static_cast<int>(br)});
                if (mirror != entries_.end())
                    place(static_cast<int>(br), static_cast<int>(bc),
                          mirror->second.transpose());
            }
        }
    }
    const double asym = (out.constant - out.constant.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-12)
        throw NonSymmetricAssembly("constant part asymmetry " + std::to_string(asym));
    for (auto& [v, m] : terms) {
        const double a = (m - m.transpose()).cwiseAbs().maxCoeff();
        if (a > 1e-12)
            throw NonSymmetricAssembly("coefficient asymmetry " + std::to_string(a));
        out.terms.emplace_back(v, m);
    }
    return out;
}

}  // namespace lsmpc
