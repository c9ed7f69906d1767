#pragma once

#include <Eigen/Core>
#include <stdexcept>
#include <string>

namespace sonn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

// Sliding-window reshuffle: row m of the result is the K-wide window of
// the zero-padded input starting at position m. With pad = (K-1)/2 the
// result has exactly as many rows as the input has samples ("same" mode).
inline Matrix im2row(const Eigen::Ref<const Vector>& y, Index kernel, Index pad) {
    const Index m = y.size();
    if (kernel < 1 || kernel % 2 == 0)
        throw std::invalid_argument("im2row: kernel width must be odd and >= 1, got " +
                                    std::to_string(kernel));
    if (kernel > m + 2 * pad)
        throw std::invalid_argument("im2row: kernel wider than padded input");
    const Index rows = m + 2 * pad - kernel + 1;
    Matrix out(rows, kernel);
    for (Index row = 0; row < rows; ++row) {
        for (Index r = 0; r < kernel; ++r) {
            const Index src = row + r - pad;
            out(row, r) = (src >= 0 && src < m) ? y(src) : 0.0;
        }
    }
    return out;
}

// [Y | Y∘2 | ... | Y∘Q] with elementwise powers, column-concatenated.
inline Matrix hadamard_power_concat(const Eigen::Ref<const Matrix>& y, Index order) {
    if (order < 1)
        throw std::invalid_argument("hadamard_power_concat: order must be >= 1");
    const Index rows = y.rows();
    const Index cols = y.cols();
    Matrix out(rows, cols * order);
    out.leftCols(cols) = y;
    for (Index q = 1; q < order; ++q)
        out.middleCols(q * cols, cols) =
            out.middleCols((q - 1) * cols, cols).cwiseProduct(y);
    return out;
}

inline Vector row_dot(const Eigen::Ref<const Matrix>& y, const Eigen::Ref<const Vector>& w) {
    if (y.cols() != w.size())
        throw std::invalid_argument("row_dot: " + std::to_string(y.cols()) +
                                    " columns vs weight length " + std::to_string(w.size()));
    return y * w;
}

// Adjoint of im2row: scatter-add every G(m, r) back onto position
// m + r - pad of the unpadded axis, dropping contributions that land in
// the padding.
inline Vector im2row_transpose_scatter(const Eigen::Ref<const Matrix>& g, Index kernel,
                                       Index pad) {
    if (kernel < 1 || kernel % 2 == 0)
        throw std::invalid_argument("im2row_transpose_scatter: kernel width must be odd");
    if (g.cols() != kernel)
        throw std::invalid_argument("im2row_transpose_scatter: column count " +
                                    std::to_string(g.cols()) + " != kernel width " +
                                    std::to_string(kernel));
    const Index m = g.rows() + kernel - 1 - 2 * pad;
    if (m < 1)
        throw std::invalid_argument("im2row_transpose_scatter: empty output");
    Vector out = Vector::Zero(m);
    for (Index row = 0; row < g.rows(); ++row) {
        for (Index r = 0; r < kernel; ++r) {
            const Index dst = row + r - pad;
            if (dst >= 0 && dst < m) out(dst) += g(row, r);
        }
    }
    return out;
}

} // namespace sonn
