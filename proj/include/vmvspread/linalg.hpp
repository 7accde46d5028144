#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace vmvspread {

// Minimal dense row-major matrix; sized for CARMA state dimensions (p <= ~10),
// not for general linear algebra.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), a_(rows * cols, fill) {}

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    double& operator()(std::size_t i, std::size_t j) { return a_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return a_[i * cols_ + j]; }

    Matrix operator*(const Matrix& o) const {
        if (cols_ != o.rows_) throw std::invalid_argument("Matrix multiply: shape mismatch");
        Matrix r(rows_, o.cols_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t k = 0; k < cols_; ++k) {
                double aik = (*this)(i, k);
                if (aik == 0.0) continue;
                for (std::size_t j = 0; j < o.cols_; ++j)
                    r(i, j) += aik * o(k, j);
            }
        return r;
    }
    Matrix operator+(const Matrix& o) const {
        Matrix r = *this;
        for (std::size_t i = 0; i < a_.size(); ++i) r.a_[i] += o.a_[i];
        return r;
    }
    Matrix operator-(const Matrix& o) const {
        Matrix r = *this;
        for (std::size_t i = 0; i < a_.size(); ++i) r.a_[i] -= o.a_[i];
        return r;
    }
    Matrix scaled(double s) const {
        Matrix r = *this;
        for (double& x : r.a_) x *= s;
        return r;
    }
    Matrix transposed() const {
        Matrix r(cols_, rows_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j)
                r(j, i) = (*this)(i, j);
        return r;
    }

    double norm1() const {  // max column sum
        double best = 0.0;
        for (std::size_t j = 0; j < cols_; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < rows_; ++i) s += std::abs((*this)(i, j));
            if (s > best) best = s;
        }
        return best;
    }

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> a_;
};

// Solves A x = b in place (partial pivoting); b may hold multiple columns.
inline Matrix lu_solve(Matrix a, Matrix b) {
    const std::size_t n = a.rows();
    if (a.cols() != n || b.rows() != n) throw std::invalid_argument("lu_solve: shape mismatch");
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t piv = k;
        for (std::size_t i = k + 1; i < n; ++i)
            if (std::abs(a(i, k)) > std::abs(a(piv, k))) piv = i;
        if (a(piv, k) == 0.0) throw std::runtime_error("lu_solve: singular matrix");
        if (piv != k) {
            for (std::size_t j = 0; j < n; ++j) std::swap(a(k, j), a(piv, j));
            for (std::size_t j = 0; j < b.cols(); ++j) std::swap(b(k, j), b(piv, j));
        }
        for (std::size_t i = k + 1; i < n; ++i) {
            double m = a(i, k) / a(k, k);
            if (m == 0.0) continue;
            for (std::size_t j = k; j < n; ++j) a(i, j) -= m * a(k, j);
            for (std::size_t j = 0; j < b.cols(); ++j) b(i, j) -= m * b(k, j);
        }
    }
    for (std::size_t ri = n; ri-- > 0;) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = b(ri, j);
            for (std::size_t c = ri + 1; c < n; ++c) s -= a(ri, c) * b(c, j);
            b(ri, j) = s / a(ri, ri);
        }
    }
    return b;
}

// e^M by scaling-and-squaring with the degree-13 Pade approximant.
inline Matrix matrix_exponential(const Matrix& m) {
    if (m.rows() != m.cols()) throw std::invalid_argument("matrix_exponential: square matrix required");
    const std::size_t n = m.rows();
    static const double b[14] = {
        64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
        1187353796428800.0, 129060195264000.0, 10559470521600.0,
        670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
        960960.0, 16380.0, 182.0, 1.0};
    const double theta13 = 5.371920351148152;

    int s = 0;
    double nrm = m.norm1();
    if (nrm > theta13) {
        s = static_cast<int>(std::ceil(std::log2(nrm / theta13)));
        if (s < 0) s = 0;
    }
    Matrix a = m.scaled(std::ldexp(1.0, -s));

    Matrix id = Matrix::identity(n);
    Matrix a2 = a * a;
    Matrix a4 = a2 * a2;
    Matrix a6 = a2 * a4;

    Matrix u_inner = a6.scaled(b[13]) + a4.scaled(b[11]) + a2.scaled(b[9]);
    Matrix u = a * (a6 * u_inner + a6.scaled(b[7]) + a4.scaled(b[5]) + a2.scaled(b[3]) + id.scaled(b[1]));
    Matrix v_inner = a6.scaled(b[12]) + a4.scaled(b[10]) + a2.scaled(b[8]);
    Matrix v = a6 * v_inner + a6.scaled(b[6]) + a4.scaled(b[4]) + a2.scaled(b[2]) + id.scaled(b[0]);

    Matrix r = lu_solve(v - u, v + u);
    for (int i = 0; i < s; ++i) r = r * r;
    return r;
}

// Solves A G + G A^T = C for G (small systems, via the Kronecker form).
inline Matrix lyapunov_solve(const Matrix& a, const Matrix& c) {
    const std::size_t n = a.rows();
    Matrix k(n * n, n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            // row index for equation (i,j): sum_m A(i,m) G(m,j) + G(i,m) A(j,m)
            for (std::size_t mcol = 0; mcol < n; ++mcol) {
                k(i * n + j, mcol * n + j) += a(i, mcol);
                k(i * n + j, i * n + mcol) += a(j, mcol);
            }
        }
    Matrix rhs(n * n, 1);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            rhs(i * n + j, 0) = c(i, j);
    Matrix g_vec = lu_solve(k, rhs);
    Matrix g(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            g(i, j) = g_vec(i * n + j, 0);
    return g;
}

// Routh-Hurwitz: all roots of z^p + c1 z^{p-1} + ... + cp strictly in the left
// half-plane iff every first-column entry of the Routh array is positive.
inline bool hurwitz_stable(const std::vector<double>& coeff) {
    std::vector<double> c;
    c.push_back(1.0);
    c.insert(c.end(), coeff.begin(), coeff.end());
    const std::size_t n = c.size();  // p+1 coefficients
    if (n == 1) return true;

    std::vector<double> prev, cur;
    for (std::size_t i = 0; i < n; i += 2) prev.push_back(c[i]);
    for (std::size_t i = 1; i < n; i += 2) cur.push_back(c[i]);
    if (cur.empty()) return false;

    std::vector<double> first = {prev[0], cur[0]};
    while (prev.size() > 1) {
        if (cur[0] == 0.0) return false;  // marginal or unstable
        std::vector<double> next;
        for (std::size_t i = 0; i + 1 < prev.size(); ++i) {
            double a = (i + 1 < cur.size()) ? cur[i + 1] : 0.0;
            next.push_back((cur[0] * prev[i + 1] - prev[0] * a) / cur[0]);
        }
        if (next.empty()) break;
        prev = cur;
        cur = next;
        first.push_back(cur[0]);
    }
    for (double x : first)
        if (!(x > 0.0)) return false;
    return true;
}

}
