#pragma once

// Minimal CSR matrix plus a Jacobi-preconditioned conjugate gradient for the
// SPD backward-Euler systems. Reductions use the fixed-block dot product, so
// the iteration path is identical for any worker count.

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "thermrom/errors.hpp"
#include "thermrom/parallel.hpp"

namespace thermrom {

struct CsrMatrix {
    std::size_t n = 0;
    std::vector<std::size_t> row_ptr;  // n + 1
    std::vector<std::uint32_t> col;
    std::vector<double> val;

    // y = A x
    void multiply(std::span<const double> x, std::span<double> y) const {
        parallel_for(n, [&](std::size_t rb, std::size_t re) {
            for (std::size_t r = rb; r < re; ++r) {
                double acc = 0.0;
                for (std::size_t e = row_ptr[r]; e < row_ptr[r + 1]; ++e) acc += val[e] * x[col[e]];
                y[r] = acc;
            }
        });
    }

    double diagonal(std::size_t r) const {
        for (std::size_t e = row_ptr[r]; e < row_ptr[r + 1]; ++e)
            if (col[e] == r) return val[e];
        return 0.0;
    }
};

// Operator for (D + A) x where D is diagonal; avoids materializing the
// backward-Euler system matrix.
struct ShiftedOperator {
    const CsrMatrix* a = nullptr;
    const std::vector<double>* shift = nullptr;

    std::size_t size() const { return a->n; }
    void multiply(std::span<const double> x, std::span<double> y) const {
        a->multiply(x, y);
        const auto& d = *shift;
        parallel_for(a->n, [&](std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i) y[i] += d[i] * x[i];
        });
    }
};

struct CgResult {
    std::size_t iterations = 0;
    double relative_residual = 0.0;
    bool converged = false;
};

// Solves op x = b to |r| <= tol * |b| in the Euclidean norm. x carries the
// initial guess on entry. inv_diag is the reciprocal operator diagonal.
template <class Op>
inline CgResult conjugate_gradient(const Op& op, std::span<const double> b, std::span<double> x,
                                   std::span<const double> inv_diag, double tol, std::size_t max_iter) {
    const std::size_t n = op.size();
    const double bnorm = std::sqrt(blocked_sum_squares(b.data(), n));
    CgResult result;
    if (bnorm == 0.0) {
        for (std::size_t i = 0; i < n; ++i) x[i] = 0.0;
        result.converged = true;
        return result;
    }

    std::vector<double> r(n), z(n), p(n), q(n);
    op.multiply(x, std::span<double>(q));
    for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - q[i];
    for (std::size_t i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
    p = z;
    double rz = blocked_dot(r.data(), z.data(), n);

    const double target = tol * bnorm;
    for (std::size_t it = 0; it <= max_iter; ++it) {
        const double rnorm = std::sqrt(blocked_sum_squares(r.data(), n));
        result.relative_residual = rnorm / bnorm;
        result.iterations = it;
        if (rnorm <= target) {
            result.converged = true;
            return result;
        }
        if (it == max_iter) break;
        if (!std::isfinite(rnorm)) throw numeric_error("cg: residual is not finite");

        op.multiply(std::span<const double>(p), std::span<double>(q));
        const double pq = blocked_dot(p.data(), q.data(), n);
        if (!(pq > 0.0)) throw numeric_error("cg: operator is not positive definite");
        const double alpha = rz / pq;
        for (std::size_t i = 0; i < n; ++i) x[i] += alpha * p[i];
        for (std::size_t i = 0; i < n; ++i) r[i] -= alpha * q[i];
        for (std::size_t i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
        const double rz_next = blocked_dot(r.data(), z.data(), n);
        const double beta = rz_next / rz;
        rz = rz_next;
        for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
    throw numeric_error("cg: no convergence after " + std::to_string(max_iter) + " iterations (rel residual " +
                        std::to_string(result.relative_residual) + ")");
}

} // namespace thermrom
