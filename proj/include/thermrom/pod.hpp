#pragma once

// Proper orthogonal decomposition by the method of snapshots. The two-point
// correlation eigenproblem is reduced to the Ns x Ns Gram matrix
//   Rhat_ij = (1/Ns) <theta_i, theta_j>_V
// in the volume-weighted inner product. Modes are recovered as
//   phi_k = S v_k / sqrt(Ns lambda_k)
// and are orthonormal in the same inner product. No mean subtraction: states
// start at ambient, so theta = 0 lies in the snapshot affine hull anyway.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "thermrom/errors.hpp"
#include "thermrom/fom.hpp"
#include "thermrom/geometry.hpp"

namespace thermrom {

// Eigenvalues below this multiple of the largest are noise; modes past the
// cutoff cannot be normalized reliably and are never retained.
inline constexpr double kEigenvalueFloor = 1e-14;

struct CorrelationMatrix {
    std::size_t ns = 0;
    std::vector<double> values;  // column-major ns x ns, symmetric

    double at(std::size_t i, std::size_t j) const { return values[j * ns + i]; }
};

// Gram matrix of the snapshot columns. Built as a scaled GEMM
// S^T diag(V) S over layer slabs (volume is constant per slab), then
// symmetrized; the whole computation is single-threaded inside Eigen and
// deterministic.
inline CorrelationMatrix correlation_matrix(const SnapshotSet& snaps, const Grid& grid) {
    if (snaps.count() == 0) throw validation_error("pod: empty snapshot set");
    if (snaps.n_cells != grid.cell_count()) throw validation_error("pod: snapshots do not match grid");
    if (snaps.grid_hash != grid.hash()) throw validation_error("pod: snapshot grid hash does not match grid");

    const std::size_t ns = snaps.count();
    const std::size_t n = snaps.n_cells;
    const std::size_t slab = grid.layer_cells();

    using MatrixMap = Eigen::Map<const Eigen::MatrixXd>;
    MatrixMap s(snaps.data.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(ns));

    Eigen::MatrixXd r = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ns), static_cast<Eigen::Index>(ns));
    for (int k = 0; k < grid.nz(); ++k) {
        const auto block = s.middleRows(static_cast<Eigen::Index>(static_cast<std::size_t>(k) * slab),
                                        static_cast<Eigen::Index>(slab));
        r.noalias() += grid.layer_volume(k) * (block.transpose() * block);
    }
    r *= 1.0 / static_cast<double>(ns);
    r = (0.5 * (r + r.transpose())).eval();

    CorrelationMatrix out;
    out.ns = ns;
    out.values.assign(r.data(), r.data() + ns * ns);
    return out;
}

struct Spectrum {
    std::vector<double> lambda;  // descending, negatives clamped to zero
    std::size_t retained = 0;    // count above the noise floor

    double total() const {
        double s = 0.0;
        for (double v : lambda) s += v;
        return s;
    }
};

struct SnapshotEigen {
    Spectrum spectrum;
    std::size_t ns = 0;
    std::vector<double> vectors;  // column-major ns x ns, matching spectrum order

    std::span<const double> vector(std::size_t k) const {
        return std::span<const double>(vectors.data() + k * ns, ns);
    }
};

// Symmetric eigendecomposition sorted by descending eigenvalue. Tiny negative
// eigenvalues (roundoff) are clamped to zero; a significantly negative one
// means the Gram matrix was corrupted.
inline SnapshotEigen eigendecompose(const CorrelationMatrix& r) {
    if (r.ns == 0 || r.values.size() != r.ns * r.ns) throw validation_error("pod: malformed correlation matrix");
    const auto ns = static_cast<Eigen::Index>(r.ns);
    Eigen::Map<const Eigen::MatrixXd> m(r.values.data(), ns, ns);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
    if (solver.info() != Eigen::Success) throw numeric_error("pod: eigendecomposition failed");

    SnapshotEigen out;
    out.ns = r.ns;
    out.spectrum.lambda.resize(r.ns);
    out.vectors.resize(r.ns * r.ns);
    const double lambda_max = std::max(0.0, solver.eigenvalues()(ns - 1));
    for (Eigen::Index k = 0; k < ns; ++k) {
        const Eigen::Index src = ns - 1 - k;  // Eigen sorts ascending
        double lam = solver.eigenvalues()(src);
        if (lam < -1e-10 * std::max(lambda_max, 1.0))
            throw numeric_error("pod: correlation matrix is not positive semidefinite");
        out.spectrum.lambda[static_cast<std::size_t>(k)] = std::max(lam, 0.0);
        Eigen::Map<Eigen::VectorXd>(out.vectors.data() + static_cast<std::size_t>(k) * r.ns, ns) =
            solver.eigenvectors().col(src);
    }
    out.spectrum.retained = 0;
    const double floor = kEigenvalueFloor * (out.spectrum.lambda.empty() ? 0.0 : out.spectrum.lambda[0]);
    for (double lam : out.spectrum.lambda)
        if (lam > floor && lam > 0.0) ++out.spectrum.retained;
    return out;
}

struct PodBasis {
    std::uint64_t grid_hash = 0;
    std::size_t n_cells = 0;
    std::size_t mode_count = 0;
    std::vector<double> modes;   // column-major [n_cells x mode_count]
    std::vector<double> lambda;  // full training spectrum (not truncated)

    std::span<const double> mode(std::size_t k) const {
        return std::span<const double>(modes.data() + k * n_cells, n_cells);
    }

    PodBasis truncated(std::size_t m) const {
        if (m > mode_count) throw validation_error("pod: cannot truncate to more modes than stored");
        PodBasis out;
        out.grid_hash = grid_hash;
        out.n_cells = n_cells;
        out.mode_count = m;
        out.modes.assign(modes.begin(), modes.begin() + static_cast<std::ptrdiff_t>(m * n_cells));
        out.lambda = lambda;
        return out;
    }
};

// Lifts the leading m eigenvectors to grid fields: phi_k = S v_k / sqrt(Ns
// lambda_k). Sign convention: the component of largest magnitude (lowest cell
// index on ties) is made positive, so the basis is reproducible across
// eigensolver implementations.
inline PodBasis build_modes(const SnapshotSet& snaps, const SnapshotEigen& eig, std::size_t m, const Grid& grid) {
    if (snaps.count() != eig.ns) throw validation_error("pod: eigenpairs do not match snapshot count");
    if (snaps.n_cells != grid.cell_count()) throw validation_error("pod: snapshots do not match grid");
    if (m > eig.spectrum.retained)
        throw validation_error("pod: requested " + std::to_string(m) + " modes but only " +
                               std::to_string(eig.spectrum.retained) + " are above the noise floor");

    const std::size_t n = snaps.n_cells;
    const std::size_t ns = snaps.count();
    PodBasis basis;
    basis.grid_hash = snaps.grid_hash;
    basis.n_cells = n;
    basis.mode_count = m;
    basis.lambda = eig.spectrum.lambda;
    basis.modes.assign(m * n, 0.0);

    Eigen::Map<const Eigen::MatrixXd> s(snaps.data.data(), static_cast<Eigen::Index>(n),
                                        static_cast<Eigen::Index>(ns));
    for (std::size_t k = 0; k < m; ++k) {
        const double lam = eig.spectrum.lambda[k];
        Eigen::Map<const Eigen::VectorXd> v(eig.vector(k).data(), static_cast<Eigen::Index>(ns));
        Eigen::Map<Eigen::VectorXd> phi(basis.modes.data() + k * n, static_cast<Eigen::Index>(n));
        phi.noalias() = s * v;
        phi *= 1.0 / std::sqrt(static_cast<double>(ns) * lam);

        double best = 0.0;
        std::size_t best_idx = 0;
        for (std::size_t c = 0; c < n; ++c) {
            const double mag = std::abs(basis.modes[k * n + c]);
            if (mag > best) {
                best = mag;
                best_idx = c;
            }
        }
        if (basis.modes[k * n + best_idx] < 0.0) phi = -phi;
    }
    return basis;
}

// Relative energy truncated past the first m modes:
//   Err_Theo(m) = sqrt(sum_{i>m} lambda_i / sum_i lambda_i).
inline double theoretical_error(std::span<const double> lambda, std::size_t m) {
    if (lambda.empty()) throw validation_error("pod: empty spectrum");
    if (m > lambda.size()) throw validation_error("pod: m exceeds spectrum length");
    double total = 0.0, tail = 0.0;
    for (std::size_t i = 0; i < lambda.size(); ++i) total += lambda[i];
    for (std::size_t i = m; i < lambda.size(); ++i) tail += lambda[i];
    if (!(total > 0.0)) throw numeric_error("pod: zero-energy spectrum");
    return std::sqrt(std::max(0.0, tail / total));
}

inline double theoretical_error(const Spectrum& spectrum, std::size_t m) {
    return theoretical_error(std::span<const double>(spectrum.lambda), m);
}

} // namespace thermrom
