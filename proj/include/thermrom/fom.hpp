#pragma once

// Full-order model: cell-centered finite-volume discretization of
//   rhoC dT/dt = div(k grad T) + q
// on the two-layer stack, with a convective bottom face (coefficient h to the
// ambient) and all other boundaries adiabatic. States are theta = T - T_amb,
// which zeroes the convective source term and gives theta(0) = 0 for a chip
// that starts at ambient. Time integration is backward Euler:
//   (Mdiag/dt + A) theta^{n+1} = (Mdiag/dt) theta^n + q^{n+1} V.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "thermrom/errors.hpp"
#include "thermrom/geometry.hpp"
#include "thermrom/power.hpp"
#include "thermrom/sparse.hpp"

namespace thermrom {

// Convergence target for the inner CG solve, relative Euclidean residual.
inline constexpr double kCgTolerance = 1e-10;
inline constexpr std::size_t kCgMaxIterations = 200000;

struct FomOperators {
    std::vector<double> capacitance;  // Mdiag: rhoC V per cell [J/K]
    CsrMatrix stiffness;              // A, SPD for h > 0 (singular at h = 0)
    double h_bottom = 0.0;
    std::uint64_t grid_hash = 0;
};

// Seven-point stencil; interior face conductance is the harmonic mean
//   g = A_f / (d_p / k_p + d_q / k_q)
// with d the half-thickness on each side. The bottom face contributes h A_f
// to the diagonal of its cell; every other boundary face contributes nothing.
inline FomOperators assemble_operators(const Grid& grid, const MaterialField& mat, const BoundarySpec& bc) {
    mat.validate(grid);
    bc.validate();

    const int nx = grid.nx(), ny = grid.ny(), nz = grid.nz();
    const std::size_t n = grid.cell_count();
    FomOperators ops;
    ops.h_bottom = bc.h;
    ops.grid_hash = grid.hash();
    ops.capacitance.resize(n);
    for (std::size_t c = 0; c < n; ++c) ops.capacitance[c] = mat.heat_capacity[c] * grid.cell_volume(c);

    const auto face_conductance = [&](std::size_t c, std::size_t nb, double area, double half_c, double half_nb) {
        return area / (half_c / mat.conductivity[c] + half_nb / mat.conductivity[nb]);
    };

    // Two passes: count entries per row, then fill in ascending column order.
    CsrMatrix& a = ops.stiffness;
    a.n = n;
    a.row_ptr.assign(n + 1, 0);
    for (int k = 0; k < nz; ++k)
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                std::size_t nnz = 1;
                if (k > 0) ++nnz;
                if (j > 0) ++nnz;
                if (i > 0) ++nnz;
                if (i + 1 < nx) ++nnz;
                if (j + 1 < ny) ++nnz;
                if (k + 1 < nz) ++nnz;
                a.row_ptr[grid.index(i, j, k) + 1] = nnz;
            }
    for (std::size_t r = 0; r < n; ++r) a.row_ptr[r + 1] += a.row_ptr[r];
    a.col.resize(a.row_ptr[n]);
    a.val.resize(a.row_ptr[n]);

    for (int k = 0; k < nz; ++k) {
        const double area_x = grid.dy() * grid.dz(k);
        const double area_y = grid.dx() * grid.dz(k);
        const double area_z = grid.dx() * grid.dy();
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                const std::size_t c = grid.index(i, j, k);
                double diag = 0.0;
                std::size_t e = a.row_ptr[c];
                const auto emit = [&](std::size_t nb, double g) {
                    a.col[e] = static_cast<std::uint32_t>(nb);
                    a.val[e] = -g;
                    ++e;
                    diag += g;
                };
                std::size_t diag_slot = 0;
                // Neighbors in ascending linear index order; the diagonal slot
                // is reserved in sequence.
                if (k > 0)
                    emit(grid.index(i, j, k - 1),
                         face_conductance(c, grid.index(i, j, k - 1), area_z, 0.5 * grid.dz(k), 0.5 * grid.dz(k - 1)));
                if (j > 0)
                    emit(grid.index(i, j - 1, k),
                         face_conductance(c, grid.index(i, j - 1, k), area_y, 0.5 * grid.dy(), 0.5 * grid.dy()));
                if (i > 0)
                    emit(grid.index(i - 1, j, k),
                         face_conductance(c, grid.index(i - 1, j, k), area_x, 0.5 * grid.dx(), 0.5 * grid.dx()));
                diag_slot = e++;
                if (i + 1 < nx)
                    emit(grid.index(i + 1, j, k),
                         face_conductance(c, grid.index(i + 1, j, k), area_x, 0.5 * grid.dx(), 0.5 * grid.dx()));
                if (j + 1 < ny)
                    emit(grid.index(i, j + 1, k),
                         face_conductance(c, grid.index(i, j + 1, k), area_y, 0.5 * grid.dy(), 0.5 * grid.dy()));
                if (k + 1 < nz)
                    emit(grid.index(i, j, k + 1),
                         face_conductance(c, grid.index(i, j, k + 1), area_z, 0.5 * grid.dz(k), 0.5 * grid.dz(k + 1)));
                if (k == 0) diag += bc.h * area_z;  // convective bottom face, flux h A theta_c
                a.col[diag_slot] = static_cast<std::uint32_t>(c);
                a.val[diag_slot] = diag;
            }
    }
    return ops;
}

struct ThermalState {
    std::vector<double> theta;  // T - T_amb per cell [K]
    double time = 0.0;
};

// One backward-Euler step with a reusable workspace; caches the Jacobi
// preconditioner of (Mdiag/dt + A) for a fixed dt.
class TransientSolver {
public:
    TransientSolver(const FomOperators& ops, double dt) : ops_(&ops), dt_(dt) {
        if (!(dt > 0.0)) throw validation_error("fom: dt must be > 0");
        const std::size_t n = ops.stiffness.n;
        shift_.resize(n);
        inv_diag_.resize(n);
        rhs_.resize(n);
        for (std::size_t c = 0; c < n; ++c) {
            shift_[c] = ops.capacitance[c] / dt;
            inv_diag_[c] = 1.0 / (shift_[c] + ops.stiffness.diagonal(c));
        }
    }

    double dt() const { return dt_; }

    // state.theta is both the previous state and (on return) the new one; it
    // also serves as the CG warm start. load is the source over the step
    // being taken (zero-order hold).
    void advance(ThermalState& state, const LoadField& load, const Grid& grid) {
        const std::size_t n = ops_->stiffness.n;
        if (state.theta.size() != n) throw validation_error("fom: state length does not match operators");
        if (load.q.size() != n) throw validation_error("fom: load length does not match operators");
        for (std::size_t c = 0; c < n; ++c) rhs_[c] = shift_[c] * state.theta[c] + load.q[c] * grid.cell_volume(c);
        ShiftedOperator op{&ops_->stiffness, &shift_};
        last_cg_ = conjugate_gradient(op, std::span<const double>(rhs_), std::span<double>(state.theta),
                                      std::span<const double>(inv_diag_), kCgTolerance, kCgMaxIterations);
        state.time += dt_;
    }

    const CgResult& last_cg() const { return last_cg_; }

private:
    const FomOperators* ops_;
    double dt_;
    std::vector<double> shift_;
    std::vector<double> inv_diag_;
    std::vector<double> rhs_;
    CgResult last_cg_;
};

inline ThermalState step(const ThermalState& state, const FomOperators& ops, const LoadField& load, double dt,
                         const Grid& grid, CgResult* stats = nullptr) {
    TransientSolver solver(ops, dt);
    ThermalState next = state;
    solver.advance(next, load, grid);
    if (stats) *stats = solver.last_cg();
    return next;
}

// Columns of theta fields sampled along a transient run.
struct SnapshotSet {
    std::uint64_t grid_hash = 0;
    std::size_t n_cells = 0;
    std::vector<double> times;  // sample instants [s]
    std::vector<double> data;   // column-major [n_cells x count]

    std::size_t count() const { return times.size(); }
    std::span<const double> field(std::size_t idx) const {
        return std::span<const double>(data.data() + idx * n_cells, n_cells);
    }
    std::span<double> field(std::size_t idx) {
        return std::span<double>(data.data() + idx * n_cells, n_cells);
    }
    void append(std::span<const double> theta, double time) {
        data.insert(data.end(), theta.begin(), theta.end());
        times.push_back(time);
    }
};

struct SimulationResult {
    SnapshotSet snapshots;
    ThermalState final_state;
    double wall_seconds = 0.0;
    std::size_t cg_iterations_total = 0;
};

// Advances `steps` backward-Euler steps of size trace.dt_sample from theta0,
// holding each trace row over its step. Samples every `sample_every` steps
// (never the initial state; the final state is sampled iff steps divides).
inline SimulationResult simulate(const ThermalState& theta0, const FomOperators& ops, const PowerTrace& trace,
                                 const OverlapMap& overlap, const Grid& grid, std::size_t steps,
                                 std::size_t sample_every = 1) {
    if (steps > trace.steps) throw validation_error("simulate: trace has only " + std::to_string(trace.steps) +
                                                    " steps, " + std::to_string(steps) + " requested");
    if (sample_every == 0) throw validation_error("simulate: sample_every must be >= 1");

    SimulationResult result;
    result.final_state = theta0;
    if (result.final_state.theta.empty()) result.final_state.theta.assign(grid.cell_count(), 0.0);
    result.snapshots.grid_hash = grid.hash();
    result.snapshots.n_cells = grid.cell_count();
    result.snapshots.data.reserve(grid.cell_count() * (steps / sample_every));

    TransientSolver solver(ops, trace.dt_sample);
    LoadField load;
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t s = 0; s < steps; ++s) {
        power_density(trace, overlap, grid, s, load);
        solver.advance(result.final_state, load, grid);
        result.cg_iterations_total += solver.last_cg().iterations;
        if ((s + 1) % sample_every == 0)
            result.snapshots.append(result.final_state.theta, result.final_state.time);
    }
    result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

// Steady solution of A theta = q V. Requires h > 0; with an adiabatic bottom
// the operator is singular (constant null space).
inline std::vector<double> steady_state(const FomOperators& ops, const LoadField& load, const Grid& grid) {
    if (!(ops.h_bottom > 0.0)) throw numeric_error("steady_state: singular operator (h = 0)");
    const std::size_t n = ops.stiffness.n;
    std::vector<double> rhs(n), x(n, 0.0), inv_diag(n);
    for (std::size_t c = 0; c < n; ++c) rhs[c] = load.q[c] * grid.cell_volume(c);
    for (std::size_t c = 0; c < n; ++c) inv_diag[c] = 1.0 / ops.stiffness.diagonal(c);
    struct PlainOp {
        const CsrMatrix* a;
        std::size_t size() const { return a->n; }
        void multiply(std::span<const double> in, std::span<double> out) const { a->multiply(in, out); }
    } op{&ops.stiffness};
    conjugate_gradient(op, std::span<const double>(rhs), std::span<double>(x), std::span<const double>(inv_diag),
                       kCgTolerance, kCgMaxIterations);
    return x;
}

} // namespace thermrom
