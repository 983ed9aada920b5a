#pragma once

// Galerkin reduced-order model. The discrete operators are projected onto the
// POD basis:
//   C = Phi^T Mdiag Phi,  G = Phi^T A Phi,  p_j = sum_c phi_j,c q_c V_c,
// giving the m-dimensional ODE system C da/dt + G a = p(t), integrated with
// the same backward Euler scheme and zero-order hold as the full model:
//   (C/dt + G) a^{n+1} = (C/dt) a^n + p^{n+1}.

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "thermrom/errors.hpp"
#include "thermrom/fom.hpp"
#include "thermrom/geometry.hpp"
#include "thermrom/pod.hpp"
#include "thermrom/power.hpp"
#include "thermrom/sparse.hpp"

namespace thermrom {

struct RomSystem {
    std::size_t modes = 0;
    std::vector<double> capacitance;  // C, column-major m x m, SPD
    std::vector<double> conductance;  // G, column-major m x m, SPSD (SPD for h > 0)
    std::uint64_t grid_hash = 0;
};

// C = Phi^T Mdiag Phi and G = Phi^T A Phi, symmetrized after projection so
// roundoff cannot break the solver's symmetry assumption.
inline RomSystem project_system(const FomOperators& ops, const PodBasis& basis) {
    if (basis.mode_count == 0) throw validation_error("rom: empty basis");
    if (basis.n_cells != ops.stiffness.n) throw validation_error("rom: basis does not match operators");
    if (basis.grid_hash != ops.grid_hash) throw validation_error("rom: basis grid hash does not match operators");

    const std::size_t n = basis.n_cells;
    const std::size_t m = basis.mode_count;
    Eigen::Map<const Eigen::MatrixXd> phi(basis.modes.data(), static_cast<Eigen::Index>(n),
                                          static_cast<Eigen::Index>(m));

    Eigen::MatrixXd work(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
    // Mdiag Phi
    for (std::size_t k = 0; k < m; ++k)
        for (std::size_t c = 0; c < n; ++c)
            work(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(k)) =
                ops.capacitance[c] * basis.modes[k * n + c];
    Eigen::MatrixXd c_mat = phi.transpose() * work;

    // A Phi, one sparse multiply per mode
    for (std::size_t k = 0; k < m; ++k) {
        std::span<double> out(work.data() + static_cast<std::ptrdiff_t>(k * n), n);
        ops.stiffness.multiply(basis.mode(k), out);
    }
    Eigen::MatrixXd g_mat = phi.transpose() * work;

    c_mat = (0.5 * (c_mat + c_mat.transpose())).eval();
    g_mat = (0.5 * (g_mat + g_mat.transpose())).eval();

    RomSystem sys;
    sys.modes = m;
    sys.grid_hash = basis.grid_hash;
    sys.capacitance.assign(c_mat.data(), c_mat.data() + m * m);
    sys.conductance.assign(g_mat.data(), g_mat.data() + m * m);
    return sys;
}

// p_j = <phi_j, q>_V for one load field. Uses the same per-layer blocked dot
// as inner_product, so projecting a trace step by step is bit-identical to
// any batched precomputation.
inline std::vector<double> project_load_field(const PodBasis& basis, const LoadField& load, const Grid& grid) {
    if (load.q.size() != basis.n_cells) throw validation_error("rom: load length does not match basis");
    std::vector<double> p(basis.mode_count);
    for (std::size_t k = 0; k < basis.mode_count; ++k)
        p[k] = inner_product(basis.mode(k), std::span<const double>(load.q), grid);
    return p;
}

struct RomLoadSeries {
    std::size_t steps = 0;
    std::size_t modes = 0;
    std::vector<double> values;  // row-major [steps x modes]

    std::span<const double> row(std::size_t s) const {
        return std::span<const double>(values.data() + s * modes, modes);
    }
};

// Projects `steps` leading trace rows. Implemented as the literal per-step
// loop over project_load_field; callers may rely on bitwise equality with the
// incremental path.
inline RomLoadSeries project_load(const PodBasis& basis, const PowerTrace& trace, const OverlapMap& overlap,
                                  const Grid& grid, std::size_t steps) {
    if (steps > trace.steps) throw validation_error("rom: trace has too few steps");
    RomLoadSeries series;
    series.steps = steps;
    series.modes = basis.mode_count;
    series.values.reserve(steps * basis.mode_count);
    LoadField load;
    for (std::size_t s = 0; s < steps; ++s) {
        power_density(trace, overlap, grid, s, load);
        const auto p = project_load_field(basis, load, grid);
        series.values.insert(series.values.end(), p.begin(), p.end());
    }
    return series;
}

// Backward-Euler stepper with the dense Cholesky factorization of (C/dt + G)
// cached; rebuilding it per step would dominate the ODE cost.
class RomStepper {
public:
    RomStepper(const RomSystem& sys, double dt) : m_(static_cast<Eigen::Index>(sys.modes)) {
        if (!(dt > 0.0)) throw validation_error("rom: dt must be > 0");
        if (sys.modes == 0) throw validation_error("rom: empty system");
        Eigen::Map<const Eigen::MatrixXd> c(sys.capacitance.data(), m_, m_);
        Eigen::Map<const Eigen::MatrixXd> g(sys.conductance.data(), m_, m_);
        c_over_dt_ = c / dt;
        llt_.compute(c_over_dt_ + g);
        if (llt_.info() != Eigen::Success)
            throw numeric_error("rom: C/dt + G is not positive definite");
    }

    std::size_t modes() const { return static_cast<std::size_t>(m_); }

    // a <- (C/dt + G)^{-1} (C/dt a + p)
    void advance(std::span<double> a, std::span<const double> p) const {
        Eigen::Map<Eigen::VectorXd> av(a.data(), m_);
        Eigen::Map<const Eigen::VectorXd> pv(p.data(), m_);
        Eigen::VectorXd rhs = c_over_dt_ * av + pv;
        av = llt_.solve(rhs);
    }

private:
    Eigen::Index m_;
    Eigen::MatrixXd c_over_dt_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
};

inline std::vector<double> rom_step(std::span<const double> a, const RomSystem& sys, std::span<const double> p_next,
                                    double dt) {
    if (a.size() != sys.modes || p_next.size() != sys.modes)
        throw validation_error("rom_step: dimension mismatch");
    RomStepper stepper(sys, dt);
    std::vector<double> next(a.begin(), a.end());
    stepper.advance(std::span<double>(next), p_next);
    return next;
}

struct RomTrajectory {
    std::size_t steps = 0;
    std::size_t modes = 0;
    std::vector<double> coefficients;  // row-major [(steps+1) x modes], row 0 = a(0)
    std::vector<double> times;         // steps + 1 instants
    double ode_seconds = 0.0;          // wall time of the stepping loop alone

    std::span<const double> at(std::size_t s) const {
        return std::span<const double>(coefficients.data() + s * modes, modes);
    }
};

inline RomTrajectory rom_simulate(const RomSystem& sys, const RomLoadSeries& loads, std::span<const double> a0,
                                  double dt, std::size_t steps, double t0 = 0.0) {
    if (loads.modes != sys.modes) throw validation_error("rom: load series does not match system");
    if (steps > loads.steps) throw validation_error("rom: load series has too few steps");
    if (!a0.empty() && a0.size() != sys.modes) throw validation_error("rom: a0 has wrong dimension");

    RomTrajectory traj;
    traj.steps = steps;
    traj.modes = sys.modes;
    traj.coefficients.assign((steps + 1) * sys.modes, 0.0);
    traj.times.resize(steps + 1);
    if (!a0.empty()) std::copy(a0.begin(), a0.end(), traj.coefficients.begin());
    traj.times[0] = t0;

    RomStepper stepper(sys, dt);
    std::vector<double> a(traj.coefficients.begin(), traj.coefficients.begin() + static_cast<std::ptrdiff_t>(sys.modes));
    const auto t_start = std::chrono::steady_clock::now();
    for (std::size_t s = 0; s < steps; ++s) {
        stepper.advance(std::span<double>(a), loads.row(s));
        std::copy(a.begin(), a.end(), traj.coefficients.begin() + static_cast<std::ptrdiff_t>((s + 1) * sys.modes));
        traj.times[s + 1] = t0 + static_cast<double>(s + 1) * dt;
    }
    traj.ode_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return traj;
}

// T(cell) = t_amb + sum_k a_k phi_k(cell) over a region. Pass t_amb = 0 to
// reconstruct theta. out must have one slot per region cell.
inline void reconstruct(const PodBasis& basis, std::span<const double> a, std::span<const std::size_t> cells,
                        double t_amb, std::span<double> out) {
    if (a.size() != basis.mode_count) throw validation_error("reconstruct: coefficient count does not match basis");
    if (out.size() != cells.size()) throw validation_error("reconstruct: output length does not match region");
    parallel_for(cells.size(), [&](std::size_t b, std::size_t e) {
        for (std::size_t r = b; r < e; ++r) out[r] = t_amb;
        for (std::size_t k = 0; k < basis.mode_count; ++k) {
            const double ak = a[k];
            const double* phi = basis.modes.data() + k * basis.n_cells;
            for (std::size_t r = b; r < e; ++r) out[r] += ak * phi[cells[r]];
        }
    });
}

inline std::vector<double> reconstruct(const PodBasis& basis, std::span<const double> a, const Region& region,
                                       const Grid& grid, double t_amb) {
    const auto cells = region_cells(region, grid);
    std::vector<double> out(cells.size());
    reconstruct(basis, a, std::span<const std::size_t>(cells), t_amb, std::span<double>(out));
    return out;
}

} // namespace thermrom
