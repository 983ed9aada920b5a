// In-process tour of the pipeline on a pocket-sized chip: run the full-order
// model on a training drive, extract a POD basis, project onto it, then score
// the reduced model against a held-out drive it never saw. Everything is
// built in memory; no input files and no output directory.

#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "thermrom/analysis.hpp"
#include "thermrom/fom.hpp"
#include "thermrom/geometry.hpp"
#include "thermrom/pod.hpp"
#include "thermrom/power.hpp"
#include "thermrom/rom.hpp"

using namespace thermrom;

namespace {

PowerTrace make_trace(const Floorplan& fp, const std::vector<std::string>& waves,
                      std::size_t steps, double dt, std::uint64_t stream) {
    SynthSpec spec;
    for (const auto& u : fp.units) spec.unit_names.push_back(u.name);
    for (const auto& w : waves) spec.waveforms.push_back(WaveformSpec::parse(w));
    spec.steps = steps;
    spec.dt = dt;
    spec.seed = 11;
    spec.stream = stream;
    PowerTrace trace = synth_trace(spec);
    bind_to_floorplan(trace, fp);
    return trace;
}

} // namespace

int main() {
    // an 8 mm x 6 mm two-layer die, 16x16 columns, 1 heating + 3 substrate layers
    GridSpec spec;
    spec.nx = 16;
    spec.ny = 16;
    spec.nz_heat = 1;
    spec.nz_sub = 3;
    spec.len_x = 8.0e-3;
    spec.len_y = 6.0e-3;
    spec.t_heat = 55.8e-6;
    spec.t_sub = 241.8e-6;
    const Grid grid(spec);

    std::istringstream fp_csv(
        "name,x0_mm,y0_mm,width_mm,height_mm\n"
        "cpu,0.5,0.5,4.0,5.0\n"
        "gpu,5.0,0.5,2.5,5.0\n");
    const Floorplan fp = parse_floorplan(fp_csv, spec.len_x, spec.len_y);
    const OverlapMap overlap = unit_cell_overlap(fp, grid);

    const MaterialField mat = MaterialField::uniform(grid, kDefaultConductivity, kDefaultHeatCapacity);
    const BoundarySpec bc;  // convective bottom, adiabatic elsewhere
    const FomOperators ops = assemble_operators(grid, mat, bc);

    const double dt = 1.0e-5;
    const std::size_t steps = 400;

    // training: both units toggling; evaluation: held-out ramps
    const PowerTrace train = make_trace(
        fp, {"square:amp=12,period=160,duty=0.5", "square:amp=8,period=220,duty=0.5,phase=60"},
        steps, dt, 0);
    const PowerTrace eval = make_trace(
        fp, {"ramp:from=0,to=10", "ramp:from=0,to=6"}, steps, dt, 1);

    std::printf("full-order training run: %zu cells, %zu steps\n", grid.cell_count(), steps);
    const SimulationResult fom_train = simulate(ThermalState{}, ops, train, overlap, grid, steps, 1);
    const SimulationResult fom_eval = simulate(ThermalState{}, ops, eval, overlap, grid, steps, 1);

    const SnapshotEigen eig = eigendecompose(correlation_matrix(fom_train.snapshots, grid));
    std::printf("snapshot spectrum: %zu retained of %zu\n", eig.spectrum.retained,
                eig.spectrum.total());

    const auto cells = region_cells(Region::whole_chip(), grid);
    const std::vector<std::size_t> mode_counts = {1, 2, 4, 6, 8};
    std::printf("%4s  %10s  %10s\n", "M", "Err_Theo", "Err_Num");
    for (std::size_t m : mode_counts) {
        const PodBasis basis = build_modes(fom_train.snapshots, eig, m, grid);
        const RomSystem sys = project_system(ops, basis);
        const RomLoadSeries loads = project_load(basis, eval, overlap, grid, steps);
        const RomTrajectory traj = rom_simulate(sys, loads, {}, dt, steps);

        SnapshotSet recon;
        recon.grid_hash = fom_eval.snapshots.grid_hash;
        recon.n_cells = grid.cell_count();
        std::vector<double> field(grid.cell_count());
        for (std::size_t t = 0; t < fom_eval.snapshots.count(); ++t) {
            reconstruct(basis, traj.at(t + 1), cells, 0.0, field);
            recon.append(field, fom_eval.snapshots.times[t]);
        }
        const ErrorReport rep =
            ls_error(fom_eval.snapshots, recon, Region::whole_chip(), grid, m);
        std::printf("%4zu  %10.4g  %10.4g\n", m, theoretical_error(eig.spectrum, m), rep.err_num);
    }
    std::printf("reduced model solves %zu unknowns instead of %zu per step\n",
                mode_counts.back(), grid.cell_count());
    return 0;
}
