#pragma once

// Stage functions behind the CLI subcommands. `validate` calls the same
// stage_* entry points as the individual subcommands, which is what makes a
// composed pipeline byte-identical to separately invoked stages. Every stage
// writes its artifacts plus a small JSON manifest; wall-clock fields in
// manifests are the only artifact content that varies between reruns.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "thermrom/analysis.hpp"
#include "thermrom/config.hpp"
#include "thermrom/errors.hpp"
#include "thermrom/fom.hpp"
#include "thermrom/geometry.hpp"
#include "thermrom/io.hpp"
#include "thermrom/pod.hpp"
#include "thermrom/power.hpp"
#include "thermrom/rom.hpp"
#include "thermrom/util.hpp"

namespace thermrom {

struct Scenario {
    Grid grid;
    MaterialField mat;
    BoundarySpec bc;
    Floorplan fp;
    OverlapMap overlap;
    FomOperators ops;
    double dt = 0.0;

    explicit Scenario(const GridSpec& spec) : grid(spec) {}
};

inline GridSpec grid_spec_from_config(const RunConfig& c) {
    GridSpec spec;
    spec.nx = static_cast<int>(c.get_int("nx"));
    spec.ny = static_cast<int>(c.get_int("ny"));
    spec.nz_heat = static_cast<int>(c.get_int("nz_heat"));
    spec.nz_sub = static_cast<int>(c.get_int("nz_sub"));
    spec.len_x = c.get_double("len_x", 31.0e-3);
    spec.len_y = c.get_double("len_y", 21.5e-3);
    spec.t_heat = c.get_double("t_heat", 55.8e-6);
    spec.t_sub = c.get_double("t_sub", 241.8e-6);
    return spec;
}

inline Scenario build_scenario(const RunConfig& c) {
    Scenario s(grid_spec_from_config(c));
    s.mat = MaterialField::per_layer(s.grid, c.get_double("k_heat", kDefaultConductivity),
                                     c.get_double("k_sub", kDefaultConductivity),
                                     c.get_double("rhoc_heat", kDefaultHeatCapacity),
                                     c.get_double("rhoc_sub", kDefaultHeatCapacity));
    s.bc.h = c.get_double("h", kDefaultHtc);
    s.bc.t_amb = c.get_double("t_amb", kDefaultAmbient);
    s.fp = load_floorplan(c.get_string("floorplan"), s.grid.spec().len_x, s.grid.spec().len_y);
    s.overlap = unit_cell_overlap(s.fp, s.grid);
    s.ops = assemble_operators(s.grid, s.mat, s.bc);
    s.dt = c.get_double("dt");
    return s;
}

inline double duration_for(const RunConfig& c, const std::string& which) {
    if (which == "eval") return c.get_double("eval_duration", c.get_double("train_duration"));
    return c.get_double("train_duration");
}

inline std::vector<std::size_t> requested_modes(const RunConfig& c) {
    if (!c.has("modes")) return {1, 3, 5, 7};
    return c.get_size_list("modes");
}

// --- trace resolution -------------------------------------------------------

struct ResolvedTrace {
    PowerTrace trace;
    std::string role;         // "train" or "eval": which config source produced it
    bool synthesized = false;
};

// A synthesized source is generated over the longest window any consumer will
// read, so training on a prefix of the evaluation trace sees the same samples
// the evaluation run does.
inline double synth_horizon(const RunConfig& c, const std::string& role) {
    if (role == "eval") return duration_for(c, "eval");
    double d = c.get_double("train_duration");
    const bool eval_shares_source = !c.has("eval_trace") && !c.has("eval_synth");
    if (eval_shares_source && c.has("eval_duration")) d = std::max(d, c.get_double("eval_duration"));
    return d;
}

inline ResolvedTrace resolve_trace(const Scenario& s, const RunConfig& c, const std::string& which) {
    if (which != "train" && which != "eval")
        throw validation_error("config: trace role must be train or eval, got '" + which + "'");
    std::string role = which;
    if (which == "eval" && !c.has("eval_trace") && !c.has("eval_synth")) role = "train";

    const std::string trace_key = role + "_trace";
    const std::string synth_key = role + "_synth";
    if (c.has(trace_key) && c.has(synth_key))
        throw validation_error("config: give either " + trace_key + " or " + synth_key + ", not both");

    ResolvedTrace out;
    out.role = role;
    if (c.has(trace_key)) {
        out.trace = load_power_trace(c.get_string(trace_key), s.fp);
        if (!(std::abs(out.trace.dt_sample - s.dt) <= 1e-12 * s.dt))
            throw validation_error("config: " + trace_key + " sample period " +
                                   format_double(out.trace.dt_sample) + " s does not match dt " +
                                   format_double(s.dt) + " s");
    } else if (c.has(synth_key)) {
        SynthSpec spec;
        for (const auto& unit : s.fp.units) spec.unit_names.push_back(unit.name);
        for (const auto& part : split(c.get_string(synth_key), ';'))
            spec.waveforms.push_back(WaveformSpec::parse(part));
        spec.steps = steps_from_duration(synth_horizon(c, role), s.dt, synth_key);
        spec.dt = s.dt;
        spec.seed = c.get_u64("seed", 0);
        spec.stream = role == "eval" ? 1 : 0;
        out.trace = synth_trace(spec);
        bind_to_floorplan(out.trace, s.fp);
        out.synthesized = true;
    } else {
        throw validation_error("config: missing " + trace_key + " or " + synth_key);
    }
    return out;
}

// --- manifests ---------------------------------------------------------------

struct Manifest {
    std::string stage;
    std::uint64_t config_hash = 0;
    std::uint64_t grid_hash = 0;
    std::vector<std::pair<std::string, double>> timers;  // wall-clock seconds
    std::vector<std::pair<std::string, std::string>> notes;
    std::vector<std::string> artifacts;
};

namespace detail {

inline std::string json_escape(const std::string& s) {
    std::string out;
    for (char ch : s) {
        if (ch == '"' || ch == '\\') out.push_back('\\');
        out.push_back(ch);
    }
    return out;
}

} // namespace detail

inline std::string manifest_json(const Manifest& m) {
    std::ostringstream out;
    out << "{\n";
    out << "  \"stage\": \"" << detail::json_escape(m.stage) << "\",\n";
    out << "  \"config_hash\": \"" << format_hex_u64(m.config_hash) << "\",\n";
    out << "  \"grid_hash\": \"" << format_hex_u64(m.grid_hash) << "\",\n";
    out << "  \"wall_s\": {";
    for (std::size_t i = 0; i < m.timers.size(); ++i) {
        if (i) out << ", ";
        out << "\"" << detail::json_escape(m.timers[i].first) << "\": " << format_double(m.timers[i].second);
    }
    out << "},\n";
    for (const auto& [key, value] : m.notes)
        out << "  \"" << detail::json_escape(key) << "\": \"" << detail::json_escape(value) << "\",\n";
    out << "  \"artifacts\": [";
    for (std::size_t i = 0; i < m.artifacts.size(); ++i) {
        if (i) out << ", ";
        out << "\"" << detail::json_escape(m.artifacts[i]) << "\"";
    }
    out << "]\n}\n";
    return out.str();
}

inline void write_manifest(const Manifest& m, const std::filesystem::path& out_dir) {
    std::string name = m.stage;
    for (char& ch : name)
        if (ch == '-') ch = '_';
    write_text_file(out_dir / (name + "_manifest.json"), manifest_json(m));
}

// --- shared checks and helpers ----------------------------------------------

inline void check_basis_grid(const PodBasis& basis, const Grid& grid, const std::string& what) {
    if (basis.n_cells != grid.cell_count())
        throw validation_error(what + ": basis has " + std::to_string(basis.n_cells) +
                               " cells but the configured grid has " + std::to_string(grid.cell_count()));
    if (basis.grid_hash != grid.hash())
        throw validation_error(what + ": basis grid hash " + format_hex_u64(basis.grid_hash) +
                               " does not match configured grid " + format_hex_u64(grid.hash()));
}

inline SnapshotSet load_pooled_snapshots(const std::vector<std::string>& paths, const Grid& grid) {
    if (paths.empty()) throw validation_error("pod: no snapshot files given");
    SnapshotSet pooled;
    pooled.grid_hash = grid.hash();
    pooled.n_cells = grid.cell_count();
    for (const auto& path : paths) {
        const SnapshotSet part = load_snapshots(path);
        if (part.n_cells != pooled.n_cells)
            throw validation_error("pod: " + path + " has " + std::to_string(part.n_cells) +
                                   " cells but the configured grid has " + std::to_string(pooled.n_cells));
        if (part.grid_hash != pooled.grid_hash)
            throw validation_error("pod: " + path + " grid hash " + format_hex_u64(part.grid_hash) +
                                   " does not match configured grid " + format_hex_u64(pooled.grid_hash));
        pooled.data.insert(pooled.data.end(), part.data.begin(), part.data.end());
        pooled.times.insert(pooled.times.end(), part.times.begin(), part.times.end());
    }
    return pooled;
}

inline Region parse_region(const std::string& text) {
    const std::string t = trim(text);
    if (t == "chip") return Region::whole_chip();
    if (t == "heat") return Region::heating_layers();
    if (t.rfind("layer:", 0) == 0)
        return Region::single_layer(static_cast<int>(parse_int(t.substr(6), "region layer")));
    throw validation_error("config: unknown region '" + t + "' (expected chip, heat, or layer:<k>)");
}

inline std::string region_tag(const Region& region) {
    switch (region.kind) {
        case Region::Kind::chip: return "chip";
        case Region::Kind::heating: return "heat";
        case Region::Kind::layer: return "layer" + std::to_string(region.layer);
        case Region::Kind::cells: return "cells";
    }
    return "region";
}

// Err_Theo rows for a printed table.
inline std::string err_theo_table(std::span<const double> lambda, std::span<const std::size_t> modes_list,
                                  std::size_t retained) {
    std::ostringstream out;
    out << "retained modes: " << retained << "\n";
    out << "M  Err_Theo\n";
    for (std::size_t m : modes_list) {
        if (m > lambda.size()) continue;
        out << m << "  " << format_double(theoretical_error(lambda, m)) << "\n";
    }
    return out.str();
}

namespace detail {

class StageTimer {
public:
    StageTimer() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

} // namespace detail

// --- fom-run ------------------------------------------------------------------

struct FomStage {
    SnapshotSet snapshots;
    std::size_t steps = 0;
    double wall_seconds = 0.0;
    std::size_t cg_iterations = 0;
    std::vector<std::string> artifacts;
};

inline FomStage stage_fom_run(const Scenario& s, const RunConfig& c, const std::string& which,
                              const std::filesystem::path& out_dir) {
    const ResolvedTrace resolved = resolve_trace(s, c, which);
    const std::size_t steps = steps_from_duration(duration_for(c, which), s.dt, which + "_duration");
    if (steps > resolved.trace.steps)
        throw validation_error("fom-run: trace provides " + std::to_string(resolved.trace.steps) +
                               " steps but the " + which + " window needs " + std::to_string(steps));
    const auto sample_every = static_cast<std::size_t>(c.get_u64("snapshot_every", 1));
    if (sample_every == 0) throw validation_error("config: snapshot_every must be >= 1");

    std::filesystem::create_directories(out_dir);
    auto sim = simulate(ThermalState{}, s.ops, resolved.trace, s.overlap, s.grid, steps, sample_every);

    FomStage out;
    out.snapshots = std::move(sim.snapshots);
    out.steps = steps;
    out.wall_seconds = sim.wall_seconds;
    out.cg_iterations = sim.cg_iterations_total;

    const std::string snap_name = "fom_" + which + ".snap";
    save_snapshots(out.snapshots, out_dir / snap_name);
    out.artifacts.push_back(snap_name);
    if (resolved.synthesized) {
        const std::string trace_name = "trace_" + resolved.role + ".csv";
        save_power_trace(resolved.trace, out_dir / trace_name);
        out.artifacts.push_back(trace_name);
    }

    Manifest m;
    m.stage = "fom-" + which;
    m.config_hash = c.hash();
    m.grid_hash = s.grid.hash();
    m.timers = {{"fom", out.wall_seconds}};
    m.notes = {{"steps", std::to_string(steps)},
               {"snapshots", std::to_string(out.snapshots.count())},
               {"cg_iterations", std::to_string(out.cg_iterations)}};
    m.artifacts = out.artifacts;
    write_manifest(m, out_dir);
    return out;
}

// --- pod-train ------------------------------------------------------------------

struct PodStage {
    PodBasis basis;
    SnapshotEigen eigen;
    std::size_t ns = 0;
    double wall_seconds = 0.0;
    std::vector<std::string> artifacts;
};

inline PodStage stage_pod_train(const Grid& grid, const SnapshotSet& snaps, const RunConfig& c,
                                const std::filesystem::path& out_dir) {
    const auto modes_list = requested_modes(c);
    const std::size_t mode_count = static_cast<std::size_t>(
        c.get_u64("mode_count", *std::max_element(modes_list.begin(), modes_list.end())));

    detail::StageTimer timer;
    const auto r = correlation_matrix(snaps, grid);
    PodStage out;
    out.eigen = eigendecompose(r);
    out.basis = build_modes(snaps, out.eigen, mode_count, grid);
    out.ns = snaps.count();
    out.wall_seconds = timer.seconds();

    std::filesystem::create_directories(out_dir);
    save_basis(out.basis, out_dir / "basis.pod");
    write_text_file(out_dir / "spectrum.csv",
                    spectrum_csv(out.eigen.spectrum.lambda, out.eigen.spectrum.retained));
    out.artifacts = {"basis.pod", "spectrum.csv"};

    Manifest m;
    m.stage = "pod-train";
    m.config_hash = c.hash();
    m.grid_hash = grid.hash();
    m.timers = {{"pod", out.wall_seconds}};
    m.notes = {{"snapshots", std::to_string(out.ns)},
               {"retained", std::to_string(out.eigen.spectrum.retained)},
               {"mode_count", std::to_string(mode_count)}};
    m.artifacts = out.artifacts;
    write_manifest(m, out_dir);
    return out;
}

// --- rom-run ------------------------------------------------------------------

struct RomStage {
    RomTrajectory trajectory;
    std::size_t steps = 0;
    double project_seconds = 0.0;
    std::vector<std::pair<std::string, double>> recon_seconds;  // per region tag
    std::vector<std::string> artifacts;
};

// `suffix` distinguishes per-M artifacts when validate sweeps mode counts;
// the plain subcommand passes "".
inline RomStage stage_rom_run(const Scenario& s, const RunConfig& c, const PodBasis& basis,
                              const std::filesystem::path& out_dir, const std::string& suffix = "") {
    check_basis_grid(basis, s.grid, "rom-run");
    const std::string which = c.get_string("rom_which", "eval");
    const ResolvedTrace resolved = resolve_trace(s, c, which);
    const std::size_t steps = steps_from_duration(duration_for(c, which), s.dt, which + "_duration");
    if (steps > resolved.trace.steps)
        throw validation_error("rom-run: trace provides " + std::to_string(resolved.trace.steps) +
                               " steps but the " + which + " window needs " + std::to_string(steps));

    RomStage out;
    out.steps = steps;

    detail::StageTimer project_timer;
    const RomSystem sys = project_system(s.ops, basis);
    const RomLoadSeries loads = project_load(basis, resolved.trace, s.overlap, s.grid, steps);
    out.project_seconds = project_timer.seconds();

    out.trajectory = rom_simulate(sys, loads, {}, s.dt, steps);

    std::filesystem::create_directories(out_dir);
    const std::string traj_name = "trajectory" + suffix + ".csv";
    write_text_file(out_dir / traj_name,
                    trajectory_csv(out.trajectory.times, out.trajectory.coefficients, out.trajectory.modes));
    out.artifacts.push_back(traj_name);

    const auto recon_every = static_cast<std::size_t>(c.get_u64("recon_every", 1));
    std::vector<Region> regions;
    if (c.has("recon_regions"))
        for (const auto& part : c.get_string_list("recon_regions")) regions.push_back(parse_region(part));
    else
        regions.push_back(Region::whole_chip());

    for (const Region& region : regions) {
        const auto cells = region_cells(region, s.grid);
        FieldSeries fields;
        fields.grid_hash = s.grid.hash();
        fields.region = region;
        fields.region_cell_count = cells.size();
        std::vector<double> buffer(cells.size());
        double recon_s = 0.0;
        for (std::size_t step = 1; step <= steps; ++step) {
            const bool sampled = recon_every == 0 ? step == steps : step % recon_every == 0;
            if (!sampled) continue;
            detail::StageTimer recon_timer;
            reconstruct(basis, out.trajectory.at(step), cells, 0.0, buffer);
            recon_s += recon_timer.seconds();
            fields.append(buffer, out.trajectory.times[step]);
        }
        const std::string tag = region_tag(region);
        const std::string field_name = "fields_" + tag + suffix + ".fld";
        save_fields(fields, out_dir / field_name);
        out.recon_seconds.emplace_back(tag, recon_s);
        out.artifacts.push_back(field_name);
    }

    Manifest m;
    m.stage = "rom-run";
    m.config_hash = c.hash();
    m.grid_hash = s.grid.hash();
    m.timers = {{"project", out.project_seconds}, {"odes", out.trajectory.ode_seconds}};
    for (const auto& [tag, secs] : out.recon_seconds) m.timers.emplace_back("recon_" + tag, secs);
    m.notes = {{"modes", std::to_string(basis.mode_count)}, {"steps", std::to_string(steps)}};
    m.artifacts = out.artifacts;
    write_manifest(m, out_dir);
    return out;
}

// --- validate ------------------------------------------------------------------

struct ValidateStage {
    std::vector<SweepRow> sweep;     // one row per (M, window), window-major within M
    std::vector<TimingRow> timing;   // one row per M
    std::size_t retained = 0;
    std::vector<std::string> artifacts;
};

inline ValidateStage stage_validate(const Scenario& s, const RunConfig& c,
                                    const std::filesystem::path& out_dir) {
    const auto modes_list = requested_modes(c);

    // train: full model then basis, via the same stages the subcommands run
    const FomStage fom_train = stage_fom_run(s, c, "train", out_dir);
    const PodStage pod = stage_pod_train(s.grid, fom_train.snapshots, c, out_dir);
    for (std::size_t m : modes_list)
        if (m > pod.basis.mode_count)
            throw validation_error("validate: modes entry " + std::to_string(m) +
                                   " exceeds the built basis of " + std::to_string(pod.basis.mode_count));

    // evaluation window and prefix windows for the error report
    const ResolvedTrace eval_trace = resolve_trace(s, c, "eval");
    const double eval_duration = duration_for(c, "eval");
    const std::size_t eval_steps = steps_from_duration(eval_duration, s.dt, "eval_duration");
    if (eval_steps > eval_trace.trace.steps)
        throw validation_error("validate: eval trace provides " + std::to_string(eval_trace.trace.steps) +
                               " steps but the eval window needs " + std::to_string(eval_steps));
    std::vector<double> windows =
        c.has("eval_windows") ? c.get_double_list("eval_windows") : std::vector<double>{eval_duration};
    std::vector<std::size_t> window_steps;
    for (double w : windows) {
        const std::size_t ws = steps_from_duration(w, s.dt, "eval_windows");
        if (ws > eval_steps)
            throw validation_error("validate: eval window " + format_double(w) +
                                   " s exceeds the eval duration");
        window_steps.push_back(ws);
    }

    ValidateStage out;
    out.retained = pod.eigen.spectrum.retained;
    out.artifacts = fom_train.artifacts;
    out.artifacts.insert(out.artifacts.end(), pod.artifacts.begin(), pod.artifacts.end());

    // reduced systems and trajectories per M; load rows are sliced from the
    // widest projection, which is bitwise-identical to projecting each
    // truncated basis separately
    const RomLoadSeries loads_full = project_load(pod.basis, eval_trace.trace, s.overlap, s.grid, eval_steps);
    std::vector<PodBasis> bases;
    std::vector<RomTrajectory> trajectories;
    for (std::size_t m : modes_list) {
        PodBasis basis_m = pod.basis.truncated(m);
        const RomSystem sys_m = project_system(s.ops, basis_m);
        RomLoadSeries loads_m;
        loads_m.steps = eval_steps;
        loads_m.modes = m;
        loads_m.values.reserve(eval_steps * m);
        for (std::size_t step = 0; step < eval_steps; ++step) {
            const auto row = loads_full.row(step);
            loads_m.values.insert(loads_m.values.end(), row.begin(), row.begin() + static_cast<std::ptrdiff_t>(m));
        }
        RomTrajectory traj = rom_simulate(sys_m, loads_m, {}, s.dt, eval_steps);
        const std::string traj_name = "trajectory_m" + std::to_string(m) + ".csv";
        write_text_file(out_dir / traj_name, trajectory_csv(traj.times, traj.coefficients, traj.modes));
        out.artifacts.push_back(traj_name);
        bases.push_back(std::move(basis_m));
        trajectories.push_back(std::move(traj));
    }

    // single evaluation pass of the full model, streaming the error terms for
    // every M; only the power-density and solver calls are on the FOM timer
    const auto chip_cells = region_cells(Region::whole_chip(), s.grid);
    const auto heat_cells = region_cells(Region::heating_layers(), s.grid);
    std::vector<LsErrorAccumulator> chip_acc, heat_acc;
    for (std::size_t mi = 0; mi < modes_list.size(); ++mi) {
        chip_acc.emplace_back(Region::whole_chip(), s.grid);
        heat_acc.emplace_back(Region::heating_layers(), s.grid);
    }

    TransientSolver solver(s.ops, s.dt);
    ThermalState state;
    state.theta.assign(s.grid.cell_count(), 0.0);
    LoadField load;
    std::vector<double> recon(s.grid.cell_count());
    double fom_seconds = 0.0;
    for (std::size_t step = 0; step < eval_steps; ++step) {
        detail::StageTimer fom_timer;
        power_density(eval_trace.trace, s.overlap, s.grid, step, load);
        solver.advance(state, load, s.grid);
        fom_seconds += fom_timer.seconds();
        for (std::size_t mi = 0; mi < modes_list.size(); ++mi) {
            reconstruct(bases[mi], trajectories[mi].at(step + 1), chip_cells, 0.0, recon);
            chip_acc[mi].add_step(state.theta, recon);
            heat_acc[mi].add_step(state.theta, recon);
        }
    }

    // error table: window-prefix aggregation of the per-step terms
    for (std::size_t mi = 0; mi < modes_list.size(); ++mi) {
        const ErrorReport chip_report = chip_acc[mi].finish(modes_list[mi]);
        const ErrorReport heat_report = heat_acc[mi].finish(modes_list[mi]);
        const double err_theo = theoretical_error(pod.basis.lambda, modes_list[mi]);
        for (std::size_t wi = 0; wi < windows.size(); ++wi) {
            double chip_num = 0.0, chip_den = 0.0, heat_num = 0.0, heat_den = 0.0;
            for (std::size_t t = 0; t < window_steps[wi]; ++t) {
                chip_num += chip_report.numerator_sq[t];
                chip_den += chip_report.denominator_sq[t];
                heat_num += heat_report.numerator_sq[t];
                heat_den += heat_report.denominator_sq[t];
            }
            if (!(chip_den > 0.0) || !(heat_den > 0.0))
                throw numeric_error("validate: reference has zero energy over an eval window");
            SweepRow row;
            row.modes = modes_list[mi];
            row.err_theo = err_theo;
            row.err_num_chip = std::sqrt(chip_num / chip_den);
            row.err_num_heat = std::sqrt(heat_num / heat_den);
            row.eval_window_s = windows[wi];
            out.sweep.push_back(row);
        }
    }
    write_text_file(out_dir / "errors.csv", sweep_table_csv(out.sweep));
    out.artifacts.push_back("errors.csv");

    // timing table: ODE integration is already measured; the post stages are
    // pure reconstruction sweeps over every step (no I/O, no error math)
    std::vector<double> heat_buffer(heat_cells.size());
    for (std::size_t mi = 0; mi < modes_list.size(); ++mi) {
        TimingRow row;
        row.modes = modes_list[mi];
        row.odes_s = trajectories[mi].ode_seconds;
        row.fom_s = fom_seconds;
        row.n_cells = s.grid.cell_count();
        detail::StageTimer post1;
        for (std::size_t step = 1; step <= eval_steps; ++step)
            reconstruct(bases[mi], trajectories[mi].at(step), heat_cells, 0.0, heat_buffer);
        row.post1_s = post1.seconds();
        detail::StageTimer post2;
        for (std::size_t step = 1; step <= eval_steps; ++step)
            reconstruct(bases[mi], trajectories[mi].at(step), chip_cells, 0.0, recon);
        row.post2_s = post2.seconds();
        out.timing.push_back(row);
    }
    write_text_file(out_dir / "speedup.csv", timing_table_csv(out.timing));
    out.artifacts.push_back("speedup.csv");

    Manifest m;
    m.stage = "validate";
    m.config_hash = c.hash();
    m.grid_hash = s.grid.hash();
    m.timers = {{"fom_train", fom_train.wall_seconds}, {"pod", pod.wall_seconds}, {"fom_eval", fom_seconds}};
    m.notes = {{"train_steps", std::to_string(fom_train.steps)},
               {"eval_steps", std::to_string(eval_steps)},
               {"retained", std::to_string(out.retained)}};
    m.artifacts = out.artifacts;
    write_manifest(m, out_dir);
    return out;
}

// --- probe ------------------------------------------------------------------

inline SnapshotSet snapshots_from_fields(const FieldSeries& fields, const Grid& grid, const std::string& what) {
    if (fields.region.kind != Region::Kind::chip || fields.region_cell_count != grid.cell_count())
        throw validation_error(what + ": probing needs whole-chip fields, not a restricted region");
    SnapshotSet out;
    out.grid_hash = fields.grid_hash;
    out.n_cells = fields.region_cell_count;
    out.times = fields.times;
    out.data = fields.data;
    return out;
}

inline SnapshotSet load_probe_series(const std::filesystem::path& path, const Grid& grid, const std::string& what) {
    const ContainerKind kind = peek_container_kind(path);
    SnapshotSet series;
    if (kind == ContainerKind::snapshot)
        series = load_snapshots(path);
    else if (kind == ContainerKind::field)
        series = snapshots_from_fields(load_fields(path), grid, what);
    else
        throw validation_error(what + ": " + path.string() + " holds a basis, not a field series");
    if (series.grid_hash != grid.hash())
        throw validation_error(what + ": " + path.string() + " grid hash " + format_hex_u64(series.grid_hash) +
                               " does not match configured grid " + format_hex_u64(grid.hash()));
    return series;
}

struct ProbeStage {
    ProbeResult probe;
    std::string abscissa_name;
    std::vector<std::string> artifacts;
};

inline ProbeStage stage_probe(const Scenario& s, const RunConfig& c, const std::filesystem::path& out_dir) {
    const SnapshotSet series = load_probe_series(c.get_string("probe_input"), s.grid, "probe");
    SnapshotSet reference;
    const bool with_ref = c.has("probe_ref");
    if (with_ref) reference = load_probe_series(c.get_string("probe_ref"), s.grid, "probe");

    const std::string kind = c.get_string("probe_kind", "point");
    const int layer = static_cast<int>(c.get_int("probe_layer", s.grid.nz() - 1));

    ProbeStage out;
    if (kind == "point") {
        out.probe = point_evolution(series, s.grid, c.get_double("probe_x"), c.get_double("probe_y"), layer,
                                    s.bc.t_amb, with_ref ? &reference : nullptr);
        out.abscissa_name = "time_s";
    } else if (kind == "line") {
        const std::string axis_text = c.get_string("probe_axis", "x");
        if (axis_text != "x" && axis_text != "y")
            throw validation_error("config: probe_axis must be x or y, got '" + axis_text + "'");
        const int axis = axis_text == "x" ? 0 : 1;
        const auto record = static_cast<std::size_t>(
            c.get_u64("probe_record", series.count() == 0 ? 0 : series.count() - 1));
        if (record >= series.count())
            throw validation_error("probe: record " + std::to_string(record) + " out of range (have " +
                                   std::to_string(series.count()) + ")");
        std::span<const double> ref_field;
        if (with_ref) {
            if (reference.count() != series.count())
                throw validation_error("probe: reference series does not align with fields");
            ref_field = reference.field(record);
        }
        out.probe = line_profile(series.field(record), s.grid, axis, c.get_double("probe_offset"), layer,
                                 s.bc.t_amb, ref_field);
        out.abscissa_name = axis == 0 ? "x_m" : "y_m";
    } else {
        throw validation_error("config: probe_kind must be point or line, got '" + kind + "'");
    }

    std::filesystem::create_directories(out_dir);
    write_text_file(out_dir / "probe.csv", probe_csv(out.probe, out.abscissa_name));
    out.artifacts = {"probe.csv"};

    Manifest m;
    m.stage = "probe";
    m.config_hash = c.hash();
    m.grid_hash = s.grid.hash();
    m.notes = {{"kind", kind}, {"layer", std::to_string(out.probe.layer)}};
    m.artifacts = out.artifacts;
    write_manifest(m, out_dir);
    return out;
}

// --- spectrum ------------------------------------------------------------------

struct SpectrumStage {
    Spectrum spectrum;
    std::size_t ns = 0;
    std::vector<std::string> artifacts;
};

inline SpectrumStage stage_spectrum(const Grid& grid, const RunConfig& c,
                                    const std::filesystem::path& out_dir) {
    std::vector<std::string> paths;
    if (c.has("snapshots"))
        paths = c.get_string_list("snapshots");
    else
        paths.push_back((out_dir / "fom_train.snap").string());
    const SnapshotSet pooled = load_pooled_snapshots(paths, grid);
    const auto eig = eigendecompose(correlation_matrix(pooled, grid));

    SpectrumStage out;
    out.spectrum = eig.spectrum;
    out.ns = pooled.count();

    std::filesystem::create_directories(out_dir);
    write_text_file(out_dir / "spectrum.csv", spectrum_csv(out.spectrum.lambda, out.spectrum.retained));
    out.artifacts = {"spectrum.csv"};

    Manifest m;
    m.stage = "spectrum";
    m.config_hash = c.hash();
    m.grid_hash = grid.hash();
    m.notes = {{"snapshots", std::to_string(out.ns)},
               {"retained", std::to_string(out.spectrum.retained)}};
    m.artifacts = out.artifacts;
    write_manifest(m, out_dir);
    return out;
}

} // namespace thermrom
