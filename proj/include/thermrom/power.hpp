#pragma once

// Per-unit power traces (CSV or synthesized waveforms) and their conversion
// to volumetric heat sources on the heating layers. Total deposited power is
// conserved exactly up to rounding: sum_c q_c V_c = sum_u P_u.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "thermrom/errors.hpp"
#include "thermrom/geometry.hpp"
#include "thermrom/util.hpp"

namespace thermrom {

struct PowerTrace {
    double dt_sample = 0.0;                   // seconds per step
    std::vector<std::string> unit_names;      // column order
    std::vector<std::size_t> floorplan_unit;  // column -> floorplan index, set by bind_to_floorplan
    std::size_t steps = 0;
    std::vector<double> values;               // row-major [steps x units], watts

    std::size_t units() const { return unit_names.size(); }
    double power(std::size_t step, std::size_t col) const { return values[step * units() + col]; }
    double total_power(std::size_t step) const {
        double s = 0.0;
        for (std::size_t c = 0; c < units(); ++c) s += power(step, c);
        return s;
    }
    double span_seconds() const { return static_cast<double>(steps) * dt_sample; }

    void validate() const {
        if (!(dt_sample > 0.0)) throw validation_error("trace: dt_s must be > 0");
        if (unit_names.empty()) throw validation_error("trace: no unit columns");
        if (steps == 0) throw validation_error("trace: no steps");
        if (values.size() != steps * units()) throw validation_error("trace: value matrix is ragged");
        for (double v : values)
            if (!(v >= 0.0) || !std::isfinite(v)) throw validation_error("trace: powers must be finite and >= 0");
    }
};

// Resolves trace columns against floorplan unit names. Required before the
// trace can drive a heat source.
inline void bind_to_floorplan(PowerTrace& trace, const Floorplan& fp) {
    trace.floorplan_unit.clear();
    trace.floorplan_unit.reserve(trace.units());
    for (const auto& name : trace.unit_names) trace.floorplan_unit.push_back(fp.find(name));
}

// Trace CSV: optional '#' comments, then "dt_s=<float>", then a header
// "step,<unit>,...", then rows with a sequential step ordinal and one power
// per unit.
inline PowerTrace parse_power_trace(std::istream& in) {
    PowerTrace trace;
    std::string line;
    std::size_t line_no = 0;
    int stage = 0;  // 0 = want dt, 1 = want header, 2 = rows
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const std::string where = "trace: line " + std::to_string(line_no);
        if (stage == 0) {
            if (t.rfind("dt_s=", 0) != 0) throw validation_error(where + ": expected 'dt_s=<seconds>'");
            trace.dt_sample = parse_double(t.substr(5), where);
            stage = 1;
            continue;
        }
        if (stage == 1) {
            auto fields = split(t, ',');
            if (fields.size() < 2 || trim(fields[0]) != "step")
                throw validation_error(where + ": expected header 'step,<unit>,...'");
            for (std::size_t f = 1; f < fields.size(); ++f) {
                const std::string name = trim(fields[f]);
                if (name.empty()) throw validation_error(where + ": empty unit name in header");
                trace.unit_names.push_back(name);
            }
            stage = 2;
            continue;
        }
        auto fields = split(t, ',');
        if (fields.size() != trace.units() + 1)
            throw validation_error(where + ": expected " + std::to_string(trace.units() + 1) + " fields, got " +
                                   std::to_string(fields.size()));
        const long long ordinal = parse_int(fields[0], where);
        if (ordinal != static_cast<long long>(trace.steps))
            throw validation_error(where + ": step index " + std::to_string(ordinal) + " out of order (expected " +
                                   std::to_string(trace.steps) + ")");
        for (std::size_t f = 1; f < fields.size(); ++f) trace.values.push_back(parse_double(fields[f], where));
        ++trace.steps;
    }
    trace.validate();
    return trace;
}

inline PowerTrace load_power_trace(const std::filesystem::path& path, const Floorplan& fp) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open trace: " + path.string());
    PowerTrace trace;
    try {
        trace = parse_power_trace(in);
    } catch (const validation_error& e) {
        throw validation_error(path.string() + ": " + e.what());
    }
    bind_to_floorplan(trace, fp);
    return trace;
}

inline void save_power_trace(const PowerTrace& trace, const std::filesystem::path& path) {
    std::ostringstream out;
    out << "dt_s=" << format_double(trace.dt_sample) << "\n";
    out << "step";
    for (const auto& name : trace.unit_names) out << ',' << name;
    out << "\n";
    for (std::size_t s = 0; s < trace.steps; ++s) {
        out << s;
        for (std::size_t c = 0; c < trace.units(); ++c) out << ',' << format_double(trace.power(s, c));
        out << "\n";
    }
    write_text_file(path, out.str());
}

struct LoadField {
    std::vector<double> q;  // W/m^3 per cell, nonzero only on heating layers
};

// Volumetric source at one trace step. Unit power is split over the covered
// grid columns by overlap fraction and spread uniformly through the heating
// layer thickness; the resulting cell value is the conservative cell average
// q_c = P_u * fraction / (dx dy t_heat).
inline void power_density(const PowerTrace& trace, const OverlapMap& overlap, const Grid& grid, std::size_t step,
                          LoadField& out) {
    if (step >= trace.steps) throw validation_error("power_density: step index out of range");
    if (trace.floorplan_unit.size() != trace.units())
        throw validation_error("power_density: trace is not bound to a floorplan");
    out.q.assign(grid.cell_count(), 0.0);
    const double column_volume = grid.dx() * grid.dy() * grid.spec().t_heat;
    for (std::size_t col = 0; col < trace.units(); ++col) {
        const double p = trace.power(step, col);
        if (p == 0.0) continue;
        const std::size_t u = trace.floorplan_unit[col];
        if (u >= overlap.unit_columns.size())
            throw validation_error("power_density: overlap map does not cover the trace's floorplan");
        for (const auto& cell : overlap.unit_columns[u]) {
            const double dens = p * cell.fraction / column_volume;
            for (int k = grid.nz_sub(); k < grid.nz(); ++k)
                out.q[grid.index(cell.i, cell.j, k)] += dens;
        }
    }
}

inline LoadField power_density(const PowerTrace& trace, const OverlapMap& overlap, const Grid& grid,
                               std::size_t step) {
    LoadField f;
    power_density(trace, overlap, grid, step, f);
    return f;
}

// Synthetic waveforms, one per unit:
//   const:p=<W>
//   square:amp=,period=,duty=,phase=,base=     (period/phase in steps)
//   ramp:from=,to=                             (linear over the trace)
//   rand:lo=,hi=,hold=                         (seeded piecewise-constant)
struct WaveformSpec {
    enum class Kind { constant, square, ramp, random_hold };
    Kind kind = Kind::constant;
    double p = 0.0;
    double amp = 1.0, base = 0.0, period = 2.0, duty = 0.5, phase = 0.0;
    double from = 0.0, to = 1.0;
    double lo = 0.0, hi = 1.0;
    long long hold = 1;

    static WaveformSpec parse(const std::string& text) {
        const std::string t = trim(text);
        const auto colon = t.find(':');
        const std::string head = colon == std::string::npos ? t : trim(t.substr(0, colon));
        WaveformSpec w;
        if (head == "const") w.kind = Kind::constant;
        else if (head == "square") w.kind = Kind::square;
        else if (head == "ramp") w.kind = Kind::ramp;
        else if (head == "rand") w.kind = Kind::random_hold;
        else throw validation_error("waveform: unknown kind '" + head + "'");
        if (colon != std::string::npos) {
            for (const auto& kv : split(t.substr(colon + 1), ',')) {
                const auto eq = kv.find('=');
                if (eq == std::string::npos) throw validation_error("waveform: expected key=value in '" + kv + "'");
                const std::string key = trim(kv.substr(0, eq));
                const double val = parse_double(kv.substr(eq + 1), "waveform: " + key);
                if (key == "p") w.p = val;
                else if (key == "amp") w.amp = val;
                else if (key == "base") w.base = val;
                else if (key == "period") w.period = val;
                else if (key == "duty") w.duty = val;
                else if (key == "phase") w.phase = val;
                else if (key == "from") w.from = val;
                else if (key == "to") w.to = val;
                else if (key == "lo") w.lo = val;
                else if (key == "hi") w.hi = val;
                else if (key == "hold") w.hold = static_cast<long long>(val);
                else throw validation_error("waveform: unknown parameter '" + key + "'");
            }
        }
        if (w.kind == Kind::square && !(w.period > 0.0)) throw validation_error("waveform: period must be > 0");
        if (w.kind == Kind::square && (w.duty < 0.0 || w.duty > 1.0))
            throw validation_error("waveform: duty must lie in [0,1]");
        if (w.kind == Kind::random_hold && w.hold < 1) throw validation_error("waveform: hold must be >= 1");
        if (w.kind == Kind::random_hold && w.hi < w.lo) throw validation_error("waveform: hi must be >= lo");
        return w;
    }

    // stream distinguishes independently drawn traces (e.g. train vs eval)
    // derived from one seed; unit is the waveform's column index.
    double evaluate(std::size_t step, std::size_t steps, std::uint64_t seed, std::uint64_t stream,
                    std::size_t unit) const {
        switch (kind) {
            case Kind::constant:
                return p;
            case Kind::square: {
                const double pos = std::fmod(static_cast<double>(step) + phase, period);
                return base + ((pos < duty * period) ? amp : 0.0);
            }
            case Kind::ramp: {
                if (steps <= 1) return from;
                const double s = static_cast<double>(step) / static_cast<double>(steps - 1);
                return from + (to - from) * s;
            }
            case Kind::random_hold: {
                const std::uint64_t segment = static_cast<std::uint64_t>(step) / static_cast<std::uint64_t>(hold);
                std::uint64_t x = seed;
                x = splitmix64(x ^ (0x9E3779B97F4A7C15ULL * (stream + 1)));
                x = splitmix64(x ^ (0xC2B2AE3D27D4EB4FULL * (static_cast<std::uint64_t>(unit) + 1)));
                x = splitmix64(x ^ segment);
                return lo + (hi - lo) * unit_double(x);
            }
        }
        return 0.0;
    }
};

struct SynthSpec {
    std::vector<std::string> unit_names;
    std::vector<WaveformSpec> waveforms;  // one per unit
    std::size_t steps = 0;
    double dt = 0.0;
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;
};

// Deterministic function of (spec, seed, stream); the trace is identical no
// matter where or in what order it is generated.
inline PowerTrace synth_trace(const SynthSpec& spec) {
    if (spec.unit_names.size() != spec.waveforms.size())
        throw validation_error("synth_trace: one waveform per unit required");
    PowerTrace trace;
    trace.dt_sample = spec.dt;
    trace.unit_names = spec.unit_names;
    trace.steps = spec.steps;
    trace.values.resize(spec.steps * spec.unit_names.size());
    for (std::size_t s = 0; s < spec.steps; ++s)
        for (std::size_t u = 0; u < spec.unit_names.size(); ++u)
            trace.values[s * spec.unit_names.size() + u] =
                spec.waveforms[u].evaluate(s, spec.steps, spec.seed, spec.stream, u);
    trace.validate();
    return trace;
}

} // namespace thermrom
