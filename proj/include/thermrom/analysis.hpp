#pragma once

// Accuracy and speed metrics: volume-weighted least-squares error between a
// reference and a reconstructed series over a region,
//   Err_Num = sqrt( sum_t int_region (T_ref - T_rom)^2 dV
//                 / sum_t int_region (T_ref - T_amb)^2 dV ),
// probe extraction at physical coordinates, and the speedup table. Errors are
// identical whether fields carry T or theta, since the ambient shift cancels.

#include <cmath>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "thermrom/errors.hpp"
#include "thermrom/fom.hpp"
#include "thermrom/geometry.hpp"
#include "thermrom/util.hpp"

namespace thermrom {

struct ErrorReport {
    double err_num = 0.0;
    std::vector<double> per_step;      // sqrt(num_t / den_t) per instant
    std::vector<double> numerator_sq;  // int (ref - test)^2 dV per instant
    std::vector<double> denominator_sq;
    std::size_t modes = 0;
};

// Streaming accumulator so a sweep over many mode counts never needs all
// reconstructed fields in memory at once. Inputs are full-grid theta fields;
// the region restriction happens here.
class LsErrorAccumulator {
public:
    LsErrorAccumulator(const Region& region, const Grid& grid)
        : grid_(&grid), cells_(region_cells(region, grid)) {
        if (cells_.empty()) throw validation_error("ls_error: empty region");
        volumes_.resize(cells_.size());
        for (std::size_t r = 0; r < cells_.size(); ++r) volumes_[r] = grid.cell_volume(cells_[r]);
    }

    void add_step(std::span<const double> reference_theta, std::span<const double> test_theta) {
        if (reference_theta.size() != grid_->cell_count() || test_theta.size() != grid_->cell_count())
            throw validation_error("ls_error: field length does not match grid");
        double num = 0.0, den = 0.0;
        for (std::size_t base = 0; base < cells_.size(); base += detail::kDotBlock) {
            const std::size_t end = std::min(cells_.size(), base + detail::kDotBlock);
            double pn = 0.0, pd = 0.0;
            for (std::size_t r = base; r < end; ++r) {
                const double ref = reference_theta[cells_[r]];
                const double diff = ref - test_theta[cells_[r]];
                pn += diff * diff * volumes_[r];
                pd += ref * ref * volumes_[r];
            }
            num += pn;
            den += pd;
        }
        numerator_.push_back(num);
        denominator_.push_back(den);
    }

    // Restricted variant: test values given only on the region's cells, in
    // region order. Used when reconstruction already produced a region field.
    void add_step_region(std::span<const double> reference_theta, std::span<const double> test_region) {
        if (reference_theta.size() != grid_->cell_count())
            throw validation_error("ls_error: field length does not match grid");
        if (test_region.size() != cells_.size())
            throw validation_error("ls_error: region field length does not match region");
        double num = 0.0, den = 0.0;
        for (std::size_t base = 0; base < cells_.size(); base += detail::kDotBlock) {
            const std::size_t end = std::min(cells_.size(), base + detail::kDotBlock);
            double pn = 0.0, pd = 0.0;
            for (std::size_t r = base; r < end; ++r) {
                const double ref = reference_theta[cells_[r]];
                const double diff = ref - test_region[r];
                pn += diff * diff * volumes_[r];
                pd += ref * ref * volumes_[r];
            }
            num += pn;
            den += pd;
        }
        numerator_.push_back(num);
        denominator_.push_back(den);
    }

    ErrorReport finish(std::size_t modes = 0) const {
        ErrorReport report;
        report.modes = modes;
        report.numerator_sq = numerator_;
        report.denominator_sq = denominator_;
        report.per_step.resize(numerator_.size());
        double num = 0.0, den = 0.0;
        for (std::size_t t = 0; t < numerator_.size(); ++t) {
            num += numerator_[t];
            den += denominator_[t];
            report.per_step[t] =
                denominator_[t] > 0.0
                    ? std::sqrt(numerator_[t] / denominator_[t])
                    : (numerator_[t] > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
        }
        if (!(den > 0.0))
            throw numeric_error("ls_error: reference series has zero energy over the region");
        report.err_num = std::sqrt(num / den);
        return report;
    }

    std::size_t steps() const { return numerator_.size(); }
    const std::vector<std::size_t>& cells() const { return cells_; }

private:
    const Grid* grid_;
    std::vector<std::size_t> cells_;
    std::vector<double> volumes_;
    std::vector<double> numerator_;
    std::vector<double> denominator_;
};

// Batch form over two aligned snapshot sets of full-grid theta fields.
inline ErrorReport ls_error(const SnapshotSet& reference, const SnapshotSet& test, const Region& region,
                            const Grid& grid, std::size_t modes = 0) {
    if (reference.count() != test.count()) throw validation_error("ls_error: series lengths differ");
    if (reference.n_cells != grid.cell_count() || test.n_cells != grid.cell_count())
        throw validation_error("ls_error: snapshot set does not match grid");
    LsErrorAccumulator acc(region, grid);
    for (std::size_t t = 0; t < reference.count(); ++t) acc.add_step(reference.field(t), test.field(t));
    return acc.finish(modes);
}

// Nearest cell center along one axis; a coordinate exactly on an interior
// face resolves to the lower cell. Tolerates roundoff at the domain edges.
inline int nearest_cell_index(double coord, double cell_size, int count, double extent, const char* axis) {
    const double eps = 1e-9 * extent;
    if (coord < -eps || coord > extent + eps)
        throw validation_error(std::string("probe: ") + axis + " coordinate outside the chip");
    int i = static_cast<int>(std::floor(coord / cell_size));
    if (i > 0 && coord <= i * cell_size) --i;  // on-face ties go down
    return std::clamp(i, 0, count - 1);
}

struct ProbeResult {
    enum class Kind { point, line };
    Kind kind = Kind::point;
    int i = -1, j = -1, layer = -1;
    std::vector<double> abscissa;        // time [s] or line coordinate [m]
    std::vector<double> value;           // probed temperature [K]
    std::vector<double> reference;       // empty without a reference series
    std::vector<double> error;           // value - reference
    std::vector<double> percent_error;   // 100 * error / (reference - t_amb)
};

// Time evolution of T at one (x, y, layer) location. Fields hold theta; the
// ambient is added back for reporting. Percent error is relative to the
// reference rise above ambient.
inline ProbeResult point_evolution(const SnapshotSet& fields, const Grid& grid, double x, double y, int layer,
                                   double t_amb, const SnapshotSet* reference = nullptr) {
    if (layer < 0 || layer >= grid.nz()) throw validation_error("probe: layer index out of range");
    if (fields.n_cells != grid.cell_count()) throw validation_error("probe: fields do not match grid");
    if (reference && (reference->n_cells != fields.n_cells || reference->count() != fields.count()))
        throw validation_error("probe: reference series does not align with fields");

    ProbeResult probe;
    probe.i = nearest_cell_index(x, grid.dx(), grid.nx(), grid.spec().len_x, "x");
    probe.j = nearest_cell_index(y, grid.dy(), grid.ny(), grid.spec().len_y, "y");
    probe.layer = layer;
    const std::size_t cell = grid.index(probe.i, probe.j, layer);

    probe.abscissa = fields.times;
    probe.value.resize(fields.count());
    for (std::size_t t = 0; t < fields.count(); ++t) probe.value[t] = t_amb + fields.field(t)[cell];
    if (reference) {
        probe.reference.resize(fields.count());
        probe.error.resize(fields.count());
        probe.percent_error.resize(fields.count());
        for (std::size_t t = 0; t < fields.count(); ++t) {
            const double ref_theta = reference->field(t)[cell];
            probe.reference[t] = t_amb + ref_theta;
            probe.error[t] = probe.value[t] - probe.reference[t];
            probe.percent_error[t] = ref_theta != 0.0
                                         ? 100.0 * probe.error[t] / ref_theta
                                         : (probe.error[t] == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
        }
    }
    return probe;
}

// T along a grid line through one layer: axis 0 varies x at fixed y = offset,
// axis 1 varies y at fixed x = offset.
inline ProbeResult line_profile(std::span<const double> field_theta, const Grid& grid, int axis, double offset,
                                int layer, double t_amb, std::span<const double> reference_theta = {}) {
    if (layer < 0 || layer >= grid.nz()) throw validation_error("probe: layer index out of range");
    if (axis != 0 && axis != 1) throw validation_error("probe: axis must be 0 (x) or 1 (y)");
    if (field_theta.size() != grid.cell_count()) throw validation_error("probe: field does not match grid");
    if (!reference_theta.empty() && reference_theta.size() != grid.cell_count())
        throw validation_error("probe: reference field does not match grid");

    ProbeResult probe;
    probe.kind = ProbeResult::Kind::line;
    probe.layer = layer;
    const int count = axis == 0 ? grid.nx() : grid.ny();
    if (axis == 0)
        probe.j = nearest_cell_index(offset, grid.dy(), grid.ny(), grid.spec().len_y, "y");
    else
        probe.i = nearest_cell_index(offset, grid.dx(), grid.nx(), grid.spec().len_x, "x");

    probe.abscissa.resize(static_cast<std::size_t>(count));
    probe.value.resize(static_cast<std::size_t>(count));
    if (!reference_theta.empty()) {
        probe.reference.resize(static_cast<std::size_t>(count));
        probe.error.resize(static_cast<std::size_t>(count));
        probe.percent_error.resize(static_cast<std::size_t>(count));
    }
    for (int s = 0; s < count; ++s) {
        const std::size_t cell =
            axis == 0 ? grid.index(s, probe.j, layer) : grid.index(probe.i, s, layer);
        probe.abscissa[static_cast<std::size_t>(s)] = axis == 0 ? grid.x_center(s) : grid.y_center(s);
        probe.value[static_cast<std::size_t>(s)] = t_amb + field_theta[cell];
        if (!reference_theta.empty()) {
            const double ref_theta = reference_theta[cell];
            const double err = field_theta[cell] - ref_theta;
            probe.reference[static_cast<std::size_t>(s)] = t_amb + ref_theta;
            probe.error[static_cast<std::size_t>(s)] = err;
            probe.percent_error[static_cast<std::size_t>(s)] =
                ref_theta != 0.0 ? 100.0 * err / ref_theta
                                 : (err == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
        }
    }
    return probe;
}

inline std::string probe_csv(const ProbeResult& probe, const std::string& abscissa_name) {
    std::ostringstream out;
    out << abscissa_name << ",value_K";
    const bool with_ref = !probe.reference.empty();
    if (with_ref) out << ",ref_K,err_K,pct_err_vs_rise";
    out << "\n";
    for (std::size_t s = 0; s < probe.abscissa.size(); ++s) {
        out << format_double(probe.abscissa[s]) << ',' << format_double(probe.value[s]);
        if (with_ref)
            out << ',' << format_double(probe.reference[s]) << ',' << format_double(probe.error[s]) << ','
                << format_double(probe.percent_error[s]);
        out << "\n";
    }
    return out.str();
}

// One row of the accuracy sweep (errors.csv).
struct SweepRow {
    std::size_t modes = 0;
    double err_theo = 0.0;
    double err_num_chip = 0.0;
    double err_num_heat = 0.0;
    double eval_window_s = 0.0;
};

inline std::string sweep_table_csv(std::span<const SweepRow> rows) {
    std::ostringstream out;
    out << "M,err_theo,err_num_chip,err_num_heat,eval_window_s\n";
    for (const auto& row : rows)
        out << row.modes << ',' << format_double(row.err_theo) << ',' << format_double(row.err_num_chip) << ','
            << format_double(row.err_num_heat) << ',' << format_double(row.eval_window_s) << "\n";
    return out.str();
}

// One row of the timing table (speedup.csv). Stage split: ODEs is coefficient
// integration alone, Post1 adds heating-layer reconstruction, Post2 adds
// whole-chip reconstruction. Speedups divide FOM wall time by ODEs + PostX.
struct TimingRow {
    std::size_t modes = 0;
    double odes_s = 0.0;
    double post1_s = 0.0;
    double post2_s = 0.0;
    double fom_s = 0.0;
    std::size_t n_cells = 0;

    double speedup_heat() const { return fom_s / (odes_s + post1_s); }
    double speedup_chip() const { return fom_s / (odes_s + post2_s); }
    double dof_reduction() const {
        return modes == 0 ? 0.0 : static_cast<double>(n_cells) / static_cast<double>(modes);
    }
};

inline std::string timing_table_csv(std::span<const TimingRow> rows) {
    std::ostringstream out;
    out << "M,odes_s,post1_s,post2_s,fom_s,speedup_heat,speedup_chip,dof_reduction\n";
    for (const auto& row : rows)
        out << row.modes << ',' << format_double(row.odes_s) << ',' << format_double(row.post1_s) << ','
            << format_double(row.post2_s) << ',' << format_double(row.fom_s) << ','
            << format_double(row.speedup_heat()) << ',' << format_double(row.speedup_chip()) << ','
            << format_double(row.dof_reduction()) << "\n";
    return out.str();
}

} // namespace thermrom
