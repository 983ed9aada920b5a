#pragma once

// Chip discretization: structured cell-centered grid over a two-layer stack
// (substrate below, heating layer on top), per-cell material fields, the
// floorplan of functional units and its overlap with grid columns, and the
// volume-weighted inner product every other module builds on.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "thermrom/errors.hpp"
#include "thermrom/parallel.hpp"
#include "thermrom/util.hpp"

namespace thermrom {

// Silicon-like defaults; every value is overridable in the run configuration.
inline constexpr double kDefaultConductivity = 149.0;   // W/(m K)
inline constexpr double kDefaultHeatCapacity = 1.66e6;  // J/(m^3 K), volumetric
inline constexpr double kDefaultHtc = 2.0e4;            // W/(m^2 K), bottom face
inline constexpr double kDefaultAmbient = 318.15;       // K

struct GridSpec {
    int nx = 0;
    int ny = 0;
    int nz_heat = 0;
    int nz_sub = 0;
    double len_x = 0.0;  // chip extent [m]
    double len_y = 0.0;
    double t_heat = 0.0; // layer thickness [m]
    double t_sub = 0.0;

    int nz() const { return nz_heat + nz_sub; }

    void validate() const {
        if (nx < 1 || ny < 1 || nz_heat < 1 || nz_sub < 1)
            throw validation_error("grid: cell counts must all be >= 1");
        if (!(len_x > 0.0) || !(len_y > 0.0) || !(t_heat > 0.0) || !(t_sub > 0.0))
            throw validation_error("grid: extents and thicknesses must all be > 0");
    }
};

// Layer k = 0 sits on the convectively cooled bottom; heating layers are
// k in [nz_sub, nz). Linear cell index: (k*ny + j)*nx + i.
class Grid {
public:
    explicit Grid(const GridSpec& spec) : spec_(spec) {
        spec.validate();
        dx_ = spec.len_x / spec.nx;
        dy_ = spec.len_y / spec.ny;
        dz_.resize(static_cast<std::size_t>(spec.nz()));
        for (int k = 0; k < spec.nz_sub; ++k) dz_[static_cast<std::size_t>(k)] = spec.t_sub / spec.nz_sub;
        for (int k = spec.nz_sub; k < spec.nz(); ++k) dz_[static_cast<std::size_t>(k)] = spec.t_heat / spec.nz_heat;
    }

    const GridSpec& spec() const { return spec_; }
    int nx() const { return spec_.nx; }
    int ny() const { return spec_.ny; }
    int nz() const { return spec_.nz(); }
    int nz_sub() const { return spec_.nz_sub; }
    int nz_heat() const { return spec_.nz_heat; }
    std::size_t cell_count() const {
        return static_cast<std::size_t>(nx()) * static_cast<std::size_t>(ny()) * static_cast<std::size_t>(nz());
    }
    std::size_t layer_cells() const { return static_cast<std::size_t>(nx()) * static_cast<std::size_t>(ny()); }

    double dx() const { return dx_; }
    double dy() const { return dy_; }
    double dz(int k) const { return dz_[static_cast<std::size_t>(k)]; }

    bool heating_layer(int k) const { return k >= spec_.nz_sub; }

    std::size_t index(int i, int j, int k) const {
        return (static_cast<std::size_t>(k) * static_cast<std::size_t>(ny()) + static_cast<std::size_t>(j)) *
                   static_cast<std::size_t>(nx()) +
               static_cast<std::size_t>(i);
    }
    int layer_of(std::size_t cell) const { return static_cast<int>(cell / layer_cells()); }

    double layer_volume(int k) const { return dx_ * dy_ * dz(k); }
    double cell_volume(std::size_t cell) const { return layer_volume(layer_of(cell)); }
    double bottom_face_area() const { return dx_ * dy_; }
    double total_volume() const { return spec_.len_x * spec_.len_y * (spec_.t_heat + spec_.t_sub); }

    double x_center(int i) const { return (i + 0.5) * dx_; }
    double y_center(int j) const { return (j + 0.5) * dy_; }
    double z_center(int k) const {
        double z = 0.0;
        for (int q = 0; q < k; ++q) z += dz(q);
        return z + 0.5 * dz(k);
    }

    // Fingerprint of the full discretization; stored in every binary artifact
    // so stages refuse to mix fields from different meshes.
    std::uint64_t hash() const {
        Fnv1a h;
        h.update_string("grid-v1");
        h.update_u64(static_cast<std::uint64_t>(spec_.nx));
        h.update_u64(static_cast<std::uint64_t>(spec_.ny));
        h.update_u64(static_cast<std::uint64_t>(spec_.nz_heat));
        h.update_u64(static_cast<std::uint64_t>(spec_.nz_sub));
        h.update_f64(spec_.len_x);
        h.update_f64(spec_.len_y);
        h.update_f64(spec_.t_heat);
        h.update_f64(spec_.t_sub);
        return h.digest();
    }

private:
    GridSpec spec_;
    double dx_ = 0.0;
    double dy_ = 0.0;
    std::vector<double> dz_;
};

// Volume-weighted L2 inner product sum_c u_c v_c V_c. Cell volume is constant
// within a z-layer, so the weight factors out per layer slab; each slab uses
// the fixed-block dot product, keeping the value thread-count independent.
inline double inner_product(std::span<const double> u, std::span<const double> v, const Grid& grid) {
    if (u.size() != grid.cell_count() || v.size() != grid.cell_count())
        throw validation_error("inner_product: field length does not match grid");
    const std::size_t slab = grid.layer_cells();
    double acc = 0.0;
    for (int k = 0; k < grid.nz(); ++k) {
        const std::size_t off = static_cast<std::size_t>(k) * slab;
        acc += grid.layer_volume(k) * blocked_dot(u.data() + off, v.data() + off, slab);
    }
    return acc;
}

inline double norm(std::span<const double> u, const Grid& grid) {
    return std::sqrt(inner_product(u, u, grid));
}

struct MaterialField {
    std::vector<double> conductivity;   // W/(m K)
    std::vector<double> heat_capacity;  // J/(m^3 K)

    static MaterialField uniform(const Grid& grid, double k, double rhoc) {
        MaterialField m;
        m.conductivity.assign(grid.cell_count(), k);
        m.heat_capacity.assign(grid.cell_count(), rhoc);
        m.validate(grid);
        return m;
    }

    static MaterialField per_layer(const Grid& grid, double k_heat, double k_sub, double rhoc_heat,
                                   double rhoc_sub) {
        MaterialField m;
        m.conductivity.resize(grid.cell_count());
        m.heat_capacity.resize(grid.cell_count());
        const std::size_t slab = grid.layer_cells();
        for (int k = 0; k < grid.nz(); ++k) {
            const bool heat = grid.heating_layer(k);
            const std::size_t off = static_cast<std::size_t>(k) * slab;
            std::fill_n(m.conductivity.begin() + static_cast<std::ptrdiff_t>(off), slab, heat ? k_heat : k_sub);
            std::fill_n(m.heat_capacity.begin() + static_cast<std::ptrdiff_t>(off), slab,
                        heat ? rhoc_heat : rhoc_sub);
        }
        m.validate(grid);
        return m;
    }

    void validate(const Grid& grid) const {
        if (conductivity.size() != grid.cell_count() || heat_capacity.size() != grid.cell_count())
            throw validation_error("material: field length does not match grid");
        for (double k : conductivity)
            if (!(k > 0.0)) throw validation_error("material: conductivity must be > 0 everywhere");
        for (double c : heat_capacity)
            if (!(c > 0.0)) throw validation_error("material: heat capacity must be > 0 everywhere");
    }
};

struct BoundarySpec {
    double h = kDefaultHtc;        // bottom-face convection coefficient
    double t_amb = kDefaultAmbient;

    void validate() const {
        if (!(h >= 0.0) || !std::isfinite(h)) throw validation_error("boundary: h must be finite and >= 0");
        if (!std::isfinite(t_amb)) throw validation_error("boundary: ambient temperature must be finite");
    }
};

struct FunctionalUnit {
    std::string name;
    double x0 = 0.0;  // meters
    double y0 = 0.0;
    double width = 0.0;
    double height = 0.0;
};

struct Floorplan {
    std::vector<FunctionalUnit> units;

    std::size_t find(const std::string& name) const {
        for (std::size_t u = 0; u < units.size(); ++u)
            if (units[u].name == name) return u;
        throw validation_error("floorplan: unknown unit name '" + name + "'");
    }

    void validate(double len_x, double len_y) const {
        if (units.empty()) throw validation_error("floorplan: no units");
        const double eps = 1e-9 * std::max(len_x, len_y);
        for (const auto& u : units) {
            if (u.name.empty()) throw validation_error("floorplan: empty unit name");
            if (!(u.width > 0.0) || !(u.height > 0.0))
                throw validation_error("floorplan: unit '" + u.name + "' must have positive width and height");
            if (u.x0 < -eps || u.y0 < -eps || u.x0 + u.width > len_x + eps || u.y0 + u.height > len_y + eps)
                throw validation_error("floorplan: unit '" + u.name + "' extends outside the chip");
        }
        for (std::size_t a = 0; a < units.size(); ++a)
            for (std::size_t b = a + 1; b < units.size(); ++b)
                if (units[a].name == units[b].name)
                    throw validation_error("floorplan: duplicate unit name '" + units[a].name + "'");
    }
};

// CSV floorplan: '#' comments, header "name,x0_mm,y0_mm,width_mm,height_mm",
// coordinates in millimeters with the origin at the chip corner.
inline Floorplan parse_floorplan(std::istream& in, double len_x, double len_y) {
    Floorplan fp;
    std::string line;
    bool saw_header = false;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (!saw_header) {
            if (t != "name,x0_mm,y0_mm,width_mm,height_mm")
                throw validation_error("floorplan: line " + std::to_string(line_no) +
                                       ": expected header 'name,x0_mm,y0_mm,width_mm,height_mm'");
            saw_header = true;
            continue;
        }
        const auto fields = split(t, ',');
        if (fields.size() != 5)
            throw validation_error("floorplan: line " + std::to_string(line_no) + ": expected 5 fields, got " +
                                   std::to_string(fields.size()));
        FunctionalUnit u;
        u.name = trim(fields[0]);
        const std::string where = "floorplan: line " + std::to_string(line_no);
        u.x0 = 1e-3 * parse_double(fields[1], where);
        u.y0 = 1e-3 * parse_double(fields[2], where);
        u.width = 1e-3 * parse_double(fields[3], where);
        u.height = 1e-3 * parse_double(fields[4], where);
        fp.units.push_back(std::move(u));
    }
    if (!saw_header) throw validation_error("floorplan: missing header row");
    fp.validate(len_x, len_y);
    return fp;
}

inline Floorplan load_floorplan(const std::filesystem::path& path, double len_x, double len_y) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open floorplan: " + path.string());
    try {
        return parse_floorplan(in, len_x, len_y);
    } catch (const validation_error& e) {
        throw validation_error(path.string() + ": " + e.what());
    }
}

struct ColumnOverlap {
    int i = 0;
    int j = 0;
    double fraction = 0.0;  // overlap area / unit area
};

struct OverlapMap {
    std::vector<std::vector<ColumnOverlap>> unit_columns;  // indexed like Floorplan::units
};

// Exact rectangle intersection of each unit footprint with each grid column.
// Per unit, fractions sum to 1 because the floorplan is validated to lie
// inside the chip.
inline OverlapMap unit_cell_overlap(const Floorplan& fp, const Grid& grid) {
    OverlapMap map;
    map.unit_columns.resize(fp.units.size());
    const double dx = grid.dx(), dy = grid.dy();
    for (std::size_t u = 0; u < fp.units.size(); ++u) {
        const auto& unit = fp.units[u];
        const double area = unit.width * unit.height;
        int i0 = std::clamp(static_cast<int>(std::floor(unit.x0 / dx)), 0, grid.nx() - 1);
        int i1 = std::clamp(static_cast<int>(std::ceil((unit.x0 + unit.width) / dx)), 1, grid.nx());
        int j0 = std::clamp(static_cast<int>(std::floor(unit.y0 / dy)), 0, grid.ny() - 1);
        int j1 = std::clamp(static_cast<int>(std::ceil((unit.y0 + unit.height) / dy)), 1, grid.ny());
        for (int j = j0; j < j1; ++j) {
            const double oy = std::min(unit.y0 + unit.height, (j + 1) * dy) - std::max(unit.y0, j * dy);
            if (!(oy > 0.0)) continue;
            for (int i = i0; i < i1; ++i) {
                const double ox = std::min(unit.x0 + unit.width, (i + 1) * dx) - std::max(unit.x0, i * dx);
                if (!(ox > 0.0)) continue;
                map.unit_columns[u].push_back({i, j, ox * oy / area});
            }
        }
        if (map.unit_columns[u].empty())
            throw validation_error("floorplan: unit '" + unit.name + "' overlaps no grid column");
    }
    return map;
}

// Named cell subsets used for reconstruction and error norms.
struct Region {
    enum class Kind { chip, heating, layer, cells };
    Kind kind = Kind::chip;
    int layer = 0;                   // for Kind::layer
    std::vector<std::size_t> cells;  // for Kind::cells, ascending

    static Region whole_chip() { return Region{}; }
    static Region heating_layers() { return Region{Kind::heating, 0, {}}; }
    static Region single_layer(int k) { return Region{Kind::layer, k, {}}; }
    static Region subset(std::vector<std::size_t> cells) { return Region{Kind::cells, 0, std::move(cells)}; }
};

// Ascending linear indices of the region's cells.
inline std::vector<std::size_t> region_cells(const Region& region, const Grid& grid) {
    std::vector<std::size_t> cells;
    switch (region.kind) {
        case Region::Kind::chip: {
            cells.resize(grid.cell_count());
            for (std::size_t c = 0; c < cells.size(); ++c) cells[c] = c;
            break;
        }
        case Region::Kind::heating: {
            const std::size_t begin = static_cast<std::size_t>(grid.nz_sub()) * grid.layer_cells();
            cells.resize(grid.cell_count() - begin);
            for (std::size_t c = 0; c < cells.size(); ++c) cells[c] = begin + c;
            break;
        }
        case Region::Kind::layer: {
            if (region.layer < 0 || region.layer >= grid.nz())
                throw validation_error("region: layer index out of range");
            const std::size_t begin = static_cast<std::size_t>(region.layer) * grid.layer_cells();
            cells.resize(grid.layer_cells());
            for (std::size_t c = 0; c < cells.size(); ++c) cells[c] = begin + c;
            break;
        }
        case Region::Kind::cells: {
            cells = region.cells;
            for (std::size_t c = 0; c < cells.size(); ++c) {
                if (cells[c] >= grid.cell_count()) throw validation_error("region: cell index out of range");
                if (c > 0 && cells[c] <= cells[c - 1])
                    throw validation_error("region: cell list must be strictly ascending");
            }
            break;
        }
    }
    return cells;
}

} // namespace thermrom
