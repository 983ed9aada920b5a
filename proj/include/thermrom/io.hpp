#pragma once

// Binary artifact containers. All three kinds share one header:
//   magic "PODT" | u32 version | u32 kind | u64 grid_hash
// followed by kind-specific payload; integers and doubles are little-endian.
// The grid hash lets downstream stages refuse fields from a different mesh.
// Writers go through a temp file plus rename, so a crash never leaves a
// half-written artifact behind.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "thermrom/errors.hpp"
#include "thermrom/fom.hpp"
#include "thermrom/geometry.hpp"
#include "thermrom/pod.hpp"
#include "thermrom/util.hpp"

namespace thermrom {

inline constexpr char kContainerMagic[4] = {'P', 'O', 'D', 'T'};
inline constexpr std::uint32_t kContainerVersion = 1;

enum class ContainerKind : std::uint32_t {
    snapshot = 1,
    basis = 2,
    field = 3,
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }
inline void put_f64_array(std::string& out, std::span<const double> a) {
    if constexpr (std::endian::native == std::endian::little) {
        out.append(reinterpret_cast<const char*>(a.data()), a.size() * sizeof(double));
    } else {
        for (double v : a) put_f64(out, v);
    }
}

class Cursor {
public:
    Cursor(const std::string& bytes, const std::string& what) : bytes_(bytes), what_(what) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    void f64_array(std::span<double> out) {
        need(out.size() * sizeof(double));
        if constexpr (std::endian::native == std::endian::little) {
            std::memcpy(out.data(), bytes_.data() + pos_, out.size() * sizeof(double));
            pos_ += out.size() * sizeof(double);
        } else {
            for (auto& v : out) v = f64();
        }
    }
    void expect_magic() {
        need(4);
        if (std::memcmp(bytes_.data() + pos_, kContainerMagic, 4) != 0)
            throw io_error(what_ + ": bad magic (not a PODT container)");
        pos_ += 4;
    }
    void expect_end() const {
        if (pos_ != bytes_.size()) throw io_error(what_ + ": trailing bytes after payload");
    }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw io_error(what_ + ": truncated file");
    }
    const std::string& bytes_;
    std::string what_;
    std::size_t pos_ = 0;
};

inline std::string header(ContainerKind kind, std::uint64_t grid_hash) {
    std::string out;
    out.append(kContainerMagic, 4);
    put_u32(out, kContainerVersion);
    put_u32(out, static_cast<std::uint32_t>(kind));
    put_u64(out, grid_hash);
    return out;
}

inline ContainerKind read_header(Cursor& c, std::uint64_t& grid_hash, const std::string& what) {
    c.expect_magic();
    const std::uint32_t version = c.u32();
    if (version != kContainerVersion)
        throw io_error(what + ": unsupported container version " + std::to_string(version));
    const std::uint32_t kind = c.u32();
    if (kind < 1 || kind > 3) throw io_error(what + ": unknown container kind " + std::to_string(kind));
    grid_hash = c.u64();
    return static_cast<ContainerKind>(kind);
}

} // namespace detail

inline ContainerKind peek_container_kind(const std::filesystem::path& path) {
    const std::string bytes = read_text_file(path);
    detail::Cursor c(bytes, path.string());
    std::uint64_t hash = 0;
    return detail::read_header(c, hash, path.string());
}

// --- snapshot container: u64 n_cells | u64 ns | f64 times[ns] | f64 data ---

inline void save_snapshots(const SnapshotSet& snaps, const std::filesystem::path& path) {
    std::string out = detail::header(ContainerKind::snapshot, snaps.grid_hash);
    detail::put_u64(out, snaps.n_cells);
    detail::put_u64(out, snaps.count());
    detail::put_f64_array(out, std::span<const double>(snaps.times));
    detail::put_f64_array(out, std::span<const double>(snaps.data));
    write_text_file(path, out);
}

inline SnapshotSet load_snapshots(const std::filesystem::path& path) {
    const std::string bytes = read_text_file(path);
    detail::Cursor c(bytes, path.string());
    SnapshotSet snaps;
    const ContainerKind kind = detail::read_header(c, snaps.grid_hash, path.string());
    if (kind != ContainerKind::snapshot) throw io_error(path.string() + ": not a snapshot container");
    snaps.n_cells = c.u64();
    const std::uint64_t ns = c.u64();
    if (snaps.n_cells == 0 || ns == 0) throw io_error(path.string() + ": empty snapshot container");
    if (c.remaining() != (ns + snaps.n_cells * ns) * sizeof(double))
        throw io_error(path.string() + ": payload size does not match declared shape");
    snaps.times.resize(ns);
    c.f64_array(std::span<double>(snaps.times));
    snaps.data.resize(snaps.n_cells * ns);
    c.f64_array(std::span<double>(snaps.data));
    c.expect_end();
    return snaps;
}

// --- basis container: u64 n_cells | u64 m | u64 n_lambda | lambda | phi ---

inline void save_basis(const PodBasis& basis, const std::filesystem::path& path) {
    std::string out = detail::header(ContainerKind::basis, basis.grid_hash);
    detail::put_u64(out, basis.n_cells);
    detail::put_u64(out, basis.mode_count);
    detail::put_u64(out, basis.lambda.size());
    detail::put_f64_array(out, std::span<const double>(basis.lambda));
    detail::put_f64_array(out, std::span<const double>(basis.modes));
    write_text_file(path, out);
}

inline PodBasis load_basis(const std::filesystem::path& path) {
    const std::string bytes = read_text_file(path);
    detail::Cursor c(bytes, path.string());
    PodBasis basis;
    const ContainerKind kind = detail::read_header(c, basis.grid_hash, path.string());
    if (kind != ContainerKind::basis) throw io_error(path.string() + ": not a basis container");
    basis.n_cells = c.u64();
    basis.mode_count = c.u64();
    const std::uint64_t n_lambda = c.u64();
    if (basis.n_cells == 0 || basis.mode_count == 0) throw io_error(path.string() + ": empty basis container");
    if (c.remaining() != (n_lambda + basis.n_cells * basis.mode_count) * sizeof(double))
        throw io_error(path.string() + ": payload size does not match declared shape");
    basis.lambda.resize(n_lambda);
    c.f64_array(std::span<double>(basis.lambda));
    basis.modes.resize(basis.n_cells * basis.mode_count);
    c.f64_array(std::span<double>(basis.modes));
    c.expect_end();
    return basis;
}

// --- field container: reconstructed series restricted to a region ---
// u32 region_kind | u32 layer | u64 region_cells | u64 explicit_count
// | u64 cells[explicit_count] | u64 n_records | times | data

struct FieldSeries {
    std::uint64_t grid_hash = 0;
    Region region;
    std::size_t region_cell_count = 0;
    std::vector<double> times;
    std::vector<double> data;  // column-major [region_cell_count x records]

    std::size_t count() const { return times.size(); }
    std::span<const double> record(std::size_t idx) const {
        return std::span<const double>(data.data() + idx * region_cell_count, region_cell_count);
    }
    void append(std::span<const double> values, double time) {
        if (values.size() != region_cell_count) throw validation_error("field series: record length mismatch");
        data.insert(data.end(), values.begin(), values.end());
        times.push_back(time);
    }
};

inline void save_fields(const FieldSeries& fields, const std::filesystem::path& path) {
    std::string out = detail::header(ContainerKind::field, fields.grid_hash);
    detail::put_u32(out, static_cast<std::uint32_t>(fields.region.kind));
    detail::put_u32(out, static_cast<std::uint32_t>(fields.region.layer));
    detail::put_u64(out, fields.region_cell_count);
    const bool explicit_cells = fields.region.kind == Region::Kind::cells;
    detail::put_u64(out, explicit_cells ? fields.region.cells.size() : 0);
    if (explicit_cells)
        for (std::size_t cell : fields.region.cells) detail::put_u64(out, cell);
    detail::put_u64(out, fields.count());
    detail::put_f64_array(out, std::span<const double>(fields.times));
    detail::put_f64_array(out, std::span<const double>(fields.data));
    write_text_file(path, out);
}

inline FieldSeries load_fields(const std::filesystem::path& path) {
    const std::string bytes = read_text_file(path);
    detail::Cursor c(bytes, path.string());
    FieldSeries fields;
    const ContainerKind kind = detail::read_header(c, fields.grid_hash, path.string());
    if (kind != ContainerKind::field) throw io_error(path.string() + ": not a field container");
    const std::uint32_t region_kind = c.u32();
    if (region_kind > 3) throw io_error(path.string() + ": unknown region kind");
    fields.region.kind = static_cast<Region::Kind>(region_kind);
    fields.region.layer = static_cast<int>(c.u32());
    fields.region_cell_count = c.u64();
    const std::uint64_t explicit_count = c.u64();
    fields.region.cells.resize(explicit_count);
    for (std::uint64_t i = 0; i < explicit_count; ++i) fields.region.cells[i] = c.u64();
    const std::uint64_t records = c.u64();
    if (fields.region_cell_count == 0) throw io_error(path.string() + ": empty field container");
    if (c.remaining() != (records + fields.region_cell_count * records) * sizeof(double))
        throw io_error(path.string() + ": payload size does not match declared shape");
    fields.times.resize(records);
    c.f64_array(std::span<double>(fields.times));
    fields.data.resize(fields.region_cell_count * records);
    c.f64_array(std::span<double>(fields.data));
    c.expect_end();
    return fields;
}

// --- CSV exports ---

// spectrum.csv: mode_index (1-based), eigenvalue, Err_Theo after keeping that
// many modes. Rows cover the leading `rows` modes (typically the retained
// count); the cumulative error column always integrates the full spectrum.
inline std::string spectrum_csv(std::span<const double> lambda, std::size_t rows) {
    if (rows > lambda.size()) throw validation_error("spectrum_csv: row count exceeds spectrum length");
    std::ostringstream out;
    out << "mode_index,lambda,cumulative_err_theo\n";
    for (std::size_t i = 0; i < rows; ++i)
        out << (i + 1) << ',' << format_double(lambda[i]) << ','
            << format_double(theoretical_error(lambda, i + 1)) << "\n";
    return out.str();
}

inline std::string spectrum_csv(std::span<const double> lambda) { return spectrum_csv(lambda, lambda.size()); }

// trajectory.csv: one row per time instant including t0.
inline std::string trajectory_csv(std::span<const double> times, std::span<const double> coefficients,
                                  std::size_t modes) {
    if (modes == 0 || times.size() * modes != coefficients.size())
        throw validation_error("trajectory_csv: shape mismatch");
    std::ostringstream out;
    out << "time_s";
    for (std::size_t k = 1; k <= modes; ++k) out << ",a_" << k;
    out << "\n";
    for (std::size_t s = 0; s < times.size(); ++s) {
        out << format_double(times[s]);
        for (std::size_t k = 0; k < modes; ++k) out << ',' << format_double(coefficients[s * modes + k]);
        out << "\n";
    }
    return out.str();
}

} // namespace thermrom
