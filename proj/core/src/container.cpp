#include "rcas/container.hpp"

#include <array>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace rcas {

namespace {

constexpr std::array<char, 4> kMagic = {'R', 'C', 'A', 'S'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void put_u64(std::ostream& os, std::uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void put_f64(std::ostream& os, double v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void put_f64s(std::ostream& os, const double* p, std::size_t count) {
    os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(count * sizeof(double)));
}

[[noreturn]] void throw_truncated(std::istream& is, const char* what) {
    const auto off = static_cast<long long>(is.tellg());
    throw ContainerError(std::string("truncated payload: reading ") + what + " at byte offset " +
                         std::to_string(off));
}

std::uint32_t get_u32(std::istream& is, const char* what) {
    const auto off = is.tellg();
    std::uint32_t v;
    if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) {
        is.clear();
        is.seekg(off);
        throw_truncated(is, what);
    }
    return v;
}
std::uint64_t get_u64(std::istream& is, const char* what) {
    const auto off = is.tellg();
    std::uint64_t v;
    if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) {
        is.clear();
        is.seekg(off);
        throw_truncated(is, what);
    }
    return v;
}
double get_f64(std::istream& is, const char* what) {
    const auto off = is.tellg();
    double v;
    if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) {
        is.clear();
        is.seekg(off);
        throw_truncated(is, what);
    }
    return v;
}
void get_f64s(std::istream& is, double* p, std::size_t count, const char* what) {
    const auto off = is.tellg();
    if (!is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(count * sizeof(double)))) {
        is.clear();
        is.seekg(off);
        throw_truncated(is, what);
    }
}

std::ofstream open_out(const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ContainerError("cannot open for writing: " + path);
    os.write(kMagic.data(), 4);
    put_u32(os, kVersion);
    return os;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ContainerError("cannot open for reading: " + path);
    std::array<char, 4> magic{};
    if (!is.read(magic.data(), 4) || magic != kMagic)
        throw ContainerError("malformed header: bad magic in " + path);
    const std::uint32_t version = get_u32(is, "version");
    if (version != kVersion)
        throw ContainerError("malformed header: unsupported version " + std::to_string(version));
    return is;
}

// Bytes 8..12 distinguish file kinds: snapshot files carry nx there (a
// small u32), section files carry an ASCII tag.
bool looks_like_tag(std::uint32_t v) { return v >= 0x20202020u; }

std::string tag_to_string(std::uint32_t v) {
    std::string s(4, ' ');
    std::memcpy(s.data(), &v, 4);
    return s;
}
std::uint32_t tag_of(const char (&t)[5]) {
    std::uint32_t v;
    std::memcpy(&v, t, 4);
    return v;
}

void check_stream(std::ostream& os, const std::string& path) {
    if (!os) throw ContainerError("write failed: " + path);
}

}  // namespace

void write_snapshots(const SnapshotSet& data, const std::string& path) {
    data.validate();
    auto os = open_out(path);
    put_u32(os, data.grid.nx);
    put_u32(os, data.grid.ny);
    put_u32(os, static_cast<std::uint32_t>(data.n_t()));
    put_u32(os, 2);
    put_f64(os, data.grid.dx);
    put_f64(os, data.grid.dy);
    put_f64(os, data.grid.dt);
    const Eigen::Index n = data.ux.cols();
    Eigen::RowVectorXd row(n);
    for (Eigen::Index k = 0; k < data.n_t(); ++k) {
        row = data.ux.row(k);
        put_f64s(os, row.data(), static_cast<std::size_t>(n));
        row = data.uy.row(k);
        put_f64s(os, row.data(), static_cast<std::size_t>(n));
    }
    check_stream(os, path);
}

SnapshotSet read_snapshots(const std::string& path) {
    auto is = open_in(path);
    SnapshotSet data;
    data.grid.nx = get_u32(is, "nx");
    if (looks_like_tag(data.grid.nx))
        throw ContainerError("dimension mismatch: " + path + " holds a " +
                             tag_to_string(data.grid.nx) + " section, not snapshots");
    data.grid.ny = get_u32(is, "ny");
    const std::uint32_t nt = get_u32(is, "nt");
    const std::uint32_t n_fields = get_u32(is, "n_fields");
    if (n_fields != 2)
        throw ContainerError("dimension mismatch: n_fields=" + std::to_string(n_fields));
    data.grid.dx = get_f64(is, "dx");
    data.grid.dy = get_f64(is, "dy");
    data.grid.dt = get_f64(is, "dt");
    data.grid.validate();

    const Eigen::Index n = data.grid.n_points();
    data.ux.resize(nt, n);
    data.uy.resize(nt, n);
    data.times.resize(nt);
    Eigen::RowVectorXd row(n);
    for (std::uint32_t k = 0; k < nt; ++k) {
        get_f64s(is, row.data(), static_cast<std::size_t>(n), "ux snapshot");
        data.ux.row(k) = row;
        get_f64s(is, row.data(), static_cast<std::size_t>(n), "uy snapshot");
        data.uy.row(k) = row;
        data.times[k] = k * data.grid.dt;
    }
    return data;
}

void write_basis(const PodBasis& basis, const std::string& path) {
    auto os = open_out(path);
    put_u32(os, tag_of("PODB"));
    put_u32(os, basis.grid.nx);
    put_u32(os, basis.grid.ny);
    put_f64(os, basis.grid.dx);
    put_f64(os, basis.grid.dy);
    put_f64(os, basis.grid.dt);
    put_u32(os, static_cast<std::uint32_t>(basis.n_modes()));
    put_u32(os, static_cast<std::uint32_t>(basis.temporal_coeffs.rows()));
    put_f64(os, basis.energy_fraction);
    put_f64s(os, basis.mean_field.data(), static_cast<std::size_t>(basis.mean_field.size()));
    put_f64s(os, basis.singular_values.data(),
             static_cast<std::size_t>(basis.singular_values.size()));
    put_f64s(os, basis.modes.data(), static_cast<std::size_t>(basis.modes.size()));
    put_f64s(os, basis.temporal_coeffs.data(),
             static_cast<std::size_t>(basis.temporal_coeffs.size()));
    check_stream(os, path);
}

PodBasis read_basis(const std::string& path) {
    auto is = open_in(path);
    const std::uint32_t tag = get_u32(is, "section tag");
    if (tag != tag_of("PODB"))
        throw ContainerError("malformed header: expected PODB section in " + path);
    PodBasis basis;
    basis.grid.nx = get_u32(is, "nx");
    basis.grid.ny = get_u32(is, "ny");
    basis.grid.dx = get_f64(is, "dx");
    basis.grid.dy = get_f64(is, "dy");
    basis.grid.dt = get_f64(is, "dt");
    basis.grid.validate();
    const std::uint32_t n_m = get_u32(is, "n_modes");
    const std::uint32_t n_t = get_u32(is, "n_t");
    basis.energy_fraction = get_f64(is, "energy_fraction");
    const Eigen::Index field = 2 * static_cast<Eigen::Index>(basis.grid.n_points());
    basis.mean_field.resize(field);
    basis.singular_values.resize(n_m);
    basis.modes.resize(field, n_m);
    basis.temporal_coeffs.resize(n_t, n_m);
    get_f64s(is, basis.mean_field.data(), static_cast<std::size_t>(field), "mean field");
    get_f64s(is, basis.singular_values.data(), n_m, "singular values");
    get_f64s(is, basis.modes.data(), static_cast<std::size_t>(basis.modes.size()), "modes");
    get_f64s(is, basis.temporal_coeffs.data(),
             static_cast<std::size_t>(basis.temporal_coeffs.size()), "temporal coefficients");
    return basis;
}

namespace {

void put_sparse(std::ostream& os, const Eigen::SparseMatrix<double>& m) {
    put_u32(os, static_cast<std::uint32_t>(m.rows()));
    put_u32(os, static_cast<std::uint32_t>(m.cols()));
    put_u64(os, static_cast<std::uint64_t>(m.nonZeros()));
    for (int k = 0; k < m.outerSize(); ++k) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(m, k); it; ++it) {
            put_u32(os, static_cast<std::uint32_t>(it.row()));
            put_u32(os, static_cast<std::uint32_t>(it.col()));
            put_f64(os, it.value());
        }
    }
}

Eigen::SparseMatrix<double> get_sparse(std::istream& is, const char* what) {
    const std::uint32_t rows = get_u32(is, what);
    const std::uint32_t cols = get_u32(is, what);
    const std::uint64_t nnz = get_u64(is, what);
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(nnz);
    for (std::uint64_t i = 0; i < nnz; ++i) {
        const std::uint32_t r = get_u32(is, what);
        const std::uint32_t c = get_u32(is, what);
        const double v = get_f64(is, what);
        if (r >= rows || c >= cols)
            throw ContainerError(std::string("dimension mismatch: sparse entry in ") + what);
        triplets.emplace_back(r, c, v);
    }
    Eigen::SparseMatrix<double> m(rows, cols);
    m.setFromTriplets(triplets.begin(), triplets.end());
    return m;
}

}  // namespace

void write_model(const EsnModel& model, const std::string& path) {
    auto os = open_out(path);
    put_u32(os, tag_of("ESNM"));
    put_u32(os, static_cast<std::uint32_t>(model.config.n_reservoir));
    put_u32(os, static_cast<std::uint32_t>(model.config.washout));
    put_u64(os, model.config.seed);
    put_f64(os, model.config.spectral_radius);
    put_f64(os, model.config.input_scaling);
    put_f64(os, model.config.connectivity);
    put_f64(os, model.config.tikhonov);
    put_f64(os, model.config.input_bias);
    put_u32(os, static_cast<std::uint32_t>(model.n_inputs));
    put_f64(os, model.phi_abs_max);
    put_sparse(os, model.w_in);
    put_sparse(os, model.w);
    put_u32(os, static_cast<std::uint32_t>(model.w_out.rows()));
    put_u32(os, static_cast<std::uint32_t>(model.w_out.cols()));
    put_f64s(os, model.w_out.data(), static_cast<std::size_t>(model.w_out.size()));
    put_f64s(os, model.input_norm.data(), static_cast<std::size_t>(model.input_norm.size()));
    check_stream(os, path);
}

EsnModel read_model(const std::string& path) {
    auto is = open_in(path);
    const std::uint32_t tag = get_u32(is, "section tag");
    if (tag != tag_of("ESNM"))
        throw ContainerError("malformed header: expected ESNM section in " + path);
    EsnModel model;
    model.config.n_reservoir = get_u32(is, "n_reservoir");
    model.config.washout = get_u32(is, "washout");
    model.config.seed = get_u64(is, "seed");
    model.config.spectral_radius = get_f64(is, "spectral_radius");
    model.config.input_scaling = get_f64(is, "input_scaling");
    model.config.connectivity = get_f64(is, "connectivity");
    model.config.tikhonov = get_f64(is, "tikhonov");
    model.config.input_bias = get_f64(is, "input_bias");
    model.n_inputs = get_u32(is, "n_inputs");
    model.phi_abs_max = get_f64(is, "phi_abs_max");
    model.w_in = get_sparse(is, "w_in");
    model.w = get_sparse(is, "w");
    const std::uint32_t rows = get_u32(is, "w_out rows");
    const std::uint32_t cols = get_u32(is, "w_out cols");
    if (rows != model.n_inputs || cols != model.config.n_reservoir + 1)
        throw ContainerError("dimension mismatch: w_out shape in " + path);
    model.w_out.resize(rows, cols);
    get_f64s(is, model.w_out.data(), static_cast<std::size_t>(model.w_out.size()), "w_out");
    model.input_norm.resize(model.n_inputs);
    get_f64s(is, model.input_norm.data(), static_cast<std::size_t>(model.input_norm.size()), "g");
    return model;
}

std::string inspect_container(const std::string& path) {
    auto is = open_in(path);
    const std::uint32_t first = get_u32(is, "header");
    std::ostringstream out;
    if (!looks_like_tag(first)) {
        is.seekg(8);
        is.close();
        const SnapshotSet data = read_snapshots(path);
        out << "section: SNAP (snapshots)\n"
            << "grid: " << data.grid.nx << " x " << data.grid.ny << " (dx=" << data.grid.dx
            << ", dy=" << data.grid.dy << ", dt=" << data.grid.dt << ")\n"
            << "nt: " << data.n_t() << "\n";
    } else if (first == tag_of("PODB")) {
        is.close();
        const PodBasis basis = read_basis(path);
        out << "section: PODB (POD basis)\n"
            << "grid: " << basis.grid.nx << " x " << basis.grid.ny << "\n"
            << "modes: " << basis.n_modes() << "\n"
            << "temporal steps: " << basis.temporal_coeffs.rows() << "\n"
            << "energy fraction: " << basis.energy_fraction << "\n";
    } else if (first == tag_of("ESNM")) {
        is.close();
        const EsnModel model = read_model(path);
        out << "section: ESNM (ESN model)\n"
            << "reservoir size: " << model.config.n_reservoir << "\n"
            << "inputs: " << model.n_inputs << "\n"
            << "spectral radius: " << model.config.spectral_radius
            << ", input scaling: " << model.config.input_scaling << "\n"
            << "trained: " << (model.trained() ? "yes" : "no") << "\n";
    } else {
        throw ContainerError("malformed header: unknown section " + tag_to_string(first));
    }
    return out.str();
}

void export_field_csv(const SnapshotSet& data, Eigen::Index time_index, int component,
                      const std::string& path) {
    if (time_index < 0 || time_index >= data.n_t())
        throw std::invalid_argument("export_field_csv: time index out of range");
    const Eigen::MatrixXd& field = component == 0 ? data.ux : data.uy;
    std::ofstream os(path);
    if (!os) throw ContainerError("cannot open for writing: " + path);
    os << "x,y,value\n";
    char buf[96];
    for (std::uint32_t iy = 0; iy < data.grid.ny; ++iy) {
        for (std::uint32_t ix = 0; ix < data.grid.nx; ++ix) {
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", ix * data.grid.dx,
                          iy * data.grid.dy, field(time_index, iy * data.grid.nx + ix));
            os << buf;
        }
    }
}

void export_coeffs_csv(const Eigen::MatrixXd& coeffs, double t0, double dt,
                       const std::string& path) {
    std::ofstream os(path);
    if (!os) throw ContainerError("cannot open for writing: " + path);
    os << "t";
    for (Eigen::Index j = 0; j < coeffs.cols(); ++j) os << ",phi" << (j + 1);
    os << "\n";
    char buf[64];
    for (Eigen::Index k = 0; k < coeffs.rows(); ++k) {
        std::snprintf(buf, sizeof buf, "%.17g", t0 + k * dt);
        os << buf;
        for (Eigen::Index j = 0; j < coeffs.cols(); ++j) {
            std::snprintf(buf, sizeof buf, ",%.17g", coeffs(k, j));
            os << buf;
        }
        os << "\n";
    }
}

}  // namespace rcas
