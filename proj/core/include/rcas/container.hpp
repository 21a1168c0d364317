#pragma once

#include <string>

#include "rcas/esn.hpp"
#include "rcas/pod.hpp"
#include "rcas/snapshot.hpp"

namespace rcas {

/// IO failure with a message naming what went wrong ("malformed header",
/// "dimension mismatch", "truncated payload", ...).
struct ContainerError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Snapshot files are binary, little-endian:
//   magic "RCAS", version u32=1, nx u32, ny u32, nt u32, n_fields u32=2,
//   dx f64, dy f64, dt f64, then nt*2*nx*ny f64 values ordered time-major,
//   field-major (ux then uy), row-major in (y, x).
// Basis and model files share the magic/version prefix followed by a
// 4-byte section tag ("PODB" / "ESNM") and the section payload.

void write_snapshots(const SnapshotSet& data, const std::string& path);
SnapshotSet read_snapshots(const std::string& path);

void write_basis(const PodBasis& basis, const std::string& path);
PodBasis read_basis(const std::string& path);

void write_model(const EsnModel& model, const std::string& path);
EsnModel read_model(const std::string& path);

/// Human-readable summary of any container file: section type, dimensions,
/// energy fraction for POD sections.
std::string inspect_container(const std::string& path);

/// One field component of one snapshot as CSV with header "x,y,value".
void export_field_csv(const SnapshotSet& data, Eigen::Index time_index,
                      int component, const std::string& path);

/// Coefficient series as CSV with header "t,phi1..phiN".
void export_coeffs_csv(const Eigen::MatrixXd& coeffs, double t0, double dt,
                       const std::string& path);

}  // namespace rcas
