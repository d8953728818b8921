#pragma once

#include "dsi/ensemble.hpp"
#include "dsi/grf.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace dsi::io {

/// Embedded in every file so outputs can be traced to a configuration and seed.
struct Provenance {
  std::uint64_t config_hash{0};
  std::uint64_t seed{0};

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

// All binary files are little-endian and start with a 32-byte header:
//   char[8] magic | u32 version (=1) | u32 reserved (=0) | u64 config_hash | u64 seed
//
// Field    ("DSIFIELD"): u64 nx, u64 ny, f64 lx, f64 ly, then nx*ny f64 values,
//                        cell (i, j) at position j*nx + i.
// KL basis ("DSIKLBAS"): u64 nx, u64 ny, f64 lx, f64 ly, u64 n_modes, f64 total_variance,
//                        n_modes f64 eigenvalues, nx*ny f64 mean, then the modes one
//                        after another, nx*ny f64 each.
// Ensemble ("DSIENSEM"): u64 l, u64 n, u64 d, u64 m, l status bytes (0 ok, 1 failed,
//                        2 non-physical), then the l x n parameter, l x d data and
//                        l x m prediction blocks, each row-major f64.
// Sample matrices use the ensemble layout with n = d = 0.

void write_field(const std::filesystem::path& path, const Field& field, const Provenance& prov);
Field read_field(const std::filesystem::path& path, Provenance* prov = nullptr);

void write_kl_basis(const std::filesystem::path& path, const KLBasis& basis, const Provenance& prov);
KLBasis read_kl_basis(const std::filesystem::path& path, Provenance* prov = nullptr);

void write_ensemble(const std::filesystem::path& path, const Ensemble& ens, const Provenance& prov);
Ensemble read_ensemble(const std::filesystem::path& path, Provenance* prov = nullptr);

/// Rows of `samples` stored as the prediction block of an all-ok ensemble.
void write_samples(const std::filesystem::path& path, const Matrix& samples, const Provenance& prov);
Matrix read_samples(const std::filesystem::path& path, Provenance* prov = nullptr);

/// Opens a CSV file and writes the provenance comment line.
std::ofstream open_csv(const std::filesystem::path& path, const Provenance& prov);

/// CSV with a leading "# config_hash=..., seed=..." comment line.
void write_field_csv(const std::filesystem::path& path, const Field& field, const Provenance& prov);
void write_matrix_csv(const std::filesystem::path& path, const Matrix& rows,
                      const std::vector<std::string>& header, const Provenance& prov);
void write_ensemble_csv(const std::filesystem::path& path, const Ensemble& ens, const Provenance& prov);

}  // namespace dsi::io
