#include "dsi/io.hpp"

#include "dsi/error.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>

namespace dsi::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace {

constexpr std::uint32_t kVersion = 1;
using Magic = std::array<char, 8>;
constexpr Magic kFieldMagic{'D', 'S', 'I', 'F', 'I', 'E', 'L', 'D'};
constexpr Magic kKlMagic{'D', 'S', 'I', 'K', 'L', 'B', 'A', 'S'};
constexpr Magic kEnsembleMagic{'D', 'S', 'I', 'E', 'N', 'S', 'E', 'M'};

class Writer {
public:
  explicit Writer(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw ConfigError("cannot open " + path.string() + " for writing");
  }
  template <class T>
  void put(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void put_doubles(const double* data, std::size_t n) {
    out_.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
  }
  void put_rows(const Matrix& m) {
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
    put_doubles(rm.data(), static_cast<std::size_t>(rm.size()));
  }
  void header(const Magic& magic, const Provenance& prov) {
    out_.write(magic.data(), magic.size());
    put(kVersion);
    put(std::uint32_t{0});
    put(prov.config_hash);
    put(prov.seed);
  }
  ~Writer() noexcept(false) {
    out_.flush();
    if (!out_ && std::uncaught_exceptions() == 0) throw ConfigError("write failed for " + path_.string());
  }

private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class Reader {
public:
  explicit Reader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw ConfigError("cannot open " + path.string());
  }
  template <class T>
  T get() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    check();
    return v;
  }
  void get_doubles(double* data, std::size_t n) {
    in_.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
    check();
  }
  Matrix get_rows(std::uint64_t rows, std::uint64_t cols) {
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(static_cast<Eigen::Index>(rows),
                                                                              static_cast<Eigen::Index>(cols));
    get_doubles(rm.data(), static_cast<std::size_t>(rm.size()));
    return rm;
  }
  Provenance header(const Magic& magic) {
    Magic found{};
    in_.read(found.data(), found.size());
    check();
    if (found != magic)
      throw ConfigError(path_.string() + ": expected a " + std::string(magic.data(), magic.size()) + " file");
    if (get<std::uint32_t>() != kVersion) throw ConfigError(path_.string() + ": unsupported version");
    get<std::uint32_t>();
    Provenance p;
    p.config_hash = get<std::uint64_t>();
    p.seed = get<std::uint64_t>();
    return p;
  }
  std::uint64_t dim(std::uint64_t limit = (1ull << 32)) {
    const auto v = get<std::uint64_t>();
    if (v > limit) throw ConfigError(path_.string() + ": implausible dimension " + std::to_string(v));
    return v;
  }

private:
  void check() {
    if (!in_) throw ConfigError(path_.string() + ": truncated file");
  }
  std::filesystem::path path_;
  std::ifstream in_;
};

}  // namespace

std::ofstream open_csv(const std::filesystem::path& path, const Provenance& prov) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
  out << std::setprecision(17);
  out << "# config_hash=" << prov.config_hash << ", seed=" << prov.seed << '\n';
  return out;
}

void write_field(const std::filesystem::path& path, const Field& field, const Provenance& prov) {
  Writer w(path);
  w.header(kFieldMagic, prov);
  w.put(static_cast<std::uint64_t>(field.grid.nx()));
  w.put(static_cast<std::uint64_t>(field.grid.ny()));
  w.put(field.grid.lx());
  w.put(field.grid.ly());
  w.put_doubles(field.values.data(), static_cast<std::size_t>(field.values.size()));
}

Field read_field(const std::filesystem::path& path, Provenance* prov) {
  Reader r(path);
  const Provenance p = r.header(kFieldMagic);
  if (prov) *prov = p;
  const auto nx = r.dim(1 << 20);
  const auto ny = r.dim(1 << 20);
  const auto lx = r.get<double>();
  const auto ly = r.get<double>();
  Grid grid(static_cast<int>(nx), static_cast<int>(ny), lx, ly);
  Vector values(grid.cells());
  r.get_doubles(values.data(), static_cast<std::size_t>(values.size()));
  return Field(grid, values);
}

void write_kl_basis(const std::filesystem::path& path, const KLBasis& basis, const Provenance& prov) {
  Writer w(path);
  w.header(kKlMagic, prov);
  w.put(static_cast<std::uint64_t>(basis.grid.nx()));
  w.put(static_cast<std::uint64_t>(basis.grid.ny()));
  w.put(basis.grid.lx());
  w.put(basis.grid.ly());
  w.put(static_cast<std::uint64_t>(basis.n_modes()));
  w.put(basis.spectrum.total_variance);
  w.put_doubles(basis.spectrum.eigenvalues.data(), static_cast<std::size_t>(basis.n_modes()));
  w.put_doubles(basis.mean.data(), static_cast<std::size_t>(basis.mean.size()));
  // Column-major storage already keeps each mode contiguous.
  w.put_doubles(basis.spectrum.modes.data(), static_cast<std::size_t>(basis.spectrum.modes.size()));
}

KLBasis read_kl_basis(const std::filesystem::path& path, Provenance* prov) {
  Reader r(path);
  const Provenance p = r.header(kKlMagic);
  if (prov) *prov = p;
  const auto nx = r.dim(1 << 20);
  const auto ny = r.dim(1 << 20);
  const auto lx = r.get<double>();
  const auto ly = r.get<double>();
  KLBasis basis;
  basis.grid = Grid(static_cast<int>(nx), static_cast<int>(ny), lx, ly);
  const auto n = static_cast<Eigen::Index>(r.dim(static_cast<std::uint64_t>(basis.grid.cells())));
  basis.spectrum.total_variance = r.get<double>();
  basis.spectrum.eigenvalues.resize(n);
  r.get_doubles(basis.spectrum.eigenvalues.data(), static_cast<std::size_t>(n));
  basis.mean.resize(basis.grid.cells());
  r.get_doubles(basis.mean.data(), static_cast<std::size_t>(basis.mean.size()));
  basis.spectrum.modes.resize(basis.grid.cells(), n);
  r.get_doubles(basis.spectrum.modes.data(), static_cast<std::size_t>(basis.spectrum.modes.size()));
  return basis;
}

void write_ensemble(const std::filesystem::path& path, const Ensemble& ens, const Provenance& prov) {
  ens.validate();
  Writer w(path);
  w.header(kEnsembleMagic, prov);
  w.put(static_cast<std::uint64_t>(ens.size()));
  w.put(static_cast<std::uint64_t>(ens.params.cols()));
  w.put(static_cast<std::uint64_t>(ens.data.cols()));
  w.put(static_cast<std::uint64_t>(ens.predictions.cols()));
  for (auto s : ens.status) w.put(static_cast<std::uint8_t>(s));
  w.put_rows(ens.params);
  w.put_rows(ens.data);
  w.put_rows(ens.predictions);
}

Ensemble read_ensemble(const std::filesystem::path& path, Provenance* prov) {
  Reader r(path);
  const Provenance p = r.header(kEnsembleMagic);
  if (prov) *prov = p;
  const auto l = r.dim();
  const auto n = r.dim();
  const auto d = r.dim();
  const auto m = r.dim();
  Ensemble ens;
  for (std::uint64_t i = 0; i < l; ++i) {
    const auto s = r.get<std::uint8_t>();
    if (s > 2) throw ConfigError(path.string() + ": invalid member status " + std::to_string(s));
    ens.status.push_back(static_cast<MemberStatus>(s));
  }
  ens.params = r.get_rows(l, n);
  ens.data = r.get_rows(l, d);
  ens.predictions = r.get_rows(l, m);
  return ens;
}

void write_samples(const std::filesystem::path& path, const Matrix& samples, const Provenance& prov) {
  Ensemble ens;
  ens.params.resize(samples.rows(), 0);
  ens.data.resize(samples.rows(), 0);
  ens.predictions = samples;
  ens.status.assign(static_cast<std::size_t>(samples.rows()), MemberStatus::ok);
  write_ensemble(path, ens, prov);
}

Matrix read_samples(const std::filesystem::path& path, Provenance* prov) {
  return read_ensemble(path, prov).predictions;
}

void write_field_csv(const std::filesystem::path& path, const Field& field, const Provenance& prov) {
  auto out = open_csv(path, prov);
  out << "x,y,value\n";
  for (Eigen::Index c = 0; c < field.grid.cells(); ++c) {
    const auto [x, y] = field.grid.centre(c);
    out << x << ',' << y << ',' << field.values(c) << '\n';
  }
}

void write_matrix_csv(const std::filesystem::path& path, const Matrix& rows, const std::vector<std::string>& header,
                      const Provenance& prov) {
  auto out = open_csv(path, prov);
  for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
  if (!header.empty()) out << '\n';
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    for (Eigen::Index j = 0; j < rows.cols(); ++j) out << (j ? "," : "") << rows(i, j);
    out << '\n';
  }
}

void write_ensemble_csv(const std::filesystem::path& path, const Ensemble& ens, const Provenance& prov) {
  auto out = open_csv(path, prov);
  out << "member,status";
  for (Eigen::Index j = 0; j < ens.params.cols(); ++j) out << ",k" << j;
  for (Eigen::Index j = 0; j < ens.data.cols(); ++j) out << ",d" << j;
  for (Eigen::Index j = 0; j < ens.predictions.cols(); ++j) out << ",p" << j;
  out << '\n';
  for (Eigen::Index i = 0; i < ens.size(); ++i) {
    out << i << ',' << static_cast<int>(ens.status[static_cast<std::size_t>(i)]);
    for (const Matrix* block : {&ens.params, &ens.data, &ens.predictions})
      for (Eigen::Index j = 0; j < block->cols(); ++j) out << ',' << (*block)(i, j);
    out << '\n';
  }
}

}  // namespace dsi::io
