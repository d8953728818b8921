#include "dsi/harness/compare.hpp"

#include "dsi/error.hpp"
#include "dsi/stats.hpp"
#include "dsi/units.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace dsi::harness {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::array<const char*, 8> kPalette{"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                          "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::vector<double> column(const Matrix& m, Eigen::Index j) {
  std::vector<double> c(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) c[static_cast<std::size_t>(i)] = m(i, j);
  return c;
}

json reshape_mpa(const Vector& v, const sim2d::PredictionDesign& design) {
  json out = json::array();
  const auto nt = static_cast<Eigen::Index>(design.times.size());
  for (std::size_t w = 0; w < design.wells.size(); ++w) {
    json row = json::array();
    for (Eigen::Index t = 0; t < nt; ++t) row.push_back(units::to_megapascal(v(static_cast<Eigen::Index>(w) * nt + t)));
    out.push_back(row);
  }
  return out;
}

bool is_sweep(const std::string& name) { return name.rfind("dsi_l", 0) == 0; }

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::size_t col(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ConfigError("CSV column '" + name + "' missing");
    return static_cast<std::size_t>(it - header.begin());
  }
};

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  CsvTable t;
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
  };
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (t.header.empty())
      t.header = split(line);
    else
      t.rows.push_back(split(line));
  }
  return t;
}

// Linear map from data coordinates to a panel's pixel box.
struct Panel {
  double x0, y0, w, h;
  double xmin, xmax, ymin, ymax;
  double x(double v) const { return x0 + (v - xmin) / (xmax - xmin) * w; }
  double y(double v) const { return y0 + h - (v - ymin) / (ymax - ymin) * h; }
};

void panel_frame(std::ostream& svg, const Panel& p, const std::string& title) {
  svg << "<rect x='" << p.x0 << "' y='" << p.y0 << "' width='" << p.w << "' height='" << p.h
      << "' fill='none' stroke='#444'/>\n";
  svg << "<text x='" << p.x0 + 4 << "' y='" << p.y0 + 14 << "' font-size='12'>" << title << "</text>\n";
  svg << "<text x='" << p.x0 - 4 << "' y='" << p.y0 + 10 << "' font-size='9' text-anchor='end'>" << p.ymax
      << "</text>\n";
  svg << "<text x='" << p.x0 - 4 << "' y='" << p.y0 + p.h << "' font-size='9' text-anchor='end'>" << p.ymin
      << "</text>\n";
}

void legend(std::ostream& svg, const std::vector<std::string>& names, double x, double y) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    svg << "<rect x='" << x << "' y='" << y + 16.0 * static_cast<double>(i) << "' width='10' height='10' fill='"
        << kPalette[i % kPalette.size()] << "'/>\n";
    svg << "<text x='" << x + 14 << "' y='" << y + 9 + 16.0 * static_cast<double>(i) << "' font-size='11'>"
        << names[i] << "</text>\n";
  }
}

std::pair<double, double> nice_range(double lo, double hi) {
  const double pad = 0.05 * std::max(hi - lo, 1e-6);
  return {std::floor((lo - pad) * 10.0) / 10.0, std::ceil((hi + pad) * 10.0) / 10.0};
}

fs::path bands_svg(const fs::path& dir) {
  const CsvTable t = read_csv(dir / "bands.csv");
  const auto cm = t.col("method"), cw = t.col("well"), ct = t.col("time_days"), cmean = t.col("mean_mpa"),
             clo = t.col("lower_mpa"), chi = t.col("upper_mpa"), ctruth = t.col("truth_mpa");
  std::vector<std::string> methods;
  std::map<int, std::map<std::string, std::vector<std::array<double, 4>>>> data;  // well -> method -> (t, mean, lo, hi)
  std::map<int, std::vector<std::pair<double, double>>> truth;
  double tmax = 0.0, pmin = 1e300, pmax = -1e300;
  for (const auto& r : t.rows) {
    const int w = std::stoi(r[cw]);
    const double time = std::stod(r[ct]), mean = std::stod(r[cmean]), lo = std::stod(r[clo]), hi = std::stod(r[chi]);
    if (std::find(methods.begin(), methods.end(), r[cm]) == methods.end()) methods.push_back(r[cm]);
    data[w][r[cm]].push_back({time, mean, lo, hi});
    if (r[cm] == methods.front() && r[ctruth] != "nan") truth[w].emplace_back(time, std::stod(r[ctruth]));
    tmax = std::max(tmax, time);
    pmin = std::min(pmin, lo);
    pmax = std::max(pmax, hi);
  }
  const auto [ymin, ymax] = nice_range(pmin, pmax);
  const double pw = 260, ph = 180, gap = 50;
  const int cols = 3;
  const int nrows = (static_cast<int>(data.size()) + cols - 1) / cols;
  const fs::path path = dir / "bands.svg";
  std::ofstream svg(path);
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << cols * (pw + gap) + 140 << "' height='"
      << nrows * (ph + gap) + gap << "' font-family='sans-serif'>\n";
  int k = 0;
  for (const auto& [well, per_method] : data) {
    const Panel p{gap + (k % cols) * (pw + gap), gap / 2 + (k / cols) * (ph + gap), pw, ph, 0.0, tmax, ymin, ymax};
    panel_frame(svg, p, "well " + std::to_string(well) + " (MPa vs days)");
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
      const auto it = per_method.find(methods[mi]);
      if (it == per_method.end()) continue;
      const auto& pts = it->second;
      const char* colour = kPalette[mi % kPalette.size()];
      svg << "<polygon fill='" << colour << "' fill-opacity='0.2' stroke='none' points='";
      for (const auto& q : pts) svg << p.x(q[0]) << ',' << p.y(q[3]) << ' ';
      for (auto q = pts.rbegin(); q != pts.rend(); ++q) svg << p.x((*q)[0]) << ',' << p.y((*q)[2]) << ' ';
      svg << "'/>\n<polyline fill='none' stroke='" << colour << "' points='";
      for (const auto& q : pts) svg << p.x(q[0]) << ',' << p.y(q[1]) << ' ';
      svg << "'/>\n";
    }
    if (truth.count(well)) {
      svg << "<polyline fill='none' stroke='black' stroke-width='1.5' points='";
      for (const auto& [tt, v] : truth.at(well)) svg << p.x(tt) << ',' << p.y(v) << ' ';
      svg << "'/>\n";
    }
    ++k;
  }
  legend(svg, methods, cols * (pw + gap) + 10, gap);
  svg << "</svg>\n";
  return path;
}

fs::path intervals_svg(const fs::path& dir, const std::string& stem) {
  const CsvTable t = read_csv(dir / (stem + ".csv"));
  const auto cm = t.col("method"), cw = t.col("well"), cv = t.col("pressure_mpa");
  std::vector<std::string> methods;
  std::map<int, std::map<std::string, std::vector<double>>> data;
  double pmin = 1e300, pmax = -1e300;
  for (const auto& r : t.rows) {
    if (std::find(methods.begin(), methods.end(), r[cm]) == methods.end()) methods.push_back(r[cm]);
    const double v = std::stod(r[cv]);
    data[std::stoi(r[cw])][r[cm]].push_back(v);
  }
  std::map<int, double> truth;
  if (fs::exists(dir / "bands.csv")) {
    const CsvTable bands_csv = read_csv(dir / "bands.csv");
    const auto fw = bands_csv.col("well"), ft = bands_csv.col("time_days"), ftr = bands_csv.col("truth_mpa");
    double last = -1.0;
    for (const auto& r : bands_csv.rows) last = std::max(last, std::stod(r[ft]));
    for (const auto& r : bands_csv.rows)
      if (std::stod(r[ft]) == last && r[ftr] != "nan") truth[std::stoi(r[fw])] = std::stod(r[ftr]);
  }
  std::map<int, std::map<std::string, std::array<double, 3>>> q;
  for (auto& [w, per] : data)
    for (auto& [m, v] : per) {
      std::sort(v.begin(), v.end());
      q[w][m] = {stats::quantile(v, 0.025), stats::quantile(v, 0.5), stats::quantile(v, 0.975)};
      pmin = std::min(pmin, q[w][m][0]);
      pmax = std::max(pmax, q[w][m][2]);
    }
  for (const auto& [w, v] : truth) {
    pmin = std::min(pmin, v);
    pmax = std::max(pmax, v);
  }
  const auto [ymin, ymax] = nice_range(pmin, pmax);
  const double pw = 200, ph = 180, gap = 50;
  const int cols = 3;
  const int nrows = (static_cast<int>(q.size()) + cols - 1) / cols;
  const fs::path path = dir / (stem + ".svg");
  std::ofstream svg(path);
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << cols * (pw + gap) + 140 << "' height='"
      << nrows * (ph + gap) + gap << "' font-family='sans-serif'>\n";
  int k = 0;
  for (const auto& [well, per] : q) {
    const Panel p{gap + (k % cols) * (pw + gap), gap / 2 + (k / cols) * (ph + gap), pw, ph,
                  0.0, static_cast<double>(methods.size()), ymin, ymax};
    panel_frame(svg, p, "well " + std::to_string(well) + ", final time (MPa)");
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
      const auto it = per.find(methods[mi]);
      if (it == per.end()) continue;
      const double x = p.x(static_cast<double>(mi) + 0.5);
      const char* colour = kPalette[mi % kPalette.size()];
      svg << "<line x1='" << x << "' x2='" << x << "' y1='" << p.y(it->second[0]) << "' y2='" << p.y(it->second[2])
          << "' stroke='" << colour << "' stroke-width='6'/>\n";
      svg << "<circle cx='" << x << "' cy='" << p.y(it->second[1]) << "' r='4' fill='white' stroke='" << colour
          << "'/>\n";
    }
    if (truth.count(well))
      svg << "<line x1='" << p.x0 << "' x2='" << p.x0 + pw << "' y1='" << p.y(truth.at(well)) << "' y2='"
          << p.y(truth.at(well)) << "' stroke='black' stroke-dasharray='4 2'/>\n";
    ++k;
  }
  legend(svg, methods, cols * (pw + gap) + 10, gap);
  svg << "</svg>\n";
  return path;
}

}  // namespace

MarginalSummary summarize(const Matrix& samples) {
  if (samples.rows() < 2) throw ConfigError("summaries need at least two samples");
  MarginalSummary s;
  const Eigen::Index m = samples.cols();
  s.mean = stats::mean_rows(samples);
  s.std_dev.resize(m);
  s.lower.resize(m);
  s.upper.resize(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    auto c = column(samples, j);
    s.std_dev(j) = std::sqrt((samples.col(j).array() - s.mean(j)).square().sum() / static_cast<double>(samples.rows() - 1));
    std::sort(c.begin(), c.end());
    s.lower(j) = stats::quantile(c, 0.025);
    s.upper(j) = stats::quantile(c, 0.975);
  }
  return s;
}

const MethodSummary& ComparisonReport::method(const std::string& name) const {
  for (const auto& m : methods)
    if (m.name == name) return m;
  throw ConfigError("no method named " + name + " in the comparison");
}

ComparisonReport compare(const std::vector<MethodResult>& methods, const Vector* truth) {
  if (methods.empty()) throw ConfigError("compare: no method outputs");
  const Eigen::Index m = methods.front().samples.cols();
  for (const auto& r : methods)
    if (r.samples.cols() != m)
      throw ConfigError("compare: " + r.name + " has " + std::to_string(r.samples.cols()) + " marginals, " +
                        methods.front().name + " has " + std::to_string(m));
  if (truth && truth->size() != m) throw ConfigError("compare: truth length differs from the samples");

  ComparisonReport rep;
  rep.has_truth = truth != nullptr;
  for (const auto& r : methods) {
    MethodSummary s;
    s.name = r.name;
    s.n_samples = r.samples.rows();
    s.marginals = summarize(r.samples);
    s.report = r.report;
    if (truth)
      for (Eigen::Index j = 0; j < m; ++j)
        s.covered.push_back((*truth)(j) >= s.marginals.lower(j) && (*truth)(j) <= s.marginals.upper(j));
    rep.methods.push_back(std::move(s));
  }
  for (std::size_t a = 0; a < methods.size(); ++a)
    for (std::size_t b = a + 1; b < methods.size(); ++b) {
      PairDistance d{methods[a].name, methods[b].name, Vector(m)};
      for (Eigen::Index j = 0; j < m; ++j)
        d.w1(j) = stats::wasserstein1(column(methods[a].samples, j), column(methods[b].samples, j));
      rep.distances.push_back(std::move(d));
    }
  return rep;
}

json ComparisonReport::to_json(const sim2d::PredictionDesign& design) const {
  json out;
  out["times_days"] = json::array();
  for (double t : design.times) out["times_days"].push_back(units::to_days(t));
  out["wells"] = json::array();
  for (int w : design.wells) out["wells"].push_back(w + 1);
  out["methods"] = json::array();
  for (const auto& s : methods) {
    json j = {{"name", s.name},
              {"n_samples", s.n_samples},
              {"mean_mpa", reshape_mpa(s.marginals.mean, design)},
              {"std_mpa", reshape_mpa(s.marginals.std_dev, design)},
              {"lower_mpa", reshape_mpa(s.marginals.lower, design)},
              {"upper_mpa", reshape_mpa(s.marginals.upper, design)},
              {"report", s.report}};
    if (has_truth) {
      j["truth_covered"] = s.covered;
      j["truth_covered_fraction"] =
          static_cast<double>(std::count(s.covered.begin(), s.covered.end(), true)) / static_cast<double>(s.covered.size());
    }
    out["methods"].push_back(j);
  }
  out["distances"] = json::array();
  for (const auto& d : distances)
    out["distances"].push_back({{"first", d.first},
                                {"second", d.second},
                                {"w1_mpa", reshape_mpa(d.w1, design)},
                                {"mean_w1_mpa", units::to_megapascal(d.w1.mean())},
                                {"max_w1_mpa", units::to_megapascal(d.w1.maxCoeff())}});
  return out;
}

std::vector<MethodResult> load_methods(const fs::path& dir, const std::vector<std::string>& names,
                                       bool allow_mixed_provenance, io::Provenance* prov) {
  std::vector<MethodResult> out;
  io::Provenance first;
  for (const auto& name : names) {
    MethodResult r;
    r.name = name;
    io::Provenance p;
    r.samples = io::read_samples(dir / ("samples_" + name + ".bin"), &p);
    if (out.empty())
      first = p;
    else if (p.config_hash != first.config_hash && !allow_mixed_provenance)
      throw ConfigError("samples_" + name + ".bin comes from a different configuration (hash " +
                        std::to_string(p.config_hash) + " vs " + std::to_string(first.config_hash) +
                        "); pass --allow-mixed-provenance to compare anyway");
    const fs::path report = dir / ("report_" + name + ".json");
    if (fs::exists(report)) {
      std::ifstream in(report);
      r.report = json::parse(in, nullptr, false);
      if (r.report.is_discarded()) throw ConfigError("malformed report " + report.string());
    }
    out.push_back(std::move(r));
  }
  if (prov) *prov = first;
  return out;
}

void write_comparison(const fs::path& dir, const ComparisonReport& report, const std::vector<MethodResult>& methods,
                      const Vector* truth, const sim2d::PredictionDesign& design, const io::Provenance& prov) {
  fs::create_directories(dir);
  {
    json j = report.to_json(design);
    j["config_hash"] = prov.config_hash;
    j["seed"] = prov.seed;
    std::ofstream out(dir / "report.json");
    out << j.dump(2) << '\n';
  }
  const auto nt = static_cast<Eigen::Index>(design.times.size());
  {
    auto out = io::open_csv(dir / "bands.csv", prov);
    out << "method,well,time_days,mean_mpa,lower_mpa,upper_mpa,truth_mpa\n";
    for (const auto& s : report.methods)
      for (std::size_t w = 0; w < design.wells.size(); ++w)
        for (Eigen::Index t = 0; t < nt; ++t) {
          const Eigen::Index j = static_cast<Eigen::Index>(w) * nt + t;
          out << s.name << ',' << design.wells[w] + 1 << ',' << units::to_days(design.times[static_cast<std::size_t>(t)])
              << ',' << units::to_megapascal(s.marginals.mean(j)) << ',' << units::to_megapascal(s.marginals.lower(j))
              << ',' << units::to_megapascal(s.marginals.upper(j)) << ',';
          if (truth)
            out << units::to_megapascal((*truth)(j));
          else
            out << "nan";
          out << '\n';
        }
  }
  auto final_samples = [&](const fs::path& path, auto&& include) {
    auto out = io::open_csv(path, prov);
    out << "method,well,pressure_mpa\n";
    for (const auto& r : methods) {
      if (!include(r.name)) continue;
      for (std::size_t w = 0; w < design.wells.size(); ++w) {
        const Eigen::Index j = static_cast<Eigen::Index>(w) * nt + nt - 1;
        for (Eigen::Index i = 0; i < r.samples.rows(); ++i)
          out << r.name << ',' << design.wells[w] + 1 << ',' << units::to_megapascal(r.samples(i, j)) << '\n';
      }
    }
  };
  final_samples(dir / "final_time.csv", [](const std::string& n) { return !is_sweep(n); });
  const bool sweep = std::any_of(methods.begin(), methods.end(), [](const auto& r) { return is_sweep(r.name); });
  if (sweep)
    final_samples(dir / "ell_sweep.csv",
                  [](const std::string& n) { return is_sweep(n) || n == "prior" || n == "mcmc"; });
}

std::vector<fs::path> export_plots(const fs::path& dir) {
  std::vector<fs::path> written;
  if (!fs::exists(dir / "bands.csv")) throw ConfigError("no bands.csv in " + dir.string() + "; run compare first");
  written.push_back(bands_svg(dir));
  for (const std::string stem : {"final_time", "ell_sweep"})
    if (fs::exists(dir / (stem + ".csv"))) written.push_back(intervals_svg(dir, stem));
  return written;
}

}  // namespace dsi::harness
