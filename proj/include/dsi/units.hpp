#pragma once

namespace dsi::units {

inline constexpr double kSecondsPerDay = 86400.0;
inline constexpr double kPascalPerMegapascal = 1.0e6;

constexpr double days(double d) { return d * kSecondsPerDay; }
constexpr double to_days(double s) { return s / kSecondsPerDay; }
constexpr double megapascal(double mpa) { return mpa * kPascalPerMegapascal; }
constexpr double to_megapascal(double pa) { return pa / kPascalPerMegapascal; }
/// m^3/day to m^3/s.
constexpr double per_day(double rate) { return rate / kSecondsPerDay; }

}  // namespace dsi::units
