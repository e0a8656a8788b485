#ifndef COSREG_AGGREGATE_HPP
#define COSREG_AGGREGATE_HPP

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cosreg/errors.hpp"
#include "cosreg/grid.hpp"
#include "cosreg/process.hpp"

namespace cosreg {

// Aggregation levels, from most to least informative.
//   C: counts of ones and zeros per subregion
//   D: total count plus an any-one indicator
//   E: indicator only
enum class DataKind { TypeC, TypeD, TypeE };

inline std::string_view to_string(DataKind k) {
  switch (k) {
    case DataKind::TypeC: return "C";
    case DataKind::TypeD: return "D";
    case DataKind::TypeE: return "E";
  }
  return "?";
}

inline DataKind parse_data_kind(std::string_view s) {
  if (s == "C" || s == "c" || s == "TypeC") return DataKind::TypeC;
  if (s == "D" || s == "d" || s == "TypeD") return DataKind::TypeD;
  if (s == "E" || s == "e" || s == "TypeE") return DataKind::TypeE;
  throw invalid_argument_error("unknown data kind '" + std::string(s) + "' (expected C, D or E)");
}

struct RegionRecord {
  std::int64_t n1 = 0;  // TypeC only
  std::int64_t n0 = 0;  // TypeC only
  std::int64_t n = 0;   // TypeC and TypeD
  int v = 0;            // all kinds
};

/// Per-subregion records aligned with Partition region order. Fields that a
/// kind does not carry are left at zero and must not be read.
struct AggregatedData {
  DataKind kind = DataKind::TypeC;
  std::vector<RegionRecord> regions;

  std::size_t size() const { return regions.size(); }

  void validate() const {
    for (std::size_t j = 0; j < regions.size(); ++j) {
      const auto& r = regions[j];
      const std::string where = "region " + std::to_string(j);
      if (r.v != 0 && r.v != 1) throw validation_error(where + ": indicator must be 0 or 1");
      switch (kind) {
        case DataKind::TypeC:
          if (r.n1 < 0 || r.n0 < 0) throw validation_error(where + ": negative count");
          break;
        case DataKind::TypeD:
          if (r.n < 0) throw validation_error(where + ": negative count");
          if (r.v == 1 && r.n < 1) throw validation_error(where + ": v=1 requires n>=1");
          break;
        case DataKind::TypeE:
          break;
      }
    }
  }
};

inline AggregatedData aggregate_to_type_c(const PointPattern& pattern, const Partition& partition) {
  AggregatedData out{DataKind::TypeC, std::vector<RegionRecord>(partition.num_regions())};
  for (const auto& p : pattern.points) {
    auto& r = out.regions[partition.region_of(p.location)];
    if (p.mark == 1)
      ++r.n1;
    else
      ++r.n0;
  }
  for (auto& r : out.regions) {
    r.n = r.n1 + r.n0;
    r.v = r.n1 > 0 ? 1 : 0;
  }
  return out;
}

/// Moves data down the aggregation hierarchy (C -> D -> E). Requesting the
/// current kind returns the data unchanged; upgrades are rejected.
inline AggregatedData degrade(const AggregatedData& data, DataKind target) {
  if (static_cast<int>(target) < static_cast<int>(data.kind))
    throw invalid_argument_error("cannot convert Type " + std::string(to_string(data.kind)) +
                                 " data to the richer Type " + std::string(to_string(target)));
  AggregatedData out{target, std::vector<RegionRecord>(data.size())};
  for (std::size_t j = 0; j < data.size(); ++j) {
    const auto& in = data.regions[j];
    auto& r = out.regions[j];
    const std::int64_t n = data.kind == DataKind::TypeC ? in.n1 + in.n0 : in.n;
    const int v = data.kind == DataKind::TypeC ? (in.n1 > 0 ? 1 : 0) : in.v;
    switch (target) {
      case DataKind::TypeC:
        r = in;
        r.n = n;
        r.v = v;
        break;
      case DataKind::TypeD:
        r.n = n;
        r.v = v;
        break;
      case DataKind::TypeE:
        r.v = v;
        break;
    }
  }
  return out;
}

}  // namespace cosreg

#endif  // COSREG_AGGREGATE_HPP
