#pragma once

#include <algorithm>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tgrasp/errors.hpp"
#include "tgrasp/sim.hpp"

namespace tgrasp {

// Twelve presets; the first seven are the benchmark objects.
inline const std::vector<ObjectSpec>& default_catalog() {
  static const std::vector<ObjectSpec> catalog{
      {"pill_box", 30.0, 32.0, 0.20, 0.55, 60.0},
      {"tea_can", 40.0, 55.0, 0.25, 0.50, 80.0},
      {"mouthwash", 110.0, 48.0, 0.30, 0.45, 200.0},
      {"milk_bottle", 120.0, 62.0, 0.28, 0.60, 220.0},
      {"wine_bottle", 130.0, 66.0, 0.35, 0.50, 240.0},
      {"perfume", 80.0, 38.0, 0.22, 0.40, 150.0},
      {"ink", 60.0, 44.0, 0.18, 0.70, 120.0},
      {"medicine_jar", 50.0, 40.0, 0.24, 0.60, 100.0},
      {"soda_can", 45.0, 58.0, 0.30, 0.50, 100.0},
      {"shampoo", 100.0, 52.0, 0.26, 0.55, 180.0},
      {"sponge_box", 35.0, 70.0, 0.15, 0.80, 70.0},
      {"cup", 90.0, 28.0, 0.40, 0.65, 160.0},
  };
  return catalog;
}

inline constexpr std::size_t kTestObjectCount = 7;

inline std::vector<ObjectSpec> test_objects(const std::vector<ObjectSpec>& catalog = default_catalog()) {
  std::vector<ObjectSpec> out;
  for (std::size_t i = 0; i < std::min(kTestObjectCount, catalog.size()); ++i) out.push_back(catalog[i]);
  return out;
}

inline const ObjectSpec& find_object(const std::vector<ObjectSpec>& catalog, const std::string& name) {
  auto it = std::find_if(catalog.begin(), catalog.end(), [&](const ObjectSpec& o) { return o.name == name; });
  if (it == catalog.end()) throw ValidationError("object", "unknown object '" + name + "'");
  return *it;
}

inline constexpr const char* kCatalogHeader = "name\tmass_g\twidth_mm\tstiffness_n_per_mm\tmu\tmax_fill_g";

inline std::string format_catalog(const std::vector<ObjectSpec>& catalog) {
  std::ostringstream os;
  os.precision(9);
  os << kCatalogHeader << '\n';
  for (const auto& o : catalog) {
    os << o.name << '\t' << o.mass_g << '\t' << o.width_mm << '\t' << o.stiffness_n_per_mm << '\t' << o.mu
       << '\t' << o.max_fill_g << '\n';
  }
  return os.str();
}

inline std::vector<ObjectSpec> parse_catalog(std::istream& in) {
  std::vector<ObjectSpec> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (line.rfind("name\t", 0) == 0) continue;
    std::istringstream ls(line);
    ObjectSpec o;
    if (!(ls >> o.name >> o.mass_g >> o.width_mm >> o.stiffness_n_per_mm >> o.mu >> o.max_fill_g)) {
      throw ParseError("expected 6 object fields", lineno);
    }
    std::string extra;
    if (ls >> extra) throw ParseError("trailing field '" + extra + "'", lineno);
    try {
      o.validate();
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), lineno);
    }
    out.push_back(std::move(o));
  }
  return out;
}

inline std::vector<ObjectSpec> load_catalog(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open object catalog '" + path + "'");
  return parse_catalog(in);
}

}  // namespace tgrasp
