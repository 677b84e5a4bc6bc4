#include "mtsp/tsplib.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "mtsp/error.hpp"

namespace mtsp {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
  return s;
}

}  // namespace

TsplibProblem parse_tsplib(std::string_view text) {
  TsplibProblem p;
  std::string weight_type;
  std::istringstream in{std::string(text)};
  std::string line;
  bool in_coords = false;
  bool saw_coords = false;
  std::map<long, Point> nodes;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (in_coords) {
      if (upper(t) == "EOF") break;
      if (std::isalpha(static_cast<unsigned char>(t[0]))) {
        in_coords = false;
      } else {
        std::istringstream row(t);
        long id = 0;
        double x = 0.0, y = 0.0;
        if (!(row >> id >> x >> y)) {
          throw DataError("TSPLIB line " + std::to_string(line_no) + ": malformed coordinate row");
        }
        if (!nodes.emplace(id, Point{x, y}).second) {
          throw DataError("TSPLIB line " + std::to_string(line_no) + ": duplicate node id");
        }
        continue;
      }
    }
    const std::string key_line = upper(t);
    if (key_line.rfind("NODE_COORD_SECTION", 0) == 0) {
      in_coords = true;
      saw_coords = true;
      continue;
    }
    if (key_line == "EOF") break;
    const auto colon = t.find(':');
    if (colon == std::string::npos) {
      if (key_line.find("_SECTION") != std::string::npos) {
        throw DataError("TSPLIB: unsupported section " + t);
      }
      continue;
    }
    const std::string key = upper(trim(std::string_view(t).substr(0, colon)));
    const std::string value = trim(std::string_view(t).substr(colon + 1));
    if (key == "NAME") {
      p.name = value;
    } else if (key == "DIMENSION") {
      try {
        p.dimension = std::stoi(value);
      } catch (const std::exception&) {
        throw DataError("TSPLIB: bad DIMENSION '" + value + "'");
      }
    } else if (key == "EDGE_WEIGHT_TYPE") {
      weight_type = upper(value);
    }
  }
  if (weight_type != "EUC_2D") {
    throw DataError("TSPLIB: unsupported EDGE_WEIGHT_TYPE '" + weight_type + "' (only EUC_2D)");
  }
  if (!saw_coords) throw DataError("TSPLIB: missing NODE_COORD_SECTION");
  if (p.dimension <= 0 || static_cast<int>(nodes.size()) != p.dimension) {
    throw DataError("TSPLIB: DIMENSION " + std::to_string(p.dimension) + " but " +
                    std::to_string(nodes.size()) + " coordinates");
  }
  for (const auto& [id, pt] : nodes) p.coords.push_back(pt);
  return p;
}

TsplibProblem load_tsplib(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  TsplibProblem p = parse_tsplib(s.str());
  if (p.name.empty()) p.name = path.stem().string();
  return p;
}

Instance make_mtsplib(const TsplibProblem& problem, int m) {
  if (m >= problem.dimension) {
    throw DataError("mTSPLib: m=" + std::to_string(m) + " needs more than " + std::to_string(problem.dimension) +
                    " nodes");
  }
  if (m != 2 && m != 3 && m != 5 && m != 7) {
    std::cerr << "warning: m=" << m << " is not one of the benchmark salesman counts {2, 3, 5, 7}\n";
  }
  return Instance(problem.coords, m);
}

DistanceMatrix tsplib_distances(const Instance& instance, bool nint) {
  DistanceMatrix d = distance_matrix(instance);
  if (!nint) return d;
  return DistanceMatrix(d.values().unaryExpr([](double v) { return std::floor(v + 0.5); }));
}

std::optional<double> mtsplib_reference(std::string_view problem, int m) {
  struct Row {
    std::string_view name;
    int m;
    double cost;
  };
  static constexpr Row kRows[] = {
      {"eil51", 2, 435.18},     {"eil51", 3, 445.99},     {"eil51", 5, 471.69},     {"eil51", 7, 508.70},
      {"berlin52", 2, 7632.43}, {"berlin52", 3, 7737.02}, {"berlin52", 5, 8125.98}, {"berlin52", 7, 8585.41},
      {"eil76", 2, 552.46},     {"eil76", 3, 561.11},     {"eil76", 5, 581.35},     {"eil76", 7, 612.66},
      {"rat99", 2, 1247.89},    {"rat99", 3, 1276.97},    {"rat99", 5, 1362.58},    {"rat99", 7, 1471.84},
  };
  for (const Row& r : kRows) {
    if (r.name == problem && r.m == m) return r.cost;
  }
  return std::nullopt;
}

}  // namespace mtsp
