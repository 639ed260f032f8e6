#pragma once

#include <array>
#include <istream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ciuseq/error.hpp"
#include "ciuseq/text.hpp"

namespace ciuseq {

inline constexpr int kCiuCount = 23;

// The 23 content information units of the Cookie Theft picture. Codes are
// stable and the canonical names below are the ones used by every file
// format in this library.
enum class CiuId : int {
  Boy = 0,
  Girl,
  Woman,
  Kitchen,
  Outside,
  Cookie,
  Jar,
  Stool,
  Sink,
  Plate,
  Dishcloth,
  Water,
  Window,
  Cupboard,
  Dishes,
  Curtains,
  BoyTakingStealing,
  BoyOrStoolFalling,
  WomanDryingWashingPlates,
  WaterOverflowing,
  ActionPerformedByGirl,
  WomanUnconcernedByOverflowing,
  WomanIndifferentToTheChildren,
};

inline const std::array<std::string_view, kCiuCount>& ciu_names() {
  static const std::array<std::string_view, kCiuCount> names = {
      "boy",
      "girl",
      "woman",
      "kitchen",
      "outside",
      "cookie",
      "jar",
      "stool",
      "sink",
      "plate",
      "dishcloth",
      "water",
      "window",
      "cupboard",
      "dishes",
      "curtains",
      "boy taking/stealing",
      "boy or stool falling",
      "woman drying/washing plates",
      "water overflowing",
      "action performed by girl",
      "woman unconcerned by overflowing",
      "woman indifferent to the children",
  };
  return names;
}

inline int ciu_code(CiuId id) { return static_cast<int>(id); }

inline CiuId ciu_from_code(int code) {
  if (code < 0 || code >= kCiuCount)
    throw UnknownCiuError("CIU code out of range: " + std::to_string(code));
  return static_cast<CiuId>(code);
}

inline std::string_view canonical_name(CiuId id) { return ciu_names()[static_cast<std::size_t>(ciu_code(id))]; }

// Case-insensitive, whitespace-normalized lookup of a canonical CIU name.
inline CiuId parse_ciu_name(std::string_view name) {
  const std::string key = normalize_spaces(name);
  const auto& names = ciu_names();
  for (int i = 0; i < kCiuCount; ++i) {
    if (key == names[static_cast<std::size_t>(i)]) return static_cast<CiuId>(i);
  }
  throw UnknownCiuError("unknown CIU name: \"" + std::string(name) + "\"");
}

// One element of an ordered CIU sequence. `sentence` is the index of the
// sentence the item came from, or -1 when no sentence attribution exists.
struct CiuItem {
  CiuId id;
  int sentence = -1;

  friend bool operator==(const CiuItem&, const CiuItem&) = default;
};

using CiuSequence = std::vector<CiuItem>;

inline std::vector<CiuId> sequence_ids(const CiuSequence& seq) {
  std::vector<CiuId> out;
  out.reserve(seq.size());
  for (const auto& item : seq) out.push_back(item.id);
  return out;
}

enum class Quadrant : int { UpperLeft = 0, UpperRight, LowerLeft, LowerRight };

inline std::string_view quadrant_name(Quadrant q) {
  switch (q) {
    case Quadrant::UpperLeft: return "upper_left";
    case Quadrant::UpperRight: return "upper_right";
    case Quadrant::LowerLeft: return "lower_left";
    case Quadrant::LowerRight: return "lower_right";
  }
  return "?";
}

// Normalized picture coordinates for every CIU. x grows rightward, y grows
// downward (image convention). sx/sy are the quadrant split lines.
struct CoordinateMap {
  std::array<double, kCiuCount> x{};
  std::array<double, kCiuCount> y{};
  double sx = 0.5;
  double sy = 0.5;

  double x_of(CiuId id) const { return x[static_cast<std::size_t>(ciu_code(id))]; }
  double y_of(CiuId id) const { return y[static_cast<std::size_t>(ciu_code(id))]; }
};

// Points on a split line land Right / Lower so the assignment is total.
inline Quadrant quadrant_at(double x, double y, double sx, double sy) {
  const bool left = x < sx;
  const bool upper = y < sy;
  if (upper) return left ? Quadrant::UpperLeft : Quadrant::UpperRight;
  return left ? Quadrant::LowerLeft : Quadrant::LowerRight;
}

inline Quadrant quadrant_of(CiuId id, const CoordinateMap& map) {
  return quadrant_at(map.x_of(id), map.y_of(id), map.sx, map.sy);
}

// Coordinate-map file: one `<ciu name>\t<x>\t<y>` row per CIU, `#` comments,
// optional `#sx=<v> sy=<v>` header for the split lines.
inline CoordinateMap load_coordinate_map(std::istream& in) {
  CoordinateMap map;
  std::array<bool, kCiuCount> seen{};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view stripped = trim(line);
    if (stripped.empty()) continue;
    if (stripped.front() == '#') {
      // Split-line header, e.g. "#sx=0.5 sy=0.5".
      if (stripped.rfind("#sx=", 0) == 0) {
        const auto parts = split_whitespace(stripped.substr(1));
        for (const auto& part : parts) {
          const auto kv = split(part, '=');
          if (kv.size() != 2)
            throw ParseError("coordinate map line " + std::to_string(lineno) + ": bad split header");
          double v = 0.0;
          try {
            v = parse_double(kv[1]);
          } catch (const std::exception&) {
            throw ParseError("coordinate map line " + std::to_string(lineno) + ": bad split value");
          }
          if (!(v > 0.0 && v < 1.0))
            throw OutOfRangeError("coordinate map line " + std::to_string(lineno) +
                                  ": split line must lie strictly inside (0,1)");
          if (kv[0] == "sx")
            map.sx = v;
          else if (kv[0] == "sy")
            map.sy = v;
          else
            throw ParseError("coordinate map line " + std::to_string(lineno) + ": unknown split key " + kv[0]);
        }
      }
      continue;
    }
    const auto fields = split(stripped, '\t');
    if (fields.size() != 3)
      throw ParseError("coordinate map line " + std::to_string(lineno) +
                       ": expected <ciu name>\\t<x>\\t<y>, got \"" + std::string(stripped) + "\"");
    CiuId id;
    try {
      id = parse_ciu_name(fields[0]);
    } catch (const UnknownCiuError& e) {
      throw UnknownCiuError("coordinate map line " + std::to_string(lineno) + ": " + e.what());
    }
    double px = 0.0, py = 0.0;
    try {
      px = parse_double(trim(fields[1]));
      py = parse_double(trim(fields[2]));
    } catch (const std::exception&) {
      throw ParseError("coordinate map line " + std::to_string(lineno) + ": bad coordinate");
    }
    if (!(px >= 0.0 && px <= 1.0 && py >= 0.0 && py <= 1.0))
      throw OutOfRangeError("coordinate map line " + std::to_string(lineno) +
                            ": coordinates must lie in [0,1]");
    const auto idx = static_cast<std::size_t>(ciu_code(id));
    if (seen[idx])
      throw ParseError("coordinate map line " + std::to_string(lineno) + ": duplicate CIU \"" +
                       std::string(canonical_name(id)) + "\"");
    seen[idx] = true;
    map.x[idx] = px;
    map.y[idx] = py;
  }
  std::string missing;
  for (int i = 0; i < kCiuCount; ++i) {
    if (!seen[static_cast<std::size_t>(i)]) {
      if (!missing.empty()) missing += ", ";
      missing += ciu_names()[static_cast<std::size_t>(i)];
    }
  }
  if (!missing.empty()) throw MissingCiuError("coordinate map is missing: " + missing);
  return map;
}

inline CoordinateMap load_coordinate_map_string(std::string_view text) {
  std::istringstream in{std::string(text)};
  return load_coordinate_map(in);
}

}  // namespace ciuseq
