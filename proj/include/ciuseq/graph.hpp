#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ciuseq/ciu.hpp"
#include "ciuseq/text.hpp"

namespace ciuseq {

struct GraphNode {
  CiuId id;
  double x = 0.0;
  double y = 0.0;
  Quadrant quadrant = Quadrant::UpperLeft;
};

struct GraphEdge {
  int from = 0;
  int to = 0;
  double length = 0.0;
};

struct SpatioGraph {
  std::vector<GraphNode> nodes;
  std::vector<GraphEdge> edges;
};

inline SpatioGraph build_graph(const CiuSequence& seq, const CoordinateMap& map) {
  SpatioGraph g;
  g.nodes.reserve(seq.size());
  for (const CiuItem& item : seq) {
    GraphNode node;
    node.id = item.id;
    node.x = map.x_of(item.id);
    node.y = map.y_of(item.id);
    node.quadrant = quadrant_of(item.id, map);
    g.nodes.push_back(node);
  }
  for (std::size_t i = 0; i + 1 < g.nodes.size(); ++i) {
    const double dx = g.nodes[i + 1].x - g.nodes[i].x;
    const double dy = g.nodes[i + 1].y - g.nodes[i].y;
    g.edges.push_back({static_cast<int>(i), static_cast<int>(i + 1), std::sqrt(dx * dx + dy * dy)});
  }
  return g;
}

// The 12 path features. A disengaged optional marks a field that is undefined
// for the given graph (empty graph, or a ratio with a zero denominator);
// downstream statistics must skip those entries rather than substitute zeros.
struct FeatureVector {
  std::optional<double> avg_x;
  std::optional<double> std_x;
  std::optional<double> avg_y;
  std::optional<double> std_y;
  std::optional<double> total_path;
  std::optional<double> unique_nodes;
  std::optional<double> path_per_unique;
  std::optional<double> nodes;
  std::optional<double> self_cycles;
  std::optional<double> cycles;
  std::optional<double> self_cycles_quadrants;
  std::optional<double> cross_ratio_quadrants;

  static constexpr int kCount = 12;

  static const std::array<std::string, kCount>& names() {
    static const std::array<std::string, kCount> kNames = {
        "avg_x",  "std_x",       "avg_y",           "std_y",
        "total_path", "unique_nodes", "path_per_unique", "nodes",
        "self_cycles", "cycles",      "self_cycles_quadrants", "cross_ratio_quadrants"};
    return kNames;
  }

  std::optional<double>& at(int i) {
    std::optional<double>* fields[kCount] = {&avg_x,  &std_x,       &avg_y,           &std_y,
                                             &total_path, &unique_nodes, &path_per_unique, &nodes,
                                             &self_cycles, &cycles,      &self_cycles_quadrants,
                                             &cross_ratio_quadrants};
    return *fields[i];
  }

  const std::optional<double>& at(int i) const { return const_cast<FeatureVector*>(this)->at(i); }

  bool operator==(const FeatureVector&) const = default;
};

inline FeatureVector compute_features(const SpatioGraph& g) {
  FeatureVector f;
  const std::size_t n = g.nodes.size();
  if (n == 0) return f;  // every field stays invalid

  double sum_x = 0.0, sum_y = 0.0;
  std::set<CiuId> distinct;
  for (const GraphNode& node : g.nodes) {
    sum_x += node.x;
    sum_y += node.y;
    distinct.insert(node.id);
  }
  const double dn = static_cast<double>(n);
  const double mean_x = sum_x / dn;
  const double mean_y = sum_y / dn;
  double var_x = 0.0, var_y = 0.0;
  for (const GraphNode& node : g.nodes) {
    var_x += (node.x - mean_x) * (node.x - mean_x);
    var_y += (node.y - mean_y) * (node.y - mean_y);
  }
  f.avg_x = mean_x;
  f.avg_y = mean_y;
  f.std_x = std::sqrt(var_x / dn);
  f.std_y = std::sqrt(var_y / dn);

  double path = 0.0;
  for (const GraphEdge& e : g.edges) path += e.length;
  f.total_path = path;

  const double unique = static_cast<double>(distinct.size());
  f.unique_nodes = unique;
  f.path_per_unique = path / unique;
  f.nodes = dn;
  f.cycles = dn - unique;

  int self_cycles = 0, same_quadrant = 0, intra = 0, inter = 0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (g.nodes[i].id == g.nodes[i + 1].id) ++self_cycles;
    if (g.nodes[i].quadrant == g.nodes[i + 1].quadrant) {
      ++same_quadrant;
      ++intra;
    } else {
      ++inter;
    }
  }
  f.self_cycles = static_cast<double>(self_cycles);
  f.self_cycles_quadrants = static_cast<double>(same_quadrant);
  // Ratio is undefined (left invalid) when there are no intra-quadrant edges,
  // which covers both the zero-denominator case and graphs without edges.
  if (intra > 0) f.cross_ratio_quadrants = static_cast<double>(inter) / static_cast<double>(intra);
  return f;
}

// Header plus one row per speaker; undefined fields become empty cells.
inline std::string features_csv(const std::vector<std::pair<std::string, FeatureVector>>& rows) {
  std::ostringstream out;
  out << "speaker_id";
  for (const auto& name : FeatureVector::names()) out << "," << name;
  out << "\n";
  for (const auto& [speaker, fv] : rows) {
    out << speaker;
    for (int i = 0; i < FeatureVector::kCount; ++i) {
      out << ",";
      if (fv.at(i).has_value()) out << format_double(*fv.at(i));
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace ciuseq
