#pragma once

#include <set>
#include <string>
#include <utility>
#include <vector>

#include "itd/preprocess.hpp"

namespace itd::graph {

// Equivalence classes for type-based edges: logon/logoff pair up, so do
// connect/disconnect; file subtypes stay distinct.
int type_class(int type_id);
inline constexpr int knTypeClasses = 6;

struct ExplicitGraph {
  int n_nodes = 0;
  // Directed pairs kept symmetric; self-loops are never stored.
  std::set<std::pair<int, int>> edges;
  // Type class per node; -1 for the masked node (its type is hidden).
  std::vector<int> node_class;
  int mask_pos = 0;
};

ExplicitGraph build_explicit(const std::vector<int>& type_ids, int mask_pos);
ExplicitGraph build_explicit(const prep::MaskedSequence& seq);

struct BatchedGraph {
  int total_nodes = 0;
  std::set<std::pair<int, int>> edges;
  std::vector<int> graph_id;
  std::vector<std::pair<int, int>> node_ranges;  // [begin, end) per graph
  std::vector<int> mask_positions;               // global index per graph
  std::vector<int> node_class;
};

BatchedGraph batch(const std::vector<ExplicitGraph>& graphs);
std::vector<ExplicitGraph> unbatch(const BatchedGraph& batched);

// Debug dump: `v <node> <class>` lines, then `<i> <j>` edge lines.
std::string to_edge_list(const ExplicitGraph& graph);

}  // namespace itd::graph
