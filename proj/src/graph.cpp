#include "itd/graph.hpp"

#include <sstream>

namespace itd::graph {

int type_class(int type_id) {
  switch (type_id) {
    case 0:
    case 1: return 0;  // Logon, Logoff
    case 2: return 1;  // email
    case 3: return 2;  // Http
    case 4: return 3;  // File Open
    case 5: return 4;  // File Write
    case 6:
    case 7: return 5;  // Connect, Disconnect
    default:
      throw ConfigError("type_id out of range: " + std::to_string(type_id));
  }
}

ExplicitGraph build_explicit(const std::vector<int>& type_ids, int mask_pos) {
  int n = static_cast<int>(type_ids.size());
  if (n < 1) throw ConfigError("cannot build a graph over an empty sequence");
  if (mask_pos < 0 || mask_pos >= n)
    throw ConfigError("mask position outside sequence");
  ExplicitGraph g;
  g.n_nodes = n;
  g.mask_pos = mask_pos;
  g.node_class.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    g.node_class[static_cast<std::size_t>(i)] =
        i == mask_pos ? -1 : type_class(type_ids[static_cast<std::size_t>(i)]);

  for (int i = 0; i + 1 < n; ++i) {
    g.edges.emplace(i, i + 1);
    g.edges.emplace(i + 1, i);
  }
  std::vector<std::vector<int>> members(knTypeClasses);
  for (int i = 0; i < n; ++i)
    if (i != mask_pos)
      members[static_cast<std::size_t>(
                  type_class(type_ids[static_cast<std::size_t>(i)]))]
          .push_back(i);
  for (const auto& group : members)
    for (std::size_t a = 0; a < group.size(); ++a)
      for (std::size_t b = a + 1; b < group.size(); ++b) {
        g.edges.emplace(group[a], group[b]);
        g.edges.emplace(group[b], group[a]);
      }
  return g;
}

ExplicitGraph build_explicit(const prep::MaskedSequence& seq) {
  std::vector<int> type_ids;
  type_ids.reserve(seq.sub->activities.size());
  for (const auto& a : seq.sub->activities) type_ids.push_back(a.type_id);
  return build_explicit(type_ids, seq.mask_pos);
}

BatchedGraph batch(const std::vector<ExplicitGraph>& graphs) {
  BatchedGraph b;
  for (std::size_t g = 0; g < graphs.size(); ++g) {
    const ExplicitGraph& graph = graphs[g];
    int offset = b.total_nodes;
    b.node_ranges.emplace_back(offset, offset + graph.n_nodes);
    b.mask_positions.push_back(offset + graph.mask_pos);
    for (int i = 0; i < graph.n_nodes; ++i) {
      b.graph_id.push_back(static_cast<int>(g));
      b.node_class.push_back(graph.node_class[static_cast<std::size_t>(i)]);
    }
    for (const auto& [i, j] : graph.edges)
      b.edges.emplace(i + offset, j + offset);
    b.total_nodes += graph.n_nodes;
  }
  return b;
}

std::vector<ExplicitGraph> unbatch(const BatchedGraph& batched) {
  std::vector<ExplicitGraph> out(batched.node_ranges.size());
  for (std::size_t g = 0; g < out.size(); ++g) {
    auto [begin, end] = batched.node_ranges[g];
    ExplicitGraph& graph = out[g];
    graph.n_nodes = end - begin;
    graph.mask_pos = batched.mask_positions[g] - begin;
    graph.node_class.assign(batched.node_class.begin() + begin,
                            batched.node_class.begin() + end);
  }
  for (const auto& [i, j] : batched.edges) {
    int g = batched.graph_id[static_cast<std::size_t>(i)];
    if (g != batched.graph_id[static_cast<std::size_t>(j)])
      throw DataError("batched graph has a cross-graph edge");
    int begin = batched.node_ranges[static_cast<std::size_t>(g)].first;
    out[static_cast<std::size_t>(g)].edges.emplace(i - begin, j - begin);
  }
  return out;
}

std::string to_edge_list(const ExplicitGraph& graph) {
  std::ostringstream out;
  for (int i = 0; i < graph.n_nodes; ++i)
    out << "v " << i << " " << graph.node_class[static_cast<std::size_t>(i)]
        << "\n";
  for (const auto& [i, j] : graph.edges) out << i << " " << j << "\n";
  return out.str();
}

}  // namespace itd::graph
