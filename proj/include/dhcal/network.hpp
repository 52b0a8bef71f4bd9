#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dhcal/errors.hpp"

namespace dhcal {

/// One directed edge of the supply tree, pointing away from the root.
/// The matching return pipe is implicit: every edge stands for a
/// supply/return pair with identical resistance.
struct EdgeDef {
  std::string id;
  std::string from;
  std::string to;
};

/// Declarative description of a radial (tree-shaped) heating network.
///
/// `nodes` fixes the canonical node order, `edges` the canonical edge
/// order, and `consumers` the canonical consumer order used by every
/// vector quantity in the library (flows, valve parameters, ...).
struct NetworkTopology {
  std::vector<std::string> nodes;
  std::string root;
  std::vector<EdgeDef> edges;
  std::vector<std::string> consumers;
};

/// Checks a topology against the structural rules for radial networks and
/// returns a list of violations, one message each (empty means valid):
///
///  * ids are unique, edge endpoints and consumers name declared nodes;
///  * edge count is node count minus one and every non-root node has
///    exactly one incoming edge, the root none (rooted spanning tree,
///    edges oriented away from the root);
///  * consumers sit at leaves;
///  * every non-consumer node other than the root joins at least three
///    edges, so no junction is silently in series with another pipe.
inline std::vector<std::string> validate_topology(const NetworkTopology& t) {
  std::vector<std::string> out;

  std::unordered_map<std::string, int> node_ix;
  for (std::size_t i = 0; i < t.nodes.size(); ++i) {
    if (!node_ix.emplace(t.nodes[i], static_cast<int>(i)).second)
      out.push_back("duplicate node id '" + t.nodes[i] + "'");
  }
  if (t.nodes.empty()) {
    out.push_back("no nodes declared");
    return out;
  }
  if (!node_ix.count(t.root))
    out.push_back("root '" + t.root + "' is not a declared node");

  std::unordered_map<std::string, int> edge_ix;
  std::vector<int> in_deg(t.nodes.size(), 0), degree(t.nodes.size(), 0);
  std::vector<int> out_deg(t.nodes.size(), 0);
  bool endpoints_ok = true;
  for (std::size_t j = 0; j < t.edges.size(); ++j) {
    const EdgeDef& e = t.edges[j];
    if (!edge_ix.emplace(e.id, static_cast<int>(j)).second)
      out.push_back("duplicate edge id '" + e.id + "'");
    auto fu = node_ix.find(e.from);
    auto fv = node_ix.find(e.to);
    if (fu == node_ix.end()) {
      out.push_back("edge '" + e.id + "' leaves unknown node '" + e.from + "'");
      endpoints_ok = false;
    }
    if (fv == node_ix.end()) {
      out.push_back("edge '" + e.id + "' enters unknown node '" + e.to + "'");
      endpoints_ok = false;
    }
    if (fu != node_ix.end() && fv != node_ix.end() && fu->second == fv->second)
      out.push_back("edge '" + e.id + "' is a self loop at '" + e.from + "'");
    if (fu != node_ix.end()) {
      ++out_deg[fu->second];
      ++degree[fu->second];
    }
    if (fv != node_ix.end()) {
      ++in_deg[fv->second];
      ++degree[fv->second];
    }
  }

  if (t.edges.size() + 1 != t.nodes.size())
    out.push_back("edge count " + std::to_string(t.edges.size()) +
                  " does not match node count " +
                  std::to_string(t.nodes.size()) + " minus one");

  if (endpoints_ok && node_ix.count(t.root)) {
    for (std::size_t i = 0; i < t.nodes.size(); ++i) {
      const bool is_root = t.nodes[i] == t.root;
      if (is_root && in_deg[i] != 0)
        out.push_back("root '" + t.nodes[i] + "' has an incoming edge");
      if (!is_root && in_deg[i] != 1)
        out.push_back("node '" + t.nodes[i] + "' has " +
                      std::to_string(in_deg[i]) +
                      " incoming edges, expected exactly 1");
    }
    // Reachability: with the in-degree rule satisfied a disconnected part
    // would contain a cycle, which the edge-count rule already excludes,
    // but check explicitly so the message names the stranded node.
    std::vector<std::vector<int>> children(t.nodes.size());
    for (const EdgeDef& e : t.edges) {
      auto fu = node_ix.find(e.from), fv = node_ix.find(e.to);
      if (fu != node_ix.end() && fv != node_ix.end())
        children[fu->second].push_back(fv->second);
    }
    std::vector<char> seen(t.nodes.size(), 0);
    std::vector<int> stack{node_ix.at(t.root)};
    seen[node_ix.at(t.root)] = 1;
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      for (int v : children[u])
        if (!seen[v]) {
          seen[v] = 1;
          stack.push_back(v);
        }
    }
    for (std::size_t i = 0; i < t.nodes.size(); ++i)
      if (!seen[i])
        out.push_back("node '" + t.nodes[i] + "' is unreachable from root");
  }

  std::unordered_map<std::string, int> consumer_ix;
  for (std::size_t c = 0; c < t.consumers.size(); ++c) {
    const std::string& id = t.consumers[c];
    if (!consumer_ix.emplace(id, static_cast<int>(c)).second) {
      out.push_back("duplicate consumer '" + id + "'");
      continue;
    }
    auto f = node_ix.find(id);
    if (f == node_ix.end()) {
      out.push_back("consumer '" + id + "' is not a declared node");
      continue;
    }
    if (id == t.root) {
      out.push_back("consumer '" + id + "' is the root node");
      continue;
    }
    if (endpoints_ok && out_deg[f->second] != 0)
      out.push_back("consumer '" + id + "' is not a leaf");
  }
  if (t.consumers.empty()) out.push_back("no consumers declared");

  if (endpoints_ok && node_ix.count(t.root)) {
    for (std::size_t i = 0; i < t.nodes.size(); ++i) {
      if (t.nodes[i] == t.root || consumer_ix.count(t.nodes[i])) continue;
      if (degree[i] < 3)
        out.push_back("junction '" + t.nodes[i] + "' joins only " +
                      std::to_string(degree[i]) +
                      " edges; non-consumer junctions need at least 3");
    }
  }

  return out;
}

/// A validated topology with dense integer indexing.  Construction throws
/// TopologyError listing every violation if the description is not a
/// consumer-at-the-leaves rooted tree.  Immutable after construction and
/// safe to share across threads.
class Network {
 public:
  explicit Network(NetworkTopology t) : topo_(std::move(t)) {
    auto violations = validate_topology(topo_);
    if (!violations.empty()) throw TopologyError(std::move(violations));

    for (std::size_t i = 0; i < topo_.nodes.size(); ++i)
      node_ix_[topo_.nodes[i]] = static_cast<int>(i);
    root_ = node_ix_.at(topo_.root);

    parent_edge_.assign(topo_.nodes.size(), -1);
    child_edges_.assign(topo_.nodes.size(), {});
    edge_from_.resize(topo_.edges.size());
    edge_to_.resize(topo_.edges.size());
    for (std::size_t j = 0; j < topo_.edges.size(); ++j) {
      edge_ix_[topo_.edges[j].id] = static_cast<int>(j);
      int u = node_ix_.at(topo_.edges[j].from);
      int v = node_ix_.at(topo_.edges[j].to);
      edge_from_[j] = u;
      edge_to_[j] = v;
      parent_edge_[v] = static_cast<int>(j);
      child_edges_[u].push_back(static_cast<int>(j));
    }

    consumer_node_.resize(topo_.consumers.size());
    consumer_at_node_.assign(topo_.nodes.size(), -1);
    paths_.resize(topo_.consumers.size());
    for (std::size_t c = 0; c < topo_.consumers.size(); ++c) {
      int v = node_ix_.at(topo_.consumers[c]);
      consumer_node_[c] = v;
      consumer_at_node_[v] = static_cast<int>(c);
      // Collect the root-to-leaf edge path by walking parents.
      std::vector<int>& path = paths_[c];
      for (int n = v; n != root_; n = edge_from_[parent_edge_[n]])
        path.push_back(parent_edge_[n]);
      std::reverse(path.begin(), path.end());
    }
  }

  const NetworkTopology& topology() const noexcept { return topo_; }
  std::size_t node_count() const noexcept { return topo_.nodes.size(); }
  std::size_t edge_count() const noexcept { return topo_.edges.size(); }
  std::size_t consumer_count() const noexcept { return topo_.consumers.size(); }
  int root() const noexcept { return root_; }

  int node_index(const std::string& id) const {
    auto f = node_ix_.find(id);
    if (f == node_ix_.end()) throw Error("unknown node '" + id + "'");
    return f->second;
  }
  int edge_index(const std::string& id) const {
    auto f = edge_ix_.find(id);
    if (f == edge_ix_.end()) throw Error("unknown edge '" + id + "'");
    return f->second;
  }

  /// Parent edge index of a node, -1 for the root.
  int parent_edge(int node) const { return parent_edge_.at(node); }
  /// Edges leaving `node`, in edge declaration order.
  const std::vector<int>& child_edges(int node) const {
    return child_edges_.at(node);
  }
  int edge_from(int edge) const { return edge_from_.at(edge); }
  int edge_to(int edge) const { return edge_to_.at(edge); }
  /// Node index of consumer `c` (canonical consumer order).
  int consumer_node(int c) const { return consumer_node_.at(c); }
  /// Consumer index at `node`, -1 if the node is not a consumer.
  int consumer_at_node(int node) const { return consumer_at_node_.at(node); }

  /// Root-to-leaf edge paths, one per consumer in canonical order.  The
  /// path of consumer i is the set that couples its regression row to the
  /// pipe resistances it shares with other consumers.
  const std::vector<std::vector<int>>& consumer_paths() const noexcept {
    return paths_;
  }

  /// Node-edge incidence matrix with the root row dropped: entry (i, j) is
  /// +1 where edge j enters node i and -1 where it leaves.  Rows follow
  /// node declaration order minus the root, columns edge declaration
  /// order.  For a valid tree this matrix is square and unimodular.
  Eigen::MatrixXd incidence() const {
    Eigen::MatrixXd B =
        Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(node_count()) - 1,
                              static_cast<Eigen::Index>(edge_count()));
    std::vector<int> row(node_count(), -1);
    int r = 0;
    for (std::size_t i = 0; i < node_count(); ++i)
      if (static_cast<int>(i) != root_) row[i] = r++;
    for (std::size_t j = 0; j < edge_count(); ++j) {
      if (row[edge_from_[j]] >= 0) B(row[edge_from_[j]], j) = -1.0;
      if (row[edge_to_[j]] >= 0) B(row[edge_to_[j]], j) = 1.0;
    }
    return B;
  }

  /// Propagates one nonnegative flow per consumer (canonical order) up the
  /// tree and returns the per-edge flows implied by mass conservation with
  /// zero draw at junctions.  Throws on a size mismatch or negative flow;
  /// negative draws signal bad data and must be handled upstream.
  std::vector<double> propagate_flows(std::span<const double> consumer_flows) const {
    if (consumer_flows.size() != consumer_count())
      throw Error("propagate_flows: got " +
                  std::to_string(consumer_flows.size()) + " flows for " +
                  std::to_string(consumer_count()) + " consumers");
    for (std::size_t c = 0; c < consumer_flows.size(); ++c)
      if (!(consumer_flows[c] >= 0.0))
        throw DataError("propagate_flows: negative flow " +
                        std::to_string(consumer_flows[c]) + " at consumer '" +
                        topo_.consumers[c] + "'");
    std::vector<double> edge_q(edge_count(), 0.0);
    accumulate(root_, consumer_flows, edge_q);
    return edge_q;
  }

 private:
  // Post-order accumulation: the flow of a node's parent edge is its own
  // draw plus the flows of all child edges.
  double accumulate(int node, std::span<const double> draw,
                    std::vector<double>& edge_q) const {
    double q = consumer_at_node_[node] >= 0 ? draw[consumer_at_node_[node]] : 0.0;
    for (int e : child_edges_[node]) {
      edge_q[e] = accumulate(edge_to_[e], draw, edge_q);
      q += edge_q[e];
    }
    return q;
  }

  NetworkTopology topo_;
  std::unordered_map<std::string, int> node_ix_, edge_ix_;
  int root_ = 0;
  std::vector<int> parent_edge_, edge_from_, edge_to_;
  std::vector<std::vector<int>> child_edges_;
  std::vector<int> consumer_node_, consumer_at_node_;
  std::vector<std::vector<int>> paths_;
};

}  // namespace dhcal
