#pragma once

#include <random>
#include <string>
#include <vector>

#include "dhcal/network.hpp"

namespace fixtures {

// Four consumers hanging off a three-junction spine, the shape used by the
// bundled presets: root -> j5 -> j6 -> j7, one consumer per junction plus a
// second one at the end.
inline dhcal::NetworkTopology tree4() {
  dhcal::NetworkTopology t;
  t.nodes = {"alpha", "c1", "c2", "c3", "c4", "j5", "j6", "j7"};
  t.root = "alpha";
  t.edges = {
      {"e1", "j5", "c1"}, {"e2", "j6", "c2"}, {"e3", "j7", "c3"},
      {"e4", "j7", "c4"}, {"e5", "alpha", "j5"}, {"e6", "j5", "j6"},
      {"e7", "j6", "j7"},
  };
  t.consumers = {"c1", "c2", "c3", "c4"};
  return t;
}

// Line network with n consumers: a junction spine where every junction
// feeds one consumer branch plus the next trunk segment, ending in a pair
// of consumers.  n = 4 reproduces the tree4 shape.
inline dhcal::NetworkTopology line_network(int n) {
  dhcal::NetworkTopology t;
  t.root = "alpha";
  t.nodes = {"alpha"};
  int edge = 0;
  auto add_edge = [&](const std::string& from, const std::string& to) {
    t.nodes.push_back(to);
    t.edges.push_back({"e" + std::to_string(++edge), from, to});
  };
  add_edge("alpha", "j1");
  for (int k = 1; k + 1 < n; ++k) {
    add_edge("j" + std::to_string(k), "c" + std::to_string(k));
    t.consumers.push_back("c" + std::to_string(k));
    add_edge("j" + std::to_string(k), "j" + std::to_string(k + 1));
  }
  const std::string last = "j" + std::to_string(n - 1);
  add_edge(last, "c" + std::to_string(n - 1));
  t.consumers.push_back("c" + std::to_string(n - 1));
  add_edge(last, "c" + std::to_string(n));
  t.consumers.push_back("c" + std::to_string(n));
  return t;
}

// Random rooted tree with every junction carrying at least two children,
// so the degree rule holds without special cases.  Leaves become
// consumers.  Edges are declared parent-first in creation order.
inline dhcal::NetworkTopology random_tree(std::mt19937_64& rng,
                                          int max_consumers) {
  dhcal::NetworkTopology t;
  t.root = "alpha";
  t.nodes = {"alpha"};
  int serial = 0;
  std::uniform_int_distribution<int> more(0, 99);

  struct Pending {
    std::string node;
    int depth;
  };
  std::vector<Pending> open;
  auto add_edge = [&](const std::string& from, const std::string& to) {
    t.nodes.push_back(to);
    t.edges.push_back({"e" + std::to_string(t.edges.size() + 1), from, to});
  };

  // Root feeds a single trunk, as in a pump-fed network.
  add_edge("alpha", "n" + std::to_string(++serial));
  open.push_back({t.nodes.back(), 0});

  int leaves = 0;
  while (!open.empty()) {
    Pending p = open.back();
    open.pop_back();
    const int remaining = max_consumers - leaves -
                          static_cast<int>(open.size());
    const bool can_split = remaining >= 2 && p.depth < 4;
    if (can_split && more(rng) < 55) {
      const int kids = 2 + (remaining > 2 && more(rng) < 30 ? 1 : 0);
      for (int k = 0; k < kids; ++k) {
        add_edge(p.node, "n" + std::to_string(++serial));
        open.push_back({t.nodes.back(), p.depth + 1});
      }
    } else {
      t.consumers.push_back(p.node);
      ++leaves;
    }
  }
  return t;
}

}  // namespace fixtures
