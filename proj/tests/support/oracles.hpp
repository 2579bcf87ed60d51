#pragma once

// Independent reference computations used by the unit and acceptance tests.
// None of these call into the library beyond reading graph and policy data.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <vector>

#include "fpc/env.hpp"
#include "fpc/policy.hpp"

namespace oracle {

// Kosaraju: DFS finish order on G, then DFS on the transpose.
inline int count_sccs(const std::vector<std::vector<int>>& adj) {
  const int n = static_cast<int>(adj.size());
  std::vector<std::vector<int>> rev(n);
  for (int u = 0; u < n; ++u) {
    for (int v : adj[u]) rev[v].push_back(u);
  }
  std::vector<char> seen(n, 0);
  std::vector<int> order;
  for (int s = 0; s < n; ++s) {
    if (seen[s]) continue;
    // iterative DFS with explicit edge cursors
    std::vector<std::pair<int, std::size_t>> stack{{s, 0}};
    seen[s] = 1;
    while (!stack.empty()) {
      auto& [u, i] = stack.back();
      if (i < adj[u].size()) {
        const int v = adj[u][i++];
        if (!seen[v]) {
          seen[v] = 1;
          stack.push_back({v, 0});
        }
      } else {
        order.push_back(u);
        stack.pop_back();
      }
    }
  }
  std::vector<int> comp(n, -1);
  int count = 0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (comp[*it] >= 0) continue;
    std::vector<int> stack{*it};
    comp[*it] = count;
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      for (int v : rev[u]) {
        if (comp[v] < 0) {
          comp[v] = count;
          stack.push_back(v);
        }
      }
    }
    ++count;
  }
  return count;
}

inline std::vector<double> probabilities(const fpc::Policy& policy, int current, int goal,
                                         double temperature) {
  const auto row = policy.row(current, goal);
  double m = row[0];
  for (double x : row) m = std::max(m, x);
  std::vector<double> p(row.size());
  double z = 0.0;
  for (std::size_t i = 0; i < row.size(); ++i) {
    p[i] = std::exp((row[i] - m) / temperature);
    z += p[i];
  }
  for (double& x : p) x /= z;
  return p;
}

// Exact success probability from (current, steps_used) by backward induction
// over the remaining budget. STOP succeeds only at the goal; a move that uses
// the last step of the budget fails.
inline double dp_accuracy(const fpc::Policy& policy, const fpc::WorldGraph& graph, int goal,
                          int current, int steps_used, double temperature) {
  const int n = graph.node_count;
  const int h = graph.budget;
  // value[s][v]: success probability at node v with s steps used
  std::vector<std::vector<double>> value(h + 1, std::vector<double>(n, 0.0));
  for (int s = h - 1; s >= 0; --s) {
    for (int v = 0; v < n; ++v) {
      const auto p = probabilities(policy, v, goal, temperature);
      double total = v == goal ? p[graph.out_degree] : 0.0;
      if (s + 1 < h) {
        for (int slot = 0; slot < graph.out_degree; ++slot) {
          total += p[slot] * value[s + 1][graph.edges[v][slot]];
        }
      }
      value[s][v] = total;
    }
  }
  return steps_used >= h ? 0.0 : value[steps_used][current];
}

// Average over all k-subsets of n samples (c of them correct) of the
// indicator that the subset holds a correct sample.
inline double pass_at_k_enumerated(int n, int c, int k) {
  std::uint64_t hits = 0;
  std::uint64_t total = 0;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    if (std::popcount(mask) != k) continue;
    ++total;
    // samples 0..c-1 are the correct ones
    if ((mask & ((1u << c) - 1u)) != 0) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

inline std::vector<double> ranks(const std::vector<double>& x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) r[idx[t]] = avg;
    i = j + 1;
  }
  return r;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  return pearson(ranks(x), ranks(y));
}

// One-sided exact permutation p-value P(rho <= observed) for untied data,
// enumerating all n! orderings (n <= 10).
inline double spearman_p_lower(const std::vector<double>& x, const std::vector<double>& y) {
  const double observed = spearman(x, y);
  std::vector<double> rx = ranks(x);
  std::vector<double> ry = ranks(y);
  std::vector<int> perm(ry.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::uint64_t le = 0;
  std::uint64_t total = 0;
  do {
    std::vector<double> permuted(ry.size());
    for (std::size_t i = 0; i < perm.size(); ++i) permuted[i] = ry[perm[i]];
    if (pearson(rx, permuted) <= observed + 1e-12) ++le;
    ++total;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(le) / static_cast<double>(total);
}

inline fpc::WorldGraph complete_graph(int n, int budget) {
  fpc::WorldGraph g;
  g.node_count = n;
  g.out_degree = n - 1;
  g.budget = budget;
  g.edges.resize(n);
  for (int u = 0; u < n; ++u) {
    for (int v = 0; v < n; ++v) {
      if (v != u) g.edges[u].push_back(v);
    }
  }
  return g;
}

}  // namespace oracle
