// SPDX-License-Identifier: MIT

#include "cfa/analysis.hpp"

#include <algorithm>
#include <functional>
#include <set>

namespace cfa {

namespace {

// Reverse postorder over `succs` starting at `root`, local node ids.
std::vector<int> reverse_postorder(int n, int root,
                                   const std::vector<std::vector<int>>& succs) {
  std::vector<int> order;
  std::vector<char> seen(n, 0);
  std::function<void(int)> dfs = [&](int v) {
    seen[v] = 1;
    for (int s : succs[v])
      if (!seen[s]) dfs(s);
    order.push_back(v);
  };
  dfs(root);
  std::reverse(order.begin(), order.end());
  return order;
}

// Cooper–Harvey–Kennedy iterative dominators on a local graph. Returns
// idom in local ids; root maps to itself. Nodes unreachable from root get -1.
std::vector<int> chk_dominators(int n, int root,
                                const std::vector<std::vector<int>>& succs) {
  std::vector<std::vector<int>> preds(n);
  for (int v = 0; v < n; ++v)
    for (int s : succs[v]) preds[s].push_back(v);

  auto rpo = reverse_postorder(n, root, succs);
  std::vector<int> rpo_pos(n, -1);
  for (std::size_t i = 0; i < rpo.size(); ++i) rpo_pos[rpo[i]] = static_cast<int>(i);

  std::vector<int> idom(n, -1);
  idom[root] = root;
  auto intersect = [&](int a, int b) {
    while (a != b) {
      while (rpo_pos[a] > rpo_pos[b]) a = idom[a];
      while (rpo_pos[b] > rpo_pos[a]) b = idom[b];
    }
    return a;
  };

  bool changed = true;
  while (changed) {
    changed = false;
    for (int v : rpo) {
      if (v == root) continue;
      int new_idom = -1;
      for (int p : preds[v]) {
        if (rpo_pos[p] < 0 || idom[p] == -1) continue;  // not yet processed
        new_idom = new_idom == -1 ? p : intersect(p, new_idom);
      }
      if (new_idom != -1 && idom[v] != new_idom) {
        idom[v] = new_idom;
        changed = true;
      }
    }
  }
  return idom;
}

bool is_terminal(const BasicBlock& b) {
  auto k = b.terminator().kind;
  return k == InstrKind::Return || k == InstrKind::Exit;
}

}  // namespace

bool DominatorInfo::dominates(int a, int b) const {
  for (int v = b; v != -1; v = idom[v]) {
    if (v == a) return true;
    if (idom[v] == v) return v == a;  // defensive; roots store -1
  }
  return false;
}

bool DominatorInfo::postdominates(int a, int b) const {
  for (int v = b; v != -1; v = ipostdom[v])
    if (v == a) return true;
  return false;
}

DominatorInfo compute_dominators(const ProgramCFG& cfg) {
  DominatorInfo out;
  out.idom.assign(cfg.blocks.size(), -1);
  out.ipostdom.assign(cfg.blocks.size(), -1);

  for (const auto& fn : cfg.functions) {
    const int n = static_cast<int>(fn.blocks.size());
    std::vector<int> local_of_global(cfg.blocks.size(), -1);
    for (int i = 0; i < n; ++i) local_of_global[fn.blocks[i]] = i;

    // Forward graph in local ids.
    std::vector<std::vector<int>> succs(n);
    for (int i = 0; i < n; ++i)
      for (int s : cfg.successors(fn.blocks[i]))
        if (s >= 0) succs[i].push_back(local_of_global[s]);

    auto idom = chk_dominators(n, local_of_global[fn.entry], succs);
    for (int i = 0; i < n; ++i) {
      if (idom[i] == -1 || idom[i] == i) continue;  // root or unreachable
      out.idom[fn.blocks[i]] = fn.blocks[idom[i]];
    }

    // Reverse graph with a virtual sink (local id n) fed by terminal blocks.
    std::vector<std::vector<int>> rsuccs(n + 1);
    for (int i = 0; i < n; ++i)
      for (int s : succs[i]) rsuccs[s].push_back(i);
    for (int i = 0; i < n; ++i)
      if (is_terminal(cfg.blocks[fn.blocks[i]])) rsuccs[n].push_back(i);

    auto ipdom = chk_dominators(n + 1, n, rsuccs);
    for (int i = 0; i < n; ++i) {
      if (ipdom[i] == -1 || ipdom[i] == n) continue;  // virtual sink / no exit path
      out.ipostdom[fn.blocks[i]] = fn.blocks[ipdom[i]];
    }
  }
  return out;
}

std::vector<BackEdge> back_edges(const ProgramCFG& cfg, const DominatorInfo& dom) {
  std::vector<BackEdge> out;
  for (const auto& b : cfg.blocks)
    for (int s : cfg.successors(b.index))
      if (s >= 0 && cfg.blocks[s].func == b.func && dom.dominates(s, b.index))
        out.push_back({b.index, s});
  return out;
}

bool Loop::contains(int block) const {
  return std::binary_search(body.begin(), body.end(), block);
}

std::vector<Loop> natural_loops(const ProgramCFG& cfg, const DominatorInfo& dom) {
  std::vector<Loop> loops;
  for (const auto& be : back_edges(cfg, dom)) {
    Loop* loop = nullptr;
    for (auto& l : loops)
      if (l.header == be.dst) loop = &l;
    if (!loop) {
      loops.push_back({});
      loop = &loops.back();
      loop->header = be.dst;
      loop->body = {be.dst};
    }
    loop->latches.push_back(be);
    // Standard natural-loop body: walk predecessors backwards from the latch
    // until the header.
    std::set<int> body(loop->body.begin(), loop->body.end());
    std::vector<int> work;
    if (!body.count(be.src)) {
      body.insert(be.src);
      work.push_back(be.src);
    }
    while (!work.empty()) {
      int v = work.back();
      work.pop_back();
      for (int p : cfg.predecessors(v))
        if (cfg.blocks[p].func == cfg.blocks[loop->header].func && body.insert(p).second)
          work.push_back(p);
    }
    loop->body.assign(body.begin(), body.end());
  }
  return loops;
}

BallLarusNumbering ball_larus_number(const ProgramCFG& cfg, int func) {
  const Function& fn = cfg.functions[func];
  const int n = static_cast<int>(fn.blocks.size());
  const int ventry = n, vexit = n + 1;

  std::vector<int> local_of_global(cfg.blocks.size(), -1);
  for (int i = 0; i < n; ++i) local_of_global[fn.blocks[i]] = i;

  DominatorInfo dom = compute_dominators(cfg);
  std::set<std::pair<int, int>> back;  // (src local, succ ordinal)
  std::vector<int> back_heads;         // local header ids, dedup, deterministic
  for (int i = 0; i < n; ++i) {
    auto& succs = cfg.successors(fn.blocks[i]);
    for (std::size_t k = 0; k < succs.size(); ++k) {
      int s = succs[k];
      if (s >= 0 && dom.dominates(s, fn.blocks[i])) {
        back.insert({i, static_cast<int>(k)});
        int h = local_of_global[s];
        if (std::find(back_heads.begin(), back_heads.end(), h) == back_heads.end())
          back_heads.push_back(h);
      }
    }
  }

  // DAG edges in deterministic order. Each edge remembers which runtime
  // transition it stands for.
  struct E {
    int src, dst;
    std::uint64_t inc = 0;
    int orig_block = -1;   // global id when surrogating a block's successor edge
    int orig_ordinal = -1;
    enum class Tag { Real, VEntryToEntry, VEntryToHead, LatchToVExit, TerminalToVExit } tag;
  };
  std::vector<E> dag;
  dag.push_back({ventry, local_of_global[fn.entry], 0, -1, -1, E::Tag::VEntryToEntry});
  for (int h : back_heads) dag.push_back({ventry, h, 0, -1, -1, E::Tag::VEntryToHead});
  for (int i = 0; i < n; ++i) {
    const auto& succs = cfg.successors(fn.blocks[i]);
    for (std::size_t k = 0; k < succs.size(); ++k) {
      if (succs[k] < 0) continue;
      if (back.count({i, static_cast<int>(k)}))
        dag.push_back({i, vexit, 0, fn.blocks[i], static_cast<int>(k), E::Tag::LatchToVExit});
      else
        dag.push_back({i, local_of_global[succs[k]], 0, fn.blocks[i], static_cast<int>(k),
                       E::Tag::Real});
    }
    if (is_terminal(cfg.blocks[fn.blocks[i]]))
      dag.push_back({i, vexit, 0, fn.blocks[i], -1, E::Tag::TerminalToVExit});
  }

  // Topological order; a residual cycle after back-edge removal means the
  // loop structure is irreducible.
  const int nn = n + 2;
  std::vector<std::vector<int>> out_edges(nn);  // indices into dag
  std::vector<int> indeg(nn, 0);
  for (std::size_t i = 0; i < dag.size(); ++i) {
    out_edges[dag[i].src].push_back(static_cast<int>(i));
    indeg[dag[i].dst]++;
  }
  std::vector<int> topo;
  {
    std::vector<int> q;
    for (int v = 0; v < nn; ++v)
      if (indeg[v] == 0) q.push_back(v);
    while (!q.empty()) {
      int v = q.back();
      q.pop_back();
      topo.push_back(v);
      for (int ei : out_edges[v])
        if (--indeg[dag[ei].dst] == 0) q.push_back(dag[ei].dst);
    }
    if (static_cast<int>(topo.size()) != nn) throw AnalysisError("irreducible-cfg");
  }

  // NumPaths bottom-up, then per-edge increments by successor order.
  std::vector<std::uint64_t> num(nn, 0);
  num[vexit] = 1;
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    int v = *it;
    if (v == vexit) continue;
    std::uint64_t sum = 0;
    for (int ei : out_edges[v]) sum += num[dag[ei].dst];
    num[v] = sum;
  }
  for (int v = 0; v < nn; ++v) {
    std::uint64_t acc = 0;
    for (int ei : out_edges[v]) {
      dag[ei].inc = acc;
      acc += num[dag[ei].dst];
    }
  }

  BallLarusNumbering bl;
  bl.num_paths = num[ventry];
  std::vector<std::uint64_t> head_reset(back_heads.size(), 0);
  for (const auto& e : dag) {
    if (e.tag == E::Tag::VEntryToEntry) bl.entry_inc = e.inc;
    if (e.tag == E::Tag::VEntryToHead) {
      auto pos = std::find(back_heads.begin(), back_heads.end(), e.dst) - back_heads.begin();
      head_reset[pos] = e.inc;
    }
  }
  for (int i = 0; i < n; ++i) {
    int g = fn.blocks[i];
    const auto& succs = cfg.successors(g);
    bl.succ[g].resize(succs.size());
    for (std::size_t k = 0; k < succs.size(); ++k) bl.succ[g][k].dst = succs[k];
  }
  for (const auto& e : dag) {
    switch (e.tag) {
      case E::Tag::Real:
        bl.succ[e.orig_block][e.orig_ordinal].inc = e.inc;
        break;
      case E::Tag::LatchToVExit: {
        auto& se = bl.succ[e.orig_block][e.orig_ordinal];
        se.is_back = true;
        se.emit_inc = e.inc;
        int h = local_of_global[se.dst];
        auto pos = std::find(back_heads.begin(), back_heads.end(), h) - back_heads.begin();
        se.reset = head_reset[pos];
        break;
      }
      case E::Tag::TerminalToVExit:
        bl.final_inc[e.orig_block] = e.inc;
        break;
      default:
        break;
    }
  }
  return bl;
}

}  // namespace cfa
