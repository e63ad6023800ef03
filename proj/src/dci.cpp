// Copyright 2026-present the icecache project
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "icecache/dci.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <sstream>
#include <unordered_set>

#include "icecache/error.hpp"

namespace icecache {

SearchBudget SearchBudget::for_k(std::size_t k) {
  SearchBudget b;
  b.k = k;
  b.beam = k > kUnbounded / 2 ? kUnbounded : 2 * k;
  b.visit_cap = std::max<std::size_t>(64, b.beam > kUnbounded / 2 ? kUnbounded : 2 * b.beam);
  return b;
}

SearchBudget SearchBudget::exhaustive(std::size_t k) {
  return SearchBudget{k, kUnbounded, kUnbounded};
}

void SearchBudget::validate() const {
  if (k < 1) {
    throw ConfigError("search budget: k must be >= 1");
  }
  if (beam < k) {
    throw ConfigError("search budget: beam must be >= k");
  }
  if (visit_cap < k) {
    throw ConfigError("search budget: visit_cap must be >= k");
  }
}

void DciOptions::validate() const {
  if (!(promotion_ratio > 0.0 && promotion_ratio < 1.0)) {
    throw ConfigError("promotion ratio must lie in (0, 1)");
  }
  if (parent_beam < 1 || parent_visit_cap < 1) {
    throw ConfigError("parent search budget must be positive");
  }
}

int assign_level(double ratio, Rng& rng) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    std::ostringstream os;
    os << "promotion ratio must lie in (0, 1), got " << ratio;
    throw ConfigError(os.str());
  }
  int level = 1;
  while (rng.uniform() < ratio) {
    ++level;
  }
  return level;
}

namespace {

struct CandidateLess {
  template <typename C>
  bool operator()(const C& a, const C& b) const {
    if (a.distance != b.distance) {
      return a.distance < b.distance;
    }
    return a.id < b.id;
  }
};

template <typename C>
void keep_best(std::vector<C>& v, std::size_t n) {
  if (v.size() <= n) {
    std::sort(v.begin(), v.end(), CandidateLess{});
    return;
  }
  std::partial_sort(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n),
                    v.end(), CandidateLess{});
  v.resize(n);
}

}  // namespace

DciTree::DciTree(std::size_t key_dim, KeyScale scale, DciOptions options)
    : key_dim_(key_dim),
      scale_(scale),
      options_(options),
      level_rng_(Rng(options.seed).split("levels")) {
  if (key_dim_ == 0) {
    throw ConfigError("key dimension must be positive");
  }
  options_.validate();

  Rng proj_rng = Rng(options_.seed).split("projections");
  directions_.resize(kProjectionCount * point_dim());
  for (std::size_t j = 0; j < kProjectionCount; ++j) {
    double* u = directions_.data() + j * point_dim();
    double norm = 0.0;
    for (std::size_t i = 0; i < point_dim(); ++i) {
      u[i] = proj_rng.normal();
      norm += u[i] * u[i];
    }
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < point_dim(); ++i) {
      u[i] /= norm;
    }
  }
}

DciTree DciTree::build(std::span<const TokenId> ids, std::span<const Vector> keys,
                       DciOptions options, std::optional<KeyScale> scale) {
  if (ids.size() != keys.size()) {
    throw InputError("dci build: id and key counts differ");
  }
  if (keys.empty()) {
    throw InputError("dci build: no keys to index");
  }
  const std::size_t dim = keys.front().size();
  std::unordered_set<TokenId> seen;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (keys[i].size() != dim) {
      throw InputError("dci build: keys differ in dimension");
    }
    if (!seen.insert(ids[i]).second) {
      std::ostringstream os;
      os << "dci build: duplicate point id " << ids[i];
      throw InputError(os.str());
    }
  }

  DciTree tree(dim, scale.value_or(key_scale_for(keys)), options);

  std::vector<int> drawn(keys.size());
  for (auto& l : drawn) {
    l = assign_level(tree.options_.promotion_ratio, tree.level_rng_);
  }
  // Remove empty levels.
  std::vector<int> used(drawn.begin(), drawn.end());
  std::sort(used.begin(), used.end());
  used.erase(std::unique(used.begin(), used.end()), used.end());
  for (auto& l : drawn) {
    l = static_cast<int>(std::lower_bound(used.begin(), used.end(), l) -
                         used.begin()) +
        1;
  }
  tree.levels_ = static_cast<int>(used.size());
  tree.root_ = tree.new_node(tree.levels_, kNoPoint);

  std::vector<std::size_t> order(keys.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return drawn[a] > drawn[b]; });
  for (std::size_t i : order) {
    const std::uint32_t p = tree.add_point(ids[i], tree.lift(keys[i]), drawn[i]);
    tree.place(p);
  }
  return tree;
}

TransformedPoint DciTree::lift(std::span<const float> key) {
  if (key.size() != key_dim_) {
    throw InputError("key dimension does not match the tree");
  }
  bool clamped = false;
  TransformedPoint tp = transform_key_clamped(key, scale_, &clamped);
  if (clamped) {
    ++scale_violations_;
  }
  return tp;
}

std::uint32_t DciTree::add_point(TokenId id, const TransformedPoint& tp,
                                 int level) {
  const auto p = static_cast<std::uint32_t>(points_.size());
  points_.push_back(Point{id, level, kNoPoint, kNoNode, kNoNode});
  coords_.insert(coords_.end(), tp.data.begin(), tp.data.end());
  const std::vector<double> proj = project(tp.data);
  projections_.insert(projections_.end(), proj.begin(), proj.end());
  index_.emplace(id, p);
  return p;
}

NodeId DciTree::new_node(int level, std::uint32_t owner) {
  const auto id = static_cast<NodeId>(nodes_.size());
  nodes_.push_back(Node{level, owner, {}, {}});
  if (owner != kNoPoint) {
    points_[owner].owned = id;
  }
  return id;
}

void DciTree::attach(std::uint32_t point, NodeId node_id) {
  Node& node = nodes_[node_id];
  const auto slot = static_cast<std::uint32_t>(node.members.size());
  node.members.push_back(point);
  points_[point].node = node_id;
  points_[point].parent = node.owner;

  if (node.members.size() <= kExhaustiveScanLimit) {
    return;
  }
  if (node.sorted[0].empty()) {
    for (std::size_t j = 0; j < kProjectionCount; ++j) {
      auto& arr = node.sorted[j];
      arr.reserve(node.members.size());
      for (std::uint32_t s = 0; s < node.members.size(); ++s) {
        arr.emplace_back(projections_[node.members[s] * kProjectionCount + j], s);
      }
      std::sort(arr.begin(), arr.end());
    }
    return;
  }
  for (std::size_t j = 0; j < kProjectionCount; ++j) {
    auto& arr = node.sorted[j];
    const std::pair<double, std::uint32_t> entry{
        projections_[point * kProjectionCount + j], slot};
    arr.insert(std::upper_bound(arr.begin(), arr.end(), entry), entry);
  }
}

void DciTree::place(std::uint32_t point) {
  const int level = points_[point].level;
  if (level == levels_) {
    attach(point, root_);
    return;
  }
  SearchBudget parent_budget{1, options_.parent_beam, options_.parent_visit_cap};
  const std::vector<Candidate> found =
      search(coords(point), level + 1, parent_budget);
  if (found.empty()) {
    throw ConsistencyError("parent search returned nothing");
  }
  const std::uint32_t parent = found.front().point;
  NodeId target = points_[parent].owned;
  if (target == kNoNode) {
    target = new_node(level, parent);
  }
  attach(point, target);
}

void DciTree::grow_top_level(std::uint32_t point) {
  // The old ROOT node keeps its id (and therefore its pages); only its owner
  // changes to the newly promoted point.
  const NodeId former_root = root_;
  nodes_[former_root].owner = point;
  points_[point].owned = former_root;
  for (std::uint32_t m : nodes_[former_root].members) {
    points_[m].parent = point;
  }
  levels_ = points_[point].level;
  root_ = new_node(levels_, kNoPoint);
  attach(point, root_);
}

NodeId DciTree::insert(TokenId id, std::span<const float> key) {
  if (contains(id)) {
    std::ostringstream os;
    os << "dci insert: duplicate point id " << id;
    throw InputError(os.str());
  }
  const TransformedPoint tp = lift(key);
  int level = assign_level(options_.promotion_ratio, level_rng_);

  if (empty()) {
    levels_ = 1;
    root_ = new_node(1, kNoPoint);
    const std::uint32_t p = add_point(id, tp, 1);
    attach(p, root_);
    return root_;
  }
  if (level > levels_) {
    // Growth is capped at one level per insert so no level is ever empty.
    level = levels_ + 1;
    const std::uint32_t p = add_point(id, tp, level);
    grow_top_level(p);
    return points_[p].node;
  }
  const std::uint32_t p = add_point(id, tp, level);
  place(p);
  return points_[p].node;
}

std::vector<double> DciTree::project(std::span<const double> q) const {
  std::vector<double> out(kProjectionCount);
  for (std::size_t j = 0; j < kProjectionCount; ++j) {
    const double* u = directions_.data() + j * point_dim();
    double acc = 0.0;
    for (std::size_t i = 0; i < point_dim(); ++i) {
      acc += u[i] * q[i];
    }
    out[j] = acc;
  }
  return out;
}

void DciTree::search_node(std::span<const double> q,
                          std::span<const double> qproj, NodeId node_id,
                          std::size_t count, std::size_t visit_cap,
                          std::vector<Candidate>& out) const {
  const Node& node = nodes_[node_id];
  const std::size_t size = node.members.size();
  const std::size_t take = std::min(count, size);
  if (take == 0) {
    return;
  }

  if (node.sorted[0].empty() || visit_cap >= size) {
    std::vector<Candidate> all;
    all.reserve(size);
    for (std::uint32_t p : node.members) {
      all.push_back({squared_distance(q, coords(p)), points_[p].id, p});
    }
    keep_best(all, take);
    out.insert(out.end(), all.begin(), all.end());
    return;
  }

  // Prioritized DCI: pop projected gaps in ascending order across all
  // indices; a member is evaluated once every index has reached it, i.e. when
  // its max-over-indices lower bound is the current gap.
  struct Probe {
    double gap;
    std::uint32_t index;
    std::int64_t pos;
    int dir;
    bool operator>(const Probe& o) const { return gap > o.gap; }
  };
  std::priority_queue<Probe, std::vector<Probe>, std::greater<>> probes;
  for (std::uint32_t j = 0; j < kProjectionCount; ++j) {
    const auto& arr = node.sorted[j];
    const auto it = std::lower_bound(
        arr.begin(), arr.end(), std::make_pair(qproj[j], std::uint32_t{0}));
    const auto pos = static_cast<std::int64_t>(it - arr.begin());
    if (pos < static_cast<std::int64_t>(arr.size())) {
      probes.push({arr[pos].first - qproj[j], j, pos, +1});
    }
    if (pos > 0) {
      probes.push({qproj[j] - arr[pos - 1].first, j, pos - 1, -1});
    }
  }

  const std::size_t cap = std::max(visit_cap, take);
  std::vector<std::uint8_t> hits(size, 0);
  std::vector<Candidate> best;  // max-heap on (distance, id)
  best.reserve(take + 1);
  std::size_t evaluations = 0;
  while (!probes.empty()) {
    const Probe top = probes.top();
    probes.pop();
    if (best.size() == take && top.gap * top.gap > best.front().distance) {
      break;
    }
    const auto& arr = node.sorted[top.index];
    const std::uint32_t slot = arr[top.pos].second;
    const std::int64_t next = top.pos + top.dir;
    if (next >= 0 && next < static_cast<std::int64_t>(arr.size())) {
      probes.push({std::abs(arr[next].first - qproj[top.index]), top.index,
                   next, top.dir});
    }
    if (++hits[slot] < kProjectionCount) {
      continue;
    }
    const std::uint32_t p = node.members[slot];
    const Candidate c{squared_distance(q, coords(p)), points_[p].id, p};
    if (best.size() < take) {
      best.push_back(c);
      std::push_heap(best.begin(), best.end(), CandidateLess{});
    } else if (CandidateLess{}(c, best.front())) {
      std::pop_heap(best.begin(), best.end(), CandidateLess{});
      best.back() = c;
      std::push_heap(best.begin(), best.end(), CandidateLess{});
    }
    if (++evaluations >= cap) {
      break;
    }
  }
  std::sort(best.begin(), best.end(), CandidateLess{});
  out.insert(out.end(), best.begin(), best.end());
}

std::vector<DciTree::Candidate> DciTree::search(std::span<const double> q,
                                                int target_level,
                                                const SearchBudget& budget) const {
  if (empty()) {
    return {};
  }
  if (q.size() != point_dim()) {
    throw InputError("query dimension does not match the tree");
  }
  if (target_level != kSentinelLevel && target_level < 1) {
    throw InputError("target level must be >= 1 or the sentinel");
  }
  budget.validate();
  const bool pool_all = target_level == kSentinelLevel;
  const int stop = pool_all ? 1 : std::min(target_level, levels_);
  const std::vector<double> qproj = project(q);
  const std::size_t per_node = std::max(budget.beam, budget.k);

  std::vector<Candidate> pool;
  std::vector<Candidate> layer;
  std::vector<NodeId> frontier{root_};
  for (int level = levels_; level >= stop; --level) {
    layer.clear();
    for (NodeId n : frontier) {
      search_node(q, qproj, n, per_node, budget.visit_cap, layer);
    }
    if (pool_all || level == stop) {
      pool.insert(pool.end(), layer.begin(), layer.end());
    }
    if (level == stop) {
      break;
    }
    keep_best(layer, budget.beam);
    frontier.clear();
    for (const Candidate& c : layer) {
      const NodeId owned = points_[c.point].owned;
      if (owned != kNoNode) {
        frontier.push_back(owned);
      }
    }
    if (frontier.empty()) {
      break;
    }
  }
  keep_best(pool, budget.k);
  return pool;
}

std::vector<Neighbor> DciTree::query(const TransformedPoint& query,
                                     int target_level,
                                     const SearchBudget& budget) const {
  const std::vector<Candidate> found = search(query.data, target_level, budget);
  std::vector<Neighbor> out;
  out.reserve(found.size());
  for (const Candidate& c : found) {
    out.push_back({c.id, c.distance});
  }
  return out;
}

std::vector<Neighbor> DciTree::pdci_query(const TransformedPoint& query,
                                          NodeId node, std::size_t k,
                                          std::size_t visit_cap) const {
  if (node >= nodes_.size()) {
    throw InputError("unknown node id");
  }
  if (query.dim() != point_dim()) {
    throw InputError("query dimension does not match the tree");
  }
  std::vector<Candidate> found;
  search_node(query.data, project(query.data), node, k, visit_cap, found);
  std::vector<Neighbor> out;
  out.reserve(found.size());
  for (const Candidate& c : found) {
    out.push_back({c.id, c.distance});
  }
  return out;
}

std::uint32_t DciTree::point_index(TokenId id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) {
    std::ostringstream os;
    os << "point id " << id << " is not indexed";
    throw InputError(os.str());
  }
  return it->second;
}

int DciTree::level_of(TokenId id) const { return points_[point_index(id)].level; }

std::optional<TokenId> DciTree::parent_of(TokenId id) const {
  const std::uint32_t parent = points_[point_index(id)].parent;
  if (parent == kNoPoint) {
    return std::nullopt;
  }
  return points_[parent].id;
}

NodeId DciTree::node_of(TokenId id) const { return points_[point_index(id)].node; }

DciNodeView DciTree::node(NodeId id) const {
  if (id >= nodes_.size()) {
    throw InputError("unknown node id");
  }
  const Node& n = nodes_[id];
  DciNodeView view;
  view.id = id;
  view.level = n.level;
  if (n.owner != kNoPoint) {
    view.parent = points_[n.owner].id;
  }
  view.members.reserve(n.members.size());
  for (std::uint32_t p : n.members) {
    view.members.push_back(points_[p].id);
  }
  return view;
}

std::vector<std::size_t> DciTree::level_histogram() const {
  std::vector<std::size_t> hist(static_cast<std::size_t>(levels_), 0);
  for (const Point& p : points_) {
    ++hist[static_cast<std::size_t>(p.level - 1)];
  }
  return hist;
}

void DciTree::check_invariants() const {
  auto fail = [](const std::string& what) { throw InvariantViolation("dci", what); };
  if (empty()) {
    return;
  }
  if (root_ >= nodes_.size() || nodes_[root_].owner != kNoPoint ||
      nodes_[root_].level != levels_) {
    fail("root node malformed");
  }
  std::vector<std::size_t> seen(points_.size(), 0);
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    const Node& n = nodes_[id];
    if (n.owner == kNoPoint && id != root_) {
      fail("non-root node without an owner");
    }
    if (n.owner != kNoPoint) {
      const Point& owner = points_[n.owner];
      if (owner.owned != id) {
        fail("owner does not link back to its node");
      }
      if (owner.level != n.level + 1) {
        fail("parent-level invariant broken");
      }
    }
    for (std::uint32_t m : n.members) {
      ++seen[m];
      const Point& p = points_[m];
      if (p.node != id || p.parent != n.owner || p.level != n.level) {
        fail("member bookkeeping disagrees with its node");
      }
    }
    if (!n.sorted[0].empty()) {
      for (const auto& arr : n.sorted) {
        if (arr.size() != n.members.size()) {
          fail("projection index out of sync with node members");
        }
      }
    }
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (seen[i] != 1) {
      fail("point covered by " + std::to_string(seen[i]) + " nodes");
    }
  }
  for (std::size_t c : level_histogram()) {
    if (c == 0) {
      fail("empty level");
    }
  }
}

}  // namespace icecache
