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

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "icecache/geometry.hpp"
#include "icecache/rng.hpp"
#include "icecache/types.hpp"

namespace icecache {

// Target level meaning "descend to the bottom and pool every level".
inline constexpr int kSentinelLevel = -1;

// Nodes with at most this many members are scanned exhaustively.
inline constexpr std::size_t kExhaustiveScanLimit = 64;

// Number of random projections ("simple indices") per prioritized node search.
inline constexpr std::size_t kProjectionCount = 8;

inline constexpr NodeId kNoNode = static_cast<NodeId>(-1);

/// Work limits for one query.
///
/// `beam` is both the number of candidates each visited node contributes and
/// the number of survivors kept per level before descending. `visit_cap`
/// bounds true-distance evaluations inside one node.
struct SearchBudget {
  std::size_t k = 1;
  std::size_t beam = 2;
  std::size_t visit_cap = 64;

  /// beam = 2k, visit_cap = max(64, 2 * beam).
  static SearchBudget for_k(std::size_t k);
  /// Unbounded beam and visit cap: the query degenerates to a full scan.
  static SearchBudget exhaustive(std::size_t k);

  void validate() const;
};

/// 1 + number of consecutive uniform draws below `ratio`.
int assign_level(double ratio, Rng& rng);

struct Neighbor {
  TokenId id = 0;
  double distance = 0.0;  // squared, in transformed space
};

struct DciOptions {
  double promotion_ratio = 0.1;
  std::uint64_t seed = 0;
  // Budget of the 1-NN parent search used while indexing and inserting.
  std::size_t parent_beam = 8;
  std::size_t parent_visit_cap = 64;

  void validate() const;
};

/// Read-only snapshot of one node.
struct DciNodeView {
  NodeId id = kNoNode;
  int level = 0;                  // level of the members
  std::optional<TokenId> parent;  // owning point one level up; nullopt = ROOT
  std::vector<TokenId> members;
};

/// Multi-level DCI index over transformed keys.
///
/// Every point lives at exactly one level. A node is the set of points that
/// share a parent; the points at the top level share the virtual ROOT. Nodes
/// are what the page layer maps onto physical pages.
///
/// One writer per tree. Const member functions may run concurrently with each
/// other but not with insert().
class DciTree {
 public:
  DciTree(std::size_t key_dim, KeyScale scale, DciOptions options);

  /// Batch indexing: draw every level up front, drop empty levels, then attach
  /// points top-down so each parent level is complete before its children
  /// look for a parent. `scale` defaults to key_scale_for(keys).
  static DciTree build(std::span<const TokenId> ids, std::span<const Vector> keys,
                       DciOptions options,
                       std::optional<KeyScale> scale = std::nullopt);

  /// Dynamic insertion. Returns the node the point joined; the caller appends
  /// the entry to that node's current page.
  NodeId insert(TokenId id, std::span<const float> key);

  /// k nearest points to `query`. With kSentinelLevel every level feeds the
  /// result; otherwise only points at `target_level` (clamped to [1, L]) are
  /// returned. Results are sorted by (distance, id).
  std::vector<Neighbor> query(const TransformedPoint& query, int target_level,
                              const SearchBudget& budget) const;

  /// Prioritized search inside one node. Returns min(k, |members|) members.
  std::vector<Neighbor> pdci_query(const TransformedPoint& query, NodeId node,
                                   std::size_t k, std::size_t visit_cap) const;

  bool empty() const { return points_.empty(); }
  std::size_t size() const { return points_.size(); }
  int levels() const { return levels_; }
  std::size_t key_dim() const { return key_dim_; }
  KeyScale scale() const { return scale_; }
  const DciOptions& options() const { return options_; }
  NodeId root() const { return root_; }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t scale_violations() const { return scale_violations_; }

  bool contains(TokenId id) const { return index_.contains(id); }
  int level_of(TokenId id) const;
  std::optional<TokenId> parent_of(TokenId id) const;
  NodeId node_of(TokenId id) const;
  DciNodeView node(NodeId id) const;

  /// Point counts per level; element 0 is level 1.
  std::vector<std::size_t> level_histogram() const;

  /// Full walk of the structural invariants; throws InvariantViolation.
  void check_invariants() const;

 private:
  static constexpr std::uint32_t kNoPoint = static_cast<std::uint32_t>(-1);

  struct Point {
    TokenId id;
    int level;
    std::uint32_t parent;  // point index, kNoPoint for ROOT
    NodeId node;           // node this point is a member of
    NodeId owned;          // node of this point's children, kNoNode if none
  };

  struct Node {
    int level;
    std::uint32_t owner;  // point index, kNoPoint for ROOT
    std::vector<std::uint32_t> members;
    // Per projection: (projected value, member slot), sorted. Empty until the
    // node outgrows kExhaustiveScanLimit.
    std::array<std::vector<std::pair<double, std::uint32_t>>, kProjectionCount>
        sorted;
  };

  struct Candidate {
    double distance;
    TokenId id;
    std::uint32_t point;
  };

  std::span<const double> coords(std::uint32_t p) const {
    return {coords_.data() + static_cast<std::size_t>(p) * point_dim(),
            point_dim()};
  }
  std::size_t point_dim() const { return key_dim_ + 1; }

  std::uint32_t add_point(TokenId id, const TransformedPoint& tp, int level);
  NodeId new_node(int level, std::uint32_t owner);
  void attach(std::uint32_t point, NodeId node);
  void place(std::uint32_t point);
  void grow_top_level(std::uint32_t point);
  TransformedPoint lift(std::span<const float> key);

  void search_node(std::span<const double> q, std::span<const double> qproj,
                   NodeId node, std::size_t count, std::size_t visit_cap,
                   std::vector<Candidate>& out) const;
  std::vector<double> project(std::span<const double> q) const;
  std::vector<Candidate> search(std::span<const double> q, int target_level,
                                const SearchBudget& budget) const;
  std::uint32_t point_index(TokenId id) const;

  std::size_t key_dim_;
  KeyScale scale_;
  DciOptions options_;
  Rng level_rng_;
  int levels_ = 0;
  NodeId root_ = kNoNode;
  std::size_t scale_violations_ = 0;

  std::vector<Point> points_;
  std::vector<double> coords_;       // point_dim() doubles per point
  std::vector<double> projections_;  // kProjectionCount doubles per point
  std::vector<double> directions_;   // kProjectionCount unit vectors
  std::vector<Node> nodes_;
  std::unordered_map<TokenId, std::uint32_t> index_;
};

}  // namespace icecache
