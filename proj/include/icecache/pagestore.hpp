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

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "icecache/types.hpp"

namespace icecache {

enum class PageRole { kSink, kWindow, kIndexed };

const char* to_string(PageRole role);

struct Entry {
  TokenId token = 0;
  Vector key;
  Vector value;
};

struct Page {
  PageId id = 0;
  std::size_t capacity = 0;
  PageRole role = PageRole::kIndexed;
  std::vector<Entry> entries;

  std::size_t fill() const { return entries.size(); }
  bool full() const { return entries.size() >= capacity; }
};

struct TransferStats {
  std::uint64_t transactions = 0;
  std::uint64_t bytes_moved = 0;
  std::uint64_t pages_backloaded = 0;
  std::uint64_t pages_filtered_resident = 0;
  std::uint64_t pages_offloaded = 0;

  TransferStats& operator+=(const TransferStats& o);
  friend TransferStats operator-(TransferStats a, const TransferStats& b);
  friend bool operator==(const TransferStats&, const TransferStats&) = default;
};

/// Node -> pages and token -> page mapping for indexed tokens.
class PageTable {
 public:
  void bind(NodeId node, PageId page);
  void assign(TokenId token, PageId page);

  bool contains(TokenId token) const { return token_to_page_.contains(token); }
  PageId page_of(TokenId token) const;
  std::span<const PageId> pages_of(NodeId node) const;
  std::optional<PageId> current_page(NodeId node) const;
  std::size_t token_count() const { return token_to_page_.size(); }
  std::size_t node_count() const { return node_to_pages_.size(); }

  /// Deduplicated pages holding `tokens`, ascending by page id. Throws
  /// ConsistencyError for an unmapped token.
  std::vector<PageId> find_page_index(std::span<const TokenId> tokens) const;

 private:
  std::unordered_map<NodeId, std::vector<PageId>> node_to_pages_;
  std::unordered_map<TokenId, PageId> token_to_page_;
};

/// Two-tier page store with bulk-transfer accounting.
///
/// Sink and window pages are pinned and their authoritative copy is hot.
/// Indexed pages are authoritative in the cold tier; the hot tier holds
/// copies of them, so dropping a copy is free.
class TierStore {
 public:
  TierStore(std::size_t key_dim, std::size_t value_dim,
            std::size_t scalar_bytes = 4);

  /// Sink and window pages start hot and pinned; indexed pages start cold.
  PageId allocate(PageRole role, std::size_t capacity);

  /// Appends to the authoritative copy and writes through to a hot copy.
  void append(PageId page, Entry entry);

  /// Drops a page once its tokens live elsewhere. Ids are not reused.
  void release(PageId page);

  /// Filter resident pages, gather the rest into one staging buffer, move it
  /// in a single transaction and scatter into hot copies.
  TransferStats backload(std::span<const PageId> selected);

  /// Moves a hot page to the cold tier; one transaction. Sink pages refuse.
  TransferStats offload(PageId page);

  /// hot := keep ∪ pinned. Dropped copies cost nothing.
  void evict_unselected(std::span<const PageId> keep);

  bool known(PageId page) const;
  bool is_hot(PageId page) const;
  bool is_pinned(PageId page) const;
  /// Authoritative copy.
  const Page& page(PageId page) const;
  /// The copy attention reads; throws unless the page is hot.
  const Page& hot_page(PageId page) const;

  std::vector<PageId> hot_pages() const;
  std::vector<PageId> pinned_pages() const;
  std::size_t live_pages() const;
  std::size_t total_entries() const;
  const TransferStats& stats() const { return stats_; }
  std::size_t entry_bytes() const { return (key_dim_ + value_dim_) * scalar_bytes_; }

  void check_invariants() const;

 private:
  enum class Tier { kHot, kCold };

  struct Slot {
    Page page;
    Tier authority = Tier::kCold;
    bool pinned = false;
    std::optional<Page> hot_copy;  // only for cold-authoritative pages
  };

  Slot& slot(PageId page);
  const Slot& slot(PageId page) const;

  std::size_t key_dim_;
  std::size_t value_dim_;
  std::size_t scalar_bytes_;
  std::vector<std::optional<Slot>> slots_;
  std::vector<float> staging_;
  TransferStats stats_;
};

/// Appends `entry` to the current page of `node`, allocating a fresh indexed
/// page when the node has none or its last page is full.
PageId place_in_node(TierStore& store, PageTable& table, NodeId node,
                     Entry entry, std::size_t page_size);

}  // namespace icecache
