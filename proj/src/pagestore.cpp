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

#include "icecache/pagestore.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "icecache/error.hpp"

namespace icecache {

const char* to_string(PageRole role) {
  switch (role) {
    case PageRole::kSink:
      return "sink";
    case PageRole::kWindow:
      return "window";
    case PageRole::kIndexed:
      return "indexed";
  }
  return "?";
}

TransferStats& TransferStats::operator+=(const TransferStats& o) {
  transactions += o.transactions;
  bytes_moved += o.bytes_moved;
  pages_backloaded += o.pages_backloaded;
  pages_filtered_resident += o.pages_filtered_resident;
  pages_offloaded += o.pages_offloaded;
  return *this;
}

TransferStats operator-(TransferStats a, const TransferStats& b) {
  a.transactions -= b.transactions;
  a.bytes_moved -= b.bytes_moved;
  a.pages_backloaded -= b.pages_backloaded;
  a.pages_filtered_resident -= b.pages_filtered_resident;
  a.pages_offloaded -= b.pages_offloaded;
  return a;
}

// ---------------------------------------------------------------- PageTable

void PageTable::bind(NodeId node, PageId page) {
  node_to_pages_[node].push_back(page);
}

void PageTable::assign(TokenId token, PageId page) {
  token_to_page_[token] = page;
}

PageId PageTable::page_of(TokenId token) const {
  const auto it = token_to_page_.find(token);
  if (it == token_to_page_.end()) {
    std::ostringstream os;
    os << "token " << token << " is not mapped to any page";
    throw ConsistencyError(os.str());
  }
  return it->second;
}

std::span<const PageId> PageTable::pages_of(NodeId node) const {
  const auto it = node_to_pages_.find(node);
  if (it == node_to_pages_.end()) {
    return {};
  }
  return it->second;
}

std::optional<PageId> PageTable::current_page(NodeId node) const {
  const auto pages = pages_of(node);
  if (pages.empty()) {
    return std::nullopt;
  }
  return pages.back();
}

std::vector<PageId> PageTable::find_page_index(
    std::span<const TokenId> tokens) const {
  std::vector<PageId> pages;
  pages.reserve(tokens.size());
  for (TokenId t : tokens) {
    pages.push_back(page_of(t));
  }
  std::sort(pages.begin(), pages.end());
  pages.erase(std::unique(pages.begin(), pages.end()), pages.end());
  return pages;
}

// ---------------------------------------------------------------- TierStore

TierStore::TierStore(std::size_t key_dim, std::size_t value_dim,
                     std::size_t scalar_bytes)
    : key_dim_(key_dim), value_dim_(value_dim), scalar_bytes_(scalar_bytes) {
  if (key_dim_ == 0 || value_dim_ == 0 || scalar_bytes_ == 0) {
    throw ConfigError("tier store dimensions must be positive");
  }
}

TierStore::Slot& TierStore::slot(PageId page) {
  if (page >= slots_.size() || !slots_[page]) {
    std::ostringstream os;
    os << "unknown page id " << page;
    throw ConsistencyError(os.str());
  }
  return *slots_[page];
}

const TierStore::Slot& TierStore::slot(PageId page) const {
  return const_cast<TierStore*>(this)->slot(page);
}

PageId TierStore::allocate(PageRole role, std::size_t capacity) {
  if (capacity == 0) {
    throw ConfigError("page capacity must be positive");
  }
  const auto id = static_cast<PageId>(slots_.size());
  Slot s;
  s.page.id = id;
  s.page.capacity = capacity;
  s.page.role = role;
  s.page.entries.reserve(capacity);
  const bool resident = role != PageRole::kIndexed;
  s.authority = resident ? Tier::kHot : Tier::kCold;
  s.pinned = resident;
  slots_.push_back(std::move(s));
  return id;
}

void TierStore::append(PageId page, Entry entry) {
  Slot& s = slot(page);
  if (s.page.full()) {
    std::ostringstream os;
    os << "page " << page << " is full";
    throw ConsistencyError(os.str());
  }
  if (entry.key.size() != key_dim_ || entry.value.size() != value_dim_) {
    throw InputError("entry dimensions do not match the store");
  }
  for (const Entry& e : s.page.entries) {
    if (e.token == entry.token) {
      std::ostringstream os;
      os << "token " << entry.token << " already stored in page " << page;
      throw ConsistencyError(os.str());
    }
  }
  if (s.hot_copy) {
    s.hot_copy->entries.push_back(entry);
  }
  s.page.entries.push_back(std::move(entry));
}

void TierStore::release(PageId page) {
  slot(page);
  slots_[page].reset();
}

TransferStats TierStore::backload(std::span<const PageId> selected) {
  TransferStats delta;
  std::vector<PageId> moving;
  std::unordered_set<PageId> seen;
  for (PageId id : selected) {
    if (!seen.insert(id).second) {
      continue;
    }
    if (is_hot(id)) {
      ++delta.pages_filtered_resident;
    } else {
      moving.push_back(id);
    }
  }
  if (moving.empty()) {
    stats_ += delta;
    return delta;
  }

  // Gather into one contiguous staging buffer.
  const std::size_t stride = key_dim_ + value_dim_;
  std::size_t total_entries = 0;
  for (PageId id : moving) {
    total_entries += slot(id).page.fill();
  }
  staging_.assign(total_entries * stride, 0.0f);
  std::size_t cursor = 0;
  for (PageId id : moving) {
    for (const Entry& e : slot(id).page.entries) {
      std::copy(e.key.begin(), e.key.end(), staging_.begin() + cursor);
      std::copy(e.value.begin(), e.value.end(),
                staging_.begin() + cursor + key_dim_);
      cursor += stride;
    }
  }

  delta.transactions = 1;
  delta.bytes_moved = total_entries * entry_bytes();
  delta.pages_backloaded = moving.size();

  // Scatter into hot copies.
  cursor = 0;
  for (PageId id : moving) {
    Slot& s = slot(id);
    Page copy;
    copy.id = s.page.id;
    copy.capacity = s.page.capacity;
    copy.role = s.page.role;
    copy.entries.reserve(s.page.fill());
    for (const Entry& e : s.page.entries) {
      Entry out;
      out.token = e.token;
      out.key.assign(staging_.begin() + cursor,
                     staging_.begin() + cursor + key_dim_);
      out.value.assign(staging_.begin() + cursor + key_dim_,
                       staging_.begin() + cursor + stride);
      copy.entries.push_back(std::move(out));
      cursor += stride;
    }
    s.hot_copy = std::move(copy);
  }
  stats_ += delta;
  return delta;
}

TransferStats TierStore::offload(PageId page) {
  Slot& s = slot(page);
  if (s.page.role == PageRole::kSink) {
    throw PolicyError("sink pages are never offloaded");
  }
  if (!is_hot(page)) {
    std::ostringstream os;
    os << "page " << page << " is not resident";
    throw ConsistencyError(os.str());
  }
  TransferStats delta;
  delta.transactions = 1;
  delta.bytes_moved = s.page.fill() * entry_bytes();
  delta.pages_offloaded = 1;
  s.authority = Tier::kCold;
  s.pinned = false;
  s.hot_copy.reset();
  stats_ += delta;
  return delta;
}

void TierStore::evict_unselected(std::span<const PageId> keep) {
  const std::unordered_set<PageId> kept(keep.begin(), keep.end());
  for (auto& s : slots_) {
    if (s && s->hot_copy && !kept.contains(s->page.id)) {
      s->hot_copy.reset();
    }
  }
}

bool TierStore::known(PageId page) const {
  return page < slots_.size() && slots_[page].has_value();
}

bool TierStore::is_hot(PageId page) const {
  const Slot& s = slot(page);
  return s.authority == Tier::kHot || s.hot_copy.has_value();
}

bool TierStore::is_pinned(PageId page) const { return slot(page).pinned; }

const Page& TierStore::page(PageId page) const { return slot(page).page; }

const Page& TierStore::hot_page(PageId page) const {
  const Slot& s = slot(page);
  if (s.authority == Tier::kHot) {
    return s.page;
  }
  if (!s.hot_copy) {
    std::ostringstream os;
    os << "page " << page << " is not resident";
    throw ConsistencyError(os.str());
  }
  return *s.hot_copy;
}

std::vector<PageId> TierStore::hot_pages() const {
  std::vector<PageId> out;
  for (const auto& s : slots_) {
    if (s && (s->authority == Tier::kHot || s->hot_copy)) {
      out.push_back(s->page.id);
    }
  }
  return out;
}

std::vector<PageId> TierStore::pinned_pages() const {
  std::vector<PageId> out;
  for (const auto& s : slots_) {
    if (s && s->pinned) {
      out.push_back(s->page.id);
    }
  }
  return out;
}

std::size_t TierStore::live_pages() const {
  return static_cast<std::size_t>(
      std::count_if(slots_.begin(), slots_.end(),
                    [](const auto& s) { return s.has_value(); }));
}

std::size_t TierStore::total_entries() const {
  std::size_t n = 0;
  for (const auto& s : slots_) {
    if (s) {
      n += s->page.fill();
    }
  }
  return n;
}

void TierStore::check_invariants() const {
  for (const auto& s : slots_) {
    if (!s) {
      continue;
    }
    const Page& p = s->page;
    if (p.fill() > p.capacity) {
      throw InvariantViolation("pagestore", "page fill exceeds capacity");
    }
    if (s->pinned && s->authority != Tier::kHot) {
      throw InvariantViolation("pagestore", "pinned page is not hot");
    }
    if (s->authority == Tier::kHot && s->hot_copy) {
      throw InvariantViolation("pagestore", "page has two authoritative copies");
    }
    if (s->hot_copy && s->hot_copy->fill() != p.fill()) {
      throw InvariantViolation("pagestore", "hot copy out of sync");
    }
    std::unordered_set<TokenId> tokens;
    for (const Entry& e : p.entries) {
      if (!tokens.insert(e.token).second) {
        throw InvariantViolation("pagestore", "duplicate token within a page");
      }
    }
  }
}

PageId place_in_node(TierStore& store, PageTable& table, NodeId node,
                     Entry entry, std::size_t page_size) {
  std::optional<PageId> page = table.current_page(node);
  if (!page || store.page(*page).full()) {
    page = store.allocate(PageRole::kIndexed, page_size);
    table.bind(node, *page);
  }
  const TokenId token = entry.token;
  store.append(*page, std::move(entry));
  table.assign(token, *page);
  return *page;
}

}  // namespace icecache
