#pragma once

#include <cstddef>
#include <numeric>
#include <utility>
#include <vector>

namespace gsc::detail {

// Union-find over 0..n-1; labels are compacted in order of first appearance.
class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n), rank_(n, 0) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (rank_[a] < rank_[b]) std::swap(a, b);
    parent_[b] = a;
    if (rank_[a] == rank_[b]) ++rank_[a];
  }

  std::vector<int> labels() {
    std::vector<int> out(parent_.size(), -1);
    std::vector<int> root_label(parent_.size(), -1);
    int next = 0;
    for (std::size_t i = 0; i < parent_.size(); ++i) {
      auto r = find(i);
      if (root_label[r] < 0) root_label[r] = next++;
      out[i] = root_label[r];
    }
    return out;
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<int> rank_;
};

inline int count_labels(const std::vector<int>& labels) {
  int mx = -1;
  for (int l : labels) mx = l > mx ? l : mx;
  return mx + 1;
}

}  // namespace gsc::detail
