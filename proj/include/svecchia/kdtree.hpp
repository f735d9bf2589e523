#pragma once

#include "svecchia/types.hpp"

#include <limits>
#include <span>
#include <vector>

namespace svecchia {

struct Neighbor {
  double dist2;
  Index index;
  // Distance ties are broken by the smaller index.
  friend bool operator<(const Neighbor& a, const Neighbor& b) {
    return a.dist2 < b.dist2 || (a.dist2 == b.dist2 && a.index < b.index);
  }
};

/// Squared Euclidean distance, summed in coordinate order. Every component
/// that compares distances goes through this so results are bit-consistent.
inline double squared_distance(const double* a, const double* b, Index d) {
  double s = 0.0;
  for (Index l = 0; l < d; ++l) {
    const double t = a[l] - b[l];
    s += t * t;
  }
  return s;
}

/// Static kd-tree over the rows of a point matrix. Each point may carry a
/// rank; knn() then only reports points whose rank is below a limit, which
/// is what "nearest previously ordered" neighbor search needs.
class KdTree {
 public:
  explicit KdTree(const Points& points, Index leaf_size = 12);

  Index size() const { return static_cast<Index>(perm_.size()); }

  /// Assigns ranks (one per point) and refreshes the per-node minimum rank.
  void set_ranks(std::span<const Index> ranks);

  /// The k nearest points with rank < rank_limit, sorted by (dist2, index).
  /// Without ranks, rank_limit is ignored.
  std::vector<Neighbor> knn(const double* query, Index k,
                            Index rank_limit = std::numeric_limits<Index>::max()) const;

  /// Calls f(index, dist2) for every point with dist2 < radius2.
  template <class F>
  void within(const double* query, double radius2, F&& f) const {
    if (nodes_.empty()) return;
    within_node(0, query, radius2, f);
  }

 private:
  struct Node {
    Index begin, end;
    Index left = -1, right = -1;
    Index min_rank = 0;
  };

  Index build(Index begin, Index end, Index leaf_size);
  double box_distance2(Index node, const double* q) const;
  Index refresh_rank(Index node);
  void knn_node(Index node, const double* q, Index k, Index rank_limit,
                std::vector<Neighbor>& heap) const;

  template <class F>
  void within_node(Index node, const double* q, double r2, F& f) const {
    if (box_distance2(node, q) >= r2) return;
    const Node& nd = nodes_[node];
    if (nd.left < 0) {
      for (Index t = nd.begin; t < nd.end; ++t) {
        const Index p = perm_[t];
        const double d2 = squared_distance(q, points_->data() + p * dim_, dim_);
        if (d2 < r2) f(p, d2);
      }
      return;
    }
    within_node(nd.left, q, r2, f);
    within_node(nd.right, q, r2, f);
  }

  const Points* points_;
  Index dim_;
  std::vector<Index> perm_;
  std::vector<Node> nodes_;
  std::vector<double> lo_, hi_;  // node bounding boxes, dim_ entries per node
  std::vector<Index> ranks_;
};

}  // namespace svecchia
