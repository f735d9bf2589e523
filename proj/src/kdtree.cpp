#include "svecchia/kdtree.hpp"

#include <algorithm>
#include <numeric>

namespace svecchia {

KdTree::KdTree(const Points& points, Index leaf_size) : points_(&points), dim_(points.cols()) {
  perm_.resize(points.rows());
  std::iota(perm_.begin(), perm_.end(), Index{0});
  if (points.rows() == 0) return;
  nodes_.reserve(2 * points.rows() / std::max<Index>(leaf_size, 1) + 2);
  build(0, points.rows(), std::max<Index>(leaf_size, 1));
}

Index KdTree::build(Index begin, Index end, Index leaf_size) {
  const Index id = static_cast<Index>(nodes_.size());
  nodes_.push_back({begin, end});
  lo_.resize((id + 1) * dim_);
  hi_.resize((id + 1) * dim_);
  double* lo = lo_.data() + id * dim_;
  double* hi = hi_.data() + id * dim_;
  std::fill(lo, lo + dim_, std::numeric_limits<double>::infinity());
  std::fill(hi, hi + dim_, -std::numeric_limits<double>::infinity());
  const double* X = points_->data();
  for (Index t = begin; t < end; ++t) {
    const double* x = X + perm_[t] * dim_;
    for (Index l = 0; l < dim_; ++l) {
      lo[l] = std::min(lo[l], x[l]);
      hi[l] = std::max(hi[l], x[l]);
    }
  }
  if (end - begin <= leaf_size || dim_ == 0) return id;
  Index split = 0;
  double widest = -1.0;
  for (Index l = 0; l < dim_; ++l) {
    if (hi[l] - lo[l] > widest) {
      widest = hi[l] - lo[l];
      split = l;
    }
  }
  if (widest <= 0.0) return id;  // all points identical
  const Index mid = begin + (end - begin) / 2;
  std::nth_element(perm_.begin() + begin, perm_.begin() + mid, perm_.begin() + end,
                   [&](Index a, Index b) {
                     const double xa = X[a * dim_ + split], xb = X[b * dim_ + split];
                     return xa < xb || (xa == xb && a < b);
                   });
  const Index left = build(begin, mid, leaf_size);
  const Index right = build(mid, end, leaf_size);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

double KdTree::box_distance2(Index node, const double* q) const {
  const double* lo = lo_.data() + node * dim_;
  const double* hi = hi_.data() + node * dim_;
  double s = 0.0;
  for (Index l = 0; l < dim_; ++l) {
    double t = 0.0;
    if (q[l] < lo[l]) t = lo[l] - q[l];
    else if (q[l] > hi[l]) t = q[l] - hi[l];
    s += t * t;
  }
  return s;
}

void KdTree::set_ranks(std::span<const Index> ranks) {
  ranks_.assign(ranks.begin(), ranks.end());
  if (!nodes_.empty()) refresh_rank(0);
}

Index KdTree::refresh_rank(Index node) {
  Node& nd = nodes_[node];
  if (nd.left < 0) {
    Index r = std::numeric_limits<Index>::max();
    for (Index t = nd.begin; t < nd.end; ++t) r = std::min(r, ranks_[perm_[t]]);
    nd.min_rank = r;
  } else {
    const Index a = refresh_rank(nd.left);
    const Index b = refresh_rank(nd.right);
    nodes_[node].min_rank = std::min(a, b);
  }
  return nodes_[node].min_rank;
}

std::vector<Neighbor> KdTree::knn(const double* query, Index k, Index rank_limit) const {
  std::vector<Neighbor> heap;
  if (k <= 0 || nodes_.empty()) return heap;
  heap.reserve(k + 1);
  if (ranks_.empty()) rank_limit = std::numeric_limits<Index>::max();
  knn_node(0, query, k, rank_limit, heap);
  std::sort_heap(heap.begin(), heap.end());
  return heap;
}

void KdTree::knn_node(Index node, const double* q, Index k, Index rank_limit,
                      std::vector<Neighbor>& heap) const {
  const Node& nd = nodes_[node];
  if (!ranks_.empty() && nd.min_rank >= rank_limit) return;
  const bool full = static_cast<Index>(heap.size()) == k;
  // Keep boxes at exactly the current worst distance: they may hold a tie
  // with a smaller index.
  if (full && box_distance2(node, q) > heap.front().dist2) return;
  if (nd.left < 0) {
    const double* X = points_->data();
    for (Index t = nd.begin; t < nd.end; ++t) {
      const Index p = perm_[t];
      if (!ranks_.empty() && ranks_[p] >= rank_limit) continue;
      const Neighbor cand{squared_distance(q, X + p * dim_, dim_), p};
      if (static_cast<Index>(heap.size()) < k) {
        heap.push_back(cand);
        std::push_heap(heap.begin(), heap.end());
      } else if (cand < heap.front()) {
        std::pop_heap(heap.begin(), heap.end());
        heap.back() = cand;
        std::push_heap(heap.begin(), heap.end());
      }
    }
    return;
  }
  const double dl = box_distance2(nd.left, q);
  const double dr = box_distance2(nd.right, q);
  if (dl <= dr) {
    knn_node(nd.left, q, k, rank_limit, heap);
    knn_node(nd.right, q, k, rank_limit, heap);
  } else {
    knn_node(nd.right, q, k, rank_limit, heap);
    knn_node(nd.left, q, k, rank_limit, heap);
  }
}

}  // namespace svecchia
