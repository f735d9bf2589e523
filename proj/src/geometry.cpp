#include "svecchia/geometry.hpp"

#include "svecchia/kdtree.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace svecchia {

ConditioningPlan::ConditioningPlan(std::vector<Index> order, std::vector<std::vector<Index>> sets,
                                   Index m)
    : order_(std::move(order)), m_(m) {
  if (sets.size() != order_.size()) throw Error("conditioning plan: one set per position required");
  offsets_.reserve(order_.size() + 1);
  for (std::size_t i = 0; i < sets.size(); ++i) {
    auto& s = sets[i];
    std::sort(s.begin(), s.end());
    for (Index j : s)
      if (j < 0 || j >= static_cast<Index>(i)) throw Error("conditioning plan: set entry does not precede its position");
    neighbors_.insert(neighbors_.end(), s.begin(), s.end());
    offsets_.push_back(static_cast<Index>(neighbors_.size()));
  }
}

PredictionPlan::PredictionPlan(Index n_obs, std::vector<Index> obs_order,
                               std::vector<Index> pred_order,
                               std::vector<std::vector<Index>> sets, Index m)
    : n_obs_(n_obs), obs_order_(std::move(obs_order)), pred_order_(std::move(pred_order)), m_(m) {
  if (sets.size() != pred_order_.size()) throw Error("prediction plan: one set per prediction required");
  for (std::size_t k = 0; k < sets.size(); ++k) {
    auto& s = sets[k];
    std::sort(s.begin(), s.end());
    for (Index j : s)
      if (j < 0 || j >= n_obs_ + static_cast<Index>(k)) throw Error("prediction plan: set entry does not precede its position");
    neighbors_.insert(neighbors_.end(), s.begin(), s.end());
    offsets_.push_back(static_cast<Index>(neighbors_.size()));
  }
}

namespace {

// Max-priority queue over point indices keyed by (dist2 desc, index asc),
// supporting decrease-key.
class MaximinQueue {
 public:
  explicit MaximinQueue(const std::vector<double>& dist2) : key_(dist2), pos_(dist2.size()) {
    heap_.resize(dist2.size());
    std::iota(heap_.begin(), heap_.end(), Index{0});
    for (std::size_t i = 0; i < heap_.size(); ++i) pos_[heap_[i]] = static_cast<Index>(i);
    for (Index i = static_cast<Index>(heap_.size()) / 2 - 1; i >= 0; --i) sift_down(i);
  }

  bool empty() const { return heap_.empty(); }
  Index top() const { return heap_.front(); }
  double key(Index p) const { return key_[p]; }
  bool contains(Index p) const { return pos_[p] >= 0; }

  Index pop() {
    const Index p = heap_.front();
    swap_at(0, static_cast<Index>(heap_.size()) - 1);
    heap_.pop_back();
    pos_[p] = -1;
    if (!heap_.empty()) sift_down(0);
    return p;
  }

  void decrease(Index p, double value) {
    key_[p] = value;
    sift_down(pos_[p]);
  }

 private:
  bool before(Index a, Index b) const {
    return key_[a] > key_[b] || (key_[a] == key_[b] && a < b);
  }
  void swap_at(Index i, Index j) {
    std::swap(heap_[i], heap_[j]);
    pos_[heap_[i]] = i;
    pos_[heap_[j]] = j;
  }
  void sift_down(Index i) {
    const Index n = static_cast<Index>(heap_.size());
    for (;;) {
      Index best = i;
      const Index l = 2 * i + 1, r = 2 * i + 2;
      if (l < n && before(heap_[l], heap_[best])) best = l;
      if (r < n && before(heap_[r], heap_[best])) best = r;
      if (best == i) return;
      swap_at(i, best);
      i = best;
    }
  }

  std::vector<double> key_;
  std::vector<Index> pos_;
  std::vector<Index> heap_;
};

// Greedy maximin selection given initial squared min-distances. Updates use
// range queries: once p is chosen with squared distance l2, only points
// within l2 of p can have their min-distance reduced.
std::vector<Index> greedy_maximin(const Points& Z, std::vector<double> dist2, Index count) {
  const Index n = Z.rows();
  const Index d = Z.cols();
  if (count < 0 || count > n) count = n;
  std::vector<Index> order;
  order.reserve(count);
  if (n == 0 || count == 0) return order;
  KdTree tree(Z);
  MaximinQueue queue(dist2);
  while (static_cast<Index>(order.size()) < count) {
    const Index p = queue.pop();
    order.push_back(p);
    const double l2 = queue.key(p);
    if (!(l2 > 0.0)) continue;
    const double* zp = Z.data() + p * d;
    tree.within(zp, l2, [&](Index q, double d2) {
      if (queue.contains(q) && d2 < queue.key(q)) queue.decrease(q, d2);
    });
  }
  return order;
}

Index centroid_seed(const Points& Z) {
  const Eigen::RowVectorXd mean = Z.colwise().mean();
  Index best = 0;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < Z.rows(); ++i) {
    const double d2 = squared_distance(Z.data() + i * Z.cols(), mean.data(), Z.cols());
    if (d2 < best_d2) {
      best_d2 = d2;
      best = i;
    }
  }
  return best;
}

}  // namespace

std::vector<Index> maximin_order(const Points& Z) {
  const Index n = Z.rows();
  if (n == 0) return {};
  const Index d = Z.cols();
  const Index seed = centroid_seed(Z);
  std::vector<double> init(n);
  for (Index q = 0; q < n; ++q)
    init[q] = squared_distance(Z.data() + q * d, Z.data() + seed * d, d);
  // Negative key: the seed sorts last and never receives an update.
  init[seed] = -1.0;
  std::vector<Index> rest = greedy_maximin(Z, std::move(init), n - 1);
  std::vector<Index> order;
  order.reserve(n);
  order.push_back(seed);
  order.insert(order.end(), rest.begin(), rest.end());
  return order;
}

std::vector<Index> maximin_order_after(const Points& fixed, const Points& candidates, Index count) {
  const Index n = candidates.rows();
  if (count < 0 || count > n) count = n;
  if (fixed.rows() == 0) {
    std::vector<Index> order = maximin_order(candidates);
    order.resize(count);
    return order;
  }
  if (fixed.cols() != candidates.cols()) throw Error("maximin_order_after: dimension mismatch");
  KdTree tree(fixed);
  std::vector<double> dist2(n);
  for (Index q = 0; q < n; ++q)
    dist2[q] = tree.knn(candidates.data() + q * candidates.cols(), 1).front().dist2;
  return greedy_maximin(candidates, std::move(dist2), count);
}

ConditioningPlan nn_conditioning(const Points& Z, std::vector<Index> order, Index m) {
  const Index n = Z.rows();
  if (static_cast<Index>(order.size()) != n) throw Error("nn_conditioning: order must be a permutation of all points");
  if (m < 1) throw Error("nn_conditioning: m must be >= 1");
  std::vector<Index> rank(n, -1);
  for (Index i = 0; i < n; ++i) {
    if (order[i] < 0 || order[i] >= n || rank[order[i]] >= 0)
      throw Error("nn_conditioning: order is not a permutation");
    rank[order[i]] = i;
  }
  KdTree tree(Z);
  tree.set_ranks(rank);
  std::vector<std::vector<Index>> sets(n);
  for (Index i = 1; i < n; ++i) {
    const auto nb = tree.knn(Z.data() + order[i] * Z.cols(), std::min(m, i), i);
    auto& s = sets[i];
    s.reserve(nb.size());
    for (const auto& x : nb) s.push_back(rank[x.index]);
  }
  return ConditioningPlan(std::move(order), std::move(sets), m);
}

ConditioningPlan lowrank_conditioning(std::vector<Index> order, Index m) {
  if (m < 1) throw Error("lowrank_conditioning: m must be >= 1");
  const Index n = static_cast<Index>(order.size());
  std::vector<std::vector<Index>> sets(n);
  for (Index i = 1; i < n; ++i) {
    sets[i].resize(std::min(m, i));
    std::iota(sets[i].begin(), sets[i].end(), Index{0});
  }
  return ConditioningPlan(std::move(order), std::move(sets), m);
}

PredictionPlan prediction_plan(const Points& Z_obs, const Points& Z_pred, Index m_pred) {
  if (Z_obs.rows() == 0 || Z_pred.rows() == 0) throw Error("prediction_plan: empty point set");
  if (Z_obs.cols() != Z_pred.cols()) throw Error("prediction_plan: dimension mismatch");
  if (m_pred < 1) throw Error("prediction_plan: m must be >= 1");
  const Index n = Z_obs.rows(), np = Z_pred.rows(), d = Z_obs.cols();
  std::vector<Index> obs_order = maximin_order(Z_obs);
  std::vector<Index> pred_order = maximin_order_after(Z_obs, Z_pred);

  Points joint(n + np, d);
  for (Index i = 0; i < n; ++i) joint.row(i) = Z_obs.row(obs_order[i]);
  for (Index k = 0; k < np; ++k) joint.row(n + k) = Z_pred.row(pred_order[k]);
  std::vector<Index> rank(n + np);
  std::iota(rank.begin(), rank.end(), Index{0});
  KdTree tree(joint);
  tree.set_ranks(rank);
  std::vector<std::vector<Index>> sets(np);
  for (Index k = 0; k < np; ++k) {
    const Index pos = n + k;
    const auto nb = tree.knn(joint.data() + pos * d, std::min(m_pred, pos), pos);
    sets[k].reserve(nb.size());
    for (const auto& x : nb) sets[k].push_back(x.index);
  }
  return PredictionPlan(n, std::move(obs_order), std::move(pred_order), std::move(sets), m_pred);
}

PredictionPlan lowrank_prediction_plan(const Points& Z_obs, const Points& Z_pred, Index m_pred) {
  if (Z_obs.rows() == 0 || Z_pred.rows() == 0) throw Error("prediction_plan: empty point set");
  if (m_pred < 1) throw Error("prediction_plan: m must be >= 1");
  const Index n = Z_obs.rows(), np = Z_pred.rows();
  std::vector<Index> obs_order = maximin_order(Z_obs);
  std::vector<Index> pred_order(np);
  std::iota(pred_order.begin(), pred_order.end(), Index{0});
  std::vector<std::vector<Index>> sets(np);
  for (auto& s : sets) {
    s.resize(std::min(m_pred, n));
    std::iota(s.begin(), s.end(), Index{0});
  }
  return PredictionPlan(n, std::move(obs_order), std::move(pred_order), std::move(sets), m_pred);
}

}  // namespace svecchia
