#include "apsiv/tree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "apsiv/common.hpp"

namespace apsiv {

namespace {

struct Split {
  bool found = false;
  int feature = -1;
  double threshold = 0.0;
  double score = -std::numeric_limits<double>::infinity();
};

// Best squared-error split of rows[lo, hi): maximize sumL^2/nL + sumR^2/nR.
Split best_split(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::vector<int>& rows,
                 int lo, int hi, int min_leaf) {
  const int n = hi - lo;
  const int p = static_cast<int>(x.cols());
  Split best;
  std::vector<int> order(static_cast<std::size_t>(n));
  std::vector<double> prefix(static_cast<std::size_t>(n) + 1);
  for (int j = 0; j < p; ++j) {
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = rows[static_cast<std::size_t>(lo + i)];
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return x(a, j) < x(b, j); });
    prefix[0] = 0.0;
    for (int i = 0; i < n; ++i)
      prefix[static_cast<std::size_t>(i) + 1] = prefix[static_cast<std::size_t>(i)] + y(order[static_cast<std::size_t>(i)]);
    const double total = prefix[static_cast<std::size_t>(n)];
    for (int t = min_leaf; t <= n - min_leaf; ++t) {
      const double xl = x(order[static_cast<std::size_t>(t) - 1], j);
      const double xr = x(order[static_cast<std::size_t>(t)], j);
      if (!(xl < xr)) continue;
      const double sum_l = prefix[static_cast<std::size_t>(t)];
      const double sum_r = total - sum_l;
      const double score = sum_l * sum_l / t + sum_r * sum_r / (n - t);
      if (score > best.score) {
        double thr = 0.5 * (xl + xr);
        if (!(thr > xl)) thr = xr;  // midpoint rounded back onto xl; split at xr instead
        best.found = true;
        best.feature = j;
        best.threshold = thr;
        best.score = score;
      }
    }
  }
  return best;
}

}  // namespace

int RegressionTree::build(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                          std::vector<int>& rows, int lo, int hi, int depth,
                          const Params& params) {
  const int n = hi - lo;
  double sum = 0.0;
  for (int i = lo; i < hi; ++i) sum += y(rows[static_cast<std::size_t>(i)]);
  const double mean = sum / n;

  const int self = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{});
  nodes_[static_cast<std::size_t>(self)].value = mean;
  if (depth >= params.max_depth || n < 2 * params.min_leaf) return self;

  const Split split = best_split(x, y, rows, lo, hi, params.min_leaf);
  if (!split.found) return self;
  const double base = sum * sum / n;
  if (!(split.score > base + 1e-12 * std::max(1.0, std::fabs(base)))) return self;

  const auto mid_it = std::stable_partition(
      rows.begin() + lo, rows.begin() + hi,
      [&](int r) { return x(r, split.feature) < split.threshold; });
  const int mid = static_cast<int>(mid_it - rows.begin());
  if (mid - lo < params.min_leaf || hi - mid < params.min_leaf) return self;

  nodes_[static_cast<std::size_t>(self)].feature = split.feature;
  nodes_[static_cast<std::size_t>(self)].threshold = split.threshold;
  const int left = build(x, y, rows, lo, mid, depth + 1, params);
  nodes_[static_cast<std::size_t>(self)].left = left;
  const int right = build(x, y, rows, mid, hi, depth + 1, params);
  nodes_[static_cast<std::size_t>(self)].right = right;
  return self;
}

RegressionTree RegressionTree::fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                   const Params& params) {
  require(x.rows() == y.size(), Errc::DimensionMismatch, "tree fit: x rows must match y length");
  require(x.rows() >= 1, Errc::EmptyDataset, "tree fit needs >= 1 row");
  require(params.max_depth >= 0 && params.min_leaf >= 1, Errc::ConfigError,
          "tree params out of range");
  RegressionTree tree;
  std::vector<int> rows(static_cast<std::size_t>(x.rows()));
  std::iota(rows.begin(), rows.end(), 0);
  tree.build(x, y, rows, 0, static_cast<int>(x.rows()), 0, params);
  return tree;
}

double RegressionTree::predict(const double* x) const {
  int idx = 0;
  while (nodes_[static_cast<std::size_t>(idx)].feature >= 0) {
    const Node& node = nodes_[static_cast<std::size_t>(idx)];
    idx = x[node.feature] < node.threshold ? node.left : node.right;
  }
  return nodes_[static_cast<std::size_t>(idx)].value;
}

int RegressionTree::leaf_count() const {
  int c = 0;
  for (const Node& node : nodes_)
    if (node.feature < 0) ++c;
  return c;
}

}  // namespace apsiv
