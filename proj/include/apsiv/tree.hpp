// Axis-aligned CART regression tree with squared-error splits, capped depth,
// and a minimum leaf size. Deterministic: ties break to the lowest feature
// index and the first admissible threshold.
#pragma once

#include <Eigen/Dense>
#include <vector>

namespace apsiv {

class RegressionTree {
 public:
  struct Params {
    int max_depth = 4;
    int min_leaf = 10;
  };

  static RegressionTree fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                            const Params& params);
  static RegressionTree fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    return fit(x, y, Params{});
  }

  double predict(const double* x) const;
  double predict(const Eigen::VectorXd& x) const { return predict(x.data()); }

  int leaf_count() const;
  int node_count() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
  };

  int build(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::vector<int>& rows, int lo,
            int hi, int depth, const Params& params);

  std::vector<Node> nodes_;
};

}  // namespace apsiv
