// Core domain types: observation datasets with a continuous/discrete covariate
// split, the standardization transform, and potential-outcome companions used
// by the simulation oracles.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "apsiv/common.hpp"

namespace apsiv {

// Observed sample {(Y_i, X_i, D_i, Z_i)}. Continuous covariates live in x_cont
// (n × p_c), discrete covariate codes in x_disc (n × p_d; p_d may be 0).
// d and z are strictly {0,1}-valued.
struct Dataset {
  Eigen::VectorXd y;
  Eigen::MatrixXd x_cont;
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> x_disc;
  Eigen::VectorXd d;
  Eigen::VectorXd z;

  std::int64_t n() const { return y.size(); }
  int p_cont() const { return static_cast<int>(x_cont.cols()); }
  int p_disc() const { return static_cast<int>(x_disc.cols()); }

  // Throws on length mismatches or non-binary d/z entries.
  void validate() const;
};

// Affine map x -> (x - mean) / sd per continuous column. Constant columns are
// flagged and passed through unscaled (sd slot holds 1 so the map stays invertible).
struct StandardizationMap {
  Eigen::VectorXd means;
  Eigen::VectorXd stddevs;
  std::vector<bool> constant;

  int dim() const { return static_cast<int>(means.size()); }
  double to_standardized(int j, double raw) const {
    return constant[static_cast<std::size_t>(j)] ? raw : (raw - means[j]) / stddevs[j];
  }
  double to_raw(int j, double standardized) const {
    return constant[static_cast<std::size_t>(j)] ? standardized
                                                 : means[j] + stddevs[j] * standardized;
  }
  bool is_identity() const;
};

// Standardize every continuous column to mean 0, variance 1 (population
// convention, denominator n). Discrete columns are untouched.
std::pair<Dataset, StandardizationMap> standardize(const Dataset& data);

// Simulation-only oracle companion: both potential outcomes and both potential
// treatment decisions for every row.
struct PotentialOutcomes {
  Eigen::VectorXd y1;
  Eigen::VectorXd y0;
  Eigen::VectorXd d1;
  Eigen::VectorXd d0;
};

// Project potential outcomes through a recommendation vector z:
// d = z·d1 + (1−z)·d0 and y = d·y1 + (1−d)·y0, exactly.
void realize_observed(const PotentialOutcomes& pot, const Eigen::VectorXd& z,
                      Eigen::VectorXd* d_out, Eigen::VectorXd* y_out);

}  // namespace apsiv
