#include "apsiv/data.hpp"

#include <cmath>

namespace apsiv {

void Dataset::validate() const {
  const std::int64_t rows = n();
  require(rows >= 1, Errc::EmptyDataset, "dataset has no rows");
  require(d.size() == rows && z.size() == rows, Errc::DimensionMismatch,
          "y, d, z must share length n");
  require(x_cont.rows() == rows || (x_cont.size() == 0 && rows >= 0), Errc::DimensionMismatch,
          "x_cont row count differs from n");
  require(x_disc.rows() == rows || x_disc.size() == 0, Errc::DimensionMismatch,
          "x_disc row count differs from n");
  for (std::int64_t i = 0; i < rows; ++i) {
    require(d[i] == 0.0 || d[i] == 1.0, Errc::NonBinary, "d contains a value outside {0,1}");
    require(z[i] == 0.0 || z[i] == 1.0, Errc::NonBinary, "z contains a value outside {0,1}");
  }
}

bool StandardizationMap::is_identity() const {
  for (int j = 0; j < dim(); ++j) {
    if (constant[static_cast<std::size_t>(j)]) continue;
    if (means[j] != 0.0 || stddevs[j] != 1.0) return false;
  }
  return true;
}

std::pair<Dataset, StandardizationMap> standardize(const Dataset& data) {
  require(data.n() >= 2, Errc::EmptyDataset, "standardize needs n >= 2");
  const int p = data.p_cont();
  const double n = static_cast<double>(data.n());

  StandardizationMap map;
  map.means.resize(p);
  map.stddevs.resize(p);
  map.constant.assign(static_cast<std::size_t>(p), false);

  Dataset out = data;
  for (int j = 0; j < p; ++j) {
    const auto col = data.x_cont.col(j);
    const double mean = col.mean();
    const double var = (col.array() - mean).square().sum() / n;  // population variance
    if (var <= 0.0) {
      map.means[j] = 0.0;
      map.stddevs[j] = 1.0;
      map.constant[static_cast<std::size_t>(j)] = true;
      continue;
    }
    const double sd = std::sqrt(var);
    map.means[j] = mean;
    map.stddevs[j] = sd;
    out.x_cont.col(j) = (col.array() - mean) / sd;
  }
  return {std::move(out), std::move(map)};
}

void realize_observed(const PotentialOutcomes& pot, const Eigen::VectorXd& z,
                      Eigen::VectorXd* d_out, Eigen::VectorXd* y_out) {
  const std::int64_t n = z.size();
  require(pot.y1.size() == n && pot.y0.size() == n && pot.d1.size() == n && pot.d0.size() == n,
          Errc::DimensionMismatch, "potential outcome vectors must match z length");
  d_out->resize(n);
  y_out->resize(n);
  for (std::int64_t i = 0; i < n; ++i) {
    const double d = z[i] == 1.0 ? pot.d1[i] : pot.d0[i];
    (*d_out)[i] = d;
    (*y_out)[i] = d == 1.0 ? pot.y1[i] : pot.y0[i];
  }
}

}  // namespace apsiv
