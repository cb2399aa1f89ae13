#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "otinform/io.hpp"
#include "otinform/matrix.hpp"
#include "otinform/rng.hpp"

namespace otinform {

enum class CostKind { L1, SqL2 };

/// Ground cost on R^d. Zero on the diagonal, nonnegative everywhere.
struct GroundCost {
  CostKind kind = CostKind::SqL2;

  double operator()(std::span<const double> x, std::span<const double> y) const {
    if (x.size() != y.size()) throw std::invalid_argument("GroundCost: dimension mismatch");
    double s = 0.0;
    if (kind == CostKind::L1) {
      for (std::size_t k = 0; k < x.size(); ++k) s += std::abs(x[k] - y[k]);
    } else {
      for (std::size_t k = 0; k < x.size(); ++k) {
        const double d = x[k] - y[k];
        s += d * d;
      }
    }
    return s;
  }
};

inline const char* cost_kind_name(CostKind kind) {
  return kind == CostKind::L1 ? "l1" : "sql2";
}

/// Pairwise cost matrix: entry (i, j) = c(X_i, Y_j).
inline Matrix cost_matrix(const GroundCost& cost, const Matrix& x, const Matrix& y) {
  if (x.cols() != y.cols()) throw std::invalid_argument("cost_matrix: dimension mismatch");
  Matrix c(x.rows(), y.rows());
  const int d = x.cols(), m = y.rows();
  parallel_rows(x.rows(), [&](int r0, int r1) {
    for (int i = r0; i < r1; ++i) {
      const double* xi = x.row(i);
      double* ci = c.row(i);
      for (int j = 0; j < m; ++j) {
        const double* yj = y.row(j);
        double s = 0.0;
        if (cost.kind == CostKind::L1) {
          for (int k = 0; k < d; ++k) s += std::abs(xi[k] - yj[k]);
        } else {
          for (int k = 0; k < d; ++k) {
            const double dk = xi[k] - yj[k];
            s += dk * dk;
          }
        }
        ci[j] = s;
      }
    }
  });
  return c;
}

/// Weighted point cloud on the probability simplex: weights >= 0, sum 1
/// within 1e-12, all atom coordinates finite.
struct DiscreteMeasure {
  Matrix points;                 // n x d
  std::vector<double> weights;   // length n

  DiscreteMeasure(Matrix pts, std::vector<double> w)
      : points(std::move(pts)), weights(std::move(w)) {
    validate();
  }

  static DiscreteMeasure uniform(Matrix pts) {
    const int n = pts.rows();
    if (n < 1) throw std::invalid_argument("DiscreteMeasure: empty support");
    return DiscreteMeasure(std::move(pts), std::vector<double>(n, 1.0 / n));
  }

  static DiscreteMeasure dirac(std::vector<double> point) {
    Matrix pts(1, static_cast<int>(point.size()));
    for (std::size_t k = 0; k < point.size(); ++k) pts(0, static_cast<int>(k)) = point[k];
    return DiscreteMeasure(std::move(pts), {1.0});
  }

  int size() const { return points.rows(); }
  int dim() const { return points.cols(); }

  void validate() const {
    if (points.rows() < 1) throw std::invalid_argument("DiscreteMeasure: n must be >= 1");
    if (static_cast<int>(weights.size()) != points.rows())
      throw std::invalid_argument("DiscreteMeasure: weight count does not match atoms");
    if (!points.all_finite()) throw std::invalid_argument("DiscreteMeasure: non-finite coordinate");
    double total = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0)) throw std::invalid_argument("DiscreteMeasure: negative or NaN weight");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-12)
      throw std::invalid_argument("DiscreteMeasure: weights sum to " + format_double(total));
  }
};

/// Latent-space factorization: a one-hot categorical block and a Unif[-1,1]
/// block (the informative part), followed by a standard-normal noise block.
struct LatentSpec {
  int cat_dim = 0;
  int uni_dim = 0;
  int noise_dim = 0;

  int total_dim() const { return cat_dim + uni_dim + noise_dim; }
  int info_dim() const { return cat_dim + uni_dim; }

  void validate() const {
    if (cat_dim < 0 || uni_dim < 0 || noise_dim < 0)
      throw std::invalid_argument("LatentSpec: negative block size");
    if (total_dim() < 1) throw std::invalid_argument("LatentSpec: total dimension must be >= 1");
  }
};

/// Centers of the k x k mode grid on [-1, 1]^2 (endpoints included).
inline Matrix gaussian_grid_centers(int k_side) {
  if (k_side < 1) throw std::invalid_argument("gaussian_grid_centers: k_side must be >= 1");
  std::vector<double> ticks(k_side, 0.0);
  if (k_side > 1)
    for (int i = 0; i < k_side; ++i) ticks[i] = -1.0 + 2.0 * i / (k_side - 1);
  Matrix centers(k_side * k_side, 2);
  int r = 0;
  for (int i = 0; i < k_side; ++i)
    for (int j = 0; j < k_side; ++j) {
      centers(r, 0) = ticks[i];
      centers(r, 1) = ticks[j];
      ++r;
    }
  return centers;
}

/// n uniform-weight samples from an equal mixture of k_side^2 isotropic
/// Gaussians centered on the [-1, 1]^2 grid.
inline DiscreteMeasure gaussian_grid_dataset(int k_side, double sigma, int n, std::uint64_t seed) {
  if (k_side < 1) throw std::invalid_argument("gaussian_grid_dataset: k_side must be >= 1");
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_grid_dataset: sigma must be > 0");
  if (n < k_side * k_side) throw std::invalid_argument("gaussian_grid_dataset: n < number of modes");
  const Matrix centers = gaussian_grid_centers(k_side);
  Rng rng(seed);
  Matrix pts(n, 2);
  for (int i = 0; i < n; ++i) {
    const int m = rng.index(centers.rows());
    pts(i, 0) = centers(m, 0) + sigma * rng.normal();
    pts(i, 1) = centers(m, 1) + sigma * rng.normal();
  }
  return DiscreteMeasure::uniform(std::move(pts));
}

/// n uniform-weight samples on the diagonal {(t, t) : t in [0, 1]}, with t
/// drawn from an equal mixture of `modes` 1D Gaussians and clipped to [0, 1].
inline DiscreteMeasure diagonal_mixture_dataset(int n, int modes, double sigma, std::uint64_t seed) {
  if (modes < 1) throw std::invalid_argument("diagonal_mixture_dataset: modes must be >= 1");
  if (n < modes) throw std::invalid_argument("diagonal_mixture_dataset: n must be >= modes");
  Rng rng(seed);
  Matrix pts(n, 2);
  for (int i = 0; i < n; ++i) {
    const int m = rng.index(modes);
    const double center = (m + 0.5) / modes;
    double t = center + sigma * rng.normal();
    t = std::min(1.0, std::max(0.0, t));
    pts(i, 0) = t;
    pts(i, 1) = t;
  }
  return DiscreteMeasure::uniform(std::move(pts));
}

/// k^2 uniform-weight atoms at the cell centers of the k x k grid on [0, 1]^2.
inline DiscreteMeasure unit_square_grid(int k) {
  if (k < 1) throw std::invalid_argument("unit_square_grid: k must be >= 1");
  Matrix pts(k * k, 2);
  int r = 0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      pts(r, 0) = (i + 0.5) / k;
      pts(r, 1) = (j + 0.5) / k;
      ++r;
    }
  return DiscreteMeasure::uniform(std::move(pts));
}

/// One latent batch: each row is [one-hot(cat_dim) | Unif[-1,1]^uni_dim |
/// N(0,1)^noise_dim], drawn from the given stream.
inline Matrix sample_latent(const LatentSpec& spec, int batch, Rng& rng) {
  spec.validate();
  if (batch < 1) throw std::invalid_argument("sample_latent: batch must be >= 1");
  Matrix z(batch, spec.total_dim());
  for (int i = 0; i < batch; ++i) {
    int col = 0;
    if (spec.cat_dim > 0) {
      const int hot = rng.index(spec.cat_dim);
      z(i, hot) = 1.0;
      col = spec.cat_dim;
    }
    for (int k = 0; k < spec.uni_dim; ++k) z(i, col++) = rng.uniform(-1.0, 1.0);
    for (int k = 0; k < spec.noise_dim; ++k) z(i, col++) = rng.normal();
  }
  return z;
}

inline Matrix sample_latent(const LatentSpec& spec, int batch, std::uint64_t seed) {
  Rng rng(seed);
  return sample_latent(spec, batch, rng);
}

/// CSV with header `x0,...,x{d-1},weight`, one atom per row.
inline std::string measure_to_csv(const DiscreteMeasure& m) {
  std::string out;
  for (int k = 0; k < m.dim(); ++k) {
    out += "x" + format_int(k);
    out += ',';
  }
  out += "weight\n";
  for (int i = 0; i < m.size(); ++i) {
    for (int k = 0; k < m.dim(); ++k) {
      out += format_double(m.points(i, k));
      out += ',';
    }
    out += format_double(m.weights[i]);
    out += '\n';
  }
  return out;
}

inline DiscreteMeasure measure_from_csv(const std::string& text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t pos = text.find('\n', start);
    if (pos == std::string::npos) pos = text.size();
    if (pos > start) lines.push_back(std::string_view(text).substr(start, pos - start));
    start = pos + 1;
  }
  if (lines.size() < 2) throw std::invalid_argument("measure_from_csv: no data rows");
  const auto header = split_csv_line(lines[0]);
  if (header.size() < 2 || header.back() != "weight")
    throw std::invalid_argument("measure_from_csv: bad header");
  const int d = static_cast<int>(header.size()) - 1;
  const int n = static_cast<int>(lines.size()) - 1;
  Matrix pts(n, d);
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) {
    const auto cells = split_csv_line(lines[i + 1]);
    if (static_cast<int>(cells.size()) != d + 1)
      throw std::invalid_argument("measure_from_csv: bad row " + format_int(i + 2));
    for (int k = 0; k < d; ++k) pts(i, k) = parse_double(cells[k]);
    w[i] = parse_double(cells[d]);
  }
  return DiscreteMeasure(std::move(pts), std::move(w));
}

}  // namespace otinform
