#include "lan/graph.hpp"

#include <cmath>

namespace lan::graph {

Matrix pairwise_similarity(const Matrix& x, const Matrix& head_weights, SimilarityCache* cache) {
  const Eigen::Index n = x.rows();
  const Eigen::Index heads = head_weights.rows();
  if (heads < 1) throw InvalidConfig("similarity needs at least one head");
  if (head_weights.cols() != x.cols()) throw ComputeError("similarity weight width mismatch");
  Matrix sim = Matrix::Zero(n, n);
  if (cache) {
    cache->unit.assign(static_cast<std::size_t>(heads), Matrix());
    cache->norms.assign(static_cast<std::size_t>(heads), Vector());
    cache->zero_rows = 0;
  }
  for (Eigen::Index z = 0; z < heads; ++z) {
    Matrix unit = x.array().rowwise() * head_weights.row(z).array();
    Vector norms = unit.rowwise().norm();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (norms(i) < kZeroNorm) {
        unit.row(i).setZero();
        if (cache) ++cache->zero_rows;
      } else {
        unit.row(i) /= norms(i);
      }
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i; j < n; ++j) {
        const double c = unit.row(i).dot(unit.row(j));
        sim(i, j) += c;
      }
    }
    if (cache) {
      cache->unit[static_cast<std::size_t>(z)] = std::move(unit);
      cache->norms[static_cast<std::size_t>(z)] = std::move(norms);
    }
  }
  sim /= static_cast<double>(heads);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < i; ++j) sim(i, j) = sim(j, i);
  return sim;
}

void pairwise_similarity_backward(const Matrix& x, const Matrix& head_weights,
                                  const SimilarityCache& cache, const Matrix& d_sim, Matrix& d_x,
                                  Matrix* d_head_weights) {
  const Eigen::Index n = x.rows();
  const Eigen::Index heads = head_weights.rows();
  const Matrix d_c = (d_sim + d_sim.transpose()) / static_cast<double>(heads);
  for (Eigen::Index z = 0; z < heads; ++z) {
    const Matrix& unit = cache.unit[static_cast<std::size_t>(z)];
    const Vector& norms = cache.norms[static_cast<std::size_t>(z)];
    const Matrix d_unit = d_c * unit;
    Matrix d_weighted(n, x.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
      if (norms(i) < kZeroNorm) {
        d_weighted.row(i).setZero();
        continue;
      }
      const double proj = d_unit.row(i).dot(unit.row(i));
      d_weighted.row(i) = (d_unit.row(i) - proj * unit.row(i)) / norms(i);
    }
    d_x.array() += d_weighted.array().rowwise() * head_weights.row(z).array();
    if (d_head_weights)
      d_head_weights->row(z) += (d_weighted.array() * x.array()).colwise().sum().matrix();
  }
}

Matrix threshold_adjacency(const Matrix& sim, double epsilon) {
  Matrix adj = sim;
  for (Eigen::Index i = 0; i < adj.rows(); ++i)
    for (Eigen::Index j = 0; j < adj.cols(); ++j)
      if (!(adj(i, j) >= epsilon) || adj(i, j) < 0.0) adj(i, j) = 0.0;
  return adj;
}

Matrix threshold_backward(const Matrix& adjacency, const Matrix& d_adj) {
  return (adjacency.array() != 0.0).select(d_adj, 0.0);
}

namespace {

struct Degrees {
  Vector deg, inv_sqrt, t;  // t_i = d_i * s_i^2
  std::vector<bool> clamped;
};

Degrees degrees(const Matrix& adj) {
  Degrees d;
  d.deg = adj.rowwise().sum();
  const Eigen::Index n = adj.rows();
  d.inv_sqrt.resize(n);
  d.t.resize(n);
  d.clamped.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const bool clamped = d.deg(i) < kDegreeClamp;
    d.clamped[static_cast<std::size_t>(i)] = clamped;
    const double safe = clamped ? kDegreeClamp : d.deg(i);
    d.inv_sqrt(i) = 1.0 / std::sqrt(safe);
    d.t(i) = d.deg(i) / safe;
  }
  return d;
}

}  // namespace

double dirichlet_energy(const Matrix& adj, const Matrix& x, bool normalize) {
  const Matrix gram = x * x.transpose();
  if (!normalize) {
    const Vector deg = adj.rowwise().sum();
    return deg.dot(gram.diagonal()) - (adj.array() * gram.array()).sum();
  }
  const Degrees d = degrees(adj);
  const Matrix scaled = d.inv_sqrt.asDiagonal() * adj * d.inv_sqrt.asDiagonal();
  return d.t.dot(gram.diagonal()) - (scaled.array() * gram.array()).sum();
}

void dirichlet_energy_backward(const Matrix& adj, const Matrix& x, bool normalize, double scale,
                               Matrix& d_adj, Matrix& d_x) {
  const Eigen::Index n = adj.rows();
  const Matrix gram = x * x.transpose();
  const Vector g = gram.diagonal();
  if (!normalize) {
    const Vector deg = adj.rowwise().sum();
    for (Eigen::Index a = 0; a < n; ++a)
      for (Eigen::Index b = 0; b < n; ++b) d_adj(a, b) += scale * (g(a) - gram(a, b));
    d_x += scale * (2.0 * (deg.asDiagonal() * x) - (adj + adj.transpose()) * x);
    return;
  }
  const Degrees d = degrees(adj);
  const Matrix scaled = d.inv_sqrt.asDiagonal() * adj * d.inv_sqrt.asDiagonal();
  // dE/d(deg_a)
  Vector d_deg(n);
  for (Eigen::Index a = 0; a < n; ++a) {
    if (d.clamped[static_cast<std::size_t>(a)]) {
      d_deg(a) = g(a) / kDegreeClamp;
      continue;
    }
    const double ds = -0.5 * std::pow(d.deg(a), -1.5);
    double acc = 0.0;
    for (Eigen::Index j = 0; j < n; ++j)
      acc += d.inv_sqrt(j) * (adj(a, j) * gram(a, j) + adj(j, a) * gram(j, a));
    d_deg(a) = -ds * acc;
  }
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < n; ++b)
      d_adj(a, b) += scale * (-d.inv_sqrt(a) * d.inv_sqrt(b) * gram(a, b) + d_deg(a));
  d_x += scale * (2.0 * (d.t.asDiagonal() * x) - (scaled + scaled.transpose()) * x);
}

double log_barrier(const Matrix& adj) {
  const Vector deg = adj.rowwise().sum();
  return -(deg.array() + kDegreeClamp).log().sum();
}

void log_barrier_backward(const Matrix& adj, double scale, Matrix& d_adj) {
  const Vector deg = adj.rowwise().sum();
  for (Eigen::Index a = 0; a < adj.rows(); ++a)
    d_adj.row(a).array() -= scale / (deg(a) + kDegreeClamp);
}

double frobenius_sq(const Matrix& adj) { return adj.squaredNorm(); }

void frobenius_sq_backward(const Matrix& adj, double scale, Matrix& d_adj) {
  d_adj += 2.0 * scale * adj;
}

double graph_reg_loss(const Matrix& adj, const Matrix& x, const RegWeights& w, bool normalize) {
  const double n = static_cast<double>(adj.rows());
  double loss = 0.0;
  if (w.dirichlet != 0.0) loss += w.dirichlet / (n * n) * dirichlet_energy(adj, x, normalize);
  if (w.log_barrier != 0.0) loss += w.log_barrier / n * log_barrier(adj);
  if (w.frobenius != 0.0) loss += w.frobenius / (n * n) * frobenius_sq(adj);
  return loss;
}

void graph_reg_loss_backward(const Matrix& adj, const Matrix& x, const RegWeights& w,
                             bool normalize, double scale, Matrix& d_adj, Matrix& d_x) {
  const double n = static_cast<double>(adj.rows());
  if (w.dirichlet != 0.0)
    dirichlet_energy_backward(adj, x, normalize, scale * w.dirichlet / (n * n), d_adj, d_x);
  if (w.log_barrier != 0.0) log_barrier_backward(adj, scale * w.log_barrier / n, d_adj);
  if (w.frobenius != 0.0) frobenius_sq_backward(adj, scale * w.frobenius / (n * n), d_adj);
}

void write_edge_list(std::ostream& out, const Matrix& adj) {
  for (Eigen::Index i = 0; i < adj.rows(); ++i)
    for (Eigen::Index j = 0; j < adj.cols(); ++j)
      if (adj(i, j) != 0.0) out << i << ' ' << j << ' ' << adj(i, j) << '\n';
}

}  // namespace lan::graph
