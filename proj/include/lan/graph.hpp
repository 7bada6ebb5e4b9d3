#pragma once

#include <cstddef>
#include <ostream>
#include <vector>

#include "lan/common.hpp"

namespace lan::graph {

// Weighted rows with a norm below this are treated as zero vectors: their
// cosine terms are defined as 0.
inline constexpr double kZeroNorm = 1e-12;
// Degree clamp before D^{-1/2} and inside the log barrier.
inline constexpr double kDegreeClamp = 1e-12;

struct RegWeights {
  double dirichlet = 0.2;
  double log_barrier = 0.1;
  double frobenius = 0.1;
};

// Multi-head weighted cosine similarity. `head_weights` is Z x d; row z
// re-weights features before the cosine of head z.
struct SimilarityCache {
  std::vector<Matrix> unit;       // per head: (k+1) x d normalized weighted rows
  std::vector<Vector> norms;      // per head: row norms of the weighted rows
  std::size_t zero_rows = 0;      // weighted rows treated as zero
};

Matrix pairwise_similarity(const Matrix& x, const Matrix& head_weights,
                           SimilarityCache* cache = nullptr);
// Accumulates dL/dX and dL/dW given dL/dS.
void pairwise_similarity_backward(const Matrix& x, const Matrix& head_weights,
                                  const SimilarityCache& cache, const Matrix& d_sim,
                                  Matrix& d_x, Matrix* d_head_weights);

// A_ij = S_ij if S_ij >= epsilon and S_ij >= 0, else 0.
Matrix threshold_adjacency(const Matrix& sim, double epsilon);
// Hard gate: gradient passes only where the entry survived.
Matrix threshold_backward(const Matrix& adjacency, const Matrix& d_adj);

// (1/2) sum_ij A_ij ||x_i - x_j||^2 as tr(X^T L X); with `normalize` the
// degree-normalized Laplacian D^{-1/2} L D^{-1/2} is used.
double dirichlet_energy(const Matrix& adj, const Matrix& x, bool normalize);
void dirichlet_energy_backward(const Matrix& adj, const Matrix& x, bool normalize, double scale,
                               Matrix& d_adj, Matrix& d_x);

// -1^T log(A 1 + delta)
double log_barrier(const Matrix& adj);
void log_barrier_backward(const Matrix& adj, double scale, Matrix& d_adj);

double frobenius_sq(const Matrix& adj);
void frobenius_sq_backward(const Matrix& adj, double scale, Matrix& d_adj);

// (mu1/n^2) dirichlet + (mu2/n) log_barrier + (mu3/n^2) frobenius, n = node count.
double graph_reg_loss(const Matrix& adj, const Matrix& x, const RegWeights& weights,
                      bool normalize);
void graph_reg_loss_backward(const Matrix& adj, const Matrix& x, const RegWeights& weights,
                             bool normalize, double scale, Matrix& d_adj, Matrix& d_x);

// Debug dump: one "i j weight" line per nonzero entry.
void write_edge_list(std::ostream& out, const Matrix& adj);

}  // namespace lan::graph
