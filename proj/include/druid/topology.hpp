#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <utility>
#include <vector>

#include "druid/streams.hpp"

namespace druid {

using IntSparse = Eigen::SparseMatrix<int, Eigen::RowMajor>;

struct Edge {
    std::size_t src;  // smaller endpoint
    std::size_t dst;  // larger endpoint
    friend bool operator==(const Edge&, const Edge&) = default;
};

class GraphError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Undirected communication graph with its incidence, Laplacian and degree
/// matrices.  Edges are kept in lexicographic (src, dst) order with src < dst;
/// the k-th row of each incidence matrix belongs to the k-th edge.
///
/// Matrices live at the n x n (or |E| x n) level.  The d-dimensional block
/// versions are applied by treating a stacked vector as an n x d matrix and
/// multiplying from the left.
class Topology {
public:
    Topology(std::size_t n, std::vector<Edge> edges);

    std::size_t size() const { return n_; }
    std::size_t edge_count() const { return edges_.size(); }
    const std::vector<Edge>& edges() const { return edges_; }
    const std::vector<std::size_t>& neighbors(std::size_t i) const { return neighbors_[i]; }
    std::size_t degree(std::size_t i) const { return neighbors_[i].size(); }
    std::size_t max_degree() const;

    const IntSparse& signed_incidence() const { return es_; }
    const IntSparse& unsigned_incidence() const { return eu_; }
    const IntSparse& signed_laplacian() const { return ls_; }
    const IntSparse& unsigned_laplacian() const { return lu_; }
    const IntSparse& degree_matrix() const { return deg_; }

private:
    std::size_t n_;
    std::vector<Edge> edges_;
    std::vector<std::vector<std::size_t>> neighbors_;
    IntSparse es_, eu_, ls_, lu_, deg_;
};

struct SpectralConstants {
    double sigma_plus_min;  // smallest positive eigenvalue of [E_s; e_q^T]^T [E_s; e_q^T]
    double sigma_lu_max;    // largest eigenvalue of the unsigned Laplacian
};

inline constexpr double kPositiveEigenTol = 1e-10;

/// Samples G(n, p) and redraws the whole graph from the same stream until it
/// is connected.  Throws GraphError after `max_attempts` disconnected draws.
Topology generate_erdos_renyi(std::size_t n, double p, Rng& rng, std::size_t max_attempts = 10000);

/// Breadth-first reachability from node 0.
bool is_connected(const Topology& topo);

SpectralConstants spectral_constants(const Topology& topo, std::size_t q);

/// Edge list as "src,dst" lines (0-based) with a header row.
void write_edge_csv(const Topology& topo, const std::filesystem::path& path);
Topology read_edge_csv(const std::filesystem::path& path, std::size_t n);

Eigen::MatrixXd to_dense(const IntSparse& m);

}  // namespace druid
