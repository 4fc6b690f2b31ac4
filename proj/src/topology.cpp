#include "druid/topology.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <fstream>
#include <queue>
#include <sstream>
#include <string>

namespace druid {

namespace {

IntSparse incidence(std::size_t n, const std::vector<Edge>& edges, int dst_sign)
{
    std::vector<Eigen::Triplet<int>> entries;
    entries.reserve(2 * edges.size());
    for (std::size_t k = 0; k < edges.size(); ++k) {
        entries.emplace_back(int(k), int(edges[k].src), 1);
        entries.emplace_back(int(k), int(edges[k].dst), dst_sign);
    }
    IntSparse m(Eigen::Index(edges.size()), Eigen::Index(n));
    m.setFromTriplets(entries.begin(), entries.end());
    return m;
}

}  // namespace

Topology::Topology(std::size_t n, std::vector<Edge> edges) : n_(n), edges_(std::move(edges)), neighbors_(n)
{
    if (n_ == 0)
        throw GraphError("topology needs at least one agent");
    for (auto& e : edges_) {
        if (e.src == e.dst)
            throw GraphError("self loop on node " + std::to_string(e.src));
        if (e.src > e.dst)
            std::swap(e.src, e.dst);
        if (e.dst >= n_)
            throw GraphError("edge endpoint " + std::to_string(e.dst) + " out of range");
    }
    std::sort(edges_.begin(), edges_.end(),
              [](const Edge& a, const Edge& b) { return std::pair(a.src, a.dst) < std::pair(b.src, b.dst); });
    if (std::adjacent_find(edges_.begin(), edges_.end()) != edges_.end())
        throw GraphError("duplicate edge");

    for (const auto& e : edges_) {
        neighbors_[e.src].push_back(e.dst);
        neighbors_[e.dst].push_back(e.src);
    }
    for (auto& nb : neighbors_)
        std::sort(nb.begin(), nb.end());

    es_ = incidence(n_, edges_, -1);
    eu_ = incidence(n_, edges_, 1);
    ls_ = IntSparse(es_.transpose() * es_);
    lu_ = IntSparse(eu_.transpose() * eu_);
    // D = (L_u + L_s) / 2; both Laplacians share the diagonal and the
    // off-diagonals cancel, so the halving is exact.
    IntSparse twice_deg = lu_ + ls_;
    deg_ = IntSparse(Eigen::Index(n_), Eigen::Index(n_));
    std::vector<Eigen::Triplet<int>> diag;
    for (int k = 0; k < twice_deg.outerSize(); ++k)
        for (IntSparse::InnerIterator it(twice_deg, k); it; ++it)
            if (it.value() != 0)
                diag.emplace_back(int(it.row()), int(it.col()), it.value() / 2);
    deg_.setFromTriplets(diag.begin(), diag.end());
}

std::size_t Topology::max_degree() const
{
    std::size_t best = 0;
    for (const auto& nb : neighbors_)
        best = std::max(best, nb.size());
    return best;
}

Topology generate_erdos_renyi(std::size_t n, double p, Rng& rng, std::size_t max_attempts)
{
    if (n < 2)
        throw GraphError("Erdos-Renyi generation needs n >= 2");
    if (!(p > 0.0 && p <= 1.0))
        throw GraphError("edge probability must lie in (0, 1]");

    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
        std::vector<Edge> edges;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                if (unif(rng) < p)
                    edges.push_back({i, j});
        Topology topo(n, std::move(edges));
        if (is_connected(topo))
            return topo;
    }
    throw GraphError("graph generation failed: no connected draw after " + std::to_string(max_attempts) +
                     " attempts");
}

bool is_connected(const Topology& topo)
{
    const std::size_t n = topo.size();
    std::vector<bool> seen(n, false);
    std::queue<std::size_t> frontier;
    seen[0] = true;
    frontier.push(0);
    std::size_t reached = 1;
    while (!frontier.empty()) {
        auto u = frontier.front();
        frontier.pop();
        for (auto v : topo.neighbors(u)) {
            if (!seen[v]) {
                seen[v] = true;
                ++reached;
                frontier.push(v);
            }
        }
    }
    return reached == n;
}

Eigen::MatrixXd to_dense(const IntSparse& m)
{
    return Eigen::MatrixXd(m.cast<double>());
}

SpectralConstants spectral_constants(const Topology& topo, std::size_t q)
{
    const std::size_t n = topo.size();
    if (q >= n)
        throw GraphError("regularizer agent index out of range");
    if (topo.edge_count() == 0)
        throw GraphError("spectral constants need a graph with at least one edge");
    if (!is_connected(topo))
        throw GraphError("spectral constants need a connected graph");

    // [E_s; e_q^T]^T [E_s; e_q^T] = L_s + e_q e_q^T shares its positive
    // spectrum with the (|E|+1) x (|E|+1) Gram matrix of the stacked operator.
    Eigen::MatrixXd gram = to_dense(topo.signed_laplacian());
    gram(Eigen::Index(q), Eigen::Index(q)) += 1.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> gram_eig(gram, Eigen::EigenvaluesOnly);
    double sigma_plus = 0.0;
    for (Eigen::Index k = 0; k < gram_eig.eigenvalues().size(); ++k) {
        if (gram_eig.eigenvalues()(k) > kPositiveEigenTol) {
            sigma_plus = gram_eig.eigenvalues()(k);
            break;
        }
    }
    if (sigma_plus <= 0.0)
        throw GraphError("stacked incidence operator is singular");

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> lu_eig(to_dense(topo.unsigned_laplacian()), Eigen::EigenvaluesOnly);
    return {sigma_plus, lu_eig.eigenvalues().maxCoeff()};
}

void write_edge_csv(const Topology& topo, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out)
        throw GraphError("cannot open " + path.string() + " for writing");
    out << "src,dst\n";
    for (const auto& e : topo.edges())
        out << e.src << ',' << e.dst << '\n';
}

Topology read_edge_csv(const std::filesystem::path& path, std::size_t n)
{
    std::ifstream in(path);
    if (!in)
        throw GraphError("cannot open edge list " + path.string());
    std::vector<Edge> edges;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "src,dst")
            continue;
        std::istringstream fields(line);
        std::size_t a = 0, b = 0;
        char comma = 0;
        if (!(fields >> a >> comma >> b) || comma != ',')
            throw GraphError(path.string() + ":" + std::to_string(lineno) + ": expected 'src,dst'");
        edges.push_back({a, b});
    }
    return Topology(n, std::move(edges));
}

}  // namespace druid
