#include <hierest/graph.hpp>
#include <hierest/rng.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace hierest::graph
{

Topology Topology::from_adjacency(const Eigen::MatrixXi& adjacency)
{
    const auto n = adjacency.rows();
    if (n != adjacency.cols())
        throw Error(Errc::BadDimension, "adjacency matrix must be square");
    if (n < 2)
        throw Error(Errc::BadDimension, "a communication graph needs at least 2 agents");

    for (Eigen::Index i = 0; i < n; ++i)
    {
        if (adjacency(i, i) != 0)
            throw Error(Errc::BadEntries, "adjacency diagonal must be zero");
        for (Eigen::Index j = 0; j < n; ++j)
        {
            const int a = adjacency(i, j);
            if (a != 0 && a != 1)
                throw Error(Errc::BadEntries, "adjacency entries must be 0 or 1");
            if (a != adjacency(j, i))
                throw Error(Errc::NonSymmetric, "adjacency matrix must be symmetric");
        }
    }

    Topology topo;
    topo.m_adjacency = adjacency;
    const Eigen::MatrixXd a = adjacency.cast<double>();
    const Eigen::VectorXd degree = a.rowwise().sum();
    topo.m_laplacian = Eigen::MatrixXd(degree.asDiagonal()) - a;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(topo.m_laplacian, Eigen::EigenvaluesOnly);
    // eigenvalues are returned in increasing order
    topo.m_lambda2 = eig.eigenvalues()(1);
    topo.m_lambdaMax = eig.eigenvalues()(n - 1);
    if (topo.m_lambda2 < kConnectivityThreshold)
    {
        std::ostringstream msg;
        msg << "graph is disconnected (lambda2 = " << topo.m_lambda2 << ")";
        throw Error(Errc::Disconnected, msg.str());
    }

    topo.m_neighbors.resize(n);
    for (int i = 0; i < n; ++i)
    {
        for (int j = 0; j < n; ++j)
        {
            if (adjacency(i, j) == 0)
                continue;
            topo.m_neighbors[i].push_back(j);
            if (i < j)
                topo.m_edges.push_back({i, j});
        }
    }
    return topo;
}

Topology Topology::from_edges(int n_agents, std::span<const std::pair<int, int>> edges)
{
    if (n_agents < 2)
        throw Error(Errc::BadDimension, "a communication graph needs at least 2 agents");
    Eigen::MatrixXi a = Eigen::MatrixXi::Zero(n_agents, n_agents);
    for (const auto& [i, j] : edges)
    {
        if (i < 0 || j < 0 || i >= n_agents || j >= n_agents)
            throw Error(Errc::BadEntries, "edge endpoint out of range");
        if (i == j)
            throw Error(Errc::BadEntries, "self loops are not allowed");
        a(i, j) = 1;
        a(j, i) = 1;
    }
    return from_adjacency(a);
}

int Topology::max_degree() const
{
    return m_adjacency.rowwise().sum().maxCoeff();
}

Topology build_topology(const Eigen::MatrixXi& adjacency)
{
    return Topology::from_adjacency(adjacency);
}

double line_graph_connectivity_floor(int n_agents)
{
    if (n_agents < 2)
        throw Error(Errc::BadDimension, "line graph floor needs N >= 2");
    return 2.0 * (1.0 - std::cos(std::numbers::pi / n_agents));
}

Topology path_graph(int n_agents)
{
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i + 1 < n_agents; ++i)
        edges.emplace_back(i, i + 1);
    return Topology::from_edges(n_agents, edges);
}

Topology ring_graph(int n_agents)
{
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i + 1 < n_agents; ++i)
        edges.emplace_back(i, i + 1);
    if (n_agents > 2)
        edges.emplace_back(n_agents - 1, 0);
    return Topology::from_edges(n_agents, edges);
}

Topology complete_graph(int n_agents)
{
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < n_agents; ++i)
        for (int j = i + 1; j < n_agents; ++j)
            edges.emplace_back(i, j);
    return Topology::from_edges(n_agents, edges);
}

Topology random_connected_graph(int n_agents, double edge_prob, std::uint64_t seed)
{
    if (n_agents < 2)
        throw Error(Errc::BadDimension, "a communication graph needs at least 2 agents");
    CounterRng rng(seed, 0, StreamPurpose::TestData);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    Eigen::MatrixXi a = Eigen::MatrixXi::Zero(n_agents, n_agents);
    // random recursive tree: node v attaches to a uniformly chosen earlier node
    for (int v = 1; v < n_agents; ++v)
    {
        const int u = std::min(v - 1, static_cast<int>(unit(rng) * v));
        a(u, v) = a(v, u) = 1;
    }
    for (int i = 0; i < n_agents; ++i)
        for (int j = i + 1; j < n_agents; ++j)
            if (a(i, j) == 0 && unit(rng) < edge_prob)
                a(i, j) = a(j, i) = 1;
    return Topology::from_adjacency(a);
}

int pair_index(int i, int j, int n_agents)
{
    if (i > j)
        std::swap(i, j);
    // rows 0..i-1 contribute (N-1) + (N-2) + ... + (N-i) pairs
    return i * n_agents - i * (i + 1) / 2 + (j - i - 1);
}

SwitchingSchedule::SwitchingSchedule(std::vector<Topology> topologies,
                                     std::vector<Segment> segments,
                                     double dwell_min)
    : m_topologies(std::move(topologies))
    , m_segments(std::move(segments))
    , m_dwellMin(dwell_min)
{
    if (m_topologies.empty())
        throw Error(Errc::BadSchedule, "schedule needs at least one topology");
    if (m_segments.empty())
        throw Error(Errc::BadSchedule, "schedule needs at least one segment");
    if (!(m_dwellMin > 0.0))
        throw Error(Errc::BadSchedule, "dwell_min must be positive");
    if (m_segments.front().start != 0.0)
        throw Error(Errc::BadSchedule, "first segment must start at t = 0");

    const int n = m_topologies.front().n_agents();
    for (const auto& topo : m_topologies)
        if (topo.n_agents() != n)
            throw Error(Errc::BadSchedule, "all topologies must have the same number of agents");

    for (std::size_t k = 0; k < m_segments.size(); ++k)
    {
        const auto& seg = m_segments[k];
        if (seg.topology < 0 || seg.topology >= static_cast<int>(m_topologies.size()))
            throw Error(Errc::BadSchedule, "segment references an unknown topology");
        if (k > 0)
        {
            const double gap = seg.start - m_segments[k - 1].start;
            // relative slack for start times written as decimal fractions
            if (gap < m_dwellMin * (1.0 - 1e-12))
            {
                std::ostringstream msg;
                msg << "segment " << k << " starts " << gap << " s after the previous one, below dwell_min "
                    << m_dwellMin;
                throw Error(Errc::BadSchedule, msg.str());
            }
        }
    }
}

SwitchingSchedule SwitchingSchedule::cyclic(std::vector<Topology> topologies, double period, double horizon)
{
    if (!(period > 0.0))
        throw Error(Errc::BadSchedule, "switching period must be positive");
    std::vector<Segment> segments;
    const int q = static_cast<int>(topologies.size());
    for (int k = 0; k * period <= horizon || k == 0; ++k)
        segments.push_back({k * period, k % std::max(q, 1)});
    return SwitchingSchedule(std::move(topologies), std::move(segments), period);
}

SwitchingSchedule SwitchingSchedule::constant(Topology topology)
{
    std::vector<Topology> topologies;
    topologies.push_back(std::move(topology));
    return SwitchingSchedule(std::move(topologies), {{0.0, 0}}, 1.0);
}

int SwitchingSchedule::active_topology(double t) const
{
    // last segment whose start is <= t (right-continuous)
    const auto it = std::upper_bound(m_segments.begin(),
                                     m_segments.end(),
                                     t,
                                     [](double value, const Segment& s) { return value < s.start; });
    if (it == m_segments.begin())
        return m_segments.front().topology;
    return std::prev(it)->topology;
}

double SwitchingSchedule::lambda_g_min() const
{
    double value = m_topologies.front().lambda2();
    for (const auto& topo : m_topologies)
        value = std::min(value, topo.lambda2());
    return value;
}

double SwitchingSchedule::lambda_max_max() const
{
    double value = m_topologies.front().lambda_max();
    for (const auto& topo : m_topologies)
        value = std::max(value, topo.lambda_max());
    return value;
}

} // namespace hierest::graph
