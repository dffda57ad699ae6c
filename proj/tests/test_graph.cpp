#include <hierest/graph.hpp>

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>

using namespace hierest;
using namespace hierest::graph;

namespace
{

Eigen::VectorXd sorted_eigenvalues(const Eigen::MatrixXd& l)
{
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(l);
    return es.eigenvalues();
}

Errc code_of(const std::function<void()>& fn)
{
    try
    {
        fn();
    } catch (const Error& e)
    {
        return e.code();
    }
    FAIL("expected an error");
    return Errc::InvalidArgument;
}

} // namespace

TEST_SUITE("graph")
{
    TEST_CASE("two-node path")
    {
        Eigen::MatrixXi a(2, 2);
        a << 0, 1, 1, 0;
        const auto t = build_topology(a);
        CHECK(t.lambda2() == doctest::Approx(2.0).epsilon(1e-12));
        CHECK(t.lambda_max() == doctest::Approx(2.0).epsilon(1e-12));
        CHECK(t.edges().size() == 1);
    }

    TEST_CASE("complete graph on three nodes matches brute-force eigensolve")
    {
        const auto t = complete_graph(3);
        Eigen::MatrixXd oracle = 3.0 * Eigen::MatrixXd::Identity(3, 3) - Eigen::MatrixXd::Ones(3, 3);
        const auto ev = sorted_eigenvalues(oracle);
        CHECK(t.lambda2() == doctest::Approx(ev(1)).epsilon(1e-12));
        CHECK(t.lambda_max() == doctest::Approx(ev(2)).epsilon(1e-12));
        CHECK(t.lambda2() == doctest::Approx(3.0).epsilon(1e-12));
    }

    TEST_CASE("path graph connectivity matches the closed form")
    {
        for (int n : {2, 4, 10, 17})
        {
            const auto t = path_graph(n);
            const double closed = 2.0 * (1.0 - std::cos(std::numbers::pi / n));
            CHECK(t.lambda2() == doctest::Approx(closed).epsilon(1e-10));
            CHECK(line_graph_connectivity_floor(n) == doctest::Approx(closed).epsilon(1e-14));
        }
        CHECK(path_graph(10).lambda2() == doctest::Approx(0.09789).epsilon(1e-4));
        CHECK(line_graph_connectivity_floor(2) == doctest::Approx(2.0));
        CHECK(line_graph_connectivity_floor(4) == doctest::Approx(0.58579).epsilon(1e-4));
    }

    TEST_CASE("ring spectrum")
    {
        const auto t = ring_graph(10);
        CHECK(t.lambda2() == doctest::Approx(2.0 * (1.0 - std::cos(2.0 * std::numbers::pi / 10))).epsilon(1e-10));
        CHECK(t.lambda_max() == doctest::Approx(4.0).epsilon(1e-10));
        CHECK(t.max_degree() == 2);
    }

    TEST_CASE("invalid adjacency is rejected")
    {
        Eigen::MatrixXi asym(3, 3);
        asym << 0, 1, 0, 0, 0, 1, 0, 1, 0;
        CHECK(code_of([&] { build_topology(asym); }) == Errc::NonSymmetric);

        Eigen::MatrixXi split(4, 4);
        split << 0, 1, 0, 0, 1, 0, 0, 0, 0, 0, 0, 1, 0, 0, 1, 0;
        CHECK(code_of([&] { build_topology(split); }) == Errc::Disconnected);

        Eigen::MatrixXi weighted(2, 2);
        weighted << 0, 2, 2, 0;
        CHECK(code_of([&] { build_topology(weighted); }) == Errc::BadEntries);

        Eigen::MatrixXi loop(2, 2);
        loop << 1, 1, 1, 0;
        CHECK(code_of([&] { build_topology(loop); }) == Errc::BadEntries);

        Eigen::MatrixXi rect(2, 3);
        rect.setZero();
        CHECK(code_of([&] { build_topology(rect); }) == Errc::BadDimension);

        const std::vector<std::pair<int, int>> outOfRange{{0, 5}};
        CHECK_THROWS_AS(Topology::from_edges(3, outOfRange), Error);
        CHECK_THROWS_AS(line_graph_connectivity_floor(1), Error);
    }

    TEST_CASE("Laplacian rows and columns sum to zero on random graphs")
    {
        for (std::uint64_t seed = 1; seed <= 40; ++seed)
        {
            const int n = 2 + static_cast<int>(seed % 12);
            const auto t = random_connected_graph(n, 0.3, seed);
            const auto& l = t.laplacian();
            CHECK((l * Eigen::VectorXd::Ones(n)).cwiseAbs().maxCoeff() < 1e-12);
            CHECK((Eigen::RowVectorXd::Ones(n) * l).cwiseAbs().maxCoeff() < 1e-12);
            CHECK((l - l.transpose()).cwiseAbs().maxCoeff() == 0.0);
            CHECK(t.lambda2() >= line_graph_connectivity_floor(n) - 1e-9);
        }
    }

    TEST_CASE("pair index enumerates unordered pairs")
    {
        const int n = 7;
        std::vector<int> seen(n * (n - 1) / 2, 0);
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
            {
                const int k = pair_index(i, j, n);
                REQUIRE(k >= 0);
                REQUIRE(k < static_cast<int>(seen.size()));
                ++seen[k];
                CHECK(pair_index(j, i, n) == k);
            }
        for (int c : seen)
            CHECK(c == 1);
    }

    TEST_CASE("switching schedule is right-continuous")
    {
        std::vector<Topology> topos{path_graph(4), ring_graph(4), complete_graph(4)};
        SwitchingSchedule s(topos, {{0.0, 1}, {5.0, 2}}, 1.0);
        CHECK(s.active_topology(0.0) == 1);
        CHECK(s.active_topology(4.99) == 1);
        CHECK(s.active_topology(5.0) == 2);
        CHECK(s.active_topology(1e6) == 2);
        CHECK(s.lambda_g_min() == doctest::Approx(path_graph(4).lambda2()));
        CHECK(s.lambda_max_max() == doctest::Approx(4.0));

        SwitchingSchedule single(topos, {{0.0, 0}}, 1.0);
        for (double t : {0.0, 3.3, 100.0})
            CHECK(single.active_topology(t) == 0);
    }

    TEST_CASE("schedule constant between starts and respects dwell")
    {
        std::vector<Topology> topos{ring_graph(5), complete_graph(5)};
        const auto s = SwitchingSchedule::cyclic(topos, 0.7, 10.0);
        const auto& segs = s.segments();
        for (std::size_t k = 0; k + 1 < segs.size(); ++k)
        {
            CHECK(segs[k + 1].start - segs[k].start >= s.dwell_min() * (1 - 1e-12));
            const int expected = segs[k].topology;
            for (int q = 0; q < 10; ++q)
            {
                const double t = segs[k].start + (segs[k + 1].start - segs[k].start) * q / 10.0;
                CHECK(s.active_topology(t) == expected);
            }
        }
    }

    TEST_CASE("schedule validation")
    {
        std::vector<Topology> topos{ring_graph(4), path_graph(4)};
        CHECK(code_of([&] { SwitchingSchedule(topos, {{0.0, 0}, {0.5, 1}}, 1.0); }) == Errc::BadSchedule);
        CHECK(code_of([&] { SwitchingSchedule(topos, {{1.0, 0}}, 1.0); }) == Errc::BadSchedule);
        CHECK(code_of([&] { SwitchingSchedule(topos, {{0.0, 3}}, 1.0); }) == Errc::BadSchedule);
        std::vector<Topology> mixed{ring_graph(4), ring_graph(5)};
        CHECK_THROWS_AS(SwitchingSchedule(mixed, {{0.0, 0}, {2.0, 1}}, 1.0), Error);
    }
}
