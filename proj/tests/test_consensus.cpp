#include <hierest/consensus.hpp>
#include <hierest/sim.hpp>

#include <doctest.h>

#include <cmath>
#include <random>

using namespace hierest;
using namespace hierest::consensus;

namespace
{

signals::Surrogate scalar(double c, double y)
{
    return {Eigen::MatrixXd::Constant(1, 1, c), Eigen::VectorXd::Constant(1, y)};
}

Eigen::MatrixXd random_symmetric(std::mt19937_64& rng, int n)
{
    std::normal_distribution<double> nd;
    Eigen::MatrixXd m = Eigen::MatrixXd::NullaryExpr(n, n, [&] { return nd(rng); });
    return m + m.transpose();
}

/// Integrates the two-agent scalar DAC with constant inputs.
std::pair<double, double> two_agent_run(double k, double horizon, double h)
{
    const auto topo = graph::path_graph(2);
    const std::vector<signals::Surrogate> inputs{scalar(0.0, 0.0), scalar(2.0, 4.0)};
    const sim::Field field = [&](double, const Eigen::VectorXd& z) {
        ConsensusState s = ConsensusState::zeros(2, 1);
        s.X[0](0, 0) = z(0);
        s.X[1](0, 0) = z(1);
        s.x[0](0) = z(2);
        s.x[1](0) = z(3);
        const auto d = dac_derivative(s, inputs, topo, k, 0.0, nullptr);
        return Eigen::Vector4d(d.dX[0](0, 0), d.dX[1](0, 0), d.dx[0](0), d.dx[1](0)).eval();
    };
    Eigen::VectorXd z = Eigen::VectorXd::Zero(4);
    const long steps = std::lround(horizon / h);
    for (long s = 0; s < steps; ++s)
        z = sim::rk4_step(field, z, s * h, h);
    return {0.0 - z(0), 2.0 - z(1)};
}

} // namespace

TEST_SUITE("consensus")
{
    TEST_CASE("equal outputs are a fixed point")
    {
        const auto topo = graph::ring_graph(4);
        std::vector<signals::Surrogate> s(4, scalar(3.0, 1.0));
        const auto d = dac_derivative(ConsensusState::zeros(4, 1), s, topo, 5.0, 0.0, nullptr);
        for (int i = 0; i < 4; ++i)
        {
            CHECK(d.dX[i].norm() == 0.0);
            CHECK(d.dx[i].norm() == 0.0);
        }
    }

    TEST_CASE("two agents converge to the mean at rate 2k")
    {
        const double k = 1.5;
        for (double t : {0.2, 0.5, 1.0})
        {
            const auto [c1, c2] = two_agent_run(k, t, 1e-3);
            const double expected = std::exp(-2.0 * k * t);
            CHECK(c1 == doctest::Approx(1.0 - expected).epsilon(1e-9));
            CHECK(c2 == doctest::Approx(1.0 + expected).epsilon(1e-9));

            // consensus error norm against the closed form
            ConsensusOutput out{Eigen::MatrixXd::Constant(1, 1, c1), Eigen::VectorXd::Zero(1)};
            const AverageReference ref{Eigen::MatrixXd::Constant(1, 1, 1.0), Eigen::VectorXd::Zero(1)};
            CHECK(consensus_error(out, ref).matrix == doctest::Approx(expected).epsilon(1e-8));
        }
    }

    TEST_CASE("a masked edge removes the only neighbor")
    {
        const auto topo = graph::path_graph(2);
        LinkMask mask(2, true);
        mask.set(0, 1, false);
        CHECK_FALSE(mask.up(1, 0));
        const std::vector<signals::Surrogate> s{scalar(0.0, 0.0), scalar(2.0, 1.0)};
        const auto d = dac_derivative(ConsensusState::zeros(2, 1), s, topo, 1.0, 0.0, &mask);
        CHECK(d.dX[0].norm() == 0.0);
        CHECK(d.dX[1].norm() == 0.0);
        CHECK(d.dx[1].norm() == 0.0);
    }

    TEST_CASE("outputs at the extremes of the state")
    {
        std::mt19937_64 rng(2);
        std::vector<signals::Surrogate> s;
        for (int i = 0; i < 3; ++i)
            s.push_back({random_symmetric(rng, 3), Eigen::VectorXd::Random(3)});
        auto state = ConsensusState::zeros(3, 3);
        auto out = consensus_outputs(state, s);
        for (int i = 0; i < 3; ++i)
            CHECK(out[i].Chat == s[i].Cp);
        for (int i = 0; i < 3; ++i)
        {
            state.X[i] = s[i].Cp;
            state.x[i] = s[i].yp;
        }
        out = consensus_outputs(state, s);
        for (int i = 0; i < 3; ++i)
        {
            CHECK(out[i].Chat.norm() == 0.0);
            CHECK(out[i].yhat.norm() == 0.0);
        }
    }

    TEST_CASE("sum of outputs is conserved on the zero-sum manifold")
    {
        std::mt19937_64 rng(4);
        for (int trial = 0; trial < 50; ++trial)
        {
            const int N = 5;
            std::vector<signals::Surrogate> s;
            auto state = ConsensusState::zeros(N, 3);
            Eigen::MatrixXd sumX = Eigen::MatrixXd::Zero(3, 3);
            for (int i = 0; i < N; ++i)
            {
                s.push_back({random_symmetric(rng, 3), Eigen::VectorXd::Random(3)});
                if (i + 1 < N)
                {
                    state.X[i] = random_symmetric(rng, 3);
                    sumX += state.X[i];
                }
            }
            state.X[N - 1] = -sumX;
            const auto out = consensus_outputs(state, s);
            Eigen::MatrixXd lhs = Eigen::MatrixXd::Zero(3, 3), rhs = Eigen::MatrixXd::Zero(3, 3);
            for (int i = 0; i < N; ++i)
            {
                lhs += out[i].Chat;
                rhs += s[i].Cp;
            }
            CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
        }
    }

    TEST_CASE("flow sums to zero including quantization and loss")
    {
        std::mt19937_64 rng(6);
        std::bernoulli_distribution coin(0.5);
        for (int trial = 0; trial < 50; ++trial)
        {
            const int N = 6;
            const auto topo = graph::random_connected_graph(N, 0.4, 100 + trial);
            std::vector<signals::Surrogate> s;
            for (int i = 0; i < N; ++i)
                s.push_back({random_symmetric(rng, 3), Eigen::VectorXd::Random(3)});
            LinkMask mask(N, true);
            for (int i = 0; i < N; ++i)
                for (int j = i + 1; j < N; ++j)
                    mask.set(i, j, coin(rng));
            const auto d = dac_derivative(ConsensusState::zeros(N, 3), s, topo, 2.0, 0.036, &mask);
            Eigen::MatrixXd sumX = Eigen::MatrixXd::Zero(3, 3);
            Eigen::VectorXd sumx = Eigen::VectorXd::Zero(3);
            for (int i = 0; i < N; ++i)
            {
                sumX += d.dX[i];
                sumx += d.dx[i];
                CHECK((d.dX[i] - d.dX[i].transpose()).cwiseAbs().maxCoeff() == 0.0);
            }
            CHECK(sumX.cwiseAbs().maxCoeff() < 1e-12);
            CHECK(sumx.cwiseAbs().maxCoeff() < 1e-12);
        }
    }

    TEST_CASE("average reference")
    {
        std::vector<signals::Surrogate> same(3, scalar(4.0, 2.0));
        CHECK(average_reference(same).Cbar(0, 0) == 4.0);
        const std::vector<signals::Surrogate> two{scalar(0.0, 0.0), scalar(2.0, 0.0)};
        CHECK(average_reference(two).Cbar(0, 0) == 1.0);

        std::mt19937_64 rng(8);
        std::vector<signals::Surrogate> s;
        Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(3, 3);
        for (int i = 0; i < 7; ++i)
        {
            s.push_back({random_symmetric(rng, 3), Eigen::VectorXd::Random(3)});
            sum += s.back().Cp;
        }
        CHECK((7.0 * average_reference(s).Cbar - sum).cwiseAbs().maxCoeff() < 1e-12);
    }

    TEST_CASE("consensus error norms")
    {
        const AverageReference ref{Eigen::Matrix3d::Identity() * 2.0, Eigen::Vector3d(1, 2, 3)};
        const ConsensusOutput same{ref.Cbar, ref.ybar};
        CHECK(consensus_error(same, ref).matrix == 0.0);
        CHECK(consensus_error(same, ref).vector == 0.0);
        const ConsensusOutput shifted{ref.Cbar + Eigen::MatrixXd::Identity(3, 3), ref.ybar};
        CHECK(consensus_error(shifted, ref).matrix == doctest::Approx(1.0));
    }

    TEST_CASE("residual vanishes at the initial instant")
    {
        std::mt19937_64 rng(10);
        std::normal_distribution<double> nd;
        const Eigen::Vector3d theta(1, -2, 0.5);
        const Eigen::MatrixXd c = Eigen::MatrixXd::NullaryExpr(2, 3, [&] { return nd(rng); });
        const auto s = signals::surrogate(c, c * theta);
        const auto out = consensus_outputs(ConsensusState::zeros(1, 3), std::vector<signals::Surrogate>{s});
        CHECK(residual(out[0], theta).norm() < 1e-12);
    }
}
