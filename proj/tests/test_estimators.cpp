#include <hierest/estimators.hpp>
#include <hierest/sim.hpp>

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace hierest;
using namespace hierest::estimators;

namespace
{

Eigen::MatrixXd random_matrix(std::mt19937_64& rng, int rows, int cols)
{
    std::normal_distribution<double> nd;
    return Eigen::MatrixXd::NullaryExpr(rows, cols, [&] { return nd(rng); });
}

/// Permutation-expansion determinant, independent of the library path.
double leibniz_det(const Eigen::MatrixXd& m)
{
    const int n = static_cast<int>(m.rows());
    std::vector<int> p(n);
    for (int i = 0; i < n; ++i)
        p[i] = i;
    double det = 0.0;
    do
    {
        int inversions = 0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
                inversions += p[i] > p[j];
        double term = (inversions % 2) ? -1.0 : 1.0;
        for (int i = 0; i < n; ++i)
            term *= m(i, p[i]);
        det += term;
    } while (std::next_permutation(p.begin(), p.end()));
    return det;
}

} // namespace

TEST_SUITE("estimators")
{
    TEST_CASE("gradient estimator fixed points")
    {
        std::mt19937_64 rng(1);
        const Eigen::MatrixXd c = random_matrix(rng, 3, 3);
        const Eigen::Vector3d th(1, 2, 3);
        const consensus::ConsensusOutput out{c, c * th};
        CHECK(ge_derivative(Eigen::Matrix3d::Identity(), th, out).norm() < 1e-12);
        const consensus::ConsensusOutput blind{Eigen::Matrix3d::Zero(), Eigen::Vector3d(4, 5, 6)};
        CHECK(ge_derivative(Eigen::Matrix3d::Identity(), Eigen::Vector3d(7, 8, 9), blind).norm() == 0.0);
    }

    TEST_CASE("gradient estimator with identity regressor")
    {
        const Eigen::Vector3d th(1, -1, 2);
        const Eigen::Vector3d start(0.5, 0.5, 0.5);
        const consensus::ConsensusOutput out{Eigen::Matrix3d::Identity(), th};
        const sim::Field f = [&](double, const Eigen::VectorXd& z) {
            return ge_derivative(Eigen::Matrix3d::Identity(), z, out);
        };
        Eigen::VectorXd z = start;
        const double h = 1e-3;
        for (int s = 0; s < 1000; ++s)
            z = sim::rk4_step(f, z, s * h, h);
        const Eigen::VectorXd closed = th + std::exp(-1.0) * (start - th);
        CHECK((z - closed).norm() < 1e-10);
    }

    TEST_CASE("centralized estimator")
    {
        const Eigen::Vector2d th(1, 0);
        const Eigen::MatrixXd c = Eigen::MatrixXd::Identity(2, 2);
        CHECK(centralized_ge_derivative(th, c, c * th, Eigen::Matrix2d::Identity()).norm() == 0.0);

        const sim::Field f = [&](double, const Eigen::VectorXd& z) {
            return centralized_ge_derivative(z, c, c * th, Eigen::Matrix2d::Identity());
        };
        Eigen::VectorXd z = Eigen::Vector2d::Zero();
        const double h = 1e-3;
        for (int s = 0; s < 2000; ++s)
            z = sim::rk4_step(f, z, s * h, h);
        CHECK((z - (1.0 - std::exp(-2.0)) * th).norm() < 1e-10);

        std::mt19937_64 rng(2);
        for (int k = 0; k < 50; ++k)
        {
            const Eigen::MatrixXd C = random_matrix(rng, 6, 3);
            const Eigen::VectorXd truth = random_matrix(rng, 3, 1);
            const Eigen::VectorXd est = random_matrix(rng, 3, 1);
            const Eigen::MatrixXd gain = Eigen::Vector3d(0.5, 1.0, 2.0).asDiagonal();
            const Eigen::VectorXd direct = centralized_ge_derivative(est, C, C * truth, gain);
            const Eigen::VectorXd error_form = gain * C.transpose() * C * (truth - est);
            CHECK((direct - error_form).norm() < 1e-12 * (1.0 + direct.norm()));
        }
        CHECK_THROWS_AS(centralized_ge_derivative(th, c, Eigen::Vector3d::Zero(), Eigen::Matrix2d::Identity()), Error);
    }

    TEST_CASE("filter bank step response")
    {
        auto bank = DremFilterBank::make({{2.0, 4.0}, {3.0, 3.0}}, 1);
        const consensus::ConsensusOutput u{Eigen::MatrixXd::Constant(1, 1, 5.0), Eigen::VectorXd::Constant(1, 5.0)};
        const double h = 1e-3;
        for (int s = 0; s < 10000; ++s)
        {
            // explicit RK4 on the bank
            const sim::Field f = [&](double, const Eigen::VectorXd& z) {
                DremFilterBank b = bank;
                b.matrix_state[0](0, 0) = z(0);
                b.matrix_state[1](0, 0) = z(1);
                const auto d = drem_filter_derivative(b, u);
                return Eigen::Vector2d(d.matrix_state[0](0, 0), d.matrix_state[1](0, 0)).eval();
            };
            Eigen::VectorXd z = Eigen::Vector2d(bank.matrix_state[0](0, 0), bank.matrix_state[1](0, 0));
            z = sim::rk4_step(f, z, s * h, h);
            bank.matrix_state[0](0, 0) = z(0);
            bank.matrix_state[1](0, 0) = z(1);
        }
        CHECK(bank.matrix_state[0](0, 0) == doctest::Approx(2.0 / 4.0 * 5.0).epsilon(1e-9));
        CHECK(bank.matrix_state[1](0, 0) == doctest::Approx(5.0).epsilon(1e-9));

        auto free = DremFilterBank::make({{1.0, 2.0}}, 1);
        free.matrix_state[0](0, 0) = 1.0;
        const consensus::ConsensusOutput zero{Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Zero(1)};
        CHECK(drem_filter_derivative(free, zero).matrix_state[0](0, 0) == -2.0);

        CHECK_THROWS_AS(DremFilterBank::make({{0.0, 1.0}}, 1), Error);
        CHECK_THROWS_AS(DremFilterBank::make({{1.0, 0.0}}, 1), Error);
        CHECK(DremFilterBank::default_filters(3).size() == 2);
    }

    TEST_CASE("regressor extension")
    {
        const consensus::ConsensusOutput out{Eigen::Matrix2d::Identity() * 3.0, Eigen::Vector2d(1, 2)};
        const auto empty = drem_extend(out, DremFilterBank::make({}, 2));
        CHECK(empty.Cf == out.Chat);
        CHECK(empty.yf == out.yhat);
        const auto one = drem_extend(out, DremFilterBank::make({{1.0, 1.0}}, 2));
        CHECK(one.Cf.rows() == 4);
        CHECK(one.Cf.bottomRows(2).norm() == 0.0);
        CHECK(one.yf.tail(2).norm() == 0.0);
    }

    TEST_CASE("scalarization examples")
    {
        const auto id = drem_scalarize(Eigen::MatrixXd::Identity(3, 3), Eigen::Vector3d(1, 2, 3));
        CHECK(id.phi == 1.0);
        CHECK(id.Y.isApprox(Eigen::Vector3d(1, 2, 3)));

        const Eigen::Matrix2d c = Eigen::Vector2d(2, 3).asDiagonal();
        const consensus::ConsensusOutput out{c, c * Eigen::Vector2d(1, -1)};
        const auto simple = drem_simple_scalarize(out);
        CHECK(simple.phi == doctest::Approx(6.0));
        CHECK(simple.Y.isApprox(Eigen::Vector2d(6, -6)));

        const consensus::ConsensusOutput eye{Eigen::Matrix3d::Identity(), Eigen::Vector3d(4, 5, 6)};
        CHECK(drem_simple_scalarize(eye).phi == 1.0);
        CHECK(drem_simple_scalarize(eye).Y == eye.yhat);

        Eigen::Matrix3d sing;
        sing << 1, 2, 3, 2, 4, 6, 0, 1, 1;
        const consensus::ConsensusOutput flat{sing, Eigen::Vector3d(1, 1, 1)};
        const auto d = drem_simple_scalarize(flat);
        CHECK(d.phi == 0.0);
        CHECK(drem_derivative(Eigen::Vector3d::Ones(), Eigen::Vector3d(3, 2, 1), d).norm() == 0.0);
    }

    TEST_CASE("scalarization recovers phi theta")
    {
        std::mt19937_64 rng(3);
        for (int k = 0; k < 100; ++k)
        {
            const int n = 2 + k % 4;
            const Eigen::MatrixXd cf = random_matrix(rng, 3 * n, n);
            const Eigen::VectorXd th = random_matrix(rng, n, 1);
            const auto d = drem_scalarize(cf, cf * th);
            CHECK((d.Y - d.phi * th).norm() <= 1e-9 * std::abs(d.phi) * (1.0 + th.norm()));
        }
    }

    TEST_CASE("scalar error dynamics")
    {
        DremScalar zero;
        zero.phi = 0.0;
        zero.Y = Eigen::Vector2d(1, 1);
        CHECK(drem_derivative(Eigen::Vector2d::Ones(), Eigen::Vector2d(3, 4), zero).norm() == 0.0);

        DremScalar fixed;
        fixed.phi = 2.0;
        fixed.Y = 2.0 * Eigen::Vector2d(3, 4);
        CHECK(drem_derivative(Eigen::Vector2d::Ones(), Eigen::Vector2d(3, 4), fixed).norm() == 0.0);

        const double c = 1.5;
        const Eigen::Vector2d gain(0.4, 2.0), th(1, -1);
        DremScalar d;
        d.phi = c;
        d.Y = c * th;
        const sim::Field f = [&](double, const Eigen::VectorXd& z) { return drem_derivative(gain, z, d); };
        Eigen::VectorXd z = Eigen::Vector2d::Zero();
        const double h = 1e-3;
        for (int s = 0; s < 1000; ++s)
            z = sim::rk4_step(f, z, s * h, h);
        for (int mu = 0; mu < 2; ++mu)
            CHECK((z(mu) - th(mu)) == doctest::Approx(-th(mu) * std::exp(-gain(mu) * c * c)).epsilon(1e-9));
    }

    TEST_CASE("adjugate identity over random and near-singular matrices")
    {
        std::mt19937_64 rng(4);
        std::uniform_real_distribution<double> tiny(1e-14, 1e-6);
        for (int k = 0; k < 1000; ++k)
        {
            const int n = 1 + k % 5;
            Eigen::MatrixXd g = random_matrix(rng, n, n);
            if (k % 3 == 0 && n > 1)
            {
                g.col(n - 1) = g.col(0) + tiny(rng) * random_matrix(rng, n, 1);
            }
            const Eigen::MatrixXd adj = adjugate(g);
            const double det = leibniz_det(g);
            const Eigen::MatrixXd res = adj * g - det * Eigen::MatrixXd::Identity(n, n);
            const double scale = std::max(1.0, std::pow(g.norm(), n));
            CHECK(res.cwiseAbs().maxCoeff() <= 1e-9 * scale);
        }
        Eigen::Matrix3d zero = Eigen::Matrix3d::Zero();
        CHECK(adjugate(zero).norm() == 0.0);
        CHECK_THROWS_AS(adjugate(Eigen::MatrixXd::Zero(2, 3)), Error);
    }

    TEST_CASE("square-integrability monitor")
    {
        using Monitor = L2DivergenceMonitor;
        auto feed = [](Monitor& m, auto phi) {
            for (int k = 0; k <= 20000; ++k)
                m.add(k * 1e-3, phi(k * 1e-3));
        };

        Monitor ones({1.0, 1e-3, false, 3});
        feed(ones, [](double) { return 1.0; });
        for (double inc : ones.increments())
            CHECK(inc == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(ones.verdict() == Monitor::Verdict::DivergenceConsistent);

        Monitor decay({1.0, 1e-3, true, 3});
        feed(decay, [](double t) { return std::exp(-t); });
        CHECK(decay.verdict() == Monitor::Verdict::Inconclusive);
        const auto& inc = decay.increments();
        for (std::size_t k = 1; k < inc.size(); ++k)
            CHECK(inc[k] == doctest::Approx(inc[k - 1] * std::exp(-2.0)).epsilon(1e-4));
        CHECK(decay.integral() == doctest::Approx(0.5 * (1.0 - std::exp(-40.0))).epsilon(1e-6));

        Monitor wave({2.0 * std::numbers::pi, 1e-3, false, 2});
        feed(wave, [](double t) { return std::sin(t); });
        for (double v : wave.increments())
            CHECK(v == doctest::Approx(std::numbers::pi).epsilon(1e-3));
        CHECK(wave.verdict() == Monitor::Verdict::DivergenceConsistent);

        CHECK(to_string(Monitor::Verdict::Inconclusive) == "inconclusive");
        CHECK_THROWS_AS(Monitor({0.0, 1.0, false, 1}), Error);
    }

    TEST_CASE("estimator names")
    {
        for (auto kind : {EstimatorKind::GE, EstimatorKind::DREM, EstimatorKind::DREMSimple, EstimatorKind::Centralized,
                          EstimatorKind::Local})
            CHECK(estimator_from_string(to_string(kind)) == kind);
        CHECK_THROWS_AS(estimator_from_string("kalman"), Error);
    }
}
