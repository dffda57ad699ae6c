#include <hierest/signals.hpp>

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace hierest;
using namespace hierest::signals;

namespace
{

RegressorGenerator single_entry(EntryCoeffs c, int n = 1)
{
    std::vector<EntryCoeffs> row(n, c);
    return RegressorGenerator(n, {1}, {row}, 0);
}

} // namespace

TEST_SUITE("signals")
{
    TEST_CASE("entry evaluation")
    {
        const EntryCoeffs c{1.0, 2.0, 3.0, std::numbers::pi};
        CHECK(c.value(0.0) == doctest::Approx(1.0 + 3.0));
        CHECK(c.value(0.5) == doctest::Approx(1.0 + 2.0 * std::sin(std::numbers::pi / 2) + 3.0 * std::cos(std::numbers::pi / 2)));
        CHECK(c.value(0.5) == doctest::Approx(3.0));

        const EntryCoeffs still{4.0, 5.0, 6.0, 0.0};
        for (double t : {0.0, 1.0, 7.5})
            CHECK(still.value(t) == doctest::Approx(10.0));

        // analytic rate against a central difference
        const double h = 1e-6;
        CHECK(c.rate(0.3) == doctest::Approx((c.value(0.3 + h) - c.value(0.3 - h)) / (2 * h)).epsilon(1e-7));
    }

    TEST_CASE("degenerate coefficient ranges")
    {
        const std::vector<int> rows{1, 1};
        const auto zero = sample_coefficients(3, 2, rows, {0, 0}, {0, 0}, 7);
        for (double t : {0.0, 1.3, 9.9})
            CHECK(zero.evaluate(1, t).cwiseAbs().maxCoeff() == 0.0);

        // constant case: every entry 20 when only A carries mass
        const auto flat = sample_coefficients(3, 2, rows, {20, 20}, {0, 0}, 7);
        for (int i = 0; i < 2; ++i)
            for (int r = 0; r < 1; ++r)
                for (int c = 0; c < 3; ++c)
                {
                    auto e = flat.coeff(i, r, c);
                    e.b = 0.0;
                    e.d = 0.0;
                    CHECK(e.value(3.0) == 20.0);
                }
        CHECK_THROWS_AS(sample_coefficients(3, 2, rows, {1, 0}, {0, 1}, 7), Error);
    }

    TEST_CASE("sampled coefficients stay in range and are deterministic")
    {
        const std::vector<int> rows;
        const auto a = sample_coefficients(3, 10, rows, {0, 20}, {0, 3}, 42);
        const auto b = sample_coefficients(3, 10, rows, {0, 20}, {0, 3}, 42);
        const auto c = sample_coefficients(3, 10, rows, {0, 20}, {0, 3}, 43);
        bool differs = false;
        for (int i = 0; i < 10; ++i)
            for (int col = 0; col < 3; ++col)
            {
                const auto& e = a.coeff(i, 0, col);
                CHECK(e.a >= 0.0);
                CHECK(e.a <= 20.0);
                CHECK(e.b >= 0.0);
                CHECK(e.d <= 20.0);
                CHECK(e.omega >= 0.0);
                CHECK(e.omega <= 3.0);
                const auto& f = b.coeff(i, 0, col);
                CHECK(e.a == f.a);
                CHECK(e.b == f.b);
                CHECK(e.d == f.d);
                CHECK(e.omega == f.omega);
                differs = differs || e.a != c.coeff(i, 0, col).a;
            }
        CHECK(differs);
        CHECK(a.stacked(0.4).rows() == 10);
        CHECK(a.stacked(0.4).cols() == 3);
        CHECK_THROWS_AS(a.evaluate(10, 0.0), Error);
    }

    TEST_CASE("regressor rows respect the coefficient bound")
    {
        const std::vector<int> rows{1, 2, 3};
        const auto gen = sample_coefficients(3, 3, rows, {-5, 20}, {0, 3}, 11);
        for (int i = 0; i < 3; ++i)
            for (int r = 0; r < gen.rows(i); ++r)
            {
                double bound = 0.0;
                for (int c = 0; c < 3; ++c)
                    bound += std::pow(gen.coeff(i, r, c).bound(), 2);
                bound = std::sqrt(bound);
                for (double t = 0.0; t < 20.0; t += 0.01)
                    CHECK(gen.evaluate(i, t).row(r).norm() <= bound + 1e-12);
            }
    }

    TEST_CASE("fixed-direction family is rank one per agent")
    {
        const std::vector<int> rows{2, 2, 2, 2};
        const auto gen = sample_coefficients(3, 4, rows, {0, 20}, {0, 3}, 5, RegressorFamily::FixedDirection);
        for (int i = 0; i < 4; ++i)
        {
            const auto c = gen.evaluate(i, 1.7);
            for (int col = 0; col < 3; ++col)
                if (col != i % 3)
                    CHECK(c.col(col).cwiseAbs().maxCoeff() == 0.0);
        }
    }

    TEST_CASE("noiseless measurements")
    {
        CounterRng rng(1, 0, StreamPurpose::Noise);
        const auto gen = single_entry({1.0, 0.0, 0.0, 0.0}, 2);
        const auto zero = measure(gen, Eigen::Vector2d::Zero(), 0, 0.3, 0.0, rng);
        CHECK(zero.y.norm() == 0.0);

        std::vector<EntryCoeffs> row{{1.0, 0.0, 0.0, 0.0}, {2.0, 0.0, 0.0, 0.0}};
        const RegressorGenerator g(2, {1}, {row}, 0);
        const auto m = measure(g, Eigen::Vector2d(1.0, 1.0), 0, 5.0, 0.0, rng);
        CHECK(m.y(0) == doctest::Approx(3.0));
    }

    TEST_CASE("noise calibration")
    {
        CounterRng rng(9, 3, StreamPurpose::Noise);
        const int draws = 100000;
        double sum = 0.0, sq = 0.0;
        for (int k = 0; k < draws; ++k)
        {
            const double v = draw_noise(1, 0.2, rng)(0);
            sum += v;
            sq += v * v;
        }
        const double mean = sum / draws;
        CHECK(std::abs(mean) < 3.0 * 0.2 / std::sqrt(static_cast<double>(draws)));
        CHECK(std::sqrt(sq / draws - mean * mean) == doctest::Approx(0.2).epsilon(0.02));

        CounterRng a(9, 3, StreamPurpose::Noise), b(9, 3, StreamPurpose::Noise);
        CHECK(draw_noise(5, 1.0, a) == draw_noise(5, 1.0, b));
        CounterRng other(9, 4, StreamPurpose::Noise);
        CHECK(draw_noise(5, 1.0, other) != draw_noise(5, 1.0, b));
    }

    TEST_CASE("surrogate products")
    {
        Eigen::MatrixXd c(1, 2);
        c << 1, 2;
        Eigen::VectorXd y(1);
        y << 3;
        const auto s = surrogate(c, y);
        Eigen::Matrix2d cp;
        cp << 1, 2, 2, 4;
        CHECK(s.Cp.isApprox(cp));
        CHECK(s.yp.isApprox(Eigen::Vector2d(3, 6)));

        const Eigen::Vector3d theta(1, -2, 0.5);
        const auto id = surrogate(Eigen::MatrixXd::Identity(3, 3), theta);
        CHECK(id.Cp.isApprox(Eigen::MatrixXd::Identity(3, 3)));
        CHECK(id.yp.isApprox(theta));
    }

    TEST_CASE("surrogate preserves exact solutions")
    {
        std::mt19937_64 rng(3);
        std::normal_distribution<double> nd;
        for (int k = 0; k < 100; ++k)
        {
            const Eigen::MatrixXd c = Eigen::MatrixXd::NullaryExpr(4, 3, [&] { return nd(rng); });
            const Eigen::VectorXd theta = Eigen::VectorXd::NullaryExpr(3, [&] { return nd(rng); });
            const auto s = surrogate(c, c * theta);
            CHECK((s.yp - s.Cp * theta).norm() < 1e-12 * (1.0 + s.Cp.norm() * theta.norm()));
        }
    }

    TEST_CASE("centralized stacking")
    {
        Measurement a{Eigen::VectorXd::Constant(1, 2.0), Eigen::MatrixXd(1, 2), 0.0};
        a.C << 1, 0;
        Measurement b{Eigen::VectorXd::Constant(1, 5.0), Eigen::MatrixXd(1, 2), 0.0};
        b.C << 0, 1;
        const std::vector<Measurement> both{a, b};
        const auto s = stack_centralized(both);
        CHECK(s.C.isApprox(Eigen::MatrixXd::Identity(2, 2)));
        CHECK(s.y.isApprox(Eigen::Vector2d(2, 5)));

        const std::vector<Measurement> one{a};
        const auto single = stack_centralized(one);
        CHECK(single.C == a.C);
        CHECK(single.y == a.y);

        const auto gen = sample_coefficients(3, 10, std::vector<int>{}, {0, 20}, {0, 3}, 1);
        CHECK(gen.stacked(1.0).rows() == 10);
    }

    TEST_CASE("quantizer examples")
    {
        CHECK(quantize(0.1, 0.036) == doctest::Approx(0.072));
        CHECK(quantize(-0.01, 0.036) == doctest::Approx(-0.036));
        for (double s : {-3.7, 0.0, 1e-9, 12.5})
            CHECK(quantize(s, 0.0) == s);
        Eigen::Matrix2d m;
        m << 0.1, -0.01, 0.036, 0.0;
        const auto q = quantize(Eigen::MatrixXd(m), 0.036);
        CHECK(q(0, 0) == doctest::Approx(0.072));
        CHECK(q(0, 1) == doctest::Approx(-0.036));
        CHECK(q(1, 0) == doctest::Approx(0.036));
        CHECK(q(1, 1) == 0.0);
    }

    TEST_CASE("quantizer properties")
    {
        std::mt19937_64 rng(17);
        std::uniform_real_distribution<double> u(-1e3, 1e3);
        std::uniform_real_distribution<double> e(1e-3, 1.0);
        std::uniform_int_distribution<int> grid(-10000, 10000);
        for (int k = 0; k < 20000; ++k)
        {
            const double eps = e(rng);
            const double s = (k % 4 == 0) ? eps * grid(rng) : u(rng);
            const double q = quantize(s, eps);
            CHECK(s - q >= 0.0);
            CHECK(s - q < eps);
            CHECK(quantize(q, eps) == q);
        }
    }
}
