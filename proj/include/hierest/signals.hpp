#pragma once

#include <hierest/common.hpp>
#include <hierest/rng.hpp>

#include <cstdint>
#include <span>
#include <vector>

namespace hierest::signals
{

/// One regressor entry A + B sin(wt) + D cos(wt).
struct EntryCoeffs
{
    double a{0.0};
    double b{0.0};
    double d{0.0};
    double omega{0.0};

    double value(double t) const;
    double rate(double t) const;
    double bound() const;
};

struct Range
{
    double lo;
    double hi;
};

enum class RegressorFamily
{
    /// every entry carries its own independently sampled (A, B, D, omega)
    Independent,
    /// agent i's rows are scalar sinusoids times the fixed direction e_{i mod n};
    /// each local regressor is rank one for all t and never persistently exciting
    FixedDirection,
};

/// Per-agent time-varying regressor C_i(t) built from sinusoidal coefficient tables.
class RegressorGenerator
{
public:
    /// coeffs[agent] holds rows(agent) * n_params entries in row-major order.
    RegressorGenerator(int n_params,
                       std::vector<int> rows_per_agent,
                       std::vector<std::vector<EntryCoeffs>> coeffs,
                       std::uint64_t seed);

    int n_params() const { return m_nParams; }
    int n_agents() const { return static_cast<int>(m_rows.size()); }
    int rows(int agent) const { return m_rows.at(agent); }
    int total_rows() const;
    std::uint64_t seed() const { return m_seed; }

    const EntryCoeffs& coeff(int agent, int row, int col) const;

    /// C_i(t); throws on an out-of-range agent.
    Eigen::MatrixXd evaluate(int agent, double t) const;
    /// Analytic time derivative of C_i(t).
    Eigen::MatrixXd derivative(int agent, double t) const;
    /// Stacked col(C_i(t)) over all agents.
    Eigen::MatrixXd stacked(double t) const;

private:
    void check_agent(int agent) const;

    int m_nParams;
    std::vector<int> m_rows;
    std::vector<std::vector<EntryCoeffs>> m_coeffs;
    std::uint64_t m_seed;
};

/// Draws every A, B, D i.i.d. from coeff_range and every omega from freq_range, one
/// counter-based stream per agent.
RegressorGenerator sample_coefficients(int n_params,
                                       int n_agents,
                                       std::span<const int> rows_per_agent,
                                       Range coeff_range,
                                       Range freq_range,
                                       std::uint64_t seed,
                                       RegressorFamily family = RegressorFamily::Independent);

Eigen::MatrixXd evaluate_regressor(const RegressorGenerator& gen, int agent, double t);

struct Measurement
{
    Eigen::VectorXd y;
    Eigen::MatrixXd C;
    double t{0.0};
};

/// y_i = C_i(t) theta, plus i.i.d. N(0, noise_sd^2) per component when noise_sd > 0.
Measurement measure(const RegressorGenerator& gen,
                    const Eigen::VectorXd& theta,
                    int agent,
                    double t,
                    double noise_sd,
                    CounterRng& rng);

/// Noise vector of length `rows` drawn from the given stream.
Eigen::VectorXd draw_noise(int rows, double noise_sd, CounterRng& rng);

struct Surrogate
{
    Eigen::MatrixXd Cp; // C_i^T C_i
    Eigen::VectorXd yp; // C_i^T y_i
};

Surrogate surrogate(const Measurement& m);
Surrogate surrogate(const Eigen::Ref<const Eigen::MatrixXd>& C, const Eigen::Ref<const Eigen::VectorXd>& y);

struct Stacked
{
    Eigen::MatrixXd C;
    Eigen::VectorXd y;
};

Stacked stack_centralized(std::span<const Measurement> measurements);

/// Floor quantizer eps * floor(s / eps); eps == 0 is the identity.
double quantize(double s, double eps);
Eigen::MatrixXd quantize(const Eigen::MatrixXd& m, double eps);
Eigen::VectorXd quantize(const Eigen::VectorXd& v, double eps);

} // namespace hierest::signals
