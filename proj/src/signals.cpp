#include <hierest/signals.hpp>

#include <cmath>
#include <random>
#include <sstream>

namespace hierest::signals
{

double EntryCoeffs::value(double t) const
{
    return a + b * std::sin(omega * t) + d * std::cos(omega * t);
}

double EntryCoeffs::rate(double t) const
{
    return omega * (b * std::cos(omega * t) - d * std::sin(omega * t));
}

double EntryCoeffs::bound() const
{
    return std::abs(a) + std::abs(b) + std::abs(d);
}

RegressorGenerator::RegressorGenerator(int n_params,
                                       std::vector<int> rows_per_agent,
                                       std::vector<std::vector<EntryCoeffs>> coeffs,
                                       std::uint64_t seed)
    : m_nParams(n_params)
    , m_rows(std::move(rows_per_agent))
    , m_coeffs(std::move(coeffs))
    , m_seed(seed)
{
    if (m_nParams <= 0)
        throw Error(Errc::BadDimension, "number of parameters must be positive");
    if (m_rows.empty())
        throw Error(Errc::BadDimension, "at least one agent is required");
    if (m_coeffs.size() != m_rows.size())
        throw Error(Errc::BadDimension, "one coefficient table per agent is required");
    for (std::size_t i = 0; i < m_rows.size(); ++i)
    {
        if (m_rows[i] <= 0)
            throw Error(Errc::BadDimension, "rows per agent must be positive");
        if (m_coeffs[i].size() != static_cast<std::size_t>(m_rows[i] * m_nParams))
            throw Error(Errc::BadDimension, "coefficient table has the wrong size");
    }
}

int RegressorGenerator::total_rows() const
{
    int total = 0;
    for (int r : m_rows)
        total += r;
    return total;
}

void RegressorGenerator::check_agent(int agent) const
{
    if (agent < 0 || agent >= n_agents())
    {
        std::ostringstream msg;
        msg << "agent index " << agent << " out of range [0, " << n_agents() << ")";
        throw Error(Errc::InvalidArgument, msg.str());
    }
}

const EntryCoeffs& RegressorGenerator::coeff(int agent, int row, int col) const
{
    check_agent(agent);
    return m_coeffs[agent].at(static_cast<std::size_t>(row * m_nParams + col));
}

Eigen::MatrixXd RegressorGenerator::evaluate(int agent, double t) const
{
    check_agent(agent);
    Eigen::MatrixXd c(m_rows[agent], m_nParams);
    const auto& table = m_coeffs[agent];
    for (int r = 0; r < m_rows[agent]; ++r)
        for (int col = 0; col < m_nParams; ++col)
            c(r, col) = table[r * m_nParams + col].value(t);
    return c;
}

Eigen::MatrixXd RegressorGenerator::derivative(int agent, double t) const
{
    check_agent(agent);
    Eigen::MatrixXd c(m_rows[agent], m_nParams);
    const auto& table = m_coeffs[agent];
    for (int r = 0; r < m_rows[agent]; ++r)
        for (int col = 0; col < m_nParams; ++col)
            c(r, col) = table[r * m_nParams + col].rate(t);
    return c;
}

Eigen::MatrixXd RegressorGenerator::stacked(double t) const
{
    Eigen::MatrixXd c(total_rows(), m_nParams);
    int offset = 0;
    for (int i = 0; i < n_agents(); ++i)
    {
        c.middleRows(offset, m_rows[i]) = evaluate(i, t);
        offset += m_rows[i];
    }
    return c;
}

RegressorGenerator sample_coefficients(int n_params,
                                       int n_agents,
                                       std::span<const int> rows_per_agent,
                                       Range coeff_range,
                                       Range freq_range,
                                       std::uint64_t seed,
                                       RegressorFamily family)
{
    if (n_params <= 0 || n_agents <= 0)
        throw Error(Errc::BadDimension, "dimensions must be positive");
    if (!rows_per_agent.empty() && rows_per_agent.size() != static_cast<std::size_t>(n_agents))
        throw Error(Errc::BadDimension, "rows_per_agent must list one entry per agent");
    for (const Range& r : {coeff_range, freq_range})
        if (!std::isfinite(r.lo) || !std::isfinite(r.hi) || r.lo > r.hi)
            throw Error(Errc::BadRange, "sampling ranges must be finite with lo <= hi");

    std::vector<int> rows(n_agents, 1);
    if (!rows_per_agent.empty())
        rows.assign(rows_per_agent.begin(), rows_per_agent.end());

    std::vector<std::vector<EntryCoeffs>> tables(n_agents);
    for (int i = 0; i < n_agents; ++i)
    {
        if (rows[i] <= 0)
            throw Error(Errc::BadDimension, "rows per agent must be positive");
        CounterRng rng(seed, static_cast<std::uint64_t>(i), StreamPurpose::Coefficients);
        std::uniform_real_distribution<double> coeff(coeff_range.lo, coeff_range.hi);
        std::uniform_real_distribution<double> freq(freq_range.lo, freq_range.hi);
        // uniform_real_distribution requires a < b; degenerate ranges are handled explicitly
        auto draw_coeff = [&] { return coeff_range.lo == coeff_range.hi ? coeff_range.lo : coeff(rng); };
        auto draw_freq = [&] { return freq_range.lo == freq_range.hi ? freq_range.lo : freq(rng); };

        auto& table = tables[i];
        table.resize(static_cast<std::size_t>(rows[i] * n_params));
        for (int r = 0; r < rows[i]; ++r)
        {
            if (family == RegressorFamily::Independent)
            {
                for (int c = 0; c < n_params; ++c)
                {
                    EntryCoeffs& e = table[r * n_params + c];
                    e.a = draw_coeff();
                    e.b = draw_coeff();
                    e.d = draw_coeff();
                    e.omega = draw_freq();
                }
            } else
            {
                EntryCoeffs scalar;
                scalar.a = draw_coeff();
                scalar.b = draw_coeff();
                scalar.d = draw_coeff();
                scalar.omega = draw_freq();
                const int direction = i % n_params;
                for (int c = 0; c < n_params; ++c)
                {
                    EntryCoeffs& e = table[r * n_params + c];
                    e = c == direction ? scalar : EntryCoeffs{};
                    e.omega = scalar.omega;
                }
            }
        }
    }
    return RegressorGenerator(n_params, std::move(rows), std::move(tables), seed);
}

Eigen::MatrixXd evaluate_regressor(const RegressorGenerator& gen, int agent, double t)
{
    return gen.evaluate(agent, t);
}

Eigen::VectorXd draw_noise(int rows, double noise_sd, CounterRng& rng)
{
    Eigen::VectorXd eta = Eigen::VectorXd::Zero(rows);
    if (noise_sd > 0.0)
    {
        std::normal_distribution<double> normal(0.0, noise_sd);
        for (int r = 0; r < rows; ++r)
            eta(r) = normal(rng);
    }
    return eta;
}

Measurement measure(const RegressorGenerator& gen,
                    const Eigen::VectorXd& theta,
                    int agent,
                    double t,
                    double noise_sd,
                    CounterRng& rng)
{
    if (theta.size() != gen.n_params())
        throw Error(Errc::BadDimension, "theta has the wrong length");
    Measurement m;
    m.t = t;
    m.C = gen.evaluate(agent, t);
    m.y = m.C * theta;
    if (noise_sd > 0.0)
        m.y += draw_noise(static_cast<int>(m.y.size()), noise_sd, rng);
    return m;
}

Surrogate surrogate(const Eigen::Ref<const Eigen::MatrixXd>& C, const Eigen::Ref<const Eigen::VectorXd>& y)
{
    if (C.rows() != y.size())
        throw Error(Errc::BadDimension, "regressor rows and measurement length differ");
    Surrogate s;
    s.Cp = C.transpose() * C;
    // force exact symmetry so consensus states stay symmetric to the last bit
    s.Cp = 0.5 * (s.Cp + s.Cp.transpose()).eval();
    s.yp = C.transpose() * y;
    return s;
}

Surrogate surrogate(const Measurement& m)
{
    return surrogate(m.C, m.y);
}

Stacked stack_centralized(std::span<const Measurement> measurements)
{
    if (measurements.empty())
        throw Error(Errc::BadDimension, "nothing to stack");
    const auto n = measurements.front().C.cols();
    Eigen::Index rows = 0;
    for (const auto& m : measurements)
    {
        if (m.C.cols() != n || m.C.rows() != m.y.size())
            throw Error(Errc::BadDimension, "measurement dimensions are inconsistent");
        rows += m.C.rows();
    }
    Stacked s{Eigen::MatrixXd(rows, n), Eigen::VectorXd(rows)};
    Eigen::Index offset = 0;
    for (const auto& m : measurements)
    {
        s.C.middleRows(offset, m.C.rows()) = m.C;
        s.y.segment(offset, m.y.size()) = m.y;
        offset += m.C.rows();
    }
    return s;
}

double quantize(double s, double eps)
{
    if (eps == 0.0)
        return s;
    // s / eps can round across an integer; correct so that eps*k <= s < eps*(k+1)
    // holds for the products as evaluated, which also makes Q idempotent
    double k = std::floor(s / eps);
    if (eps * k > s)
        k -= 1.0;
    else if (eps * (k + 1.0) <= s)
        k += 1.0;
    return eps * k;
}

Eigen::MatrixXd quantize(const Eigen::MatrixXd& m, double eps)
{
    if (eps == 0.0)
        return m;
    return m.unaryExpr([eps](double s) { return quantize(s, eps); });
}

Eigen::VectorXd quantize(const Eigen::VectorXd& v, double eps)
{
    if (eps == 0.0)
        return v;
    return v.unaryExpr([eps](double s) { return quantize(s, eps); });
}

} // namespace hierest::signals
