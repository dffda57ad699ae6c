#include <hierest/estimators.hpp>

#include <algorithm>
#include <cmath>

namespace hierest::estimators
{

std::string to_string(EstimatorKind kind)
{
    switch (kind)
    {
    case EstimatorKind::GE:
        return "ge";
    case EstimatorKind::DREM:
        return "drem";
    case EstimatorKind::DREMSimple:
        return "drem_simple";
    case EstimatorKind::Centralized:
        return "centralized";
    case EstimatorKind::Local:
        return "local";
    }
    return "unknown";
}

EstimatorKind estimator_from_string(const std::string& name)
{
    for (auto kind : {EstimatorKind::GE,
                      EstimatorKind::DREM,
                      EstimatorKind::DREMSimple,
                      EstimatorKind::Centralized,
                      EstimatorKind::Local})
        if (to_string(kind) == name)
            return kind;
    throw Error(Errc::Config, "unknown estimator '" + name + "'");
}

Eigen::VectorXd ge_derivative(const Eigen::MatrixXd& gain,
                              const Eigen::VectorXd& theta_hat,
                              const consensus::ConsensusOutput& out)
{
    return gain * (out.Chat.transpose() * (out.yhat - out.Chat * theta_hat));
}

Eigen::VectorXd centralized_ge_derivative(const Eigen::VectorXd& theta_hat,
                                          const Eigen::MatrixXd& C,
                                          const Eigen::VectorXd& y,
                                          const Eigen::MatrixXd& gain)
{
    if (C.rows() != y.size() || C.cols() != theta_hat.size())
        throw Error(Errc::BadDimension, "stacked regression dimensions are inconsistent");
    return gain * (C.transpose() * (y - C * theta_hat));
}

DremFilterBank DremFilterBank::make(std::vector<DremFilter> filters, int n)
{
    for (const auto& f : filters)
    {
        if (f.alpha == 0.0)
            throw Error(Errc::InvalidArgument, "DREM filter gain alpha must be nonzero");
        if (!(f.beta > 0.0))
            throw Error(Errc::InvalidArgument, "DREM filter pole beta must be positive");
    }
    DremFilterBank bank;
    bank.matrix_state.assign(filters.size(), Eigen::MatrixXd::Zero(n, n));
    bank.vector_state.assign(filters.size(), Eigen::VectorXd::Zero(n));
    bank.filters = std::move(filters);
    return bank;
}

std::vector<DremFilter> DremFilterBank::default_filters(int n)
{
    std::vector<DremFilter> filters;
    for (int j = 1; j < n; ++j)
        filters.push_back({1.0, static_cast<double>(j)});
    return filters;
}

DremFilterBankDerivative drem_filter_derivative(const DremFilterBank& bank, const consensus::ConsensusOutput& out)
{
    DremFilterBankDerivative d;
    for (int j = 0; j < bank.size(); ++j)
    {
        const auto& f = bank.filters[j];
        d.matrix_state.push_back(-f.beta * bank.matrix_state[j] + f.alpha * out.Chat);
        d.vector_state.push_back(-f.beta * bank.vector_state[j] + f.alpha * out.yhat);
    }
    return d;
}

Extended drem_extend(const consensus::ConsensusOutput& out, const DremFilterBank& bank)
{
    const auto n = out.Chat.rows();
    const auto cols = out.Chat.cols();
    const auto blocks = static_cast<Eigen::Index>(bank.size()) + 1;
    Extended e{Eigen::MatrixXd(blocks * n, cols), Eigen::VectorXd(blocks * out.yhat.size())};
    e.Cf.topRows(n) = out.Chat;
    e.yf.head(out.yhat.size()) = out.yhat;
    for (int j = 0; j < bank.size(); ++j)
    {
        e.Cf.middleRows((j + 1) * n, n) = bank.matrix_state[j];
        e.yf.segment((j + 1) * out.yhat.size(), out.yhat.size()) = bank.vector_state[j];
    }
    return e;
}

namespace
{

double small_determinant(const Eigen::MatrixXd& m)
{
    switch (m.rows())
    {
    case 0:
        return 1.0;
    case 1:
        return m(0, 0);
    case 2:
        return m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    case 3:
        return m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0))
               + m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
    default:
        return m.partialPivLu().determinant();
    }
}

double determinant(const Eigen::MatrixXd& m)
{
    if (m.rows() <= 3)
        return small_determinant(m);
    return m.partialPivLu().determinant();
}

Eigen::MatrixXd minor_matrix(const Eigen::MatrixXd& g, Eigen::Index row, Eigen::Index col)
{
    const auto n = g.rows();
    Eigen::MatrixXd m(n - 1, n - 1);
    for (Eigen::Index i = 0, mi = 0; i < n; ++i)
    {
        if (i == row)
            continue;
        for (Eigen::Index j = 0, mj = 0; j < n; ++j)
        {
            if (j == col)
                continue;
            m(mi, mj++) = g(i, j);
        }
        ++mi;
    }
    return m;
}

Eigen::MatrixXd cofactor_adjugate(const Eigen::MatrixXd& g)
{
    const auto n = g.rows();
    Eigen::MatrixXd adj(n, n);
    if (n == 1)
    {
        adj(0, 0) = 1.0;
        return adj;
    }
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
        {
            const double sign = ((i + j) % 2 == 0) ? 1.0 : -1.0;
            // adj is the transpose of the cofactor matrix
            adj(j, i) = sign * determinant(minor_matrix(g, i, j));
        }
    return adj;
}

} // namespace

Eigen::MatrixXd adjugate(const Eigen::MatrixXd& g)
{
    if (g.rows() != g.cols())
        throw Error(Errc::BadDimension, "adjugate needs a square matrix");
    if (g.rows() <= 4)
        return cofactor_adjugate(g);
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(g);
    const double det = lu.determinant();
    if (std::abs(det) < 1e-10)
        return cofactor_adjugate(g);
    return det * lu.inverse();
}

DremScalar drem_scalarize(const Eigen::MatrixXd& Cf, const Eigen::VectorXd& yf)
{
    if (Cf.rows() != yf.size())
        throw Error(Errc::BadDimension, "extended regressor and output lengths differ");
    Eigen::MatrixXd g = Cf.transpose() * Cf;
    g = 0.5 * (g + g.transpose()).eval();
    DremScalar d;
    d.phi = determinant(g);
    d.Y = adjugate(g) * (Cf.transpose() * yf);
    return d;
}

DremScalar drem_simple_scalarize(const consensus::ConsensusOutput& out)
{
    DremScalar d;
    d.phi = determinant(out.Chat);
    d.Y = adjugate(out.Chat) * out.yhat;
    return d;
}

Eigen::VectorXd drem_derivative(const Eigen::VectorXd& gain_diagonal,
                                const Eigen::VectorXd& theta_hat,
                                const DremScalar& d)
{
    return gain_diagonal.cwiseProduct(d.phi * (d.Y - d.phi * theta_hat));
}

L2DivergenceMonitor::L2DivergenceMonitor(Options options)
    : m_options(options)
{
    if (!(m_options.window > 0.0))
        throw Error(Errc::InvalidArgument, "monitor window must be positive");
    if (m_options.recent_windows == 0)
        throw Error(Errc::InvalidArgument, "monitor needs at least one recent window");
}

void L2DivergenceMonitor::add(double t, double phi)
{
    const double phi_sq = phi * phi;
    if (!m_started)
    {
        m_started = true;
        m_windowStart = t;
    } else
    {
        m_integral += 0.5 * (t - m_lastT) * (phi_sq + m_lastPhiSq);
    }
    m_lastT = t;
    m_lastPhiSq = phi_sq;

    // tolerance absorbs accumulated rounding in sample times
    while (t >= m_windowStart + m_options.window * (1.0 - 1e-9))
    {
        m_increments.push_back(m_integral - m_integralAtWindowStart);
        m_integralAtWindowStart = m_integral;
        m_windowStart += m_options.window;
    }
}

L2DivergenceMonitor::Verdict L2DivergenceMonitor::verdict() const
{
    if (m_increments.empty())
        return Verdict::Inconclusive;
    double floor = m_options.floor;
    if (m_options.relative_floor)
        floor *= *std::max_element(m_increments.begin(), m_increments.end());
    const std::size_t recent = std::min(m_options.recent_windows, m_increments.size());
    for (std::size_t k = m_increments.size() - recent; k < m_increments.size(); ++k)
        if (!(m_increments[k] > floor))
            return Verdict::Inconclusive;
    return Verdict::DivergenceConsistent;
}

std::string to_string(L2DivergenceMonitor::Verdict verdict)
{
    return verdict == L2DivergenceMonitor::Verdict::DivergenceConsistent ? "divergence_consistent" : "inconclusive";
}

} // namespace hierest::estimators
