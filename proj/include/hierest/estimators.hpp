#pragma once

#include <hierest/common.hpp>
#include <hierest/consensus.hpp>

#include <string>
#include <vector>

namespace hierest::estimators
{

enum class EstimatorKind
{
    GE,          ///< gradient estimator on the consensus outputs
    DREM,        ///< DREM with an LTI filter bank
    DREMSimple,  ///< DREM on det/adj of the consensus output itself
    Centralized, ///< gradient estimator on the stacked network regression
    Local,       ///< gradient estimator on the agent's own surrogate, no consensus
};

std::string to_string(EstimatorKind kind);
EstimatorKind estimator_from_string(const std::string& name);

/// Gamma * Chat^T (yhat - Chat theta_hat)
Eigen::VectorXd ge_derivative(const Eigen::MatrixXd& gain,
                              const Eigen::VectorXd& theta_hat,
                              const consensus::ConsensusOutput& out);

/// Gamma_c * C^T (y - C theta_hat_c) on the stacked regression.
Eigen::VectorXd centralized_ge_derivative(const Eigen::VectorXd& theta_hat,
                                          const Eigen::MatrixXd& C,
                                          const Eigen::VectorXd& y,
                                          const Eigen::MatrixXd& gain);

/// First-order operator alpha / (p + beta).
struct DremFilter
{
    double alpha{1.0};
    double beta{1.0};
};

/// Filters acting on one agent's consensus outputs, realized as z' = -beta z + alpha u.
struct DremFilterBank
{
    std::vector<DremFilter> filters;
    std::vector<Eigen::MatrixXd> matrix_state; ///< filtered Chat, one per filter
    std::vector<Eigen::VectorXd> vector_state; ///< filtered yhat, one per filter

    /// Zero-initialized bank; validates alpha != 0 and beta > 0.
    static DremFilterBank make(std::vector<DremFilter> filters, int n);
    /// r = n - 1 filters with alpha_j = 1, beta_j = j.
    static std::vector<DremFilter> default_filters(int n);

    int size() const { return static_cast<int>(filters.size()); }
};

struct DremFilterBankDerivative
{
    std::vector<Eigen::MatrixXd> matrix_state;
    std::vector<Eigen::VectorXd> vector_state;
};

DremFilterBankDerivative drem_filter_derivative(const DremFilterBank& bank, const consensus::ConsensusOutput& out);

struct Extended
{
    Eigen::MatrixXd Cf; ///< (r+1)n x n
    Eigen::VectorXd yf; ///< (r+1)n
};

/// Raw consensus output stacked atop its r filtered copies.
Extended drem_extend(const consensus::ConsensusOutput& out, const DremFilterBank& bank);

struct DremScalar
{
    double phi{0.0};
    Eigen::VectorXd Y;
    double phi_sq_integral{0.0};
};

/// phi = det(Cf^T Cf), Y = adj(Cf^T Cf) Cf^T yf.
DremScalar drem_scalarize(const Eigen::MatrixXd& Cf, const Eigen::VectorXd& yf);

/// phi = det(Chat), Y = adj(Chat) yhat.
DremScalar drem_simple_scalarize(const consensus::ConsensusOutput& out);

/// Gamma phi (Y - phi theta_hat) for diagonal Gamma given as its diagonal.
Eigen::VectorXd drem_derivative(const Eigen::VectorXd& gain_diagonal,
                                const Eigen::VectorXd& theta_hat,
                                const DremScalar& d);

/// Classical adjugate, adj(G) G = det(G) I, well defined for singular G.
Eigen::MatrixXd adjugate(const Eigen::MatrixXd& g);

/// Tracks the running integral of phi^2 and its increments over consecutive windows.
///
/// phi not in L2 cannot be decided from a finite record; the verdict only says whether
/// the most recent windows keep adding mass above a floor.
class L2DivergenceMonitor
{
public:
    enum class Verdict
    {
        DivergenceConsistent,
        Inconclusive,
    };

    struct Options
    {
        double window{1.0};
        double floor{1e-6};
        /// interpret `floor` as a fraction of the largest window increment seen so far
        bool relative_floor{false};
        std::size_t recent_windows{3};
    };

    explicit L2DivergenceMonitor(Options options);

    void add(double t, double phi);

    double integral() const { return m_integral; }
    const std::vector<double>& increments() const { return m_increments; }
    Verdict verdict() const;

private:
    Options m_options;
    bool m_started{false};
    double m_lastT{0.0};
    double m_lastPhiSq{0.0};
    double m_integral{0.0};
    double m_windowStart{0.0};
    double m_integralAtWindowStart{0.0};
    std::vector<double> m_increments;
};

std::string to_string(L2DivergenceMonitor::Verdict verdict);

} // namespace hierest::estimators
