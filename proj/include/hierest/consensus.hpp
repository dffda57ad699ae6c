#pragma once

#include <hierest/common.hpp>
#include <hierest/graph.hpp>
#include <hierest/signals.hpp>

#include <cstdint>
#include <span>
#include <vector>

namespace hierest::consensus
{

/// Dynamic average consensus integrator states, one (X_i, x_i) pair per agent.
struct ConsensusState
{
    std::vector<Eigen::MatrixXd> X;
    std::vector<Eigen::VectorXd> x;

    /// Standard initialization X_i(0) = 0, x_i(0) = 0.
    static ConsensusState zeros(int n_agents, int n);

    int n_agents() const { return static_cast<int>(X.size()); }
};

/// Consensus outputs Chat_i = C'_i - X_i and yhat_i = y'_i - x_i.
struct ConsensusOutput
{
    Eigen::MatrixXd Chat;
    Eigen::VectorXd yhat;
};

/// Up/down flag for each unordered agent pair. A link that is down is removed from
/// both endpoints' neighbor sums.
class LinkMask
{
public:
    LinkMask() = default;
    explicit LinkMask(int n_agents, bool up = true);

    int n_agents() const { return m_nAgents; }
    bool up(int i, int j) const;
    void set(int i, int j, bool up);

private:
    int m_nAgents{0};
    std::vector<std::uint8_t> m_up;
};

struct ConsensusDerivative
{
    std::vector<Eigen::MatrixXd> dX;
    std::vector<Eigen::VectorXd> dx;
};

std::vector<ConsensusOutput> consensus_outputs(const ConsensusState& state,
                                               std::span<const signals::Surrogate> surrogates);

/// Elementwise floor quantization of what each agent transmits (identity when eps == 0).
std::vector<ConsensusOutput> quantize_outputs(std::span<const ConsensusOutput> outputs, double eps);

/// k * sum over active neighbors of (v_i - v_j) for both channels, given the values each
/// agent transmits. A null mask means every link of the topology is up.
ConsensusDerivative laplacian_flow(std::span<const ConsensusOutput> transmitted,
                                   const graph::Topology& topo,
                                   double k,
                                   const LinkMask* mask = nullptr);

/// Full DAC right-hand side: outputs from the current state, optional quantization,
/// then Laplacian differencing over the links that are up.
ConsensusDerivative dac_derivative(const ConsensusState& state,
                                   std::span<const signals::Surrogate> surrogates,
                                   const graph::Topology& topo,
                                   double k,
                                   double eps,
                                   const LinkMask* mask = nullptr);

struct AverageReference
{
    Eigen::MatrixXd Cbar;
    Eigen::VectorXd ybar;
};

AverageReference average_reference(std::span<const signals::Surrogate> surrogates);

struct ConsensusErrorNorms
{
    double matrix{0.0}; ///< ||Chat_i - Cbar|| (induced 2-norm)
    double vector{0.0}; ///< ||yhat_i - ybar||
};

ConsensusErrorNorms consensus_error(const ConsensusOutput& output, const AverageReference& reference);

/// r_i = yhat_i - Chat_i theta; identically zero for exact, noiseless, zero-initialized runs.
Eigen::VectorXd residual(const ConsensusOutput& output, const Eigen::VectorXd& theta);

} // namespace hierest::consensus
