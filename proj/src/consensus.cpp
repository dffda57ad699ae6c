#include <hierest/consensus.hpp>

namespace hierest::consensus
{

ConsensusState ConsensusState::zeros(int n_agents, int n)
{
    ConsensusState s;
    s.X.assign(n_agents, Eigen::MatrixXd::Zero(n, n));
    s.x.assign(n_agents, Eigen::VectorXd::Zero(n));
    return s;
}

LinkMask::LinkMask(int n_agents, bool up)
    : m_nAgents(n_agents)
    , m_up(static_cast<std::size_t>(n_agents * (n_agents - 1) / 2), up ? 1 : 0)
{
}

bool LinkMask::up(int i, int j) const
{
    return m_up.at(static_cast<std::size_t>(graph::pair_index(i, j, m_nAgents))) != 0;
}

void LinkMask::set(int i, int j, bool up)
{
    m_up.at(static_cast<std::size_t>(graph::pair_index(i, j, m_nAgents))) = up ? 1 : 0;
}

std::vector<ConsensusOutput> consensus_outputs(const ConsensusState& state,
                                               std::span<const signals::Surrogate> surrogates)
{
    if (surrogates.size() != state.X.size() || state.x.size() != state.X.size())
        throw Error(Errc::BadDimension, "consensus state and surrogates cover different agent counts");
    std::vector<ConsensusOutput> out(surrogates.size());
    for (std::size_t i = 0; i < surrogates.size(); ++i)
    {
        out[i].Chat = surrogates[i].Cp - state.X[i];
        out[i].yhat = surrogates[i].yp - state.x[i];
    }
    return out;
}

std::vector<ConsensusOutput> quantize_outputs(std::span<const ConsensusOutput> outputs, double eps)
{
    std::vector<ConsensusOutput> q(outputs.begin(), outputs.end());
    if (eps == 0.0)
        return q;
    for (auto& o : q)
    {
        o.Chat = signals::quantize(o.Chat, eps);
        o.yhat = signals::quantize(o.yhat, eps);
    }
    return q;
}

ConsensusDerivative laplacian_flow(std::span<const ConsensusOutput> transmitted,
                                   const graph::Topology& topo,
                                   double k,
                                   const LinkMask* mask)
{
    const auto agents = static_cast<int>(transmitted.size());
    if (agents != topo.n_agents())
        throw Error(Errc::BadDimension, "topology and outputs cover different agent counts");
    if (mask != nullptr && mask->n_agents() != agents)
        throw Error(Errc::BadDimension, "link mask covers a different agent count");

    ConsensusDerivative d;
    d.dX.reserve(agents);
    d.dx.reserve(agents);
    for (int i = 0; i < agents; ++i)
    {
        const auto& own = transmitted[i];
        Eigen::MatrixXd dX = Eigen::MatrixXd::Zero(own.Chat.rows(), own.Chat.cols());
        Eigen::VectorXd dx = Eigen::VectorXd::Zero(own.yhat.size());
        for (int j : topo.neighbors(i))
        {
            if (mask != nullptr && !mask->up(i, j))
                continue;
            dX += own.Chat - transmitted[j].Chat;
            dx += own.yhat - transmitted[j].yhat;
        }
        d.dX.push_back(k * dX);
        d.dx.push_back(k * dx);
    }
    return d;
}

ConsensusDerivative dac_derivative(const ConsensusState& state,
                                   std::span<const signals::Surrogate> surrogates,
                                   const graph::Topology& topo,
                                   double k,
                                   double eps,
                                   const LinkMask* mask)
{
    const auto outputs = consensus_outputs(state, surrogates);
    if (eps == 0.0)
        return laplacian_flow(outputs, topo, k, mask);
    const auto transmitted = quantize_outputs(outputs, eps);
    return laplacian_flow(transmitted, topo, k, mask);
}

AverageReference average_reference(std::span<const signals::Surrogate> surrogates)
{
    if (surrogates.empty())
        throw Error(Errc::BadDimension, "average of an empty agent set");
    AverageReference ref{Eigen::MatrixXd::Zero(surrogates[0].Cp.rows(), surrogates[0].Cp.cols()),
                         Eigen::VectorXd::Zero(surrogates[0].yp.size())};
    for (const auto& s : surrogates)
    {
        ref.Cbar += s.Cp;
        ref.ybar += s.yp;
    }
    const double inv = 1.0 / static_cast<double>(surrogates.size());
    ref.Cbar *= inv;
    ref.ybar *= inv;
    return ref;
}

ConsensusErrorNorms consensus_error(const ConsensusOutput& output, const AverageReference& reference)
{
    return {induced_norm(output.Chat - reference.Cbar), (output.yhat - reference.ybar).norm()};
}

Eigen::VectorXd residual(const ConsensusOutput& output, const Eigen::VectorXd& theta)
{
    return output.yhat - output.Chat * theta;
}

} // namespace hierest::consensus
