#include <hierest/sim.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <sstream>

namespace hierest::sim
{

using estimators::EstimatorKind;

Eigen::VectorXd rk4_step(const Field& field, const Eigen::VectorXd& state, double t, double h)
{
    const Eigen::VectorXd k1 = field(t, state);
    const Eigen::VectorXd k2 = field(t + 0.5 * h, state + 0.5 * h * k1);
    const Eigen::VectorXd k3 = field(t + 0.5 * h, state + 0.5 * h * k2);
    const Eigen::VectorXd k4 = field(t + h, state + h * k3);
    Eigen::VectorXd next = state + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!next.allFinite())
    {
        std::ostringstream msg;
        msg << "non-finite state after the step at t = " << t;
        throw Error(Errc::Divergence, msg.str());
    }
    return next;
}

// ---------------------------------------------------------------------------
// configuration

namespace
{

void config_error(const std::string& what)
{
    throw Error(Errc::Config, what);
}

bool is_spd(const Eigen::MatrixXd& m)
{
    if (m.rows() != m.cols() || m.rows() == 0)
        return false;
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, m.cwiseAbs().maxCoeff()))
        return false;
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    return llt.info() == Eigen::Success;
}

} // namespace

bool ScenarioConfig::has(EstimatorKind kind) const
{
    return std::find(estimators.begin(), estimators.end(), kind) != estimators.end();
}

void ScenarioConfig::validate()
{
    if (n <= 0)
        config_error("n must be positive");
    if (n_agents <= 0)
        config_error("N must be positive");
    if (theta.size() != n)
        config_error("theta must have n entries");
    if (!rows_per_agent.empty() && static_cast<int>(rows_per_agent.size()) != n_agents)
        config_error("rows_per_agent must list one entry per agent");
    for (int r : rows_per_agent)
        if (r <= 0)
            config_error("rows_per_agent entries must be positive");
    if (!(h > 0.0))
        config_error("integrator step h must be positive");
    if (horizon < 10.0 * h)
        config_error("horizon must cover at least 10 integrator steps");
    if (decimation < 1)
        config_error("decimation must be >= 1");
    if (k && !(*k > 0.0))
        config_error("consensus gain k must be positive");
    if (!(k_safety_factor > 0.0))
        config_error("k_safety_factor must be positive");
    if (epsilon < 0.0)
        config_error("epsilon must be >= 0");
    if (noise_sd < 0.0)
        config_error("noise_sd must be >= 0");
    if (p_loss < 0.0 || p_loss >= 1.0)
        config_error("p_loss must lie in [0, 1)");
    if (!(loss_interval > 0.0))
        config_error("loss_interval must be positive");
    if (!(divergence_limit > 0.0))
        config_error("divergence_limit must be positive");
    if (estimators.empty())
        config_error("at least one estimator must be enabled");
    if (std::set<EstimatorKind>(estimators.begin(), estimators.end()).size() != estimators.size())
        config_error("estimators must not repeat");
    if (n_agents >= 2 && topologies.empty())
        config_error("a network of N >= 2 agents needs at least one topology");
    if (!segments.empty() && switch_period > 0.0)
        config_error("give either explicit segments or a switch_period, not both");
    if (switch_period < 0.0 || dwell_min < 0.0)
        config_error("switch_period and dwell_min must be >= 0");

    if (gamma_ge.size() == 0)
        gamma_ge = 4e-4 * Eigen::MatrixXd::Identity(n, n);
    if (gamma_centralized.size() == 0)
        gamma_centralized = 1e-3 * Eigen::MatrixXd::Identity(n, n);
    if (gamma_drem.size() == 0)
        gamma_drem = Eigen::VectorXd::Constant(n, 1e-29);
    if (gamma_drem_simple.size() == 0)
        gamma_drem_simple = Eigen::VectorXd::Constant(n, 1e-13);
    if (drem_filters.empty() && has(EstimatorKind::DREM))
        drem_filters = estimators::DremFilterBank::default_filters(n);

    if (gamma_ge.rows() != n || !is_spd(gamma_ge))
        config_error("gamma_ge must be an n x n symmetric positive-definite matrix");
    if (gamma_centralized.rows() != n || !is_spd(gamma_centralized))
        config_error("gamma_centralized must be an n x n symmetric positive-definite matrix");
    if (gamma_drem.size() != n || (gamma_drem.array() <= 0.0).any())
        config_error("gamma_drem must be a positive diagonal of length n");
    if (gamma_drem_simple.size() != n || (gamma_drem_simple.array() <= 0.0).any())
        config_error("gamma_drem_simple must be a positive diagonal of length n");
    for (const auto& f : drem_filters)
        if (f.alpha == 0.0 || !(f.beta > 0.0))
            config_error("DREM filters need alpha != 0 and beta > 0");

    if (!theta0.empty() && theta0.size() != 1 && static_cast<int>(theta0.size()) != n_agents)
        config_error("theta0 must be a single vector or one vector per agent");
    for (const auto& v : theta0)
        if (v.size() != n)
            config_error("theta0 vectors must have n entries");

    if (analysis.windows.empty())
        config_error("analysis.windows must not be empty");
    for (double w : analysis.windows)
        if (!(w > 0.0))
            config_error("analysis windows must be positive");
    if (analysis.grid_divisions < 10)
        config_error("analysis.grid_divisions must be >= 10");
    if (!(analysis.bound_grid_step > 0.0) || analysis.inflation < 1.0 || analysis.horizon < 0.0)
        config_error("analysis bound grid must be positive, inflation >= 1, horizon >= 0");
    if (metrics.transient_fraction < 0.0 || metrics.transient_fraction >= 1.0 || !(metrics.tail_fraction > 0.0)
        || metrics.tail_fraction > 1.0)
        config_error("metrics fractions must lie in [0, 1)");

    try
    {
        build_schedule();
    } catch (const Error& e)
    {
        if (e.code() == Errc::Config)
            throw;
        config_error(std::string("network: ") + e.what());
    }
}

std::optional<graph::SwitchingSchedule> ScenarioConfig::build_schedule() const
{
    if (n_agents < 2)
        return std::nullopt;
    std::vector<graph::Topology> topos;
    for (const auto& edges : topologies)
        topos.push_back(graph::Topology::from_edges(n_agents, edges));
    for (const auto& t : topos)
        if (t.n_agents() != n_agents)
            config_error("topology agent count differs from N");

    if (switch_period > 0.0)
        return graph::SwitchingSchedule::cyclic(std::move(topos), switch_period, horizon);

    std::vector<graph::Segment> segs = segments;
    if (segs.empty())
        segs.push_back({0.0, 0});
    double dwell = dwell_min;
    if (dwell == 0.0)
    {
        dwell = horizon;
        for (std::size_t k = 1; k < segs.size(); ++k)
            dwell = std::min(dwell, segs[k].start - segs[k - 1].start);
    }
    return graph::SwitchingSchedule(std::move(topos), std::move(segs), dwell);
}

signals::RegressorGenerator ScenarioConfig::build_generator() const
{
    return signals::sample_coefficients(n, n_agents, rows_per_agent, coeff_range, freq_range, seed, family);
}

// ---------------------------------------------------------------------------
// analysis

ScenarioConstants analyze_scenario(const ScenarioConfig& cfg)
{
    const auto gen = cfg.build_generator();
    const auto schedule = cfg.build_schedule();
    const double horizon = cfg.analysis.horizon > 0.0 ? cfg.analysis.horizon : cfg.horizon;

    ScenarioConstants out;
    const excitation::MatrixSignal stacked = [&gen](double t) { return gen.stacked(t); };
    std::vector<double> windows;
    for (double w : cfg.analysis.windows)
        if (w <= horizon)
            windows.push_back(w);
    if (windows.empty())
        config_error("every analysis window is longer than the analysis horizon");
    out.alpha_curve = excitation::pe_curve(stacked, windows, horizon, cfg.analysis.grid_divisions);
    const auto selected = excitation::select_window(out.alpha_curve, cfg.analysis.alpha_threshold);

    const auto bounds
        = excitation::estimate_assumption_bounds(gen, horizon, cfg.analysis.bound_grid_step, cfg.analysis.inflation);
    out.constants.beta = bounds.beta;
    out.constants.gamma = bounds.gamma;
    out.constants.n = cfg.n;
    out.constants.n_agents = cfg.n_agents;
    out.persistently_exciting = selected.has_value();
    out.constants.alpha = selected ? selected->alpha : 0.0;
    out.constants.window = selected ? selected->window : windows.front();
    out.theta_norm = cfg.theta.norm();

    const double nan = std::numeric_limits<double>::quiet_NaN();
    out.k_min = nan;
    out.lambda_g_min = nan;
    out.lambda_max_max = nan;
    if (schedule)
    {
        out.lambda_g_min = schedule->lambda_g_min();
        out.lambda_max_max = schedule->lambda_max_max();
        if (out.persistently_exciting)
            out.k_min = excitation::gain_bound(out.constants, out.lambda_g_min);
    }

    out.k = cfg.k ? *cfg.k : resolve_gain(cfg, out);

    if (schedule)
    {
        out.quantized = excitation::quantized_bounds(
            out.constants, out.k, out.lambda_g_min, out.lambda_max_max, cfg.epsilon, out.theta_norm);
        out.switched = excitation::switched_feasibility(
            out.constants, out.k, out.lambda_g_min, out.lambda_max_max, cfg.epsilon);
        out.consensus_ceiling = out.quantized.b_eps;
    }
    return out;
}

double resolve_gain(const ScenarioConfig& cfg, const ScenarioConstants& constants)
{
    constexpr double kFloor = 1e-6;
    if (cfg.n_agents < 2)
        return kFloor;
    if (!constants.persistently_exciting)
        throw Error(Errc::NotPersistentlyExciting,
                    "cannot resolve k automatically: the stacked regressor is not persistently exciting on the "
                    "analysis horizon (alpha = 0 for every window)");
    const double bound = excitation::gain_bound(constants.constants, constants.lambda_g_min);
    const double k = cfg.k_safety_factor * bound;
    return k > 0.0 ? k : kFloor;
}

// ---------------------------------------------------------------------------
// state layout and the coupled vector field

namespace
{

constexpr std::array kDistributedKinds{
    EstimatorKind::GE, EstimatorKind::DREM, EstimatorKind::DREMSimple, EstimatorKind::Local};

int kind_slot(EstimatorKind kind)
{
    return static_cast<int>(kind);
}

bool has_phi(EstimatorKind kind)
{
    return kind == EstimatorKind::DREM || kind == EstimatorKind::DREMSimple;
}

/// Flat state: [X_i | x_i | per-kind theta_i | DREM filter states | centralized theta | phi^2 integrals].
/// The phi^2 integrals are monitors and sit last so the divergence guard can skip them.
class StateLayout
{
public:
    StateLayout(const ScenarioConfig& cfg)
        : m_agents(cfg.n_agents)
        , m_n(cfg.n)
        , m_filters(static_cast<int>(cfg.drem_filters.size()))
    {
        m_theta.fill(-1);
        m_phi.fill(-1);
        Eigen::Index off = static_cast<Eigen::Index>(m_agents) * (m_n * m_n + m_n);
        for (auto kind : kDistributedKinds)
        {
            if (!cfg.has(kind))
                continue;
            m_theta[kind_slot(kind)] = off;
            off += static_cast<Eigen::Index>(m_agents) * m_n;
        }
        if (cfg.has(EstimatorKind::DREM))
        {
            m_filterBase = off;
            off += static_cast<Eigen::Index>(m_agents) * m_filters * (m_n * m_n + m_n);
        }
        if (cfg.has(EstimatorKind::Centralized))
        {
            m_theta[kind_slot(EstimatorKind::Centralized)] = off;
            off += m_n;
        }
        m_monitorStart = off;
        for (auto kind : {EstimatorKind::DREM, EstimatorKind::DREMSimple})
        {
            if (!cfg.has(kind))
                continue;
            m_phi[kind_slot(kind)] = off;
            off += m_agents;
        }
        m_size = off;
    }

    Eigen::Index size() const { return m_size; }
    Eigen::Index monitor_start() const { return m_monitorStart; }
    Eigen::Index X(int i) const { return static_cast<Eigen::Index>(i) * m_n * m_n; }
    Eigen::Index x(int i) const { return static_cast<Eigen::Index>(m_agents) * m_n * m_n + static_cast<Eigen::Index>(i) * m_n; }
    Eigen::Index theta(EstimatorKind kind, int i) const { return m_theta[kind_slot(kind)] + static_cast<Eigen::Index>(i) * m_n; }
    Eigen::Index phi_integral(EstimatorKind kind, int i) const { return m_phi[kind_slot(kind)] + i; }
    Eigen::Index filter_matrix(int i, int j) const
    {
        return m_filterBase + (static_cast<Eigen::Index>(i) * m_filters + j) * (m_n * m_n + m_n);
    }
    Eigen::Index filter_vector(int i, int j) const { return filter_matrix(i, j) + m_n * m_n; }

    std::string describe(Eigen::Index index) const
    {
        std::ostringstream s;
        const Eigen::Index consensusEnd = static_cast<Eigen::Index>(m_agents) * (m_n * m_n + m_n);
        if (index < static_cast<Eigen::Index>(m_agents) * m_n * m_n)
            s << "X_" << index / (m_n * m_n);
        else if (index < consensusEnd)
            s << "x_" << (index - static_cast<Eigen::Index>(m_agents) * m_n * m_n) / m_n;
        else
        {
            for (auto kind : {EstimatorKind::GE, EstimatorKind::DREM, EstimatorKind::DREMSimple, EstimatorKind::Local})
            {
                const auto base = m_theta[kind_slot(kind)];
                if (base >= 0 && index >= base && index < base + static_cast<Eigen::Index>(m_agents) * m_n)
                {
                    s << "theta_hat[" << estimators::to_string(kind) << "]_" << (index - base) / m_n;
                    return s.str();
                }
            }
            const auto central = m_theta[kind_slot(EstimatorKind::Centralized)];
            if (central >= 0 && index >= central && index < central + m_n)
                s << "theta_hat[centralized]";
            else
                s << "drem_filter_state";
        }
        return s.str();
    }

private:
    int m_agents;
    int m_n;
    int m_filters;
    std::array<Eigen::Index, 5> m_theta{};
    std::array<Eigen::Index, 5> m_phi{};
    Eigen::Index m_filterBase{0};
    Eigen::Index m_monitorStart{0};
    Eigen::Index m_size{0};
};

/// Inputs frozen over one integrator step.
struct StepInputs
{
    int sigma{-1};
    const graph::Topology* topo{nullptr};
    const consensus::LinkMask* mask{nullptr};
    std::vector<Eigen::VectorXd> noise;
    std::optional<std::vector<consensus::ConsensusOutput>> held;
};

struct Observation
{
    std::vector<signals::Measurement> measurements;
    std::vector<signals::Surrogate> surrogates;
    std::vector<consensus::ConsensusOutput> outputs;
};

class Simulator
{
public:
    Simulator(const ScenarioConfig& cfg, double k)
        : m_cfg(cfg)
        , m_gen(cfg.build_generator())
        , m_schedule(cfg.build_schedule())
        , m_layout(cfg)
        , m_k(k)
    {
        for (int i = 0; i < cfg.n_agents; ++i)
            m_noise.emplace_back(cfg.seed, static_cast<std::uint64_t>(i), StreamPurpose::Noise);
        if (cfg.p_loss > 0.0 && cfg.n_agents >= 2)
            m_mask = consensus::LinkMask(cfg.n_agents, true);
    }

    const StateLayout& layout() const { return m_layout; }
    const std::optional<graph::SwitchingSchedule>& schedule() const { return m_schedule; }

    Eigen::VectorXd initial_state() const
    {
        Eigen::VectorXd s = Eigen::VectorXd::Zero(m_layout.size());
        const int n = m_cfg.n;
        auto theta0 = [&](int i) -> Eigen::VectorXd {
            if (m_cfg.theta0.empty())
                return Eigen::VectorXd::Zero(n);
            return m_cfg.theta0.size() == 1 ? m_cfg.theta0.front() : m_cfg.theta0[i];
        };
        for (auto kind : kDistributedKinds)
        {
            if (!m_cfg.has(kind))
                continue;
            for (int i = 0; i < m_cfg.n_agents; ++i)
                s.segment(m_layout.theta(kind, i), n) = theta0(i);
        }
        if (m_cfg.has(EstimatorKind::Centralized))
            s.segment(m_layout.theta(EstimatorKind::Centralized, 0), n) = theta0(0);
        return s;
    }

    StepInputs prepare(long step, double t, const Eigen::VectorXd& s)
    {
        StepInputs in;
        if (m_schedule)
        {
            // switch instants snap to step boundaries
            in.sigma = m_schedule->active_topology(t + 1e-6 * m_cfg.h);
            in.topo = &m_schedule->topology(in.sigma);
        }
        if (m_mask)
        {
            if (step == 0 || t >= m_nextLossResample - 1e-6 * m_cfg.h)
            {
                resample_links();
                m_nextLossResample += m_cfg.loss_interval;
            }
            in.mask = &*m_mask;
        }
        for (int i = 0; i < m_cfg.n_agents; ++i)
            in.noise.push_back(signals::draw_noise(m_gen.rows(i), m_cfg.noise_sd, m_noise[i]));
        if (m_cfg.epsilon > 0.0)
        {
            const auto obs = observe(t, s, in);
            in.held = consensus::quantize_outputs(obs.outputs, m_cfg.epsilon);
        }
        return in;
    }

    Observation observe(double t, const Eigen::VectorXd& s, const StepInputs& in) const
    {
        const int n = m_cfg.n;
        Observation o;
        o.measurements.reserve(m_cfg.n_agents);
        for (int i = 0; i < m_cfg.n_agents; ++i)
        {
            signals::Measurement m;
            m.t = t;
            m.C = m_gen.evaluate(i, t);
            m.y = m.C * m_cfg.theta + in.noise[i];
            o.surrogates.push_back(signals::surrogate(m));
            o.measurements.push_back(std::move(m));
        }
        for (int i = 0; i < m_cfg.n_agents; ++i)
        {
            const Eigen::Map<const Eigen::MatrixXd> X(s.data() + m_layout.X(i), n, n);
            o.outputs.push_back({o.surrogates[i].Cp - X, o.surrogates[i].yp - s.segment(m_layout.x(i), n)});
        }
        return o;
    }

    estimators::DremFilterBank bank(const Eigen::VectorXd& s, int agent) const
    {
        const int n = m_cfg.n;
        estimators::DremFilterBank b;
        b.filters = m_cfg.drem_filters;
        for (int j = 0; j < static_cast<int>(b.filters.size()); ++j)
        {
            b.matrix_state.emplace_back(Eigen::Map<const Eigen::MatrixXd>(s.data() + m_layout.filter_matrix(agent, j), n, n));
            b.vector_state.emplace_back(s.segment(m_layout.filter_vector(agent, j), n));
        }
        return b;
    }

    estimators::DremScalar drem_scalar(EstimatorKind kind,
                                       const Eigen::VectorXd& s,
                                       int agent,
                                       const consensus::ConsensusOutput& out) const
    {
        if (kind == EstimatorKind::DREMSimple)
            return estimators::drem_simple_scalarize(out);
        const auto ext = estimators::drem_extend(out, bank(s, agent));
        return estimators::drem_scalarize(ext.Cf, ext.yf);
    }

    Eigen::VectorXd field(double t, const Eigen::VectorXd& s, const StepInputs& in) const
    {
        const int n = m_cfg.n;
        const int agents = m_cfg.n_agents;
        Eigen::VectorXd ds = Eigen::VectorXd::Zero(s.size());
        const auto obs = observe(t, s, in);

        if (in.topo != nullptr)
        {
            const auto& transmitted = in.held ? *in.held : obs.outputs;
            const auto flow = consensus::laplacian_flow(transmitted, *in.topo, m_k, in.mask);
            for (int i = 0; i < agents; ++i)
            {
                Eigen::Map<Eigen::MatrixXd>(ds.data() + m_layout.X(i), n, n) = flow.dX[i];
                ds.segment(m_layout.x(i), n) = flow.dx[i];
            }
        }

        for (int i = 0; i < agents; ++i)
        {
            const auto& out = obs.outputs[i];
            if (m_cfg.has(EstimatorKind::GE))
            {
                const auto off = m_layout.theta(EstimatorKind::GE, i);
                ds.segment(off, n) = estimators::ge_derivative(m_cfg.gamma_ge, s.segment(off, n), out);
            }
            if (m_cfg.has(EstimatorKind::Local))
            {
                const auto off = m_layout.theta(EstimatorKind::Local, i);
                const consensus::ConsensusOutput own{obs.surrogates[i].Cp, obs.surrogates[i].yp};
                ds.segment(off, n) = estimators::ge_derivative(m_cfg.gamma_ge, s.segment(off, n), own);
            }
            if (m_cfg.has(EstimatorKind::DREM))
            {
                const auto b = bank(s, i);
                const auto fd = estimators::drem_filter_derivative(b, out);
                for (int j = 0; j < b.size(); ++j)
                {
                    Eigen::Map<Eigen::MatrixXd>(ds.data() + m_layout.filter_matrix(i, j), n, n) = fd.matrix_state[j];
                    ds.segment(m_layout.filter_vector(i, j), n) = fd.vector_state[j];
                }
                const auto ext = estimators::drem_extend(out, b);
                const auto d = estimators::drem_scalarize(ext.Cf, ext.yf);
                const auto off = m_layout.theta(EstimatorKind::DREM, i);
                ds.segment(off, n) = estimators::drem_derivative(m_cfg.gamma_drem, s.segment(off, n), d);
                ds(m_layout.phi_integral(EstimatorKind::DREM, i)) = d.phi * d.phi;
            }
            if (m_cfg.has(EstimatorKind::DREMSimple))
            {
                const auto d = estimators::drem_simple_scalarize(out);
                const auto off = m_layout.theta(EstimatorKind::DREMSimple, i);
                ds.segment(off, n) = estimators::drem_derivative(m_cfg.gamma_drem_simple, s.segment(off, n), d);
                ds(m_layout.phi_integral(EstimatorKind::DREMSimple, i)) = d.phi * d.phi;
            }
        }

        if (m_cfg.has(EstimatorKind::Centralized))
        {
            const auto stacked = signals::stack_centralized(obs.measurements);
            const auto off = m_layout.theta(EstimatorKind::Centralized, 0);
            ds.segment(off, n)
                = estimators::centralized_ge_derivative(s.segment(off, n), stacked.C, stacked.y, m_cfg.gamma_centralized);
        }
        return ds;
    }

    void guard(const Eigen::VectorXd& s, double t) const
    {
        for (Eigen::Index idx = 0; idx < m_layout.monitor_start(); ++idx)
        {
            if (!(std::abs(s(idx)) <= m_cfg.divergence_limit))
            {
                std::ostringstream msg;
                msg << "divergence at t = " << t << ": " << m_layout.describe(idx) << " reached " << s(idx)
                    << " (limit " << m_cfg.divergence_limit << ")";
                throw Error(Errc::Divergence, msg.str());
            }
        }
    }

    void record(double t, const Eigen::VectorXd& s, const StepInputs& in, TraceSet& trace) const
    {
        const int n = m_cfg.n;
        const int agents = m_cfg.n_agents;
        const auto obs = observe(t, s, in);
        const auto ref = consensus::average_reference(obs.surrogates);

        trace.time.push_back(t);
        trace.sigma.push_back(in.sigma);
        std::string mask;
        if (in.topo != nullptr)
            for (const auto& e : in.topo->edges())
                mask.push_back(in.mask == nullptr || in.mask->up(e.i, e.j) ? '1' : '0');
        trace.link_mask.push_back(std::move(mask));

        std::vector<double> cerr, yerr, res;
        std::vector<Eigen::MatrixXd> chat;
        Eigen::MatrixXd sumX = Eigen::MatrixXd::Zero(n, n);
        Eigen::VectorXd sumx = Eigen::VectorXd::Zero(n);
        double asym = 0.0;
        for (int i = 0; i < agents; ++i)
        {
            const auto e = consensus::consensus_error(obs.outputs[i], ref);
            cerr.push_back(e.matrix);
            yerr.push_back(e.vector);
            res.push_back(consensus::residual(obs.outputs[i], m_cfg.theta).norm());
            chat.push_back(obs.outputs[i].Chat);
            const Eigen::Map<const Eigen::MatrixXd> X(s.data() + m_layout.X(i), n, n);
            sumX += X;
            sumx += s.segment(m_layout.x(i), n);
            asym = std::max(asym, (X - X.transpose()).cwiseAbs().maxCoeff());
        }
        trace.consensus_error.push_back(std::move(cerr));
        trace.output_error.push_back(std::move(yerr));
        trace.residual_norm.push_back(std::move(res));
        trace.chat.push_back(std::move(chat));
        trace.conservation.push_back(std::max(sumX.cwiseAbs().maxCoeff(), sumx.cwiseAbs().maxCoeff()));
        trace.asymmetry.push_back(asym);

        for (auto& et : trace.estimators)
        {
            const int count = et.kind == EstimatorKind::Centralized ? 1 : agents;
            std::vector<Eigen::VectorXd> thetas;
            std::vector<double> errs, phis, ints;
            for (int i = 0; i < count; ++i)
            {
                const Eigen::VectorXd th = s.segment(m_layout.theta(et.kind, i), n);
                errs.push_back((th - m_cfg.theta).norm());
                thetas.push_back(th);
                if (has_phi(et.kind))
                {
                    phis.push_back(drem_scalar(et.kind, s, i, obs.outputs[i]).phi);
                    ints.push_back(s(m_layout.phi_integral(et.kind, i)));
                }
            }
            et.theta_hat.push_back(std::move(thetas));
            et.error_norm.push_back(std::move(errs));
            if (has_phi(et.kind))
            {
                et.phi.push_back(std::move(phis));
                et.phi_sq_integral.push_back(std::move(ints));
            }
        }
    }

    void check_invariants(const TraceSet& trace) const
    {
        const double conservation = trace.conservation.back();
        const double asym = trace.asymmetry.back();
        std::ostringstream msg;
        msg << "invariant violated at t = " << trace.time.back() << ": ";
        if (conservation >= 1e-8)
        {
            msg << "sum of consensus states drifted to " << conservation;
            throw Error(Errc::Divergence, msg.str());
        }
        if (asym >= 1e-10)
        {
            msg << "consensus state asymmetry " << asym;
            throw Error(Errc::Divergence, msg.str());
        }
        if (m_cfg.noise_sd == 0.0 && m_cfg.epsilon == 0.0)
        {
            const auto& res = trace.residual_norm.back();
            const double worst = *std::max_element(res.begin(), res.end());
            if (worst >= 1e-6)
            {
                msg << "regression residual " << worst << " in an exact run";
                throw Error(Errc::Divergence, msg.str());
            }
        }
    }

private:
    void resample_links()
    {
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        for (int i = 0; i < m_cfg.n_agents; ++i)
            for (int j = i + 1; j < m_cfg.n_agents; ++j)
                m_mask->set(i, j, unit(m_lossRng) >= m_cfg.p_loss);
    }

    const ScenarioConfig& m_cfg;
    signals::RegressorGenerator m_gen;
    std::optional<graph::SwitchingSchedule> m_schedule;
    StateLayout m_layout;
    double m_k;
    std::vector<CounterRng> m_noise;
    std::optional<consensus::LinkMask> m_mask;
    CounterRng m_lossRng{m_cfg.seed, 0, StreamPurpose::PacketLoss};
    double m_nextLossResample{0.0};
};

} // namespace

const EstimatorTrace& TraceSet::estimator(EstimatorKind kind) const
{
    for (const auto& e : estimators)
        if (e.kind == kind)
            return e;
    throw Error(Errc::InvalidArgument, "estimator '" + estimators::to_string(kind) + "' was not simulated");
}

const EstimatorMetrics& Metrics::estimator(EstimatorKind kind) const
{
    for (const auto& e : estimators)
        if (e.kind == kind)
            return e;
    throw Error(Errc::InvalidArgument, "no metrics for estimator '" + estimators::to_string(kind) + "'");
}

// ---------------------------------------------------------------------------
// metrics

double fit_decay_rate(std::span<const double> time,
                      std::span<const double> error,
                      double t_start,
                      double floor,
                      int min_samples)
{
    if (time.size() != error.size())
        throw Error(Errc::BadDimension, "time and error series differ in length");
    double st = 0.0, sy = 0.0, stt = 0.0, sty = 0.0;
    int count = 0;
    for (std::size_t k = 0; k < time.size(); ++k)
    {
        if (time[k] < t_start || !(error[k] > floor))
            continue;
        const double y = std::log(error[k]);
        st += time[k];
        sy += y;
        stt += time[k] * time[k];
        sty += time[k] * y;
        ++count;
    }
    if (count < min_samples || count < 2)
    {
        std::ostringstream msg;
        msg << "decay fit has " << count << " usable samples, needs " << min_samples;
        throw Error(Errc::InsufficientSamples, msg.str());
    }
    const double denom = count * stt - st * st;
    if (denom <= 0.0)
        throw Error(Errc::InsufficientSamples, "decay fit samples span no time");
    return (count * sty - st * sy) / denom;
}

bool ladder_nondecreasing(std::span<const double> values)
{
    for (std::size_t k = 1; k < values.size(); ++k)
        if (values[k] < values[k - 1])
            return false;
    return true;
}

Metrics compute_metrics(const TraceSet& trace, double consensus_ceiling, const MetricsOptions& options)
{
    if (trace.samples() == 0)
        throw Error(Errc::InsufficientSamples, "empty trace");
    const double t_end = trace.time.back();
    const double tail_start = (1.0 - options.tail_fraction) * t_end;
    const double fit_start = options.transient_fraction * t_end;
    const auto samples = trace.samples();
    const int agents = trace.n_agents;

    Metrics m;
    m.consensus_ceiling = consensus_ceiling;
    m.tail_sup_consensus_error.assign(agents, 0.0);
    m.tail_sup_residual.assign(agents, 0.0);
    for (std::size_t k = 0; k < samples; ++k)
    {
        m.max_conservation = std::max(m.max_conservation, trace.conservation[k]);
        m.max_asymmetry = std::max(m.max_asymmetry, trace.asymmetry[k]);
        bool inside = true;
        for (int i = 0; i < agents; ++i)
        {
            m.max_residual = std::max(m.max_residual, trace.residual_norm[k][i]);
            inside = inside && trace.consensus_error[k][i] <= consensus_ceiling;
            if (trace.time[k] >= tail_start)
            {
                m.tail_sup_consensus_error[i] = std::max(m.tail_sup_consensus_error[i], trace.consensus_error[k][i]);
                m.tail_sup_residual[i] = std::max(m.tail_sup_residual[i], trace.residual_norm[k][i]);
            }
        }
        if (inside && !m.transient_end)
            m.transient_end = trace.time[k];
    }

    for (const auto& et : trace.estimators)
    {
        EstimatorMetrics em;
        em.kind = et.kind;
        const auto count = et.error_norm.front().size();
        for (std::size_t i = 0; i < count; ++i)
        {
            std::vector<double> series(samples);
            for (std::size_t k = 0; k < samples; ++k)
                series[k] = et.error_norm[k][i];
            const double initial = series.front();
            double tail = 0.0;
            double increase = 0.0;
            for (std::size_t k = 0; k < samples; ++k)
            {
                if (trace.time[k] >= tail_start)
                    tail = std::max(tail, series[k]);
                if (k > 0)
                    increase = std::max(increase, series[k] - series[k - 1]);
            }
            em.initial_error.push_back(initial);
            em.final_error.push_back(series.back());
            em.tail_sup_error.push_back(tail);
            em.max_error_increase.push_back(initial > 0.0 ? increase / initial : increase);
            double rate = std::numeric_limits<double>::quiet_NaN();
            try
            {
                try
                {
                    rate = fit_decay_rate(
                        trace.time, series, fit_start, options.fit_floor * initial, options.min_fit_samples);
                } catch (const Error& e)
                {
                    // converged to the floor inside the transient: fit the whole record instead
                    if (e.code() != Errc::InsufficientSamples)
                        throw;
                    rate = fit_decay_rate(
                        trace.time, series, trace.time.front(), options.fit_floor * initial, options.min_fit_samples);
                }
            } catch (const Error& e)
            {
                if (e.code() != Errc::InsufficientSamples)
                    throw;
            }
            em.decay_rate.push_back(rate);

            if (!et.phi.empty())
            {
                estimators::L2DivergenceMonitor monitor(
                    {options.monitor_window, options.monitor_floor, true, 3});
                for (std::size_t k = 0; k < samples; ++k)
                    monitor.add(trace.time[k], et.phi[k][i]);
                em.l2_verdict.push_back(estimators::to_string(monitor.verdict()));
            }
        }
        m.estimators.push_back(std::move(em));
    }
    return m;
}

// ---------------------------------------------------------------------------
// driver

RunResult run_scenario(const ScenarioConfig& cfg)
{
    return run_scenario(cfg, analyze_scenario(cfg));
}

RunResult run_scenario(const ScenarioConfig& cfg, const ScenarioConstants& constants)
{
    if (!(constants.k > 0.0))
        throw Error(Errc::Config, "consensus gain must be positive after resolution");
    Simulator sim(cfg, constants.k);

    RunResult result;
    result.constants = constants;
    TraceSet& trace = result.trace;
    trace.n_agents = cfg.n_agents;
    trace.n = cfg.n;
    for (auto kind : cfg.estimators)
        trace.estimators.push_back({kind, {}, {}, {}, {}});

    const long steps = std::lround(cfg.horizon / cfg.h);
    Eigen::VectorXd state = sim.initial_state();
    for (long step = 0;; ++step)
    {
        const double t = static_cast<double>(step) * cfg.h;
        const StepInputs in = sim.prepare(step, t, state);
        if (step % cfg.decimation == 0)
        {
            sim.record(t, state, in, trace);
            if (cfg.check_invariants)
                sim.check_invariants(trace);
        }
        if (step == steps)
            break;
        const Field field = [&sim, &in](double tau, const Eigen::VectorXd& z) { return sim.field(tau, z, in); };
        state = rk4_step(field, state, t, cfg.h);
        sim.guard(state, t + cfg.h);
    }

    result.metrics = compute_metrics(trace, constants.consensus_ceiling, cfg.metrics);
    return result;
}

} // namespace hierest::sim
