#include <hierest/excitation.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace hierest::excitation
{

PEWitness pe_level(const MatrixSignal& signal, double window, double horizon, double grid_step)
{
    if (!(window > 0.0) || !(grid_step > 0.0))
        throw Error(Errc::InvalidArgument, "PE window and grid step must be positive");
    if (horizon < window * (1.0 - 1e-12))
        throw Error(Errc::InvalidArgument, "PE horizon must be at least one window long");
    if (grid_step > window / 10.0 * (1.0 + 1e-12))
        throw Error(Errc::InvalidArgument, "PE grid too coarse: grid_step must be <= window / 10");

    // snap the step so that a window spans an integer number of grid intervals
    const auto steps_per_window = static_cast<long>(std::llround(window / grid_step));
    const double h = window / static_cast<double>(steps_per_window);
    const auto total_steps = static_cast<long>(std::floor(horizon / h + 1e-9));

    const Eigen::MatrixXd f0 = signal(0.0);
    const auto n = f0.cols();

    // prefix[k] = trapezoid integral of F^T F over [0, k h]
    std::vector<Eigen::MatrixXd> prefix;
    prefix.reserve(static_cast<std::size_t>(total_steps + 1));
    prefix.push_back(Eigen::MatrixXd::Zero(n, n));
    Eigen::MatrixXd previous = f0.transpose() * f0;
    for (long k = 1; k <= total_steps; ++k)
    {
        const Eigen::MatrixXd f = signal(static_cast<double>(k) * h);
        Eigen::MatrixXd gram = f.transpose() * f;
        prefix.push_back(prefix.back() + 0.5 * h * (previous + gram));
        previous = std::move(gram);
    }

    PEWitness witness;
    witness.window = window;
    witness.grid_step = h;
    witness.horizon = horizon;
    double alpha = std::numeric_limits<double>::infinity();
    for (long s = 0; s + steps_per_window <= total_steps; ++s)
    {
        Eigen::MatrixXd integral = prefix[s + steps_per_window] - prefix[s];
        integral = 0.5 * (integral + integral.transpose()).eval();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(integral, Eigen::EigenvaluesOnly);
        const double lmin = eig.eigenvalues()(0);
        witness.min_eig_trace.push_back(lmin);
        alpha = std::min(alpha, lmin);
    }
    witness.alpha = std::max(0.0, alpha);
    return witness;
}

std::vector<PEWitness> pe_curve(const MatrixSignal& signal,
                                std::span<const double> windows,
                                double horizon,
                                int grid_divisions)
{
    if (grid_divisions < 10)
        throw Error(Errc::InvalidArgument, "PE grid needs at least 10 divisions per window");
    std::vector<PEWitness> curve;
    for (double window : windows)
    {
        PEWitness w = pe_level(signal, window, horizon, window / grid_divisions);
        // the per-window trace is large and not needed for the curve
        w.min_eig_trace.clear();
        w.min_eig_trace.shrink_to_fit();
        curve.push_back(std::move(w));
    }
    return curve;
}

std::optional<PEWitness> select_window(std::span<const PEWitness> curve, double alpha_threshold)
{
    std::optional<PEWitness> best;
    for (const auto& w : curve)
        if (w.alpha > alpha_threshold && (!best || w.window < best->window))
            best = w;
    return best;
}

double consensus_drift_norm(const signals::RegressorGenerator& gen, double t)
{
    const int n = gen.n_params();
    const int agents = gen.n_agents();
    Eigen::MatrixXd drift(static_cast<Eigen::Index>(agents) * n, n);
    Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < agents; ++i)
    {
        const Eigen::MatrixXd c = gen.evaluate(i, t);
        const Eigen::MatrixXd dc = gen.derivative(i, t);
        const Eigen::MatrixXd dcp = dc.transpose() * c + c.transpose() * dc;
        drift.middleRows(static_cast<Eigen::Index>(i) * n, n) = dcp;
        mean += dcp;
    }
    mean /= agents;
    for (int i = 0; i < agents; ++i)
        drift.middleRows(static_cast<Eigen::Index>(i) * n, n) -= mean;
    return induced_norm(drift);
}

AssumptionBounds estimate_assumption_bounds(const signals::RegressorGenerator& gen,
                                            double horizon,
                                            double grid_step,
                                            double inflation)
{
    if (!(grid_step > 0.0) || horizon < 0.0)
        throw Error(Errc::InvalidArgument, "bound estimation needs a positive grid and horizon >= 0");
    if (inflation < 1.0)
        throw Error(Errc::InvalidArgument, "inflation factor must be >= 1");

    const int n = gen.n_params();
    const auto steps = static_cast<long>(std::floor(horizon / grid_step + 1e-9));
    AssumptionBounds bounds;
    for (long k = 0; k <= steps; ++k)
    {
        const double t = static_cast<double>(k) * grid_step;
        Eigen::MatrixXd cbar = Eigen::MatrixXd::Zero(n, n);
        for (int i = 0; i < gen.n_agents(); ++i)
        {
            const Eigen::MatrixXd c = gen.evaluate(i, t);
            cbar += c.transpose() * c;
        }
        cbar /= gen.n_agents();
        bounds.beta = std::max(bounds.beta, symmetric_induced_norm(cbar));
        bounds.gamma = std::max(bounds.gamma, consensus_drift_norm(gen, t));
    }
    bounds.beta *= inflation;
    bounds.gamma *= inflation;
    return bounds;
}

double gain_bound(const ExcitationConstants& c, double lambda_g)
{
    if (!(lambda_g > 0.0))
        throw Error(Errc::InvalidArgument, "algebraic connectivity must be positive");
    if (!(c.alpha > 0.0))
        throw Error(Errc::NotPersistentlyExciting, "regressor not persistently exciting (alpha = 0)");
    if (!(c.window > 0.0) || c.n <= 0 || c.n_agents <= 0 || c.beta < 0.0 || c.gamma < 0.0)
        throw Error(Errc::InvalidArgument, "excitation constants must be positive");
    const double n = c.n;
    const double agents = c.n_agents;
    return 2.0 * n * agents * agents * c.beta * c.gamma * c.window * c.window / (lambda_g * c.alpha * c.alpha);
}

double avg_gram_pe_level(double alpha, double window, int n_agents)
{
    if (!(window > 0.0) || n_agents <= 0)
        throw Error(Errc::InvalidArgument, "window and N must be positive");
    const double agents = n_agents;
    return alpha * alpha / (window * agents * agents);
}

double consensus_error_bound(int n, double gamma, double k, double lambda_g)
{
    if (!(k > 0.0) || !(lambda_g > 0.0))
        throw Error(Errc::InvalidArgument, "consensus gain and algebraic connectivity must be positive");
    return n * gamma / (k * lambda_g);
}

namespace
{

double feasibility_margin(const ExcitationConstants& c,
                          double k,
                          double lambda_g,
                          double lambda_max,
                          double epsilon)
{
    const double n = c.n;
    const double agents = c.n_agents;
    const double lhs = avg_gram_pe_level(c.alpha, c.window, c.n_agents);
    const double rhs = 2.0 * c.beta * c.window
                       * (n * c.gamma / (k * lambda_g)
                          + n * n * std::sqrt(agents) * lambda_max * epsilon / lambda_g);
    return lhs - rhs;
}

void check_quantized_inputs(double k, double lambda_g, double epsilon)
{
    if (!(lambda_g > 0.0))
        throw Error(Errc::InvalidArgument, "algebraic connectivity must be positive");
    if (!(k > 0.0))
        throw Error(Errc::InvalidArgument, "consensus gain must be positive");
    if (epsilon < 0.0)
        throw Error(Errc::InvalidArgument, "quantization step must be >= 0");
}

} // namespace

QuantizedBounds quantized_bounds(const ExcitationConstants& c,
                                 double k,
                                 double lambda_g,
                                 double lambda_max,
                                 double epsilon,
                                 double theta_norm)
{
    check_quantized_inputs(k, lambda_g, epsilon);
    const double n = c.n;
    const double agents = c.n_agents;

    QuantizedBounds q;
    q.margin = feasibility_margin(c, k, lambda_g, lambda_max, epsilon);
    q.feasible = q.margin > 0.0;
    q.b_eps = consensus_error_bound(c.n, c.gamma, k, lambda_g)
              + epsilon * n * n * std::sqrt(agents) * lambda_max / lambda_g;
    q.r_eps = epsilon * std::sqrt(n * agents) * lambda_max * (std::sqrt(n) * theta_norm + 1.0) / lambda_g;
    return q;
}

Feasibility switched_feasibility(const ExcitationConstants& c,
                                 double k,
                                 double lambda_g_min,
                                 double lambda_max_of_l,
                                 double epsilon)
{
    check_quantized_inputs(k, lambda_g_min, epsilon);
    Feasibility f;
    f.margin = feasibility_margin(c, k, lambda_g_min, lambda_max_of_l, epsilon);
    f.feasible = f.margin > 0.0;
    return f;
}

} // namespace hierest::excitation
