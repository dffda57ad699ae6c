#pragma once

#include <hierest/common.hpp>
#include <hierest/signals.hpp>

#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace hierest::excitation
{

using MatrixSignal = std::function<Eigen::MatrixXd(double)>;

/// Sliding-window persistence-of-excitation witness for a signal F(t).
struct PEWitness
{
    double alpha{0.0}; ///< min over windows of lambda_min(int F^T F), clamped at 0
    double window{0.0};
    double grid_step{0.0};
    double horizon{0.0};
    std::vector<double> min_eig_trace; ///< lambda_min of each window's Gram integral (unclamped)
};

/// Slides a window of length `window` over [0, horizon] at grid resolution and integrates
/// F^T F with the composite trapezoid rule. Requires grid_step <= window / 10 and
/// horizon >= window.
PEWitness pe_level(const MatrixSignal& signal, double window, double horizon, double grid_step);

/// alpha(T) over a grid of window lengths, each integrated at T / grid_divisions.
std::vector<PEWitness> pe_curve(const MatrixSignal& signal,
                                std::span<const double> windows,
                                double horizon,
                                int grid_divisions = 200);

/// Smallest window whose alpha exceeds the threshold.
std::optional<PEWitness> select_window(std::span<const PEWitness> curve, double alpha_threshold);

struct AssumptionBounds
{
    double beta{0.0};  ///< sup ||Cbar(t)||
    double gamma{0.0}; ///< sup ||(H kron I_n) dC'/dt||
};

/// Sampled suprema over [0, horizon] at grid_step, multiplied by `inflation` since the
/// grid can only underestimate a supremum.
AssumptionBounds estimate_assumption_bounds(const signals::RegressorGenerator& gen,
                                            double horizon,
                                            double grid_step,
                                            double inflation = 1.05);

/// ||(H kron I_n) dC'/dt|| at a single instant.
double consensus_drift_norm(const signals::RegressorGenerator& gen, double t);

struct ExcitationConstants
{
    double beta{0.0};
    double gamma{0.0};
    double alpha{0.0};
    double window{0.0}; ///< T
    int n{0};
    int n_agents{0};
};

/// Smallest admissible consensus gain 2 n N^2 beta gamma T^2 / (lambda_G alpha^2).
double gain_bound(const ExcitationConstants& c, double lambda_g);

/// alpha^2 / (T N^2): guaranteed excitation level of Cbar(t)^2.
double avg_gram_pe_level(double alpha, double window, int n_agents);

/// n gamma / (k lambda_G): asymptotic ceiling on ||Ctilde_i||.
double consensus_error_bound(int n, double gamma, double k, double lambda_g);

struct QuantizedBounds
{
    bool feasible{false};
    double margin{0.0}; ///< lhs - rhs of the feasibility inequality
    double b_eps{0.0};  ///< ultimate bound on ||Ctilde_i||
    double r_eps{0.0};  ///< ultimate bound on the regression residual ||r_i||
};

QuantizedBounds quantized_bounds(const ExcitationConstants& c,
                                 double k,
                                 double lambda_g,
                                 double lambda_max,
                                 double epsilon,
                                 double theta_norm);

struct Feasibility
{
    bool feasible{false};
    double margin{0.0};
};

/// Family-wide version: lambda_g_min in the denominators, max lambda_max(L) in the
/// quantization term.
Feasibility switched_feasibility(const ExcitationConstants& c,
                                 double k,
                                 double lambda_g_min,
                                 double lambda_max_of_l,
                                 double epsilon);

} // namespace hierest::excitation
