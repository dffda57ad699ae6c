#pragma once

#include <hierest/common.hpp>
#include <hierest/consensus.hpp>
#include <hierest/estimators.hpp>
#include <hierest/excitation.hpp>
#include <hierest/graph.hpp>
#include <hierest/signals.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace hierest::sim
{

using Field = std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)>;

/// One classical Runge-Kutta step. Throws Errc::Divergence on a non-finite result.
Eigen::VectorXd rk4_step(const Field& field, const Eigen::VectorXd& state, double t, double h);

using EdgeList = std::vector<std::pair<int, int>>;

struct AnalysisOptions
{
    std::vector<double> windows{0.04, 0.08, 0.16, 0.32, 0.64, 1.28, 2.56};
    double alpha_threshold{1e-8};
    int grid_divisions{200};
    double bound_grid_step{1e-3};
    double inflation{1.05};
    double horizon{0.0}; ///< 0 means the scenario horizon
};

struct MetricsOptions
{
    double transient_fraction{0.3};
    double tail_fraction{0.2};
    /// samples with ||theta_tilde|| below fit_floor * initial error are excluded from the
    /// decay fit (they sit on the floating-point floor)
    double fit_floor{1e-11};
    int min_fit_samples{50};
    double monitor_window{1.0};
    double monitor_floor{1e-3};
};

struct ScenarioConfig
{
    std::string name{"scenario"};
    int n{3};
    int n_agents{10};
    std::vector<int> rows_per_agent; ///< empty: one row per agent
    Eigen::VectorXd theta;

    signals::RegressorFamily family{signals::RegressorFamily::Independent};
    signals::Range coeff_range{0.0, 20.0};
    signals::Range freq_range{0.0, 3.0};
    std::uint64_t seed{1};

    std::vector<EdgeList> topologies;
    std::vector<graph::Segment> segments; ///< explicit schedule; empty means cyclic or constant
    double switch_period{0.0};            ///< > 0: cycle through topologies at this period
    double dwell_min{0.0};                ///< 0: derived from the schedule

    std::optional<double> k;              ///< nullopt: "auto" (safety factor times gain bound)
    double k_safety_factor{1.01};

    Eigen::MatrixXd gamma_ge;          ///< n x n SPD
    Eigen::VectorXd gamma_drem;        ///< diagonal of the DREM gain (filter-bank variant)
    Eigen::VectorXd gamma_drem_simple; ///< diagonal of the DREM gain (simple variant)
    Eigen::MatrixXd gamma_centralized; ///< n x n SPD
    std::vector<estimators::DremFilter> drem_filters;
    std::vector<Eigen::VectorXd> theta0; ///< empty: zeros; one entry: shared; N entries: per agent

    double epsilon{0.0};
    double noise_sd{0.0};
    double p_loss{0.0};
    double loss_interval{0.1};

    std::vector<estimators::EstimatorKind> estimators{estimators::EstimatorKind::GE,
                                                      estimators::EstimatorKind::DREM};

    double h{1e-3};
    double horizon{20.0};
    int decimation{10};
    double divergence_limit{1e12};
    bool check_invariants{false};

    AnalysisOptions analysis;
    MetricsOptions metrics;

    /// Fills defaults that depend on n and throws Errc::Config on invalid settings.
    void validate();
    bool has(estimators::EstimatorKind kind) const;
    std::optional<graph::SwitchingSchedule> build_schedule() const;
    signals::RegressorGenerator build_generator() const;
};

struct ScenarioConstants
{
    std::vector<excitation::PEWitness> alpha_curve;
    bool persistently_exciting{false};
    excitation::ExcitationConstants constants;
    double lambda_g_min{0.0};
    double lambda_max_max{0.0};
    double k_min{0.0};
    double k{0.0};
    double theta_norm{0.0};
    double consensus_ceiling{0.0}; ///< n gamma / (k lambda_G,m), plus the quantization term when eps > 0
    excitation::QuantizedBounds quantized;
    excitation::Feasibility switched;
};

/// Excitation analysis of the stacked regressor plus all gain and feasibility numbers.
ScenarioConstants analyze_scenario(const ScenarioConfig& cfg);

/// k_safety_factor * gain_bound, floored at 1e-6 when the bound is zero. Throws
/// Errc::NotPersistentlyExciting when the analysis found alpha = 0.
double resolve_gain(const ScenarioConfig& cfg, const ScenarioConstants& constants);

struct EstimatorTrace
{
    estimators::EstimatorKind kind;
    std::vector<std::vector<Eigen::VectorXd>> theta_hat; ///< [sample][agent]
    std::vector<std::vector<double>> error_norm;         ///< ||theta_hat - theta||
    std::vector<std::vector<double>> phi;                ///< DREM variants only
    std::vector<std::vector<double>> phi_sq_integral;    ///< DREM variants only
};

struct TraceSet
{
    int n_agents{0};
    int n{0};
    std::vector<double> time;
    std::vector<int> sigma;
    std::vector<std::string> link_mask;                 ///< '1'/'0' per edge of the active topology
    std::vector<std::vector<double>> consensus_error;   ///< ||Chat_i - Cbar||
    std::vector<std::vector<double>> output_error;      ///< ||yhat_i - ybar||
    std::vector<std::vector<double>> residual_norm;     ///< ||yhat_i - Chat_i theta||
    std::vector<std::vector<Eigen::MatrixXd>> chat;     ///< consensus outputs Chat_i (not written to CSV)
    std::vector<double> conservation;                   ///< max |component| of sum X_i and sum x_i
    std::vector<double> asymmetry;                      ///< max_i max |X_i - X_i^T|
    std::vector<EstimatorTrace> estimators;

    const EstimatorTrace& estimator(estimators::EstimatorKind kind) const;
    std::size_t samples() const { return time.size(); }
};

struct EstimatorMetrics
{
    estimators::EstimatorKind kind;
    std::vector<double> initial_error;
    std::vector<double> final_error;
    std::vector<double> tail_sup_error;
    std::vector<double> decay_rate;
    /// largest increase of ||theta_tilde|| between consecutive samples, relative to the initial error
    std::vector<double> max_error_increase;
    std::vector<std::string> l2_verdict; ///< DREM variants only
};

struct Metrics
{
    std::vector<EstimatorMetrics> estimators;
    std::vector<double> tail_sup_consensus_error;
    std::vector<double> tail_sup_residual;
    std::optional<double> transient_end;
    double consensus_ceiling{0.0};
    double max_conservation{0.0};
    double max_asymmetry{0.0};
    double max_residual{0.0};

    const EstimatorMetrics& estimator(estimators::EstimatorKind kind) const;
};

/// Least-squares slope of log(error) against time over samples with t >= t_start and
/// error above `floor`. Throws Errc::InsufficientSamples below min_samples.
double fit_decay_rate(std::span<const double> time,
                      std::span<const double> error,
                      double t_start,
                      double floor,
                      int min_samples = 50);

Metrics compute_metrics(const TraceSet& trace, double consensus_ceiling, const MetricsOptions& options);

/// True when every entry is >= its predecessor.
bool ladder_nondecreasing(std::span<const double> values);

struct RunResult
{
    TraceSet trace;
    Metrics metrics;
    ScenarioConstants constants;
};

RunResult run_scenario(const ScenarioConfig& cfg);

/// run_scenario against precomputed constants (skips the excitation analysis).
RunResult run_scenario(const ScenarioConfig& cfg, const ScenarioConstants& constants);

} // namespace hierest::sim
