#include "cli.hpp"

#include <hierest/scenario.hpp>

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <optional>
#include <map>
#include <sstream>
#include <thread>

namespace hierest::cli
{

namespace
{

using scenario::Json;

int exit_code_for(const Error& e)
{
    switch (e.code())
    {
    case Errc::Divergence:
        return Diverged;
    case Errc::Io:
        return Unwritable;
    default:
        return Validation;
    }
}

struct ConstantFlags
{
    std::optional<int> n;
    std::optional<int> n_agents;
    std::optional<double> beta;
    std::optional<double> gamma;
    std::optional<double> window;
    std::optional<double> alpha;
    std::optional<double> lambda_g;
    std::string config;
    std::vector<std::string> overrides;

    void add_to(CLI::App& app)
    {
        app.add_option("--n", n, "parameter dimension");
        app.add_option("--N", n_agents, "number of agents");
        app.add_option("--beta", beta, "sup of the average regressor norm");
        app.add_option("--gamma", gamma, "sup of the centered surrogate drift norm");
        app.add_option("--T", window, "excitation window");
        app.add_option("--alpha", alpha, "excitation level");
        app.add_option("--lambda-g", lambda_g, "algebraic connectivity (family minimum when switched)");
        app.add_option("-c,--config", config, "scenario JSON; supplies any constant not given as a flag");
        app.add_option("--set", overrides, "dotted-key=value override applied to the scenario");
    }

    bool complete() const { return n && n_agents && beta && gamma && window && alpha && lambda_g; }

    /// Flags win; missing ones come from an excitation analysis of the config.
    std::pair<excitation::ExcitationConstants, double> resolve(std::optional<sim::ScenarioConstants>& analysis) const
    {
        if (!complete())
        {
            if (config.empty())
                throw Error(Errc::Config,
                            "supply --n --N --beta --gamma --T --alpha --lambda-g or a scenario with -c");
            const auto cfg = scenario::load_config(config, overrides);
            analysis = sim::analyze_scenario(cfg);
        }
        excitation::ExcitationConstants c;
        if (analysis)
            c = analysis->constants;
        c.n = n.value_or(c.n);
        c.n_agents = n_agents.value_or(c.n_agents);
        c.beta = beta.value_or(c.beta);
        c.gamma = gamma.value_or(c.gamma);
        c.window = window.value_or(c.window);
        c.alpha = alpha.value_or(c.alpha);
        const double lg = lambda_g ? *lambda_g : (analysis ? analysis->lambda_g_min : 0.0);

        if (c.n <= 0 || c.n_agents <= 0)
            throw Error(Errc::InvalidArgument, "n and N must be positive");
        if (!(c.alpha > 0.0))
            throw Error(Errc::NotPersistentlyExciting, "regressor not persistently exciting (alpha must be > 0)");
        if (!(c.beta > 0.0) || c.gamma < 0.0 || !(c.window > 0.0) || !(lg > 0.0))
            throw Error(Errc::InvalidArgument, "beta, T and lambda-g must be positive and gamma nonnegative");
        return {c, lg};
    }
};

Json inputs_json(const excitation::ExcitationConstants& c, double lambda_g)
{
    return {{"n", c.n},
            {"N", c.n_agents},
            {"beta", c.beta},
            {"gamma", c.gamma},
            {"T", c.window},
            {"alpha", c.alpha},
            {"lambda_g", lambda_g}};
}

struct SweepRun
{
    std::string label;
    Json value;
    std::optional<sim::RunResult> result;
    std::string error;
    int exit_code{Ok};
};

std::vector<std::string> split_values(const std::string& list)
{
    std::vector<std::string> out;
    std::stringstream s(list);
    std::string item;
    while (std::getline(s, item, ','))
    {
        item.erase(0, item.find_first_not_of(" \t"));
        item.erase(item.find_last_not_of(" \t") + 1);
        if (!item.empty())
            out.push_back(item);
    }
    return out;
}

std::string override_key(const std::string& axis)
{
    if (axis == "seed")
        return "generator.seed";
    return axis;
}

double max_of(const std::vector<double>& v)
{
    double m = -std::numeric_limits<double>::infinity();
    for (double x : v)
        m = std::isnan(x) ? x : std::max(m, x);
    return m;
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Distributed parameter estimation over networks with dynamic average consensus", "hiera-est"};
    app.require_subcommand(1);

    std::string config;
    std::string output;
    std::vector<std::string> overrides;

    auto* run = app.add_subcommand("run", "simulate a scenario and write a run directory");
    run->add_option("-c,--config", config, "scenario JSON")->required();
    run->add_option("-o,--output", output, "run directory")->required();
    run->add_option("--set", overrides, "dotted-key=value override");

    auto* analyze = app.add_subcommand("analyze", "excitation analysis and gain/feasibility report");
    analyze->add_option("-c,--config", config, "scenario JSON")->required();
    analyze->add_option("--set", overrides, "dotted-key=value override");

    ConstantFlags gainFlags;
    auto* gain = app.add_subcommand("gain-bound", "smallest admissible consensus gain");
    gainFlags.add_to(*gain);

    ConstantFlags feasFlags;
    double feasK = 0.0;
    double feasEps = 0.0;
    std::optional<double> feasLambdaMax;
    std::optional<double> feasThetaNorm;
    auto* feas = app.add_subcommand("feasibility", "quantized and switched feasibility margins");
    feasFlags.add_to(*feas);
    feas->add_option("--k", feasK, "consensus gain (default: the scenario's resolved gain)");
    feas->add_option("--epsilon", feasEps, "quantization step");
    feas->add_option("--lambda-max", feasLambdaMax, "largest Laplacian eigenvalue (family maximum when switched)");
    feas->add_option("--theta-norm", feasThetaNorm, "norm of the true parameter");

    std::string axis;
    std::string values;
    int jobs = 0;
    bool relativeK = false;
    auto* sweep = app.add_subcommand("sweep", "run a scenario along one axis concurrently");
    sweep->add_option("-c,--config", config, "scenario JSON")->required();
    sweep->add_option("-o,--output", output, "sweep directory")->required();
    sweep->add_option("--axis", axis, "epsilon | seed | k | noise_sd")
        ->required()
        ->check(CLI::IsMember({"epsilon", "seed", "k", "noise_sd"}));
    sweep->add_option("--values", values, "comma-separated axis values")->required();
    sweep->add_option("--set", overrides, "dotted-key=value override");
    sweep->add_option("--jobs", jobs, "concurrent runs (default: hardware threads)");
    sweep->add_flag("--k-relative", relativeK, "k values are multiples of the analyzed k_min");

    try
    {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e)
    {
        out << app.help();
        return Ok;
    } catch (const CLI::CallForAllHelp& e)
    {
        out << app.help("", CLI::AppFormatMode::All);
        return Ok;
    } catch (const CLI::ParseError& e)
    {
        err << "error: " << e.what() << "\n";
        return Validation;
    }

    try
    {
        if (run->parsed())
        {
            const auto cfg = scenario::load_config(config, overrides);
            const auto result = sim::run_scenario(cfg);
            scenario::write_run_directory(output, cfg, result);
            out << Json{{"output", output},
                        {"samples", result.trace.samples()},
                        {"k", result.constants.k}}
                       .dump()
                << "\n";
            return Ok;
        }
        if (analyze->parsed())
        {
            const auto cfg = scenario::load_config(config, overrides);
            out << scenario::constants_to_json(sim::analyze_scenario(cfg)).dump(2) << "\n";
            return Ok;
        }
        if (gain->parsed())
        {
            std::optional<sim::ScenarioConstants> analysis;
            const auto [c, lg] = gainFlags.resolve(analysis);
            out << Json{{"k_min", excitation::gain_bound(c, lg)}, {"inputs", inputs_json(c, lg)}}.dump(2) << "\n";
            return Ok;
        }
        if (feas->parsed())
        {
            std::optional<sim::ScenarioConstants> analysis;
            const auto [c, lg] = feasFlags.resolve(analysis);
            const double k = feasK > 0.0 ? feasK : (analysis ? analysis->k : 0.0);
            const double lmax = feasLambdaMax ? *feasLambdaMax : (analysis ? analysis->lambda_max_max : 0.0);
            const double thetaNorm = feasThetaNorm ? *feasThetaNorm : (analysis ? analysis->theta_norm : 0.0);
            if (!(k > 0.0) || !(lmax > 0.0) || feasEps < 0.0 || thetaNorm < 0.0)
                throw Error(Errc::InvalidArgument, "k and lambda-max must be positive, epsilon and theta-norm >= 0");
            const auto q = excitation::quantized_bounds(c, k, lg, lmax, feasEps, thetaNorm);
            const auto s = excitation::switched_feasibility(c, k, lg, lmax, feasEps);
            Json inputs = inputs_json(c, lg);
            inputs["k"] = k;
            inputs["epsilon"] = feasEps;
            inputs["lambda_max"] = lmax;
            inputs["theta_norm"] = thetaNorm;
            out << Json{{"inputs", inputs},
                        {"k_min", excitation::gain_bound(c, lg)},
                        {"quantized",
                         {{"feasible", q.feasible}, {"margin", q.margin}, {"b_eps", q.b_eps}, {"r_eps", q.r_eps}}},
                        {"switched", {{"feasible", s.feasible}, {"margin", s.margin}}}}
                       .dump(2)
                << "\n";
            return Ok;
        }
        if (sweep->parsed())
        {
            const auto list = split_values(values);
            if (list.empty())
                throw Error(Errc::Config, "sweep needs at least one axis value");
            // validate the base scenario before fanning out
            const auto base = scenario::load_config(config, overrides);
            double kScale = 1.0;
            if (relativeK)
            {
                if (axis != "k")
                    throw Error(Errc::Config, "--k-relative only applies to the k axis");
                kScale = sim::analyze_scenario(base).k_min;
                if (!std::isfinite(kScale))
                    throw Error(Errc::Config, "k_min is undefined for this scenario");
            }

            std::vector<SweepRun> runs;
            for (const auto& v : list)
            {
                SweepRun r;
                r.label = axis + "_" + v;
                r.value = Json::parse(v, nullptr, false);
                if (r.value.is_discarded() || !r.value.is_number())
                    throw Error(Errc::Config, "sweep value '" + v + "' is not a number");
                runs.push_back(std::move(r));
            }
            std::vector<sim::ScenarioConfig> configs;
            for (const auto& r : runs)
            {
                auto ov = overrides;
                Json value = r.value;
                if (relativeK)
                    value = r.value.get<double>() * kScale;
                ov.push_back(override_key(axis) + "=" + value.dump());
                configs.push_back(scenario::load_config(config, ov));
            }

            std::error_code ec;
            std::filesystem::create_directories(output, ec);
            if (ec || !std::filesystem::is_directory(output))
                throw Error(Errc::Io, "cannot create output directory '" + output + "'");

            const unsigned workers = std::max(
                1u, std::min<unsigned>(jobs > 0 ? jobs : std::max(1u, std::thread::hardware_concurrency()),
                                       static_cast<unsigned>(runs.size())));
            std::atomic<std::size_t> next{0};
            auto worker = [&]() {
                for (std::size_t idx = next++; idx < runs.size(); idx = next++)
                {
                    auto& r = runs[idx];
                    try
                    {
                        r.result = sim::run_scenario(configs[idx]);
                        scenario::write_run_directory(std::filesystem::path(output) / r.label, configs[idx], *r.result);
                    } catch (const Error& e)
                    {
                        r.error = e.what();
                        r.exit_code = exit_code_for(e);
                    } catch (const std::exception& e)
                    {
                        r.error = e.what();
                        r.exit_code = Validation;
                    }
                }
            };
            std::vector<std::thread> pool;
            for (unsigned w = 0; w < workers; ++w)
                pool.emplace_back(worker);
            for (auto& t : pool)
                t.join();

            std::ostringstream csv;
            csv << std::setprecision(17);
            csv << "axis,value,estimator,status,tail_sup_error,max_decay_rate,final_error_max,tail_sup_consensus_error\n";
            Json summary;
            summary["axis"] = axis;
            Json ladder = Json::object();
            std::map<std::string, std::vector<double>> tails;
            int worst = Ok;
            for (std::size_t idx = 0; idx < runs.size(); ++idx)
            {
                const auto& r = runs[idx];
                const double v = relativeK ? r.value.get<double>() * kScale : r.value.get<double>();
                if (!r.result)
                {
                    worst = std::max(worst, r.exit_code);
                    for (auto kind : configs[idx].estimators)
                        csv << axis << ',' << v << ',' << estimators::to_string(kind) << ",failed,,,,\n";
                    summary["failures"].push_back({{"value", v}, {"error", r.error}});
                    continue;
                }
                const auto& m = r.result->metrics;
                for (const auto& em : m.estimators)
                {
                    const double tail = max_of(em.tail_sup_error);
                    tails[estimators::to_string(em.kind)].push_back(tail);
                    csv << axis << ',' << v << ',' << estimators::to_string(em.kind) << ",ok," << tail << ','
                        << max_of(em.decay_rate) << ',' << max_of(em.final_error) << ','
                        << max_of(m.tail_sup_consensus_error) << '\n';
                }
            }
            for (const auto& [name, t] : tails)
                ladder[name] = sim::ladder_nondecreasing(t);
            summary["tail_sup_nondecreasing"] = ladder;
            summary["runs"] = runs.size();
            std::ofstream file(std::filesystem::path(output) / "summary.csv");
            if (!(file << csv.str()))
                throw Error(Errc::Io, "cannot write the sweep summary");
            out << summary.dump(2) << "\n";
            return worst;
        }
    } catch (const Error& e)
    {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e)
    {
        err << "error: " << e.what() << "\n";
        return Validation;
    }
    return Validation;
}

} // namespace hierest::cli
