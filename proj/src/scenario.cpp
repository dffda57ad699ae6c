#include <hierest/scenario.hpp>

#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace hierest::scenario
{

using estimators::EstimatorKind;

namespace
{

[[noreturn]] void fail(const std::string& what)
{
    throw Error(Errc::Config, what);
}

/// Object view that remembers which keys were consumed so leftovers can be rejected.
class Reader
{
public:
    Reader(const Json& obj, std::string path)
        : m_obj(obj)
        , m_path(std::move(path))
    {
        if (!m_obj.is_object())
            fail(where() + " must be an object");
    }

    bool has(const std::string& key) const { return m_obj.contains(key); }

    const Json& at(const std::string& key)
    {
        m_seen.insert(key);
        return m_obj.at(key);
    }

    std::string child(const std::string& key) const { return m_path.empty() ? key : m_path + "." + key; }

    double number(const std::string& key, double fallback)
    {
        if (!has(key))
            return fallback;
        const auto& v = at(key);
        if (!v.is_number())
            fail(child(key) + " must be a number");
        return v.get<double>();
    }

    int integer(const std::string& key, int fallback)
    {
        if (!has(key))
            return fallback;
        const auto& v = at(key);
        if (!v.is_number_integer())
            fail(child(key) + " must be an integer");
        return v.get<int>();
    }

    bool boolean(const std::string& key, bool fallback)
    {
        if (!has(key))
            return fallback;
        const auto& v = at(key);
        if (!v.is_boolean())
            fail(child(key) + " must be true or false");
        return v.get<bool>();
    }

    std::string string(const std::string& key, const std::string& fallback)
    {
        if (!has(key))
            return fallback;
        const auto& v = at(key);
        if (!v.is_string())
            fail(child(key) + " must be a string");
        return v.get<std::string>();
    }

    void finish() const
    {
        for (auto it = m_obj.begin(); it != m_obj.end(); ++it)
            if (!m_seen.count(it.key()))
                fail("unknown key '" + child(it.key()) + "'");
    }

private:
    std::string where() const { return m_path.empty() ? "configuration" : "'" + m_path + "'"; }

    const Json& m_obj;
    std::string m_path;
    std::set<std::string> m_seen;
};

std::vector<double> number_list(const Json& v, const std::string& path)
{
    if (!v.is_array())
        fail(path + " must be a list of numbers");
    std::vector<double> out;
    for (const auto& e : v)
    {
        if (!e.is_number())
            fail(path + " must be a list of numbers");
        out.push_back(e.get<double>());
    }
    return out;
}

Eigen::VectorXd vector_of(const Json& v, const std::string& path)
{
    const auto list = number_list(v, path);
    return Eigen::Map<const Eigen::VectorXd>(list.data(), static_cast<Eigen::Index>(list.size()));
}

signals::Range range_of(const Json& v, const std::string& path)
{
    const auto list = number_list(v, path);
    if (list.size() != 2)
        fail(path + " must be [lo, hi]");
    return {list[0], list[1]};
}

/// number -> g I, list -> diagonal, list of lists -> full matrix
Eigen::MatrixXd gain_matrix(const Json& v, int n, const std::string& path)
{
    if (v.is_number())
        return v.get<double>() * Eigen::MatrixXd::Identity(n, n);
    if (!v.is_array() || v.empty())
        fail(path + " must be a number, a diagonal list, or a matrix");
    if (v.front().is_number())
        return vector_of(v, path).asDiagonal();
    Eigen::MatrixXd m(static_cast<Eigen::Index>(v.size()), n);
    for (std::size_t r = 0; r < v.size(); ++r)
    {
        const auto row = number_list(v[r], path);
        if (static_cast<int>(row.size()) != n)
            fail(path + " rows must have n entries");
        for (int c = 0; c < n; ++c)
            m(static_cast<Eigen::Index>(r), c) = row[c];
    }
    return m;
}

/// DREM gains must be diagonal; a full matrix is accepted only if its off-diagonal part is zero.
Eigen::VectorXd gain_diagonal(const Json& v, int n, const std::string& path)
{
    const Eigen::MatrixXd m = gain_matrix(v, n, path);
    if (m.rows() != n)
        fail(path + " must be n x n");
    Eigen::MatrixXd off = m;
    off.diagonal().setZero();
    if (off.cwiseAbs().maxCoeff() != 0.0)
        fail(path + " must be diagonal");
    return m.diagonal();
}

signals::RegressorFamily family_of(const std::string& name)
{
    if (name == "independent")
        return signals::RegressorFamily::Independent;
    if (name == "fixed_direction")
        return signals::RegressorFamily::FixedDirection;
    fail("generator.family must be 'independent' or 'fixed_direction'");
}

std::string family_name(signals::RegressorFamily f)
{
    return f == signals::RegressorFamily::Independent ? "independent" : "fixed_direction";
}

Json matrix_json(const Eigen::MatrixXd& m)
{
    Json rows = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r)
    {
        Json row = Json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            row.push_back(m(r, c));
        rows.push_back(row);
    }
    return rows;
}

Json vector_json(const Eigen::VectorXd& v)
{
    return Json(std::vector<double>(v.data(), v.data() + v.size()));
}

Json finite_or_null(double v)
{
    return std::isfinite(v) ? Json(v) : Json(nullptr);
}

} // namespace

void apply_override(Json& doc, const std::string& assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        fail("override '" + assignment + "' is not of the form key=value");
    const std::string key = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);

    Json value = Json::parse(raw, nullptr, false);
    if (value.is_discarded())
        value = raw;

    Json* node = &doc;
    std::stringstream parts(key);
    std::string part;
    std::vector<std::string> path;
    while (std::getline(parts, part, '.'))
    {
        if (part.empty())
            fail("override key '" + key + "' has an empty component");
        path.push_back(part);
    }
    for (std::size_t i = 0; i + 1 < path.size(); ++i)
    {
        if (!node->is_object())
            fail("override key '" + key + "' descends into a non-object");
        node = &(*node)[path[i]];
        if (node->is_null())
            *node = Json::object();
    }
    if (!node->is_object())
        fail("override key '" + key + "' descends into a non-object");
    (*node)[path.back()] = value;
}

sim::ScenarioConfig parse_config(const Json& doc)
{
    sim::ScenarioConfig cfg;
    Reader top(doc, "");
    cfg.name = top.string("name", cfg.name);
    cfg.n = top.integer("n", cfg.n);
    cfg.n_agents = top.integer("N", cfg.n_agents);
    if (top.has("rows_per_agent"))
    {
        const auto& v = top.at("rows_per_agent");
        if (!v.is_array())
            fail("rows_per_agent must be a list of integers");
        for (const auto& e : v)
        {
            if (!e.is_number_integer())
                fail("rows_per_agent must be a list of integers");
            cfg.rows_per_agent.push_back(e.get<int>());
        }
    }
    if (!top.has("theta"))
        fail("missing required key 'theta'");
    cfg.theta = vector_of(top.at("theta"), "theta");

    if (top.has("generator"))
    {
        Reader g(top.at("generator"), "generator");
        cfg.family = family_of(g.string("family", family_name(cfg.family)));
        if (g.has("coeff_range"))
            cfg.coeff_range = range_of(g.at("coeff_range"), "generator.coeff_range");
        if (g.has("freq_range"))
            cfg.freq_range = range_of(g.at("freq_range"), "generator.freq_range");
        if (g.has("seed"))
        {
            const auto& s = g.at("seed");
            if (!s.is_number_unsigned())
                fail("generator.seed must be a nonnegative integer");
            cfg.seed = s.get<std::uint64_t>();
        }
        g.finish();
    }

    if (top.has("network"))
    {
        Reader net(top.at("network"), "network");
        if (net.has("topologies"))
        {
            const auto& list = net.at("topologies");
            if (!list.is_array())
                fail("network.topologies must be a list of edge lists");
            for (const auto& edges : list)
            {
                if (!edges.is_array())
                    fail("network.topologies must be a list of edge lists");
                sim::EdgeList el;
                for (const auto& e : edges)
                {
                    if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number_integer())
                        fail("each edge must be a pair of agent indices");
                    el.emplace_back(e[0].get<int>(), e[1].get<int>());
                }
                cfg.topologies.push_back(std::move(el));
            }
        }
        if (net.has("segments"))
        {
            const auto& list = net.at("segments");
            if (!list.is_array())
                fail("network.segments must be a list");
            for (const auto& s : list)
            {
                Reader seg(s, "network.segments[]");
                graph::Segment g{seg.number("start", 0.0), seg.integer("topology", 0)};
                seg.finish();
                cfg.segments.push_back(g);
            }
        }
        cfg.switch_period = net.number("switch_period", cfg.switch_period);
        cfg.dwell_min = net.number("dwell_min", cfg.dwell_min);
        net.finish();
    }

    if (top.has("k"))
    {
        const auto& k = top.at("k");
        if (k.is_string() && k.get<std::string>() == "auto")
            cfg.k.reset();
        else if (k.is_number())
            cfg.k = k.get<double>();
        else
            fail("k must be a number or \"auto\"");
    }
    cfg.k_safety_factor = top.number("k_safety_factor", cfg.k_safety_factor);

    if (cfg.n <= 0)
        fail("n must be positive");
    if (top.has("gains"))
    {
        Reader g(top.at("gains"), "gains");
        if (g.has("ge"))
            cfg.gamma_ge = gain_matrix(g.at("ge"), cfg.n, "gains.ge");
        if (g.has("centralized"))
            cfg.gamma_centralized = gain_matrix(g.at("centralized"), cfg.n, "gains.centralized");
        if (g.has("drem"))
            cfg.gamma_drem = gain_diagonal(g.at("drem"), cfg.n, "gains.drem");
        if (g.has("drem_simple"))
            cfg.gamma_drem_simple = gain_diagonal(g.at("drem_simple"), cfg.n, "gains.drem_simple");
        g.finish();
    }
    if (top.has("drem_filters"))
    {
        const auto& list = top.at("drem_filters");
        if (!list.is_array())
            fail("drem_filters must be a list");
        for (const auto& f : list)
        {
            Reader r(f, "drem_filters[]");
            estimators::DremFilter filter{r.number("alpha", 1.0), r.number("beta", 1.0)};
            r.finish();
            cfg.drem_filters.push_back(filter);
        }
    }
    if (top.has("theta0"))
    {
        const auto& v = top.at("theta0");
        if (v.is_array() && !v.empty() && v.front().is_array())
            for (const auto& e : v)
                cfg.theta0.push_back(vector_of(e, "theta0"));
        else
            cfg.theta0.push_back(vector_of(v, "theta0"));
    }

    cfg.epsilon = top.number("epsilon", cfg.epsilon);
    cfg.noise_sd = top.number("noise_sd", cfg.noise_sd);
    cfg.p_loss = top.number("p_loss", cfg.p_loss);
    cfg.loss_interval = top.number("loss_interval", cfg.loss_interval);

    if (top.has("estimators"))
    {
        const auto& list = top.at("estimators");
        if (!list.is_array())
            fail("estimators must be a list of names");
        cfg.estimators.clear();
        for (const auto& e : list)
        {
            if (!e.is_string())
                fail("estimators must be a list of names");
            cfg.estimators.push_back(estimators::estimator_from_string(e.get<std::string>()));
        }
    }

    if (top.has("integrator"))
    {
        Reader r(top.at("integrator"), "integrator");
        cfg.h = r.number("h", cfg.h);
        cfg.horizon = r.number("horizon", cfg.horizon);
        cfg.decimation = r.integer("decimation", cfg.decimation);
        cfg.divergence_limit = r.number("divergence_limit", cfg.divergence_limit);
        r.finish();
    }
    cfg.check_invariants = top.boolean("check_invariants", cfg.check_invariants);

    if (top.has("analysis"))
    {
        Reader r(top.at("analysis"), "analysis");
        if (r.has("windows"))
            cfg.analysis.windows = number_list(r.at("windows"), "analysis.windows");
        cfg.analysis.alpha_threshold = r.number("alpha_threshold", cfg.analysis.alpha_threshold);
        cfg.analysis.grid_divisions = r.integer("grid_divisions", cfg.analysis.grid_divisions);
        cfg.analysis.bound_grid_step = r.number("bound_grid_step", cfg.analysis.bound_grid_step);
        cfg.analysis.inflation = r.number("inflation", cfg.analysis.inflation);
        cfg.analysis.horizon = r.number("horizon", cfg.analysis.horizon);
        r.finish();
    }
    if (top.has("metrics"))
    {
        Reader r(top.at("metrics"), "metrics");
        cfg.metrics.transient_fraction = r.number("transient_fraction", cfg.metrics.transient_fraction);
        cfg.metrics.tail_fraction = r.number("tail_fraction", cfg.metrics.tail_fraction);
        cfg.metrics.fit_floor = r.number("fit_floor", cfg.metrics.fit_floor);
        cfg.metrics.min_fit_samples = r.integer("min_fit_samples", cfg.metrics.min_fit_samples);
        cfg.metrics.monitor_window = r.number("monitor_window", cfg.metrics.monitor_window);
        cfg.metrics.monitor_floor = r.number("monitor_floor", cfg.metrics.monitor_floor);
        r.finish();
    }
    top.finish();

    cfg.validate();
    return cfg;
}

sim::ScenarioConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides)
{
    std::ifstream in(path);
    if (!in)
        fail("cannot open configuration file '" + path.string() + "'");
    Json doc = Json::parse(in, nullptr, false);
    if (doc.is_discarded())
        fail("configuration file '" + path.string() + "' is not valid JSON");
    for (const auto& o : overrides)
        apply_override(doc, o);
    return parse_config(doc);
}

Json to_json(const sim::ScenarioConfig& cfg)
{
    Json j;
    j["name"] = cfg.name;
    j["n"] = cfg.n;
    j["N"] = cfg.n_agents;
    if (!cfg.rows_per_agent.empty())
        j["rows_per_agent"] = cfg.rows_per_agent;
    j["theta"] = vector_json(cfg.theta);
    j["generator"] = {{"family", family_name(cfg.family)},
                      {"coeff_range", {cfg.coeff_range.lo, cfg.coeff_range.hi}},
                      {"freq_range", {cfg.freq_range.lo, cfg.freq_range.hi}},
                      {"seed", cfg.seed}};

    Json net = Json::object();
    Json topos = Json::array();
    for (const auto& edges : cfg.topologies)
    {
        Json el = Json::array();
        for (const auto& [a, b] : edges)
            el.push_back({a, b});
        topos.push_back(el);
    }
    net["topologies"] = topos;
    if (!cfg.segments.empty())
    {
        Json segs = Json::array();
        for (const auto& s : cfg.segments)
            segs.push_back({{"start", s.start}, {"topology", s.topology}});
        net["segments"] = segs;
    }
    net["switch_period"] = cfg.switch_period;
    net["dwell_min"] = cfg.dwell_min;
    j["network"] = net;

    if (cfg.k)
        j["k"] = *cfg.k;
    else
        j["k"] = "auto";
    j["k_safety_factor"] = cfg.k_safety_factor;
    j["gains"] = {{"ge", matrix_json(cfg.gamma_ge)},
                  {"centralized", matrix_json(cfg.gamma_centralized)},
                  {"drem", vector_json(cfg.gamma_drem)},
                  {"drem_simple", vector_json(cfg.gamma_drem_simple)}};
    Json filters = Json::array();
    for (const auto& f : cfg.drem_filters)
        filters.push_back({{"alpha", f.alpha}, {"beta", f.beta}});
    j["drem_filters"] = filters;
    if (!cfg.theta0.empty())
    {
        Json t0 = Json::array();
        for (const auto& v : cfg.theta0)
            t0.push_back(vector_json(v));
        j["theta0"] = t0;
    }
    j["epsilon"] = cfg.epsilon;
    j["noise_sd"] = cfg.noise_sd;
    j["p_loss"] = cfg.p_loss;
    j["loss_interval"] = cfg.loss_interval;
    Json est = Json::array();
    for (auto kind : cfg.estimators)
        est.push_back(estimators::to_string(kind));
    j["estimators"] = est;
    j["integrator"] = {{"h", cfg.h},
                       {"horizon", cfg.horizon},
                       {"decimation", cfg.decimation},
                       {"divergence_limit", cfg.divergence_limit}};
    j["check_invariants"] = cfg.check_invariants;
    j["analysis"] = {{"windows", cfg.analysis.windows},
                     {"alpha_threshold", cfg.analysis.alpha_threshold},
                     {"grid_divisions", cfg.analysis.grid_divisions},
                     {"bound_grid_step", cfg.analysis.bound_grid_step},
                     {"inflation", cfg.analysis.inflation},
                     {"horizon", cfg.analysis.horizon}};
    j["metrics"] = {{"transient_fraction", cfg.metrics.transient_fraction},
                    {"tail_fraction", cfg.metrics.tail_fraction},
                    {"fit_floor", cfg.metrics.fit_floor},
                    {"min_fit_samples", cfg.metrics.min_fit_samples},
                    {"monitor_window", cfg.metrics.monitor_window},
                    {"monitor_floor", cfg.metrics.monitor_floor}};
    return j;
}

Json constants_to_json(const sim::ScenarioConstants& c)
{
    Json curve = Json::array();
    for (const auto& w : c.alpha_curve)
        curve.push_back({{"T", w.window}, {"alpha", w.alpha}, {"grid_step", w.grid_step}});
    Json j;
    j["alpha_curve"] = curve;
    j["persistently_exciting"] = c.persistently_exciting;
    j["alpha"] = c.constants.alpha;
    j["T"] = c.constants.window;
    j["beta"] = c.constants.beta;
    j["gamma"] = c.constants.gamma;
    j["n"] = c.constants.n;
    j["N"] = c.constants.n_agents;
    j["lambda_g_min"] = finite_or_null(c.lambda_g_min);
    j["lambda_max_max"] = finite_or_null(c.lambda_max_max);
    j["k_min"] = finite_or_null(c.k_min);
    j["k"] = c.k;
    j["theta_norm"] = c.theta_norm;
    j["consensus_ceiling"] = c.consensus_ceiling;
    j["quantized"] = {{"feasible", c.quantized.feasible},
                      {"margin", finite_or_null(c.quantized.margin)},
                      {"b_eps", finite_or_null(c.quantized.b_eps)},
                      {"r_eps", finite_or_null(c.quantized.r_eps)}};
    j["switched"] = {{"feasible", c.switched.feasible}, {"margin", finite_or_null(c.switched.margin)}};
    return j;
}

Json metrics_to_json(const sim::Metrics& m)
{
    auto list = [](const std::vector<double>& v) {
        Json a = Json::array();
        for (double x : v)
            a.push_back(finite_or_null(x));
        return a;
    };
    Json est = Json::object();
    for (const auto& e : m.estimators)
    {
        Json j;
        j["initial_error"] = list(e.initial_error);
        j["final_error"] = list(e.final_error);
        j["tail_sup_error"] = list(e.tail_sup_error);
        j["decay_rate"] = list(e.decay_rate);
        j["max_error_increase"] = list(e.max_error_increase);
        if (!e.l2_verdict.empty())
            j["l2_verdict"] = e.l2_verdict;
        est[estimators::to_string(e.kind)] = j;
    }
    Json j;
    j["estimators"] = est;
    j["tail_sup_consensus_error"] = list(m.tail_sup_consensus_error);
    j["tail_sup_residual"] = list(m.tail_sup_residual);
    j["transient_end"] = m.transient_end ? Json(*m.transient_end) : Json(nullptr);
    j["consensus_ceiling"] = m.consensus_ceiling;
    j["max_conservation"] = m.max_conservation;
    j["max_asymmetry"] = m.max_asymmetry;
    j["max_residual"] = m.max_residual;
    return j;
}

void write_traces_csv(std::ostream& out, const sim::TraceSet& trace)
{
    const int agents = trace.n_agents;
    const int n = trace.n;
    out << "t,sigma,link_mask";
    for (int i = 0; i < agents; ++i)
        out << ",consensus_err_" << i << ",output_err_" << i << ",residual_" << i;
    for (const auto& et : trace.estimators)
    {
        const std::string tag = estimators::to_string(et.kind);
        const int count = et.kind == EstimatorKind::Centralized ? 1 : agents;
        for (int i = 0; i < count; ++i)
        {
            for (int c = 0; c < n; ++c)
                out << ',' << tag << "_theta_hat_" << i << '_' << c;
            out << ',' << tag << "_err_" << i;
            if (!et.phi.empty())
                out << ',' << tag << "_phi_" << i << ',' << tag << "_phi_sq_int_" << i;
        }
    }
    out << '\n';

    out << std::setprecision(17);
    for (std::size_t k = 0; k < trace.samples(); ++k)
    {
        out << trace.time[k] << ',' << trace.sigma[k] << ',' << trace.link_mask[k];
        for (int i = 0; i < agents; ++i)
            out << ',' << trace.consensus_error[k][i] << ',' << trace.output_error[k][i] << ','
                << trace.residual_norm[k][i];
        for (const auto& et : trace.estimators)
        {
            for (std::size_t i = 0; i < et.error_norm[k].size(); ++i)
            {
                for (int c = 0; c < n; ++c)
                    out << ',' << et.theta_hat[k][i](c);
                out << ',' << et.error_norm[k][i];
                if (!et.phi.empty())
                    out << ',' << et.phi[k][i] << ',' << et.phi_sq_integral[k][i];
            }
        }
        out << '\n';
    }
}

namespace
{

void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out(path);
    if (!out)
        throw Error(Errc::Io, "cannot write '" + path.string() + "'");
    out << text;
    if (!out)
        throw Error(Errc::Io, "write to '" + path.string() + "' failed");
}

} // namespace

void write_run_directory(const std::filesystem::path& dir, const sim::ScenarioConfig& cfg, const sim::RunResult& result)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir))
        throw Error(Errc::Io, "cannot create output directory '" + dir.string() + "'");

    std::ostringstream csv;
    write_traces_csv(csv, result.trace);
    write_text(dir / "traces.csv", csv.str());
    write_text(dir / "metrics.json", metrics_to_json(result.metrics).dump(2) + "\n");
    write_text(dir / "constants.json", constants_to_json(result.constants).dump(2) + "\n");
    write_text(dir / "config-echo.json", to_json(cfg).dump(2) + "\n");
}

} // namespace hierest::scenario
