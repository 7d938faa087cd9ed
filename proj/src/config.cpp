#include "qfuse/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "qfuse/errors.hpp"

namespace qfuse {

using nlohmann::json;

namespace {

// Reads keys out of one JSON object and rejects whatever is left over.
class Section {
public:
    Section(const json& node, std::string where) : node_(node), where_(std::move(where)) {
        if (!node_.is_object()) throw ConfigError(where_ + ": expected an object");
    }
    ~Section() = default;

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        auto it = node_.find(key);
        if (it == node_.end()) return;
        try {
            out = it->template get<T>();
        } catch (const json::exception&) {
            throw ConfigError(path(key) + ": wrong type");
        }
    }

    template <typename T>
    void get_optional(const char* key, std::optional<T>& out) {
        seen_.insert(key);
        auto it = node_.find(key);
        if (it == node_.end()) return;
        if (it->is_null()) {
            out.reset();
            return;
        }
        try {
            out = it->template get<T>();
        } catch (const json::exception&) {
            throw ConfigError(path(key) + ": wrong type");
        }
    }

    std::optional<Section> child(const char* key) {
        seen_.insert(key);
        auto it = node_.find(key);
        if (it == node_.end()) return std::nullopt;
        return Section(*it, path(key));
    }

    void finish() const {
        for (auto it = node_.begin(); it != node_.end(); ++it) {
            if (!seen_.count(it.key())) throw ConfigError("unknown configuration key '" + path(it.key().c_str()) + "'");
        }
    }

private:
    std::string path(const char* key) const { return where_.empty() ? key : where_ + "." + key; }

    const json& node_;
    std::string where_;
    std::set<std::string> seen_;
};

GridSpacing parse_spacing(const std::string& s) {
    if (s == "linear") return GridSpacing::linear;
    if (s == "log") return GridSpacing::log;
    throw ConfigError("lambda.spacing must be 'linear' or 'log'");
}

SicLoss parse_sic_loss(const std::string& s) {
    if (s == "refit") return SicLoss::refit;
    if (s == "penalized") return SicLoss::penalized;
    throw ConfigError("selection.sic_loss must be 'refit' or 'penalized'");
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

void RunConfig::validate() const {
    if (taus.empty()) throw ConfigError("at least one tau is required");
    for (double t : taus) {
        if (!(t > 0.0 && t < 1.0)) throw ConfigError("tau must lie in (0,1)");
    }
    fit.validate();
    if (simulation.experiment < 1 || simulation.experiment > 4) {
        throw ConfigError("unknown experiment id " + std::to_string(simulation.experiment));
    }
    if (simulation.replications < 1) throw ConfigError("simulation.replications must be >= 1");
    if (simulation.threads < 0) throw ConfigError("simulation.threads must be >= 0");
    if (simulation.T < 2) throw ConfigError("simulation.T must be >= 2");
    if (simulation.experiment == 4 && simulation.n != 60) {
        throw ConfigError("experiment 4 uses the fixed n = 60 partitions");
    }
    if (simulation.experiment != 4 && (simulation.n < 3 || simulation.n % 3 != 0)) {
        throw ConfigError("simulation.n must be a positive multiple of 3");
    }
    for (double x : simulation.coverage_x) {
        if (!(x >= 0.0 && x <= 1.0)) throw ConfigError("simulation.coverage_x points must lie in [0,1]");
    }
    if (output.bundle.empty()) throw ConfigError("output.bundle must be a file name");
}

RunConfig parse_config(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("configuration is not valid JSON: ") + e.what());
    }
    RunConfig c;
    Section top(root, "");
    top.get("taus", c.taus);
    top.get("seed", c.seed);
    {
        std::optional<std::string> data;
        top.get_optional("data", data);
        if (data) c.data = *data;
    }
    if (auto s = top.child("spline")) {
        s->get("order", c.fit.order);
        s->get_optional("basis_dim", c.fit.basis_dim);
        std::optional<int> knots;
        s->get_optional("interior_knots", knots);
        if (knots) {
            if (c.fit.basis_dim) throw ConfigError("spline: give basis_dim or interior_knots, not both");
            if (*knots < 0) throw ConfigError("spline.interior_knots must be >= 0");
            c.fit.basis_dim = *knots + c.fit.order;
        }
        s->finish();
    }
    if (auto s = top.child("lambda")) {
        s->get_optional("max", c.fit.path.lambda_max);
        s->get("grid_size", c.fit.path.grid_size);
        std::string spacing = "linear";
        s->get("spacing", spacing);
        c.fit.path.spacing = parse_spacing(spacing);
        s->get("log_min_ratio", c.fit.path.log_min_ratio);
        s->get("warm_start", c.fit.path.warm_start);
        s->finish();
    }
    if (auto s = top.child("admm")) {
        AdmmConfig& a = c.fit.admm;
        s->get("gamma", a.gamma);
        s->get("kappa", a.kappa);
        s->get("outer_max", a.outer_max);
        s->get("inner_max", a.inner_max);
        s->get("tol_primal", a.tol_primal);
        s->get("tol_dual", a.tol_dual);
        s->get("tol_rel", a.tol_rel);
        s->get("majorization_steps", a.majorization_steps);
        s->get("exact_scad_prox", a.exact_scad_prox);
        s->get("stability_window", a.stability_window);
        s->finish();
    }
    if (auto s = top.child("selection")) {
        s->get("scad_a", c.fit.path.scad_a);
        s->get("kmax", c.fit.kmax);
        std::string loss = "refit";
        s->get("sic_loss", loss);
        c.fit.sic_loss = parse_sic_loss(loss);
        s->finish();
    }
    if (auto s = top.child("inference")) {
        s->get("enabled", c.fit.bands);
        s->get("level", c.fit.level);
        s->get("grid", c.fit.band_grid);
        std::string method = to_string(c.fit.density.method);
        s->get("density_method", method);
        c.fit.density.method = parse_density_method(method);
        s->get_optional("bandwidth_x", c.fit.density.bandwidth_x);
        s->get_optional("bandwidth_e", c.fit.density.bandwidth_e);
        s->get("density_floor", c.fit.density.floor);
        s->get("density_grid_points", c.fit.density.grid_points);
        s->finish();
    }
    if (auto s = top.child("simulation")) {
        SimulationConfig& m = c.simulation;
        s->get("experiment", m.experiment);
        s->get("n", m.n);
        s->get("T", m.T);
        s->get("replications", m.replications);
        s->get("threads", m.threads);
        s->get("coverage", m.coverage);
        s->get("coverage_x", m.coverage_x);
        s->finish();
    }
    if (auto s = top.child("output")) {
        std::string dir = c.output.dir.string();
        s->get("dir", dir);
        c.output.dir = dir;
        s->get("bundle", c.output.bundle);
        s->get("plot_csv", c.output.plot_csv);
        s->finish();
    }
    top.finish();
    c.validate();
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open configuration file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string dump_config(const RunConfig& c) {
    const AdmmConfig& a = c.fit.admm;
    json j;
    j["taus"] = c.taus;
    j["seed"] = c.seed;
    j["data"] = c.data ? json(c.data->generic_string()) : json(nullptr);
    j["spline"] = {{"order", c.fit.order}, {"basis_dim", c.fit.basis_dim ? json(*c.fit.basis_dim) : json(nullptr)}};
    j["lambda"] = {{"max", optional_json(c.fit.path.lambda_max)},
                   {"grid_size", c.fit.path.grid_size},
                   {"spacing", c.fit.path.spacing == GridSpacing::linear ? "linear" : "log"},
                   {"log_min_ratio", c.fit.path.log_min_ratio},
                   {"warm_start", c.fit.path.warm_start}};
    j["admm"] = {{"gamma", a.gamma},
                 {"kappa", a.kappa},
                 {"outer_max", a.outer_max},
                 {"inner_max", a.inner_max},
                 {"tol_primal", a.tol_primal},
                 {"tol_dual", a.tol_dual},
                 {"tol_rel", a.tol_rel},
                 {"majorization_steps", a.majorization_steps},
                 {"exact_scad_prox", a.exact_scad_prox},
                 {"stability_window", a.stability_window}};
    j["selection"] = {{"scad_a", c.fit.path.scad_a},
                      {"kmax", c.fit.kmax},
                      {"sic_loss", c.fit.sic_loss == SicLoss::refit ? "refit" : "penalized"}};
    j["inference"] = {{"enabled", c.fit.bands},
                      {"level", c.fit.level},
                      {"grid", c.fit.band_grid},
                      {"density_method", to_string(c.fit.density.method)},
                      {"bandwidth_x", optional_json(c.fit.density.bandwidth_x)},
                      {"bandwidth_e", optional_json(c.fit.density.bandwidth_e)},
                      {"density_floor", c.fit.density.floor},
                      {"density_grid_points", c.fit.density.grid_points}};
    j["simulation"] = {{"experiment", c.simulation.experiment},
                       {"n", c.simulation.n},
                       {"T", c.simulation.T},
                       {"replications", c.simulation.replications},
                       {"threads", c.simulation.threads},
                       {"coverage", c.simulation.coverage},
                       {"coverage_x", c.simulation.coverage_x}};
    j["output"] = {{"dir", c.output.dir.generic_string()}, {"bundle", c.output.bundle}, {"plot_csv", c.output.plot_csv}};
    return j.dump(2);
}

}  // namespace qfuse
