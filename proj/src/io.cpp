#include "qfuse/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "qfuse/errors.hpp"

namespace qfuse {

using nlohmann::json;

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

namespace {

std::string read_file(const std::filesystem::path& path, ErrorKind kind) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        const std::string msg = "cannot open " + path.string();
        if (kind == ErrorKind::config) throw ConfigError(msg);
        throw DataError(msg);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
    if (!out) throw DataError("write failed for " + path.string());
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

double parse_number(std::string_view field, const char* name, std::size_t line) {
    field = trim(field);
    double v = 0.0;
    const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
    if (field.empty() || res.ec != std::errc() || res.ptr != field.data() + field.size() || !std::isfinite(v)) {
        throw DataError("line " + std::to_string(line) + ": field '" + name + "' is not a finite number: '" +
                        std::string(field) + "'");
    }
    return v;
}

std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t k = 0; k <= line.size(); ++k) {
        if (k == line.size() || line[k] == ',') {
            out.push_back(line.substr(start, k - start));
            start = k + 1;
        }
    }
    return out;
}

std::string list_ids(const std::vector<std::string>& ids) {
    std::string out;
    const std::size_t shown = std::min<std::size_t>(ids.size(), 10);
    for (std::size_t k = 0; k < shown; ++k) out += (k ? ", " : "") + ids[k];
    if (ids.size() > shown) out += ", ... (" + std::to_string(ids.size()) + " in total)";
    return out;
}

}  // namespace

RawPanel parse_panel_csv(const std::string& text) {
    std::string_view rest(text);
    if (rest.substr(0, 3) == "\xEF\xBB\xBF") rest.remove_prefix(3);

    struct Cell {
        double y, x;
    };
    std::vector<std::string> order;
    std::unordered_map<std::string, std::map<double, Cell>> rows;
    std::size_t line_no = 0;
    bool header = false;
    while (!rest.empty()) {
        const std::size_t nl = rest.find('\n');
        std::string_view line = rest.substr(0, nl);
        rest = nl == std::string_view::npos ? std::string_view() : rest.substr(nl + 1);
        ++line_no;
        line = trim(line);
        if (line.empty()) continue;
        if (!header) {
            if (line != "id,t,y,x") {
                throw DataError("line " + std::to_string(line_no) + ": header must be exactly 'id,t,y,x'");
            }
            header = true;
            continue;
        }
        const auto f = split(line);
        if (f.size() != 4) {
            throw DataError("line " + std::to_string(line_no) + ": expected 4 fields, found " +
                            std::to_string(f.size()));
        }
        const std::string id(trim(f[0]));
        if (id.empty()) throw DataError("line " + std::to_string(line_no) + ": empty id");
        const double t = parse_number(f[1], "t", line_no);
        const Cell cell{parse_number(f[2], "y", line_no), parse_number(f[3], "x", line_no)};
        auto [it, fresh] = rows.try_emplace(id);
        if (fresh) order.push_back(id);
        if (!it->second.emplace(t, cell).second) {
            throw DataError("line " + std::to_string(line_no) + ": duplicate observation for id " + id + " at t=" +
                            format_double(t));
        }
    }
    if (!header) throw DataError("panel file is empty; expected header 'id,t,y,x'");
    if (order.empty()) throw DataError("panel file has no observations");

    std::map<double, int> all_times;
    for (const auto& id : order) {
        for (const auto& [t, cell] : rows[id]) all_times.emplace(t, 0);
    }
    std::vector<std::string> unbalanced;
    for (const auto& id : order) {
        if (rows[id].size() != all_times.size()) unbalanced.push_back(id);
    }
    if (!unbalanced.empty()) {
        throw DataError("unbalanced panel: ids missing some time points: " + list_ids(unbalanced));
    }

    RawPanel out;
    out.ids = order;
    int col = 0;
    for (auto& [t, idx] : all_times) {
        idx = col++;
        out.times.push_back(t);
    }
    const auto n = static_cast<Eigen::Index>(order.size());
    const auto T = static_cast<Eigen::Index>(all_times.size());
    out.y.resize(n, T);
    out.x.resize(n, T);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (const auto& [t, cell] : rows[order[i]]) {
            const int c = all_times.at(t);
            out.y(i, c) = cell.y;
            out.x(i, c) = cell.x;
        }
    }
    return out;
}

RawPanel read_panel_csv(const std::filesystem::path& path) { return parse_panel_csv(read_file(path, ErrorKind::data)); }

void write_panel_csv(const std::filesystem::path& path, const RawPanel& panel) {
    const auto n = static_cast<std::size_t>(panel.y.rows());
    if (panel.ids.size() != n || panel.times.size() != static_cast<std::size_t>(panel.y.cols()) ||
        panel.x.rows() != panel.y.rows() || panel.x.cols() != panel.y.cols()) {
        throw InvalidInput("write_panel_csv: inconsistent panel");
    }
    std::string text = "id,t,y,x\n";
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t t = 0; t < panel.times.size(); ++t) {
            text += panel.ids[i] + ',' + format_double(panel.times[t]) + ',' +
                    format_double(panel.y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t))) + ',' +
                    format_double(panel.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t))) + '\n';
        }
    }
    write_file(path, text);
}

LoadedPanel prepare_panel(const RawPanel& raw) {
    NormalizedCovariates nc = [&] {
        try {
            return normalize_covariates(raw.x);
        } catch (const InvalidInput& e) {
            throw DataError(e.what());
        }
    }();
    return {PanelData(raw.y, std::move(nc.values), raw.ids), nc.map, raw.times};
}

LoadedPanel load_panel_csv(const std::filesystem::path& path) { return prepare_panel(read_panel_csv(path)); }

// ---------------------------------------------------------------- bundles

namespace {

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_from(const json& j, double missing = std::numeric_limits<double>::infinity()) {
    return j.is_null() ? missing : j.get<double>();
}

json matrix_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(number(m(r, c)));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from(const json& j, Eigen::Index cols_if_empty = 0) {
    const auto rows = static_cast<Eigen::Index>(j.size());
    const Eigen::Index cols = rows ? static_cast<Eigen::Index>(j.at(0).size()) : cols_if_empty;
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const json& row = j.at(r);
        if (static_cast<Eigen::Index>(row.size()) != cols) throw DataError("bundle: ragged matrix");
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = number_from(row.at(c), std::nan(""));
    }
    return m;
}

json vector_json(const Vector& v) {
    json out = json::array();
    for (Eigen::Index k = 0; k < v.size(); ++k) out.push_back(number(v[k]));
    return out;
}

Vector vector_from(const json& j) {
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (Eigen::Index k = 0; k < v.size(); ++k) v[k] = number_from(j.at(k), std::nan(""));
    return v;
}

PathRecord record_of(const FitResult& f) {
    PathRecord r;
    r.lambda = f.lambda;
    r.K = f.K();
    r.sic = f.sic;
    r.total_loss = f.total_loss;
    r.refit_loss = f.refit_loss;
    r.converged = f.converged;
    r.settled = f.settled;
    r.diverged = f.diverged;
    r.outer_iterations = f.state.outer_iterations;
    r.inner_iterations = f.state.inner_iterations;
    r.primal_residual = f.final_residuals.primal;
    r.dual_residual = f.final_residuals.dual;
    return r;
}

std::vector<double> to_raw(const std::vector<double>& unit, const AffineMap& map) {
    std::vector<double> out(unit.size());
    for (std::size_t k = 0; k < unit.size(); ++k) out[k] = map.invert(unit[k]);
    return out;
}

}  // namespace

ResultBundle make_bundle(const RunConfig& config, const LoadedPanel& data, const std::vector<QuantileFit>& fits) {
    ResultBundle b;
    b.config = dump_config(config);
    b.ids = data.panel.ids();
    b.T = data.panel.T();
    b.covariate_map = data.map;
    b.order = config.fit.order;
    b.basis_dim = resolve_basis_dim(config.fit, data.panel.size());
    for (const QuantileFit& q : fits) {
        TauRecord t;
        t.tau = q.tau;
        for (const FitResult& f : q.path.fits) t.path.push_back(record_of(f));
        t.selected = q.selection.index;
        t.lambda = q.selection.lambda;
        t.K = q.refit.K;
        t.labels = q.refit.labels;
        t.intercepts = q.refit.intercepts;
        t.theta = q.refit.theta;
        t.excluded_unsettled = q.selection.excluded_unsettled;
        t.excluded_kmax = q.selection.excluded_kmax;
        t.factorization_ridge = q.factorization_ridge;
        t.inner_iterations = q.path.total_inner_iterations;
        t.outer_iterations = q.path.total_outer_iterations;

        const std::vector<double> unit = q.band ? q.band->x : config.fit.band_grid;
        t.curve_x = to_raw(unit, data.map);
        t.curves.resize(t.K, static_cast<Eigen::Index>(unit.size()));
        for (std::size_t g = 0; g < unit.size(); ++g) {
            t.curves.col(static_cast<Eigen::Index>(g)) = t.theta * q.spline.eval_pi(unit[g]);
        }
        if (q.band && q.density) {
            BandRecord br;
            br.level = q.band->level;
            br.x = t.curve_x;
            br.estimate = q.band->estimate;
            br.se = q.band->se;
            br.lower = q.band->lower;
            br.upper = q.band->upper;
            br.density_method = to_string(q.density->method);
            br.bandwidth_x = q.density->bandwidth_x;
            br.bandwidth_e = q.density->bandwidth_e;
            br.density_floor = q.density->floor;
            br.floored = q.density->floored;
            t.band = std::move(br);
        }
        b.fits.push_back(std::move(t));
    }
    b.validate();
    return b;
}

void ResultBundle::validate() const {
    if (format != kFormat) throw DataError("bundle: unrecognized format tag '" + format + "'");
    if (version != kVersion) throw DataError("bundle: unsupported version " + std::to_string(version));
    if (ids.empty()) throw DataError("bundle: no individuals");
    if (T < 1) throw DataError("bundle: T must be >= 1");
    if (!(covariate_map.hi > covariate_map.lo)) throw DataError("bundle: degenerate covariate map");
    if (order < 1 || basis_dim < order + 1) throw DataError("bundle: invalid spline dimensions");
    const auto n = static_cast<Eigen::Index>(ids.size());
    for (const TauRecord& t : fits) {
        const std::string where = "bundle (tau " + format_double(t.tau) + "): ";
        if (!(t.tau > 0.0 && t.tau < 1.0)) throw DataError(where + "tau outside (0,1)");
        if (t.path.empty() || t.selected >= t.path.size()) throw DataError(where + "selected index outside the path");
        if (static_cast<Eigen::Index>(t.labels.size()) != n) throw DataError(where + "one label per individual required");
        std::vector<int> canon = t.labels;
        if (canonicalize_labels(canon) != t.K || canon != t.labels) throw DataError(where + "labels are not canonical");
        if (t.theta.rows() != t.K || t.theta.cols() != basis_dim - 1) throw DataError(where + "theta has wrong shape");
        if (t.intercepts.size() != n) throw DataError(where + "intercepts have wrong length");
        if (t.curves.rows() != t.K || t.curves.cols() != static_cast<Eigen::Index>(t.curve_x.size())) {
            throw DataError(where + "fitted curves have wrong shape");
        }
        if (t.band) {
            const BandRecord& b = *t.band;
            const auto G = static_cast<Eigen::Index>(b.x.size());
            for (const Matrix* m : {&b.estimate, &b.se, &b.lower, &b.upper}) {
                if (m->rows() != t.K || m->cols() != G) throw DataError(where + "band has wrong shape");
            }
            if (b.bandwidth_x.size() != static_cast<std::size_t>(t.K) ||
                b.bandwidth_e.size() != static_cast<std::size_t>(t.K)) {
                throw DataError(where + "one density bandwidth per group required");
            }
        }
    }
}

std::string serialize_bundle(const ResultBundle& b) {
    b.validate();
    json j;
    j["format"] = b.format;
    j["version"] = b.version;
    j["config"] = json::parse(b.config);
    j["data"] = {{"ids", b.ids}, {"T", b.T}, {"covariate_map", {{"lo", b.covariate_map.lo}, {"hi", b.covariate_map.hi}}}};
    j["spline"] = {{"order", b.order}, {"basis_dim", b.basis_dim}, {"interior_knots", b.basis_dim - b.order}};
    json fits = json::array();
    for (const TauRecord& t : b.fits) {
        json path = json::array();
        for (const PathRecord& p : t.path) {
            path.push_back({{"lambda", p.lambda},
                            {"K", p.K},
                            {"sic", number(p.sic)},
                            {"total_loss", number(p.total_loss)},
                            {"refit_loss", p.refit_loss ? number(*p.refit_loss) : json(nullptr)},
                            {"converged", p.converged},
                            {"settled", p.settled},
                            {"diverged", p.diverged},
                            {"outer_iterations", p.outer_iterations},
                            {"inner_iterations", p.inner_iterations},
                            {"primal_residual", number(p.primal_residual)},
                            {"dual_residual", number(p.dual_residual)}});
        }
        json f;
        f["tau"] = t.tau;
        f["selection"] = {{"index", t.selected},
                          {"lambda", t.lambda},
                          {"K", t.K},
                          {"excluded_unsettled", t.excluded_unsettled},
                          {"excluded_kmax", t.excluded_kmax}};
        f["groups"] = {{"labels", t.labels}, {"intercepts", vector_json(t.intercepts)}, {"theta", matrix_json(t.theta)}};
        f["curves"] = {{"x", t.curve_x}, {"values", matrix_json(t.curves)}};
        if (t.band) {
            const BandRecord& br = *t.band;
            f["band"] = {{"level", br.level},
                         {"x", br.x},
                         {"estimate", matrix_json(br.estimate)},
                         {"se", matrix_json(br.se)},
                         {"lower", matrix_json(br.lower)},
                         {"upper", matrix_json(br.upper)},
                         {"density",
                          {{"method", br.density_method},
                           {"kernel", "gaussian"},
                           {"bandwidth_x", br.bandwidth_x},
                           {"bandwidth_e", br.bandwidth_e},
                           {"floor", br.density_floor},
                           {"floored", br.floored}}}};
        } else {
            f["band"] = nullptr;
        }
        f["path"] = std::move(path);
        f["diagnostics"] = {{"factorization_ridge", t.factorization_ridge},
                            {"inner_iterations", t.inner_iterations},
                            {"outer_iterations", t.outer_iterations}};
        fits.push_back(std::move(f));
    }
    j["fits"] = std::move(fits);
    return j.dump(1) + "\n";
}

ResultBundle parse_bundle(const std::string& text) {
    ResultBundle b;
    try {
        const json j = json::parse(text);
        b.format = j.at("format").get<std::string>();
        b.version = j.at("version").get<int>();
        if (b.format != ResultBundle::kFormat) throw DataError("bundle: unrecognized format tag '" + b.format + "'");
        if (b.version != ResultBundle::kVersion) throw DataError("bundle: unsupported version " + std::to_string(b.version));
        b.config = j.at("config").dump(2);
        const json& d = j.at("data");
        b.ids = d.at("ids").get<std::vector<std::string>>();
        b.T = d.at("T").get<long long>();
        b.covariate_map = {d.at("covariate_map").at("lo").get<double>(), d.at("covariate_map").at("hi").get<double>()};
        b.order = j.at("spline").at("order").get<int>();
        b.basis_dim = j.at("spline").at("basis_dim").get<int>();
        for (const json& f : j.at("fits")) {
            TauRecord t;
            t.tau = f.at("tau").get<double>();
            const json& s = f.at("selection");
            t.selected = s.at("index").get<std::size_t>();
            t.lambda = s.at("lambda").get<double>();
            t.K = s.at("K").get<int>();
            t.excluded_unsettled = s.at("excluded_unsettled").get<std::vector<std::size_t>>();
            t.excluded_kmax = s.at("excluded_kmax").get<std::vector<std::size_t>>();
            const json& g = f.at("groups");
            t.labels = g.at("labels").get<std::vector<int>>();
            t.intercepts = vector_from(g.at("intercepts"));
            t.theta = matrix_from(g.at("theta"), b.basis_dim - 1);
            t.curve_x = f.at("curves").at("x").get<std::vector<double>>();
            t.curves = matrix_from(f.at("curves").at("values"), static_cast<Eigen::Index>(t.curve_x.size()));
            if (!f.at("band").is_null()) {
                const json& bj = f.at("band");
                BandRecord br;
                br.level = bj.at("level").get<double>();
                br.x = bj.at("x").get<std::vector<double>>();
                const auto G = static_cast<Eigen::Index>(br.x.size());
                br.estimate = matrix_from(bj.at("estimate"), G);
                br.se = matrix_from(bj.at("se"), G);
                br.lower = matrix_from(bj.at("lower"), G);
                br.upper = matrix_from(bj.at("upper"), G);
                const json& dj = bj.at("density");
                br.density_method = dj.at("method").get<std::string>();
                br.bandwidth_x = dj.at("bandwidth_x").get<std::vector<double>>();
                br.bandwidth_e = dj.at("bandwidth_e").get<std::vector<double>>();
                br.density_floor = dj.at("floor").get<double>();
                br.floored = dj.at("floored").get<long long>();
                t.band = std::move(br);
            }
            for (const json& p : f.at("path")) {
                PathRecord r;
                r.lambda = p.at("lambda").get<double>();
                r.K = p.at("K").get<int>();
                r.sic = number_from(p.at("sic"));
                r.total_loss = number_from(p.at("total_loss"));
                if (!p.at("refit_loss").is_null()) r.refit_loss = p.at("refit_loss").get<double>();
                r.converged = p.at("converged").get<bool>();
                r.settled = p.at("settled").get<bool>();
                r.diverged = p.at("diverged").get<bool>();
                r.outer_iterations = p.at("outer_iterations").get<int>();
                r.inner_iterations = p.at("inner_iterations").get<long long>();
                r.primal_residual = number_from(p.at("primal_residual"));
                r.dual_residual = number_from(p.at("dual_residual"));
                t.path.push_back(r);
            }
            const json& dg = f.at("diagnostics");
            t.factorization_ridge = dg.at("factorization_ridge").get<bool>();
            t.inner_iterations = dg.at("inner_iterations").get<long long>();
            t.outer_iterations = dg.at("outer_iterations").get<long long>();
            b.fits.push_back(std::move(t));
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("bundle is malformed: ") + e.what());
    }
    b.validate();
    return b;
}

void write_bundle(const std::filesystem::path& path, const ResultBundle& bundle) {
    write_file(path, serialize_bundle(bundle));
}

ResultBundle load_bundle(const std::filesystem::path& path) { return parse_bundle(read_file(path, ErrorKind::data)); }

std::vector<std::filesystem::path> write_plot_csvs(const std::filesystem::path& dir, const ResultBundle& b) {
    b.validate();
    std::vector<std::filesystem::path> written;
    for (const TauRecord& t : b.fits) {
        const std::string suffix = "_tau" + format_double(t.tau) + ".csv";

        std::string sic = "lambda,K,sic,refit_loss,total_loss,settled,converged,selected\n";
        for (std::size_t m = 0; m < t.path.size(); ++m) {
            const PathRecord& p = t.path[m];
            sic += format_double(p.lambda) + ',' + std::to_string(p.K) + ',' + format_double(p.sic) + ',' +
                   (p.refit_loss ? format_double(*p.refit_loss) : std::string()) + ',' + format_double(p.total_loss) +
                   ',' + (p.settled ? "1" : "0") + ',' + (p.converged ? "1" : "0") + ',' +
                   (m == t.selected ? "1" : "0") + '\n';
        }
        written.push_back(dir / ("sic_path" + suffix));
        write_file(written.back(), sic);

        std::string groups = "id,group,intercept\n";
        for (std::size_t i = 0; i < b.ids.size(); ++i) {
            groups += b.ids[i] + ',' + std::to_string(t.labels[i] + 1) + ',' +
                      format_double(t.intercepts[static_cast<Eigen::Index>(i)]) + '\n';
        }
        written.push_back(dir / ("groups" + suffix));
        write_file(written.back(), groups);

        std::string curves = t.band ? "group,x,estimate,se,lower,upper\n" : "group,x,estimate\n";
        for (int k = 0; k < t.K; ++k) {
            for (std::size_t g = 0; g < t.curve_x.size(); ++g) {
                const auto c = static_cast<Eigen::Index>(g);
                curves += std::to_string(k + 1) + ',' + format_double(t.curve_x[g]) + ',' + format_double(t.curves(k, c));
                if (t.band) {
                    curves += ',' + format_double(t.band->se(k, c)) + ',' + format_double(t.band->lower(k, c)) + ',' +
                              format_double(t.band->upper(k, c));
                }
                curves += '\n';
            }
        }
        written.push_back(dir / ("curves" + suffix));
        write_file(written.back(), curves);
    }
    return written;
}

Prediction predict(const ResultBundle& bundle, double tau, const std::vector<double>& x,
                   const std::optional<std::string>& individual) {
    bundle.validate();
    const auto fit = std::find_if(bundle.fits.begin(), bundle.fits.end(), [&](const TauRecord& t) { return t.tau == tau; });
    if (fit == bundle.fits.end()) throw ConfigError("bundle has no fit at tau " + format_double(tau));
    const Spline sys(bundle.basis_dim - bundle.order, bundle.order);

    Prediction p;
    p.tau = tau;
    p.x = x;
    p.groups.resize(fit->K, static_cast<Eigen::Index>(x.size()));
    p.extrapolated.resize(x.size());
    for (std::size_t g = 0; g < x.size(); ++g) {
        if (!std::isfinite(x[g])) throw InvalidInput("prediction points must be finite");
        const double unit = bundle.covariate_map.apply(x[g]);
        p.extrapolated[g] = unit < 0.0 || unit > 1.0;
        p.groups.col(static_cast<Eigen::Index>(g)) = fit->theta * sys.eval_pi(std::clamp(unit, 0.0, 1.0));
    }
    if (individual) {
        const auto it = std::find(bundle.ids.begin(), bundle.ids.end(), *individual);
        if (it == bundle.ids.end()) throw InvalidInput("unknown individual '" + *individual + "'");
        const auto i = static_cast<std::size_t>(it - bundle.ids.begin());
        p.individual = p.groups.row(fit->labels[i]).transpose().array() + fit->intercepts[static_cast<Eigen::Index>(i)];
    }
    return p;
}

// ---------------------------------------------------------------- studies

std::string serialize_study(const DgpSpec& spec, const StudyReport& r, const std::string& config) {
    json j;
    j["format"] = "qfuse-study-report";
    j["version"] = 1;
    j["config"] = json::parse(config);
    j["design"] = {{"experiment", spec.experiment}, {"n", spec.n}, {"T", spec.T}, {"tau", spec.tau}, {"seed", spec.seed}};
    j["replications"] = r.replications;
    j["failures"] = r.failures;
    j["true_K"] = r.true_K;
    j["percent_correct"] = r.percent_correct;
    j["mean_mse"] = {{"penalized", number(r.mean_mse_penalized)},
                     {"oracle", number(r.mean_mse_oracle)},
                     {"penalized_unrefitted", number(r.mean_mse_raw)}};
    j["coverage"] = {{"x", r.coverage_x}, {"estimated_groups", r.coverage_estimated}, {"true_groups", r.coverage_true}};
    return j.dump(1) + "\n";
}

void write_study(const std::filesystem::path& dir, const DgpSpec& spec, const StudyReport& r, const std::string& config) {
    write_file(dir / "study.json", serialize_study(spec, r, config));

    std::string runs = "replication,ok,K_hat,correct,lambda,mse_penalized,mse_oracle,mse_unrefitted,inner_iterations,error\n";
    for (const ReplicationResult& x : r.runs) {
        std::string err = x.error;
        std::replace(err.begin(), err.end(), ',', ';');
        std::replace(err.begin(), err.end(), '\n', ' ');
        runs += std::to_string(x.replication) + ',' + (x.ok ? "1" : "0") + ',' + std::to_string(x.K_hat) + ',' +
                (x.correct ? "1" : "0") + ',' + format_double(x.lambda) + ',' + format_double(x.mse_penalized) + ',' +
                format_double(x.mse_oracle) + ',' + format_double(x.mse_raw) + ',' + std::to_string(x.inner_iterations) +
                ',' + err + '\n';
    }
    write_file(dir / "replications.csv", runs);

    if (!r.coverage_estimated.empty()) {
        std::string cov = "x,coverage_estimated_groups,coverage_true_groups\n";
        for (std::size_t g = 0; g < r.coverage_x.size(); ++g) {
            cov += format_double(r.coverage_x[g]) + ',' + format_double(r.coverage_estimated[g]) + ',' +
                   format_double(r.coverage_true[g]) + '\n';
        }
        write_file(dir / "coverage.csv", cov);
    }
}

}  // namespace qfuse
