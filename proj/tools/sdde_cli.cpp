// sdde: densities of a scalar delay SDE from a JSON run configuration.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "sdde/composition.hpp"
#include "sdde/config.hpp"
#include "sdde/csv.hpp"
#include "sdde/errors.hpp"
#include "sdde/kernel.hpp"
#include "sdde/montecarlo.hpp"
#include "sdde/pipeline.hpp"

namespace {

using namespace sdde;

struct Args {
    std::string config;
    std::optional<double> t;
    std::string method = "analytic";
    std::string out;
    std::optional<std::uint64_t> seed;
};

RunConfig load(const Args& a) {
    RunConfig cfg = load_config(a.config);
    if (a.seed && cfg.mc) cfg.mc->sim.seed = *a.seed;
    return cfg;
}

/// Writes to --out, else output.path, else stdout. Streams are binary so rows end in LF only.
class Sink {
public:
    Sink(const Args& a, const RunConfig& cfg) : path_(a.out.empty() ? cfg.output.path : a.out) {
        if (!path_.empty()) {
            file_.open(path_, std::ios::binary | std::ios::trunc);
            if (!file_) throw InvalidInput("cannot open output file " + path_);
        }
    }
    std::ostream& os() { return path_.empty() ? std::cout : file_; }
    [[nodiscard]] const std::string& path() const { return path_; }
    void close() {
        if (!path_.empty()) {
            file_.close();
            if (!file_) throw NumericFailure("failed writing " + path_);
        } else {
            std::cout.flush();
        }
    }

private:
    std::string path_;
    std::ofstream file_;
};

void write_curve_header(std::ostream& os, const DensityCurve& c, const std::string& method) {
    write_comment(os, "method", method);
    write_comment(os, "t", format_double(c.t));
    write_comment(os, "mass", format_double(c.mass));
    write_comment(os, "backend", join(c.backends, ";"));
    for (const auto& w : c.warnings) write_comment(os, "warning", w);
}

double require_t(const Args& a, const char* sub) {
    if (!a.t) throw InvalidInput(std::string(sub) + " needs --t");
    return *a.t;
}

int cmd_density(const Args& a) {
    const RunConfig cfg = load(a);
    const Method m = parse_method(a.method);
    const DensityCurve curve = density_curve(cfg, m, require_t(a, "density"));
    Sink sink(a, cfg);
    auto& os = sink.os();
    write_curve_header(os, curve, method_name(m));
    os << "x,density\n";
    for (std::size_t i = 0; i < curve.x.size(); ++i) {
        const double row[2] = {curve.x[i], curve.values[i]};
        write_row(os, row);
    }
    sink.close();
    return 0;
}

std::vector<Method> parse_methods(const std::string& list) {
    std::vector<Method> out;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(parse_method(item));
    }
    return out;
}

int cmd_compare(const Args& a) {
    const RunConfig cfg = load(a);
    const ComparisonReport rep = run_compare(cfg, require_t(a, "compare"), parse_methods(a.method));

    nlohmann::ordered_json j;
    j["t"] = rep.t;
    j["methods"] = rep.methods;
    j["runtime_seconds"] = nlohmann::ordered_json::object();
    j["mass"] = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < rep.methods.size(); ++i) {
        j["runtime_seconds"][rep.methods[i]] = rep.runtime_seconds[i];
        j["mass"][rep.methods[i]] = rep.curves[i].mass;
    }
    j["pairs"] = nlohmann::ordered_json::array();
    for (const auto& p : rep.pairs)
        j["pairs"].push_back({{"a", p.a}, {"b", p.b}, {"l1", p.l1}, {"linf", p.linf}, {"ks", p.ks}});

    Sink sink(a, cfg);
    if (sink.path().empty()) {
        std::cout << j.dump(2) << '\n';
        return 0;
    }
    auto& os = sink.os();
    write_comment(os, "t", format_double(rep.t));
    for (std::size_t i = 0; i < rep.methods.size(); ++i) {
        write_comment(os, "mass_" + rep.methods[i], format_double(rep.curves[i].mass));
        for (const auto& w : rep.curves[i].warnings) write_comment(os, "warning_" + rep.methods[i], w);
    }
    os << "x";
    for (const auto& m : rep.methods) os << ',' << m;
    os << '\n';
    std::vector<double> row(rep.methods.size() + 1);
    for (std::size_t r = 0; r < rep.curves[0].x.size(); ++r) {
        row[0] = rep.curves[0].x[r];
        for (std::size_t i = 0; i < rep.curves.size(); ++i) row[i + 1] = rep.curves[i].values[r];
        write_row(os, row);
    }
    sink.close();
    std::ofstream js(sink.path() + ".json", std::ios::binary | std::ios::trunc);
    if (!js) throw InvalidInput("cannot open report file " + sink.path() + ".json");
    js << j.dump(2) << '\n';
    return 0;
}

int cmd_simulate(const Args& a) {
    RunConfig cfg = load(a);
    McConfig mc = cfg.mc_or_throw();
    SimulateRequest req = cfg.simulate.value_or(SimulateRequest{});
    if (a.t) req.times = {*a.t};
    mc.sim.t_max = *std::max_element(req.times.begin(), req.times.end());
    mc.sim.threads = cfg.threads;
    const PathEnsemble ens = simulate_sdde(cfg.model, mc.sim, req.times);

    Sink sink(a, cfg);
    auto& os = sink.os();
    write_comment(os, "seed", std::to_string(mc.sim.seed));
    write_comment(os, "n_paths", std::to_string(mc.sim.n_paths));
    write_comment(os, "dt", format_double(mc.sim.dt));
    for (std::size_t i = 0; i < req.times.size(); ++i) {
        const auto col = ens.column(i);
        double mean = 0.0;
        for (double x : col) mean += x;
        mean /= static_cast<double>(col.size());
        double m2 = 0.0, m4 = 0.0;
        for (double x : col) {
            const double d = (x - mean) * (x - mean);
            m2 += d;
            m4 += d * d;
        }
        const auto n = static_cast<double>(col.size());
        const double var = col.size() > 1 ? m2 / (n - 1.0) : 0.0;
        // Standard error of the sample variance from the fourth central moment.
        const double se = col.size() > 1 ? std::sqrt(std::max(0.0, (m4 / n - (m2 / n) * (m2 / n)) / n)) : 0.0;
        const std::string tag = "t=" + format_double(req.times[i]);
        write_comment(os, "mean[" + tag + "]", format_double(mean));
        write_comment(os, "variance[" + tag + "]", format_double(var));
        write_comment(os, "variance_se[" + tag + "]", format_double(se));
    }
    if (req.raw) {
        os << "path,time,value\n";
        for (std::size_t p = 0; p < ens.n_paths; ++p)
            for (std::size_t i = 0; i < req.times.size(); ++i) {
                os << p << ',' << format_double(req.times[i]) << ',' << format_double(ens.at(p, i)) << '\n';
            }
    } else {
        os << "time,bin_center,density\n";
        for (std::size_t i = 0; i < req.times.size(); ++i) {
            const auto col = ens.column(i);
            const HistogramDensity h = estimate_density(col, mc.bins, cfg.output.x_min, cfg.output.x_max);
            for (std::size_t b = 0; b < h.bins(); ++b) {
                const double row[3] = {req.times[i], h.center(b), h.heights[b]};
                write_row(os, row);
            }
        }
    }
    sink.close();
    return 0;
}

int cmd_kernel(const Args& a) {
    const RunConfig cfg = load(a);
    if (!cfg.kernel) throw InvalidInput("config: kernel subcommand needs a kernel block");
    KernelRequest req = *cfg.kernel;
    if (a.t) req.t = *a.t;
    if (req.k < 1 || req.k > kMaxSegments) throw InvalidInput("kernel.k must be 1, 2 or 3");
    if (req.v.size() != static_cast<std::size_t>(req.k)) throw InvalidInput("kernel.v needs k entries");
    const Grid grid = cfg.grid_for(req.k);
    const Method m = parse_method(a.method);

    DensityField field;
    std::string backend;
    if (m == Method::fp) {
        GridKernel gk(cfg.model, req.k, grid, cfg.solver_or_throw(), cfg.threads);
        field = *gk.field(req.v, req.s, req.t);
        backend = "grid:fokker-planck";
    } else {
        TransitionKernelHandle h = [&] {
            if (m == Method::mc) {
                McConfig mc = cfg.mc_or_throw();
                mc.sim.threads = cfg.threads;
                return estimate_kernel(build_augmented(cfg.model, req.k), req.v, req.s, req.t, grid, mc.sim);
            }
            return make_kernels(cfg, Method::analytic, req.k).q(req.k);
        }();
        backend = h.label();
        field.grid = grid;
        field.time = req.t;
        field.values.resize(grid.size());
        Point u(static_cast<std::size_t>(req.k));
        for (std::size_t f = 0; f < grid.size(); ++f) {
            const auto idx = grid.unflatten(f);
            for (int d = 0; d < req.k; ++d) u[static_cast<std::size_t>(d)] = grid.axis(d).node(idx[static_cast<std::size_t>(d)]);
            field.values[f] = h(u, req.t, req.v, req.s);
        }
    }

    Sink sink(a, cfg);
    auto& os = sink.os();
    write_comment(os, "k", std::to_string(req.k));
    write_comment(os, "s", format_double(req.s));
    write_comment(os, "t", format_double(req.t));
    write_comment(os, "backend", backend);
    write_comment(os, "mass", format_double(mass(field)));
    for (const auto& w : field.warnings) write_comment(os, "warning", w);
    for (int d = 0; d < req.k; ++d) os << 'x' << (d + 1) << ',';
    os << "density\n";
    std::vector<double> row(static_cast<std::size_t>(req.k) + 1);
    for (std::size_t f = 0; f < grid.size(); ++f) {
        const auto idx = grid.unflatten(f);
        for (int d = 0; d < req.k; ++d) row[static_cast<std::size_t>(d)] = grid.axis(d).node(idx[static_cast<std::size_t>(d)]);
        row.back() = field.values[f];
        write_row(os, row);
    }
    sink.close();
    return 0;
}

int cmd_bridge(const Args& a) {
    const RunConfig cfg = load(a);
    if (!cfg.bridge) throw InvalidInput("config: bridge subcommand needs a bridge block");
    BridgeRequest req = *cfg.bridge;
    if (a.t) req.t_prime = *a.t;
    if (req.k < 1 || req.k > kMaxSegments) throw InvalidInput("bridge.k must be 1, 2 or 3");
    const auto k = static_cast<std::size_t>(req.k);
    if (req.v0.size() != k || req.v1.size() != k) throw InvalidInput("bridge.v0 and bridge.v1 need k entries");
    const Method m = parse_method(a.method);
    if (m == Method::mc) throw InvalidInput("bridge supports the analytic and fp methods");
    const KernelSet kernels = make_kernels(cfg, m, req.k);
    const TransitionKernelHandle& q = kernels.q(req.k);

    std::vector<Point> points = req.points;
    if (points.empty()) {
        if (k != 1) throw InvalidInput("bridge.points is required when k > 1");
        for (double u : cfg.output.abscissae()) points.push_back({u});
    }
    std::vector<double> values(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (points[i].size() != k) throw InvalidInput("bridge.points entries need k values");
        values[i] = bridge_density(q, points[i], req.t_prime, req.v0, req.v1);
    }

    Sink sink(a, cfg);
    auto& os = sink.os();
    write_comment(os, "k", std::to_string(req.k));
    write_comment(os, "t_prime", format_double(req.t_prime));
    write_comment(os, "backend", q.label());
    for (const auto& w : kernels.warnings()) write_comment(os, "warning", w);
    if (k == 1) {
        os << "u,density\n";
    } else {
        for (std::size_t d = 0; d < k; ++d) os << 'u' << (d + 1) << ',';
        os << "density\n";
    }
    std::vector<double> row(k + 1);
    for (std::size_t i = 0; i < points.size(); ++i) {
        std::copy(points[i].begin(), points[i].end(), row.begin());
        row.back() = values[i];
        write_row(os, row);
    }
    sink.close();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Densities of a scalar stochastic delay differential equation"};
    app.require_subcommand(1);
    Args args;
    int (*run)(const Args&) = nullptr;

    const auto add = [&](const char* name, const char* help, int (*fn)(const Args&), const char* method_help) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", args.config, "JSON run configuration")->required()->check(CLI::ExistingFile);
        sub->add_option("--t", args.t, "evaluation time");
        sub->add_option("--method", args.method, method_help);
        sub->add_option("--out", args.out, "output path (default: output.path, else stdout)");
        sub->add_option("--seed", args.seed, "Monte Carlo seed, overrides mc.seed");
        sub->callback([&run, fn] { run = fn; });
    };
    add("density", "density of X(t) as x,density CSV", cmd_density, "analytic, fp or mc");
    add("compare", "compare methods on shared abscissae", cmd_compare, "comma-separated methods, e.g. analytic,fp");
    add("simulate", "Euler-Maruyama samples or histograms", cmd_simulate, "ignored");
    add("kernel", "dump a transition kernel Q_k on the grid", cmd_kernel, "analytic, fp or mc");
    add("bridge", "bridge density of the augmented state", cmd_bridge, "analytic or fp");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    try {
        return run(args);
    } catch (const sdde::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    }
}
