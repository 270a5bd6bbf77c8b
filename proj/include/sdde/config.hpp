#pragma once

// JSON run configuration for the command-line front end.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "sdde/errors.hpp"
#include "sdde/fokker_planck.hpp"
#include "sdde/grid.hpp"
#include "sdde/model.hpp"
#include "sdde/montecarlo.hpp"

namespace sdde {

struct QuadratureConfig {
    /// Nodes per axis; 0 selects 64 for up to two axes and 32 beyond.
    int points = 0;
    double sigmas = 6.0;
    /// Explicit windows, one per integration variable; empty selects a pilot-run estimate.
    std::vector<Axis> axes;
};

struct McConfig {
    SimConfig sim;
    std::size_t bins = 200;
};

struct OutputConfig {
    double x_min = -6.0;
    double x_max = 6.0;
    int points = 121;
    std::string path;
    std::string format = "csv";

    [[nodiscard]] std::vector<double> abscissae() const {
        std::vector<double> xs(static_cast<std::size_t>(points));
        for (int i = 0; i < points; ++i)
            xs[static_cast<std::size_t>(i)] =
                i == points - 1 ? x_max : x_min + (x_max - x_min) * static_cast<double>(i) / (points - 1);
        return xs;
    }
};

struct KernelRequest {
    int k = 1;
    std::vector<double> v{0.0};
    double s = 0.0;
    double t = 1.0;
};

struct BridgeRequest {
    int k = 1;
    double t_prime = 0.5;
    std::vector<double> v0{0.0};
    std::vector<double> v1{0.0};
    std::vector<std::vector<double>> points;  // evaluation points when k > 1
};

struct SimulateRequest {
    std::vector<double> times{1.0};
    bool raw = false;  // raw path,time,value rows instead of a histogram
};

struct RunConfig {
    SDDEModel model;
    std::optional<std::vector<Axis>> grid;
    std::optional<SolverConfig> solver;
    std::optional<QuadratureConfig> quadrature;
    std::optional<McConfig> mc;
    OutputConfig output;
    std::optional<KernelRequest> kernel;
    std::optional<BridgeRequest> bridge;
    std::optional<SimulateRequest> simulate;
    unsigned threads = 1;

    /// Grid for a k-dimensional solve; the last listed axis repeats if fewer are given.
    [[nodiscard]] Grid grid_for(int k) const {
        if (!grid || grid->empty()) throw InvalidInput("config: a grid block is required for this method");
        std::vector<Axis> axes;
        for (int d = 0; d < k; ++d) axes.push_back((*grid)[std::min<std::size_t>(static_cast<std::size_t>(d), grid->size() - 1)]);
        return Grid(std::move(axes));
    }
    [[nodiscard]] const SolverConfig& solver_or_throw() const {
        if (!solver) throw InvalidInput("config: a solver block is required for this method");
        return *solver;
    }
    [[nodiscard]] const McConfig& mc_or_throw() const {
        if (!mc) throw InvalidInput("config: an mc block is required for this method");
        return *mc;
    }
};

namespace detail {

using nlohmann::json;

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    return j.at(key).get<T>();
}

inline Axis parse_axis(const json& j) {
    Axis a;
    a.min = j.at("min").get<double>();
    a.max = j.at("max").get<double>();
    a.n = j.at("n").get<int>();
    if (!(a.min < a.max)) throw InvalidInput("config: axis needs min < max");
    if (a.n < 2) throw InvalidInput("config: axis needs n >= 2");
    return a;
}

inline std::vector<Axis> parse_axes(const json& j) {
    std::vector<Axis> out;
    if (j.contains("axes")) {
        for (const auto& a : j.at("axes")) out.push_back(parse_axis(a));
    } else {
        out.push_back(parse_axis(j));
    }
    return out;
}

inline SDDEModel parse_model(const json& j) {
    SDDEModel m;
    m.a = get_or(j, "a", 0.0);
    m.b = get_or(j, "b", 0.0);
    m.c = get_or(j, "c", 0.0);
    m.s0 = get_or(j, "s0", 1.0);
    m.s1 = get_or(j, "s1", 0.0);
    m.s2 = get_or(j, "s2", 0.0);
    m.tau = j.at("tau").get<double>();
    m.history.coeffs = get_or(j, "history", std::vector<double>{0.0});
    m.check();
    return m;
}

inline SolverConfig parse_solver(const json& j) {
    SolverConfig c;
    c.dt = j.at("dt").get<double>();
    if (!(c.dt > 0.0)) throw InvalidInput("config: solver.dt must be > 0");
    c.delta_init_eps = get_or(j, "delta_init_eps", 0.0);
    c.renormalize_each_step = get_or(j, "renormalize_each_step", false);
    c.theta = get_or(j, "theta", 0.5);
    if (!(c.theta >= 0.5 && c.theta <= 1.0)) throw InvalidInput("config: solver.theta must lie in [0.5, 1]");
    c.min_init_width = get_or(j, "min_init_width", 1.0);
    const auto adv = get_or(j, "advection", std::string("limited"));
    if (adv == "limited") c.advection = AdvectionScheme::limited_upwind;
    else if (adv == "upwind") c.advection = AdvectionScheme::upwind;
    else throw InvalidInput("config: solver.advection must be 'limited' or 'upwind'");
    const auto boundary = get_or(j, "boundary", std::string("absorbing"));
    if (boundary != "absorbing") throw InvalidInput("config: only absorbing boundaries are supported");
    return c;
}

inline QuadratureConfig parse_quadrature(const json& j) {
    QuadratureConfig q;
    q.points = get_or(j, "points", 0);
    q.sigmas = get_or(j, "sigmas", 6.0);
    if (q.points != 0 && q.points < 16) throw InvalidInput("config: quadrature.points must be >= 16");
    if (!(q.sigmas > 0.0)) throw InvalidInput("config: quadrature.sigmas must be > 0");
    if (j.contains("axes")) {
        for (const auto& a : j.at("axes")) {
            Axis ax;
            ax.min = a.at("min").get<double>();
            ax.max = a.at("max").get<double>();
            ax.n = get_or(a, "n", q.points);
            q.axes.push_back(ax);
        }
    } else if (j.contains("window")) {
        const auto w = j.at("window").get<std::vector<double>>();
        if (w.size() != 2) throw InvalidInput("config: quadrature.window must be [min, max]");
        q.axes.push_back(Axis{w[0], w[1], q.points});
    }
    return q;
}

inline McConfig parse_mc(const json& j) {
    McConfig c;
    c.sim.dt = j.at("dt").get<double>();
    c.sim.n_paths = j.at("n_paths").get<std::size_t>();
    c.sim.seed = get_or(j, "seed", std::uint64_t{0});
    c.bins = get_or(j, "bins", std::size_t{200});
    if (!(c.sim.dt > 0.0)) throw InvalidInput("config: mc.dt must be > 0");
    if (c.sim.n_paths < 1) throw InvalidInput("config: mc.n_paths must be >= 1");
    if (c.bins < 1) throw InvalidInput("config: mc.bins must be >= 1");
    return c;
}

}  // namespace detail

inline RunConfig parse_config(const nlohmann::json& j) {
    try {
        RunConfig c;
        if (!j.is_object()) throw InvalidInput("config: top level must be an object");
        if (!j.contains("model")) throw InvalidInput("config: missing model block");
        c.model = detail::parse_model(j.at("model"));
        if (j.contains("grid")) c.grid = detail::parse_axes(j.at("grid"));
        if (j.contains("solver")) c.solver = detail::parse_solver(j.at("solver"));
        if (j.contains("quadrature")) c.quadrature = detail::parse_quadrature(j.at("quadrature"));
        if (j.contains("mc")) c.mc = detail::parse_mc(j.at("mc"));
        c.threads = detail::get_or(j, "threads", 1u);
        if (c.threads < 1) c.threads = 1;
        if (j.contains("output")) {
            const auto& o = j.at("output");
            c.output.x_min = detail::get_or(o, "x_min", c.output.x_min);
            c.output.x_max = detail::get_or(o, "x_max", c.output.x_max);
            c.output.points = detail::get_or(o, "points", c.output.points);
            c.output.path = detail::get_or(o, "path", std::string{});
            c.output.format = detail::get_or(o, "format", std::string("csv"));
            if (!(c.output.x_min < c.output.x_max) || c.output.points < 2)
                throw InvalidInput("config: output window needs x_min < x_max and points >= 2");
            if (c.output.format != "csv") throw InvalidInput("config: output.format must be csv");
        }
        if (j.contains("kernel")) {
            const auto& kj = j.at("kernel");
            KernelRequest r;
            r.k = kj.at("k").get<int>();
            r.v = kj.at("v").get<std::vector<double>>();
            r.s = detail::get_or(kj, "s", 0.0);
            r.t = kj.at("t").get<double>();
            c.kernel = r;
        }
        if (j.contains("bridge")) {
            const auto& bj = j.at("bridge");
            BridgeRequest r;
            r.k = bj.at("k").get<int>();
            r.t_prime = bj.at("t_prime").get<double>();
            r.v0 = bj.at("v0").get<std::vector<double>>();
            r.v1 = bj.at("v1").get<std::vector<double>>();
            r.points = detail::get_or(bj, "points", std::vector<std::vector<double>>{});
            c.bridge = r;
        }
        if (j.contains("simulate")) {
            const auto& sj = j.at("simulate");
            SimulateRequest r;
            r.times = detail::get_or(sj, "times", r.times);
            const auto mode = detail::get_or(sj, "output", std::string("histogram"));
            if (mode == "raw") r.raw = true;
            else if (mode != "histogram") throw InvalidInput("config: simulate.output must be 'histogram' or 'raw'");
            if (r.times.empty()) throw InvalidInput("config: simulate.times must not be empty");
            c.simulate = r;
        }
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(std::string("config: ") + e.what());
    }
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open config file " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(std::string("config is not valid JSON: ") + e.what());
    }
    return parse_config(j);
}

}  // namespace sdde
