#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "json.hpp"

#include "sdde/analytic.hpp"
#include "sdde/config.hpp"
#include "sdde/errors.hpp"
#include "sdde/pipeline.hpp"

using namespace sdde;
using Catch::Approx;
using nlohmann::json;

namespace {

json example_config() {
    return json::parse(R"({
      "model": {"a": 0, "b": 1, "c": 0, "s0": 1, "tau": 1, "history": [0]},
      "quadrature": {"points": 161, "window": [-8, 8]},
      "mc": {"dt": 0.001, "n_paths": 100000, "seed": 3, "bins": 72},
      "output": {"x_min": -9, "x_max": 9, "points": 73}
    })");
}

}  // namespace

TEST_CASE("time segments") {
    auto p = plan_segment(0.4, 1.0);
    CHECK(p.kind == SegmentPlan::Kind::first_interval);
    CHECK(p.t_prime == 0.4);
    p = plan_segment(1.0, 1.0);
    CHECK(p.kind == SegmentPlan::Kind::first_interval);
    p = plan_segment(2.0, 1.0);
    CHECK(p.kind == SegmentPlan::Kind::multiple);
    CHECK(p.k == 2);
    p = plan_segment(2.5, 1.0);
    CHECK(p.kind == SegmentPlan::Kind::general);
    CHECK(p.k == 3);
    CHECK(p.t_prime == Approx(0.5));
    CHECK_THROWS_AS(plan_segment(0.0, 1.0), InvalidInput);
    CHECK_THROWS_AS(plan_segment(3.5, 1.0), InvalidInput);
}

TEST_CASE("config parsing and validation") {
    const RunConfig cfg = parse_config(example_config());
    CHECK(is_reference_example(cfg.model));
    CHECK(cfg.output.abscissae().size() == 73);
    CHECK(cfg.output.abscissae().back() == 9.0);
    CHECK(cfg.quadrature->axes.size() == 1);

    json bad = example_config();
    bad["model"]["tau"] = -1;
    CHECK_THROWS_AS(parse_config(bad), InvalidInput);
    bad = example_config();
    bad["mc"]["n_paths"] = "many";
    CHECK_THROWS_AS(parse_config(bad), InvalidInput);
    bad = example_config();
    bad.erase("model");
    CHECK_THROWS_AS(parse_config(bad), InvalidInput);
    CHECK_THROWS_AS(cfg.grid_for(1), InvalidInput);
    CHECK_THROWS_AS(cfg.solver_or_throw(), InvalidInput);
}

TEST_CASE("analytic density curves follow the exact density") {
    const RunConfig cfg = parse_config(example_config());
    for (double t : {0.5, 1.5, 2.0}) {
        const DensityCurve c = density_curve(cfg, Method::analytic, t);
        double worst = 0.0;
        for (std::size_t i = 0; i < c.x.size(); ++i)
            worst = std::max(worst, std::abs(c.values[i] - exact_example_density(c.x[i], t)));
        CHECK(worst <= 1e-3);
        CHECK(c.mass == Approx(1.0).margin(1e-3));
    }
}

TEST_CASE("moment kernels agree with the closed forms") {
    RunConfig closed = parse_config(example_config());
    RunConfig moments = closed;
    moments.model.c = 1e-300;  // not the reference example, so moment kernels are used
    REQUIRE_FALSE(is_reference_example(moments.model));
    const auto a = density_curve(closed, Method::analytic, 1.5);
    const auto b = density_curve(moments, Method::analytic, 1.5);
    CHECK(compare_curves(a, b).linf <= 1e-6);
    CHECK(b.backends.front() == "analytic:moments");
}

TEST_CASE("pilot-run quadrature windows") {
    json j = example_config();
    j.erase("quadrature");
    const RunConfig cfg = parse_config(j);
    const QuadratureGrid q = quadrature_for(cfg, plan_segment(1.5, 1.0), Method::analytic);
    REQUIRE(q.dim() == 2);
    // Windows are about +-6 sd of X(0.5) and X(1).
    CHECK(q.axis(0).max == Approx(6.0 * std::sqrt(0.5)).epsilon(0.1));
    CHECK(q.axis(1).max == Approx(6.0).epsilon(0.1));
    const DensityCurve c = density_curve(cfg, Method::analytic, 1.5);
    CHECK(c.mass == Approx(1.0).margin(1e-3));
}

TEST_CASE("comparison metrics") {
    const RunConfig cfg = parse_config(example_config());
    const auto a = density_curve(cfg, Method::analytic, 1.0);
    const auto self = compare_curves(a, a);
    CHECK(self.l1 == 0.0);
    CHECK(self.linf == 0.0);
    CHECK(self.ks == 0.0);

    const auto rep = run_compare(cfg, 1.5, {Method::analytic, Method::mc});
    REQUIRE(rep.pairs.size() == 1);
    CHECK(rep.pairs[0].l1 >= 0.0);
    CHECK(rep.pairs[0].l1 <= 2e-2);
    CHECK(rep.pairs[0].ks <= rep.pairs[0].l1);
    CHECK_THROWS_AS(run_compare(cfg, 1.5, {Method::analytic}), InvalidInput);
}

TEST_CASE("analytic method refuses multiplicative noise") {
    json j = example_config();
    j["model"]["s1"] = 0.1;
    const RunConfig cfg = parse_config(j);
    CHECK_THROWS_AS(density_curve(cfg, Method::analytic, 0.5), InvalidInput);
    CHECK_THROWS_AS(parse_method("exact"), InvalidInput);
}
