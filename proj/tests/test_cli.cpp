#include <catch_amalgamated.hpp>

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "json.hpp"

#include "sdde/csv.hpp"

namespace fs = std::filesystem;
using Catch::Approx;

namespace {

const fs::path& workdir() {
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / ("sdde_cli_test_" + std::to_string(::getpid()));
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path write_config(const std::string& name, const nlohmann::json& j) {
    const fs::path p = workdir() / name;
    std::ofstream(p) << j.dump(2);
    return p;
}

int run(const std::string& args) {
    const std::string cmd = std::string(SDDE_CLI_PATH) + " " + args + " 2>" + (workdir() / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

nlohmann::json example() {
    return nlohmann::json::parse(R"({
      "model": {"a": 0, "b": 1, "c": 0, "s0": 1, "tau": 1, "history": [0]},
      "grid": {"min": -8, "max": 8, "n": 161},
      "solver": {"dt": 0.001},
      "quadrature": {"points": 161, "window": [-8, 8]},
      "mc": {"dt": 0.001, "n_paths": 2000, "seed": 5, "bins": 40},
      "output": {"x_min": -6, "x_max": 6, "points": 121},
      "kernel": {"k": 2, "v": [0, 0], "t": 1},
      "bridge": {"k": 1, "t_prime": 0.5, "v0": [0], "v1": [0]},
      "simulate": {"times": [1, 2], "output": "raw"}
    })");
}

struct Csv {
    std::vector<std::string> comments;
    std::string header;
    std::vector<std::vector<std::string>> rows;
};

Csv parse_csv(const std::string& text) {
    Csv c;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("# ", 0) == 0) {
            REQUIRE(c.header.empty());
            c.comments.push_back(line);
        } else if (c.header.empty()) {
            c.header = line;
        } else {
            std::vector<std::string> cells;
            std::stringstream ls(line);
            std::string cell;
            while (std::getline(ls, cell, ',')) cells.push_back(cell);
            c.rows.push_back(cells);
        }
    }
    return c;
}

double num(const std::string& s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    REQUIRE(res.ec == std::errc{});
    REQUIRE(res.ptr == s.data() + s.size());
    return v;
}

}  // namespace

TEST_CASE("density output format") {
    const auto cfg = write_config("example.json", example());
    const auto out = workdir() / "density.csv";
    REQUIRE(run("density --config " + cfg.string() + " --t 1.5 --method analytic --out " + out.string()) == 0);
    const std::string text = read_file(out);
    CHECK(text.find('\r') == std::string::npos);
    CHECK(text.back() == '\n');
    const Csv csv = parse_csv(text);
    CHECK(csv.header == "x,density");
    CHECK(csv.rows.size() == 121);
    bool saw_mass = false;
    for (const auto& c : csv.comments) saw_mass |= c.rfind("# mass=", 0) == 0;
    CHECK(saw_mass);
    bool found = false;
    for (const auto& r : csv.rows) {
        REQUIRE(r.size() == 2);
        // Shortest round-trip formatting.
        for (const auto& cell : r) CHECK(sdde::format_double(num(cell)) == cell);
        if (num(r[0]) == 0.0) {
            found = true;
            CHECK(num(r[1]) == Approx(0.298040).margin(1e-3));
        }
    }
    CHECK(found);
}

TEST_CASE("monte-carlo density is reproducible from the seed") {
    const auto cfg = write_config("example.json", example());
    const auto a = workdir() / "mc_a.csv", b = workdir() / "mc_b.csv", c = workdir() / "mc_c.csv";
    REQUIRE(run("density --config " + cfg.string() + " --t 1.5 --method mc --out " + a.string()) == 0);
    REQUIRE(run("density --config " + cfg.string() + " --t 1.5 --method mc --out " + b.string()) == 0);
    REQUIRE(run("density --config " + cfg.string() + " --t 1.5 --method mc --seed 6 --out " + c.string()) == 0);
    CHECK(read_file(a) == read_file(b));
    CHECK(read_file(a) != read_file(c));
    CHECK(parse_csv(read_file(a)).rows.size() == parse_csv(read_file(c)).rows.size());
}

TEST_CASE("simulate raw output shape") {
    auto j = example();
    j["mc"]["n_paths"] = 1;
    const auto cfg = write_config("one_path.json", j);
    const auto out = workdir() / "raw.csv";
    REQUIRE(run("simulate --config " + cfg.string() + " --out " + out.string()) == 0);
    const Csv csv = parse_csv(read_file(out));
    CHECK(csv.header == "path,time,value");
    CHECK(csv.rows.size() == 2);
}

TEST_CASE("simulate histogram output") {
    auto j = example();
    j["simulate"]["output"] = "histogram";
    const auto cfg = write_config("hist.json", j);
    const auto out = workdir() / "hist.csv";
    REQUIRE(run("simulate --config " + cfg.string() + " --out " + out.string()) == 0);
    const Csv csv = parse_csv(read_file(out));
    CHECK(csv.header == "time,bin_center,density");
    CHECK(csv.rows.size() == 80);
}

TEST_CASE("compare writes curves and a json report") {
    const auto cfg = write_config("example.json", example());
    const auto out = workdir() / "cmp.csv";
    REQUIRE(run("compare --config " + cfg.string() + " --t 1.5 --method analytic,analytic --out " + out.string()) == 0);
    const Csv csv = parse_csv(read_file(out));
    CHECK(csv.header == "x,analytic,analytic");
    const auto report = nlohmann::json::parse(read_file(out.string() + ".json"));
    REQUIRE(report["pairs"].size() == 1);
    CHECK(report["pairs"][0]["l1"].get<double>() == 0.0);
    CHECK(report["pairs"][0]["linf"].get<double>() == 0.0);
    CHECK(report["pairs"][0]["ks"].get<double>() == 0.0);
}

TEST_CASE("kernel and bridge dumps") {
    auto j = example();
    j["grid"] = {{"min", -4}, {"max", 4}, {"n", 17}};
    const auto cfg = write_config("kernel.json", j);
    const auto out = workdir() / "kernel.csv";
    REQUIRE(run("kernel --config " + cfg.string() + " --method analytic --out " + out.string()) == 0);
    const Csv k = parse_csv(read_file(out));
    CHECK(k.header == "x1,x2,density");
    CHECK(k.rows.size() == 17 * 17);
    for (const auto& r : k.rows)
        if (num(r[0]) == 0.0 && num(r[1]) == 0.0) CHECK(num(r[2]) == Approx(0.152912).margin(1e-6));

    const auto bout = workdir() / "bridge.csv";
    REQUIRE(run("bridge --config " + cfg.string() + " --method analytic --out " + bout.string()) == 0);
    const Csv b = parse_csv(read_file(bout));
    CHECK(b.header == "u,density");
    for (const auto& r : b.rows)
        if (num(r[0]) == 0.0) CHECK(num(r[1]) == Approx(0.7978845608).margin(1e-9));
}

TEST_CASE("exit codes") {
    const auto cfg = write_config("example.json", example());
    CHECK(run("density --config " + cfg.string() + " --t 5 --method analytic") == 2);
    CHECK(run("density --config " + cfg.string() + " --t 1 --method exact") == 2);
    CHECK(run("density --config " + (workdir() / "missing.json").string() + " --t 1") == 2);

    const fs::path broken = workdir() / "broken.json";
    std::ofstream(broken) << "{ not json";
    CHECK(run("density --config " + broken.string() + " --t 1") == 2);

    auto degenerate = example();
    degenerate["model"]["s0"] = 0;
    degenerate["model"]["s1"] = 1;
    const auto dcfg = write_config("degenerate.json", degenerate);
    CHECK(run("density --config " + dcfg.string() + " --t 0.5 --method fp") == 3);

    auto stiff = example();
    stiff["model"]["a"] = 50;
    stiff["solver"]["dt"] = 0.05;
    const auto scfg = write_config("stiff.json", stiff);
    CHECK(run("density --config " + scfg.string() + " --t 0.5 --method fp") == 4);
}
