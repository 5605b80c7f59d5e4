#include "doctest.h"

#include "geobeam/experiments.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace geobeam;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name)
{
    auto p = fs::temp_directory_path() / ("geobeam_unit_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

const char* riccati_cfg = "kind = riccati_demo\n"
                          "dim = 2\n"
                          "t0 = 0\nt_lo = 0\nt_hi = 2\n";

} // namespace

TEST_CASE("expression grammar")
{
    Vec x(3);
    x << 0.5, -2.0, 1.0;
    CHECK(Expr::parse("1 + 2 * 3")(x) == cplx(7));
    CHECK(Expr::parse("2 ^ 3 ^ 2")(x) == cplx(512));
    CHECK(Expr::parse("-x1^2")(x) == cplx(-0.25));
    CHECK(Expr::parse("(x1 - x2) / 2")(x) == cplx(1.25));
    CHECK(std::abs(Expr::parse("exp(i * pi)")(x) + 1.0) < 1e-15);
    CHECK(Expr::parse("r")(x).real() == doctest::Approx(std::sqrt(5.25)));
    CHECK(Expr::parse("theta")(x).real() == doctest::Approx(std::atan2(-2.0, 0.5)));
    CHECK(Expr::parse("abs(x2) + sqrt(4) + log(1) + sin(0) + cos(0)")(x) == cplx(5));
    CHECK(Expr::parse("x3 * x1").max_coordinate() == 3);
    CHECK(Expr::parse("theta").max_coordinate() == 2);
    CHECK_THROWS_AS(Expr::parse("1 +"), ConfigurationError);
    CHECK_THROWS_AS(Expr::parse("foo(1)"), ConfigurationError);
    CHECK_THROWS_AS(Expr::parse("(1"), ConfigurationError);
    CHECK_THROWS_AS(Expr::parse("x4"), ConfigurationError);
    CHECK_THROWS_AS(Expr::parse("x3")(Vec::Zero(2)), DomainError);
}

TEST_CASE("config parsing")
{
    auto c = parse_config_text("# comment\nkind = beam_residual_sweep\nh = 0.1, 0.05  # trailing\nsigma = 0.3\n"
                               "A1 = x2\nseed = 7\n");
    CHECK(c.kind == ExperimentKind::beam_residual_sweep);
    CHECK(c.h_list == std::vector<double>{0.1, 0.05});
    CHECK(c.sigma == 0.3);
    CHECK(c.seed == 7);
    CHECK(c.expr("A1").has_value());
    CHECK(!c.expr("A2").has_value());

    auto same = parse_config_text("kind = beam_residual_sweep\nseed = 7\nA1 = x2\nsigma = 0.3\nh = 0.1, 0.05\n");
    CHECK(c.hash() == same.hash());
    CHECK(c.hash().size() == 64);
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");

    CHECK_THROWS_AS(parse_config_text("h = 0.1\n"), UsageError);
    CHECK_THROWS_AS(parse_config_text("kind = nonsense\n"), UsageError);
    CHECK_THROWS_AS(parse_config_text("kind = riccati_demo\nbogus = 1\n"), UsageError);
    CHECK_THROWS_AS(parse_config_text("kind = riccati_demo\ndim = 2\ndim = 3\n"), UsageError);
    CHECK_THROWS_AS(parse_config_text("kind = beam_residual_sweep\nh = 0.05, 0.1\n"), ConfigurationError);
    CHECK_THROWS_AS(parse_config_text("kind = beam_residual_sweep\nh = 0.1, -0.05\n"), ConfigurationError);
    CHECK_THROWS_AS(parse_config_text("kind = beam_residual_sweep\nsigma = 0.5\n"), ConfigurationError);
    CHECK_THROWS_AS(parse_config_text("kind = beam_residual_sweep\nA_file = missing.csv\n"), ConfigurationError);
    CHECK_THROWS_AS(parse_config_text("kind = beam_residual_sweep\nA1 = x1 +\n"), ConfigurationError);
    CHECK_THROWS_AS(experiment_kind_from_string("nope"), UsageError);
    CHECK(to_string(experiment_kind_from_string("holonomy_gauge")) == "holonomy_gauge");
}

TEST_CASE("tabulated fields")
{
    auto dir = scratch("tab");
    {
        std::ofstream f(dir / "q.csv");
        f << "x1,x2,re,im\n";
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 4; ++j)
                f << i * 0.5 << "," << j * 0.25 << "," << i + 10 * j << ",0\n";
    }
    auto t = load_tabulated((dir / "q.csv").string(), 2, 1);
    CHECK(t.grid.n[0] == 5);
    CHECK(t.grid.n[1] == 4);
    CHECK(t.columns.size() == 1);
    CHECK(t.columns[0][t.grid.index(4, 3)] == cplx(34));
    fs::remove_all(dir);
}

TEST_CASE("csv helpers")
{
    CHECK(csv_field("plain") == "plain");
    CHECK(csv_field("a,b") == "\"a,b\"");
    CHECK(csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
    CHECK(csv_number(0.1) == "0.10000000000000001");
    CHECK(csv_number(-0.0) == "0");
}

TEST_CASE("riccati run writes a manifest and is deterministic")
{
    auto cfg = parse_config_text(riccati_cfg);
    auto d1 = scratch("run1"), d2 = scratch("run2");
    RunOptions o1{d1.string(), 1, std::nullopt}, o2{d2.string(), 1, std::nullopt};
    auto r1 = run_experiment(cfg, o1);
    auto r2 = run_experiment(cfg, o2);
    CHECK(r1.passed());
    CHECK(!r1.assertions.empty());
    REQUIRE(r1.files == r2.files);
    for (const auto& f : r1.files)
        CHECK(slurp(d1 / f) == slurp(d2 / f));
    CHECK(fs::exists(d1 / "manifest.json"));
    CHECK(fs::exists(d1 / "riccati_demo.csv"));
    auto text = report(d1.string());
    CHECK(text.find("riccati_demo") != std::string::npos);
    auto empty = scratch("empty");
    CHECK_THROWS_AS(report(empty.string()), UsageError);
    fs::remove_all(d1);
    fs::remove_all(d2);
    fs::remove_all(empty);
}

TEST_CASE("failed assertions are reported")
{
    auto cfg = parse_config_text(std::string(riccati_cfg) + "assert.max_error = 1e-30\n");
    auto d = scratch("fail");
    auto r = run_experiment(cfg, RunOptions{d.string(), 1, std::nullopt});
    CHECK(!r.passed());
    fs::remove_all(d);
}

TEST_CASE("tabulated fields need four nodes per axis")
{
    auto dir = scratch("tab_small");
    {
        std::ofstream f(dir / "q.csv");
        f << "x1,x2,re,im\n";
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 4; ++j)
                f << i << "," << j << ",1,0\n";
    }
    CHECK_THROWS_AS(load_tabulated((dir / "q.csv").string(), 2, 1), ConfigurationError);
    fs::remove_all(dir);
}
