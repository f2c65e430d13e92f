#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "couplegen/isotonic.hpp"
#include "couplegen/numerics.hpp"
#include "oracles.hpp"

using namespace couplegen;

namespace {

Objective distance_to(std::vector<double> target)
{
    return Objective([target](const ThetaSchedule& s) {
        double acc = 0;
        for (std::size_t i = 0; i < target.size(); ++i) {
            acc += (s[i] - target[i]) * (s[i] - target[i]);
        }
        return -acc;
    });
}

bool is_monotone_in_box(std::span<const double> x, double lo, double hi)
{
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] < lo || x[i] > hi || (i > 0 && x[i] < x[i - 1])) {
            return false;
        }
    }
    return true;
}

} // namespace

TEST_CASE("pava_project")
{
    SUBCASE("pools a single violation")
    {
        const auto x = pava_project(std::vector{0.5, 0.2, 0.8}, 0, 1);
        REQUIRE(x.size() == 3);
        CHECK(x[0] == doctest::Approx(0.35).epsilon(1e-15));
        CHECK(x[1] == doctest::Approx(0.35).epsilon(1e-15));
        CHECK(x[2] == 0.8);
        const auto grid = oracle::grid_monotone_projection({0.5, 0.2, 0.8}, 0, 1, 1e-3);
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(std::abs(x[i] - grid[i]) <= 2e-3);
        }
    }
    SUBCASE("monotone in-box input is a fixed point")
    {
        const std::vector v{0.0, 0.1, 0.1, 0.7, 1.0};
        CHECK(pava_project(v, 0, 1) == v);
    }
    SUBCASE("clamps pooled levels")
    {
        CHECK(pava_project(std::vector{1.4, 1.5}, 0, 1) == std::vector{1.0, 1.0});
        CHECK(pava_project(std::vector{-2.0, -3.0}, 0, 1) == std::vector{0.0, 0.0});
    }
    SUBCASE("empty input and bad box")
    {
        CHECK(pava_project(std::vector<double>{}, 0, 1).empty());
        CHECK_THROWS_AS(pava_project(std::vector{0.5}, 1, 0), DomainError);
    }
    SUBCASE("matches the brute-force grid projection and is idempotent")
    {
        Rng rng(7);
        for (int trial = 0; trial < 100; ++trial) {
            const std::size_t n = 1 + rng.next_u64() % 4;
            std::vector<double> v(n);
            for (auto& x : v) {
                x = rng.uniform(0, 1);
            }
            const auto x = pava_project(v, 0, 1);
            const auto grid = oracle::grid_monotone_projection(v, 0, 1, 1e-3);
            for (std::size_t i = 0; i < n; ++i) {
                CHECK(std::abs(x[i] - grid[i]) <= 2e-3);
            }
            CHECK(is_monotone_in_box(x, 0, 1));
            CHECK(pava_project(x, 0, 1) == x);
        }
    }
    SUBCASE("longer out-of-box inputs stay idempotent")
    {
        Rng rng(8);
        for (int trial = 0; trial < 200; ++trial) {
            std::vector<double> v(1 + rng.next_u64() % 60);
            for (auto& x : v) {
                x = rng.uniform(-0.5, 1.5);
            }
            const auto x = pava_project(v, 0, 1);
            CHECK(is_monotone_in_box(x, 0, 1));
            CHECK(pava_project(x, 0, 1) == x);
        }
    }
}

TEST_CASE("grid_search")
{
    const Objective peak_at_7([](const ThetaSchedule& s) {
        // step01 center c gives c - 1 leading zeros for integer c.
        const auto zeros = std::count(s.values.begin(), s.values.end(), 0.0);
        const double c = static_cast<double>(zeros + 1);
        return -(c - 7) * (c - 7);
    });

    SUBCASE("analytic argmax")
    {
        const std::vector centers{5.0, 6.0, 7.0, 8.0, 9.0};
        const auto grid = family_grid(FamilyKind::step01, centers, std::vector{1.0});
        const auto r = grid_search(grid, 10, peak_at_7);
        CHECK(r.best_family.center == 7.0);
        CHECK(r.best_value == 0.0);
        CHECK(r.values == std::vector{-4.0, -1.0, 0.0, -1.0, -4.0});
        CHECK(r.best_schedule == make_schedule(r.best_family, 10));
        CHECK(peak_at_7.evaluations() == 5);
    }
    SUBCASE("single grid point")
    {
        const std::vector<ScheduleFamily> grid{{FamilyKind::arctan, 3.0, 0.5}};
        const Objective obj([](const ThetaSchedule& s) { return s[0]; });
        const auto r = grid_search(grid, 5, obj);
        CHECK(r.best_index == 0);
        CHECK(r.best_value == make_schedule(grid[0], 5)[0]);
    }
    SUBCASE("ties")
    {
        const Objective flat([](const ThetaSchedule&) { return 1.0; });
        std::vector<ScheduleFamily> grid{{FamilyKind::arctan, 8.0, 0.5}, {FamilyKind::arctan, 4.0, 0.5}};
        CHECK(grid_search(grid, 10, flat).best_family.center == 4.0);

        grid = {{FamilyKind::sin, 4.0, 0.8}, {FamilyKind::sin, 4.0, 0.5}};
        CHECK(grid_search(grid, 10, flat).best_family.scale == 0.5);

        grid = {{FamilyKind::sin, 4.0, 0.5}, {FamilyKind::arctan, 4.0, 0.5}};
        CHECK(grid_search(grid, 10, flat).best_family.kind == FamilyKind::arctan);

        grid = {{FamilyKind::arctan, 4.0, 0.5}, {FamilyKind::step01, 4.0, 3.0}};
        CHECK(grid_search(grid, 10, flat).best_family.kind == FamilyKind::step01);
    }
    SUBCASE("every point is evaluated once, serial or parallel")
    {
        const std::vector centers{3.0, 4.0, 5.0, 6.0, 7.0, 8.0};
        const std::vector scales{0.5, 0.8};
        auto grid = family_grid(FamilyKind::arctan, centers, scales);
        const auto sins = family_grid(FamilyKind::sin, centers, scales);
        grid.insert(grid.end(), sins.begin(), sins.end());
        for (bool parallel : {false, true}) {
            const Objective obj([](const ThetaSchedule& s) { return -s[3]; });
            const auto r = grid_search(grid, 10, obj, parallel);
            CHECK(obj.evaluations() == grid.size());
            CHECK(r.values.size() == grid.size());
        }
    }
    SUBCASE("a failing point is identified")
    {
        const std::vector<ScheduleFamily> grid{{FamilyKind::step01, 2.0, 1.0},
                                               {FamilyKind::step01, 5.0, 1.0}};
        const Objective obj([](const ThetaSchedule& s) {
            if (s[2] == 0.0) {
                throw std::runtime_error("boom");
            }
            return 0.0;
        });
        try {
            grid_search(grid, 10, obj);
            FAIL("expected GridPointError");
        } catch (const GridPointError& e) {
            CHECK(e.index == 1);
            CHECK(e.family.center == 5.0);
        }
        const Objective nan_obj([](const ThetaSchedule&) { return std::nan(""); });
        CHECK_THROWS_AS(grid_search(grid, 10, nan_obj), GridPointError);
    }
    SUBCASE("empty grid")
    {
        CHECK_THROWS_AS(grid_search({}, 10, peak_at_7), DomainError);
    }
}

TEST_CASE("coordinate_search")
{
    SUBCASE("converges to a monotone target")
    {
        const std::vector target{0.0, 0.05, 0.1, 0.1, 0.3, 0.55, 0.6, 0.8, 0.95, 1.0};
        const Objective obj = distance_to(target);
        SearchConfig cfg;
        cfg.max_evals = 5000;
        cfg.init = default_initial_schedule(10);
        const auto r = coordinate_search(cfg, obj);
        CHECK(obj.evaluations() <= 5000);
        for (std::size_t i = 0; i < 10; ++i) {
            CHECK(std::abs(r.schedule[i] - target[i]) <= 0.01);
        }
        CHECK_FALSE(validate(r.schedule));
        CHECK(r.trace.size() == obj.evaluations());
    }
    SUBCASE("one evaluation returns the initial schedule")
    {
        const Objective obj = distance_to(std::vector(5, 0.5));
        SearchConfig cfg;
        cfg.max_evals = 1;
        cfg.init = default_initial_schedule(5);
        const auto r = coordinate_search(cfg, obj);
        CHECK(r.schedule == cfg.init);
        CHECK(r.value == distance_to(std::vector(5, 0.5))(cfg.init));
        CHECK(obj.evaluations() == 1);
    }
    SUBCASE("constant objective leaves the initial schedule")
    {
        const Objective obj([](const ThetaSchedule&) { return 3.0; });
        SearchConfig cfg;
        cfg.init = default_initial_schedule(8);
        const auto r = coordinate_search(cfg, obj);
        CHECK(r.schedule == cfg.init);
        CHECK(r.value == 3.0);
        CHECK_FALSE(validate(r.schedule));
    }
    SUBCASE("never ends below the initial value and stays feasible")
    {
        Rng rng(12);
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<double> target(6);
            for (auto& x : target) {
                x = rng.uniform(-0.5, 1.5); // not necessarily feasible
            }
            const Objective obj = distance_to(target);
            SearchConfig cfg;
            cfg.max_evals = 300;
            cfg.init = default_initial_schedule(6);
            const double start = distance_to(target)(cfg.init);
            const auto r = coordinate_search(cfg, obj);
            CHECK(r.value >= start);
            CHECK_FALSE(validate(r.schedule));
        }
    }
    SUBCASE("a non-finite value aborts with the trace")
    {
        const Objective obj([](const ThetaSchedule& s) {
            return s[3] > 0.0 ? std::numeric_limits<double>::quiet_NaN() : 0.0;
        });
        SearchConfig cfg;
        cfg.init = ThetaSchedule::constant(4, 0.0);
        try {
            coordinate_search(cfg, obj);
            FAIL("expected SearchAborted");
        } catch (const SearchAborted& e) {
            REQUIRE(e.trace.size() == 2);
            CHECK(std::isnan(e.trace.back().value));
        }
    }
    SUBCASE("invalid configuration")
    {
        const Objective obj([](const ThetaSchedule&) { return 0.0; });
        SearchConfig cfg;
        cfg.init = ThetaSchedule{{0.5, 0.2}};
        CHECK_THROWS_AS(coordinate_search(cfg, obj), DomainError);
        cfg.init = ThetaSchedule::constant(2, 0.5);
        cfg.max_evals = 0;
        CHECK_THROWS_AS(coordinate_search(cfg, obj), DomainError);
    }
}

TEST_CASE("write_trace")
{
    const Objective obj = distance_to(std::vector{0.2, 0.4, 0.6});
    SearchConfig cfg;
    cfg.max_evals = 6;
    cfg.init = default_initial_schedule(3);
    const auto r = coordinate_search(cfg, obj);
    const auto dir = std::filesystem::temp_directory_path() / "couplegen_trace_test";
    std::filesystem::remove_all(dir);
    write_trace(dir, r.trace);

    std::ifstream is(dir / "trace.csv");
    std::string line;
    std::getline(is, line);
    CHECK(line == "eval_index,value,theta_csv_path");
    std::size_t rows = 0;
    while (std::getline(is, line)) {
        ++rows;
        CHECK(line.rfind(std::to_string(rows) + ",", 0) == 0);
        CHECK(line.ends_with("eval_" + std::to_string(rows) + ".csv"));
    }
    CHECK(rows == r.trace.size());
    CHECK(read_schedule_csv(dir / "eval_1.csv") == cfg.init);
    std::filesystem::remove_all(dir);
}
