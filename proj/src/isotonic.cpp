#include "couplegen/isotonic.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <sstream>
#include <tuple>

#include "couplegen/numerics.hpp"

namespace couplegen {

std::vector<double> pava_project(std::span<const double> v, double lo, double hi)
{
    if (!(lo <= hi)) {
        throw DomainError("pava_project: lower bound exceeds upper bound");
    }
    struct Block {
        double sum;
        std::size_t count;
        double level;
    };
    std::vector<Block> blocks;
    blocks.reserve(v.size());
    for (double x : v) {
        blocks.push_back({x, 1, x});
        while (blocks.size() > 1 && blocks[blocks.size() - 2].level > blocks.back().level) {
            Block top = blocks.back();
            blocks.pop_back();
            Block& prev = blocks.back();
            prev.sum += top.sum;
            prev.count += top.count;
            prev.level = prev.sum / static_cast<double>(prev.count);
        }
    }
    std::vector<double> out;
    out.reserve(v.size());
    for (const Block& b : blocks) {
        out.insert(out.end(), b.count, std::clamp(b.level, lo, hi));
    }
    return out;
}

Objective::Objective(Fn fn)
    : fn_(std::move(fn)), counter_(std::make_shared<std::atomic<std::size_t>>(0))
{
}

double Objective::operator()(const ThetaSchedule& schedule) const
{
    counter_->fetch_add(1);
    return fn_(schedule);
}

GridPointError::GridPointError(std::size_t index, ScheduleFamily family, const std::string& cause)
    : std::runtime_error("grid point " + std::to_string(index) + " " + family.describe() +
                         " failed: " + cause),
      index(index), family(family)
{
}

namespace {

auto tie_key(const ScheduleFamily& f)
{
    return std::make_tuple(f.center, f.kind == FamilyKind::step01 ? 0.0 : f.scale,
                           static_cast<int>(f.kind));
}

} // namespace

std::size_t select_best(std::span<const ScheduleFamily> grid, std::span<const double> values)
{
    if (grid.empty() || grid.size() != values.size()) {
        throw DomainError("select_best: need one value per grid point");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < grid.size(); ++i) {
        if (values[i] > values[best] ||
            (values[i] == values[best] && tie_key(grid[i]) < tie_key(grid[best]))) {
            best = i;
        }
    }
    return best;
}

GridSearchResult grid_search(std::span<const ScheduleFamily> grid, std::size_t n_steps,
                             const Objective& objective, bool parallel)
{
    if (grid.empty()) {
        throw DomainError("grid_search: empty grid");
    }
    const auto n = static_cast<std::ptrdiff_t>(grid.size());
    std::vector<double> values(grid.size());
    std::vector<ThetaSchedule> schedules(grid.size());
    std::vector<std::exception_ptr> failures(grid.size());

#pragma omp parallel for schedule(dynamic) if (parallel)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        try {
            schedules[idx] = make_schedule(grid[idx], n_steps);
            values[idx] = objective(schedules[idx]);
            if (!std::isfinite(values[idx])) {
                throw DomainError("objective returned a non-finite value");
            }
        } catch (...) {
            failures[idx] = std::current_exception();
        }
    }

    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!failures[i]) {
            continue;
        }
        try {
            std::rethrow_exception(failures[i]);
        } catch (const std::exception& e) {
            throw GridPointError(i, grid[i], e.what());
        }
    }

    const std::size_t best = select_best(grid, values);
    return {best, grid[best], schedules[best], values[best], std::move(values)};
}

std::vector<ScheduleFamily> family_grid(FamilyKind kind, std::span<const double> centers,
                                        std::span<const double> scales)
{
    std::vector<ScheduleFamily> grid;
    for (double c : centers) {
        if (kind == FamilyKind::step01) {
            grid.push_back({kind, c, 1.0});
            continue;
        }
        for (double k : scales) {
            grid.push_back({kind, c, k});
        }
    }
    return grid;
}

ThetaSchedule default_initial_schedule(std::size_t n_steps)
{
    return make_schedule({FamilyKind::arctan, static_cast<double>(n_steps) / 5.0, 0.5}, n_steps);
}

SearchAborted::SearchAborted(const std::string& what, std::vector<TraceEntry> trace)
    : std::runtime_error(what), trace(std::move(trace))
{
}

SearchResult coordinate_search(const SearchConfig& config, const Objective& objective)
{
    if (config.max_evals < 1) {
        throw DomainError("coordinate_search: max_evals must be >= 1");
    }
    if (!(config.step_size > 0.0)) {
        throw DomainError("coordinate_search: step size must be positive");
    }
    require_valid(config.init);

    SearchResult result;
    result.schedule = config.init;
    result.value = objective(result.schedule);
    std::size_t evals = 1;
    result.trace.push_back({evals, result.value, result.schedule, true});
    if (!std::isfinite(result.value)) {
        throw SearchAborted("coordinate_search: initial objective value is not finite",
                            std::move(result.trace));
    }

    const std::size_t n = result.schedule.size();
    double step = config.step_size;
    while (evals < config.max_evals && step >= config.min_step) {
        bool improved = false;
        for (std::size_t i = 0; i < n && evals < config.max_evals; ++i) {
            for (double direction : {1.0, -1.0}) {
                if (evals >= config.max_evals) {
                    break;
                }
                std::vector<double> trial = result.schedule.values;
                trial[i] += direction * step;
                ThetaSchedule proposal{pava_project(trial, 0.0, 1.0)};
                if (proposal == result.schedule) {
                    continue;
                }
                const double value = objective(proposal);
                ++evals;
                if (!std::isfinite(value)) {
                    result.trace.push_back({evals, value, proposal, false});
                    throw SearchAborted("coordinate_search: objective returned a non-finite value "
                                        "at evaluation " + std::to_string(evals),
                                        std::move(result.trace));
                }
                const bool accept = value > result.value;
                result.trace.push_back({evals, value, proposal, accept});
                if (accept) {
                    result.schedule = std::move(proposal);
                    result.value = value;
                    improved = true;
                    break;
                }
            }
        }
        if (!improved) {
            step /= 2.0;
        }
    }
    return result;
}

void write_trace(const std::filesystem::path& dir, std::span<const TraceEntry> trace)
{
    std::filesystem::create_directories(dir);
    std::ofstream index(dir / "trace.csv");
    if (!index) {
        throw std::runtime_error("cannot write trace into " + dir.string());
    }
    index.precision(17);
    index << "eval_index,value,theta_csv_path\n";
    for (const TraceEntry& e : trace) {
        std::ostringstream name;
        name << "eval_" << e.eval_index << ".csv";
        write_schedule_csv(dir / name.str(), e.schedule);
        index << e.eval_index << ',' << e.value << ',' << name.str() << '\n';
    }
}

} // namespace couplegen
