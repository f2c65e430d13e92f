#pragma once

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "couplegen/schedule.hpp"

namespace couplegen {

/// Euclidean projection of `v` onto {x : lo <= x_1 <= ... <= x_N <= hi}.
/// Equal-weight pool-adjacent-violators, then each pooled level clamped.
std::vector<double> pava_project(std::span<const double> v, double lo, double hi);

/// Schedule score to be maximized, with a thread-safe evaluation counter.
/// The wrapped callable must be deterministic and free of shared mutable
/// state; grid_search may call it concurrently.
class Objective {
public:
    using Fn = std::function<double(const ThetaSchedule&)>;

    explicit Objective(Fn fn);

    double operator()(const ThetaSchedule& schedule) const;
    std::size_t evaluations() const { return counter_->load(); }

private:
    Fn fn_;
    std::shared_ptr<std::atomic<std::size_t>> counter_;
};

/// A grid point failed; `index` and `family` identify it.
class GridPointError : public std::runtime_error {
public:
    GridPointError(std::size_t index, ScheduleFamily family, const std::string& cause);

    std::size_t index;
    ScheduleFamily family;
};

struct GridSearchResult {
    std::size_t best_index = 0;
    ScheduleFamily best_family;
    ThetaSchedule best_schedule;
    double best_value = 0.0;
    std::vector<double> values; ///< one per grid point, grid order
};

/// Index of the largest value with the grid_search tie rule.
std::size_t select_best(std::span<const ScheduleFamily> grid, std::span<const double> values);

/// Evaluates every grid point once and returns the argmax. Ties go to the
/// smaller center, then smaller scale, then step01 < arctan < sin.
GridSearchResult grid_search(std::span<const ScheduleFamily> grid, std::size_t n_steps,
                             const Objective& objective, bool parallel = true);

/// The grid of centers x scales for one family (step01 ignores scales and
/// contributes one point per center).
std::vector<ScheduleFamily> family_grid(FamilyKind kind, std::span<const double> centers,
                                        std::span<const double> scales);

struct SearchConfig {
    std::size_t max_evals = 1000;
    ThetaSchedule init;
    double step_size = 0.1;
    double min_step = 1e-4;
};

/// arctan schedule with center N/5 and scale 0.5.
ThetaSchedule default_initial_schedule(std::size_t n_steps);

struct TraceEntry {
    std::size_t eval_index; ///< 1-based
    double value;
    ThetaSchedule schedule;
    bool accepted;
};

struct SearchResult {
    ThetaSchedule schedule;
    double value = 0.0;
    std::vector<TraceEntry> trace;
};

/// The objective returned a non-finite value; the trace up to that point is kept.
class SearchAborted : public std::runtime_error {
public:
    SearchAborted(const std::string& what, std::vector<TraceEntry> trace);

    std::vector<TraceEntry> trace;
};

/// Cyclic coordinate pattern search over the monotone cone in [0, 1]^N.
/// Each proposal moves one coordinate by +/-step and is projected with
/// pava_project; it is kept only on strict improvement. The step halves after
/// a cycle without improvement. Stops at max_evals or when step < min_step.
SearchResult coordinate_search(const SearchConfig& config, const Objective& objective);

/// Writes `eval_index,value,theta_csv_path` plus one schedule CSV per
/// evaluation into `dir`.
void write_trace(const std::filesystem::path& dir, std::span<const TraceEntry> trace);

} // namespace couplegen
