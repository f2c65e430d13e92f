#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace couplegen {

/// Per-step weights theta_1..theta_N. Valid schedules are nondecreasing and
/// lie in [0, 1]; see validate().
struct ThetaSchedule {
    std::vector<double> values;

    std::size_t size() const { return values.size(); }
    double operator[](std::size_t i) const { return values[i]; }

    static ThetaSchedule constant(std::size_t n, double value);

    friend bool operator==(const ThetaSchedule&, const ThetaSchedule&) = default;
};

enum class FamilyKind { step01, arctan, sin };

std::string to_string(FamilyKind kind);
FamilyKind parse_family_kind(const std::string& name);

/// A parametric schedule shape. `scale` is ignored by step01.
struct ScheduleFamily {
    FamilyKind kind = FamilyKind::arctan;
    double center = 0.0;
    double scale = 1.0;

    void check() const;
    std::string describe() const;
};

/// Value of the family at time t (1-based step index).
double eval_family(const ScheduleFamily& family, double t);

/// values[i] = eval_family(family, i + 1) for i in [0, n_steps).
ThetaSchedule make_schedule(const ScheduleFamily& family, std::size_t n_steps);

struct ScheduleViolation {
    enum class Kind { below_zero, above_one, not_finite, decreasing };
    Kind kind;
    std::size_t index;

    std::string describe() const;
};

/// First index that breaks the box or ordering constraint, if any.
std::optional<ScheduleViolation> validate(const ThetaSchedule& schedule);

/// Throws DomainError when validate() reports a violation.
void require_valid(const ThetaSchedule& schedule);

// CSV with header `step,theta`, 1-based steps, theta at 17 significant digits.
void write_schedule_csv(const std::filesystem::path& path, const ThetaSchedule& schedule);
std::string schedule_csv(const ThetaSchedule& schedule);
ThetaSchedule read_schedule_csv(const std::filesystem::path& path);

} // namespace couplegen
