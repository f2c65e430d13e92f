#include "couplegen/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "couplegen/numerics.hpp"
#include "couplegen/tensor_io.hpp"

namespace couplegen {

ThetaSchedule ThetaSchedule::constant(std::size_t n, double value)
{
    return {std::vector<double>(n, value)};
}

std::string to_string(FamilyKind kind)
{
    switch (kind) {
    case FamilyKind::step01:
        return "step01";
    case FamilyKind::arctan:
        return "arctan";
    case FamilyKind::sin:
        return "sin";
    }
    return "unknown";
}

FamilyKind parse_family_kind(const std::string& name)
{
    if (name == "step01" || name == "01") {
        return FamilyKind::step01;
    }
    if (name == "arctan") {
        return FamilyKind::arctan;
    }
    if (name == "sin") {
        return FamilyKind::sin;
    }
    throw DomainError("unknown schedule family '" + name + "' (expected step01, arctan or sin)");
}

void ScheduleFamily::check() const
{
    if (!std::isfinite(center)) {
        throw DomainError("schedule family: center must be finite");
    }
    if (kind != FamilyKind::step01 && !(scale > 0.0 && std::isfinite(scale))) {
        throw DomainError("schedule family " + to_string(kind) +
                          ": scale must be positive and finite");
    }
}

std::string ScheduleFamily::describe() const
{
    std::ostringstream os;
    os << to_string(kind) << "(center=" << center;
    if (kind != FamilyKind::step01) {
        os << ", scale=" << scale;
    }
    os << ")";
    return os.str();
}

double eval_family(const ScheduleFamily& family, double t)
{
    family.check();
    const double c = family.center;
    const double k = family.scale;
    switch (family.kind) {
    case FamilyKind::step01:
        return t < c ? 0.0 : 1.0;
    case FamilyKind::arctan:
        return std::clamp(std::atan(k * (t - c)) / std::numbers::pi + 0.5, 0.0, 1.0);
    case FamilyKind::sin: {
        const double half_width = std::numbers::pi / (2.0 * k);
        if (t <= c - half_width) {
            return 0.0;
        }
        if (t >= c + half_width) {
            return 1.0;
        }
        return std::clamp(0.5 * std::sin(k * (t - c)) + 0.5, 0.0, 1.0);
    }
    }
    throw DomainError("eval_family: unknown family");
}

ThetaSchedule make_schedule(const ScheduleFamily& family, std::size_t n_steps)
{
    if (n_steps == 0) {
        throw DomainError("make_schedule: n_steps must be >= 1");
    }
    ThetaSchedule s;
    s.values.reserve(n_steps);
    for (std::size_t i = 0; i < n_steps; ++i) {
        const double v = eval_family(family, static_cast<double>(i + 1));
        if (!std::isfinite(v)) {
            throw DomainError("make_schedule: " + family.describe() +
                              " is not finite at step " + std::to_string(i + 1));
        }
        s.values.push_back(v);
    }
    return s;
}

std::string ScheduleViolation::describe() const
{
    const char* what = "";
    switch (kind) {
    case Kind::below_zero:
        what = "value below 0";
        break;
    case Kind::above_one:
        what = "value above 1";
        break;
    case Kind::not_finite:
        what = "non-finite value";
        break;
    case Kind::decreasing:
        what = "value smaller than its predecessor";
        break;
    }
    return std::string(what) + " at index " + std::to_string(index);
}

std::optional<ScheduleViolation> validate(const ThetaSchedule& schedule)
{
    using Kind = ScheduleViolation::Kind;
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        const double v = schedule[i];
        if (!std::isfinite(v)) {
            return ScheduleViolation{Kind::not_finite, i};
        }
        if (v < 0.0) {
            return ScheduleViolation{Kind::below_zero, i};
        }
        if (v > 1.0) {
            return ScheduleViolation{Kind::above_one, i};
        }
        if (i > 0 && v < schedule[i - 1]) {
            return ScheduleViolation{Kind::decreasing, i};
        }
    }
    return std::nullopt;
}

void require_valid(const ThetaSchedule& schedule)
{
    if (auto violation = validate(schedule)) {
        throw DomainError("invalid theta schedule: " + violation->describe());
    }
}

std::string schedule_csv(const ThetaSchedule& schedule)
{
    std::ostringstream os;
    os.precision(17);
    os << "step,theta\n";
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        os << (i + 1) << ',' << schedule[i] << '\n';
    }
    return os.str();
}

void write_schedule_csv(const std::filesystem::path& path, const ThetaSchedule& schedule)
{
    std::ofstream os(path);
    if (!os) {
        throw std::runtime_error("cannot write schedule " + path.string());
    }
    os << schedule_csv(schedule);
}

ThetaSchedule read_schedule_csv(const std::filesystem::path& path)
{
    std::ifstream is(path);
    if (!is) {
        throw std::runtime_error("cannot read schedule " + path.string());
    }
    std::string line;
    if (!std::getline(is, line) || line.rfind("step,theta", 0) != 0) {
        throw FormatError(path.string() + ": expected header 'step,theta'");
    }
    ThetaSchedule s;
    std::size_t expected_step = 1;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        const auto comma = line.find(',');
        if (comma == std::string::npos) {
            throw FormatError(path.string() + ": malformed row '" + line + "'");
        }
        try {
            const auto step = std::stoul(line.substr(0, comma));
            if (step != expected_step) {
                throw FormatError(path.string() + ": expected step " +
                                  std::to_string(expected_step) + ", found " + std::to_string(step));
            }
            s.values.push_back(std::stod(line.substr(comma + 1)));
        } catch (const std::logic_error&) {
            throw FormatError(path.string() + ": malformed row '" + line + "'");
        }
        ++expected_step;
    }
    if (s.values.empty()) {
        throw FormatError(path.string() + ": schedule has no rows");
    }
    return s;
}

} // namespace couplegen
