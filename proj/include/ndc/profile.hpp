#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ndc/dataset.hpp"
#include "ndc/errors.hpp"
#include "ndc/simulate.hpp"

namespace ndc {

struct ConstantProfile {
    double current = 0.0;   // A
    double duration = 0.0;  // s
};

/// `cycles` repetitions of `on_s` seconds at `current` followed by `off_s` at rest.
struct PulseProfile {
    double current = 0.0;
    double on_s = 0.0;
    double off_s = 0.0;
    int cycles = 1;
};

/// Piecewise-constant pseudo-random load standing in for a scaled drive
/// cycle: one level per `segment_s`, uniform between the two current limits.
struct DriveCycleProfile {
    std::uint64_t seed = 0;
    double i_min = 0.0;
    double i_max = 0.0;
    double duration = 0.0;
    double segment_s = 10.0;
};

using ProfileSpec = std::variant<ConstantProfile, PulseProfile, DriveCycleProfile>;

namespace detail {

inline std::size_t samples_for(double seconds, double dt) {
    return static_cast<std::size_t>(std::llround(seconds / dt));
}

// 53-bit uniform double in [0, 1); independent of the standard library's
// distribution implementation so profiles are identical across toolchains.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace detail

inline std::vector<double> generate_profile(const ProfileSpec& spec, double dt) {
    detail::require(std::isfinite(dt) && dt > 0.0, "generate_profile: dt must be > 0");
    return std::visit(
        [dt](const auto& s) -> std::vector<double> {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, ConstantProfile>) {
                detail::require(s.duration > 0.0, "constant profile: duration must be > 0");
                return std::vector<double>(detail::samples_for(s.duration, dt), s.current);
            } else if constexpr (std::is_same_v<T, PulseProfile>) {
                detail::require(s.on_s > 0.0 && s.off_s >= 0.0 && s.cycles > 0,
                                "pulse profile: need on_s > 0, off_s >= 0, cycles > 0");
                const auto on = detail::samples_for(s.on_s, dt);
                const auto off = detail::samples_for(s.off_s, dt);
                std::vector<double> out;
                out.reserve((on + off) * static_cast<std::size_t>(s.cycles));
                for (int c = 0; c < s.cycles; ++c) {
                    out.insert(out.end(), on, s.current);
                    out.insert(out.end(), off, 0.0);
                }
                return out;
            } else {
                detail::require(s.duration > 0.0 && s.segment_s > 0.0,
                                "drive-cycle profile: duration and segment_s must be > 0");
                const double lo = std::min(s.i_min, s.i_max);
                const double hi = std::max(s.i_min, s.i_max);
                const auto n = detail::samples_for(s.duration, dt);
                const auto seg = std::max<std::size_t>(1, detail::samples_for(s.segment_s, dt));
                std::mt19937_64 rng(s.seed);
                std::vector<double> out(n);
                double level = 0.0;
                for (std::size_t k = 0; k < n; ++k) {
                    if (k % seg == 0) level = lo + (hi - lo) * detail::unit_uniform(rng);
                    out[k] = level;
                }
                return out;
            }
        },
        spec);
}

/// Simulated voltage plus i.i.d. Gaussian noise. A simulation that hits a
/// cutoff yields a shortened dataset with `truncated` recorded in meta.
inline Dataset synthesize(const ComparisonModel& model, std::span<const double> profile, double dt, double soc0,
                          double noise_std, std::uint64_t seed) {
    detail::require(noise_std >= 0.0 && std::isfinite(noise_std), "synthesize: noise_std must be >= 0");
    const auto sim = simulate(model, profile, dt, soc0);
    Dataset data;
    data.dt = dt;
    data.soc0 = soc0;
    data.current.assign(profile.begin(), profile.begin() + static_cast<std::ptrdiff_t>(sim.voltage.size()));
    data.voltage = sim.voltage;
    if (noise_std > 0.0) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> noise(0.0, noise_std);
        for (double& v : data.voltage) v += noise(rng);
    }
    data.meta["model"] = std::string(model.name());
    data.meta["noise_std"] = detail::format_double(noise_std);
    data.meta["seed"] = std::to_string(seed);
    data.meta["truncated"] = sim.truncated() ? "true" : "false";
    if (sim.truncated()) {
        data.meta["truncated_at"] = std::to_string(sim.truncated_at);
        data.meta["truncation"] = std::string(to_string(sim.truncation));
    }
    return data;
}

struct FitMetrics {
    double rmse = 0.0;     // V
    double max_abs = 0.0;  // V
    /// 100 (pred - meas) / meas per sample.
    std::vector<double> percent_error;

    double max_abs_percent() const noexcept {
        double m = 0.0;
        for (double e : percent_error) m = std::max(m, std::abs(e));
        return m;
    }
};

inline FitMetrics metrics(std::span<const double> pred, std::span<const double> meas) {
    detail::require(pred.size() == meas.size(), "metrics: series lengths differ");
    detail::require(!meas.empty(), "metrics: empty series");
    FitMetrics m;
    m.percent_error.resize(meas.size());
    double sq = 0.0;
    for (std::size_t k = 0; k < meas.size(); ++k) {
        if (meas[k] == 0.0) throw InvalidArgument("metrics: measured voltage is zero at sample " + std::to_string(k));
        const double e = pred[k] - meas[k];
        sq += e * e;
        m.max_abs = std::max(m.max_abs, std::abs(e));
        m.percent_error[k] = 100.0 * e / meas[k];
    }
    m.rmse = std::sqrt(sq / static_cast<double>(meas.size()));
    return m;
}

}  // namespace ndc
