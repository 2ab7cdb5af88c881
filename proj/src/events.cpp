#include "evfuse/events.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "evfuse/common.hpp"
#include "evfuse/kernels.hpp"

namespace evfuse {

void EventStream::validate() const {
    require(width > 0 && height > 0, "EventStream: empty geometry");
    double last = -std::numeric_limits<double>::infinity();
    for (const Event& e : events) {
        require(e.x >= 0 && e.x < width && e.y >= 0 && e.y < height,
                "EventStream: event outside declared geometry");
        require(e.p == -1 || e.p == 1, "EventStream: polarity must be -1 or +1");
        require(e.t >= last, "EventStream: timestamps must be non-decreasing");
        last = e.t;
    }
}

double EventVolume::sum() const {
    double acc = 0.0;
    for (double v : data) acc += v;
    return acc;
}

std::vector<double> log_intensity(const std::vector<double>& frame, int width, int height,
                                  double log_eps) {
    require(width > 0 && height > 0, "log_intensity: empty geometry");
    require(static_cast<long>(frame.size()) == static_cast<long>(width) * height,
            "log_intensity: frame size mismatch");
    std::vector<double> out(frame.size());
    for (std::size_t i = 0; i < frame.size(); ++i) {
        require(frame[i] >= 0.0, "log_intensity: negative intensity");
        out[i] = std::log(frame[i] + log_eps);
    }
    return out;
}

EventStream simulate_events(const LogIntensityPair& pair, const SimulatorConfig& cfg) {
    require(pair.width > 0 && pair.height > 0, "simulate_events: empty geometry");
    const long n = static_cast<long>(pair.width) * pair.height;
    require(static_cast<long>(pair.prev.size()) == n && static_cast<long>(pair.curr.size()) == n,
            "simulate_events: frame geometry mismatch");
    require(pair.dt > 0.0, "simulate_events: dt must be positive");
    require(cfg.threshold_c > 0.0, "simulate_events: threshold must be positive");
    require(cfg.max_events_per_pixel > 0, "simulate_events: bad event cap");

    EventStream out;
    out.width = pair.width;
    out.height = pair.height;
    for (int y = 0; y < pair.height; ++y) {
        for (int x = 0; x < pair.width; ++x) {
            const long i = static_cast<long>(y) * pair.width + x;
            const double dl = pair.curr[i] - pair.prev[i];
            const double mag = std::abs(dl);
            if (mag < cfg.threshold_c) continue;
            const int k = static_cast<int>(
                std::min(std::floor(mag / cfg.threshold_c),
                         static_cast<double>(cfg.max_events_per_pixel)));
            const int p = dl > 0.0 ? +1 : -1;
            for (int j = 1; j <= k; ++j) {
                // j-th threshold crossing, linearly interpolated over dt
                out.events.push_back({x, y, pair.dt * (j * cfg.threshold_c / mag), p});
            }
        }
    }
    std::stable_sort(out.events.begin(), out.events.end(),
                     [](const Event& a, const Event& b) { return a.t < b.t; });
    return out;
}

namespace {

// t~ for one polarity sub-stream, written into out at the events' stream
// positions.
void normalize_polarity(const EventStream& s, int polarity, int bins, std::vector<double>& out) {
    double t_first = 0.0, t_last = 0.0;
    bool seen = false;
    for (const Event& e : s.events) {
        if (e.p != polarity) continue;
        if (!seen) {
            t_first = e.t;
            seen = true;
        }
        t_last = e.t;
    }
    if (!seen) return;
    const double range = t_last - t_first;
    const double factor = (bins > 1 && range > 0.0) ? (bins - 1) / range : 0.0;
    for (std::size_t i = 0; i < s.events.size(); ++i) {
        if (s.events[i].p != polarity) continue;
        out[i] = factor * (s.events[i].t - t_first);
    }
}

inline void deposit(EventVolume& vol, int base_bin, int bins, double tn, int y, int x) {
    const int b0 = static_cast<int>(std::floor(tn));
    const double frac = tn - b0;
    if (b0 >= 0 && b0 < bins) vol.at(base_bin + b0, y, x) += 1.0 - frac;
    if (b0 + 1 >= 0 && b0 + 1 < bins && frac > 0.0) vol.at(base_bin + b0 + 1, y, x) += frac;
}

}  // namespace

std::vector<double> normalize_timestamps(const EventStream& stream, int bins_pos, int bins_neg) {
    require(bins_pos >= 1 && bins_neg >= 1, "normalize_timestamps: bins must be >= 1");
    std::vector<double> out(stream.events.size(), 0.0);
    normalize_polarity(stream, +1, bins_pos, out);
    normalize_polarity(stream, -1, bins_neg, out);
    return out;
}

EventVolume discretize_volume_serial(const EventStream& stream, int bins_pos, int bins_neg) {
    require(bins_pos >= 1 && bins_neg >= 1, "discretize_volume: bins must be >= 1");
    require(stream.width > 0 && stream.height > 0, "discretize_volume: empty geometry");
    EventVolume vol;
    vol.bins_pos = bins_pos;
    vol.bins_neg = bins_neg;
    vol.width = stream.width;
    vol.height = stream.height;
    vol.data.assign(static_cast<std::size_t>(bins_pos + bins_neg) * stream.height * stream.width,
                    0.0);
    const std::vector<double> tn = normalize_timestamps(stream, bins_pos, bins_neg);
    for (std::size_t i = 0; i < stream.events.size(); ++i) {
        const Event& e = stream.events[i];
        if (e.p > 0)
            deposit(vol, 0, bins_pos, tn[i], e.y, e.x);
        else
            deposit(vol, bins_pos, bins_neg, tn[i], e.y, e.x);
    }
    return vol;
}

EventVolume discretize_volume(const EventStream& stream, int bins_pos, int bins_neg) {
    const int nt = kernels::threads();
    if (nt <= 1 || stream.events.size() < 4096 || stream.height < 2)
        return discretize_volume_serial(stream, bins_pos, bins_neg);

    require(bins_pos >= 1 && bins_neg >= 1, "discretize_volume: bins must be >= 1");
    require(stream.width > 0 && stream.height > 0, "discretize_volume: empty geometry");
    EventVolume vol;
    vol.bins_pos = bins_pos;
    vol.bins_neg = bins_neg;
    vol.width = stream.width;
    vol.height = stream.height;
    vol.data.assign(static_cast<std::size_t>(bins_pos + bins_neg) * stream.height * stream.width,
                    0.0);
    const std::vector<double> tn = normalize_timestamps(stream, bins_pos, bins_neg);

    // Bucket event indices by row, preserving stream order within each row.
    // Rows never share an accumulator cell, so processing rows in parallel
    // reproduces the serial per-cell accumulation order exactly.
    std::vector<std::vector<std::size_t>> rows(static_cast<std::size_t>(stream.height));
    for (std::size_t i = 0; i < stream.events.size(); ++i)
        rows[static_cast<std::size_t>(stream.events[i].y)].push_back(i);

#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(nt)
#endif
    for (int y = 0; y < stream.height; ++y) {
        for (std::size_t i : rows[static_cast<std::size_t>(y)]) {
            const Event& e = stream.events[i];
            if (e.p > 0)
                deposit(vol, 0, bins_pos, tn[i], e.y, e.x);
            else
                deposit(vol, bins_pos, bins_neg, tn[i], e.y, e.x);
        }
    }
    return vol;
}

namespace {

void count_per_pixel(const EventStream& s, std::vector<double>& pos, std::vector<double>& neg) {
    const std::size_t n = static_cast<std::size_t>(s.width) * s.height;
    pos.assign(n, 0.0);
    neg.assign(n, 0.0);
    for (const Event& e : s.events) {
        const std::size_t i = static_cast<std::size_t>(e.y) * s.width + e.x;
        if (e.p > 0)
            pos[i] += 1.0;
        else
            neg[i] += 1.0;
    }
}

}  // namespace

std::vector<double> render_event_frame(const EventStream& stream, double ei, RenderMode mode) {
    require(ei > 0.0 && ei <= 1.0, "render_event_frame: event intensity must be in (0, 1]");
    require(stream.width > 0 && stream.height > 0, "render_event_frame: empty geometry");
    std::vector<double> pos, neg;
    count_per_pixel(stream, pos, neg);
    std::vector<double> out(pos.size(), 0.0);
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (mode == RenderMode::polarity)
            out[i] = std::min(pos[i] * ei, 1.0) - std::min(neg[i] * ei, 1.0);
        else
            out[i] = std::min((pos[i] + neg[i]) * ei, 1.0);
    }
    return out;
}

std::vector<double> binarize_event_target(const EventStream& stream) {
    return soft_event_target(stream, 1.0);
}

std::vector<double> soft_event_target(const EventStream& stream, double ei) {
    require(ei > 0.0 && ei <= 1.0, "soft_event_target: event intensity must be in (0, 1]");
    require(stream.width > 0 && stream.height > 0, "soft_event_target: empty geometry");
    std::vector<double> pos, neg;
    count_per_pixel(stream, pos, neg);
    std::vector<double> out(2 * pos.size(), 0.0);
    for (std::size_t i = 0; i < pos.size(); ++i) {
        out[i] = std::min(pos[i] * ei, 1.0);
        out[pos.size() + i] = std::min(neg[i] * ei, 1.0);
    }
    return out;
}

}  // namespace evfuse
