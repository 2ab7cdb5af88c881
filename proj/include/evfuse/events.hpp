#pragma once

#include <cstddef>
#include <vector>

namespace evfuse {

// One asynchronous brightness-change event. p is -1 or +1, never 0.
struct Event {
    int x = 0;
    int y = 0;
    double t = 0.0;
    int p = +1;
};

// Events ordered by non-decreasing t; ties keep their insertion order.
struct EventStream {
    int width = 0;
    int height = 0;
    std::vector<Event> events;

    std::size_t count() const { return events.size(); }
    void validate() const;  // throws std::invalid_argument on broken invariants
};

// Dense (B+ + B-) x H x W accumulation volume. Bins [0, bins_pos) hold the
// positive sub-volume, bins [bins_pos, bins_pos + bins_neg) the negative one.
struct EventVolume {
    int bins_pos = 0;
    int bins_neg = 0;
    int width = 0;
    int height = 0;
    std::vector<double> data;  // bin-major, row-major

    double& at(int b, int y, int x) {
        return data[(static_cast<long>(b) * height + y) * width + x];
    }
    double at(int b, int y, int x) const {
        return data[(static_cast<long>(b) * height + y) * width + x];
    }
    double sum() const;
};

// Two log-intensity frames separated by dt.
struct LogIntensityPair {
    int width = 0;
    int height = 0;
    std::vector<double> prev;  // L(x, y, t - dt)
    std::vector<double> curr;  // L(x, y, t)
    double dt = 1.0;
};

struct SimulatorConfig {
    double threshold_c = 0.1;
    double log_eps = 1.0;
    int max_events_per_pixel = 32;
};

// Elementwise ln(frame + log_eps). Intensities must be non-negative.
std::vector<double> log_intensity(const std::vector<double>& frame, int width, int height,
                                  double log_eps);

// Threshold-crossing simulator: per pixel, floor(|dL| / C) events capped at
// max_events_per_pixel, polarity sign(dL), timestamps linearly interpolated
// across dt. Pure and deterministic.
EventStream simulate_events(const LogIntensityPair& pair, const SimulatorConfig& cfg);

// Per-event normalized timestamps, computed per polarity sub-stream:
// t~ = (B - 1)(t - t1)/(tN - t1) over that sub-stream's range. Degenerate
// ranges (single event, all simultaneous) and B = 1 map to t~ = 0. Output is
// aligned with stream order.
std::vector<double> normalize_timestamps(const EventStream& stream, int bins_pos, int bins_neg);

// Triangular-kernel binning of normalized timestamps; each in-range event
// deposits total weight 1.0 into its polarity sub-volume.
EventVolume discretize_volume(const EventStream& stream, int bins_pos, int bins_neg);
// Normative single-threaded accumulation order; the dispatching variant
// above must match it within 1e-12 relative per element.
EventVolume discretize_volume_serial(const EventStream& stream, int bins_pos, int bins_neg);

enum class RenderMode { polarity, grayscale };

// H*W accumulation frame. polarity: clamp(k+ * ei) - clamp(k- * ei) in [-1, 1];
// grayscale: clamp((k+ + k-) * ei) in [0, 1]. Requires 0 < ei <= 1.
std::vector<double> render_event_frame(const EventStream& stream, double ei, RenderMode mode);

// 2*H*W binary per-polarity occupancy (channel 0: positive, 1: negative).
std::vector<double> binarize_event_target(const EventStream& stream);

// 2*H*W soft occupancy clamp(count * ei, 0, 1); ei = 1.0 reproduces
// binarize_event_target.
std::vector<double> soft_event_target(const EventStream& stream, double ei);

}  // namespace evfuse
