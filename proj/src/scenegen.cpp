#include "evfuse/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "evfuse/common.hpp"
#include "evfuse/io.hpp"

namespace evfuse {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Background with a vertical gradient plus a brighter road band; intensity
// bands are kept disjoint (bg < 50, road in [85, 96], agents >= 105) so the
// mask/frame consistency invariant holds by construction.
double background_at(int width, int height, int x, int y) {
    const double g = height > 1 ? static_cast<double>(y) / (height - 1) : 0.0;
    double v = 30.0 + 18.0 * g;
    const int road_top = static_cast<int>(0.55 * height);
    const int road_bot = static_cast<int>(0.85 * height);
    if (y >= road_top && y < road_bot) {
        const double h = width > 1 ? static_cast<double>(x) / (width - 1) : 0.0;
        v = 85.0 + 10.0 * h;
    }
    return v;
}

int road_class_at(int width, int height, int y) {
    (void)width;
    const int road_top = static_cast<int>(0.55 * height);
    const int road_bot = static_cast<int>(0.85 * height);
    return (y >= road_top && y < road_bot) ? kClassRoad : kClassBackground;
}

// Shaded agent intensity at pixel center (px, py) relative to center (cx, cy);
// the internal gradient makes interior motion visible to the event simulator.
double agent_shade(const Agent& a, double cx, double cy, double px, double py) {
    if (a.shape == AgentShape::circle) {
        const double d = std::sqrt((px - cx) * (px - cx) + (py - cy) * (py - cy));
        return a.intensity * (1.0 - 0.38 * std::min(1.0, d / a.size));
    }
    const double u = std::clamp((px - (cx - a.size)) / (2.0 * a.size), 0.0, 1.0);
    return a.intensity * (0.62 + 0.38 * u);
}

bool agent_covers(const Agent& a, double cx, double cy, double px, double py) {
    if (a.shape == AgentShape::circle) {
        const double dx = px - cx, dy = py - cy;
        return dx * dx + dy * dy <= a.size * a.size;
    }
    return std::abs(px - cx) <= a.size && std::abs(py - cy) <= a.size_y;
}

// Renders one agent at center (cx, cy) into intensity/alpha layers.
void render_agent_layer(const Agent& a, double cx, double cy, int width, int height,
                        std::vector<double>& layer, std::vector<double>& alpha) {
    std::fill(layer.begin(), layer.end(), 0.0);
    std::fill(alpha.begin(), alpha.end(), 0.0);
    const double extent = a.shape == AgentShape::circle ? a.size : std::max(a.size, a.size_y);
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - extent - 1)));
    const int x1 = std::min(width - 1, static_cast<int>(std::ceil(cx + extent + 1)));
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - extent - 1)));
    const int y1 = std::min(height - 1, static_cast<int>(std::ceil(cy + extent + 1)));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double px = x + 0.5, py = y + 0.5;
            if (!agent_covers(a, cx, cy, px, py)) continue;
            const std::size_t i = static_cast<std::size_t>(y) * width + x;
            layer[i] = agent_shade(a, cx, cy, px, py);
            alpha[i] = 1.0;
        }
}

double sample_bilinear(const std::vector<double>& img, int width, int height, double x, double y) {
    x = std::clamp(x, 0.0, static_cast<double>(width - 1));
    y = std::clamp(y, 0.0, static_cast<double>(height - 1));
    const int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
    const int x1 = std::min(x0 + 1, width - 1), y1 = std::min(y0 + 1, height - 1);
    const double fx = x - x0, fy = y - y0;
    const double top = img[static_cast<std::size_t>(y0) * width + x0] * (1 - fx) +
                       img[static_cast<std::size_t>(y0) * width + x1] * fx;
    const double bot = img[static_cast<std::size_t>(y1) * width + x0] * (1 - fx) +
                       img[static_cast<std::size_t>(y1) * width + x1] * fx;
    return top * (1 - fy) + bot * fy;
}

// Uniform 1-D kernel along the velocity direction, centered on the agent.
void motion_blur_layer(std::vector<double>& layer, std::vector<double>& alpha, int width,
                       int height, double vx, double vy, double blur_length) {
    const double speed = std::sqrt(vx * vx + vy * vy);
    const int taps = static_cast<int>(std::lround(blur_length));
    if (taps <= 1 || speed <= 0.0) return;
    const double ux = vx / speed, uy = vy / speed;
    std::vector<double> bl(layer.size(), 0.0), ba(alpha.size(), 0.0);
    const double w = 1.0 / taps;
    for (int j = 0; j < taps; ++j) {
        const double off = (j - 0.5 * (taps - 1));
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * width + x;
                bl[i] += w * sample_bilinear(layer, width, height, x - off * ux, y - off * uy);
                ba[i] += w * sample_bilinear(alpha, width, height, x - off * ux, y - off * uy);
            }
    }
    layer.swap(bl);
    alpha.swap(ba);
}

void composite(std::vector<double>& canvas, const std::vector<double>& layer,
               const std::vector<double>& alpha) {
    for (std::size_t i = 0; i < canvas.size(); ++i)
        canvas[i] = canvas[i] * (1.0 - alpha[i]) + layer[i] * alpha[i];
}

std::vector<double> quantize(const std::vector<double>& frame) {
    std::vector<double> out(frame.size());
    for (std::size_t i = 0; i < frame.size(); ++i)
        out[i] = static_cast<double>(std::lround(std::clamp(frame[i], 0.0, 255.0)));
    return out;
}

json agent_to_json(const Agent& a) {
    json j;
    j["shape"] = a.shape == AgentShape::circle ? "circle" : "box";
    j["size"] = a.size;
    j["size_y"] = a.size_y;
    j["x"] = a.x;
    j["y"] = a.y;
    j["vx"] = a.vx;
    j["vy"] = a.vy;
    j["intensity"] = a.intensity;
    return j;
}

Agent agent_from_json(const json& j) {
    Agent a;
    a.shape = j.at("shape").get<std::string>() == "circle" ? AgentShape::circle : AgentShape::box;
    a.size = j.at("size").get<double>();
    a.size_y = j.at("size_y").get<double>();
    a.x = j.at("x").get<double>();
    a.y = j.at("y").get<double>();
    a.vx = j.at("vx").get<double>();
    a.vy = j.at("vy").get<double>();
    a.intensity = j.at("intensity").get<double>();
    return a;
}

json spec_to_json(const SceneSpec& s) {
    json j;
    j["width"] = s.width;
    j["height"] = s.height;
    j["global_brightness"] = s.global_brightness;
    j["blur_length"] = s.blur_length;
    j["dt"] = s.dt;
    j["seed"] = s.seed;
    json agents = json::array();
    for (const Agent& a : s.agents) agents.push_back(agent_to_json(a));
    j["agents"] = agents;
    return j;
}

SceneSpec spec_from_json(const json& j) {
    SceneSpec s;
    s.width = j.at("width").get<int>();
    s.height = j.at("height").get<int>();
    s.global_brightness = j.at("global_brightness").get<double>();
    s.blur_length = j.at("blur_length").get<double>();
    s.dt = j.at("dt").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    for (const json& a : j.at("agents")) s.agents.push_back(agent_from_json(a));
    return s;
}

io::ImageU8 frame_to_pgm(const Sample& s, const std::vector<double>& frame) {
    io::ImageU8 img;
    img.width = s.width;
    img.height = s.height;
    img.pixels.resize(frame.size());
    for (std::size_t i = 0; i < frame.size(); ++i)
        img.pixels[i] = static_cast<std::uint8_t>(frame[i]);
    return img;
}

}  // namespace

Difficulty difficulty_from_string(const std::string& s) {
    if (s == "clean") return Difficulty::clean;
    if (s == "blur") return Difficulty::blur;
    if (s == "lowlight") return Difficulty::lowlight;
    if (s == "blur+lowlight") return Difficulty::blur_lowlight;
    throw std::invalid_argument("unknown difficulty: " + s);
}

std::string difficulty_to_string(Difficulty d) {
    switch (d) {
        case Difficulty::clean: return "clean";
        case Difficulty::blur: return "blur";
        case Difficulty::lowlight: return "lowlight";
        case Difficulty::blur_lowlight: return "blur+lowlight";
    }
    return "clean";
}

SceneSpec random_scene(int width, int height, Difficulty difficulty, std::uint64_t seed) {
    require(width >= 48 && height >= 48 / 2, "random_scene: canvas too small");
    Rng rng(seed * 0x9e3779b97f4a7c15ull + 0x1234abcdull);
    SceneSpec spec;
    spec.width = width;
    spec.height = height;
    spec.seed = seed;
    const bool blur = difficulty == Difficulty::blur || difficulty == Difficulty::blur_lowlight;
    const bool lowlight =
        difficulty == Difficulty::lowlight || difficulty == Difficulty::blur_lowlight;
    spec.blur_length = blur ? rng.uniform(4.0, 12.0) : 0.0;
    spec.global_brightness = lowlight ? rng.uniform(0.1, 0.3) : 1.0;

    const int n_agents = 2 + (rng.uniform() < 0.4 ? 1 : 0);
    for (int i = 0; i < n_agents; ++i) {
        Agent a;
        // First two agents cover both foreground classes.
        if (i == 0)
            a.shape = AgentShape::circle;
        else if (i == 1)
            a.shape = AgentShape::box;
        else
            a.shape = rng.uniform() < 0.5 ? AgentShape::circle : AgentShape::box;
        if (a.shape == AgentShape::circle) {
            a.size = rng.uniform(5.0, 10.0);
            a.size_y = a.size;
        } else {
            a.size = rng.uniform(5.0, 10.0);
            a.size_y = rng.uniform(4.0, 7.0);
        }
        const double speed = rng.uniform(3.0, 7.0);
        const double angle = (rng.uniform() < 0.5 ? 0.0 : 3.14159265358979323846) +
                             rng.uniform(-0.45, 0.45);
        a.vx = speed * std::cos(angle);
        a.vy = speed * std::sin(angle);
        const double extent = std::max(a.size, a.size_y);
        const double margin = extent + speed * spec.dt + 0.5 * spec.blur_length + 2.0;
        const double mx = std::min(margin, width / 2.0 - 1.0);
        const double my = std::min(margin, height / 2.0 - 1.0);
        a.x = rng.uniform(mx, width - mx);
        a.y = rng.uniform(my, height - my);
        a.intensity = rng.uniform(170.0, 240.0);
        spec.agents.push_back(a);
    }
    return spec;
}

Sample generate_sample(const SceneSpec& spec) {
    require(spec.width > 0 && spec.height > 0, "generate_sample: empty canvas");
    require(spec.global_brightness > 0.0 && spec.global_brightness <= 1.0,
            "generate_sample: brightness out of (0, 1]");
    require(spec.blur_length >= 0.0 && spec.dt > 0.0, "generate_sample: bad blur/dt");

    const std::size_t n = static_cast<std::size_t>(spec.width) * spec.height;
    Sample s;
    s.width = spec.width;
    s.height = spec.height;
    s.frame_prev.resize(n);
    s.frame_anchor.resize(n);
    s.mask.assign(n, kClassBackground);

    for (int y = 0; y < spec.height; ++y)
        for (int x = 0; x < spec.width; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * spec.width + x;
            const double bg = background_at(spec.width, spec.height, x, y);
            s.frame_prev[i] = bg;
            s.frame_anchor[i] = bg;
            s.mask[i] = road_class_at(spec.width, spec.height, y);
        }

    std::vector<double> layer(n), alpha(n);
    for (const Agent& a : spec.agents) {
        // prev frame: crisp agent at the pre-motion position
        render_agent_layer(a, a.x - a.vx * spec.dt, a.y - a.vy * spec.dt, spec.width, spec.height,
                           layer, alpha);
        composite(s.frame_prev, layer, alpha);

        // anchor frame: agent at its anchor position, optionally motion-blurred
        render_agent_layer(a, a.x, a.y, spec.width, spec.height, layer, alpha);
        for (int y = 0; y < spec.height; ++y)
            for (int x = 0; x < spec.width; ++x) {
                if (alpha[static_cast<std::size_t>(y) * spec.width + x] > 0.0)
                    s.mask[static_cast<std::size_t>(y) * spec.width + x] =
                        a.shape == AgentShape::circle ? kClassCircle : kClassBox;
            }
        if (spec.blur_length > 1.0)
            motion_blur_layer(layer, alpha, spec.width, spec.height, a.vx, a.vy, spec.blur_length);
        composite(s.frame_anchor, layer, alpha);
    }

    for (std::size_t i = 0; i < n; ++i) {
        s.frame_prev[i] *= spec.global_brightness;
        s.frame_anchor[i] *= spec.global_brightness;
    }
    s.frame_prev = quantize(s.frame_prev);
    s.frame_anchor = quantize(s.frame_anchor);

    LogIntensityPair pair;
    pair.width = spec.width;
    pair.height = spec.height;
    pair.dt = spec.dt;
    SimulatorConfig cfg;  // defaults: C = 0.1, log_eps = 1.0, cap 32
    pair.prev = log_intensity(s.frame_prev, spec.width, spec.height, cfg.log_eps);
    pair.curr = log_intensity(s.frame_anchor, spec.width, spec.height, cfg.log_eps);
    s.events = simulate_events(pair, cfg);
    return s;
}

CorpusManifest generate_corpus(const std::string& out_dir, int n_train, int n_test,
                               std::uint64_t base_seed, Difficulty difficulty, int width,
                               int height) {
    require(n_train >= 1 && n_test >= 1, "generate_corpus: splits must be non-empty");
    const fs::path root(out_dir);
    const fs::path manifest_path = root / "manifest.json";
    if (fs::exists(manifest_path))
        throw std::runtime_error("generate_corpus: output collision, manifest exists: " +
                                 manifest_path.string());
    fs::create_directories(root / "train");
    fs::create_directories(root / "test");

    CorpusManifest m;
    m.width = width;
    m.height = height;
    m.difficulty = difficulty_to_string(difficulty);
    m.base_seed = base_seed;

    // Disjoint seed ranges for the two splits.
    auto emit = [&](const std::string& split, int idx, std::uint64_t seed) {
        const SceneSpec spec = random_scene(width, height, difficulty, seed);
        const Sample sample = generate_sample(spec);
        char stem[64];
        std::snprintf(stem, sizeof(stem), "%s/s%04d", split.c_str(), idx);
        CorpusSample cs;
        cs.spec = spec;
        cs.prev_path = std::string(stem) + "_prev.pgm";
        cs.frame_path = std::string(stem) + "_frame.pgm";
        cs.mask_path = std::string(stem) + "_mask.pgm";
        cs.events_path = std::string(stem) + "_events.evt";
        io::write_pgm((root / cs.prev_path).string(), frame_to_pgm(sample, sample.frame_prev));
        io::write_pgm((root / cs.frame_path).string(), frame_to_pgm(sample, sample.frame_anchor));
        io::ImageU8 mask;
        mask.width = sample.width;
        mask.height = sample.height;
        mask.pixels.resize(sample.mask.size());
        for (std::size_t i = 0; i < sample.mask.size(); ++i)
            mask.pixels[i] = static_cast<std::uint8_t>(sample.mask[i]);
        io::write_pgm((root / cs.mask_path).string(), mask);
        io::write_events((root / cs.events_path).string(), sample.events);
        return cs;
    };

    for (int i = 0; i < n_train; ++i)
        m.train.push_back(emit("train", i, base_seed + static_cast<std::uint64_t>(i)));
    for (int i = 0; i < n_test; ++i)
        m.test.push_back(
            emit("test", i, base_seed + 0x80000000ull + static_cast<std::uint64_t>(i)));

    json j;
    j["width"] = m.width;
    j["height"] = m.height;
    j["num_classes"] = m.num_classes;
    j["difficulty"] = m.difficulty;
    j["base_seed"] = m.base_seed;
    for (const char* split : {"train", "test"}) {
        json arr = json::array();
        for (const CorpusSample& cs : (std::string(split) == "train" ? m.train : m.test)) {
            json e;
            e["prev"] = cs.prev_path;
            e["frame"] = cs.frame_path;
            e["mask"] = cs.mask_path;
            e["events"] = cs.events_path;
            e["spec"] = spec_to_json(cs.spec);
            arr.push_back(e);
        }
        j[split] = arr;
    }
    io::write_text_file(manifest_path.string(), j.dump(2) + "\n");
    return m;
}

CorpusManifest read_manifest(const std::string& corpus_dir) {
    const json j = json::parse(io::read_text_file((fs::path(corpus_dir) / "manifest.json").string()));
    CorpusManifest m;
    m.width = j.at("width").get<int>();
    m.height = j.at("height").get<int>();
    m.num_classes = j.at("num_classes").get<int>();
    m.difficulty = j.at("difficulty").get<std::string>();
    m.base_seed = j.at("base_seed").get<std::uint64_t>();
    for (const char* split : {"train", "test"}) {
        auto& dst = std::string(split) == "train" ? m.train : m.test;
        for (const json& e : j.at(split)) {
            CorpusSample cs;
            cs.prev_path = e.at("prev").get<std::string>();
            cs.frame_path = e.at("frame").get<std::string>();
            cs.mask_path = e.at("mask").get<std::string>();
            cs.events_path = e.at("events").get<std::string>();
            cs.spec = spec_from_json(e.at("spec"));
            dst.push_back(cs);
        }
    }
    return m;
}

std::vector<Sample> load_corpus_split(const std::string& corpus_dir,
                                      const CorpusManifest& manifest, const std::string& split) {
    require(split == "train" || split == "test", "load_corpus_split: unknown split");
    const auto& list = split == "train" ? manifest.train : manifest.test;
    std::vector<Sample> out;
    out.reserve(list.size());
    const fs::path root(corpus_dir);
    for (const CorpusSample& cs : list) {
        Sample s;
        const io::ImageU8 prev = io::read_pgm((root / cs.prev_path).string());
        const io::ImageU8 frame = io::read_pgm((root / cs.frame_path).string());
        const io::ImageU8 mask = io::read_pgm((root / cs.mask_path).string());
        require(prev.width == frame.width && prev.height == frame.height &&
                    mask.width == frame.width && mask.height == frame.height,
                "load_corpus_split: sample geometry mismatch");
        s.width = frame.width;
        s.height = frame.height;
        s.frame_prev.resize(prev.pixels.size());
        s.frame_anchor.resize(frame.pixels.size());
        s.mask.resize(mask.pixels.size());
        for (std::size_t i = 0; i < prev.pixels.size(); ++i) {
            s.frame_prev[i] = prev.pixels[i];
            s.frame_anchor[i] = frame.pixels[i];
            s.mask[i] = mask.pixels[i];
        }
        s.events = io::read_events((root / cs.events_path).string());
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace evfuse
