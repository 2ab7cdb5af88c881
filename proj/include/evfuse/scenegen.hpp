#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "evfuse/events.hpp"

namespace evfuse {

// Class ids are fixed: 0 background, 1 road, 2 circle agent, 3 box agent.
inline constexpr int kSceneClasses = 4;
inline constexpr int kClassBackground = 0;
inline constexpr int kClassRoad = 1;
inline constexpr int kClassCircle = 2;
inline constexpr int kClassBox = 3;

enum class AgentShape { circle, box };

struct Agent {
    AgentShape shape = AgentShape::circle;
    double size = 8.0;       // circle radius or box half-width
    double size_y = 6.0;     // box half-height (ignored for circles)
    double x = 0.0, y = 0.0; // anchor-frame center
    double vx = 0.0, vy = 0.0;  // px/frame
    double intensity = 200.0;   // base gray level, internally shaded
};

struct SceneSpec {
    int width = 128;
    int height = 64;
    std::vector<Agent> agents;
    double global_brightness = 1.0;  // (0, 1]
    double blur_length = 0.0;        // px along each agent's velocity
    double dt = 1.0;
    std::uint64_t seed = 0;
};

struct Sample {
    int width = 0;
    int height = 0;
    std::vector<double> frame_prev;    // H*W, quantized to integer gray levels
    std::vector<double> frame_anchor;  // H*W
    std::vector<int> mask;             // H*W class ids for the anchor frame
    EventStream events;                // simulated from the frame pair
};

enum class Difficulty { clean, blur, lowlight, blur_lowlight };

Difficulty difficulty_from_string(const std::string& s);
std::string difficulty_to_string(Difficulty d);

// Random scene honoring the difficulty axes: blur draws blur_length in
// [4, 12], lowlight draws brightness in [0.1, 0.3].
SceneSpec random_scene(int width, int height, Difficulty difficulty, std::uint64_t seed);

// Pure function of the spec; same spec -> byte-identical sample.
Sample generate_sample(const SceneSpec& spec);

struct CorpusSample {
    std::string prev_path, frame_path, mask_path, events_path;
    SceneSpec spec;
};

struct CorpusManifest {
    int width = 0, height = 0;
    int num_classes = kSceneClasses;
    std::string difficulty;
    std::uint64_t base_seed = 0;
    std::vector<CorpusSample> train, test;
};

// Writes train/ and test/ splits plus manifest.json under out_dir. Fails if
// manifest.json already exists.
CorpusManifest generate_corpus(const std::string& out_dir, int n_train, int n_test,
                               std::uint64_t base_seed, Difficulty difficulty,
                               int width = 128, int height = 64);

CorpusManifest read_manifest(const std::string& corpus_dir);

// Loads one split ("train" or "test") back into memory.
std::vector<Sample> load_corpus_split(const std::string& corpus_dir,
                                      const CorpusManifest& manifest, const std::string& split);

}  // namespace evfuse
