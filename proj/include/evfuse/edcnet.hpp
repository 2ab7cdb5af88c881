#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "evfuse/metrics.hpp"
#include "evfuse/scenegen.hpp"
#include "evfuse/tensor.hpp"

namespace evfuse {

enum class FusionMode { S2D_EAM, D2S_EGM, RGB_ONLY, EVENT_ONLY };

FusionMode fusion_mode_from_string(const std::string& s);
std::string fusion_mode_to_string(FusionMode m);

struct ModelConfig {
    FusionMode mode = FusionMode::D2S_EGM;
    std::vector<int> rgb_channels = {16, 32, 64, 128};
    std::vector<int> event_channels_d2s = {16, 8, 4, 2};
    std::vector<int> downsample_rates = {4, 8, 16, 32};
    int bins_pos = 1;
    int bins_neg = 1;
    int num_classes = 4;
    std::vector<std::pair<int, int>> spp_grids = {{8, 16}, {4, 8}, {2, 4}};
    double event_loss_weight = 1.0;
    int decoder_channels = 32;
    int input_height = 64;
    int input_width = 128;

    int time_bins() const { return bins_pos + bins_neg; }
    void validate() const;

    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);

    // Toy defaults sized for the given geometry; spp grids are shrunk to fit
    // the 1/32 feature map.
    static ModelConfig toy(FusionMode mode, int height, int width, int bins_per_polarity,
                           int num_classes = kSceneClasses);
    // The published channel schedule: rgb {64,128,256,512}, event branch
    // {64,32,16,8}, grids {(8,16),(4,8),(2,4)}, 19 classes at 512x1024.
    static ModelConfig paper_scale(FusionMode mode);
};

struct SegModel {
    ModelConfig config;
    std::vector<std::pair<std::string, Tensor>> params;

    Tensor& param(const std::string& name);
    const Tensor& param(const std::string& name) const;
    long param_count() const;
    void enable_grads();
    void zero_grads();
};

SegModel build_model(const ModelConfig& cfg, std::uint64_t seed);

void save_model(const SegModel& model, const std::string& ckpt_path);
// Rebuilds from config and overwrites parameter values from the checkpoint.
SegModel load_model(const ModelConfig& cfg, const std::string& ckpt_path);

// --- fusion blocks (exposed for focused tests) -------------------------------

// F_img * sigmoid(1x1(gap(F_img))) + F_evt * sigmoid(1x1(gap(F_evt)))
Tensor eam_forward(const Tensor& f_img, const Tensor& f_evt, const Tensor& wi, const Tensor& bi,
                   const Tensor& we, const Tensor& be);

// F_evt * sigmoid(1x1_reduce(concat(F_evt, upsample(1x1_proj(F_img))))) + F_evt
Tensor egm_forward(const Tensor& f_img, const Tensor& f_evt, const Tensor& proj_w,
                   const Tensor& proj_b, const Tensor& red_w, const Tensor& red_b);

struct SppParams {
    std::vector<Tensor> level_w, level_b;  // one 1x1 per grid
    Tensor event_w, event_b;               // extra level for E-SPP (optional)
    Tensor fuse_w, fuse_b;
};

// Pool -> 1x1 -> upsample per grid, concat (plus pooled/projected event
// context when provided), 1x1 fusion, relu.
Tensor spp_forward(const Tensor& f, const std::vector<std::pair<int, int>>& grids,
                   const SppParams& p, const Tensor& event_ctx = Tensor());

// --- whole-network forward ----------------------------------------------------

struct ForwardTrace {
    std::vector<Tensor> rgb_stages;  // post-fusion in S2D
    std::vector<Tensor> evt_stages;
    Tensor context;
};

struct ForwardResult {
    Tensor logits;      // K x H x W
    Tensor event_pred;  // 2 x H x W logits, defined only in D2S mode
};

// rgb: 3 x H x W (ignored in EVENT_ONLY); volume: B x H x W (used by
// S2D/EVENT_ONLY, ignored by D2S/RGB_ONLY). H, W must match the config and be
// divisible by 32.
ForwardResult forward(const SegModel& model, const Tensor& rgb, const Tensor& volume,
                      ForwardTrace* trace = nullptr);

// CE(logits, seg) + weight * BCE(event_pred, event_target); the BCE term is
// dropped if event_pred is undefined.
Tensor joint_loss(const Tensor& logits, const std::vector<int>& seg_target, int ignore_id,
                  const Tensor& event_pred, const Tensor& event_target, double weight);

// --- training / evaluation -----------------------------------------------------

// Model-ready view of one scene sample.
struct ModelInput {
    Tensor rgb;           // 3 x H x W in [0, 1]
    Tensor volume;        // B x H x W, defined when the mode consumes it
    std::vector<int> seg;
    Tensor event_target;  // 2 x H x W, defined for D2S
};

// event_intensity scales the soft per-polarity occupancy target; 1.0 is the
// binary target.
ModelInput prepare_input(const Sample& s, const ModelConfig& cfg, double event_intensity = 1.0);
std::vector<ModelInput> prepare_inputs(const std::vector<Sample>& samples, const ModelConfig& cfg,
                                       double event_intensity = 1.0);

struct TrainOptions {
    int epochs = 30;
    int batch_size = 2;
    double lr0 = 4e-4;
    double lr_min = 1e-6;
    double weight_decay = 1e-4;
    std::uint64_t seed = 1;
    int ignore_id = 255;
};

struct EpochLog {
    int epoch = 0;
    double lr = 0.0;
    double loss = 0.0;
    double seg_loss = 0.0;
    double event_loss = 0.0;
};

struct TrainResult {
    std::vector<EpochLog> epochs;
    std::string log_json() const;  // deterministic per-epoch log
};

// Deterministic given (model seed, opt.seed). Throws DivergenceError on a
// non-finite loss.
TrainResult train(SegModel& model, const std::vector<ModelInput>& data, const TrainOptions& opt);

ConfusionMatrix evaluate(const SegModel& model, const std::vector<ModelInput>& data,
                         int ignore_id = 255);

}  // namespace evfuse
