#include "evfuse/edcnet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "evfuse/common.hpp"
#include "evfuse/io.hpp"

namespace evfuse {

namespace {

using nlohmann::json;

constexpr int kStages = 4;

// Parameter factory; creation order is fixed so a seed fully determines the
// initialization stream.
struct Builder {
    SegModel& m;
    Rng rng;

    Tensor add_param(const std::string& name, Tensor t) {
        m.params.emplace_back(name, t);
        return t;
    }

    // Kaiming fan-in normal weights, zero bias.
    void conv(const std::string& name, int c_out, int c_in, int k) {
        const double std_dev = std::sqrt(2.0 / (static_cast<double>(c_in) * k * k));
        Tensor w = Tensor::zeros({c_out, c_in, k, k});
        for (auto& v : w.values()) v = rng.normal(0.0, std_dev);
        add_param(name + ".w", w);
        add_param(name + ".b", Tensor::zeros({c_out}));
    }

    // Identity-initialized per-channel affine (the batch-norm stand-in).
    void affine(const std::string& name, int c) {
        add_param(name + ".s", Tensor::full({c}, 1.0));
        add_param(name + ".t", Tensor::zeros({c}));
    }
};

void build_encoder(Builder& b, const std::string& prefix, int in_channels,
                   const std::vector<int>& widths) {
    b.conv(prefix + ".stem", widths[0], in_channels, 7);
    b.affine(prefix + ".stem.aff", widths[0]);
    for (int i = 0; i < kStages; ++i) {
        const int cin = i == 0 ? widths[0] : widths[static_cast<std::size_t>(i - 1)];
        const int cout = widths[static_cast<std::size_t>(i)];
        b.conv(prefix + ".s" + std::to_string(i) + ".c0", cout, cin, 3);
        b.affine(prefix + ".s" + std::to_string(i) + ".c0.aff", cout);
        b.conv(prefix + ".s" + std::to_string(i) + ".c1", cout, cout, 3);
        b.affine(prefix + ".s" + std::to_string(i) + ".c1.aff", cout);
    }
}

struct Ctx {
    const SegModel& m;
    const Tensor& p(const std::string& name) const { return m.param(name); }
};

Tensor conv_block(const Ctx& c, const std::string& name, const Tensor& x, int stride, int pad) {
    Tensor y = conv2d(x, c.p(name + ".w"), c.p(name + ".b"), stride, pad);
    y = channel_affine(y, c.p(name + ".aff.s"), c.p(name + ".aff.t"));
    return relu(y);
}

Tensor run_stem(const Ctx& c, const std::string& prefix, const Tensor& x) {
    return conv_block(c, prefix + ".stem", x, 2, 3);
}

Tensor run_stage(const Ctx& c, const std::string& prefix, int i, const Tensor& x) {
    const std::string s = prefix + ".s" + std::to_string(i);
    Tensor y = conv_block(c, s + ".c0", x, 2, 1);
    return conv_block(c, s + ".c1", y, 1, 1);
}

Tensor run_eam(const Ctx& c, int i, const Tensor& f_img, const Tensor& f_evt) {
    const std::string s = "eam" + std::to_string(i);
    return eam_forward(f_img, f_evt, c.p(s + ".img.w"), c.p(s + ".img.b"), c.p(s + ".evt.w"),
                       c.p(s + ".evt.b"));
}

Tensor run_egm(const Ctx& c, int i, const Tensor& f_img, const Tensor& f_evt) {
    const std::string s = "egm" + std::to_string(i);
    return egm_forward(f_img, f_evt, c.p(s + ".proj.w"), c.p(s + ".proj.b"), c.p(s + ".red.w"),
                       c.p(s + ".red.b"));
}

SppParams gather_spp(const Ctx& c, int levels, bool with_event) {
    SppParams p;
    for (int l = 0; l < levels; ++l) {
        p.level_w.push_back(c.p("spp.l" + std::to_string(l) + ".w"));
        p.level_b.push_back(c.p("spp.l" + std::to_string(l) + ".b"));
    }
    if (with_event) {
        p.event_w = c.p("spp.evt.w");
        p.event_b = c.p("spp.evt.b");
    }
    p.fuse_w = c.p("spp.fuse.w");
    p.fuse_b = c.p("spp.fuse.b");
    return p;
}

// Ladder decoder: upsample, add a 1x1-projected skip, 3x3 blend; then a 1x1
// head and bilinear restoration to input resolution.
Tensor run_decoder(const Ctx& c, Tensor x, const std::vector<Tensor>& skips, int out_h, int out_w) {
    for (int j = 0; j < 3; ++j) {
        const Tensor& skip = skips[static_cast<std::size_t>(2 - j)];
        const std::string s = "dec.u" + std::to_string(j);
        x = upsample_bilinear(x, skip.dim(1), skip.dim(2));
        x = add(x, conv2d(skip, c.p(s + ".skip.w"), c.p(s + ".skip.b"), 1, 0));
        x = conv_block(c, s + ".blend", x, 1, 1);
    }
    Tensor logits = conv2d(x, c.p("head.w"), c.p("head.b"), 1, 0);
    return upsample_bilinear(logits, out_h, out_w);
}

}  // namespace

FusionMode fusion_mode_from_string(const std::string& s) {
    if (s == "s2d") return FusionMode::S2D_EAM;
    if (s == "d2s") return FusionMode::D2S_EGM;
    if (s == "rgb") return FusionMode::RGB_ONLY;
    if (s == "event") return FusionMode::EVENT_ONLY;
    throw std::invalid_argument("unknown fusion mode: " + s);
}

std::string fusion_mode_to_string(FusionMode m) {
    switch (m) {
        case FusionMode::S2D_EAM: return "s2d";
        case FusionMode::D2S_EGM: return "d2s";
        case FusionMode::RGB_ONLY: return "rgb";
        case FusionMode::EVENT_ONLY: return "event";
    }
    return "rgb";
}

void ModelConfig::validate() const {
    require(rgb_channels.size() == kStages && event_channels_d2s.size() == kStages &&
                downsample_rates.size() == kStages,
            "ModelConfig: stage counts must agree (4 stages)");
    require(downsample_rates == std::vector<int>({4, 8, 16, 32}),
            "ModelConfig: downsample rates must be {4, 8, 16, 32}");
    require(bins_pos >= 1 && bins_neg >= 1, "ModelConfig: bins must be >= 1");
    require(num_classes >= 2, "ModelConfig: need at least two classes");
    require(decoder_channels >= 1, "ModelConfig: bad decoder width");
    require(event_loss_weight >= 0.0, "ModelConfig: negative event loss weight");
    require(input_height % 32 == 0 && input_width % 32 == 0 && input_height > 0 && input_width > 0,
            "ModelConfig: input geometry must be divisible by 32");
    require(!spp_grids.empty(), "ModelConfig: need at least one spp grid");
    const int deep_h = input_height / 32, deep_w = input_width / 32;
    for (auto [gh, gw] : spp_grids)
        require(gh >= 1 && gw >= 1 && gh <= deep_h && gw <= deep_w,
                "ModelConfig: spp grid does not fit the deepest feature map");
    for (int c : rgb_channels) require(c >= 1, "ModelConfig: bad rgb width");
    for (int c : event_channels_d2s) require(c >= 1, "ModelConfig: bad event width");
}

std::string ModelConfig::to_json() const {
    json j;
    j["mode"] = fusion_mode_to_string(mode);
    j["rgb_channels"] = rgb_channels;
    j["event_channels_d2s"] = event_channels_d2s;
    j["downsample_rates"] = downsample_rates;
    j["bins_pos"] = bins_pos;
    j["bins_neg"] = bins_neg;
    j["num_classes"] = num_classes;
    json grids = json::array();
    for (auto [gh, gw] : spp_grids) grids.push_back(json::array({gh, gw}));
    j["spp_grids"] = grids;
    j["event_loss_weight"] = event_loss_weight;
    j["decoder_channels"] = decoder_channels;
    j["input_height"] = input_height;
    j["input_width"] = input_width;
    return j.dump(2) + "\n";
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    const json j = json::parse(text);
    ModelConfig c;
    c.mode = fusion_mode_from_string(j.at("mode").get<std::string>());
    c.rgb_channels = j.at("rgb_channels").get<std::vector<int>>();
    c.event_channels_d2s = j.at("event_channels_d2s").get<std::vector<int>>();
    c.downsample_rates = j.at("downsample_rates").get<std::vector<int>>();
    c.bins_pos = j.at("bins_pos").get<int>();
    c.bins_neg = j.at("bins_neg").get<int>();
    c.num_classes = j.at("num_classes").get<int>();
    c.spp_grids.clear();
    for (const json& g : j.at("spp_grids"))
        c.spp_grids.emplace_back(g.at(0).get<int>(), g.at(1).get<int>());
    c.event_loss_weight = j.at("event_loss_weight").get<double>();
    c.decoder_channels = j.at("decoder_channels").get<int>();
    c.input_height = j.at("input_height").get<int>();
    c.input_width = j.at("input_width").get<int>();
    c.validate();
    return c;
}

ModelConfig ModelConfig::toy(FusionMode mode, int height, int width, int bins_per_polarity,
                             int num_classes) {
    ModelConfig c;
    c.mode = mode;
    c.bins_pos = bins_per_polarity;
    c.bins_neg = bins_per_polarity;
    c.num_classes = num_classes;
    c.input_height = height;
    c.input_width = width;
    const int dh = height / 32, dw = width / 32;
    c.spp_grids = {{dh, dw},
                   {std::max(1, dh / 2), std::max(1, dw / 2)},
                   {std::max(1, dh / 4), std::max(1, dw / 4)}};
    c.validate();
    return c;
}

ModelConfig ModelConfig::paper_scale(FusionMode mode) {
    ModelConfig c;
    c.mode = mode;
    c.rgb_channels = {64, 128, 256, 512};
    c.event_channels_d2s = {64, 32, 16, 8};
    c.spp_grids = {{8, 16}, {4, 8}, {2, 4}};
    c.num_classes = 19;
    c.decoder_channels = 128;
    c.input_height = 512;
    c.input_width = 1024;
    c.validate();
    return c;
}

Tensor& SegModel::param(const std::string& name) {
    for (auto& [n, t] : params)
        if (n == name) return t;
    throw std::invalid_argument("SegModel: unknown parameter " + name);
}

const Tensor& SegModel::param(const std::string& name) const {
    for (const auto& [n, t] : params)
        if (n == name) return t;
    throw std::invalid_argument("SegModel: unknown parameter " + name);
}

long SegModel::param_count() const {
    long n = 0;
    for (const auto& [name, t] : params) n += t.numel();
    return n;
}

void SegModel::enable_grads() {
    for (auto& [name, t] : params) t.enable_grad();
}

void SegModel::zero_grads() {
    for (auto& [name, t] : params) t.zero_grad();
}

SegModel build_model(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    SegModel m;
    m.config = cfg;
    Builder b{m, Rng(seed ^ 0x5eedf00dULL)};

    const auto& rc = cfg.rgb_channels;
    const auto& ec = cfg.event_channels_d2s;
    const int bins = cfg.time_bins();

    if (cfg.mode != FusionMode::EVENT_ONLY) build_encoder(b, "rgb", 3, rc);
    if (cfg.mode == FusionMode::S2D_EAM || cfg.mode == FusionMode::EVENT_ONLY)
        build_encoder(b, "evt", bins, rc);

    if (cfg.mode == FusionMode::S2D_EAM) {
        for (int i = 0; i < kStages; ++i) {
            const int c = rc[static_cast<std::size_t>(i)];
            b.conv("eam" + std::to_string(i) + ".img", c, c, 1);
            b.conv("eam" + std::to_string(i) + ".evt", c, c, 1);
        }
    }

    if (cfg.mode == FusionMode::D2S_EGM) {
        for (int i = 0; i < kStages; ++i) {
            const int cin = i == 0 ? rc[0] : ec[static_cast<std::size_t>(i - 1)];
            const int cout = ec[static_cast<std::size_t>(i)];
            b.conv("evtb.s" + std::to_string(i) + ".c", cout, cin, 3);
            b.affine("evtb.s" + std::to_string(i) + ".c.aff", cout);
            b.conv("egm" + std::to_string(i) + ".proj", cout, rc[static_cast<std::size_t>(i)], 1);
            b.conv("egm" + std::to_string(i) + ".red", cout, 2 * cout, 1);
        }
        b.conv("evthead", 2, ec[kStages - 1], 1);
    }

    const int deep = rc[kStages - 1];
    const int proj = std::max(4, deep / 4);
    for (std::size_t l = 0; l < cfg.spp_grids.size(); ++l)
        b.conv("spp.l" + std::to_string(l), proj, deep, 1);
    int fuse_in = proj * static_cast<int>(cfg.spp_grids.size());
    if (cfg.mode == FusionMode::D2S_EGM) {
        b.conv("spp.evt", proj, ec[kStages - 1], 1);
        fuse_in += proj;
    }
    b.conv("spp.fuse", cfg.decoder_channels, fuse_in, 1);

    const int dc = cfg.decoder_channels;
    for (int j = 0; j < 3; ++j) {
        const int skip_c = rc[static_cast<std::size_t>(2 - j)];
        b.conv("dec.u" + std::to_string(j) + ".skip", dc, skip_c, 1);
        b.conv("dec.u" + std::to_string(j) + ".blend", dc, dc, 3);
        b.affine("dec.u" + std::to_string(j) + ".blend.aff", dc);
    }
    b.conv("head", cfg.num_classes, dc, 1);
    return m;
}

void save_model(const SegModel& model, const std::string& ckpt_path) {
    std::vector<io::NamedTensor> tensors;
    tensors.reserve(model.params.size());
    for (const auto& [name, t] : model.params) {
        io::NamedTensor nt;
        nt.name = name;
        nt.shape = t.shape();
        nt.values.assign(t.values().begin(), t.values().end());
        tensors.push_back(std::move(nt));
    }
    io::write_checkpoint(ckpt_path, tensors);
}

SegModel load_model(const ModelConfig& cfg, const std::string& ckpt_path) {
    SegModel m = build_model(cfg, 0);
    const std::vector<io::NamedTensor> tensors = io::read_checkpoint(ckpt_path);
    require(tensors.size() == m.params.size(), "load_model: parameter count mismatch");
    for (const io::NamedTensor& nt : tensors) {
        Tensor& p = m.param(nt.name);
        require(p.shape() == nt.shape, "load_model: shape mismatch for " + nt.name);
        std::copy(nt.values.begin(), nt.values.end(), p.values().begin());
    }
    return m;
}

Tensor eam_forward(const Tensor& f_img, const Tensor& f_evt, const Tensor& wi, const Tensor& bi,
                   const Tensor& we, const Tensor& be) {
    require(f_img.shape() == f_evt.shape(), "eam_forward: branch channel/shape mismatch");
    Tensor gi = sigmoid(conv2d(adaptive_avg_pool(f_img, 1, 1), wi, bi, 1, 0));
    Tensor ge = sigmoid(conv2d(adaptive_avg_pool(f_evt, 1, 1), we, be, 1, 0));
    return add(mul(f_img, gi), mul(f_evt, ge));
}

Tensor egm_forward(const Tensor& f_img, const Tensor& f_evt, const Tensor& proj_w,
                   const Tensor& proj_b, const Tensor& red_w, const Tensor& red_b) {
    Tensor g = conv2d(f_img, proj_w, proj_b, 1, 0);
    g = upsample_bilinear(g, f_evt.dim(1), f_evt.dim(2));
    Tensor gate = sigmoid(conv2d(concat({f_evt, g}, 0), red_w, red_b, 1, 0));
    return add(mul(f_evt, gate), f_evt);
}

Tensor spp_forward(const Tensor& f, const std::vector<std::pair<int, int>>& grids,
                   const SppParams& p, const Tensor& event_ctx) {
    require(grids.size() == p.level_w.size(), "spp_forward: grid/parameter count mismatch");
    const int h = f.dim(1), w = f.dim(2);
    std::vector<Tensor> parts;
    for (std::size_t l = 0; l < grids.size(); ++l) {
        Tensor g = adaptive_avg_pool(f, grids[l].first, grids[l].second);
        g = conv2d(g, p.level_w[l], p.level_b[l], 1, 0);
        parts.push_back(upsample_bilinear(g, h, w));
    }
    if (event_ctx.defined()) {
        require(p.event_w.defined(), "spp_forward: event context given without projection params");
        Tensor ctx = adaptive_avg_pool(event_ctx, h, w);
        parts.push_back(conv2d(ctx, p.event_w, p.event_b, 1, 0));
    }
    return relu(conv2d(concat(parts, 0), p.fuse_w, p.fuse_b, 1, 0));
}

ForwardResult forward(const SegModel& model, const Tensor& rgb, const Tensor& volume,
                      ForwardTrace* trace) {
    const ModelConfig& cfg = model.config;
    const Ctx c{model};
    const int H = cfg.input_height, W = cfg.input_width;
    const bool uses_rgb = cfg.mode != FusionMode::EVENT_ONLY;
    const bool uses_volume =
        cfg.mode == FusionMode::S2D_EAM || cfg.mode == FusionMode::EVENT_ONLY;
    if (uses_rgb)
        require(rgb.defined() && rgb.shape() == Shape{3, H, W}, "forward: rgb shape mismatch");
    if (uses_volume)
        require(volume.defined() && volume.shape() == Shape{cfg.time_bins(), H, W},
                "forward: event volume shape mismatch");

    ForwardResult out;
    std::vector<Tensor> skips;
    Tensor context;

    switch (cfg.mode) {
        case FusionMode::RGB_ONLY:
        case FusionMode::EVENT_ONLY: {
            const std::string pre = cfg.mode == FusionMode::RGB_ONLY ? "rgb" : "evt";
            Tensor x = run_stem(c, pre, cfg.mode == FusionMode::RGB_ONLY ? rgb : volume);
            for (int i = 0; i < kStages; ++i) {
                x = run_stage(c, pre, i, x);
                skips.push_back(x);
                if (trace) trace->rgb_stages.push_back(x);
            }
            context = spp_forward(x, cfg.spp_grids, gather_spp(c, static_cast<int>(cfg.spp_grids.size()), false));
            break;
        }
        case FusionMode::S2D_EAM: {
            Tensor r = run_stem(c, "rgb", rgb);
            Tensor e = run_stem(c, "evt", volume);
            for (int i = 0; i < kStages; ++i) {
                r = run_stage(c, "rgb", i, r);
                e = run_stage(c, "evt", i, e);
                r = run_eam(c, i, r, e);  // fused map feeds the RGB branch
                skips.push_back(r);
                if (trace) {
                    trace->rgb_stages.push_back(r);
                    trace->evt_stages.push_back(e);
                }
            }
            context = spp_forward(r, cfg.spp_grids, gather_spp(c, static_cast<int>(cfg.spp_grids.size()), false));
            break;
        }
        case FusionMode::D2S_EGM: {
            Tensor r = run_stem(c, "rgb", rgb);
            Tensor e = r;  // event branch distills from the shared stem
            for (int i = 0; i < kStages; ++i) {
                r = run_stage(c, "rgb", i, r);
                e = conv_block(c, "evtb.s" + std::to_string(i) + ".c", e, 1, 1);
                e = run_egm(c, i, r, e);
                skips.push_back(r);
                if (trace) {
                    trace->rgb_stages.push_back(r);
                    trace->evt_stages.push_back(e);
                }
            }
            Tensor pred = conv2d(e, c.p("evthead.w"), c.p("evthead.b"), 1, 0);
            out.event_pred = upsample_bilinear(pred, H, W);
            context = spp_forward(r, cfg.spp_grids,
                                  gather_spp(c, static_cast<int>(cfg.spp_grids.size()), true), e);
            break;
        }
    }

    if (trace) trace->context = context;
    out.logits = run_decoder(c, context, skips, H, W);
    return out;
}

Tensor joint_loss(const Tensor& logits, const std::vector<int>& seg_target, int ignore_id,
                  const Tensor& event_pred, const Tensor& event_target, double weight) {
    Tensor ce = cross_entropy(logits, seg_target, ignore_id);
    if (!event_pred.defined()) return ce;
    require(event_target.defined(), "joint_loss: event prediction without a target");
    return add(ce, scale(bce_with_logits(event_pred, event_target), weight));
}

ModelInput prepare_input(const Sample& s, const ModelConfig& cfg, double event_intensity) {
    require(s.width == cfg.input_width && s.height == cfg.input_height,
            "prepare_input: sample geometry does not match the model config");
    ModelInput in;
    const std::size_t hw = s.frame_anchor.size();
    std::vector<double> rgb(3 * hw);
    for (std::size_t i = 0; i < hw; ++i) {
        const double v = s.frame_anchor[i] / 255.0;
        rgb[i] = v;
        rgb[hw + i] = v;
        rgb[2 * hw + i] = v;
    }
    in.rgb = Tensor::from({3, s.height, s.width}, std::move(rgb));
    if (cfg.mode == FusionMode::S2D_EAM || cfg.mode == FusionMode::EVENT_ONLY) {
        EventVolume vol = discretize_volume(s.events, cfg.bins_pos, cfg.bins_neg);
        in.volume = Tensor::from({cfg.time_bins(), s.height, s.width}, std::move(vol.data));
    }
    if (cfg.mode == FusionMode::D2S_EGM)
        in.event_target =
            Tensor::from({2, s.height, s.width}, soft_event_target(s.events, event_intensity));
    in.seg = s.mask;
    return in;
}

std::vector<ModelInput> prepare_inputs(const std::vector<Sample>& samples, const ModelConfig& cfg,
                                       double event_intensity) {
    std::vector<ModelInput> out;
    out.reserve(samples.size());
    for (const Sample& s : samples) out.push_back(prepare_input(s, cfg, event_intensity));
    return out;
}

TrainResult train(SegModel& model, const std::vector<ModelInput>& data, const TrainOptions& opt) {
    require(!data.empty(), "train: empty dataset");
    require(opt.epochs >= 1 && opt.batch_size >= 1, "train: bad schedule");
    model.enable_grads();
    model.zero_grads();

    Rng rng(opt.seed * 0x9e3779b97f4a7c15ull + 1);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);

    std::vector<AdamState> states(model.params.size());
    AdamConfig adam;
    adam.weight_decay = opt.weight_decay;
    const double w_evt = model.config.event_loss_weight;

    TrainResult res;
    const int cosine_total = std::max(1, opt.epochs - 1);
    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        adam.lr = cosine_lr(epoch, cosine_total, opt.lr0, opt.lr_min);
        rng.shuffle(order);
        double ep_loss = 0.0, ep_seg = 0.0, ep_evt = 0.0;
        long n_batches = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(opt.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(opt.batch_size));
            Tape tape;
            Tensor total;
            for (std::size_t bi = start; bi < end; ++bi) {
                const ModelInput& d = data[order[bi]];
                const ForwardResult f = forward(model, d.rgb, d.volume);
                Tensor ce = cross_entropy(f.logits, d.seg, opt.ignore_id);
                Tensor loss = ce;
                ep_seg += ce.item();
                if (f.event_pred.defined()) {
                    Tensor bce = bce_with_logits(f.event_pred, d.event_target);
                    ep_evt += bce.item();
                    loss = add(ce, scale(bce, w_evt));
                }
                total = total.defined() ? add(total, loss) : loss;
            }
            total = scale(total, 1.0 / static_cast<double>(end - start));
            const double lv = total.item();
            if (!std::isfinite(lv))
                throw DivergenceError("train: non-finite loss at epoch " + std::to_string(epoch));
            ep_loss += lv;
            ++n_batches;
            tape.backward(total);
            for (std::size_t i = 0; i < model.params.size(); ++i)
                adam_step(model.params[i].second, states[i], adam);
            model.zero_grads();
        }
        EpochLog log;
        log.epoch = epoch;
        log.lr = adam.lr;
        log.loss = ep_loss / static_cast<double>(n_batches);
        log.seg_loss = ep_seg / static_cast<double>(data.size());
        log.event_loss = ep_evt / static_cast<double>(data.size());
        res.epochs.push_back(log);
    }
    return res;
}

std::string TrainResult::log_json() const {
    json arr = json::array();
    for (const EpochLog& e : epochs) {
        json j;
        j["epoch"] = e.epoch;
        j["lr"] = e.lr;
        j["loss"] = e.loss;
        j["seg_loss"] = e.seg_loss;
        j["event_loss"] = e.event_loss;
        arr.push_back(j);
    }
    json root;
    root["epochs"] = arr;
    return root.dump(2) + "\n";
}

ConfusionMatrix evaluate(const SegModel& model, const std::vector<ModelInput>& data,
                         int ignore_id) {
    ConfusionMatrix cm(model.config.num_classes, ignore_id);
    const int k = model.config.num_classes;
    for (const ModelInput& d : data) {
        const ForwardResult f = forward(model, d.rgb, d.volume);
        const auto lv = f.logits.values();
        const long hw = static_cast<long>(model.config.input_height) * model.config.input_width;
        std::vector<int> pred(static_cast<std::size_t>(hw));
        for (long i = 0; i < hw; ++i) {
            int best = 0;
            double bv = lv[i];
            for (int cidx = 1; cidx < k; ++cidx) {
                const double v = lv[cidx * hw + i];
                if (v > bv) {
                    bv = v;
                    best = cidx;
                }
            }
            pred[static_cast<std::size_t>(i)] = best;
        }
        cm.accumulate(pred, d.seg);
    }
    return cm;
}

}  // namespace evfuse
