#include "deffa/net.hpp"

#include <sstream>

#include "deffa/errors.hpp"

namespace F = torch::nn::functional;

namespace deffa {

namespace {

torch::nn::Conv2d conv(int64_t in, int64_t out, int64_t kernel, int64_t dilation = 1,
                       bool bias = true)
{
    return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, kernel)
                                 .padding(dilation * (kernel / 2))
                                 .dilation(dilation)
                                 .bias(bias));
}

torch::Tensor upsample2x(const torch::Tensor& x)
{
    return F::interpolate(x, F::InterpolateFuncOptions()
                                 .size(std::vector<int64_t>{x.size(2) * 2, x.size(3) * 2})
                                 .mode(torch::kBilinear)
                                 .align_corners(false));
}

void require(bool ok, const std::string& message)
{
    if (!ok) throw ValidationError(message);
}

// Sum over a size x size window centred on each pixel (zero outside),
// via running sums along each spatial axis.
torch::Tensor box_sum(const torch::Tensor& x, int64_t size)
{
    using torch::indexing::Slice;
    const int64_t lo = size / 2;
    const int64_t hi = size - 1 - lo;
    const int64_t h = x.size(2);
    const int64_t w = x.size(3);
    auto c = F::pad(torch::cumsum(F::pad(x, F::PadFuncOptions({lo, hi, 0, 0})), 3),
                    F::PadFuncOptions({1, 0, 0, 0}));
    auto rows = c.index({Slice(), Slice(), Slice(), Slice(size, size + w)}) -
                c.index({Slice(), Slice(), Slice(), Slice(0, w)});
    c = F::pad(torch::cumsum(F::pad(rows, F::PadFuncOptions({0, 0, lo, hi})), 2),
               F::PadFuncOptions({0, 0, 1, 0}));
    return c.index({Slice(), Slice(), Slice(size, size + h)}) - c.index({Slice(), Slice(), Slice(0, h)});
}

}  // namespace

void ModelConfig::validate() const
{
    for (auto c : encoder_channels) require(c > 0, "encoder channel counts must be positive");
    for (auto c : decoder_channels) require(c > 0, "decoder channel counts must be positive");
    require(encoder_channels.size() == decoder_channels.size(),
            "encoder and decoder must have the same number of levels");
    require(bottleneck_channels > 0, "bottleneck_channels must be positive");
    require(dropblock_size > 0, "dropblock_size must be positive");
    require(dropblock_rate >= 0.0 && dropblock_rate < 1.0, "dropblock_rate must be in [0,1)");
    require(attention_reduction > 0, "attention_reduction must be positive");
    require(spatial_kernel > 0 && spatial_kernel % 2 == 1, "spatial_kernel must be odd");
    require(raw_in_channels > 0 && invariant_in_channels > 0 && out_channels > 0,
            "input/output channel counts must be positive");
}

void to_json(nlohmann::json& j, const ModelConfig& cfg)
{
    j = nlohmann::json{{"encoder_channels", cfg.encoder_channels},
                       {"bottleneck_channels", cfg.bottleneck_channels},
                       {"decoder_channels", cfg.decoder_channels},
                       {"dropblock_size", cfg.dropblock_size},
                       {"dropblock_rate", cfg.dropblock_rate},
                       {"attention_reduction", cfg.attention_reduction},
                       {"spatial_kernel", cfg.spatial_kernel},
                       {"raw_in_channels", cfg.raw_in_channels},
                       {"invariant_in_channels", cfg.invariant_in_channels},
                       {"out_channels", cfg.out_channels},
                       {"resincept_decoder", cfg.arch.resincept_decoder},
                       {"fff", cfg.arch.fff},
                       {"frf", cfg.arch.frf}};
}

void from_json(const nlohmann::json& j, ModelConfig& cfg)
{
    j.at("encoder_channels").get_to(cfg.encoder_channels);
    j.at("bottleneck_channels").get_to(cfg.bottleneck_channels);
    j.at("decoder_channels").get_to(cfg.decoder_channels);
    j.at("dropblock_size").get_to(cfg.dropblock_size);
    j.at("dropblock_rate").get_to(cfg.dropblock_rate);
    j.at("attention_reduction").get_to(cfg.attention_reduction);
    j.at("spatial_kernel").get_to(cfg.spatial_kernel);
    j.at("raw_in_channels").get_to(cfg.raw_in_channels);
    j.at("invariant_in_channels").get_to(cfg.invariant_in_channels);
    j.at("out_channels").get_to(cfg.out_channels);
    j.at("resincept_decoder").get_to(cfg.arch.resincept_decoder);
    j.at("fff").get_to(cfg.arch.fff);
    j.at("frf").get_to(cfg.arch.frf);
}

// ---------------------------------------------------------------------------

DropBlockImpl::DropBlockImpl(int64_t block_size, double rate)
    : block_size_(block_size), rate_(rate)
{
    require(block_size > 0, "DropBlock size must be positive");
    require(rate >= 0.0 && rate < 1.0, "DropBlock rate must be in [0,1)");
}

torch::Tensor DropBlockImpl::forward(const torch::Tensor& x)
{
    if (!is_training() || rate_ <= 0.0) return x;
    const int64_t h = x.size(2);
    const int64_t w = x.size(3);
    const int64_t bs = std::min({block_size_, h, w});
    const double valid = static_cast<double>((h - bs + 1) * (w - bs + 1));
    const double gamma = rate_ / static_cast<double>(bs * bs) * static_cast<double>(h * w) / valid;

    torch::Tensor keep;
    {
        torch::NoGradGuard no_grad;
        auto seeds = (torch::rand_like(x) < std::min(gamma, 1.0)).to(x.scalar_type());
        keep = (box_sum(seeds, bs) < 0.5).to(x.scalar_type());
        keep.mul_(static_cast<double>(keep.numel()) / keep.sum().clamp_min(1.0).item<double>());
    }
    return x * keep;
}

// ---------------------------------------------------------------------------

std::string to_string(BlockKind kind)
{
    switch (kind) {
    case BlockKind::BB: return "BB";
    case BlockKind::SIB: return "SIB";
    case BlockKind::SGB: return "SGB";
    case BlockKind::Connect: return "CONNECT";
    case BlockKind::ResIncept: return "RESINCEPT";
    }
    return "?";
}

namespace {

// Appends Conv stack -> DropBlock -> BN -> ReLU for the three primitive kinds.
void append_primitive(torch::nn::Sequential& seq, BlockKind kind, int64_t in, int64_t out,
                      int64_t db_size, double db_rate)
{
    switch (kind) {
    case BlockKind::BB:
        seq->push_back(conv(in, out, 3));
        break;
    case BlockKind::SIB:
        seq->push_back(conv(in, out, 3));
        seq->push_back(conv(out, out, 3));
        break;
    case BlockKind::SGB:
        seq->push_back(conv(in, out, 1));
        seq->push_back(conv(out, out, 3));
        break;
    default:
        throw std::logic_error("not a primitive block kind");
    }
    seq->push_back(DropBlock(db_size, db_rate));
    seq->push_back(torch::nn::BatchNorm2d(out));
    seq->push_back(torch::nn::ReLU());
}

}  // namespace

ConvBlockImpl::ConvBlockImpl(BlockKind kind, int64_t in_channels, int64_t out_channels,
                             int64_t dropblock_size, double dropblock_rate)
    : kind_(kind)
{
    require(in_channels > 0 && out_channels > 0,
            to_string(kind) + " block needs positive channel counts");
    main_ = torch::nn::Sequential();
    switch (kind) {
    case BlockKind::BB:
    case BlockKind::SIB:
    case BlockKind::SGB:
        append_primitive(main_, kind, in_channels, out_channels, dropblock_size, dropblock_rate);
        break;
    case BlockKind::Connect:
        append_primitive(main_, BlockKind::BB, in_channels, out_channels, dropblock_size,
                         dropblock_rate);
        append_primitive(main_, BlockKind::BB, out_channels, out_channels, dropblock_size,
                         dropblock_rate);
        break;
    case BlockKind::ResIncept:
        append_primitive(main_, BlockKind::BB, in_channels, out_channels, dropblock_size,
                         dropblock_rate);
        append_primitive(main_, BlockKind::SGB, out_channels, out_channels, dropblock_size,
                         dropblock_rate);
        residual_ = torch::nn::Sequential(conv(in_channels, out_channels, 1),
                                          torch::nn::BatchNorm2d(out_channels),
                                          torch::nn::ReLU());
        register_module("residual", residual_);
        break;
    }
    register_module("main", main_);
}

torch::Tensor ConvBlockImpl::forward(const torch::Tensor& x)
{
    if (kind_ == BlockKind::ResIncept) return residual_->forward(x) + main_->forward(x);
    return main_->forward(x);
}

ConvBlock make_block(BlockKind kind, int64_t in_channels, int64_t out_channels,
                     const ModelConfig& cfg)
{
    return ConvBlock(kind, in_channels, out_channels, cfg.dropblock_size, cfg.dropblock_rate);
}

// ---------------------------------------------------------------------------

ChannelAttentionImpl::ChannelAttentionImpl(int64_t channels, int64_t reduction)
{
    require(channels > 0 && reduction > 0, "channel attention needs positive sizes");
    const int64_t hidden = std::max<int64_t>(1, channels / reduction);
    fc1 = register_module("fc1", torch::nn::Linear(torch::nn::LinearOptions(channels, hidden).bias(false)));
    fc2 = register_module("fc2", torch::nn::Linear(torch::nn::LinearOptions(hidden, channels).bias(false)));
}

torch::Tensor ChannelAttentionImpl::weights(const torch::Tensor& f)
{
    auto avg = f.mean({2, 3});
    auto max = f.amax({2, 3});
    auto mlp = [this](const torch::Tensor& v) { return fc2(torch::relu(fc1(v))); };
    return torch::sigmoid(mlp(avg) + mlp(max)).unsqueeze(-1).unsqueeze(-1);
}

torch::Tensor ChannelAttentionImpl::forward(const torch::Tensor& f)
{
    return f * weights(f);
}

SpatialAttentionImpl::SpatialAttentionImpl(int64_t kernel)
{
    require(kernel > 0 && kernel % 2 == 1, "spatial attention kernel must be odd, got " +
                                               std::to_string(kernel));
    conv = register_module("conv", deffa::conv(2, 1, kernel, 1, false));
}

torch::Tensor SpatialAttentionImpl::weights(const torch::Tensor& f)
{
    auto avg = f.mean(1, true);
    auto max = f.amax(1, true);
    return torch::sigmoid(conv(torch::cat({avg, max}, 1)));
}

torch::Tensor SpatialAttentionImpl::forward(const torch::Tensor& f)
{
    return f * weights(f);
}

FeatureFilteringFusionImpl::FeatureFilteringFusionImpl(int64_t in_channels, int64_t out_channels,
                                                       int64_t reduction, int64_t spatial_kernel)
{
    channel = register_module("channel", ChannelAttention(in_channels, reduction));
    spatial = register_module("spatial", SpatialAttention(spatial_kernel));
    fuse = register_module("fuse", torch::nn::Sequential(conv(2 * in_channels, out_channels, 3),
                                                         torch::nn::BatchNorm2d(out_channels),
                                                         torch::nn::ReLU()));
}

torch::Tensor FeatureFilteringFusionImpl::forward(const torch::Tensor& fx, const torch::Tensor& fy)
{
    require(fx.sizes() == fy.sizes(), "FFF inputs must have identical shapes");
    return fuse->forward(torch::cat({channel(fx), spatial(fy)}, 1));
}

FeatureReconstructingFusionImpl::FeatureReconstructingFusionImpl(int64_t low_channels,
                                                                 int64_t high_channels,
                                                                 int64_t out_channels)
{
    const int64_t cat = 2 * low_channels;
    dilated_proj = register_module("dilated_proj", conv(cat, out_channels, 1));
    dilated = register_module("dilated", conv(out_channels, out_channels, 3, 2));
    local_proj = register_module("local_proj", conv(cat, out_channels, 1));
    local = register_module("local", conv(out_channels, out_channels, 3));
    refine = register_module("refine", torch::nn::Sequential(conv(out_channels, out_channels, 1),
                                                             torch::nn::BatchNorm2d(out_channels),
                                                             torch::nn::ReLU()));
    high_proj = register_module("high_proj", conv(high_channels, out_channels, 1));
    attn = register_module("attn", conv(out_channels, out_channels, 1));
    out = register_module("out", conv(high_channels + out_channels, out_channels, 1));
}

torch::Tensor FeatureReconstructingFusionImpl::fused_low(const torch::Tensor& lx,
                                                         const torch::Tensor& ly)
{
    auto cat = torch::cat({lx, ly}, 1);
    return refine->forward(dilated(dilated_proj(cat)) + local(local_proj(cat)));
}

torch::Tensor FeatureReconstructingFusionImpl::attention(const torch::Tensor& fused,
                                                         const torch::Tensor& hx_up)
{
    return torch::sigmoid(attn(torch::relu(high_proj(hx_up) + fused)));
}

torch::Tensor FeatureReconstructingFusionImpl::forward(const torch::Tensor& lx,
                                                       const torch::Tensor& ly,
                                                       const torch::Tensor& hx)
{
    require(lx.sizes() == ly.sizes(), "FRF low-level inputs must have identical shapes");
    require(hx.dim() == 4 && hx.size(0) == lx.size(0) && 2 * hx.size(2) == lx.size(2) &&
                2 * hx.size(3) == lx.size(3),
            "FRF high-level input must be exactly half the low-level resolution");
    auto hx_up = upsample2x(hx);
    auto fused = fused_low(lx, ly);
    auto weights = attention(fused, hx_up);
    return out(torch::cat({hx_up, weights * fused}, 1));
}

// ---------------------------------------------------------------------------

DeffaNetImpl::DeffaNetImpl(ModelConfig cfg) : cfg_(std::move(cfg))
{
    cfg_.validate();
    const auto& enc = cfg_.encoder_channels;
    int64_t in_raw = cfg_.raw_in_channels;
    int64_t in_inv = cfg_.invariant_in_channels;
    for (size_t l = 0; l < 3; ++l) {
        const auto tag = std::to_string(l + 1);
        enc_specific_bb_[l] = register_module("enc1_bb" + tag, make_block(BlockKind::BB, in_raw, enc[l], cfg_));
        enc_specific_sib_[l] = register_module("enc1_sib" + tag, make_block(BlockKind::SIB, enc[l], enc[l], cfg_));
        enc_invariant_bb_[l] = register_module("enc2_bb" + tag, make_block(BlockKind::BB, in_inv, enc[l], cfg_));
        enc_invariant_sgb_[l] = register_module("enc2_sgb" + tag, make_block(BlockKind::SGB, enc[l], enc[l], cfg_));
        in_raw = in_inv = enc[l];
    }

    int64_t connect_in = 2 * enc[2];
    if (cfg_.arch.fff) {
        fff_ = register_module("fff", FeatureFilteringFusion(enc[2], cfg_.bottleneck_channels,
                                                             cfg_.attention_reduction,
                                                             cfg_.spatial_kernel));
        connect_in = cfg_.bottleneck_channels;
    }
    connect_ = register_module("connect", make_block(BlockKind::Connect, connect_in,
                                                     cfg_.bottleneck_channels, cfg_));

    int64_t high = cfg_.bottleneck_channels;
    const auto decoder_kind = cfg_.arch.resincept_decoder ? BlockKind::ResIncept : BlockKind::Connect;
    for (int l = 2; l >= 0; --l) {
        const auto tag = std::to_string(l + 1);
        const int64_t dec = cfg_.decoder_channels[static_cast<size_t>(2 - l)];
        int64_t block_in = high + 2 * enc[static_cast<size_t>(l)];
        if (cfg_.arch.frf) {
            frf_[static_cast<size_t>(l)] = register_module(
                "frf" + tag, FeatureReconstructingFusion(enc[static_cast<size_t>(l)], high, dec));
            block_in = dec;
        }
        decoder_[static_cast<size_t>(l)] =
            register_module("dec" + tag, make_block(decoder_kind, block_in, dec, cfg_));
        high = dec;
    }
    head_ = register_module("head", conv(high, cfg_.out_channels, 1));
}

torch::Tensor DeffaNetImpl::forward(const torch::Tensor& raw, const torch::Tensor& invariant)
{
    require(raw.dim() == 4 && invariant.dim() == 4, "network inputs must be rank-4 (B,C,H,W)");
    require(raw.size(1) == cfg_.raw_in_channels,
            "raw input must have " + std::to_string(cfg_.raw_in_channels) + " channels");
    require(invariant.size(1) == cfg_.invariant_in_channels,
            "invariant input must have " + std::to_string(cfg_.invariant_in_channels) + " channel(s)");
    require(raw.size(0) == invariant.size(0) && raw.size(2) == invariant.size(2) &&
                raw.size(3) == invariant.size(3),
            "raw and invariant inputs must share batch and spatial dimensions");
    require(raw.size(2) % 8 == 0 && raw.size(3) % 8 == 0,
            "input height and width must be divisible by 8 (three 2x downsamplings), got " +
                std::to_string(raw.size(2)) + "x" + std::to_string(raw.size(3)));

    std::array<torch::Tensor, 3> lx, ly;
    auto x = raw;
    auto y = invariant;
    for (size_t l = 0; l < 3; ++l) {
        x = enc_specific_sib_[l](enc_specific_bb_[l](x));
        y = enc_invariant_sgb_[l](enc_invariant_bb_[l](y));
        lx[l] = x;
        ly[l] = y;
        x = F::max_pool2d(x, F::MaxPool2dFuncOptions(2));
        y = F::max_pool2d(y, F::MaxPool2dFuncOptions(2));
    }

    auto h = cfg_.arch.fff ? fff_(x, y) : torch::cat({x, y}, 1);
    h = connect_(h);

    for (int l = 2; l >= 0; --l) {
        const auto i = static_cast<size_t>(l);
        auto skip = cfg_.arch.frf ? frf_[i](lx[i], ly[i], h)
                                  : torch::cat({upsample2x(h), lx[i], ly[i]}, 1);
        h = decoder_[i](skip);
    }
    return torch::sigmoid(head_(h));
}

// ---------------------------------------------------------------------------

int64_t parameter_payload_bytes(const torch::nn::Module& module)
{
    int64_t total = 0;
    for (const auto& p : module.parameters()) total += p.numel() * p.element_size();
    for (const auto& b : module.buffers()) total += b.numel() * b.element_size();
    return total;
}

int64_t serialized_payload_bytes(DeffaNet& net)
{
    std::ostringstream buffer;
    torch::serialize::OutputArchive archive;
    net->save(archive);
    archive.save_to(buffer);
    return static_cast<int64_t>(buffer.str().size());
}

void save_checkpoint(const std::filesystem::path& path, DeffaNet& net,
                     const nlohmann::json& manifest)
{
    torch::serialize::OutputArchive archive;
    archive.write("format", c10::IValue(std::string(kCheckpointFormat)));
    archive.write("config", c10::IValue(nlohmann::json(net->config()).dump()));
    archive.write("manifest", c10::IValue(manifest.dump()));
    torch::serialize::OutputArchive weights;
    net->save(weights);
    archive.write("model", weights);
    try {
        archive.save_to(path.string());
    } catch (const c10::Error& e) {
        throw IoError("cannot write checkpoint " + path.string() + ": " + e.what_without_backtrace());
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& path)
{
    if (!std::filesystem::exists(path)) throw IoError("checkpoint not found: " + path.string());
    torch::serialize::InputArchive archive;
    try {
        archive.load_from(path.string());
    } catch (const c10::Error& e) {
        throw IoError("cannot read checkpoint " + path.string() + ": " + e.what_without_backtrace());
    }
    c10::IValue format, config, manifest;
    if (!archive.try_read("format", format) || !format.isString() ||
        format.toStringRef() != kCheckpointFormat) {
        throw ValidationError("unsupported checkpoint format in " + path.string() +
                              " (expected " + kCheckpointFormat + ")");
    }
    archive.read("config", config);
    archive.read("manifest", manifest);

    Checkpoint ckpt;
    ckpt.config = nlohmann::json::parse(config.toStringRef()).get<ModelConfig>();
    ckpt.manifest = nlohmann::json::parse(manifest.toStringRef());
    ckpt.net = DeffaNet(ckpt.config);
    torch::serialize::InputArchive weights;
    archive.read("model", weights);
    ckpt.net->load(weights);
    return ckpt;
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected)
{
    auto ckpt = load_checkpoint(path);
    if (!(ckpt.config == expected)) {
        throw ValidationError("checkpoint " + path.string() +
                              " was saved with a different model config: stored " +
                              nlohmann::json(ckpt.config).dump() + ", expected " +
                              nlohmann::json(expected).dump());
    }
    return ckpt;
}

}  // namespace deffa
