#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

namespace deffa {

/// Which architectural components are active. The default is the full
/// model; the ablation harness switches pieces off to recover the
/// dual-encoder baseline.
struct ArchitectureFlags {
    bool resincept_decoder = true;  ///< otherwise two stacked base blocks
    bool fff = true;                ///< otherwise plain concat at the bottleneck
    bool frf = true;                ///< otherwise plain concat skips

    bool operator==(const ArchitectureFlags&) const = default;
};

struct ModelConfig {
    std::array<int64_t, 3> encoder_channels{16, 32, 64};
    int64_t bottleneck_channels = 128;
    std::array<int64_t, 3> decoder_channels{64, 32, 16};  ///< coarse to fine
    int64_t dropblock_size = 7;
    double dropblock_rate = 0.1;
    int64_t attention_reduction = 8;
    int64_t spatial_kernel = 7;
    int64_t raw_in_channels = 3;
    int64_t invariant_in_channels = 1;
    int64_t out_channels = 1;
    ArchitectureFlags arch;

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

void to_json(nlohmann::json& j, const ModelConfig& cfg);
void from_json(const nlohmann::json& j, ModelConfig& cfg);

// ---------------------------------------------------------------------------
// Building blocks
// ---------------------------------------------------------------------------

/// Structured dropout: zeroes square regions of side `block_size` and
/// rescales the survivors. Identity in eval mode or at rate 0.
class DropBlockImpl : public torch::nn::Module {
public:
    DropBlockImpl(int64_t block_size, double rate);
    torch::Tensor forward(const torch::Tensor& x);

private:
    int64_t block_size_;
    double rate_;
};
TORCH_MODULE(DropBlock);

enum class BlockKind { BB, SIB, SGB, Connect, ResIncept };

std::string to_string(BlockKind kind);

/// BB:        ReLU(BN(DropBlock(Conv3x3(x))))
/// SIB:       ReLU(BN(DropBlock(Conv3x3(Conv3x3(x)))))
/// SGB:       ReLU(BN(DropBlock(Conv3x3(Conv1x1(x)))))
/// Connect:   BB(BB(x))
/// ResIncept: ReLU(BN(Conv1x1(x))) + SGB(BB(x))
class ConvBlockImpl : public torch::nn::Module {
public:
    ConvBlockImpl(BlockKind kind, int64_t in_channels, int64_t out_channels,
                  int64_t dropblock_size, double dropblock_rate);
    torch::Tensor forward(const torch::Tensor& x);

    BlockKind kind() const { return kind_; }

private:
    BlockKind kind_;
    torch::nn::Sequential main_{nullptr};
    torch::nn::Sequential residual_{nullptr};
};
TORCH_MODULE(ConvBlock);

/// Convenience wrapper used for the per-block shape/eval contracts: the
/// block is built with `cfg`'s DropBlock settings.
ConvBlock make_block(BlockKind kind, int64_t in_channels, int64_t out_channels,
                     const ModelConfig& cfg);

/// f * sigmoid(MLP(avgpool(f)) + MLP(maxpool(f))), shared two-layer MLP.
class ChannelAttentionImpl : public torch::nn::Module {
public:
    ChannelAttentionImpl(int64_t channels, int64_t reduction);
    torch::Tensor forward(const torch::Tensor& f);
    torch::Tensor weights(const torch::Tensor& f);

    torch::nn::Linear fc1{nullptr}, fc2{nullptr};
};
TORCH_MODULE(ChannelAttention);

/// f * sigmoid(Conv_kxk([mean_c(f), max_c(f)])).
class SpatialAttentionImpl : public torch::nn::Module {
public:
    SpatialAttentionImpl(int64_t kernel);
    torch::Tensor forward(const torch::Tensor& f);
    torch::Tensor weights(const torch::Tensor& f);

    torch::nn::Conv2d conv{nullptr};
};
TORCH_MODULE(SpatialAttention);

/// Bottleneck fusion: channel attention on the raw-image branch, spatial
/// attention on the invariant branch, concat, Conv3x3-BN-ReLU.
class FeatureFilteringFusionImpl : public torch::nn::Module {
public:
    FeatureFilteringFusionImpl(int64_t in_channels, int64_t out_channels,
                               int64_t reduction, int64_t spatial_kernel);
    torch::Tensor forward(const torch::Tensor& fx, const torch::Tensor& fy);

    ChannelAttention channel{nullptr};
    SpatialAttention spatial{nullptr};
    torch::nn::Sequential fuse{nullptr};
};
TORCH_MODULE(FeatureFilteringFusion);

/// Skip-connection replacement. `hx` is the decoder map one scale coarser
/// than `lx`/`ly`; it is upsampled 2x here.
class FeatureReconstructingFusionImpl : public torch::nn::Module {
public:
    FeatureReconstructingFusionImpl(int64_t low_channels, int64_t high_channels,
                                    int64_t out_channels);
    torch::Tensor forward(const torch::Tensor& lx, const torch::Tensor& ly,
                          const torch::Tensor& hx);

    /// Fused low-level map L_{x+y} (before attention).
    torch::Tensor fused_low(const torch::Tensor& lx, const torch::Tensor& ly);
    /// Attention weights for the given fused low-level map and upsampled hx.
    torch::Tensor attention(const torch::Tensor& fused, const torch::Tensor& hx_up);

    torch::nn::Conv2d dilated_proj{nullptr}, dilated{nullptr};
    torch::nn::Conv2d local_proj{nullptr}, local{nullptr};
    torch::nn::Sequential refine{nullptr};
    torch::nn::Conv2d high_proj{nullptr}, attn{nullptr}, out{nullptr};
};
TORCH_MODULE(FeatureReconstructingFusion);

// ---------------------------------------------------------------------------
// Full network
// ---------------------------------------------------------------------------

class DeffaNetImpl : public torch::nn::Module {
public:
    explicit DeffaNetImpl(ModelConfig cfg = {});

    /// raw: (B,3,H,W), invariant: (B,1,H,W), H and W divisible by 8.
    /// Returns per-pixel vessel probabilities (B,1,H,W).
    torch::Tensor forward(const torch::Tensor& raw, const torch::Tensor& invariant);

    const ModelConfig& config() const { return cfg_; }

private:
    ModelConfig cfg_;
    std::array<ConvBlock, 3> enc_specific_bb_{nullptr, nullptr, nullptr};
    std::array<ConvBlock, 3> enc_specific_sib_{nullptr, nullptr, nullptr};
    std::array<ConvBlock, 3> enc_invariant_bb_{nullptr, nullptr, nullptr};
    std::array<ConvBlock, 3> enc_invariant_sgb_{nullptr, nullptr, nullptr};
    FeatureFilteringFusion fff_{nullptr};
    ConvBlock connect_{nullptr};
    std::array<FeatureReconstructingFusion, 3> frf_{nullptr, nullptr, nullptr};
    std::array<ConvBlock, 3> decoder_{nullptr, nullptr, nullptr};
    torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(DeffaNet);

/// Bytes occupied by all parameters and buffers at their stored dtype.
int64_t parameter_payload_bytes(const torch::nn::Module& module);

/// Bytes of a standalone serialized state (parameters + buffers).
int64_t serialized_payload_bytes(DeffaNet& net);

inline constexpr const char* kCheckpointFormat = "deffa-checkpoint/1";

struct Checkpoint {
    DeffaNet net{nullptr};
    ModelConfig config;
    nlohmann::json manifest;  ///< training manifest (free-form)
};

void save_checkpoint(const std::filesystem::path& path, DeffaNet& net,
                     const nlohmann::json& manifest = nlohmann::json::object());

/// Loads a checkpoint, building the network from its stored config.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Loads a checkpoint and fails if its stored config differs from `expected`.
Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);

}  // namespace deffa
