#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "couplegen/attention.hpp"
#include "couplegen/metric.hpp"
#include "couplegen/prompt_io.hpp"
#include "couplegen/schedule.hpp"

namespace couplegen {

/// Toy two-stage generator dimensions. Image tokens = side * side.
struct PipelineConfig {
    std::size_t d_model = 16;
    std::size_t text_tokens = 8;
    std::size_t side = 8;
    std::size_t double_blocks = 2;
    std::size_t single_blocks = 2;
    std::size_t steps = 10;
    std::uint64_t weight_seed = 0;
    std::uint64_t noise_seed = 0;
    /// Every entity starts from the same noise; false gives each its own.
    bool shared_noise = true;

    void check() const;
};

/// x + tanh(x W1) W2.
struct FeedForward {
    Matrix w1;
    Matrix w2;

    TokenSeq apply_residual(const TokenSeq& x) const;
};

struct BlockWeights {
    AttentionWeights attn;
    FeedForward ff_text;  ///< text streams in double blocks
    FeedForward ff_image; ///< image stream in double blocks; whole sequence in single blocks
};

struct LatentState {
    TokenSeq image;
    TokenSeq background;
    TokenSeq entity;
};

class Pipeline {
public:
    const PipelineConfig& config() const { return config_; }
    const std::vector<BlockWeights>& double_blocks() const { return double_blocks_; }
    const std::vector<BlockWeights>& single_blocks() const { return single_blocks_; }

    /// sqrt(d_text + d_img) with both widths equal to d_model.
    NormConst double_norm() const { return NormConst::joint(config_.d_model, config_.d_model); }
    /// sqrt(d_concat) with d_concat = d_model.
    NormConst single_norm() const { return NormConst::concat(config_.d_model); }

    std::uint64_t text_seed() const;

    friend Pipeline init_pipeline(const PipelineConfig& config);

private:
    PipelineConfig config_;
    std::vector<BlockWeights> double_blocks_;
    std::vector<BlockWeights> single_blocks_;
};

/// Weights drawn uniformly from [-0.1, 0.1] by an Rng seeded with weight_seed.
Pipeline init_pipeline(const PipelineConfig& config);

/// Coupled QKV attention, output projection + residual, per-stream feed-forward.
LatentState run_double_block(const LatentState& state, const BlockWeights& w, double theta,
                             NormConst norm);

/// Background-image and entity-image branches each attend and run the unified
/// feed-forward; the two image states are merged and shared by both branches.
LatentState run_single_block(const LatentState& state, const BlockWeights& w, double theta,
                             NormConst norm);

// Uncoupled blocks driven by a single text prompt.
StreamState run_reference_double_block(const StreamState& state, const BlockWeights& w,
                                       NormConst norm);
StreamState run_reference_single_block(const StreamState& state, const BlockWeights& w,
                                       NormConst norm);

struct SampleOptions {
    /// Keep the image latent after every step.
    bool record_latents = false;
    /// Run entities concurrently.
    bool parallel = true;
};

struct SampleResult {
    std::vector<ImageGrid> images;             ///< one per entity
    std::vector<std::vector<TokenSeq>> latents; ///< [entity][step], when recorded
};

/// Initial image tokens for entity `entity_index`.
TokenSeq initial_noise(const PipelineConfig& config, std::uint64_t noise_seed,
                       std::size_t entity_index);

/// Tanh squash of token channel 0 onto a side x side grayscale image.
ImageGrid read_pixels(const TokenSeq& image_tokens, std::size_t side);

/// Runs N Euler steps of x <- x + (sigma_{i+1} - sigma_i) v with sigma linear
/// from 1 to 0, where v is the image stream after all blocks at theta_i.
SampleResult sample(const Pipeline& pipeline, const PromptBundle& bundle,
                    const ThetaSchedule& schedule, std::uint64_t noise_seed,
                    const SampleOptions& options = {});

/// The uncoupled pipeline conditioned on `prompt` alone.
ImageGrid sample_single_prompt(const Pipeline& pipeline, const std::string& prompt,
                               std::uint64_t noise_seed, std::size_t entity_index = 0);

inline constexpr double kAutoMaskThreshold = 0.1;

/// Pixels where any channel differs from the reference by more than threshold.
MaskGrid threshold_mask(const ImageGrid& image, const ImageGrid& reference,
                        double threshold = kAutoMaskThreshold);

struct Generation {
    std::vector<ImageGrid> images; ///< quantized to 8 bits, as written to disk
    std::vector<MaskGrid> masks;
    MetricReport report;
};

/// Samples, quantizes to 8 bits, obtains masks (given, or thresholded against
/// the theta = 0 image) and scores. `scorer` is queried with each entity text.
Generation generate(const Pipeline& pipeline, const PromptBundle& bundle,
                    const ThetaSchedule& schedule, std::uint64_t noise_seed,
                    const std::optional<std::vector<MaskGrid>>& masks,
                    const AlignmentScorer& scorer, Lambdas lambdas = {});

MetricReport generate_and_score(const Pipeline& pipeline, const PromptBundle& bundle,
                                const ThetaSchedule& schedule, std::uint64_t noise_seed,
                                const std::optional<std::vector<MaskGrid>>& masks,
                                const AlignmentScorer& scorer, Lambdas lambdas = {});

/// Computes the report for already generated images.
MetricReport score_images(std::span<const ImageGrid> images, std::span<const MaskGrid> masks,
                          const std::vector<std::string>& prompt_keys,
                          const AlignmentScorer& scorer, Lambdas lambdas);

/// Stub scorer with every entity prompt of `bundle` registered.
StubAlignmentScorer make_stub_scorer(const PromptBundle& bundle, StubScorerConfig config = {});

} // namespace couplegen
