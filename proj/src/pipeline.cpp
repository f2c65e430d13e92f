#include "couplegen/pipeline.hpp"

#include <cmath>
#include <exception>

#include "couplegen/image_io.hpp"

namespace couplegen {

namespace {

constexpr double kWeightRange = 0.1;
// Gain of the tanh pixel readout.
constexpr double kReadoutGain = 2.5;

AttentionWeights random_attention(std::size_t d, Rng& rng)
{
    return {random_uniform(d, d, -kWeightRange, kWeightRange, rng),
            random_uniform(d, d, -kWeightRange, kWeightRange, rng),
            random_uniform(d, d, -kWeightRange, kWeightRange, rng),
            random_uniform(d, d, -kWeightRange, kWeightRange, rng)};
}

FeedForward random_feed_forward(std::size_t d, Rng& rng)
{
    return {random_uniform(d, d, -kWeightRange, kWeightRange, rng),
            random_uniform(d, d, -kWeightRange, kWeightRange, rng)};
}

BlockWeights random_block(std::size_t d, Rng& rng)
{
    BlockWeights w;
    w.attn = random_attention(d, rng);
    w.ff_text = random_feed_forward(d, rng);
    w.ff_image = random_feed_forward(d, rng);
    return w;
}

// Output projection with residual, then the stream's feed-forward.
TokenSeq finish_stream(const TokenSeq& x, const TokenSeq& attended, const BlockWeights& w,
                       const FeedForward& ff)
{
    return ff.apply_residual(add(x, matmul(attended, w.attn.w_o)));
}

// One embedding-level branch: attention over [text; image] with the unified
// feed-forward applied to the whole sequence.
StreamState single_branch(const TokenSeq& text, const TokenSeq& image, const BlockWeights& w,
                          NormConst norm)
{
    const StreamState attended = branch_attention(text, image, w.attn, norm);
    const TokenSeq x = vstack(text, image);
    const TokenSeq y = finish_stream(x, vstack(attended.text, attended.image), w, w.ff_image);
    return {slice_rows(y, 0, text.rows()), slice_rows(y, text.rows(), image.rows())};
}

double sigma(std::size_t i, std::size_t n)
{
    return 1.0 - static_cast<double>(i) / static_cast<double>(n);
}

TokenSeq euler_update(const TokenSeq& x, const TokenSeq& velocity, std::size_t step, std::size_t n)
{
    return add(x, scaled(velocity, sigma(step + 1, n) - sigma(step, n)));
}

} // namespace

void PipelineConfig::check() const
{
    if (d_model == 0 || text_tokens == 0 || side == 0 || double_blocks == 0 ||
        single_blocks == 0 || steps == 0) {
        throw DomainError("PipelineConfig: all sizes and counts must be >= 1");
    }
}

TokenSeq FeedForward::apply_residual(const TokenSeq& x) const
{
    return add(x, matmul(tanh_elementwise(matmul(x, w1)), w2));
}

std::uint64_t Pipeline::text_seed() const
{
    return mix64(config_.weight_seed ^ 0x7e47e7b3d5a1c9f1ULL);
}

Pipeline init_pipeline(const PipelineConfig& config)
{
    config.check();
    Pipeline p;
    p.config_ = config;
    Rng rng(config.weight_seed);
    for (std::size_t i = 0; i < config.double_blocks; ++i) {
        p.double_blocks_.push_back(random_block(config.d_model, rng));
    }
    for (std::size_t i = 0; i < config.single_blocks; ++i) {
        p.single_blocks_.push_back(random_block(config.d_model, rng));
    }
    return p;
}

LatentState run_double_block(const LatentState& state, const BlockWeights& w, double theta,
                             NormConst norm)
{
    const CoupledStreamState attended =
        coupled_qkv_attention({state.background, state.entity, state.image}, w.attn, theta, norm);
    LatentState out;
    out.background = finish_stream(state.background, attended.background, w, w.ff_text);
    out.entity = finish_stream(state.entity, attended.entity, w, w.ff_text);
    out.image = finish_stream(state.image, attended.image, w, w.ff_image);
    return out;
}

LatentState run_single_block(const LatentState& state, const BlockWeights& w, double theta,
                             NormConst norm)
{
    if (!(theta >= 0.0 && theta <= 1.0)) {
        throw DomainError("run_single_block: theta must lie in [0, 1]");
    }
    StreamState bg = single_branch(state.background, state.image, w, norm);
    StreamState ent = single_branch(state.entity, state.image, w, norm);
    LatentState out;
    out.background = std::move(bg.text);
    out.entity = std::move(ent.text);
    out.image = merge_image_states(ent.image, bg.image, theta);
    return out;
}

StreamState run_reference_double_block(const StreamState& state, const BlockWeights& w,
                                       NormConst norm)
{
    const StreamState attended = joint_attention(state, w.attn, norm);
    return {finish_stream(state.text, attended.text, w, w.ff_text),
            finish_stream(state.image, attended.image, w, w.ff_image)};
}

StreamState run_reference_single_block(const StreamState& state, const BlockWeights& w,
                                       NormConst norm)
{
    return single_branch(state.text, state.image, w, norm);
}

TokenSeq initial_noise(const PipelineConfig& config, std::uint64_t noise_seed,
                       std::size_t entity_index)
{
    const std::uint64_t seed =
        config.shared_noise ? noise_seed : mix64(noise_seed ^ (0xa0761d6478bd642fULL * (entity_index + 1)));
    Rng rng(seed);
    return random_uniform(config.side * config.side, config.d_model, -1.0, 1.0, rng);
}

ImageGrid read_pixels(const TokenSeq& image_tokens, std::size_t side)
{
    if (image_tokens.rows() != side * side) {
        throw ShapeError("read_pixels: expected " + std::to_string(side * side) + " image tokens");
    }
    ImageGrid img(side, side, 1);
    for (std::size_t p = 0; p < image_tokens.rows(); ++p) {
        img.pixels[p] = 0.5 * (std::tanh(kReadoutGain * image_tokens(p, 0)) + 1.0);
    }
    return img;
}

namespace {

std::vector<TokenSeq> run_entity(const Pipeline& pipeline, const TokenSeq& background,
                                 const TokenSeq& entity, const ThetaSchedule& schedule,
                                 TokenSeq x, bool record)
{
    const PipelineConfig& cfg = pipeline.config();
    std::vector<TokenSeq> latents;
    for (std::size_t i = 0; i < cfg.steps; ++i) {
        const double theta = schedule[i];
        LatentState state{x, background, entity};
        for (const BlockWeights& w : pipeline.double_blocks()) {
            state = run_double_block(state, w, theta, pipeline.double_norm());
        }
        for (const BlockWeights& w : pipeline.single_blocks()) {
            state = run_single_block(state, w, theta, pipeline.single_norm());
        }
        x = euler_update(x, state.image, i, cfg.steps);
        if (record || i + 1 == cfg.steps) {
            latents.push_back(x);
        }
    }
    return latents;
}

} // namespace

SampleResult sample(const Pipeline& pipeline, const PromptBundle& bundle,
                    const ThetaSchedule& schedule, std::uint64_t noise_seed,
                    const SampleOptions& options)
{
    const PipelineConfig& cfg = pipeline.config();
    bundle.check();
    if (schedule.size() != cfg.steps) {
        throw DomainError("sample: schedule has " + std::to_string(schedule.size()) +
                          " steps, pipeline expects " + std::to_string(cfg.steps));
    }
    require_valid(schedule);

    const TokenSeq background =
        embed_prompt(bundle.background, cfg.d_model, cfg.text_tokens, pipeline.text_seed());
    const std::size_t n = bundle.entities.size();
    SampleResult result;
    result.images.resize(n);
    result.latents.resize(n);
    std::vector<std::exception_ptr> failures(n);

    const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (options.parallel && n > 1)
    for (std::ptrdiff_t e = 0; e < count; ++e) {
        const auto idx = static_cast<std::size_t>(e);
        try {
            const TokenSeq entity =
                embed_prompt(bundle.entities[idx], cfg.d_model, cfg.text_tokens, pipeline.text_seed());
            auto latents = run_entity(pipeline, background, entity, schedule,
                                      initial_noise(cfg, noise_seed, idx), options.record_latents);
            result.images[idx] = read_pixels(latents.back(), cfg.side);
            if (options.record_latents) {
                result.latents[idx] = std::move(latents);
            }
        } catch (...) {
            failures[idx] = std::current_exception();
        }
    }
    for (const auto& f : failures) {
        if (f) {
            std::rethrow_exception(f);
        }
    }
    return result;
}

ImageGrid sample_single_prompt(const Pipeline& pipeline, const std::string& prompt,
                               std::uint64_t noise_seed, std::size_t entity_index)
{
    const PipelineConfig& cfg = pipeline.config();
    const TokenSeq text = embed_prompt(prompt, cfg.d_model, cfg.text_tokens, pipeline.text_seed());
    TokenSeq x = initial_noise(cfg, noise_seed, entity_index);
    for (std::size_t i = 0; i < cfg.steps; ++i) {
        StreamState state{text, x};
        for (const BlockWeights& w : pipeline.double_blocks()) {
            state = run_reference_double_block(state, w, pipeline.double_norm());
        }
        for (const BlockWeights& w : pipeline.single_blocks()) {
            state = run_reference_single_block(state, w, pipeline.single_norm());
        }
        x = euler_update(x, state.image, i, cfg.steps);
    }
    return read_pixels(x, cfg.side);
}

MaskGrid threshold_mask(const ImageGrid& image, const ImageGrid& reference, double threshold)
{
    if (image.height != reference.height || image.width != reference.width ||
        image.channels != reference.channels) {
        throw ShapeError("threshold_mask: image dimensions differ");
    }
    MaskGrid mask(image.height, image.width);
    for (std::size_t p = 0; p < mask.bits.size(); ++p) {
        for (std::size_t c = 0; c < image.channels; ++c) {
            const std::size_t i = p * image.channels + c;
            if (std::abs(image.pixels[i] - reference.pixels[i]) > threshold) {
                mask.bits[p] = 1;
            }
        }
    }
    return mask;
}

MetricReport score_images(std::span<const ImageGrid> images, std::span<const MaskGrid> masks,
                          const std::vector<std::string>& prompt_keys,
                          const AlignmentScorer& scorer, Lambdas lambdas)
{
    if (!prompt_keys.empty() && prompt_keys.size() != images.size()) {
        throw DomainError("score_images: need one prompt key per image");
    }
    const MaskGrid joint = jer(masks);
    MetricReport report;
    report.lambdas = lambdas;
    report.validity_ratio = validity_ratio(joint);
    report.f_bg = background_similarity(images, joint);
    for (std::size_t i = 0; i < prompt_keys.size(); ++i) {
        report.f_ti.push_back(scorer.score(prompt_keys[i], images[i]));
    }
    report.f_c = report.f_ti.empty() ? lambdas.lambda_bg * report.f_bg
                                     : combined_metric(report.f_bg, report.f_ti, lambdas);
    return report;
}

Generation generate(const Pipeline& pipeline, const PromptBundle& bundle,
                    const ThetaSchedule& schedule, std::uint64_t noise_seed,
                    const std::optional<std::vector<MaskGrid>>& masks,
                    const AlignmentScorer& scorer, Lambdas lambdas)
{
    Generation g;
    for (ImageGrid& img : sample(pipeline, bundle, schedule, noise_seed).images) {
        g.images.push_back(quantize_8bit(img));
    }
    if (masks) {
        if (masks->size() != g.images.size()) {
            throw DomainError("generate: need one mask per entity");
        }
        g.masks = *masks;
    } else {
        // With shared noise every entity has the same background-only reference.
        const bool shared = pipeline.config().shared_noise;
        std::optional<ImageGrid> reference;
        for (std::size_t j = 0; j < g.images.size(); ++j) {
            if (!reference || !shared) {
                reference = quantize_8bit(
                    sample_single_prompt(pipeline, bundle.background, noise_seed, shared ? 0 : j));
            }
            g.masks.push_back(threshold_mask(g.images[j], *reference));
        }
    }
    g.report = score_images(g.images, g.masks, bundle.entities, scorer, lambdas);
    return g;
}

MetricReport generate_and_score(const Pipeline& pipeline, const PromptBundle& bundle,
                                const ThetaSchedule& schedule, std::uint64_t noise_seed,
                                const std::optional<std::vector<MaskGrid>>& masks,
                                const AlignmentScorer& scorer, Lambdas lambdas)
{
    return generate(pipeline, bundle, schedule, noise_seed, masks, scorer, lambdas).report;
}

StubAlignmentScorer make_stub_scorer(const PromptBundle& bundle, StubScorerConfig config)
{
    StubAlignmentScorer scorer(config);
    for (const std::string& e : bundle.entities) {
        scorer.register_prompt(e);
    }
    return scorer;
}

} // namespace couplegen
