#include "couplegen/metric.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include "couplegen/numerics.hpp"

namespace couplegen {

ImageGrid::ImageGrid(std::size_t height, std::size_t width, std::size_t channels, double fill)
    : height(height), width(width), channels(channels), pixels(height * width * channels, fill)
{
}

void ImageGrid::check() const
{
    if (pixels.size() != height * width * channels || channels == 0) {
        throw ShapeError("ImageGrid: pixel count does not match " + std::to_string(height) + "x" +
                         std::to_string(width) + "x" + std::to_string(channels));
    }
    for (double v : pixels) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw DomainError("ImageGrid: pixel value outside [0, 1]");
        }
    }
}

MaskGrid::MaskGrid(std::size_t height, std::size_t width, bool fill)
    : height(height), width(width), bits(height * width, fill ? 1 : 0)
{
}

std::size_t MaskGrid::count() const
{
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

nlohmann::json MetricReport::to_json() const
{
    return {{"f_bg", f_bg},       {"f_ti", f_ti},
            {"validity_ratio", validity_ratio},
            {"f_c", f_c},         {"lambda_bg", lambdas.lambda_bg},
            {"lambda_ti", lambdas.lambda_ti}};
}

MetricReport MetricReport::from_json(const nlohmann::json& j)
{
    MetricReport r;
    r.f_bg = j.at("f_bg").get<double>();
    r.f_ti = j.at("f_ti").get<std::vector<double>>();
    r.validity_ratio = j.at("validity_ratio").get<double>();
    r.f_c = j.at("f_c").get<double>();
    r.lambdas.lambda_bg = j.at("lambda_bg").get<double>();
    r.lambdas.lambda_ti = j.at("lambda_ti").get<double>();
    return r;
}

MaskGrid jer(std::span<const MaskGrid> masks)
{
    if (masks.size() < 2) {
        throw DomainError("jer: at least two masks are required");
    }
    MaskGrid out(masks.front().height, masks.front().width);
    for (const MaskGrid& m : masks) {
        if (m.height != out.height || m.width != out.width || m.bits.size() != out.bits.size()) {
            throw ShapeError("jer: mask dimensions differ");
        }
        for (std::size_t i = 0; i < out.bits.size(); ++i) {
            out.bits[i] |= m.bits[i] ? 1 : 0;
        }
    }
    return out;
}

double validity_ratio(const MaskGrid& joint_region)
{
    const std::size_t total = joint_region.height * joint_region.width;
    if (total == 0) {
        throw ShapeError("validity_ratio: empty mask");
    }
    return 1.0 - static_cast<double>(joint_region.count()) / static_cast<double>(total);
}

namespace {

double check_inputs(std::span<const ImageGrid> images, const MaskGrid& joint_region)
{
    if (images.size() < 2) {
        throw DomainError("background_similarity: at least two images are required");
    }
    for (const ImageGrid& img : images) {
        img.check();
        if (img.height != joint_region.height || img.width != joint_region.width ||
            img.channels != images.front().channels) {
            throw ShapeError("background_similarity: image and mask dimensions differ");
        }
    }
    const double r = validity_ratio(joint_region);
    if (r <= 0.0) {
        throw DegenerateMaskError("background_similarity: joint entity region covers the whole "
                                  "image (R = 0)");
    }
    return r;
}

double masked_mean_squared(const ImageGrid& a, const ImageGrid& b, const MaskGrid& joint_region)
{
    const std::size_t c = a.channels;
    double acc = 0.0;
    for (std::size_t p = 0; p < joint_region.bits.size(); ++p) {
        if (joint_region.bits[p]) {
            continue;
        }
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double d = a.pixels[p * c + ch] - b.pixels[p * c + ch];
            acc += d * d;
        }
    }
    return acc / static_cast<double>(a.pixels.size());
}

double finish(double pair_sum, std::size_t n, double r)
{
    if (pair_sum == 0.0) {
        return 0.0;
    }
    const double nn = static_cast<double>(n);
    return -(2.0 / (nn * (nn - 1.0) * r)) * pair_sum;
}

} // namespace

double background_similarity(std::span<const ImageGrid> images, const MaskGrid& joint_region)
{
    const double r = check_inputs(images, joint_region);
    const std::size_t n = images.size();
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = j + 1; k < n; ++k) {
            pairs.emplace_back(j, k);
        }
    }
    std::vector<double> terms(pairs.size());
    const auto count = static_cast<std::ptrdiff_t>(pairs.size());
#pragma omp parallel for schedule(static) if (count > 1)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
        const auto [j, k] = pairs[static_cast<std::size_t>(i)];
        terms[static_cast<std::size_t>(i)] = masked_mean_squared(images[j], images[k], joint_region);
    }
    double pair_sum = 0.0;
    for (double t : terms) {
        pair_sum += t;
    }
    return finish(pair_sum, n, r);
}

namespace reference {

double background_similarity(std::span<const ImageGrid> images, const MaskGrid& joint_region)
{
    const double r = check_inputs(images, joint_region);
    double pair_sum = 0.0;
    for (std::size_t j = 0; j < images.size(); ++j) {
        for (std::size_t k = j + 1; k < images.size(); ++k) {
            pair_sum += masked_mean_squared(images[j], images[k], joint_region);
        }
    }
    return finish(pair_sum, images.size(), r);
}

} // namespace reference

double combined_metric(double f_bg, std::span<const double> f_ti, Lambdas lambdas)
{
    if (f_ti.empty()) {
        throw DomainError("combined_metric: f_ti must not be empty");
    }
    const double sum = std::accumulate(f_ti.begin(), f_ti.end(), 0.0);
    return lambdas.lambda_bg * f_bg + (lambdas.lambda_ti / static_cast<double>(f_ti.size())) * sum;
}

double cosine_score(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size()) {
        throw ShapeError("cosine_score: embedding lengths differ");
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double denom = std::sqrt(na * nb);
    const double cosine = denom > 0.0 ? std::clamp(dot / denom, -1.0, 1.0) : 0.0;
    return 50.0 * (cosine + 1.0);
}

StubAlignmentScorer::StubAlignmentScorer(StubScorerConfig config) : config_(config)
{
    if (config_.embed_dim == 0) {
        throw DomainError("StubAlignmentScorer: embed_dim must be >= 1");
    }
}

void StubAlignmentScorer::register_prompt(const std::string& text)
{
    register_prompt(text, text);
}

void StubAlignmentScorer::register_prompt(const std::string& key, const std::string& text)
{
    prompts_[key] = text_embedding(text);
}

void StubAlignmentScorer::register_embedding(const std::string& key, std::vector<double> embedding)
{
    if (embedding.size() != config_.embed_dim) {
        throw ShapeError("StubAlignmentScorer: embedding length must equal embed_dim");
    }
    prompts_[key] = std::move(embedding);
}

std::vector<double> StubAlignmentScorer::text_embedding(std::string_view text) const
{
    std::vector<double> e(config_.embed_dim, 0.0);
    std::size_t pos = 0;
    while (pos < text.size()) {
        while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) {
            ++pos;
        }
        const std::size_t start = pos;
        while (pos < text.size() && !std::isspace(static_cast<unsigned char>(text[pos]))) {
            ++pos;
        }
        if (pos == start) {
            break;
        }
        Rng rng(mix64(fnv1a64(text.substr(start, pos - start)) ^ config_.text_seed));
        for (double& v : e) {
            v += rng.uniform(-1.0, 1.0);
        }
    }
    return e;
}

std::vector<double> StubAlignmentScorer::image_embedding(const ImageGrid& image) const
{
    image.check();
    const std::uint64_t shape_tag =
        mix64(image.height * 0x9e3779b97f4a7c15ULL ^ image.width * 0xc2b2ae3d27d4eb4fULL ^
              image.channels);
    std::vector<double> e(config_.embed_dim, 0.0);
    for (std::size_t d = 0; d < e.size(); ++d) {
        Rng rng(mix64(config_.image_seed ^ shape_tag ^ (d + 1)));
        double acc = 0.0;
        for (double px : image.pixels) {
            acc += rng.uniform(-1.0, 1.0) * px;
        }
        e[d] = acc;
    }
    return e;
}

double StubAlignmentScorer::score(std::string_view prompt_key, const ImageGrid& image) const
{
    const auto it = prompts_.find(prompt_key);
    if (it == prompts_.end()) {
        throw LookupError("alignment scorer: unknown prompt key '" + std::string(prompt_key) + "'");
    }
    return cosine_score(it->second, image_embedding(image));
}

} // namespace couplegen
