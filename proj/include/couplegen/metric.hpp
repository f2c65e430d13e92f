#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace couplegen {

/// H x W x C image, channel-interleaved, values in [0, 1].
struct ImageGrid {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 1;
    std::vector<double> pixels;

    ImageGrid() = default;
    ImageGrid(std::size_t height, std::size_t width, std::size_t channels, double fill = 0.0);

    double& at(std::size_t y, std::size_t x, std::size_t c)
    {
        return pixels[(y * width + x) * channels + c];
    }
    double at(std::size_t y, std::size_t x, std::size_t c) const
    {
        return pixels[(y * width + x) * channels + c];
    }

    void check() const;
    friend bool operator==(const ImageGrid&, const ImageGrid&) = default;
};

/// H x W binary mask; 1 marks entity pixels.
struct MaskGrid {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> bits;

    MaskGrid() = default;
    MaskGrid(std::size_t height, std::size_t width, bool fill = false);

    std::uint8_t at(std::size_t y, std::size_t x) const { return bits[y * width + x]; }
    void set(std::size_t y, std::size_t x, bool on) { bits[y * width + x] = on ? 1 : 0; }
    std::size_t count() const;

    friend bool operator==(const MaskGrid&, const MaskGrid&) = default;
};

/// R = 0 makes the background distance undefined.
class DegenerateMaskError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class LookupError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

struct Lambdas {
    double lambda_bg = 300.0;
    double lambda_ti = 1.0 / 30.0;
};

struct MetricReport {
    double f_bg = 0.0;
    std::vector<double> f_ti;
    double validity_ratio = 1.0;
    double f_c = 0.0;
    Lambdas lambdas;

    nlohmann::json to_json() const;
    static MetricReport from_json(const nlohmann::json& j);
};

/// Joint entity region: pixelwise OR of at least two equally sized masks.
MaskGrid jer(std::span<const MaskGrid> masks);

/// 1 - (#set pixels) / (width * height).
double validity_ratio(const MaskGrid& joint_region);

/// -(2 / (n (n - 1) R)) * sum_{j<k} ||mask o I_j - mask o I_k||^2, where the
/// mask zeroes JER pixels and ||.||^2 is the mean squared difference over all
/// H*W*C positions. Pair terms run in parallel and are summed in pair order.
double background_similarity(std::span<const ImageGrid> images, const MaskGrid& joint_region);

/// lambda_bg * f_bg + (lambda_ti / n) * sum f_ti.
double combined_metric(double f_bg, std::span<const double> f_ti, Lambdas lambdas);

namespace reference {

double background_similarity(std::span<const ImageGrid> images, const MaskGrid& joint_region);

} // namespace reference

/// Text-image alignment f_ti >= 0 for a registered prompt.
class AlignmentScorer {
public:
    virtual ~AlignmentScorer() = default;
    /// Throws LookupError for a prompt key the scorer does not know.
    virtual double score(std::string_view prompt_key, const ImageGrid& image) const = 0;
};

struct StubScorerConfig {
    std::size_t embed_dim = 64;
    std::uint64_t text_seed = 0x5eed7e47;
    std::uint64_t image_seed = 0x5eed1a6e;
};

/// Deterministic stand-in for an embedding model. Prompts embed through a
/// seeded token hash; images through a fixed seeded random linear projection
/// of their pixels. The score is 50 * (cosine + 1), so it lies in [0, 100].
class StubAlignmentScorer : public AlignmentScorer {
public:
    explicit StubAlignmentScorer(StubScorerConfig config = {});

    /// Registers `text` under the key `text`.
    void register_prompt(const std::string& text);
    void register_prompt(const std::string& key, const std::string& text);
    /// Registers an explicit embedding (length embed_dim) under `key`.
    void register_embedding(const std::string& key, std::vector<double> embedding);

    std::vector<double> text_embedding(std::string_view text) const;
    std::vector<double> image_embedding(const ImageGrid& image) const;

    double score(std::string_view prompt_key, const ImageGrid& image) const override;

private:
    StubScorerConfig config_;
    std::map<std::string, std::vector<double>, std::less<>> prompts_;
};

/// 50 * (cos(a, b) + 1), with the cosine clamped to [-1, 1].
double cosine_score(std::span<const double> a, std::span<const double> b);

} // namespace couplegen
