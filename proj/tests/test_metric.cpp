#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "couplegen/image_io.hpp"
#include "couplegen/metric.hpp"
#include "couplegen/numerics.hpp"
#include "couplegen/tensor_io.hpp"

using namespace couplegen;

namespace {

MaskGrid left_half(std::size_t side)
{
    MaskGrid m(side, side);
    for (std::size_t y = 0; y < side; ++y)
        for (std::size_t x = 0; x < side / 2; ++x)
            m.set(y, x, true);
    return m;
}

ImageGrid random_image(std::size_t h, std::size_t w, std::size_t c, Rng& rng)
{
    ImageGrid img(h, w, c);
    for (double& p : img.pixels) {
        p = rng.next_unit_real();
    }
    return img;
}

MaskGrid random_mask(std::size_t h, std::size_t w, double density, Rng& rng)
{
    MaskGrid m(h, w);
    for (auto& b : m.bits) {
        b = rng.next_unit_real() < density ? 1 : 0;
    }
    return m;
}

// Pixel-loop oracle, accumulated in long double.
double scalar_f_bg(const std::vector<ImageGrid>& images, const MaskGrid& region)
{
    const auto& first = images.front();
    std::size_t outside = 0;
    for (auto b : region.bits) {
        outside += b ? 0 : 1;
    }
    const long double r = static_cast<long double>(outside) / region.bits.size();
    long double total = 0;
    const std::size_t n = images.size();
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = j + 1; k < n; ++k) {
            long double pair = 0;
            for (std::size_t y = 0; y < first.height; ++y)
                for (std::size_t x = 0; x < first.width; ++x)
                    for (std::size_t c = 0; c < first.channels; ++c) {
                        if (region.at(y, x)) {
                            continue;
                        }
                        const long double d = images[j].at(y, x, c) - images[k].at(y, x, c);
                        pair += d * d;
                    }
            total += pair / first.pixels.size();
        }
    }
    return static_cast<double>(-2.0L / (n * (n - 1) * r) * total);
}

} // namespace

TEST_CASE("jer")
{
    MaskGrid right(4, 4);
    for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t x = 2; x < 4; ++x)
            right.set(y, x, true);
    const std::vector pair{left_half(4), right};
    CHECK(jer(pair) == MaskGrid(4, 4, true));

    const std::vector same{left_half(4), left_half(4)};
    CHECK(jer(same) == left_half(4));

    Rng rng(1);
    const std::vector three{random_mask(5, 7, 0.2, rng), random_mask(5, 7, 0.2, rng),
                            random_mask(5, 7, 0.2, rng)};
    const MaskGrid u = jer(three);
    for (std::size_t y = 0; y < 5; ++y)
        for (std::size_t x = 0; x < 7; ++x)
            CHECK(u.at(y, x) == (three[0].at(y, x) | three[1].at(y, x) | three[2].at(y, x)));

    CHECK_THROWS_AS(jer(std::vector{left_half(4), MaskGrid(4, 5)}), ShapeError);
    CHECK_THROWS_AS(jer(std::vector{left_half(4)}), DomainError);
}

TEST_CASE("validity_ratio")
{
    CHECK(validity_ratio(left_half(32)) == 0.5);
    CHECK(validity_ratio(MaskGrid(32, 32)) == 1.0);
    CHECK(validity_ratio(MaskGrid(32, 32, true)) == 0.0);

    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const std::vector masks{random_mask(6, 6, 0.3, rng), random_mask(6, 6, 0.3, rng),
                                random_mask(6, 6, 0.3, rng)};
        const double joint = validity_ratio(jer(masks));
        for (const auto& m : masks) {
            CHECK(joint <= validity_ratio(m));
        }
    }
}

TEST_CASE("background_similarity")
{
    SUBCASE("hand-computable case")
    {
        ImageGrid a(32, 32, 1, 0.0), b(32, 32, 1, 0.0);
        for (std::size_t y = 0; y < 16; ++y)
            for (std::size_t x = 16; x < 32; ++x)
                b.at(y, x, 0) = 1.0;
        const std::vector images{a, b};
        CHECK(std::abs(background_similarity(images, left_half(32)) - -0.5) <= 1e-12);
        CHECK(scalar_f_bg(images, left_half(32)) == -0.5);
    }
    SUBCASE("identical images give zero")
    {
        Rng rng(3);
        const auto img = random_image(8, 8, 3, rng);
        const std::vector images{img, img, img, img};
        CHECK(background_similarity(images, MaskGrid(8, 8)) == 0.0);
        CHECK_FALSE(std::signbit(background_similarity(images, MaskGrid(8, 8))));
    }
    SUBCASE("full coverage is degenerate")
    {
        const std::vector images{ImageGrid(4, 4, 1), ImageGrid(4, 4, 1)};
        CHECK_THROWS_AS(background_similarity(images, MaskGrid(4, 4, true)), DegenerateMaskError);
    }
    SUBCASE("shape errors")
    {
        const std::vector images{ImageGrid(4, 4, 1), ImageGrid(4, 5, 1)};
        CHECK_THROWS_AS(background_similarity(images, MaskGrid(4, 4)), ShapeError);
        const std::vector one{ImageGrid(4, 4, 1)};
        CHECK_THROWS_AS(background_similarity(one, MaskGrid(4, 4)), DomainError);
    }
    SUBCASE("matches the pixel-loop oracle")
    {
        Rng rng(4);
        for (int trial = 0; trial < 30; ++trial) {
            const std::size_t n = 2 + rng.next_u64() % 4, c = trial % 2 ? 3 : 1;
            std::vector<ImageGrid> images;
            for (std::size_t i = 0; i < n; ++i) {
                images.push_back(random_image(9, 7, c, rng));
            }
            const MaskGrid region = random_mask(9, 7, 0.4, rng);
            if (region.count() == region.bits.size()) {
                continue;
            }
            const double f = background_similarity(images, region);
            CHECK(f == doctest::Approx(scalar_f_bg(images, region)).epsilon(1e-12));
            CHECK(f <= 0.0);
            CHECK(f == reference::background_similarity(images, region));
        }
    }
    SUBCASE("noise inside the region changes nothing")
    {
        Rng rng(5);
        std::vector images{random_image(16, 16, 1, rng), random_image(16, 16, 1, rng),
                           random_image(16, 16, 1, rng)};
        const MaskGrid region = random_mask(16, 16, 0.5, rng);
        const double before = background_similarity(images, region);
        for (auto& img : images)
            for (std::size_t y = 0; y < 16; ++y)
                for (std::size_t x = 0; x < 16; ++x)
                    if (region.at(y, x)) {
                        img.at(y, x, 0) = rng.next_unit_real();
                    }
        CHECK(background_similarity(images, region) == before);
    }
    SUBCASE("zero exactly when backgrounds agree")
    {
        Rng rng(6);
        const MaskGrid region = left_half(8);
        const auto base = random_image(8, 8, 1, rng);
        auto other = base;
        for (std::size_t y = 0; y < 8; ++y)
            for (std::size_t x = 0; x < 4; ++x)
                other.at(y, x, 0) = rng.next_unit_real();
        CHECK(background_similarity(std::vector{base, other}, region) == 0.0);
        other.at(3, 6, 0) = std::nextafter(other.at(3, 6, 0), 2.0);
        CHECK(background_similarity(std::vector{base, other}, region) < 0.0);
    }
    SUBCASE("permutation invariance")
    {
        Rng rng(7);
        std::vector images{random_image(6, 6, 1, rng), random_image(6, 6, 1, rng),
                           random_image(6, 6, 1, rng), random_image(6, 6, 1, rng)};
        const MaskGrid region = random_mask(6, 6, 0.3, rng);
        const double f = background_similarity(images, region);
        std::sort(images.begin(), images.end(),
                  [](const ImageGrid& a, const ImageGrid& b) { return a.pixels > b.pixels; });
        do {
            CHECK(background_similarity(images, region) == doctest::Approx(f).epsilon(1e-14));
        } while (std::next_permutation(images.begin(), images.end(),
                                       [](const ImageGrid& a, const ImageGrid& b) {
                                           return a.pixels > b.pixels;
                                       }));
    }
}

TEST_CASE("combined_metric")
{
    const Lambdas paper;
    const double exact = 300.0 * -2.080e-4 + (1.0 / 30.0) * 22.61;
    const double f_ti[] = {22.61};
    const double f_c = combined_metric(-2.080e-4, f_ti, paper);
    CHECK(std::abs(f_c - exact) <= 1e-9);
    CHECK(std::abs(f_c - 0.6912666666666667) <= 1e-9);
    CHECK(std::round(f_c * 1e5) / 1e5 == doctest::Approx(0.69127).epsilon(1e-12));

    const double zeros[] = {0.0, 0.0};
    CHECK(combined_metric(0.0, zeros, paper) == 0.0);

    const double scores[] = {10.0, 20.0, 60.0};
    CHECK(combined_metric(-5.0, scores, {0.0, 0.5}) == doctest::Approx(0.5 * 30.0));
    // Linear in each argument.
    const double a = combined_metric(-1e-3, scores, paper);
    const double b = combined_metric(-2e-3, scores, paper);
    CHECK(a - b == doctest::Approx(300.0 * 1e-3));
    const double bumped[] = {13.0, 20.0, 60.0};
    CHECK(combined_metric(-1e-3, bumped, paper) - a == doctest::Approx(3.0 / 30.0 / 3.0));

    CHECK_THROWS_AS(combined_metric(0.0, std::span<const double>{}, paper), DomainError);
}

TEST_CASE("MetricReport JSON")
{
    MetricReport r{-1e-4, {30.5, 40.25}, 0.75, 1.0, {300.0, 1.0 / 30.0}};
    const auto j = r.to_json();
    for (const char* key : {"f_bg", "f_ti", "validity_ratio", "f_c", "lambda_bg", "lambda_ti"}) {
        CHECK(j.contains(key));
    }
    const auto back = MetricReport::from_json(j);
    CHECK(back.f_bg == r.f_bg);
    CHECK(back.f_ti == r.f_ti);
    CHECK(back.lambdas.lambda_ti == r.lambdas.lambda_ti);
}

TEST_CASE("stub alignment scorer")
{
    StubAlignmentScorer scorer;
    scorer.register_prompt("A cute Pikachu sits.");
    scorer.register_prompt("A beautiful girl stands.");

    ImageGrid gradient(8, 8, 1);
    for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t x = 0; x < 8; ++x)
            gradient.at(y, x, 0) = static_cast<double>(y * 8 + x) / 63.0;
    ImageGrid checker(4, 4, 3);
    for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t x = 0; x < 4; ++x)
            for (std::size_t c = 0; c < 3; ++c)
                checker.at(y, x, c) = (x + y + c) % 2 ? 1.0 : 0.25;

    SUBCASE("deterministic and in range")
    {
        const double s = scorer.score("A cute Pikachu sits.", gradient);
        CHECK(s == scorer.score("A cute Pikachu sits.", gradient));
        StubAlignmentScorer again;
        again.register_prompt("A cute Pikachu sits.");
        CHECK(again.score("A cute Pikachu sits.", gradient) == s);
        CHECK(s >= 0.0);
        CHECK(s <= 100.0);
    }
    SUBCASE("frozen goldens")
    {
        CHECK(scorer.score("A cute Pikachu sits.", gradient) ==
              doctest::Approx(40.266588437909547).epsilon(1e-12));
        CHECK(scorer.score("A beautiful girl stands.", checker) ==
              doctest::Approx(39.321940421005799).epsilon(1e-12));
    }
    SUBCASE("an image scored against its own embedding gives 100")
    {
        scorer.register_embedding("self", scorer.image_embedding(checker));
        CHECK(scorer.score("self", checker) == doctest::Approx(100.0).epsilon(1e-12));
    }
    SUBCASE("unknown key")
    {
        CHECK_THROWS_AS(scorer.score("A dog.", gradient), LookupError);
    }
    SUBCASE("different seeds give different embeddings")
    {
        StubAlignmentScorer other(StubScorerConfig{64, 1, 2});
        CHECK(other.text_embedding("A cute Pikachu sits.") !=
              scorer.text_embedding("A cute Pikachu sits."));
    }
}

TEST_CASE("netpbm image and mask files")
{
    const auto dir = std::filesystem::temp_directory_path() / "couplegen_image_test";
    std::filesystem::create_directories(dir);
    Rng rng(9);

    for (std::size_t channels : {1u, 3u}) {
        const auto img = quantize_8bit(random_image(5, 6, channels, rng));
        const auto path = dir / (channels == 1 ? "a.pgm" : "a.ppm");
        write_image(path, img);
        CHECK(read_image(path) == img);
    }

    ImageGrid odd(1, 1, 1, 0.5);
    CHECK(quantize_8bit(odd).pixels[0] == 128.0 / 255.0);

    const MaskGrid mask = random_mask(7, 3, 0.5, rng);
    write_mask(dir / "m.pgm", mask);
    CHECK(read_mask(dir / "m.pgm") == mask);

    std::ofstream(dir / "bad.pgm", std::ios::binary) << "P5\n2 1\n255\n" << char(0) << char(17);
    CHECK_THROWS_AS(read_mask(dir / "bad.pgm"), FormatError);
    std::ofstream(dir / "short.pgm", std::ios::binary) << "P5\n2 2\n255\n" << char(0);
    CHECK_THROWS_AS(read_image(dir / "short.pgm"), FormatError);
    std::ofstream(dir / "ascii.pgm", std::ios::binary) << "P2\n1 1\n255\n0\n";
    CHECK_THROWS_AS(read_image(dir / "ascii.pgm"), FormatError);
    std::filesystem::remove_all(dir);
}
