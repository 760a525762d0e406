#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "oracles.hpp"
#include "pcstyle/errors.hpp"
#include "pcstyle/masked_ops.hpp"

using namespace pcstyle;

namespace {

double max_abs_diff(const FeatureMap& got, const std::vector<double>& want) {
    REQUIRE(got.values.size() == want.size());
    double m = 0.0;
    for (std::size_t i = 0; i < want.size(); ++i) m = std::max(m, std::abs(got.values[i] - want[i]));
    return m;
}

bool window_inside(const ConvSpec& s, int oy, int ox, int h, int w) {
    const int y0 = oy * s.stride - s.padding, x0 = ox * s.stride - s.padding;
    return y0 >= 0 && x0 >= 0 && y0 + s.kernel_h <= h && x0 + s.kernel_w <= w;
}

bool window_touches_input(const ConvSpec& s, int oy, int ox, int h, int w) {
    const int y0 = oy * s.stride - s.padding, x0 = ox * s.stride - s.padding;
    return y0 + s.kernel_h > 0 && x0 + s.kernel_w > 0 && y0 < h && x0 < w;
}

} // namespace

TEST_SUITE("partial_conv2d") {
    TEST_CASE("all-ones mask matches dense convolution") {
        std::mt19937_64 rng(11);
        for (int trial = 0; trial < 40; ++trial) {
            const int k = 1 + static_cast<int>(rng() % 4);
            const int stride = 1 + static_cast<int>(rng() % 2);
            const int pad = static_cast<int>(rng() % 2);
            const bool renorm = rng() % 2 == 0;
            const auto x = oracle::random_features(rng, 3, 7 + static_cast<int>(rng() % 4), 6 + static_cast<int>(rng() % 5));
            const auto spec = oracle::random_spec(rng, 3, 4, k, k, stride, pad, renorm);
            const auto out = partial_conv2d({x, MaskMap::ones(x.height, x.width)}, spec);
            int oh = 0, ow = 0;
            const auto dense = oracle::dense_conv(x, spec, oh, ow);
            REQUIRE(out.features.height == oh);
            REQUIRE(out.features.width == ow);
            for (int y = 0; y < oh; ++y)
                for (int xx = 0; xx < ow; ++xx)
                    CHECK(out.mask.at(y, xx) == (window_touches_input(spec, y, xx, x.height, x.width) ? 1.0f : 0.0f));
            for (int o = 0; o < spec.out_channels; ++o)
                for (int y = 0; y < oh; ++y)
                    for (int xx = 0; xx < ow; ++xx) {
                        // Padding positions are holes: windows lying wholly in padding are empty, and
                        // renormalized border windows are rescaled, so only those two cases leave dense.
                        if (!window_touches_input(spec, y, xx, x.height, x.width)) continue;
                        if (renorm && pad > 0 && !window_inside(spec, y, xx, x.height, x.width)) continue;
                        CHECK(out.features.at(o, y, xx) ==
                              doctest::Approx(dense[(static_cast<std::size_t>(o) * oh + y) * ow + xx]).epsilon(1e-5));
                    }
        }
    }

    TEST_CASE("all-zeros mask gives zero features and zero mask") {
        std::mt19937_64 rng(3);
        const auto x = oracle::random_features(rng, 2, 5, 5);
        const auto spec = oracle::random_spec(rng, 2, 3, 3, 3, 1, 1, true);
        const auto out = partial_conv2d({x, MaskMap::zeros(5, 5)}, spec);
        CHECK(out.mask == MaskMap::zeros(5, 5));
        for (float v : out.features.values) CHECK(v == 0.0f);
    }

    TEST_CASE("single valid center pixel with an all-ones kernel") {
        FeatureMap x(1, 3, 3, 0.25f);
        x.at(0, 1, 1) = 0.5f;
        MaskMap m(3, 3);
        m.at(1, 1) = 1.0f;
        ConvSpec spec;
        spec.in_channels = spec.out_channels = 1;
        spec.kernel_h = spec.kernel_w = 3;
        spec.weights.assign(9, 1.0f);
        spec.bias = {0.0f};
        spec.padding = 1;
        spec.renormalize = true;

        const auto ref = oracle::partial_conv(x, m, spec);
        const auto out = partial_conv2d({x, m}, spec);
        // Every window contains the centre: 9 * 0.5 / 1, frozen from the oracle.
        for (std::size_t i = 0; i < 9; ++i) {
            CHECK(ref.features[i] == doctest::Approx(4.5));
            CHECK(out.features.values[i] == doctest::Approx(4.5));
            CHECK(out.mask.values[i] == 1.0f);
        }
    }

    TEST_CASE("random binary and soft masks match the per-pixel oracle") {
        std::mt19937_64 rng(5);
        for (int trial = 0; trial < 30; ++trial) {
            const int k = 1 + static_cast<int>(rng() % 3) * 2 - (trial % 5 == 0 ? 1 : 0);
            const int kk = std::max(1, k);
            const int stride = 1 + static_cast<int>(rng() % 2);
            const int pad = static_cast<int>(rng() % 3);
            const auto x = oracle::random_features(rng, 4, 9, 8);
            const auto m = trial % 2 ? oracle::random_binary_mask(rng, 9, 8, 0.4) : oracle::random_soft_mask(rng, 9, 8);
            const auto spec = oracle::random_spec(rng, 4, 5, kk, kk, stride, pad, trial % 3 != 0);
            const auto ref = oracle::partial_conv(x, m, spec);
            const auto out = partial_conv2d({x, m}, spec);
            REQUIRE(out.features.height == ref.out_h);
            REQUIRE(out.features.width == ref.out_w);
            CHECK(max_abs_diff(out.features, ref.features) < 1e-4);
            for (std::size_t i = 0; i < ref.mask.size(); ++i) CHECK(out.mask.values[i] == ref.mask[i]);
        }
    }

    TEST_CASE("features at mask-0 positions never influence the output") {
        std::mt19937_64 rng(17);
        const auto x = oracle::random_features(rng, 2, 6, 6);
        const auto m = oracle::random_binary_mask(rng, 6, 6, 0.5);
        const auto spec = oracle::random_spec(rng, 2, 2, 3, 3, 1, 1, true);
        const auto base = partial_conv2d({x, m}, spec);
        for (int c = 0; c < 2; ++c)
            for (int y = 0; y < 6; ++y)
                for (int xx = 0; xx < 6; ++xx) {
                    if (m.at(y, xx) != 0.0f) continue;
                    auto perturbed = x;
                    perturbed.at(c, y, xx) += 100.0f;
                    CHECK(partial_conv2d({perturbed, m}, spec).features == base.features);
                }
    }

    TEST_CASE("shape and weight errors") {
        std::mt19937_64 rng(1);
        const auto x = oracle::random_features(rng, 2, 4, 4);
        auto spec = oracle::random_spec(rng, 3, 2, 3, 3, 1, 1, true);
        CHECK_THROWS_AS(partial_conv2d({x, MaskMap::ones(4, 4)}, spec), InvalidArgument);
        spec = oracle::random_spec(rng, 2, 2, 3, 3, 1, 1, true);
        CHECK_THROWS_AS(partial_conv2d({x, MaskMap::ones(4, 5)}, spec), InvalidArgument);
        spec.weights[0] = std::numeric_limits<float>::quiet_NaN();
        CHECK_THROWS_AS(partial_conv2d({x, MaskMap::ones(4, 4)}, spec), InvalidArgument);
        spec = oracle::random_spec(rng, 2, 2, 3, 3, 1, 1, true);
        spec.weights.pop_back();
        CHECK_THROWS_AS(partial_conv2d({x, MaskMap::ones(4, 4)}, spec), InvalidArgument);
    }

    TEST_CASE("expanded variant stores the unexpanded update") {
        std::mt19937_64 rng(23);
        const auto x = oracle::random_features(rng, 2, 10, 10);
        MaskMap m(10, 10);
        for (int y = 0; y < 10; ++y)
            for (int xx = 0; xx < 5; ++xx) m.at(y, xx) = 1.0f;
        const auto spec = oracle::random_spec(rng, 2, 3, 3, 3, 1, 1, true);
        const auto plain = partial_conv2d({x, m}, spec);
        const auto wide = partial_conv2d_expanded({x, m}, spec);
        CHECK(wide.mask == plain.mask);
        const auto ref = oracle::partial_conv(x, expand_mask(m), spec);
        CHECK(max_abs_diff(wide.features, ref.features) < 1e-4);
        // Columns far from the boundary are unaffected by the expansion.
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < 10; ++y)
                for (int xx = 0; xx < 3; ++xx) CHECK(wide.features.at(c, y, xx) == doctest::Approx(plain.features.at(c, y, xx)));
    }
}

TEST_SUITE("update_mask_only") {
    TEST_CASE("all-ones without padding stays all-ones at the strided size") {
        const auto out = update_mask_only(MaskMap::ones(9, 7), 3, 3, 2, 0);
        CHECK(out == MaskMap::ones(4, 3));
    }

    TEST_CASE("single pixel becomes a 3x3 block") {
        MaskMap m(7, 7);
        m.at(3, 4) = 1.0f;
        const auto out = update_mask_only(m, 3, 3, 1, 1);
        for (int y = 0; y < 7; ++y)
            for (int x = 0; x < 7; ++x) CHECK(out.at(y, x) == ((std::abs(y - 3) <= 1 && std::abs(x - 4) <= 1) ? 1.0f : 0.0f));
    }

    TEST_CASE("matches window-scan dilation and the conv mask") {
        std::mt19937_64 rng(29);
        for (int trial = 0; trial < 20; ++trial) {
            const auto m = oracle::random_binary_mask(rng, 11, 13, 0.15);
            const int k = 1 + static_cast<int>(rng() % 4), s = 1 + static_cast<int>(rng() % 3), p = static_cast<int>(rng() % 2);
            CHECK(update_mask_only(m, k, k, s, p) == oracle::window_scan_dilation(m, k, k, s, p));
            const auto spec = oracle::random_spec(rng, 1, 1, k, k, s, p, true);
            CHECK(update_mask_only(m, spec) == partial_conv2d({FeatureMap(1, 11, 13, 0.3f), m}, spec).mask);
        }
    }

    TEST_CASE("two stride-1 updates equal two 3x3 dilations") {
        std::mt19937_64 rng(31);
        for (int trial = 0; trial < 10; ++trial) {
            const auto m = oracle::random_binary_mask(rng, 12, 12, 0.05);
            const auto twice = update_mask_only(update_mask_only(m, 3, 3, 1, 1), 3, 3, 1, 1);
            CHECK(twice == oracle::dilate3x3(oracle::dilate3x3(m)));
        }
    }
}

TEST_SUITE("mask geometry") {
    TEST_CASE("mask_pool") {
        CHECK(mask_pool(MaskMap::ones(8, 6), 2, 2) == MaskMap::ones(4, 3));
        MaskMap one(8, 8);
        one.at(5, 2) = 1.0f;
        const auto pooled = mask_pool(one, 2, 2);
        CHECK(pooled.count_above(0.0f) == 1);
        CHECK(pooled.at(2, 1) == 1.0f);
        std::mt19937_64 rng(37);
        for (int trial = 0; trial < 10; ++trial) {
            const auto m = oracle::random_soft_mask(rng, 9, 10);
            const int k = 1 + static_cast<int>(rng() % 3), s = 1 + static_cast<int>(rng() % 2);
            CHECK(mask_pool(m, k, s) == oracle::window_max(m, k, s));
        }
    }

    TEST_CASE("mask_pad") {
        std::mt19937_64 rng(41);
        const auto m = oracle::random_soft_mask(rng, 5, 4);
        CHECK(mask_pad(m, 0) == m);
        const auto padded = mask_pad(MaskMap::ones(2, 2), 1);
        CHECK(padded.height == 4);
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) CHECK(padded.at(y, x) == ((y == 1 || y == 2) && (x == 1 || x == 2) ? 1.0f : 0.0f));
        const auto p2 = mask_pad(m, 2);
        for (int y = 0; y < 5; ++y)
            for (int x = 0; x < 4; ++x) CHECK(p2.at(y + 2, x + 2) == m.at(y, x));
        const auto refl = mask_pad(m, 1, PadMode::reflect);
        CHECK(refl.at(0, 1) == m.at(1, 0));
        CHECK(refl.at(6, 5) == m.at(3, 2));
        CHECK(mask_pad(MaskMap::ones(3, 3), 1, PadMode::reflect) == MaskMap::ones(5, 5));
    }

    TEST_CASE("mask_resize_bilinear") {
        std::mt19937_64 rng(43);
        const auto m = oracle::random_soft_mask(rng, 6, 7);
        const auto same = mask_resize_bilinear(m, 6, 7);
        for (std::size_t i = 0; i < m.size(); ++i) CHECK(same.values[i] == doctest::Approx(m.values[i]).epsilon(1e-6));
        const auto constant = mask_resize_bilinear(MaskMap(4, 5, 0.375f), 11, 3);
        for (float v : constant.values) CHECK(v == doctest::Approx(0.375f));

        MaskMap diag(2, 2);
        diag.at(0, 0) = diag.at(1, 1) = 1.0f;
        const auto up = mask_resize_bilinear(diag, 3, 3);
        // Half-pixel centres: source coords -1/6 (clamped to 0), 0.5, 7/6 (clamped to 1).
        const float want[9] = {1.0f, 0.5f, 0.0f, 0.5f, 0.5f, 0.5f, 0.0f, 0.5f, 1.0f};
        for (int i = 0; i < 9; ++i) CHECK(up.values[i] == doctest::Approx(want[i]));
        CHECK_THROWS_AS(mask_resize_bilinear(diag, 0, 3), InvalidArgument);
    }

    TEST_CASE("expand_mask") {
        MaskMap one(5, 5);
        one.at(2, 2) = 0.7f;
        const auto e = expand_mask(one);
        for (int y = 0; y < 5; ++y)
            for (int x = 0; x < 5; ++x) CHECK(e.at(y, x) == ((std::abs(y - 2) <= 1 && std::abs(x - 2) <= 1) ? 0.7f : 0.0f));
        CHECK(expand_mask(MaskMap::ones(4, 6)) == MaskMap::ones(4, 6));
        std::mt19937_64 rng(47);
        for (int trial = 0; trial < 20; ++trial) {
            const auto m = oracle::random_binary_mask(rng, 10, 9, 0.2);
            CHECK(expand_mask(m) == oracle::dilate3x3(m));
        }
    }

    TEST_CASE("expand_mask is monotone") {
        std::mt19937_64 rng(53);
        for (int trial = 0; trial < 20; ++trial) {
            const auto a = oracle::random_soft_mask(rng, 8, 8);
            auto b = a;
            std::uniform_real_distribution<float> bump(0.0f, 1.0f);
            for (auto& v : b.values) v = std::min(1.0f, v + bump(rng) * 0.3f);
            const auto ea = expand_mask(a), eb = expand_mask(b);
            for (std::size_t i = 0; i < ea.size(); ++i) CHECK(ea.values[i] <= eb.values[i]);
        }
    }

    TEST_CASE("feather_mask") {
        std::mt19937_64 rng(59);
        const auto blob = oracle::random_binary_mask(rng, 12, 12, 0.5);
        CHECK(feather_mask(blob, 1) == blob);
        CHECK(feather_mask(MaskMap::ones(9, 9), 5) == MaskMap::ones(9, 9));
        CHECK_THROWS_AS(feather_mask(blob, 4), InvalidArgument);
        CHECK_THROWS_AS(feather_mask(MaskMap(4, 4, 0.5f), 5), InvalidArgument);
        CHECK_THROWS_AS(feather_mask(feather_mask(blob, 5), 5), InvalidArgument);

        MaskMap half(6, 16);
        for (int y = 0; y < 6; ++y)
            for (int x = 0; x < 8; ++x) half.at(y, x) = 1.0f;
        const auto f = feather_mask(half, 5);
        const auto ref = oracle::box_average(half, 5);
        for (std::size_t i = 0; i < f.size(); ++i) CHECK(f.values[i] == doctest::Approx(ref[i]));
        // Box-oracle ramp across the boundary between columns 7 and 8.
        const float ramp[6] = {1.0f, 0.8f, 0.6f, 0.4f, 0.2f, 0.0f};
        for (int y = 0; y < 6; ++y)
            for (int i = 0; i < 6; ++i) CHECK(f.at(y, 5 + i) == doctest::Approx(ramp[i]));
    }

    TEST_CASE("feather_mask only changes a band around the boundary") {
        std::mt19937_64 rng(61);
        for (int trial = 0; trial < 10; ++trial) {
            MaskMap m(20, 20);
            const int y0 = 3 + static_cast<int>(rng() % 5), x0 = 2 + static_cast<int>(rng() % 6);
            for (int y = y0; y < y0 + 9; ++y)
                for (int x = x0; x < x0 + 10; ++x) m.at(y, x) = 1.0f;
            const int k = 5;
            const auto f = feather_mask(m, k);
            for (int y = 0; y < 20; ++y)
                for (int x = 0; x < 20; ++x) {
                    bool near = false;
                    for (int dy = -k; dy <= k && !near; ++dy)
                        for (int dx = -k; dx <= k && !near; ++dx) {
                            const int yy = std::clamp(y + dy, 0, 19), xx = std::clamp(x + dx, 0, 19);
                            near = m.at(yy, xx) != m.at(y, x);
                        }
                    if (!near) CHECK(f.at(y, x) == m.at(y, x));
                    CHECK(f.at(y, x) >= 0.0f);
                    CHECK(f.at(y, x) <= 1.0f);
                }
        }
    }
}

TEST_SUITE("alpha_composite") {
    TEST_CASE("extremes and linear blend") {
        std::mt19937_64 rng(67);
        ImageBuffer a(5, 6, 3), b(5, 6, 3);
        std::uniform_real_distribution<float> u(0.0f, 1.0f);
        for (auto& v : a.values) v = u(rng);
        for (auto& v : b.values) v = u(rng);
        CHECK(alpha_composite(a, b, MaskMap::zeros(5, 6)) == b);
        CHECK(alpha_composite(a, b, MaskMap::ones(5, 6)) == a);

        const auto blend = alpha_composite(ImageBuffer(2, 2, 3, 0.8f), ImageBuffer(2, 2, 3, 0.2f), MaskMap(2, 2, 0.5f));
        for (float v : blend.values) CHECK(v == doctest::Approx(0.5f));

        for (int trial = 0; trial < 10; ++trial) {
            const auto m = oracle::random_binary_mask(rng, 5, 6);
            const auto out = alpha_composite(a, b, m);
            for (int c = 0; c < 3; ++c)
                for (int y = 0; y < 5; ++y)
                    for (int x = 0; x < 6; ++x)
                        CHECK(out.at(c, y, x) == (m.at(y, x) == 0.0f ? b.at(c, y, x) : a.at(c, y, x)));
        }
    }

    TEST_CASE("dimension mismatch") {
        CHECK_THROWS_AS(alpha_composite(ImageBuffer(2, 2, 3), ImageBuffer(2, 3, 3), MaskMap::ones(2, 2)), InvalidArgument);
        CHECK_THROWS_AS(alpha_composite(ImageBuffer(2, 2, 3), ImageBuffer(2, 2, 1), MaskMap::ones(2, 2)), InvalidArgument);
        CHECK_THROWS_AS(alpha_composite(ImageBuffer(2, 2, 3), ImageBuffer(2, 2, 3), MaskMap::ones(3, 2)), InvalidArgument);
    }
}
