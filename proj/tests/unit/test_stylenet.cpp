#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <json.hpp>

#include "pcstyle/checkpoint.hpp"
#include "pcstyle/errors.hpp"
#include "pcstyle/masked_ops.hpp"
#include "pcstyle/network.hpp"
#include "pcstyle/stylize.hpp"
#include "oracles.hpp"
#include "reference_net.hpp"
#include "synthetic.hpp"

using namespace pcstyle;
namespace fs = std::filesystem;

namespace {

const StyleNetwork& net() {
    static const StyleNetwork n = make_random_network(7);
    return n;
}

fs::path temp_path(const std::string& name) { return fs::temp_directory_path() / ("pcstyle_test_" + name); }

/// max |a - b| relative to max(1, max |b|)
double rel_err(const std::vector<float>& a, const std::vector<double>& b) {
    REQUIRE(a.size() == b.size());
    double num = 0.0, den = 1.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num = std::max(num, std::abs(a[i] - b[i]));
        den = std::max(den, std::abs(b[i]));
    }
    return num / den;
}

double max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
    REQUIRE(a.size() == b.size());
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, static_cast<double>(std::abs(a[i] - b[i])));
    return d;
}

std::vector<double> clamped(const oracle::Tensor& t) {
    std::vector<double> out(t.v.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(t.v[i], 0.0, 1.0);
    return out;
}

const ImageBuffer& content_img() {
    static const ImageBuffer img = synth::image(32, 40, 1);
    return img;
}
const ImageBuffer& style_img() {
    static const ImageBuffer img = synth::image(28, 36, 2);
    return img;
}

} // namespace

TEST_SUITE("checkpoint") {
    TEST_CASE("schema matches the in-repo manifest") {
        std::ifstream in(fs::path(PCSTYLE_SOURCE_DIR) / "data" / "r31_manifest.json");
        REQUIRE(in);
        const auto manifest = nlohmann::json::parse(in);
        const auto schema = r31_schema();
        REQUIRE(schema.size() == manifest.at("arrays").size());
        for (std::size_t i = 0; i < schema.size(); ++i) {
            CHECK(schema[i].name == manifest["arrays"][i]["name"].get<std::string>());
            CHECK(schema[i].shape == manifest["arrays"][i]["shape"].get<std::vector<std::int64_t>>());
        }
        CHECK(net().parameter_layer_count() == manifest.at("layer_count").get<std::size_t>());
    }

    TEST_CASE("save then load round-trips; loading twice gives equal networks") {
        const auto path = temp_path("roundtrip.ckpt");
        save_weights(net(), path);
        const StyleNetwork a = load_weights(path);
        const StyleNetwork b = load_weights(path);
        CHECK(a == net());
        CHECK(a == b);
        fs::remove(path);
    }

    TEST_CASE("format errors") {
        const auto path = temp_path("bad.ckpt");
        save_weights(net(), path);
        const auto full = fs::file_size(path);

        SUBCASE("truncated payload") {
            fs::resize_file(path, full - 100);
            CHECK_THROWS_AS(load_weights(path), CheckpointFormatError);
        }
        SUBCASE("truncated header") {
            fs::resize_file(path, 40);
            CHECK_THROWS_AS(load_weights(path), CheckpointFormatError);
        }
        SUBCASE("bad magic") {
            std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
            f.write("XXXX", 4);
            f.close();
            CHECK_THROWS_AS(load_weights(path), CheckpointFormatError);
        }
        SUBCASE("mis-shaped layer is named") {
            CheckpointContainer c = to_checkpoint(net());
            for (auto& a : c.arrays)
                if (a.name == "decoder.conv9.weight") {
                    a.shape = {64, 128, 1, 9};
                }
            write_checkpoint(path, c);
            try {
                load_weights(path);
                FAIL("expected CheckpointFormatError");
            } catch (const CheckpointFormatError& e) {
                CHECK(std::string(e.what()).find("decoder.conv9.weight") != std::string::npos);
            }
        }
        SUBCASE("missing layer is named") {
            CheckpointContainer c = to_checkpoint(net());
            c.arrays.erase(c.arrays.begin() + 5);
            const std::string missing = to_checkpoint(net()).arrays[5].name;
            write_checkpoint(path, c);
            try {
                load_weights(path);
                FAIL("expected CheckpointFormatError");
            } catch (const CheckpointFormatError& e) {
                CHECK(std::string(e.what()).find(missing) != std::string::npos);
            }
        }
        fs::remove(path);
    }

    TEST_CASE("missing file is an io error") {
        CHECK_THROWS_AS(load_weights(temp_path("does_not_exist.ckpt")), IoError);
    }

    TEST_CASE("random network is deterministic per seed") {
        CHECK(make_random_network(3) == make_random_network(3));
        CHECK_FALSE(make_random_network(3) == make_random_network(4));
    }
}

TEST_SUITE("encode") {
    TEST_CASE("all-ones mask reproduces the dense encoder") {
        const auto ref = oracle::encoder(net(), content_img());
        const auto stages = encode(net(), content_img(), MaskMap::ones(32, 40), BlendConfig{});
        REQUIRE(stages.size() == 3);
        CHECK(net().stage_names() == std::vector<std::string>{"r11", "r21", "r31"});
        CHECK(rel_err(stages[0].features.values, ref.r11.v) <= 1e-4);
        CHECK(rel_err(stages[1].features.values, ref.r21.v) <= 1e-4);
        CHECK(rel_err(stages[2].features.values, ref.r31.v) <= 1e-4);
        for (const auto& s : stages) CHECK(s.mask == MaskMap::ones(s.mask.height, s.mask.width));
    }

    TEST_CASE("all-zeros mask gives zero features") {
        const auto stages = encode(net(), content_img(), MaskMap::zeros(32, 40), BlendConfig{});
        for (const auto& s : stages) {
            CHECK(std::all_of(s.features.values.begin(), s.features.values.end(), [](float v) { return v == 0.0f; }));
            CHECK(s.mask.count_above(0.0f) == 0);
        }
    }

    TEST_CASE("stage masks match stage dims and shrink by the pooling factor") {
        const auto stages = encode(net(), synth::image(30, 22, 5), synth::disk(30, 22, 15, 11, 6), BlendConfig{});
        CHECK(stages[0].features.height == 30);
        CHECK(stages[1].features.height == 15);
        CHECK(stages[2].features.height == 7);
        CHECK(stages[2].features.width == 5);
        for (const auto& s : stages) CHECK(s.features.same_dims(s.mask));
    }

    TEST_CASE("expand_during keeps stored masks and changes features only near the boundary") {
        const MaskMap mask = synth::half_plane(32, 40, 17);
        BlendConfig on;
        on.expand_during = true;
        const auto off_stages = encode(net(), content_img(), mask, BlendConfig{});
        const auto on_stages = encode(net(), content_img(), mask, on);
        const int convs_so_far[3] = {2, 4, 6};
        bool any_diff = false;
        for (int s = 0; s < 3; ++s) {
            const auto& a = off_stages[s];
            const auto& b = on_stages[s];
            CHECK(a.mask == b.mask);
            std::vector<int> boundary;
            for (int x = 1; x < a.mask.width; ++x)
                if (a.mask.at(0, x) != a.mask.at(0, x - 1)) boundary.push_back(x);
            REQUIRE(!boundary.empty());
            for (int c = 0; c < a.features.channels; ++c)
                for (int y = 0; y < a.features.height; ++y)
                    for (int x = 0; x < a.features.width; ++x) {
                        if (a.features.at(c, y, x) == b.features.at(c, y, x)) continue;
                        any_diff = true;
                        int dist = 1 << 20;
                        for (int xb : boundary) dist = std::min({dist, std::abs(x - xb), std::abs(x - (xb - 1))});
                        CHECK(dist <= convs_so_far[s]);
                    }
        }
        CHECK(any_diff);
    }

    TEST_CASE("mask dims must equal image dims") {
        CHECK_THROWS_AS(encode(net(), content_img(), MaskMap::ones(32, 39), BlendConfig{}), InvalidArgument);
        CHECK_THROWS_AS(encode_within(net(), content_img(), MaskMap::ones(32, 39)), InvalidArgument);
    }
}

TEST_SUITE("encode_within") {
    TEST_CASE("all-ones region equals encode") {
        const auto a = encode_within(net(), content_img(), MaskMap::ones(32, 40));
        const auto b = encode(net(), content_img(), MaskMap::ones(32, 40), BlendConfig{});
        REQUIRE(a.size() == b.size());
        for (std::size_t s = 0; s < a.size(); ++s) CHECK(a[s].features == b[s].features);
    }

    TEST_CASE("stage masks are the pooled region and features vanish outside them") {
        std::mt19937_64 rng(8);
        for (int t = 0; t < 5; ++t) {
            const MaskMap region = oracle::random_binary_mask(rng, 32, 40, 0.4);
            const auto stages = encode_within(net(), content_img(), region);
            const MaskMap expect[3] = {region, oracle::window_max(region, 2, 2),
                                       oracle::window_max(oracle::window_max(region, 2, 2), 2, 2)};
            for (int s = 0; s < 3; ++s) {
                CHECK(stages[s].mask == expect[s]);
                const auto& f = stages[s].features;
                for (int c = 0; c < f.channels; ++c)
                    for (std::size_t i = 0; i < f.plane_size(); ++i)
                        if (expect[s].values[i] == 0.0f) CHECK(f.plane(c)[i] == 0.0f);
            }
        }
    }

    TEST_CASE("pixels outside the region do not matter; the encoder's grown ring is excluded") {
        const MaskMap region = synth::disk(32, 40, 16, 20, 7);
        ImageBuffer other = synth::image(32, 40, 77);
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < 32; ++y)
                for (int x = 0; x < 40; ++x)
                    if (region.at(y, x) > 0.5f) other.at(c, y, x) = content_img().at(c, y, x);
        const auto a = encode_within(net(), content_img(), region);
        const auto b = encode_within(net(), other, region);
        const auto grown = encode(net(), content_img(), region, BlendConfig{});
        for (std::size_t s = 0; s < a.size(); ++s) {
            CHECK(a[s].features == b[s].features);
            CHECK(grown[s].mask.count_above(0.5f) > a[s].mask.count_above(0.5f));
        }
    }

    TEST_CASE("deep inside the region it matches the dense encoder") {
        // Six 3x3 convolutions and two poolings: receptive field radius below 16 pixels.
        const ImageBuffer img = synth::image(64, 64, 3);
        MaskMap region(64, 64);
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 40; ++x) region.at(y, x) = 1.0f;
        const auto within = encode_within(net(), img, region);
        const auto dense = encode(net(), img, MaskMap::ones(64, 64), BlendConfig{});
        const auto& a = within[2].features;
        const auto& b = dense[2].features;
        double worst = 0.0;
        for (int c = 0; c < a.channels; ++c)
            for (int y = 4; y < a.height - 4; ++y)
                for (int x = 0; x < 40 / 4 - 4; ++x)
                    worst = std::max(worst, static_cast<double>(std::abs(a.at(c, y, x) - b.at(c, y, x))));
        CHECK(worst <= 1e-4);
    }
}

TEST_SUITE("transform") {
    TEST_CASE("all-ones content mask equals the unmasked transform") {
        const auto cf = oracle::encoder(net(), content_img()).r31;
        const auto sf = oracle::encoder(net(), style_img()).r31;
        const auto ref = oracle::transform(net(), cf, sf);
        const auto cstages = encode(net(), content_img(), MaskMap::ones(32, 40), BlendConfig{});
        const auto t = compute_style_transform(net(), cstages.back(), encode_style(net(), style_img()));
        CHECK(t.all_finite());
        CHECK(t.channels == 256);
        const auto out = apply_transform(cstages.back(), t);
        CHECK(rel_err(out.features.values, ref.v) <= 1e-4);
    }

    TEST_CASE("statistics ignore everything outside the binarized mask") {
        std::mt19937_64 rng(11);
        const MaskedFeature style = encode_style(net(), style_img());
        MaskedFeature a{oracle::random_features(rng, 256, 8, 10, 0.0f, 2.0f), MaskMap(8, 10)};
        for (int y = 2; y < 6; ++y)
            for (int x = 3; x < 9; ++x) a.mask.at(y, x) = 1.0f;
        a.mask.at(0, 0) = 0.4f;  // below threshold: excluded
        MaskedFeature b = a;
        for (int c = 0; c < 256; ++c)
            for (int y = 0; y < 8; ++y)
                for (int x = 0; x < 10; ++x)
                    if (a.mask.at(y, x) < 0.5f) {
                        a.features.at(c, y, x) = 0.0f;
                        b.features.at(c, y, x) = 5.0f + c;
                    }
        const auto ta = compute_style_transform(net(), a, style);
        const auto tb = compute_style_transform(net(), b, style);
        CHECK(ta.matrix == tb.matrix);
        CHECK(ta.content_mean == tb.content_mean);
        CHECK(ta.offset == tb.offset);
    }

    TEST_CASE("gather oracle: pointwise statistics branches over the valid positions") {
        // With 1x1 branch convolutions the transform depends on the set of
        // valid feature vectors only, so it can be computed from a gathered list.
        std::mt19937_64 rng(12);
        StyleNetwork n = net();
        for (auto* b : {&n.transform.content, &n.transform.style})
            for (auto& l : b->convs) {
                l.conv = oracle::random_spec(rng, l.conv.in_channels, l.conv.out_channels, 1, 1, 1, 0, true);
                l.pad = 0;
            }
        const int C = 256, m = 32;
        MaskedFeature content{oracle::random_features(rng, C, 9, 7, -1.0f, 1.0f), oracle::random_binary_mask(rng, 9, 7, 0.4)};
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < 63; ++i)
                if (content.mask.values[i] == 0.0f) content.features.values[c * 63 + i] = 0.0f;
        MaskedFeature style{oracle::random_features(rng, C, 6, 5, -1.0f, 1.0f), MaskMap::ones(6, 5)};

        auto gather = [&](const MaskedFeature& f) {
            std::vector<std::vector<double>> cols;
            for (int i = 0; i < f.mask.height * f.mask.width; ++i) {
                if (f.mask.values[i] < 0.5f) continue;
                std::vector<double> v(C);
                for (int c = 0; c < C; ++c) v[c] = f.features.values[static_cast<std::size_t>(c) * f.mask.size() + i];
                cols.push_back(v);
            }
            return cols;
        };
        auto mean_of = [&](const std::vector<std::vector<double>>& cols) {
            std::vector<double> mu(C, 0.0);
            for (const auto& v : cols)
                for (int c = 0; c < C; ++c) mu[c] += v[c] / cols.size();
            return mu;
        };
        auto matrix_of = [&](const StatisticsBranch& b, std::vector<std::vector<double>> cols,
                             const std::vector<double>& mu) {
            for (auto& v : cols)
                for (int c = 0; c < C; ++c) v[c] -= mu[c];
            for (std::size_t li = 0; li < b.convs.size(); ++li) {
                const auto& s = b.convs[li].conv;
                for (auto& v : cols) {
                    std::vector<double> o(s.out_channels);
                    for (int r = 0; r < s.out_channels; ++r) {
                        double acc = s.bias[r];
                        for (int i = 0; i < s.in_channels; ++i) acc += s.weight(r, i, 0, 0) * v[i];
                        o[r] = li + 1 < b.convs.size() ? std::max(acc, 0.0) : acc;
                    }
                    v = o;
                }
            }
            std::vector<double> g(m * m, 0.0);
            for (const auto& v : cols)
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < m; ++j) g[i * m + j] += v[i] * v[j] / cols.size();
            std::vector<double> out(m * m);
            for (int r = 0; r < m * m; ++r) {
                double acc = b.fc_bias[r];
                for (int k = 0; k < m * m; ++k) acc += b.fc_weight[static_cast<std::size_t>(r) * m * m + k] * g[k];
                out[r] = acc;
            }
            return out;
        };

        const auto ccols = gather(content), scols = gather(style);
        const auto cmu = mean_of(ccols), smu = mean_of(scols);
        const auto cmat = matrix_of(n.transform.content, ccols, cmu);
        const auto smat = matrix_of(n.transform.style, scols, smu);
        const auto& K = n.transform.compress;
        const auto& U = n.transform.unzip;

        const auto t = compute_style_transform(n, content, style);
        const auto out = apply_transform(content, t);
        double worst = 0.0;
        int idx = 0;
        for (int i = 0; i < 63; ++i) {
            if (content.mask.values[i] == 0.0f) continue;
            const auto& x = ccols[idx++];
            std::vector<double> k(m), tk(m, 0.0);
            for (int r = 0; r < m; ++r) {
                k[r] = K.bias[r];
                for (int c = 0; c < C; ++c) k[r] += K.weight(r, c, 0, 0) * (x[c] - cmu[c]);
            }
            for (int a = 0; a < m; ++a)
                for (int b = 0; b < m; ++b) {
                    double tab = 0.0;
                    for (int q = 0; q < m; ++q) tab += smat[a * m + q] * cmat[q * m + b];
                    tk[a] += tab * k[b];
                }
            for (int c = 0; c < C; ++c) {
                double y = U.bias[c] + smu[c];
                for (int a = 0; a < m; ++a) y += U.weight(c, a, 0, 0) * tk[a];
                worst = std::max(worst, std::abs(y - out.features.values[static_cast<std::size_t>(c) * 63 + i]) / (1.0 + std::abs(y)));
            }
        }
        CHECK(worst <= 1e-4);
        for (int c = 0; c < C; ++c) CHECK(t.content_mean[c] == doctest::Approx(cmu[c]).epsilon(1e-5));
    }

    TEST_CASE("region mean of the transformed features is the style mean plus the bias offset") {
        const MaskMap mask = synth::disk(32, 40, 16, 20, 12);
        const auto stages = encode(net(), content_img(), mask, BlendConfig{});
        // style = the content itself, so statistics sit at their fixed point
        const auto style = encode(net(), content_img(), MaskMap::ones(32, 40), BlendConfig{}).back();
        const auto t = compute_style_transform(net(), stages.back(), style);
        const auto out = apply_transform(stages.back(), t);
        const MaskMap region = binarize(stages.back().mask, 0.5f);
        const std::size_t n = region.size();
        for (int c = 0; c < 256; ++c) {
            double s = 0.0, cnt = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                if (region.values[i] > 0.0f) {
                    s += out.features.values[c * n + i];
                    cnt += 1.0;
                }
            CHECK(std::abs(s / cnt - (t.style_mean[c] + t.offset[c])) <= 1e-3);
        }
    }

    TEST_CASE("empty binarized mask is an empty-region error") {
        MaskedFeature f{FeatureMap(256, 4, 4), MaskMap(4, 4, 0.3f)};
        CHECK_THROWS_AS(compute_style_transform(net(), f, encode_style(net(), style_img())), EmptyRegionError);
        CHECK_THROWS_AS(style_statistics(net(), f), EmptyRegionError);
    }
}

TEST_SUITE("apply_transform") {
    TEST_CASE("identity leaves masked features unchanged") {
        std::mt19937_64 rng(3);
        MaskedFeature f{oracle::random_features(rng, 5, 4, 6), oracle::random_binary_mask(rng, 4, 6)};
        apply_mask_inplace(f.features, f.mask);
        const auto out = apply_transform(f, StyleTransform::identity(5));
        CHECK(out.features == f.features);
        CHECK(out.mask == f.mask);
    }

    TEST_CASE("all-zeros mask gives zeros") {
        std::mt19937_64 rng(4);
        MaskedFeature f{oracle::random_features(rng, 3, 4, 4), MaskMap::zeros(4, 4)};
        StyleTransform t = StyleTransform::identity(3);
        t.style_mean = {1.0f, 2.0f, 3.0f};
        const auto out = apply_transform(f, t);
        CHECK(std::all_of(out.features.values.begin(), out.features.values.end(), [](float v) { return v == 0.0f; }));
    }

    TEST_CASE("two positions, hand-computed") {
        MaskedFeature f{FeatureMap(2, 1, 2), MaskMap::ones(1, 2)};
        f.features.at(0, 0, 0) = 2.0f;
        f.features.at(1, 0, 0) = 3.0f;
        f.features.at(0, 0, 1) = 0.0f;
        f.features.at(1, 0, 1) = 1.0f;
        StyleTransform t;
        t.channels = 2;
        t.matrix = {1, 2, 3, 4};
        t.content_mean = {1, 1};
        t.style_mean = {0.5f, -0.5f};
        t.offset = {0, 0};
        const auto out = apply_transform(f, t);
        CHECK(out.features.at(0, 0, 0) == doctest::Approx(5.5));
        CHECK(out.features.at(1, 0, 0) == doctest::Approx(10.5));
        CHECK(out.features.at(0, 0, 1) == doctest::Approx(-0.5));
        CHECK(out.features.at(1, 0, 1) == doctest::Approx(-3.5));
    }

    TEST_CASE("channel mismatch") {
        MaskedFeature f{FeatureMap(3, 2, 2), MaskMap::ones(2, 2)};
        CHECK_THROWS_AS(apply_transform(f, StyleTransform::identity(4)), InvalidArgument);
    }
}

TEST_SUITE("decode") {
    TEST_CASE("all-ones mask equals the unmasked stylization") {
        const auto ref = oracle::stylize(net(), content_img(), style_img());
        const ImageBuffer out = stylize_unmasked(net(), content_img(), style_img());
        CHECK(rel_err(out.values, clamped(ref)) <= 1e-3);
        // the random network must not saturate, or the comparison is vacuous
        const auto n_mid = std::count_if(out.values.begin(), out.values.end(), [](float v) { return v > 0.02f && v < 0.98f; });
        CHECK(n_mid > static_cast<long>(out.values.size() / 2));
    }

    TEST_CASE("identity transform reconstructs like the plain autoencoder") {
        const MaskMap ones = MaskMap::ones(32, 40);
        const auto stages = encode(net(), content_img(), ones, BlendConfig{});
        const ImageBuffer ae = decode(net(), stages.back(), ones, nullptr, BlendConfig{});
        const ImageBuffer id = decode(net(), apply_transform(stages.back(), StyleTransform::identity(256)), ones,
                                      nullptr, BlendConfig{});
        double e_ae = 0.0, e_id = 0.0;
        for (std::size_t i = 0; i < ae.values.size(); ++i) {
            e_ae += std::abs(ae.values[i] - content_img().values[i]);
            e_id += std::abs(id.values[i] - content_img().values[i]);
        }
        CHECK(e_id <= 2.0 * e_ae + 1e-9);
    }

    TEST_CASE("content feathering with an all-ones mask changes nothing") {
        const MaskMap ones = MaskMap::ones(32, 40);
        const auto stages = encode(net(), content_img(), ones, BlendConfig{});
        const auto t = compute_style_transform(net(), stages.back(), encode_style(net(), style_img()));
        const auto feat = apply_transform(stages.back(), t);
        const auto cstages = content_decoder_stages(net(), content_img());
        CHECK(cstages.size() == 5);
        BlendConfig cf;
        cf.content_feather_decoder = true;
        const auto a = decode_raw(net(), feat, ones, nullptr, BlendConfig{});
        const auto b = decode_raw(net(), feat, ones, &cstages, cf);
        CHECK(max_abs_diff(a.values, b.values) <= 1e-6);
    }

    TEST_CASE("content feathering needs content stages") {
        const MaskMap ones = MaskMap::ones(32, 40);
        const auto stages = encode(net(), content_img(), ones, BlendConfig{});
        BlendConfig cf;
        cf.content_feather_decoder = true;
        CHECK_THROWS_AS(decode(net(), stages.back(), ones, nullptr, cf), InvalidArgument);
    }

    TEST_CASE("content feathering pulls the background towards the content decoding") {
        const MaskMap mask = synth::disk(32, 40, 16, 20, 9);
        StylizeRequest req{content_img(), style_img(), mask, {}};
        const auto plain = stylize_masked_traced(net(), req);
        req.blend.content_feather_decoder = true;
        const auto feathered = stylize_masked_traced(net(), req);
        const auto cstages = content_decoder_stages(net(), content_img());
        // far from the region the feathered decoder matches the unstylized autoencoder
        const MaskMap ones = MaskMap::ones(32, 40);
        const ImageBuffer ae = decode(net(), encode(net(), content_img(), ones, BlendConfig{}).back(), ones, nullptr, BlendConfig{});
        CHECK(std::abs(feathered.decoded.at(0, 1, 1) - ae.at(0, 1, 1)) < 1e-5);
        CHECK(plain.output.at(0, 1, 1) == content_img().at(0, 1, 1));
    }
}

TEST_SUITE("stylize_masked") {
    TEST_CASE("all-zeros mask returns the content exactly") {
        const StylizeRequest req{content_img(), style_img(), MaskMap::zeros(32, 40), {}};
        CHECK(stylize_masked(net(), req) == content_img());
        CHECK(style_then_mask(net(), content_img(), style_img(), MaskMap::zeros(32, 40)) == content_img());
        CHECK(mask_then_style(net(), content_img(), style_img(), MaskMap::zeros(32, 40)) == content_img());
    }

    TEST_CASE("all-ones mask, no blending: reduction to the base network") {
        const MaskMap ones = MaskMap::ones(32, 40);
        const auto ref = clamped(oracle::stylize(net(), content_img(), style_img()));
        const ImageBuffer a = stylize_masked(net(), {content_img(), style_img(), ones, {}});
        const ImageBuffer b = style_then_mask(net(), content_img(), style_img(), ones);
        const ImageBuffer c = mask_then_style(net(), content_img(), style_img(), ones);
        CHECK(rel_err(a.values, ref) <= 1e-3);
        CHECK(max_abs_diff(a.values, b.values) <= 1e-4);
        CHECK(max_abs_diff(a.values, c.values) <= 1e-4);
    }

    TEST_CASE("binary masks leave the background bit-exact") {
        std::mt19937_64 rng(21);
        for (int i = 0; i < 4; ++i) {
            const MaskMap mask = synth::blobs(rng, 32, 40);
            const ImageBuffer out = stylize_masked(net(), {content_img(), style_img(), mask, {}});
            const ImageBuffer stm = style_then_mask(net(), content_img(), style_img(), mask);
            const ImageBuffer mts = mask_then_style(net(), content_img(), style_img(), mask);
            for (int c = 0; c < 3; ++c)
                for (int y = 0; y < 32; ++y)
                    for (int x = 0; x < 40; ++x)
                        if (mask.at(y, x) == 0.0f) {
                            CHECK(out.at(c, y, x) == content_img().at(c, y, x));
                            CHECK(stm.at(c, y, x) == content_img().at(c, y, x));
                            CHECK(mts.at(c, y, x) == content_img().at(c, y, x));
                        }
        }
    }

    TEST_CASE("identical requests give identical outputs") {
        StylizeRequest req{content_img(), style_img(), synth::disk(32, 40, 14, 18, 10), {}};
        req.blend = {true, 5, true, true};
        CHECK(stylize_masked(net(), req) == stylize_masked(net(), req));
    }

    TEST_CASE("the stylized region differs from the content") {
        const MaskMap mask = synth::disk(32, 40, 16, 20, 10);
        const ImageBuffer out = stylize_masked(net(), {content_img(), style_img(), mask, {}});
        CHECK(max_abs_diff(out.values, content_img().values) > 0.01);
    }

    TEST_CASE("feather_before composites with the feathered mask") {
        StylizeRequest req{content_img(), style_img(), synth::disk(32, 40, 16, 20, 10), {}};
        req.blend.feather_before = true;
        const auto trace = stylize_masked_traced(net(), req);
        CHECK(trace.composite_mask == feather_mask(req.mask, 5));
        CHECK_FALSE(trace.composite_mask.is_binary());
    }

    TEST_CASE("mask_then_style ignores the background") {
        const MaskMap mask = synth::disk(32, 40, 16, 20, 10);
        ImageBuffer other = content_img();
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < 32; ++y)
                for (int x = 0; x < 40; ++x)
                    if (mask.at(y, x) == 0.0f) other.at(c, y, x) = 1.0f - other.at(c, y, x);
        const ImageBuffer a = mask_then_style(net(), content_img(), style_img(), mask);
        const ImageBuffer b = mask_then_style(net(), other, style_img(), mask);
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < 32; ++y)
                for (int x = 0; x < 40; ++x)
                    if (mask.at(y, x) == 1.0f) CHECK(a.at(c, y, x) == b.at(c, y, x));
    }

    TEST_CASE("grayscale content is promoted to RGB") {
        ImageBuffer gray(32, 40, 1, 0.4f);
        const ImageBuffer out = stylize_masked(net(), {gray, style_img(), synth::disk(32, 40, 16, 20, 10), {}});
        CHECK(out.channels == 3);
    }

    TEST_CASE("errors") {
        SUBCASE("oversized content") {
            const StylizeRequest req{ImageBuffer(4, kMaxImageSide + 1, 3, 0.5f), style_img(),
                                     MaskMap::ones(4, kMaxImageSide + 1), {}};
            CHECK_THROWS_AS(stylize_masked(net(), req), ResourceError);
        }
        SUBCASE("too many pixels") {
            const StylizeRequest req{content_img(), ImageBuffer(2049, 2049, 1, 0.5f), MaskMap::ones(32, 40), {}};
            CHECK_THROWS_AS(stylize_masked(net(), req), ResourceError);
        }
        SUBCASE("even feather kernel") {
            StylizeRequest req{content_img(), style_img(), MaskMap::ones(32, 40), {}};
            req.blend.feather_kernel_px = 4;
            CHECK_THROWS_AS(stylize_masked(net(), req), InvalidArgument);
        }
    }
}
