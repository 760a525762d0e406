#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "oracles.hpp"
#include "pcstyle/errors.hpp"
#include "pcstyle/experiments.hpp"
#include "pcstyle/image_io.hpp"
#include "pcstyle/rle.hpp"
#include "synthetic.hpp"
#include "tempdir.hpp"

using namespace pcstyle;
using testing_support::TempDir;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = fs::path(PCSTYLE_SOURCE_DIR) / "tests" / "fixtures";

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

/// Annotation document for one image with the given masks.
std::string annotation(int h, int w, const std::vector<MaskMap>& masks) {
    nlohmann::json doc;
    doc["image"] = {{"height", h}, {"width", w}};
    doc["annotations"] = nlohmann::json::array();
    int id = 1;
    for (const auto& m : masks) {
        const RleMask r = rle_encode(m);
        doc["annotations"].push_back(
            {{"id", id++}, {"area", r.area()}, {"segmentation", {{"size", {h, w}}, {"counts", rle_to_string(r)}}}});
    }
    return doc.dump();
}

RunConfig fixture_config(int max_images) {
    std::ostringstream text;
    text << "dataset_root = " << (kFixtures / "dataset").string() << "\n"
         << "style_dir = " << (kFixtures / "styles").string() << "\n"
         << "weights = random:7\n"
         << "seed = 3\n"
         << "max_images = " << max_images << "\n"
         << "methods = partialconv, style-then-mask\n";
    return parse_run_config(text.str());
}

const StyleNetwork& net() {
    static const StyleNetwork n = make_random_network(7);
    return n;
}

} // namespace

TEST_SUITE("rle") {
    TEST_CASE("hand example: column-major runs starting with zeros") {
        MaskMap m(2, 3);
        m.at(1, 0) = 1.0f;  // column 0: 0,1
        m.at(0, 1) = 1.0f;  // column 1: 1,1
        m.at(1, 1) = 1.0f;
        const RleMask r = rle_encode(m);
        CHECK(r.counts == std::vector<std::uint32_t>{1, 3, 2});
        CHECK(r.area() == 3);
        CHECK(rle_decode(r) == m);
    }

    TEST_CASE("string form round-trips, including negative deltas") {
        // Third run onwards are stored relative to the run two back; 40 -> 2 is a negative delta.
        const RleMask r = rle_from_counts({5, 40, 3, 2, 100, 50}, 20, 10);
        const std::string s = rle_to_string(r);
        CHECK(rle_from_string(s, 20, 10) == r);
        std::mt19937_64 rng(1);
        for (int i = 0; i < 50; ++i) {
            const MaskMap m = oracle::random_binary_mask(rng, 7 + i % 5, 9 + i % 7, 0.5);
            const RleMask e = rle_encode(m);
            CHECK(rle_decode(rle_from_string(rle_to_string(e), m.height, m.width)) == m);
        }
    }

    TEST_CASE("malformed input") {
        CHECK_THROWS_AS(rle_from_string("0", 2, 2), InvalidArgument);           // covers 0 of 4 pixels
        CHECK_THROWS_AS(rle_from_string("4\x7f", 2, 2), InvalidArgument);       // bad character
        CHECK_THROWS_AS(rle_from_string("P", 2, 2), InvalidArgument);           // continuation without end
        CHECK_THROWS_AS(rle_from_counts({1, 2}, 2, 2), InvalidArgument);
    }
}

TEST_SUITE("image io") {
    TEST_CASE("png round trip is exact on 8-bit levels") {
        TempDir dir("io");
        ImageBuffer img(5, 7, 3);
        for (std::size_t i = 0; i < img.values.size(); ++i) img.values[i] = static_cast<float>((i * 37) % 256) / 255.0f;
        write_png(dir / "a.png", img);
        const ImageBuffer back = read_image(dir / "a.png");
        REQUIRE(back.channels == 3);
        for (std::size_t i = 0; i < img.values.size(); ++i) CHECK(back.values[i] == doctest::Approx(img.values[i]).epsilon(1e-7));
    }

    TEST_CASE("gray stays one channel; masks threshold at 127") {
        TempDir dir("io");
        ImageBuffer g(2, 2, 1);
        g.values = {127.0f / 255.0f, 128.0f / 255.0f, 0.0f, 1.0f};
        write_png(dir / "g.png", g);
        CHECK(read_image(dir / "g.png").channels == 1);
        const MaskMap m = read_mask(dir / "g.png");
        CHECK(m.values == std::vector<float>{0.0f, 1.0f, 0.0f, 1.0f});
    }

    TEST_CASE("missing or undecodable files raise IoError") {
        TempDir dir("io");
        CHECK_THROWS_AS(read_image(dir / "none.png"), IoError);
        write_file(dir / "bad.png", "not an image");
        CHECK_THROWS_AS(read_image(dir / "bad.png"), IoError);
        CHECK_THROWS_AS(read_mask(dir / "bad.png"), IoError);
    }

    TEST_CASE("resizing helpers") {
        CHECK(capped_dims(1500, 2250, 512) == std::pair{341, 512});
        CHECK(capped_dims(100, 80, 512) == std::pair{100, 80});
        CHECK(capped_dims(100, 80, 0) == std::pair{100, 80});
        const MaskMap m = synth::disk(40, 40, 20, 20, 10);
        CHECK(resize_mask_nearest(m, 40, 40) == m);
        CHECK(resize_mask_nearest(m, 20, 20).is_binary());
        const ImageBuffer flat(8, 8, 3, 0.25f);
        for (float v : resize_image_area(flat, 3, 5).values) CHECK(v == doctest::Approx(0.25f));
    }
}

TEST_SUITE("dataset") {
    TEST_CASE("fixture set indexes every pair with a stable hash") {
        const DatasetIndex a = index_dataset(kFixtures / "dataset");
        CHECK(a.entries.size() == 24);
        CHECK(a.warnings.empty());
        CHECK(a.entries.front().id == "fx_000");
        for (const auto& e : a.entries)
            for (const auto& m : e.masks) CHECK(m.area == rle_decode(m.rle).count_above(0.5f));
        CHECK(index_dataset(kFixtures / "dataset").integrity_hash == a.integrity_hash);
    }

    TEST_CASE("three valid pairs, one corrupt annotation, one orphan") {
        TempDir dir("ds");
        for (int i = 0; i < 3; ++i) {
            write_png(dir / ("im" + std::to_string(i) + ".png"), synth::image(16, 20, i));
            write_file(dir / ("im" + std::to_string(i) + ".json"), annotation(16, 20, {synth::disk(16, 20, 8, 10, 5)}));
        }
        write_png(dir / "bad.png", synth::image(16, 20, 9));
        write_file(dir / "bad.json", "{\"image\": {\"height\": 16}");
        write_file(dir / "orphan.json", annotation(16, 20, {}));
        const DatasetIndex idx = index_dataset(dir.path());
        CHECK(idx.entries.size() == 3);
        CHECK(idx.warnings.size() == 2);
        // a changed file changes the hash
        const std::string before = idx.integrity_hash;
        write_png(dir / "im1.png", synth::image(16, 20, 42));
        CHECK(index_dataset(dir.path()).integrity_hash != before);
    }

    TEST_CASE("empty directory is fatal") {
        TempDir dir("ds");
        CHECK_THROWS_AS(index_dataset(dir.path()), IoError);
        CHECK_THROWS_AS(index_dataset(dir / "missing"), IoError);
    }

    TEST_CASE("random mask selection honours the area floor and the seed") {
        DatasetEntry e{"x", {}, {}, 20, 20, {}};
        const MaskMap big = synth::disk(20, 20, 10, 10, 6), other = synth::half_plane(20, 20, 12);
        MaskMap tiny(20, 20);
        tiny.at(3, 3) = 1.0f;  // 1/400 < 2%
        for (const MaskMap* m : {static_cast<const MaskMap*>(&tiny), &big, &other}) {
            const RleMask r = rle_encode(*m);
            e.masks.push_back({0, r.area(), r});
        }
        std::set<std::vector<float>> picked;
        for (std::uint64_t s = 0; s < 40; ++s) {
            const auto m = select_random_mask(e, 0.02, s);
            REQUIRE(m);
            CHECK(*m != tiny);
            CHECK(*select_random_mask(e, 0.02, s) == *m);
            picked.insert(m->values);
        }
        CHECK(picked.size() == 2);
        e.masks.resize(1);
        CHECK_FALSE(select_random_mask(e, 0.02, 0));
        e.masks.push_back({0, rle_encode(big).area(), rle_encode(big)});
        for (std::uint64_t s = 0; s < 5; ++s) CHECK(*select_random_mask(e, 0.02, s) == big);
    }
}

TEST_SUITE("run config") {
    TEST_CASE("parses every key and resolves relative paths") {
        const RunConfig c = parse_run_config(R"(# comment
dataset_root = data
style_dir = /abs/styles
weights = random:3
output_dir = out
seed = 11
min_mask_area_fraction = 0.05
bins = 64
n_projections = 128
feather_before = true
expand_during = yes
content_feather_decoder = 1
feather_kernel_px = 7
renormalize = false
methods = partialconv,mask-then-style
max_images = 4
max_side = 256
workers = 2
)",
                                             "/base");
        CHECK(c.dataset_root == fs::path("/base/data"));
        CHECK(c.style_dir == fs::path("/abs/styles"));
        CHECK(c.weights == "random:3");
        CHECK(c.seed == 11);
        CHECK(c.min_mask_area_fraction == 0.05);
        CHECK(c.bins == 64);
        CHECK(c.blend == BlendConfig{true, 7, true, true});
        CHECK_FALSE(c.renormalize);
        CHECK(c.methods == std::vector<Method>{Method::partialconv, Method::mask_then_style});
        CHECK(c.max_side == 256);
        CHECK(c.workers == 2);
    }

    TEST_CASE("fail-fast errors") {
        CHECK_THROWS_AS(parse_run_config("colour = red\n"), ConfigError);
        CHECK_THROWS_AS(parse_run_config("seed = 1\nseed = 2\n"), ConfigError);
        CHECK_THROWS_AS(parse_run_config("seed = -1\n"), ConfigError);
        CHECK_THROWS_AS(parse_run_config("bins = 12abc\n"), ConfigError);
        CHECK_THROWS_AS(parse_run_config("methods =\n"), ConfigError);
        CHECK_THROWS_AS(parse_run_config("methods = partialconv, magic\n"), ConfigError);
        CHECK_THROWS_AS(parse_run_config("min_mask_area_fraction = 1.5\n"), ConfigError);
        CHECK_THROWS_AS(parse_run_config("feather_kernel_px = 4\n"), ConfigError);
        CHECK_THROWS_AS(parse_run_config("just words\n"), ConfigError);
        CHECK_THROWS_AS(load_run_config("/nonexistent/run.cfg"), IoError);
    }

    TEST_CASE("hash covers results-affecting keys only") {
        const RunConfig a = parse_run_config("seed = 1\n");
        CHECK(a.hash() == parse_run_config("seed = 1\nworkers = 3\noutput_dir = /tmp/x\n").hash());
        CHECK(a.hash() != parse_run_config("seed = 2\n").hash());
        CHECK(a.hash().size() == 16);
    }

    TEST_CASE("environment overrides the weights key") {
        ::setenv(kWeightsEnv, "/env/weights.ckpt", 1);
        const RunConfig c = parse_run_config("weights = random:1\n");
        ::unsetenv(kWeightsEnv);
        CHECK(c.weights == "/env/weights.ckpt");
        CHECK(parse_run_config("weights = random:1\n").weights == "random:1");
    }
}

TEST_SUITE("experiments") {
    TEST_CASE("load_network") {
        CHECK(load_network("random:7") == net());
        CHECK_THROWS_AS(load_network(""), ConfigError);
        CHECK_THROWS_AS(load_network("random:x"), ConfigError);
        CHECK_THROWS_AS(load_network("/nonexistent.ckpt"), IoError);
        const StyleNetwork off = load_network("random:7", false);
        CHECK_FALSE(off.encoder[1].conv.renormalize);
        CHECK_FALSE(off.transform.compress.renormalize);
    }

    TEST_CASE("region disparity: constant image is zero") {
        const auto d = region_disparity_emd(ImageBuffer(16, 16, 3, 0.3f), synth::disk(16, 16, 8, 8, 4), 256, 32, 0);
        CHECK(d.gray == 0.0);
        CHECK(d.sliced == 0.0);
    }

    TEST_CASE("region disparity: two-tone image, mask over one tone") {
        // Whole image: fraction p at black, 1-p at white. Region: all black.
        // Gray: mass 1-p moves a distance 1. Sliced: mass 1-p moves |<u, (1,1,1)>| along each direction.
        ImageBuffer img(10, 10, 3, 0.0f);
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < 10; ++y)
                for (int x = 6; x < 10; ++x) img.at(c, y, x) = 1.0f;
        MaskMap mask(10, 10);
        for (int y = 2; y < 8; ++y)
            for (int x = 1; x < 5; ++x) mask.at(y, x) = 1.0f;
        const double p = 0.6;
        const auto d = region_disparity_emd(img, mask, 256, 200, 5);
        CHECK(d.gray == doctest::Approx(1.0 - p).epsilon(1e-12));
        double expect = 0.0;
        for (const auto& u : projection_directions(200, 5)) expect += std::abs(u[0] + u[1] + u[2]);
        expect *= (1.0 - p) / 200.0;
        CHECK(d.sliced == doctest::Approx(expect).epsilon(1e-6));
    }

    TEST_CASE("evaluate on fixtures: rows, means, determinism, worker independence") {
        RunConfig cfg = fixture_config(2);
        const Tab2Result r = run_tab2(cfg, net());
        CHECK(r.evaluated == 2);
        REQUIRE(r.rows.size() == 4);
        REQUIRE(r.means.size() == 2);
        for (const auto& row : r.rows) CHECK(row.report.all_finite());
        const std::string csv = tab2_csv(r, cfg);
        CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 4 + 2);
        cfg.workers = 2;
        CHECK(tab2_csv(run_tab2(cfg, net()), cfg) == csv);
    }

    TEST_CASE("reference pair style loss lands in the calibrated range") {
        const RunConfig cfg = fixture_config(1);
        CHECK(cfg.seed == 3);
        RunConfig ref = cfg;
        ref.seed = 0;
        const ExperimentInputs in = ExperimentInputs::load(ref, true);
        const PreparedItem item = in.prepare(0, ref);
        REQUIRE(item.id == "fx_000");
        const ImageBuffer& style = in.styles[static_cast<std::size_t>(item.style_index)];
        const ImageBuffer out = run_method(net(), Method::partialconv, item.content, style, item.mask, {});
        const double loss = perceptual_style_loss(net(), out, item.mask, style);
        CHECK(loss >= 1e2);
        CHECK(loss <= 1e3);
    }

    TEST_CASE("one-image dataset: means equal the row") {
        RunConfig cfg = fixture_config(1);
        cfg.methods = {Method::partialconv};
        const Tab2Result r = run_tab2(cfg, net());
        REQUIRE(r.rows.size() == 1);
        CHECK(r.means[0].second.gray_emd == r.rows[0].report.gray_emd);
        CHECK(r.means[0].second.style_loss == r.rows[0].report.style_loss);
    }

    TEST_CASE("skips are symmetric and outputs are written") {
        TempDir dir("tab2");
        fs::create_directories(dir / "data");
        for (const char* id : {"fx_000", "fx_001"}) {
            fs::copy_file(kFixtures / "dataset" / (std::string(id) + ".png"), dir / "data" / (std::string(id) + ".png"));
            fs::copy_file(kFixtures / "dataset" / (std::string(id) + ".json"), dir / "data" / (std::string(id) + ".json"));
        }
        MaskMap tiny(128, 160);
        tiny.at(5, 5) = 1.0f;
        write_png(dir / "data" / "fx_tiny.png", synth::image(128, 160, 1));
        write_file(dir / "data" / "fx_tiny.json", annotation(128, 160, {tiny}));
        RunConfig cfg = fixture_config(0);
        cfg.dataset_root = dir / "data";
        cfg.output_dir = dir / "out";
        const Tab2Result r = run_tab2(cfg, net());
        CHECK(r.evaluated == 2);
        REQUIRE(r.skipped.size() == 1);
        CHECK(r.skipped[0].id == "fx_tiny");
        CHECK(r.rows.size() == 4);
        CHECK(fs::exists(dir / "out" / "images" / "fx_000__partialconv.png"));
        CHECK(fs::exists(dir / "out" / "images" / "fx_001__style-then-mask.png"));
        CHECK_FALSE(fs::exists(dir / "out" / "images" / "fx_tiny__partialconv.png"));
    }

    TEST_CASE("disparity and ablation on fixtures") {
        const RunConfig cfg = fixture_config(3);
        const DisparityResult d = run_disparity(cfg);
        CHECK(d.rows.size() == 3);
        for (const auto& row : d.rows) {
            CHECK(row.emd.gray > 0.0);
            CHECK(row.area_fraction >= 0.02);
        }
        const std::string dcsv = disparity_csv(d, cfg);
        CHECK(std::count(dcsv.begin(), dcsv.end(), '\n') == 5);

        RunConfig small = fixture_config(2);
        const AblationRun a = run_dataset_ablation(small, net());
        CHECK(a.grid.evaluated == 2);
        const std::string rows = ablation_rows_csv(a.grid, small);
        CHECK(std::count(rows.begin(), rows.end(), '\n') == 9);
        CHECK(rows.find(",7,partialconv:FED,1,1,1,2,") != std::string::npos);
    }

    TEST_CASE("sidecar carries the timestamp and the hashes") {
        const RunConfig cfg = fixture_config(1);
        const auto j = nlohmann::json::parse(run_sidecar_json("evaluate", cfg, "abc", "random:7", 1, {{"x", "why"}}, {}));
        CHECK(j["schema_version"] == kReportSchemaVersion);
        CHECK(j["config_hash"] == cfg.hash());
        CHECK(j["dataset_hash"] == "abc");
        CHECK(j["skipped"][0]["reason"] == "why");
        CHECK(j.contains("timestamp"));
    }
}
