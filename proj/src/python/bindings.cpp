// Python bindings. Images are float32 (H, W, 3) or (H, W) arrays in [0,1];
// masks are float32 (H, W); feature maps are float32 (C, H, W).

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>
#include <cstring>

#include "pcstyle/dataset.hpp"
#include "pcstyle/errors.hpp"
#include "pcstyle/experiments.hpp"
#include "pcstyle/image_io.hpp"
#include "pcstyle/masked_ops.hpp"
#include "pcstyle/metrics.hpp"
#include "pcstyle/multimask.hpp"
#include "pcstyle/network.hpp"
#include "pcstyle/rle.hpp"
#include "pcstyle/stylize.hpp"

namespace py = pybind11;
using namespace pcstyle;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

ImageBuffer to_image(const FloatArray& a) {
    if (a.ndim() == 2) {
        ImageBuffer img(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), 1);
        std::memcpy(img.values.data(), a.data(), img.values.size() * sizeof(float));
        return img;
    }
    if (a.ndim() != 3 || (a.shape(2) != 1 && a.shape(2) != 3))
        throw InvalidArgument("image must have shape (H, W), (H, W, 1) or (H, W, 3)");
    const int h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1)), c = static_cast<int>(a.shape(2));
    ImageBuffer img(h, w, c);
    auto v = a.unchecked<3>();
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) img.at(ch, y, x) = v(y, x, ch);
    return img;
}

FloatArray from_image(const ImageBuffer& img) {
    if (img.channels == 1) {
        FloatArray out({img.height, img.width});
        std::memcpy(out.mutable_data(), img.values.data(), img.values.size() * sizeof(float));
        return out;
    }
    FloatArray out({img.height, img.width, img.channels});
    auto v = out.mutable_unchecked<3>();
    for (int ch = 0; ch < img.channels; ++ch)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) v(y, x, ch) = img.at(ch, y, x);
    return out;
}

MaskMap to_mask(const FloatArray& a) {
    if (a.ndim() != 2) throw InvalidArgument("mask must have shape (H, W)");
    MaskMap m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
    std::memcpy(m.values.data(), a.data(), m.values.size() * sizeof(float));
    return m;
}

FloatArray from_mask(const MaskMap& m) {
    FloatArray out({m.height, m.width});
    std::memcpy(out.mutable_data(), m.values.data(), m.values.size() * sizeof(float));
    return out;
}

FeatureMap to_features(const FloatArray& a) {
    if (a.ndim() != 3) throw InvalidArgument("features must have shape (C, H, W)");
    FeatureMap f(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2)));
    std::memcpy(f.values.data(), a.data(), f.values.size() * sizeof(float));
    return f;
}

FloatArray from_features(const FeatureMap& f) {
    FloatArray out({f.channels, f.height, f.width});
    std::memcpy(out.mutable_data(), f.values.data(), f.values.size() * sizeof(float));
    return out;
}

ConvSpec make_conv(const FloatArray& weight, const std::optional<FloatArray>& bias, int stride, int padding,
                   bool renormalize) {
    if (weight.ndim() != 4) throw InvalidArgument("weight must have shape (out, in, kh, kw)");
    ConvSpec spec;
    spec.out_channels = static_cast<int>(weight.shape(0));
    spec.in_channels = static_cast<int>(weight.shape(1));
    spec.kernel_h = static_cast<int>(weight.shape(2));
    spec.kernel_w = static_cast<int>(weight.shape(3));
    spec.weights.assign(weight.data(), weight.data() + weight.size());
    if (bias) {
        if (bias->ndim() != 1) throw InvalidArgument("bias must be one-dimensional");
        spec.bias.assign(bias->data(), bias->data() + bias->size());
    } else {
        spec.bias.assign(static_cast<std::size_t>(spec.out_channels), 0.0f);
    }
    spec.stride = stride;
    spec.padding = padding;
    spec.renormalize = renormalize;
    return spec;
}

BlendConfig make_blend(bool feather_before, bool expand_during, bool content_feather, int feather_px) {
    BlendConfig b;
    b.feather_before = feather_before;
    b.expand_during = expand_during;
    b.content_feather_decoder = content_feather;
    b.feather_kernel_px = feather_px;
    return b;
}

std::vector<RgbSample> to_samples(const FloatArray& a) {
    if (a.ndim() != 2 || a.shape(1) != 3) throw InvalidArgument("samples must have shape (N, 3)");
    std::vector<RgbSample> out(static_cast<std::size_t>(a.shape(0)));
    auto v = a.unchecked<2>();
    for (py::ssize_t i = 0; i < a.shape(0); ++i) out[i] = {v(i, 0), v(i, 1), v(i, 2)};
    return out;
}

py::dict report_dict(const MetricReport& r) {
    py::dict d;
    d["gray_emd"] = r.gray_emd;
    d["sliced_emd"] = r.sliced_emd;
    d["style_loss"] = r.style_loss;
    d["boundary_grad_magnitude"] = r.boundary_grad_magnitude;
    d["boundary_color_contrast"] = r.boundary_color_contrast;
    d["finite"] = r.all_finite();
    return d;
}

py::tuple masked_feature_tuple(const MaskedFeature& mf) {
    return py::make_tuple(from_features(mf.features), from_mask(mf.mask));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Masked style transfer with partial convolutions";

    py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
    py::register_exception<EmptyRegionError>(m, "EmptyRegionError", PyExc_ValueError);
    py::register_exception<CheckpointFormatError>(m, "CheckpointFormatError", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);
    py::register_exception<ResourceError>(m, "ResourceError", PyExc_MemoryError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<DatasetError>(m, "DatasetError", PyExc_RuntimeError);

    // --- masked operators -----------------------------------------------------------
    m.def(
        "partial_conv2d",
        [](const FloatArray& features, const FloatArray& mask, const FloatArray& weight,
           const std::optional<FloatArray>& bias, int stride, int padding, bool renormalize, bool expanded) {
            MaskedFeature in{to_features(features), to_mask(mask)};
            const ConvSpec spec = make_conv(weight, bias, stride, padding, renormalize);
            MaskedFeature out;
            {
                py::gil_scoped_release release;
                out = expanded ? partial_conv2d_expanded(in, spec) : partial_conv2d(in, spec);
            }
            return masked_feature_tuple(out);
        },
        py::arg("features"), py::arg("mask"), py::arg("weight"), py::arg("bias") = py::none(),
        py::arg("stride") = 1, py::arg("padding") = 0, py::arg("renormalize") = true, py::arg("expanded") = false,
        "Partial convolution; returns (features, updated_mask).");
    m.def(
        "update_mask_only",
        [](const FloatArray& mask, int kernel_h, int kernel_w, int stride, int padding) {
            return from_mask(update_mask_only(to_mask(mask), kernel_h, kernel_w, stride, padding));
        },
        py::arg("mask"), py::arg("kernel_h"), py::arg("kernel_w"), py::arg("stride") = 1, py::arg("padding") = 0);
    m.def("expand_mask", [](const FloatArray& mask) { return from_mask(expand_mask(to_mask(mask))); }, py::arg("mask"));
    m.def(
        "feather_mask", [](const FloatArray& mask, int kernel_px) { return from_mask(feather_mask(to_mask(mask), kernel_px)); },
        py::arg("mask"), py::arg("kernel_px") = 5);
    m.def(
        "alpha_composite",
        [](const FloatArray& stylized, const FloatArray& original, const FloatArray& mask) {
            return from_image(alpha_composite(to_image(stylized), to_image(original), to_mask(mask)));
        },
        py::arg("stylized"), py::arg("original"), py::arg("mask"));

    // --- network ---------------------------------------------------------------------
    py::class_<StyleNetwork>(m, "Network")
        .def_static("random", &make_random_network, py::arg("seed"), "Seeded random weights (tests and smoke runs).")
        .def_static("load", &load_weights, py::arg("path"), "Loads a pcstyle checkpoint container.")
        .def("save", [](const StyleNetwork& n, const std::filesystem::path& p) { save_weights(n, p); }, py::arg("path"))
        .def("with_renormalize", [](const StyleNetwork& n, bool on) { return with_renormalize(n, on); }, py::arg("on"))
        .def_property_readonly("source", [](const StyleNetwork& n) { return n.metadata.source; })
        .def_property_readonly("style_loss_scale", [](const StyleNetwork& n) { return n.metadata.style_loss_scale; })
        .def_property_readonly("feature_channels", &StyleNetwork::feature_channels)
        .def_property_readonly("parameter_layer_count", &StyleNetwork::parameter_layer_count)
        .def_property_readonly("stage_names", &StyleNetwork::stage_names)
        .def(
            "encode",
            [](const StyleNetwork& n, const FloatArray& image, std::optional<FloatArray> mask) {
                const ImageBuffer img = to_image(image);
                const MaskMap mk = mask ? to_mask(*mask) : MaskMap::ones(img.height, img.width);
                py::list out;
                for (const auto& stage : encode(n, img, mk, BlendConfig{})) out.append(masked_feature_tuple(stage));
                return out;
            },
            py::arg("image"), py::arg("mask") = py::none(),
            "Per-stage (features, mask) pairs of the masked encoder, shallowest first.");

    // --- stylization -----------------------------------------------------------------
    m.def(
        "stylize",
        [](const StyleNetwork& n, const FloatArray& content, const FloatArray& style, const FloatArray& mask,
           bool feather_before, bool expand_during, bool content_feather, int feather_px) {
            StylizeRequest req{to_image(content), to_image(style), to_mask(mask),
                               make_blend(feather_before, expand_during, content_feather, feather_px)};
            ImageBuffer out;
            {
                py::gil_scoped_release release;
                out = stylize_masked(n, req);
            }
            return from_image(out);
        },
        py::arg("network"), py::arg("content"), py::arg("style"), py::arg("mask"), py::kw_only(),
        py::arg("feather_before") = false, py::arg("expand_during") = false, py::arg("content_feather") = false,
        py::arg("feather_px") = 5, "Masked stylization with partial convolutions.");
    m.def(
        "style_then_mask",
        [](const StyleNetwork& n, const FloatArray& content, const FloatArray& style, const FloatArray& mask) {
            return from_image(style_then_mask(n, to_image(content), to_image(style), to_mask(mask)));
        },
        py::arg("network"), py::arg("content"), py::arg("style"), py::arg("mask"));
    m.def(
        "mask_then_style",
        [](const StyleNetwork& n, const FloatArray& content, const FloatArray& style, const FloatArray& mask) {
            return from_image(mask_then_style(n, to_image(content), to_image(style), to_mask(mask)));
        },
        py::arg("network"), py::arg("content"), py::arg("style"), py::arg("mask"));
    m.def(
        "stylize_unmasked",
        [](const StyleNetwork& n, const FloatArray& content, const FloatArray& style) {
            return from_image(stylize_unmasked(n, to_image(content), to_image(style)));
        },
        py::arg("network"), py::arg("content"), py::arg("style"));
    m.def(
        "stylize_multi",
        [](const StyleNetwork& n, const FloatArray& content, const std::vector<std::pair<FloatArray, FloatArray>>& regions,
           bool feather_before, bool expand_during, bool content_feather, int feather_px) {
            std::vector<RegionSpec> specs;
            for (const auto& [mask, style] : regions) specs.push_back({to_mask(mask), to_image(style)});
            const BlendConfig blend = make_blend(feather_before, expand_during, content_feather, feather_px);
            return from_image(stylize_multi(n, to_image(content), specs, blend));
        },
        py::arg("network"), py::arg("content"), py::arg("regions"), py::kw_only(), py::arg("feather_before") = false,
        py::arg("expand_during") = false, py::arg("content_feather") = false, py::arg("feather_px") = 5,
        "regions is a list of (mask, style) pairs sharing the content dims.");

    // --- metrics -----------------------------------------------------------------------
    m.def(
        "gray_emd",
        [](const FloatArray& a, const FloatArray& mask_a, const FloatArray& b, const FloatArray& mask_b, int bins) {
            return gray_emd(to_image(a), to_mask(mask_a), to_image(b), to_mask(mask_b), bins);
        },
        py::arg("image_a"), py::arg("mask_a"), py::arg("image_b"), py::arg("mask_b"), py::arg("bins") = 256);
    m.def(
        "masked_histogram",
        [](const FloatArray& image, int channel, const FloatArray& mask, int bins) {
            return masked_histogram(to_image(image), channel, to_mask(mask), bins).mass;
        },
        py::arg("image"), py::arg("channel"), py::arg("mask"), py::arg("bins") = 256);
    m.def("wasserstein_1d", &wasserstein_1d, py::arg("a"), py::arg("b"));
    m.def(
        "sliced_emd",
        [](const FloatArray& a, const FloatArray& b, int n_projections, std::uint64_t seed) {
            return sliced_emd(to_samples(a), to_samples(b), n_projections, seed);
        },
        py::arg("a"), py::arg("b"), py::arg("n_projections") = 64, py::arg("seed") = 0,
        "Sliced Wasserstein-1 between (N, 3) and (M, 3) RGB sample sets.");
    m.def("projection_directions", &projection_directions, py::arg("n_projections"), py::arg("seed"));
    m.def(
        "perceptual_style_loss",
        [](const StyleNetwork& n, const FloatArray& output, const FloatArray& mask, const FloatArray& style) {
            return perceptual_style_loss(n, to_image(output), to_mask(mask), to_image(style));
        },
        py::arg("network"), py::arg("output"), py::arg("mask"), py::arg("style"));
    m.def(
        "boundary_band", [](const FloatArray& mask) { return from_mask(boundary_band(to_mask(mask))); }, py::arg("mask"));
    m.def(
        "boundary_gradient_magnitude",
        [](const FloatArray& image, const FloatArray& mask) {
            return boundary_gradient_magnitude(to_image(image), to_mask(mask));
        },
        py::arg("image"), py::arg("mask"));
    m.def(
        "boundary_color_contrast",
        [](const FloatArray& image, const FloatArray& mask) {
            return boundary_color_contrast(to_image(image), to_mask(mask));
        },
        py::arg("image"), py::arg("mask"));
    m.def(
        "compute_metrics",
        [](const StyleNetwork& n, const FloatArray& output, const FloatArray& mask, const FloatArray& style, int bins,
           int n_projections, std::uint64_t seed) {
            MetricOptions opt;
            opt.bins = bins;
            opt.n_projections = n_projections;
            opt.seed = seed;
            return report_dict(compute_metrics(n, to_image(output), to_mask(mask), to_image(style), opt));
        },
        py::arg("network"), py::arg("output"), py::arg("mask"), py::arg("style"), py::kw_only(), py::arg("bins") = 256,
        py::arg("n_projections") = 64, py::arg("seed") = 0);
    m.def(
        "region_disparity",
        [](const FloatArray& content, const FloatArray& mask, int bins, int n_projections, std::uint64_t seed) {
            const RegionDisparity d = region_disparity_emd(to_image(content), to_mask(mask), bins, n_projections, seed);
            return py::make_tuple(d.gray, d.sliced);
        },
        py::arg("content"), py::arg("mask"), py::arg("bins") = 256, py::arg("n_projections") = 64,
        py::arg("seed") = 0, "(gray, sliced) EMD between the whole image and its masked region.");

    // --- run-length masks, images, datasets --------------------------------------------
    m.def(
        "rle_decode",
        [](const py::object& counts, int height, int width) {
            const RleMask rle = py::isinstance<py::str>(counts) || py::isinstance<py::bytes>(counts)
                                    ? rle_from_string(counts.cast<std::string>(), height, width)
                                    : rle_from_counts(counts.cast<std::vector<std::uint32_t>>(), height, width);
            return from_mask(rle_decode(rle));
        },
        py::arg("counts"), py::arg("height"), py::arg("width"),
        "Decodes a compressed string or an explicit run list into a 0/1 mask.");
    m.def(
        "rle_encode",
        [](const FloatArray& mask) { return rle_to_string(rle_encode(to_mask(mask))); }, py::arg("mask"),
        "Compressed run-length string of mask > 0.5.");
    m.def("read_image", [](const std::filesystem::path& p) { return from_image(read_image(p)); }, py::arg("path"));
    m.def("read_mask", [](const std::filesystem::path& p) { return from_mask(read_mask(p)); }, py::arg("path"));
    m.def(
        "write_png", [](const std::filesystem::path& p, const FloatArray& image) { write_png(p, to_image(image)); },
        py::arg("path"), py::arg("image"));
    m.def(
        "index_dataset",
        [](const std::filesystem::path& root) {
            const DatasetIndex index = index_dataset(root);
            py::list entries;
            for (const auto& e : index.entries) {
                py::dict d;
                d["id"] = e.id;
                d["image"] = e.image_path;
                d["annotation"] = e.annotation_path;
                d["height"] = e.height;
                d["width"] = e.width;
                std::vector<std::uint64_t> areas;
                for (const auto& mk : e.masks) areas.push_back(mk.area);
                d["mask_areas"] = areas;
                entries.append(d);
            }
            py::dict out;
            out["entries"] = entries;
            out["integrity_hash"] = index.integrity_hash;
            out["warnings"] = index.warnings;
            return out;
        },
        py::arg("root"));
}
