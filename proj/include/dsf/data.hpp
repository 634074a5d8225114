#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "dsf/tensor.hpp"

namespace dsf {

struct LabeledImageBatch {
    Array images;               // [N x H x W], pixels in [0, 1]
    std::vector<int> y;         // class labels in [0, 10)
    std::vector<int> s;         // nuisance index into angles; empty when unknown
    std::vector<double> angles; // degrees per nuisance index

    std::size_t size() const { return y.size(); }
    std::size_t height() const { return images.shape.size() == 3 ? images.shape[1] : 0; }
    std::size_t width() const { return images.shape.size() == 3 ? images.shape[2] : 0; }
    // [N x H*W] view for the networks.
    Array flat() const;
    Array image(std::size_t i) const;  // [H x W]
    void set_image(std::size_t i, const Array& img);
};

struct GlyphSpec {
    std::size_t classes = 10;
    std::size_t canvas = 28;
    bool jitter = true;
    double max_shift = 2.0;  // uniform sub-pixel translation in [-max_shift, max_shift]
    double min_width = 1.0;  // stroke width range in pixels
    double max_width = 2.0;
};

// Class template: centred, stroke width 1.5, no jitter.
Array glyph_template(const GlyphSpec& spec, int cls);
Array render_glyph(const GlyphSpec& spec, int cls, double shift_x, double shift_y, double width);

// Unrotated, jittered glyphs; s and angles empty. Sample k has class k % classes
// and draws from its own stream derive_seed(seed, {k}).
LabeledImageBatch render_base(const GlyphSpec& spec, std::size_t n_per_class, std::uint64_t seed);

// render_base followed by a rotation drawn uniformly from angles per sample.
LabeledImageBatch generate_glyphs(const GlyphSpec& spec, std::size_t n_per_class,
                                  const std::vector<double>& angles, std::uint64_t seed);

// Rotation about the canvas centre by inverse mapping with bilinear
// interpolation; outside samples read as 0; result clipped to [0, 1]. A pixel
// at centre offset (dr, dc) lands at (dr cosθ - dc sinθ, dr sinθ + dc cosθ).
Array rotate_image(const Array& img, double degrees);

// Grayscale morphology with a |kappa| x |kappa| square element: kappa > 0
// dilates (windowed max), kappa < 0 erodes (windowed min). |kappa| in {2,3,4}.
Array morph(const Array& img, int kappa);

namespace detail {
// Unchecked square morphology with any element size >= 1.
Array morph_square(const Array& img, std::size_t size, bool dilate);
}  // namespace detail

// Big-endian IDX pair (images magic 0x00000803, labels magic 0x00000801).
LabeledImageBatch load_idx(const std::filesystem::path& images_path,
                           const std::filesystem::path& labels_path);

struct ProtocolSizes {
    std::size_t train = 10000;
    std::size_t eval_seen = 2000;
    std::size_t eval_unseen = 2000;  // each of the ±55 and ±65 splits
    std::size_t dil_transfer = 2000;
};

struct RotProtocol {
    LabeledImageBatch train;        // angles {0, ±22.5, ±45}
    LabeledImageBatch eval_seen;    // same angle set
    LabeledImageBatch unseen_55;    // {-55, 55}
    LabeledImageBatch unseen_65;    // {-65, 65}
    LabeledImageBatch dil_transfer; // unrotated; morphed at evaluation time
};

std::vector<double> seen_angles();
std::vector<double> unseen_angles(double magnitude);

// Splits an unrotated base into disjoint, seeded slices and rotates each per
// its angle set.
RotProtocol make_rot_protocol(const LabeledImageBatch& base, const ProtocolSizes& sizes,
                              std::uint64_t seed);

LabeledImageBatch subset(const LabeledImageBatch& batch, std::span<const std::size_t> indices);
LabeledImageBatch rotate_batch(const LabeledImageBatch& batch, const std::vector<double>& angles,
                               std::uint64_t seed);

// Stored in the DSF1 container as tensors "images", "y", "s", "angles".
void save_dataset(const std::filesystem::path& path, const LabeledImageBatch& batch);
LabeledImageBatch load_dataset(const std::filesystem::path& path);

}  // namespace dsf
