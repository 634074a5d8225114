#include "dsf/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>

#include "dsf/errors.hpp"
#include "dsf/nn.hpp"
#include "dsf/rng.hpp"

namespace dsf {

// ---- batch helpers --------------------------------------------------------

Array LabeledImageBatch::flat() const {
    const std::size_t n = size();
    return Array(Shape{n, n ? images.size() / n : 0}, images.data);
}

Array LabeledImageBatch::image(std::size_t i) const {
    const std::size_t h = height(), w = width();
    Array out(Shape{h, w});
    std::copy_n(images.data.begin() + static_cast<std::ptrdiff_t>(i * h * w), h * w, out.data.begin());
    return out;
}

void LabeledImageBatch::set_image(std::size_t i, const Array& img) {
    const std::size_t hw = height() * width();
    if (img.size() != hw) throw DimensionError("set_image: image size mismatch");
    std::copy(img.data.begin(), img.data.end(),
              images.data.begin() + static_cast<std::ptrdiff_t>(i * hw));
}

// ---- glyphs ---------------------------------------------------------------

namespace {

struct Point {
    double x;
    double y;
};

using Stroke = std::vector<Point>;

Stroke ellipse(double cx, double cy, double rx, double ry, double from = 0.0,
               double to = 2.0 * std::numbers::pi, int steps = 20) {
    Stroke s;
    for (int i = 0; i <= steps; ++i) {
        const double t = from + (to - from) * i / steps;
        s.push_back({cx + rx * std::cos(t), cy + ry * std::sin(t)});
    }
    return s;
}

// Vector-stroke templates in a unit box (x right, y down).
const std::vector<std::vector<Stroke>>& templates() {
    static const std::vector<std::vector<Stroke>> kTemplates = [] {
        constexpr double pi = std::numbers::pi;
        std::vector<std::vector<Stroke>> t(10);
        t[0] = {ellipse(0.5, 0.5, 0.3, 0.42)};
        t[1] = {{{0.5, 0.05}, {0.5, 0.95}}, {{0.3, 0.25}, {0.5, 0.05}}, {{0.3, 0.95}, {0.7, 0.95}}};
        t[2] = {{{0.2, 0.3}, {0.35, 0.1}, {0.65, 0.1}, {0.8, 0.3}, {0.2, 0.92}, {0.82, 0.92}}};
        t[3] = {{{0.2, 0.08}, {0.8, 0.08}, {0.45, 0.42}},
                ellipse(0.48, 0.66, 0.32, 0.26, -0.5 * pi, 0.85 * pi, 14)};
        t[4] = {{{0.68, 0.95}, {0.68, 0.05}, {0.15, 0.65}, {0.88, 0.65}}};
        t[5] = {{{0.8, 0.08}, {0.28, 0.08}, {0.24, 0.45}},
                ellipse(0.48, 0.67, 0.32, 0.25, -0.6 * pi, 0.8 * pi, 14)};
        t[6] = {{{0.72, 0.06}, {0.35, 0.4}, {0.22, 0.68}}, ellipse(0.5, 0.7, 0.28, 0.22)};
        t[7] = {{{0.18, 0.08}, {0.82, 0.08}, {0.42, 0.95}}, {{0.35, 0.5}, {0.7, 0.5}}};
        t[8] = {ellipse(0.5, 0.28, 0.22, 0.2), ellipse(0.5, 0.7, 0.28, 0.23)};
        t[9] = {ellipse(0.48, 0.3, 0.26, 0.22), {{0.74, 0.3}, {0.68, 0.95}}};
        return t;
    }();
    return kTemplates;
}

double segment_distance(Point p, Point a, Point b) {
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0.0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double ex = p.x - (a.x + t * dx), ey = p.y - (a.y + t * dy);
    return std::sqrt(ex * ex + ey * ey);
}

}  // namespace

Array render_glyph(const GlyphSpec& spec, int cls, double shift_x, double shift_y, double width) {
    if (cls < 0 || static_cast<std::size_t>(cls) >= templates().size() ||
        static_cast<std::size_t>(cls) >= spec.classes) {
        throw ConfigError("glyph class " + std::to_string(cls) + " out of range");
    }
    const double n = static_cast<double>(spec.canvas);
    // The glyph box spans 16/28 x 20/28 of the canvas, centred.
    const double box_w = n * 16.0 / 28.0, box_h = n * 20.0 / 28.0;
    const double x0 = (n - box_w) / 2.0 + shift_x, y0 = (n - box_h) / 2.0 + shift_y;
    std::vector<std::pair<Point, Point>> segments;
    for (const Stroke& stroke : templates()[static_cast<std::size_t>(cls)]) {
        for (std::size_t i = 0; i + 1 < stroke.size(); ++i) {
            segments.push_back({{x0 + stroke[i].x * box_w, y0 + stroke[i].y * box_h},
                                {x0 + stroke[i + 1].x * box_w, y0 + stroke[i + 1].y * box_h}});
        }
    }
    Array img(Shape{spec.canvas, spec.canvas});
    for (std::size_t r = 0; r < spec.canvas; ++r) {
        for (std::size_t c = 0; c < spec.canvas; ++c) {
            const Point p{static_cast<double>(c) + 0.5, static_cast<double>(r) + 0.5};
            double d = std::numeric_limits<double>::infinity();
            for (const auto& [a, b] : segments) d = std::min(d, segment_distance(p, a, b));
            img.at(r, c) = std::clamp(width / 2.0 + 0.5 - d, 0.0, 1.0);
        }
    }
    return img;
}

Array glyph_template(const GlyphSpec& spec, int cls) { return render_glyph(spec, cls, 0.0, 0.0, 1.5); }

LabeledImageBatch render_base(const GlyphSpec& spec, std::size_t n_per_class, std::uint64_t seed) {
    if (n_per_class == 0) throw ConfigError("n_per_class must be at least 1");
    if (spec.classes == 0 || spec.classes > templates().size()) {
        throw ConfigError("glyph class count must be in [1, 10]");
    }
    const std::size_t n = n_per_class * spec.classes;
    LabeledImageBatch out;
    out.images = Array(Shape{n, spec.canvas, spec.canvas});
    out.y.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const int cls = static_cast<int>(k % spec.classes);
        out.y[k] = cls;
        Array img;
        if (spec.jitter) {
            Rng rng(derive_seed(seed, {k}));
            const double sx = (2.0 * uniform01(rng) - 1.0) * spec.max_shift;
            const double sy = (2.0 * uniform01(rng) - 1.0) * spec.max_shift;
            const double w = spec.min_width + (spec.max_width - spec.min_width) * uniform01(rng);
            img = render_glyph(spec, cls, sx, sy, w);
        } else {
            img = glyph_template(spec, cls);
        }
        out.set_image(k, img);
    }
    return out;
}

LabeledImageBatch rotate_batch(const LabeledImageBatch& batch, const std::vector<double>& angles,
                               std::uint64_t seed) {
    if (angles.empty()) throw ConfigError("angle list must not be empty");
    LabeledImageBatch out = batch;
    out.angles = angles;
    out.s.assign(batch.size(), 0);
    for (std::size_t k = 0; k < batch.size(); ++k) {
        Rng rng(derive_seed(seed, {k}));
        const auto idx = static_cast<int>(uniform_index(rng, angles.size()));
        out.s[k] = idx;
        out.set_image(k, rotate_image(batch.image(k), angles[static_cast<std::size_t>(idx)]));
    }
    return out;
}

LabeledImageBatch generate_glyphs(const GlyphSpec& spec, std::size_t n_per_class,
                                  const std::vector<double>& angles, std::uint64_t seed) {
    return rotate_batch(render_base(spec, n_per_class, derive_seed(seed, {0})), angles,
                        derive_seed(seed, {1}));
}

// ---- image transforms -----------------------------------------------------

Array rotate_image(const Array& img, double degrees) {
    if (img.shape.size() != 2) throw DimensionError("rotate_image: expected [H x W], got " + shape_str(img.shape));
    if (degrees == 0.0) return img;
    const std::size_t h = img.shape[0], w = img.shape[1];
    const double theta = degrees * std::numbers::pi / 180.0;
    const double cs = std::cos(theta), sn = std::sin(theta);
    const double cy = (static_cast<double>(h) - 1.0) / 2.0, cx = (static_cast<double>(w) - 1.0) / 2.0;
    auto pixel = [&](long r, long c) -> double {
        if (r < 0 || c < 0 || r >= static_cast<long>(h) || c >= static_cast<long>(w)) return 0.0;
        return img.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
    };
    Array out(img.shape);
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            const double dr = static_cast<double>(r) - cy, dc = static_cast<double>(c) - cx;
            // Inverse of the forward rotation.
            const double sr = dr * cs + dc * sn + cy;
            const double sc = -dr * sn + dc * cs + cx;
            const double fr = std::floor(sr), fc = std::floor(sc);
            const double ar = sr - fr, ac = sc - fc;
            const long r0 = static_cast<long>(fr), c0 = static_cast<long>(fc);
            const double v = (1 - ar) * (1 - ac) * pixel(r0, c0) + (1 - ar) * ac * pixel(r0, c0 + 1) +
                             ar * (1 - ac) * pixel(r0 + 1, c0) + ar * ac * pixel(r0 + 1, c0 + 1);
            out.at(r, c) = std::clamp(v, 0.0, 1.0);
        }
    }
    return out;
}

namespace detail {

Array morph_square(const Array& img, std::size_t size, bool dilate) {
    if (img.shape.size() != 2) throw DimensionError("morph: expected [H x W], got " + shape_str(img.shape));
    if (size == 0) throw ConfigError("morph: element size must be positive");
    const long h = static_cast<long>(img.shape[0]), w = static_cast<long>(img.shape[1]);
    // Window offsets [-lo, hi] with lo = floor((size-1)/2).
    const long lo = static_cast<long>((size - 1) / 2);
    const long hi = static_cast<long>(size) - 1 - lo;
    Array out(img.shape);
    for (long r = 0; r < h; ++r) {
        for (long c = 0; c < w; ++c) {
            double acc = dilate ? -std::numeric_limits<double>::infinity()
                                : std::numeric_limits<double>::infinity();
            for (long dr = -lo; dr <= hi; ++dr) {
                for (long dc = -lo; dc <= hi; ++dc) {
                    const long rr = r + dr, cc = c + dc;
                    const bool inside = rr >= 0 && cc >= 0 && rr < h && cc < w;
                    const double v = inside ? img.at(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc)) : 0.0;
                    acc = dilate ? std::max(acc, v) : std::min(acc, v);
                }
            }
            out.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = acc;
        }
    }
    return out;
}

}  // namespace detail

Array morph(const Array& img, int kappa) {
    const int k = std::abs(kappa);
    if (k < 2 || k > 4) {
        throw ConfigError("morph: |kappa| must be 2, 3 or 4, got " + std::to_string(kappa));
    }
    return detail::morph_square(img, static_cast<std::size_t>(k), kappa > 0);
}

// ---- IDX ------------------------------------------------------------------

namespace {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset,
                        const std::string& what) {
    if (bytes.size() < offset + 4) {
        throw ParseError(what + ": truncated header", bytes.size());
    }
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
           (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

}  // namespace

LabeledImageBatch load_idx(const std::filesystem::path& images_path,
                           const std::filesystem::path& labels_path) {
    const auto img = read_bytes(images_path);
    const std::string img_name = images_path.filename().string();
    if (read_be32(img, 0, img_name) != 0x00000803) {
        throw ParseError(img_name + ": bad image magic", 0);
    }
    const std::uint32_t count = read_be32(img, 4, img_name);
    const std::uint32_t rows = read_be32(img, 8, img_name);
    const std::uint32_t cols = read_be32(img, 12, img_name);
    const std::size_t pixels = std::size_t{count} * rows * cols;
    if (img.size() < 16 + pixels) {
        throw ParseError(img_name + ": truncated pixel section", img.size());
    }

    const auto lab = read_bytes(labels_path);
    const std::string lab_name = labels_path.filename().string();
    if (read_be32(lab, 0, lab_name) != 0x00000801) {
        throw ParseError(lab_name + ": bad label magic", 0);
    }
    const std::uint32_t label_count = read_be32(lab, 4, lab_name);
    if (label_count != count) {
        throw ParseError(lab_name + ": label count " + std::to_string(label_count) +
                         " does not match image count " + std::to_string(count), 4);
    }
    if (lab.size() < 8 + std::size_t{count}) {
        throw ParseError(lab_name + ": truncated label section", lab.size());
    }

    LabeledImageBatch out;
    out.images = Array(Shape{count, rows, cols});
    for (std::size_t i = 0; i < pixels; ++i) out.images.data[i] = img[16 + i] / 255.0;
    out.y.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        if (lab[8 + i] > 9) {
            throw ParseError(lab_name + ": label " + std::to_string(lab[8 + i]) + " outside [0, 10)", 8 + i);
        }
        out.y[i] = lab[8 + i];
    }
    return out;
}

// ---- protocol -------------------------------------------------------------

std::vector<double> seen_angles() { return {0.0, -22.5, 22.5, -45.0, 45.0}; }

std::vector<double> unseen_angles(double magnitude) { return {-magnitude, magnitude}; }

LabeledImageBatch subset(const LabeledImageBatch& batch, std::span<const std::size_t> indices) {
    const std::size_t hw = batch.height() * batch.width();
    LabeledImageBatch out;
    out.images = Array(Shape{indices.size(), batch.height(), batch.width()});
    out.angles = batch.angles;
    for (std::size_t k = 0; k < indices.size(); ++k) {
        const std::size_t i = indices[k];
        if (i >= batch.size()) throw DataError("subset index out of range");
        std::copy_n(batch.images.data.begin() + static_cast<std::ptrdiff_t>(i * hw), hw,
                    out.images.data.begin() + static_cast<std::ptrdiff_t>(k * hw));
        out.y.push_back(batch.y[i]);
        if (!batch.s.empty()) out.s.push_back(batch.s[i]);
    }
    return out;
}

RotProtocol make_rot_protocol(const LabeledImageBatch& base, const ProtocolSizes& sizes,
                              std::uint64_t seed) {
    if (!base.s.empty()) throw DataError("rotation protocol expects an unrotated base (s empty)");
    const std::size_t needed =
        sizes.train + sizes.eval_seen + 2 * sizes.eval_unseen + sizes.dil_transfer;
    if (base.size() < needed) {
        throw DataError("base holds " + std::to_string(base.size()) + " samples, protocol needs " +
                        std::to_string(needed));
    }
    std::vector<std::size_t> order(base.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, {0}));
    for (std::size_t i = order.size() - 1; i > 0; --i) {
        std::swap(order[i], order[uniform_index(rng, i + 1)]);
    }
    std::size_t cursor = 0;
    auto take = [&](std::size_t n) {
        std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                                     order.begin() + static_cast<std::ptrdiff_t>(cursor + n));
        cursor += n;
        return subset(base, idx);
    };
    RotProtocol p;
    p.train = rotate_batch(take(sizes.train), seen_angles(), derive_seed(seed, {1}));
    p.eval_seen = rotate_batch(take(sizes.eval_seen), seen_angles(), derive_seed(seed, {2}));
    p.unseen_55 = rotate_batch(take(sizes.eval_unseen), unseen_angles(55.0), derive_seed(seed, {3}));
    p.unseen_65 = rotate_batch(take(sizes.eval_unseen), unseen_angles(65.0), derive_seed(seed, {4}));
    p.dil_transfer = rotate_batch(take(sizes.dil_transfer), {0.0}, derive_seed(seed, {5}));
    return p;
}

// ---- persistence ----------------------------------------------------------

void save_dataset(const std::filesystem::path& path, const LabeledImageBatch& batch) {
    auto as_array = [](const auto& values) {
        std::vector<double> v(values.begin(), values.end());
        const std::size_t n = v.size();
        return Array(Shape{n}, std::move(v));
    };
    const std::vector<NamedArray> tensors{
        {"images", batch.images},
        {"y", as_array(batch.y)},
        {"s", as_array(batch.s)},
        {"angles", as_array(batch.angles)},
    };
    save_container(path, tensors);
}

LabeledImageBatch load_dataset(const std::filesystem::path& path) {
    const auto tensors = load_container(path);
    auto find = [&](const std::string& name) -> const Array& {
        for (const auto& t : tensors) {
            if (t.name == name) return t.array;
        }
        throw DataError(path.string() + ": dataset lacks tensor '" + name + "'");
    };
    auto as_ints = [](const Array& a) {
        std::vector<int> out;
        for (double v : a.data) out.push_back(static_cast<int>(v));
        return out;
    };
    LabeledImageBatch out;
    out.images = find("images");
    out.y = as_ints(find("y"));
    out.s = as_ints(find("s"));
    out.angles = find("angles").data;
    if (out.images.shape.size() != 3 || out.images.shape[0] != out.y.size() ||
        (!out.s.empty() && out.s.size() != out.y.size())) {
        throw DataError(path.string() + ": inconsistent dataset tensor shapes");
    }
    return out;
}

}  // namespace dsf
