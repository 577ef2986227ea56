#include <algorithm>
#include <cmath>

#include "nfseg/dataset.hpp"
#include "nfseg/embedding.hpp"
#include "nfseg/errors.hpp"

namespace nfseg {

namespace {

struct Color {
    float r, g, b;
};

// shared between rectangles and cars, so color alone cannot separate the
// two classes
constexpr Color kSharedPalette[] = {
    {0.82f, 0.31f, 0.26f},
    {0.33f, 0.45f, 0.83f},
    {0.85f, 0.76f, 0.32f},
    {0.56f, 0.33f, 0.64f},
};

constexpr Color kGreens[] = {
    {0.22f, 0.52f, 0.25f},
    {0.30f, 0.62f, 0.30f},
    {0.16f, 0.42f, 0.22f},
};

struct Painter {
    int H, W;
    Tensor<float>& image;
    std::vector<std::uint8_t>& mask;

    void set(int y, int x, const Color& c, int cls) {
        if (y < 0 || y >= H || x < 0 || x >= W) return;
        const std::size_t plane = static_cast<std::size_t>(H) * W;
        const std::size_t idx = static_cast<std::size_t>(y) * W + x;
        image.data[idx] = c.r;
        image.data[plane + idx] = c.g;
        image.data[2 * plane + idx] = c.b;
        mask[idx] = static_cast<std::uint8_t>(cls);
    }
};

Color jitter(Color c, Rng& rng, float amount = 0.06f) {
    auto adj = [&](float v) {
        v += amount * static_cast<float>(rng.uniform(-1.0, 1.0));
        return std::clamp(v, 0.0f, 1.0f);
    };
    return {adj(c.r), adj(c.g), adj(c.b)};
}

void paint_rect(Painter& p, int cy, int cx, int h, int w, const Color& c, int cls) {
    for (int y = cy - h / 2; y < cy - h / 2 + h; ++y)
        for (int x = cx - w / 2; x < cx - w / 2 + w; ++x) p.set(y, x, c, cls);
}

void paint_ellipse(Painter& p, int cy, int cx, int ry, int rx, const Color& c, int cls) {
    for (int y = cy - ry; y <= cy + ry; ++y)
        for (int x = cx - rx; x <= cx + rx; ++x) {
            const double dy = (y - cy) / static_cast<double>(ry);
            const double dx = (x - cx) / static_cast<double>(rx);
            if (dy * dy + dx * dx <= 1.0) p.set(y, x, c, cls);
        }
}

// a thick line across the whole image
void paint_stripe(Painter& p, double angle, double offset, double half_width, const Color& base,
                  Rng& rng, int cls) {
    const double nx = std::cos(angle), ny = std::sin(angle);
    for (int y = 0; y < p.H; ++y)
        for (int x = 0; x < p.W; ++x) {
            const double d = nx * x + ny * y - offset;
            if (std::abs(d) <= half_width) {
                Color c = base;
                const float shade = 0.02f * static_cast<float>(rng.uniform(-1.0, 1.0));
                c.r = std::clamp(c.r + shade, 0.0f, 1.0f);
                c.g = std::clamp(c.g + shade, 0.0f, 1.0f);
                c.b = std::clamp(c.b + shade, 0.0f, 1.0f);
                p.set(y, x, c, cls);
            }
        }
}

}  // namespace

void SegSample::validate() const {
    if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) != height || image.dim(2) != width)
        throw ContractViolation("sample: image shape does not match [3,H,W]");
    if (mask.size() != static_cast<std::size_t>(height) * width)
        throw ContractViolation("sample: mask length does not match H*W");
    for (float v : image.data)
        if (!(v >= 0.0f && v <= 1.0f)) throw ContractViolation("sample: image value outside [0,1]");
    for (std::uint8_t m : mask)
        if (m >= kNumClasses) throw ContractViolation("sample: mask class out of range");
}

SegSample generate_synthetic(std::uint64_t seed, int H, int W) {
    if (H < 32 || W < 32) throw ContractViolation("generate_synthetic: size must be >= 32");
    Rng rng(Rng(seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(H) +
                        0xbf58476d1ce4e5b9ULL * static_cast<std::uint64_t>(W)))
                .next_u64());

    SegSample s;
    s.height = H;
    s.width = W;
    s.image = Tensor<float>({3, H, W});
    s.mask.assign(static_cast<std::size_t>(H) * W, 0);
    Painter p{H, W, s.image, s.mask};

    // shape counts scale with area so the per-pixel scene statistics stay
    // comparable across image sizes
    const double area = static_cast<double>(H) * W / (64.0 * 64.0);
    const int n_stripes = std::max(1, static_cast<int>(std::lround(1.3 * std::sqrt(area))));
    const int n_rects = std::max(1, static_cast<int>(std::lround((1 + rng.uniform_int(3)) * area)));
    const int n_ellipses = std::max(1, static_cast<int>(std::lround((1 + rng.uniform_int(3)) * area)));
    const int n_cars = std::max(1, static_cast<int>(std::lround((1 + rng.uniform_int(3)) * area)));
    const int n_clutter = std::max(1, static_cast<int>(std::lround((1 + rng.uniform_int(2)) * area)));

    // background: muted base tone with low-frequency shading
    {
        const Color base = {0.55f + 0.1f * static_cast<float>(rng.uniform(-1.0, 1.0)),
                            0.52f + 0.1f * static_cast<float>(rng.uniform(-1.0, 1.0)),
                            0.48f + 0.1f * static_cast<float>(rng.uniform(-1.0, 1.0))};
        const double fy = rng.uniform(1.0, 3.0) * kPi / H;
        const double fx = rng.uniform(1.0, 3.0) * kPi / W;
        const double phase = rng.uniform(0.0, 2.0 * kPi);
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const float shade =
                    0.06f * static_cast<float>(std::sin(fy * y + fx * x + phase));
                p.set(y, x, {std::clamp(base.r + shade, 0.0f, 1.0f),
                             std::clamp(base.g + shade, 0.0f, 1.0f),
                             std::clamp(base.b + shade, 0.0f, 1.0f)},
                      0);
            }
    }

    for (int i = 0; i < n_ellipses; ++i) {
        const Color c = jitter(kGreens[rng.uniform_int(3)], rng);
        paint_ellipse(p, rng.uniform_int(H), rng.uniform_int(W), 4 + rng.uniform_int(9),
                      4 + rng.uniform_int(9), c, 3);
    }

    for (int i = 0; i < n_rects; ++i) {
        const Color c = jitter(kSharedPalette[rng.uniform_int(4)], rng);
        paint_rect(p, rng.uniform_int(H), rng.uniform_int(W), 5 + rng.uniform_int(16),
                   5 + rng.uniform_int(16), c, 1);
    }

    for (int i = 0; i < n_stripes; ++i) {
        const double angle = rng.uniform(0.0, kPi);
        const double nx = std::cos(angle), ny = std::sin(angle);
        // offset chosen so the line passes through a random interior point
        const double offset = nx * rng.uniform(0.2 * W, 0.8 * W) + ny * rng.uniform(0.2 * H, 0.8 * H);
        const Color asphalt = {0.28f + 0.06f * static_cast<float>(rng.uniform(-1.0, 1.0)),
                               0.28f + 0.06f * static_cast<float>(rng.uniform(-1.0, 1.0)),
                               0.30f + 0.06f * static_cast<float>(rng.uniform(-1.0, 1.0))};
        paint_stripe(p, angle, offset, rng.uniform(2.5, 4.5), asphalt, rng, 2);
    }

    // cars sit on stripe pixels only; colors come from the rectangle palette
    {
        std::vector<int> stripe_pixels;
        for (std::size_t i = 0; i < s.mask.size(); ++i)
            if (s.mask[i] == 2) stripe_pixels.push_back(static_cast<int>(i));
        if (!stripe_pixels.empty())
            for (int i = 0; i < n_cars; ++i) {
                const int pix = stripe_pixels[rng.uniform_int(static_cast<int>(stripe_pixels.size()))];
                const int cy = pix / W, cx = pix % W;
                const Color c = jitter(kSharedPalette[rng.uniform_int(4)], rng);
                const int size = 4 + rng.uniform_int(4);
                paint_rect(p, cy, cx, size, size, c, 4);
            }
    }

    for (int i = 0; i < n_clutter; ++i) {
        const Color c = {0.6f + 0.3f * static_cast<float>(rng.uniform()),
                         0.1f + 0.2f * static_cast<float>(rng.uniform()),
                         0.4f + 0.4f * static_cast<float>(rng.uniform())};
        const int cy = rng.uniform_int(H), cx = rng.uniform_int(W);
        const int lumps = 2 + rng.uniform_int(3);
        for (int l = 0; l < lumps; ++l)
            paint_ellipse(p, cy + rng.uniform_int(7) - 3, cx + rng.uniform_int(7) - 3,
                          2 + rng.uniform_int(4), 2 + rng.uniform_int(4), jitter(c, rng, 0.04f), 5);
    }

    // pixel-level color noise
    for (auto& v : s.image.data)
        v = std::clamp(v + 0.05f * static_cast<float>(rng.normal()), 0.0f, 1.0f);

    return s;
}

SegSample crop(const SegSample& s, int oy, int ox, int size) {
    if (size < 1 || oy < 0 || ox < 0 || oy + size > s.height || ox + size > s.width)
        throw ContractViolation("crop: window outside sample bounds");
    SegSample out;
    out.height = size;
    out.width = size;
    out.image = Tensor<float>({3, size, size});
    out.mask.resize(static_cast<std::size_t>(size) * size);
    const std::size_t plane = static_cast<std::size_t>(s.height) * s.width;
    for (int ch = 0; ch < 3; ++ch)
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x)
                out.image.data[(static_cast<std::size_t>(ch) * size + y) * size + x] =
                    s.image.data[ch * plane + static_cast<std::size_t>(oy + y) * s.width + ox + x];
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            out.mask[static_cast<std::size_t>(y) * size + x] =
                s.mask[static_cast<std::size_t>(oy + y) * s.width + ox + x];
    return out;
}

SegSample random_crop(const SegSample& s, int size, Rng& rng) {
    if (size > s.height || size > s.width)
        throw ContractViolation("random_crop: size exceeds sample extent");
    const int oy = rng.uniform_int(s.height - size + 1);
    const int ox = rng.uniform_int(s.width - size + 1);
    return crop(s, oy, ox, size);
}

SegSample flip(const SegSample& s, bool horizontal, bool vertical) {
    SegSample out;
    out.height = s.height;
    out.width = s.width;
    out.image = Tensor<float>({3, s.height, s.width});
    out.mask.resize(s.mask.size());
    const std::size_t plane = static_cast<std::size_t>(s.height) * s.width;
    for (int y = 0; y < s.height; ++y) {
        const int sy = vertical ? s.height - 1 - y : y;
        for (int x = 0; x < s.width; ++x) {
            const int sx = horizontal ? s.width - 1 - x : x;
            for (int ch = 0; ch < 3; ++ch)
                out.image.data[ch * plane + static_cast<std::size_t>(y) * s.width + x] =
                    s.image.data[ch * plane + static_cast<std::size_t>(sy) * s.width + sx];
            out.mask[static_cast<std::size_t>(y) * s.width + x] =
                s.mask[static_cast<std::size_t>(sy) * s.width + sx];
        }
    }
    return out;
}

SegSample flip_augment(const SegSample& s, Rng& rng) {
    const bool h = rng.bernoulli(0.5);
    const bool v = rng.bernoulli(0.5);
    return flip(s, h, v);
}

PointSet sample_points_train(const SegSample& s, int count, Rng& rng) {
    if (count < 1) throw ContractViolation("sample_points_train: count must be >= 1");
    PointSet ps;
    ps.coords = Tensor<float>({count, 2});
    ps.labels.resize(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const int idx = rng.uniform_int(s.height * s.width);
        const int y = idx / s.width, x = idx % s.width;
        ps.coords(i, 0) = (static_cast<float>(x) + 0.5f) / static_cast<float>(s.width);
        ps.coords(i, 1) = (static_cast<float>(y) + 0.5f) / static_cast<float>(s.height);
        ps.labels[static_cast<std::size_t>(i)] = s.mask[static_cast<std::size_t>(idx)];
    }
    return ps;
}

PointSet dense_grid(int H, int W) {
    if (H < 1 || W < 1) throw ContractViolation("dense_grid: extents must be >= 1");
    PointSet ps;
    ps.coords = Tensor<float>({H * W, 2});
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const int i = y * W + x;
            ps.coords(i, 0) = (static_cast<float>(x) + 0.5f) / static_cast<float>(W);
            ps.coords(i, 1) = (static_cast<float>(y) + 0.5f) / static_cast<float>(H);
        }
    return ps;
}

}  // namespace nfseg
