#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "sconv/rng.hpp"
#include "sconv/stir_data.hpp"

namespace sconv {

namespace {

struct Vec2 {
    double x, y;
};

struct Polygon {
    std::vector<Vec2> pts;
    double sign = 1.0;
};

struct Disk {
    Vec2 c;
    double r;
    double sign = 1.0;
};

struct Shape2D {
    std::vector<Polygon> polys;
    std::vector<Disk> disks;

    void rect(double x0, double y0, double x1, double y1, double sign = 1.0) {
        polys.push_back({{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}, sign});
    }
    // p -> origin + scale * p
    void transform(Vec2 origin, double scale) {
        for (auto& p : polys)
            for (auto& v : p.pts) v = {origin.x + scale * v.x, origin.y + scale * v.y};
        for (auto& d : disks) {
            d.c = {origin.x + scale * d.c.x, origin.y + scale * d.c.y};
            d.r *= scale;
        }
    }
    void append(const Shape2D& other) {
        polys.insert(polys.end(), other.polys.begin(), other.polys.end());
        disks.insert(disks.end(), other.disks.begin(), other.disks.end());
    }
};

// ---- Exact coverage ---------------------------------------------------------------------

double shoelace(const std::vector<Vec2>& p) {
    double a = 0.0;
    for (std::size_t i = 0, n = p.size(); i < n; ++i) {
        const Vec2& u = p[i];
        const Vec2& v = p[(i + 1) % n];
        a += u.x * v.y - v.x * u.y;
    }
    return 0.5 * a;
}

// Sutherland-Hodgman against one axis-aligned half-plane; the clip window is convex, so the
// area of the result is exact even for non-convex subjects.
template <class Inside, class Cut>
std::vector<Vec2> clip(const std::vector<Vec2>& in, Inside inside, Cut cut) {
    std::vector<Vec2> out;
    if (in.empty()) return out;
    out.reserve(in.size() + 4);
    for (std::size_t i = 0, n = in.size(); i < n; ++i) {
        const Vec2& a = in[i];
        const Vec2& b = in[(i + 1) % n];
        const bool ia = inside(a), ib = inside(b);
        if (ia) out.push_back(a);
        if (ia != ib) out.push_back(cut(a, b));
    }
    return out;
}

double polygon_rect_area(const std::vector<Vec2>& poly, double x0, double y0, double x1, double y1) {
    auto lerp_x = [](const Vec2& a, const Vec2& b, double x) {
        const double t = (x - a.x) / (b.x - a.x);
        return Vec2{x, a.y + t * (b.y - a.y)};
    };
    auto lerp_y = [](const Vec2& a, const Vec2& b, double y) {
        const double t = (y - a.y) / (b.y - a.y);
        return Vec2{a.x + t * (b.x - a.x), y};
    };
    std::vector<Vec2> p = poly;
    p = clip(p, [&](const Vec2& v) { return v.x >= x0; }, [&](const Vec2& a, const Vec2& b) { return lerp_x(a, b, x0); });
    p = clip(p, [&](const Vec2& v) { return v.x <= x1; }, [&](const Vec2& a, const Vec2& b) { return lerp_x(a, b, x1); });
    p = clip(p, [&](const Vec2& v) { return v.y >= y0; }, [&](const Vec2& a, const Vec2& b) { return lerp_y(a, b, y0); });
    p = clip(p, [&](const Vec2& v) { return v.y <= y1; }, [&](const Vec2& a, const Vec2& b) { return lerp_y(a, b, y1); });
    return p.size() < 3 ? 0.0 : std::abs(shoelace(p));
}

// Integral over [p, q] of clamp(sqrt(r^2 - x^2), a, b), with p, q inside [-r, r].
double clamped_arc_integral(double r, double p, double q, double a, double b) {
    if (q <= p || b <= a) return 0.0;
    // (r - x)(r + x) and atan2 stay accurate near the tips, where asin(x / r) does not.
    auto G = [r](double x) {
        const double s = std::sqrt(std::max(0.0, (r - x) * (r + x)));
        return 0.5 * (x * s + r * r * std::atan2(x, s));
    };
    std::array<double, 6> cuts{};
    std::size_t n = 0;
    cuts[n++] = p;
    for (double c : {a, b})
        if (c >= 0.0 && c < r) {
            const double x = std::sqrt((r - c) * (r + c));
            for (double xc : {-x, x})
                if (xc > p && xc < q) cuts[n++] = xc;
        }
    cuts[n++] = q;
    std::sort(cuts.begin(), cuts.begin() + static_cast<long>(n));
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double u = cuts[i], v = cuts[i + 1];
        if (v <= u) continue;
        const double m = 0.5 * (u + v);
        const double h = std::sqrt(std::max(0.0, (r - m) * (r + m)));
        if (h <= a)
            total += a * (v - u);
        else if (h >= b)
            total += b * (v - u);
        else
            total += G(v) - G(u);
    }
    return total;
}

double disk_rect_area(const Disk& d, double x0, double y0, double x1, double y1) {
    const double r = d.r;
    const double p = std::max(x0 - d.c.x, -r), q = std::min(x1 - d.c.x, r);
    if (q <= p) return 0.0;
    const double Y0 = y0 - d.c.y, Y1 = y1 - d.c.y;
    // Upper half contributes clamp(h, Y0, Y1) - Y0 ... written as two clamped integrals whose
    // sum is the chord length inside [Y0, Y1].
    return clamped_arc_integral(r, p, q, Y0, Y1) + clamped_arc_integral(r, p, q, -Y1, -Y0);
}

// ---- Glyph geometry (unit box, y pointing down) -----------------------------------------

Shape2D base_shape(GlyphKind kind, double stroke) {
    Shape2D s;
    switch (kind) {
        case GlyphKind::Plus: {
            const double w = stroke / 3.0, a = 0.5 - w / 2, b = 0.5 + w / 2;
            s.rect(0.0, a, 1.0, b);
            s.rect(a, 0.0, b, a);
            s.rect(a, b, b, 1.0);
            break;
        }
        case GlyphKind::Cross: {
            const double t = 0.12 * stroke;
            s.polys.push_back({{{0, 0},
                                {t, 0},
                                {0.5, 0.5 - t},
                                {1 - t, 0},
                                {1, 0},
                                {1, t},
                                {0.5 + t, 0.5},
                                {1, 1 - t},
                                {1, 1},
                                {1 - t, 1},
                                {0.5, 0.5 + t},
                                {t, 1},
                                {0, 1},
                                {0, 1 - t},
                                {0.5 - t, 0.5},
                                {0, t}},
                               1.0});
            break;
        }
        case GlyphKind::Disk: s.disks.push_back({{0.5, 0.5}, 0.45}); break;
        case GlyphKind::Ring:
            s.disks.push_back({{0.5, 0.5}, 0.45});
            s.disks.push_back({{0.5, 0.5}, 0.45 - 0.15 * stroke, -1.0});
            break;
        case GlyphKind::Square: s.rect(0.1, 0.1, 0.9, 0.9); break;
        case GlyphKind::Frame: {
            const double t = 0.15 * stroke;
            s.rect(0.05, 0.05, 0.95, 0.95);
            s.rect(0.05 + t, 0.05 + t, 0.95 - t, 0.95 - t, -1.0);
            break;
        }
        case GlyphKind::Triangle: s.polys.push_back({{{0.5, 0.08}, {0.95, 0.9}, {0.05, 0.9}}, 1.0}); break;
        case GlyphKind::Diamond:
            s.polys.push_back({{{0.5, 0.03}, {0.97, 0.5}, {0.5, 0.97}, {0.03, 0.5}}, 1.0});
            break;
        case GlyphKind::HBar: {
            const double w = 0.22 * stroke;
            s.rect(0.1, 0.05, 0.1 + w, 0.95);
            s.rect(0.9 - w, 0.05, 0.9, 0.95);
            s.rect(0.1 + w, 0.5 - w / 2, 0.9 - w, 0.5 + w / 2);
            break;
        }
        case GlyphKind::Checker:
            s.rect(0.0, 0.0, 0.5, 0.5);
            s.rect(0.5, 0.5, 1.0, 1.0);
            break;
    }
    return s;
}

std::pair<std::size_t, std::size_t> pair_members(std::size_t class_id) {
    const std::size_t i = class_id - kBaseGlyphs;
    const std::size_t a = i % kBaseGlyphs;
    return {a, (a + 1 + i / kBaseGlyphs) % kBaseGlyphs};
}

Shape2D glyph_shape(std::size_t class_id, const GlyphStyle& style) {
    if (class_id >= kMaxGlyphClasses)
        throw std::out_of_range("render_glyph: unknown glyph class " + std::to_string(class_id));
    Shape2D shape;
    if (class_id < kBaseGlyphs) {
        shape = base_shape(static_cast<GlyphKind>(class_id), style.stroke);
    } else {
        const auto [a, b] = pair_members(class_id);
        Shape2D left = base_shape(static_cast<GlyphKind>(a), style.stroke);
        Shape2D right = base_shape(static_cast<GlyphKind>(b), style.stroke);
        left.transform({0.025, 0.275}, 0.45);
        right.transform({0.525, 0.275}, 0.45);
        shape.append(left);
        shape.append(right);
    }
    const double e = std::clamp(style.extent, 0.05, 1.0);
    shape.transform({0.5 * (1.0 - e), 0.5 * (1.0 - e)}, e);
    return shape;
}

constexpr const char* kBaseNames[kBaseGlyphs] = {"plus",     "cross",    "disk",   "ring",  "square",
                                                 "frame",    "triangle", "diamond", "h-bar", "checker"};

}  // namespace

std::string glyph_name(std::size_t class_id) {
    if (class_id < kBaseGlyphs) return kBaseNames[class_id];
    if (class_id < kMaxGlyphClasses) {
        const auto [a, b] = pair_members(class_id);
        return std::string(kBaseNames[a]) + "+" + kBaseNames[b];
    }
    throw std::out_of_range("glyph_name: unknown glyph class " + std::to_string(class_id));
}

GlyphStyle GlyphStyle::jittered(std::uint64_t seed) {
    SplitMix64 rng(seed);
    GlyphStyle s;
    s.stroke = rng.uniform(0.8, 1.2);
    s.extent = rng.uniform(0.85, 1.0);
    return s;
}

Tensor render_glyph(std::size_t class_id, std::size_t size, const GlyphStyle& style) {
    if (size < 2) throw std::invalid_argument("render_glyph: size must be >= 2");
    Shape2D shape = glyph_shape(class_id, style);
    shape.transform({0.0, 0.0}, static_cast<double>(size));
    Tensor out({1, size, size});
    const double n = static_cast<double>(size);

    auto visit = [&](double bx0, double by0, double bx1, double by1, auto&& area) {
        const auto x_lo = static_cast<std::size_t>(std::clamp(std::floor(bx0), 0.0, n));
        const auto x_hi = static_cast<std::size_t>(std::clamp(std::ceil(bx1), 0.0, n));
        const auto y_lo = static_cast<std::size_t>(std::clamp(std::floor(by0), 0.0, n));
        const auto y_hi = static_cast<std::size_t>(std::clamp(std::ceil(by1), 0.0, n));
        for (std::size_t y = y_lo; y < y_hi; ++y)
            for (std::size_t x = x_lo; x < x_hi; ++x)
                out[y * size + x] += area(double(x), double(y), double(x + 1), double(y + 1));
    };
    for (const auto& p : shape.polys) {
        double bx0 = 1e300, by0 = 1e300, bx1 = -1e300, by1 = -1e300;
        for (const auto& v : p.pts) {
            bx0 = std::min(bx0, v.x), bx1 = std::max(bx1, v.x);
            by0 = std::min(by0, v.y), by1 = std::max(by1, v.y);
        }
        visit(bx0, by0, bx1, by1, [&](double x0, double y0, double x1, double y1) {
            return p.sign * polygon_rect_area(p.pts, x0, y0, x1, y1);
        });
    }
    for (const auto& d : shape.disks)
        visit(d.c.x - d.r, d.c.y - d.r, d.c.x + d.r, d.c.y + d.r, [&](double x0, double y0, double x1, double y1) {
            return d.sign * disk_rect_area(d, x0, y0, x1, y1);
        });
    for (auto& v : out.values()) v = std::clamp(v, 0.0, 1.0);
    return out;
}

Tensor area_downscale(const Tensor& image, std::size_t factor) {
    require_rank(image, 3, "area_downscale");
    if (factor == 0 || image.dim(1) % factor != 0 || image.dim(2) % factor != 0)
        throw ShapeError("area_downscale: extent " + shape_string(image.shape()) + " not divisible by " +
                         std::to_string(factor));
    const std::size_t C = image.dim(0), H = image.dim(1) / factor, W = image.dim(2) / factor;
    Tensor out({C, H, W});
    const double norm = 1.0 / static_cast<double>(factor * factor);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < H * factor; ++y)
            for (std::size_t x = 0; x < W * factor; ++x) out.at(c, y / factor, x / factor) += image.at(c, y, x) * norm;
    return out;
}

}  // namespace sconv
