#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "bami/error.hpp"
#include "bami/geometry.hpp"
#include "bami/rng.hpp"

using namespace bami;

namespace {

// Independent per-pixel IoU: walk the bounding region and count membership.
double iou_pixel_oracle(const BBox& a, const BBox& b) {
    const int x1 = std::min(a.x1, b.x1);
    const int y1 = std::min(a.y1, b.y1);
    const int x2 = std::max(a.x2, b.x2);
    const int y2 = std::max(a.y2, b.y2);
    long long inter = 0;
    long long uni = 0;
    for (int y = y1; y <= y2; ++y) {
        for (int x = x1; x <= x2; ++x) {
            const bool in_a = contains(a, Point{x, y});
            const bool in_b = contains(b, Point{x, y});
            if (in_a && in_b) ++inter;
            if (in_a || in_b) ++uni;
        }
    }
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// Brute-force window placement: per axis, scan every valid origin and keep
// the one whose window center lands nearest the focus center.
int best_origin_1d(int parent, int size, int focus_center) {
    int best = 0;
    long long best_err = -1;
    for (int o = 0; o + size <= parent; ++o) {
        const long long err = std::llabs(static_cast<long long>(o + size / 2) - focus_center);
        if (best_err < 0 || err < best_err) {
            best_err = err;
            best = o;
        }
    }
    return best;
}

BBox random_box(rng::Engine& rng, int max_coord) {
    const int x1 = static_cast<int>(rng.below(max_coord));
    const int y1 = static_cast<int>(rng.below(max_coord));
    const int x2 = x1 + static_cast<int>(rng.below(max_coord - x1));
    const int y2 = y1 + static_cast<int>(rng.below(max_coord - y1));
    return BBox{x1, y1, x2, y2};
}

} // namespace

TEST_CASE("center: midpoint with truncation") {
    CHECK(center(BBox{10, 20, 30, 40}) == Point{20, 30});
    CHECK(center(BBox{0, 0, 0, 0}) == Point{0, 0});

    // Rational oracle for the 7.5 case: 2*c <= x1+x2 < 2*(c+1).
    const BBox b{5, 5, 10, 10};
    const Point c = center(b);
    CHECK(2 * c.x <= b.x1 + b.x2);
    CHECK(b.x1 + b.x2 < 2 * (c.x + 1));
    CHECK(c == Point{7, 7});
}

TEST_CASE("contains: inclusive borders") {
    const BBox b{15, 25, 35, 45};
    CHECK(contains(b, Point{20, 30}));
    CHECK(contains(b, Point{15, 25}));
    CHECK_FALSE(contains(b, Point{36, 30}));
    CHECK(contains(b, Point{35, 45}));
}

TEST_CASE("contains(b, center(b)) holds for random boxes") {
    rng::Engine rng(41);
    for (int i = 0; i < 500; ++i) {
        const BBox b = random_box(rng, 4000);
        CHECK(contains(b, center(b)));
    }
}

TEST_CASE("crop_window: centered, clamped, derived case") {
    const CropFrame a = crop_window(ImageDims{1000, 1000}, BBox{490, 490, 510, 510}, 0.5);
    CHECK(a.origin == Point{250, 250});
    CHECK(a.dims == ImageDims{500, 500});

    const CropFrame b = crop_window(ImageDims{1000, 1000}, BBox{0, 0, 10, 10}, 0.5);
    CHECK(b.origin == Point{0, 0});
    CHECK(b.dims == ImageDims{500, 500});

    const CropFrame c = crop_window(ImageDims{1920, 1080}, BBox{1900, 1060, 1910, 1070}, 0.6);
    CHECK(c.dims == ImageDims{1152, 648});
    CHECK(c.origin == Point{768, 432});
    const Point fc = center(BBox{1900, 1060, 1910, 1070});
    CHECK(c.origin.x == best_origin_1d(1920, 1152, fc.x));
    CHECK(c.origin.y == best_origin_1d(1080, 648, fc.y));
}

TEST_CASE("crop_window matches the placement oracle on random inputs") {
    rng::Engine rng(7);
    for (int i = 0; i < 300; ++i) {
        const int pw = 50 + static_cast<int>(rng.below(2000));
        const int ph = 50 + static_cast<int>(rng.below(2000));
        const int fx = static_cast<int>(rng.below(pw));
        const int fy = static_cast<int>(rng.below(ph));
        const BBox focus{fx, fy, std::min(pw - 1, fx + static_cast<int>(rng.below(40))),
                         std::min(ph - 1, fy + static_cast<int>(rng.below(40)))};
        const double lambda = 0.05 + 0.95 * rng.uniform01();
        const CropFrame f = crop_window(ImageDims{pw, ph}, focus, lambda);

        // Window invariants.
        CHECK(f.dims.width >= 1);
        CHECK(f.dims.height >= 1);
        CHECK(f.origin.x >= 0);
        CHECK(f.origin.y >= 0);
        CHECK(f.origin.x + f.dims.width <= pw);
        CHECK(f.origin.y + f.dims.height <= ph);

        const Point fc = center(focus);
        CHECK(f.origin.x == best_origin_1d(pw, f.dims.width, fc.x));
        CHECK(f.origin.y == best_origin_1d(ph, f.dims.height, fc.y));
    }
}

TEST_CASE("crop_window: nested windows shrink by lambda^2 up to rounding") {
    rng::Engine rng(11);
    for (int i = 0; i < 200; ++i) {
        const int pw = 100 + static_cast<int>(rng.below(3000));
        const int ph = 100 + static_cast<int>(rng.below(3000));
        const double l1 = 0.3 + 0.7 * rng.uniform01();
        const double l2 = 0.3 + 0.7 * rng.uniform01();
        const int fx = static_cast<int>(rng.below(pw));
        const int fy = static_cast<int>(rng.below(ph));
        const BBox focus{fx, fy, fx, fy};

        const CropFrame f1 = crop_window(ImageDims{pw, ph}, focus, l1);
        const CropFrame f2 = crop_window(f1.dims, BBox{0, 0, 0, 0}, l2);
        const double bound = (l1 * pw * l2 * ph) + (l1 * pw + l2 * ph) + 1.0;
        CHECK(static_cast<double>(f2.dims.area()) <= bound);
    }
}

TEST_CASE("to_global / to_local: examples and errors") {
    TransformStack one(ImageDims{1000, 1000});
    one.push(CropFrame{Point{100, 200}, ImageDims{300, 300}});
    CHECK(to_global(one, Point{10, 20}) == Point{110, 220});

    TransformStack empty(ImageDims{100, 100});
    CHECK(to_global(empty, Point{5, 5}) == Point{5, 5});

    TransformStack two(ImageDims{1000, 1000});
    two.push(CropFrame{Point{100, 200}, ImageDims{500, 500}});
    two.push(CropFrame{Point{50, 60}, ImageDims{100, 100}});
    CHECK(to_global(two, Point{1, 2}) == Point{151, 262});

    CHECK_THROWS_AS(to_global(two, Point{100, 50}), Error);
    CHECK_THROWS_AS(to_global(two, Point{-1, 0}), Error);
}

TEST_CASE("to_global_box: examples") {
    TransformStack one(ImageDims{1000, 1000});
    one.push(CropFrame{Point{100, 200}, ImageDims{300, 300}});
    CHECK(to_global_box(one, BBox{0, 0, 10, 10}) == BBox{100, 200, 110, 210});

    TransformStack empty(ImageDims{50, 50});
    CHECK(to_global_box(empty, BBox{1, 2, 3, 4}) == BBox{1, 2, 3, 4});

    TransformStack two(ImageDims{100, 100});
    two.push(CropFrame{Point{7, 9}, ImageDims{50, 50}});
    two.push(CropFrame{Point{3, 4}, ImageDims{20, 20}});
    CHECK(to_global_box(two, BBox{1, 1, 2, 2}) == BBox{11, 14, 12, 15});
}

TEST_CASE("round-trip: to_local(to_global(p)) == p over random stacks") {
    rng::Engine rng(97);
    for (int i = 0; i < 1000; ++i) {
        ImageDims dims{200 + static_cast<int>(rng.below(2000)),
                       200 + static_cast<int>(rng.below(2000))};
        TransformStack stack(dims);
        const int depth = static_cast<int>(rng.below(4));
        ImageDims cur = dims;
        for (int d = 0; d < depth && cur.width > 2 && cur.height > 2; ++d) {
            const int w = 1 + static_cast<int>(rng.below(cur.width - 1));
            const int h = 1 + static_cast<int>(rng.below(cur.height - 1));
            const int ox = static_cast<int>(rng.below(cur.width - w + 1));
            const int oy = static_cast<int>(rng.below(cur.height - h + 1));
            stack.push(CropFrame{Point{ox, oy}, ImageDims{w, h}});
            cur = ImageDims{w, h};
        }
        const Point p{static_cast<int>(rng.below(cur.width)),
                      static_cast<int>(rng.below(cur.height))};
        const Point g = to_global(stack, p);
        CHECK(to_local(stack, g) == p);
        CHECK(g.x < dims.width);
        CHECK(g.y < dims.height);
    }
}

TEST_CASE("iou: examples against the per-pixel oracle") {
    CHECK(iou(BBox{0, 0, 9, 9}, BBox{0, 0, 9, 9}) == doctest::Approx(1.0));
    CHECK(iou(BBox{0, 0, 9, 9}, BBox{20, 20, 29, 29}) == doctest::Approx(0.0));

    const BBox a{0, 0, 9, 9};
    const BBox b{5, 0, 14, 9};
    CHECK(iou(a, b) == doctest::Approx(1.0 / 3.0));
    CHECK(iou(a, b) == doctest::Approx(iou_pixel_oracle(a, b)));
}

TEST_CASE("iou: symmetric and matches the oracle on random boxes") {
    rng::Engine rng(5);
    for (int i = 0; i < 100; ++i) {
        const BBox a = random_box(rng, 60);
        const BBox b = random_box(rng, 60);
        CHECK(iou(a, b) == doctest::Approx(iou(b, a)));
        CHECK(iou(a, a) == doctest::Approx(1.0));
        CHECK(iou(a, b) == doctest::Approx(iou_pixel_oracle(a, b)));
    }
}

TEST_CASE("TransformStack rejects frames that do not fit") {
    TransformStack stack(ImageDims{100, 100});
    CHECK_THROWS_AS(stack.push(CropFrame{Point{90, 90}, ImageDims{20, 20}}), Error);
    CHECK_THROWS_AS(stack.push(CropFrame{Point{0, 0}, ImageDims{0, 10}}), Error);
    stack.push(CropFrame{Point{10, 10}, ImageDims{90, 90}});
    CHECK(stack.depth() == 1);
}
