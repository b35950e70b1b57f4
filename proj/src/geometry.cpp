#include "bami/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bami/error.hpp"

namespace bami {

namespace {

int clamp_int(int v, int lo, int hi) { return std::min(std::max(v, lo), hi); }

void require(bool cond, const char* what) {
    if (!cond) throw Error(ErrorKind::internal, what);
}

} // namespace

void TransformStack::push(const CropFrame& frame) {
    const ImageDims parent = current_dims();
    require(frame.dims.valid(), "crop frame must be at least 1x1");
    require(frame.origin.x >= 0 && frame.origin.y >= 0 &&
                frame.origin.x + frame.dims.width <= parent.width &&
                frame.origin.y + frame.dims.height <= parent.height,
            "crop frame does not fit inside its parent");
    frames_.push_back(frame);
}

Point center(const BBox& b) {
    // Integer sum first, halves truncated toward zero.
    return Point{(b.x1 + b.x2) / 2, (b.y1 + b.y2) / 2};
}

bool contains(const BBox& b, Point p) {
    return p.x >= b.x1 && p.x <= b.x2 && p.y >= b.y1 && p.y <= b.y2;
}

CropFrame crop_window(ImageDims parent, const BBox& focus, double lambda) {
    require(parent.valid(), "crop_window: parent dims invalid");
    require(lambda > 0.0 && lambda <= 1.0, "crop_window: lambda outside (0,1]");

    int w = static_cast<int>(std::llround(lambda * parent.width));
    int h = static_cast<int>(std::llround(lambda * parent.height));
    w = clamp_int(w, 1, parent.width);
    h = clamp_int(h, 1, parent.height);

    const Point c = center(focus);
    const int ox = clamp_int(c.x - w / 2, 0, parent.width - w);
    const int oy = clamp_int(c.y - h / 2, 0, parent.height - h);
    return CropFrame{Point{ox, oy}, ImageDims{w, h}};
}

Point to_global(const TransformStack& stack, Point p) {
    const ImageDims inner = stack.current_dims();
    if (p.x < 0 || p.y < 0 || p.x >= inner.width || p.y >= inner.height) {
        throw Error(ErrorKind::out_of_frame,
                    "point (" + std::to_string(p.x) + "," + std::to_string(p.y) +
                        ") outside innermost frame");
    }
    Point g = p;
    for (auto it = stack.frames().rbegin(); it != stack.frames().rend(); ++it) {
        g.x += it->origin.x;
        g.y += it->origin.y;
    }
    return g;
}

Point to_local(const TransformStack& stack, Point p) {
    Point l = p;
    for (const CropFrame& f : stack.frames()) {
        l.x -= f.origin.x;
        l.y -= f.origin.y;
        if (l.x < 0 || l.y < 0 || l.x >= f.dims.width || l.y >= f.dims.height) {
            throw Error(ErrorKind::out_of_frame, "point leaves the crop window stack");
        }
    }
    return l;
}

BBox to_global_box(const TransformStack& stack, const BBox& b) {
    const Point tl = to_global(stack, Point{b.x1, b.y1});
    const Point br = to_global(stack, Point{b.x2, b.y2});
    return BBox{tl.x, tl.y, br.x, br.y};
}

std::optional<BBox> intersect(const BBox& a, const BBox& b) {
    const int x1 = std::max(a.x1, b.x1);
    const int y1 = std::max(a.y1, b.y1);
    const int x2 = std::min(a.x2, b.x2);
    const int y2 = std::min(a.y2, b.y2);
    if (x1 > x2 || y1 > y2) return std::nullopt;
    return BBox{x1, y1, x2, y2};
}

std::optional<BBox> clip_to(const BBox& b, ImageDims dims) {
    return intersect(b, BBox{0, 0, dims.width - 1, dims.height - 1});
}

double iou(const BBox& a, const BBox& b) {
    const auto inter = intersect(a, b);
    if (!inter) return 0.0;
    const long long ia = inter->area();
    const long long ua = a.area() + b.area() - ia;
    return static_cast<double>(ia) / static_cast<double>(ua);
}

} // namespace bami

namespace bami {

const char* error_kind_name(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::io: return "io";
        case ErrorKind::decode: return "decode";
        case ErrorKind::parse: return "parse";
        case ErrorKind::answer_unparseable: return "answer_unparseable";
        case ErrorKind::transport: return "transport";
        case ErrorKind::http_status: return "http_status";
        case ErrorKind::no_visible_target: return "no_visible_target";
        case ErrorKind::out_of_frame: return "out_of_frame";
        case ErrorKind::config: return "config";
        case ErrorKind::dataset: return "dataset";
        case ErrorKind::internal: return "internal";
    }
    return "unknown";
}

} // namespace bami
