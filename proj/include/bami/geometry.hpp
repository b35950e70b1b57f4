#pragma once

#include <optional>
#include <vector>

namespace bami {

// Pixel geometry uses inclusive integer coordinates: a box spans columns
// x1..x2 and rows y1..y2, so its pixel width is x2-x1+1.

struct Point {
    int x = 0;
    int y = 0;

    friend bool operator==(const Point&, const Point&) = default;
};

struct ImageDims {
    int width = 0;
    int height = 0;

    bool valid() const { return width >= 1 && height >= 1; }
    long long area() const { return 1LL * width * height; }

    friend bool operator==(const ImageDims&, const ImageDims&) = default;
};

struct BBox {
    int x1 = 0;
    int y1 = 0;
    int x2 = 0;
    int y2 = 0;

    bool valid() const { return x1 >= 0 && y1 >= 0 && x1 <= x2 && y1 <= y2; }
    int width() const { return x2 - x1 + 1; }
    int height() const { return y2 - y1 + 1; }
    long long area() const { return 1LL * width() * height(); }

    friend bool operator==(const BBox&, const BBox&) = default;
};

// One crop step: where the window sits in its parent image, and how big it is.
struct CropFrame {
    Point origin;
    ImageDims dims;

    friend bool operator==(const CropFrame&, const CropFrame&) = default;
};

// Ordered crop frames from the base image inward. Depth equals the number of
// completed crop iterations; each frame must fit inside the previous one.
class TransformStack {
public:
    TransformStack() = default;
    explicit TransformStack(ImageDims base) : base_(base) {}

    const ImageDims& base() const { return base_; }
    const std::vector<CropFrame>& frames() const { return frames_; }
    int depth() const { return static_cast<int>(frames_.size()); }
    bool empty() const { return frames_.empty(); }

    // Dimensions of the innermost frame (the base image when no crops yet).
    ImageDims current_dims() const { return frames_.empty() ? base_ : frames_.back().dims; }

    // Throws ErrorKind::internal if the frame does not fit the current dims.
    void push(const CropFrame& frame);

private:
    ImageDims base_;
    std::vector<CropFrame> frames_;
};

Point center(const BBox& b);
bool contains(const BBox& b, Point p);

// Window of size round(lambda * parent) centered on the focus box, translated
// (never shrunk) to stay inside the parent.
CropFrame crop_window(ImageDims parent, const BBox& focus, double lambda);

// Innermost-frame point -> base-image point. Throws ErrorKind::out_of_frame
// when p lies outside the innermost frame.
Point to_global(const TransformStack& stack, Point p);

// Base-image point -> innermost-frame point; inverse of to_global.
Point to_local(const TransformStack& stack, Point p);

BBox to_global_box(const TransformStack& stack, const BBox& b);

double iou(const BBox& a, const BBox& b);

std::optional<BBox> intersect(const BBox& a, const BBox& b);

// Clips to the image; nullopt when the box lies entirely outside.
std::optional<BBox> clip_to(const BBox& b, ImageDims dims);

} // namespace bami
