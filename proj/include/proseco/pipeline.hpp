#pragma once

#include <string>
#include <vector>

#include "proseco/box.hpp"
#include "proseco/config.hpp"
#include "proseco/image.hpp"
#include "proseco/rng.hpp"

namespace proseco {

// Geometric ops applied to a weak view, with enough detail to replay the view
// bitwise from the original image and to transport normalized boxes into the
// view's frame.
struct AugOp {
    enum class Kind { flip, resize, crop };
    Kind kind;
    int in_h = 0, in_w = 0;
    int out_h = 0, out_w = 0;        // resize target
    int x0 = 0, y0 = 0, w = 0, h = 0;  // crop rectangle in input pixels
};

struct AugRecord {
    std::vector<AugOp> ops;
};

/// Pixel constants of the weak-view distribution, scaled by input_size/800 so
/// the same distribution shape applies at desk resolutions.
struct WeakAugParams {
    std::vector<int> scale_edges;      // final short-edge choices
    std::vector<int> pre_crop_edges;   // short edge before the crop branch
    int crop_min = 0, crop_max = 0;

    static WeakAugParams make(ImageScale scale, int input_size);
};

/// Flip / resize / crop pipeline: flip p=0.5, then either a plain resize
/// (p=0.5) or resize -> random size crop -> resize. The record captures every
/// drawn parameter.
std::pair<ImageTensor, AugRecord> weak_augment(const ImageTensor& img,
                                               const WeakAugParams& params, Rng& rng);

/// Replays a record on the original image; equals the recorded view bitwise.
ImageTensor apply_record(const ImageTensor& img, const AugRecord& rec);

/// Photometric stack: color jitter p=0.8 (brightness/contrast/saturation 0.4,
/// hue 0.1), grayscale p=0.2, Gaussian blur p=0.5 with log-uniform sigma in
/// [0.1, 2.0]. Never changes geometry.
ImageTensor strong_augment(const ImageTensor& img, Rng& rng);

/// Maps boxes through the geometric record: flips mirror cx, resizes are
/// identity in normalized coordinates, crops re-normalize and drop boxes whose
/// clipped area falls under 10% of the pre-clip area.
BoxSet transport_boxes(const BoxSet& boxes, const AugRecord& rec);

// ---- synthetic scenes --------------------------------------------------------

struct SceneShape {
    enum class Kind { rectangle, ellipse, triangle };
    Kind kind;
    float color[3];
    BoxN bbox;  // tight ground truth (diagnostics only; training never sees it)
};

struct SceneSpec {
    float background[3] = {0, 0, 0};
    std::vector<SceneShape> shapes;

    std::string to_json() const;
};

struct SceneParams {
    int size = 64;
    int min_shapes = 1, max_shapes = 5;
    float min_extent = 0.18f, max_extent = 0.45f;
    double max_overlap_iou = 0.1;  // placement rejection threshold
};

/// Renders back-to-front with shape colors at least 0.2 Linf from background.
std::pair<ImageTensor, SceneSpec> synth_scene(Rng& rng, const SceneParams& params);

}  // namespace proseco
