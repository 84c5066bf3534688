#include "gbrs/network_input.hpp"

#include "gbrs/errors.hpp"
#include "gbrs/interaction.hpp"

#include <algorithm>

namespace gbrs {

Tensor build_network_input(const NetworkSpec& spec, const Tensor& image, const Tensor* trimap,
                           std::span<const Click> clicks) {
    if (image.rank() != 3 || image.dim(0) != 3) {
        throw DimensionError("image must be [3,H,W], got " + shape_to_string(image.shape()));
    }
    const std::size_t h = image.dim(1), w = image.dim(2), hw = h * w;
    if (h % 8 != 0 || w % 8 != 0) {
        throw DimensionError("image height and width must be multiples of 8, got " + std::to_string(h) + "x" +
                             std::to_string(w));
    }
    Tensor input(Shape{1, spec.in_channels, h, w});
    std::copy(image.data().begin(), image.data().end(), input.data().begin());
    double* extra = input.data().data() + 3 * hw;
    switch (spec.task) {
    case Task::interactive_seg: {
        const Tensor maps = encode_interaction_maps(clicks, h, w, spec.interaction_clip);
        std::copy(maps.data().begin(), maps.data().end(), extra);
        break;
    }
    case Task::matting:
        if (!trimap || trimap->numel() != hw) throw InputError("matting input needs an HxW trimap");
        std::copy(trimap->data().begin(), trimap->data().end(), extra);
        break;
    case Task::semantic_seg:
    case Task::depth:
        break;
    }
    return input;
}

} // namespace gbrs
