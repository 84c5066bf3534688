#include "gbrs/interaction.hpp"

#include "gbrs/distance_transform.hpp"
#include "gbrs/errors.hpp"

#include <algorithm>
#include <cmath>

namespace gbrs {

Tensor encode_interaction_maps(std::span<const Click> clicks, std::size_t height, std::size_t width, double clip) {
    if (clip <= 0.0) throw ContractError("interaction map clip must be positive");
    std::vector<std::uint8_t> positive(height * width, 0), negative(height * width, 0);
    bool any_pos = false, any_neg = false;
    for (const auto& c : clicks) {
        if (c.u < 0 || c.v < 0 || static_cast<std::size_t>(c.u) >= height || static_cast<std::size_t>(c.v) >= width) {
            throw InputError("click (" + std::to_string(c.u) + "," + std::to_string(c.v) + ") outside " +
                             std::to_string(height) + "x" + std::to_string(width) + " image");
        }
        const std::size_t idx = static_cast<std::size_t>(c.u) * width + static_cast<std::size_t>(c.v);
        if (c.label > 0) {
            positive[idx] = 1;
            any_pos = true;
        } else {
            negative[idx] = 1;
            any_neg = true;
        }
    }
    Tensor maps(Shape{2, height, width}, 1.0);
    auto fill = [&](const std::vector<std::uint8_t>& seeds, std::size_t channel) {
        const auto sq = squared_distance_to_seeds(seeds, height, width, false);
        double* out = maps.data().data() + channel * height * width;
        for (std::size_t i = 0; i < sq.size(); ++i) out[i] = std::min(std::sqrt(sq[i]), clip) / clip;
    };
    if (any_pos) fill(positive, 0);
    if (any_neg) fill(negative, 1);
    return maps;
}

} // namespace gbrs
