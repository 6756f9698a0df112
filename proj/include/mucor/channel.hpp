#ifndef MUCOR_CHANNEL_HPP
#define MUCOR_CHANNEL_HPP

#include <cmath>
#include <stdexcept>
#include <vector>

#include "mucor/fields.hpp"
#include "mucor/grid.hpp"

namespace mucor {

/// One channel stroke: the set of points within width/2 of the segment
/// (x0,y0)-(x1,y1). Degenerate segments (x0==x1, y0==y1) give a disk.
struct ChannelStroke {
    double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;
    double width = 0.0;
};

/// Synthetic channelized permeability description.
/// Cells whose centers fall inside any stroke take the channel value,
/// everything else the background value.
struct ChannelSpec {
    double background = 1.0;
    double channel = 1.0;
    std::vector<ChannelStroke> strokes;
    std::uint64_t seed = 0;  // reserved for randomized variants; unused by fixed strokes

    void validate() const {
        if (!(background > 0.0)) throw std::invalid_argument("ChannelSpec: background must be > 0");
        if (channel < background)
            throw std::invalid_argument("ChannelSpec: channel value must be >= background");
        for (const auto& s : strokes) {
            const bool inside = s.x0 >= 0.0 && s.x0 <= 1.0 && s.x1 >= 0.0 && s.x1 <= 1.0 &&
                                s.y0 >= 0.0 && s.y0 <= 1.0 && s.y1 >= 0.0 && s.y1 <= 1.0;
            if (!inside) throw std::invalid_argument("ChannelSpec: stroke endpoint outside domain");
            if (!(s.width > 0.0)) throw std::invalid_argument("ChannelSpec: stroke width must be > 0");
        }
    }
};

namespace detail {
inline double dist2_point_segment(double px, double py, const ChannelStroke& s) {
    const double dx = s.x1 - s.x0, dy = s.y1 - s.y0;
    const double len2 = dx * dx + dy * dy;
    double t = 0.0;
    if (len2 > 0.0) {
        t = ((px - s.x0) * dx + (py - s.y0) * dy) / len2;
        t = std::fmin(1.0, std::fmax(0.0, t));
    }
    const double qx = s.x0 + t * dx, qy = s.y0 + t * dy;
    return (px - qx) * (px - qx) + (py - qy) * (py - qy);
}
}  // namespace detail

/// Rasterize a channel spec onto the fine grid by cell-center membership.
/// Pure function of (spec, grid): no anti-aliasing, no randomness for
/// fixed strokes, so repeated calls are bit-identical.
[[nodiscard]] inline ScalarCellField generate_channel_field(const ChannelSpec& spec,
                                                            const StructuredGrid& grid) {
    spec.validate();
    std::vector<double> v(static_cast<size_t>(grid.cell_count()), spec.background);
    for (int j = 0; j < grid.ny; ++j) {
        for (int i = 0; i < grid.nx; ++i) {
            const double cx = (i + 0.5) * grid.hx;
            const double cy = (j + 0.5) * grid.hy;
            for (const auto& s : spec.strokes) {
                if (detail::dist2_point_segment(cx, cy, s) <= 0.25 * s.width * s.width) {
                    v[static_cast<size_t>(grid.cell_id(i, j))] = spec.channel;
                    break;
                }
            }
        }
    }
    return ScalarCellField(grid, std::move(v));
}

}  // namespace mucor

#endif  // MUCOR_CHANNEL_HPP
