#include "tw/flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace tw {

FlowField FlowField::sized(int width, int height) {
    FlowField f;
    f.width = width;
    f.height = height;
    const size_t n = static_cast<size_t>(width) * height;
    f.du.assign(n, 0.0f);
    f.dv.assign(n, 0.0f);
    f.valid = Mask::filled(width, height, 0);
    return f;
}

Reprojection reproject_pixel(int u, int v, double z, bool at_infinity, const Pose& dst_from_src,
                             const CameraIntrinsics& K) {
    Eigen::Vector3d q;
    if (at_infinity) {
        q = dst_from_src.rotation * unproject(u, v, 1.0, K);
    } else {
        q = dst_from_src.apply(unproject(u, v, z, K));
    }
    Reprojection out;
    const ProjectedPoint p = project(q, K);
    out.u = p.u;
    out.v = p.v;
    out.z = p.z;
    out.in_front = p.valid;
    return out;
}

FlowField compute_flow(const DepthMap& src_depth, const Pose& src_pose, const DepthMap& dst_depth,
                       const Pose& dst_pose, const CameraIntrinsics& K, const FlowOptions& opts) {
    if (src_depth.width != K.width || src_depth.height != K.height ||
        dst_depth.width != K.width || dst_depth.height != K.height) {
        throw std::invalid_argument("depth maps and intrinsics disagree on the image size");
    }
    src_pose.validate();
    dst_pose.validate();

    FlowField flow = FlowField::sized(K.width, K.height);

    // Maps source-camera coordinates straight into the destination camera.
    const Pose rel = compose(dst_pose.inverse(), src_pose);
    const bool pure_rotation = rel.translation.norm() <= 1e-12;
    const double dst_far_disparity = 1.0 / dst_depth.far_clip;

    for (int v = 0; v < K.height; ++v) {
        for (int u = 0; u < K.width; ++u) {
            const size_t i = flow.index(u, v);
            const bool src_sky = src_depth.is_far_sentinel(u, v);

            // Sky is a point at infinity: translation cannot move it, only
            // the relative rotation of the viewing direction matters.
            const Reprojection p =
                reproject_pixel(u, v, src_depth.at(u, v), src_sky, rel, K);
            if (!p.in_front) continue;  // behind the destination camera

            flow.du[i] = static_cast<float>(p.u - u);
            flow.dv[i] = static_cast<float>(p.v - v);

            const int un = static_cast<int>(std::lround(p.u));
            const int vn = static_cast<int>(std::lround(p.v));
            if (un < 0 || un >= K.width || vn < 0 || vn >= K.height) continue;

            if (pure_rotation) {
                // Same camera center, same ray: the destination sees exactly
                // the surface the source saw, wherever it lands in-frame.
                flow.valid.set(u, v, 1);
                continue;
            }
            if (src_sky) {
                flow.valid.set(u, v, dst_depth.is_far_sentinel(un, vn) ? 1 : 0);
                continue;
            }

            const double d_re = 1.0 / p.z;
            const double tol_d = opts.depth_tolerance_m * d_re * d_re;

            // Disparity is affine in pixel coordinates across a planar
            // surface, so a 2x2 cell bounds the surface's disparity at the
            // subpixel landing spot up to its own span. A span above
            // cell_span_max means the cell straddles a depth jump; there
            // only the nearest sample describes what is actually visible.
            const int x0 = std::clamp(static_cast<int>(std::floor(p.u)), 0, K.width - 1);
            const int y0 = std::clamp(static_cast<int>(std::floor(p.v)), 0, K.height - 1);
            double dmin = std::numeric_limits<double>::infinity();
            double dmax = -std::numeric_limits<double>::infinity();
            for (int dy = 0; dy <= 1; ++dy) {
                for (int dx = 0; dx <= 1; ++dx) {
                    const int x = x0 + dx;
                    const int y = y0 + dy;
                    if (x >= K.width || y >= K.height) continue;
                    const double d = dst_depth.is_far_sentinel(x, y)
                                         ? dst_far_disparity
                                         : 1.0 / dst_depth.at(x, y);
                    dmin = std::min(dmin, d);
                    dmax = std::max(dmax, d);
                }
            }
            const double span = dmax - dmin;
            bool visible;
            if (span <= opts.cell_span_max) {
                visible = d_re >= dmin - span - tol_d && d_re <= dmax + span + tol_d;
            } else {
                const double dn = dst_depth.is_far_sentinel(un, vn) ? dst_far_disparity
                                                                   : 1.0 / dst_depth.at(un, vn);
                visible = std::abs(d_re - dn) <= tol_d;
            }
            flow.valid.set(u, v, visible ? 1 : 0);
        }
    }
    return flow;
}

}  // namespace tw
