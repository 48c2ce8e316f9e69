#include "iamp/geometry.hpp"

#include <algorithm>
#include <cstddef>
#include <limits>

#include "iamp/error.hpp"

namespace iamp {

Polyline::Polyline(std::vector<Vec2> pts) : pts_(std::move(pts)) {
    if (pts_.size() < 2) throw GeometryError("polyline needs at least 2 points");
    rebuild_cum();
}

void Polyline::rebuild_cum() {
    cum_.resize(pts_.size());
    cum_[0] = 0.0;
    for (std::size_t i = 1; i < pts_.size(); ++i) {
        cum_[i] = cum_[i - 1] + (pts_[i] - pts_[i - 1]).norm();
    }
    if (cum_.back() <= 0.0) throw GeometryError("polyline has zero length");
}

Vec2 Polyline::point_at(double s) const {
    if (s <= 0.0) return pts_.front();
    if (s >= length()) return pts_.back();
    auto it = std::upper_bound(cum_.begin(), cum_.end(), s);
    std::size_t i = static_cast<std::size_t>(it - cum_.begin());  // first cum_ > s, i >= 1
    double seg = cum_[i] - cum_[i - 1];
    double t = seg > 0.0 ? (s - cum_[i - 1]) / seg : 0.0;
    return pts_[i - 1] + (pts_[i] - pts_[i - 1]) * t;
}

Vec2 Polyline::tangent_at(double s) const {
    std::size_t i;
    if (s <= 0.0) {
        i = 1;
    } else if (s >= length()) {
        i = pts_.size() - 1;
    } else {
        auto it = std::upper_bound(cum_.begin(), cum_.end(), s);
        i = static_cast<std::size_t>(it - cum_.begin());
    }
    // skip zero-length segments
    while (i + 1 < pts_.size() && (pts_[i] - pts_[i - 1]).norm() == 0.0) ++i;
    Vec2 d = pts_[i] - pts_[i - 1];
    double n = d.norm();
    if (n == 0.0) throw GeometryError("degenerate polyline segment");
    return d * (1.0 / n);
}

double Polyline::heading_at(double s) const {
    Vec2 t = tangent_at(s);
    return std::atan2(t.y, t.x);
}

Projection Polyline::project(Vec2 p) const {
    Projection best;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < pts_.size(); ++i) {
        Vec2 a = pts_[i], b = pts_[i + 1];
        Vec2 ab = b - a;
        double len2 = dot(ab, ab);
        double t = len2 > 0.0 ? std::clamp(dot(p - a, ab) / len2, 0.0, 1.0) : 0.0;
        Vec2 q = a + ab * t;
        double d2 = dot(p - q, p - q);
        if (d2 < best_d2 - 1e-12) {  // strict improvement keeps the smaller segment on ties
            best_d2 = d2;
            best.segment = i;
            best.s = cum_[i] + t * std::sqrt(len2);
            best.dist = std::sqrt(d2);
            // left of travel direction is positive
            double side = cross(ab, p - a);
            best.d = (side >= 0.0 ? 1.0 : -1.0) * best.dist;
        }
    }
    return best;
}

Vec2 Polyline::unproject(double s, double d) const {
    Vec2 base = point_at(s);
    Vec2 t = tangent_at(s);
    Vec2 n{-t.y, t.x};  // left normal
    return base + n * d;
}

Polyline Polyline::resampled(double step) const {
    if (step <= 0.0) throw GeometryError("resample step must be positive");
    std::size_t n = static_cast<std::size_t>(std::ceil(length() / step)) + 1;
    return resampled_count(std::max<std::size_t>(n, 2));
}

Polyline Polyline::resampled_count(std::size_t n) const {
    if (n < 2) throw GeometryError("resample needs at least 2 points");
    std::vector<Vec2> out;
    out.reserve(n);
    double L = length();
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(point_at(L * static_cast<double>(i) / static_cast<double>(n - 1)));
    }
    return Polyline(std::move(out));
}

void Polyline::append(const Polyline& other, double joint_eps) {
    std::size_t start = 0;
    if (!pts_.empty() && (other.pts_.front() - pts_.back()).norm() <= joint_eps) start = 1;
    for (std::size_t i = start; i < other.pts_.size(); ++i) pts_.push_back(other.pts_[i]);
    rebuild_cum();
}

double curvature_three_point(Vec2 a, Vec2 b, Vec2 c) {
    Vec2 ab = b - a, bc = c - b, ac = c - a;
    double area2 = cross(ab, ac);  // 2 * signed triangle area
    double denom = ab.norm() * bc.norm() * ac.norm();
    if (denom < 1e-12) return 0.0;
    return 2.0 * area2 / denom;
}

std::vector<double> sample_curvature(const Polyline& line) {
    const auto& p = line.points();
    std::vector<double> k(p.size(), 0.0);
    for (std::size_t i = 1; i + 1 < p.size(); ++i) {
        k[i] = curvature_three_point(p[i - 1], p[i], p[i + 1]);
    }
    return k;
}

std::optional<SegmentHit> segment_intersection(Vec2 p1, Vec2 p2, Vec2 q1, Vec2 q2) {
    Vec2 r = p2 - p1, s = q2 - q1;
    double denom = cross(r, s);
    if (std::abs(denom) < 1e-12) return std::nullopt;  // parallel or degenerate
    Vec2 qp = q1 - p1;
    double t = cross(qp, s) / denom;
    double u = cross(qp, r) / denom;
    if (t < 0.0 || t > 1.0 || u < 0.0 || u > 1.0) return std::nullopt;
    return SegmentHit{t, u, p1 + r * t};
}

}  // namespace iamp
