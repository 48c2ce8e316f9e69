#pragma once

#include <cmath>
#include <optional>
#include <vector>

namespace iamp {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double k) const { return {x * k, y * k}; }
    double norm() const { return std::hypot(x, y); }
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }

// Result of projecting a point onto a polyline. `d` is the signed lateral
// offset, positive to the left of the travel direction; `dist` is the plain
// euclidean distance to the nearest polyline point (used for gating, it can
// exceed |d| when the projection clamps to a segment end).
struct Projection {
    double s = 0.0;
    double d = 0.0;
    double dist = 0.0;
    std::size_t segment = 0;
};

class Polyline {
public:
    Polyline() = default;
    explicit Polyline(std::vector<Vec2> pts);

    const std::vector<Vec2>& points() const { return pts_; }
    std::size_t size() const { return pts_.size(); }
    double length() const { return cum_.empty() ? 0.0 : cum_.back(); }
    double cum_at(std::size_t i) const { return cum_[i]; }

    Vec2 point_at(double s) const;
    Vec2 tangent_at(double s) const;  // unit vector
    double heading_at(double s) const;

    // Nearest point; ties at polyline corners resolve to the segment with
    // the smaller index.
    Projection project(Vec2 p) const;
    Vec2 unproject(double s, double d) const;

    // Uniform arc-length resampling.
    Polyline resampled(double step) const;
    Polyline resampled_count(std::size_t n) const;

    // Append another polyline, dropping its first point when it coincides
    // with our last (joint between consecutive lanelets).
    void append(const Polyline& other, double joint_eps = 1e-6);

private:
    void rebuild_cum();

    std::vector<Vec2> pts_;
    std::vector<double> cum_;
};

// Signed curvature from three consecutive points (circumscribed circle);
// positive for a left turn. Returns 0 for collinear/degenerate triples.
double curvature_three_point(Vec2 a, Vec2 b, Vec2 c);

// Signed curvature sampled at every vertex of the polyline (endpoints 0).
std::vector<double> sample_curvature(const Polyline& line);

// Proper intersection of segments [p1,p2] and [q1,q2]. Returns parameters
// (t, u) in [0,1] on each segment, or nullopt for parallel/disjoint pairs.
struct SegmentHit {
    double t = 0.0;
    double u = 0.0;
    Vec2 point;
};
std::optional<SegmentHit> segment_intersection(Vec2 p1, Vec2 p2, Vec2 q1, Vec2 q2);

inline double wrap_angle(double a) {
    while (a > M_PI) a -= 2.0 * M_PI;
    while (a < -M_PI) a += 2.0 * M_PI;
    return a;
}

}  // namespace iamp
