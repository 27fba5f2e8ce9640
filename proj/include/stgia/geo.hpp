#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace stgia {

/// Meters per degree of latitude (and of longitude at the equator).
inline constexpr double kMetersPerDegree = 111320.0;

constexpr double pi() { return 3.141592653589793238462643383279502884; }

inline double deg2rad(double d) { return d * pi() / 180.0; }

/// A latitude/longitude pair in degrees.
struct GeoPoint {
    double lat = 0.0;
    double lon = 0.0;

    bool operator==(const GeoPoint& o) const { return lat == o.lat && lon == o.lon; }
};

inline void validate(const GeoPoint& p) {
    if (!std::isfinite(p.lat) || !std::isfinite(p.lon))
        throw std::invalid_argument("GeoPoint: coordinates must be finite");
    if (p.lat < -90.0 || p.lat > 90.0)
        throw std::invalid_argument("GeoPoint: latitude out of [-90, 90]");
    if (p.lon < -180.0 || p.lon > 180.0)
        throw std::invalid_argument("GeoPoint: longitude out of [-180, 180]");
}

/// A point in the local planar frame, in meters.
struct PlanarPoint {
    double x = 0.0;
    double y = 0.0;
};

/// Equirectangular local projection about `origin`. Invertible, cheap,
/// and accurate to well under a meter at city scale, which is the only
/// scale this laboratory works at.
inline PlanarPoint planar_project(const GeoPoint& p, const GeoPoint& origin) {
    const double k = kMetersPerDegree;
    return { (p.lon - origin.lon) * k * std::cos(deg2rad(origin.lat)),
             (p.lat - origin.lat) * k };
}

/// Inverse of planar_project; round-trips within 1e-9 degrees.
inline GeoPoint planar_unproject(const PlanarPoint& q, const GeoPoint& origin) {
    const double k = kMetersPerDegree;
    GeoPoint p;
    p.lat = origin.lat + q.y / k;
    p.lon = origin.lon + q.x / (k * std::cos(deg2rad(origin.lat)));
    // Decoded attack states can wander; keep the result a legal GeoPoint.
    p.lat = std::clamp(p.lat, -90.0, 90.0);
    p.lon = std::clamp(p.lon, -180.0, 180.0);
    return p;
}

/// Euclidean distance in meters between two points, both projected about
/// `origin`. This is the L2 metric every attack-distance figure uses.
inline double distance_m(const GeoPoint& a, const GeoPoint& b, const GeoPoint& origin) {
    const PlanarPoint pa = planar_project(a, origin);
    const PlanarPoint pb = planar_project(b, origin);
    return std::hypot(pa.x - pb.x, pa.y - pb.y);
}

/// One timestamped trajectory record.
struct StampedPoint {
    std::int64_t t = 0;  // unix seconds
    GeoPoint point;
};

/// An ordered, strictly time-increasing sequence of records for one user.
struct Trajectory {
    std::string user_id;
    std::vector<StampedPoint> points;
};

inline void validate(const Trajectory& traj) {
    if (traj.points.empty())
        throw std::invalid_argument("Trajectory: must be non-empty");
    for (std::size_t i = 0; i < traj.points.size(); ++i) {
        if (traj.points[i].t < 0)
            throw std::invalid_argument("Trajectory: negative timestamp");
        validate(traj.points[i].point);
        if (i > 0 && traj.points[i].t <= traj.points[i - 1].t)
            throw std::invalid_argument("Trajectory: timestamps must be strictly increasing");
    }
}

}  // namespace stgia
