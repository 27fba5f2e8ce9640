#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "stgia/geo.hpp"

namespace stgia {

/// Parses "YYYY-MM-DDTHH:MM:SS" with an optional trailing 'Z' as UTC.
inline bool parse_iso8601(const std::string& s, std::int64_t& out) {
    int y, mo, d, h, mi, se;
    char z = 'Z';
    const int n = std::sscanf(s.c_str(), "%d-%d-%dT%d:%d:%d%c", &y, &mo, &d, &h, &mi, &se, &z);
    if (n < 6 || (n == 7 && z != 'Z')) return false;
    std::tm tm{};
    tm.tm_year = y - 1900;
    tm.tm_mon = mo - 1;
    tm.tm_mday = d;
    tm.tm_hour = h;
    tm.tm_min = mi;
    tm.tm_sec = se;
    const time_t t = timegm(&tm);
    if (t == static_cast<time_t>(-1)) return false;
    out = static_cast<std::int64_t>(t);
    return true;
}

inline std::string format_iso8601(std::int64_t t) {
    std::tm tm{};
    const time_t tt = static_cast<time_t>(t);
    gmtime_r(&tt, &tm);
    char buf[80];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
    return buf;
}

struct IngestSummary {
    std::size_t lines = 0;
    std::size_t malformed = 0;
    std::size_t users = 0;
    std::size_t points_kept = 0;
};

inline constexpr std::int64_t kResampleSeconds = 600;

namespace detail {

/// Nearest-point decimation to ~10-minute increments: after each kept point,
/// prefer the candidate closest to +600 s inside (+300 s, +900 s]; a gap
/// larger than that keeps the first point after the gap.
inline std::vector<StampedPoint> decimate(const std::vector<StampedPoint>& pts) {
    std::vector<StampedPoint> out;
    if (pts.empty()) return out;
    out.push_back(pts[0]);
    std::size_t i = 1;
    while (i < pts.size()) {
        const std::int64_t last = out.back().t;
        std::size_t best = pts.size();
        std::int64_t best_err = kResampleSeconds;
        for (std::size_t j = i; j < pts.size() && pts[j].t <= last + 3 * kResampleSeconds / 2; ++j) {
            if (pts[j].t <= last + kResampleSeconds / 2) continue;
            const std::int64_t err = std::abs(pts[j].t - (last + kResampleSeconds));
            if (err < best_err) { best_err = err; best = j; }
        }
        if (best == pts.size()) {
            // No candidate near the grid: skip to the first point past the gap.
            while (i < pts.size() && pts[i].t <= last + 3 * kResampleSeconds / 2) ++i;
            if (i == pts.size()) break;
            best = i;
        }
        out.push_back(pts[best]);
        i = best + 1;
    }
    return out;
}

}  // namespace detail

/// Reads tab-separated check-ins `user_id <TAB> iso8601 <TAB> lat <TAB> lon`,
/// groups by user, sorts by time, drops duplicate timestamps, and decimates
/// to roughly 10-minute increments. Malformed lines are counted and skipped;
/// more than half malformed is an error.
inline std::vector<Trajectory> ingest_checkins(std::istream& in, IngestSummary* summary = nullptr) {
    std::map<std::string, std::vector<StampedPoint>> by_user;
    IngestSummary sum;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++sum.lines;
        std::istringstream ls(line);
        std::string user, iso, lat_s, lon_s;
        if (!std::getline(ls, user, '\t') || !std::getline(ls, iso, '\t') ||
            !std::getline(ls, lat_s, '\t') || !std::getline(ls, lon_s)) {
            ++sum.malformed;
            continue;
        }
        StampedPoint sp;
        try {
            sp.point.lat = std::stod(lat_s);
            sp.point.lon = std::stod(lon_s);
            validate(sp.point);
        } catch (const std::exception&) {
            ++sum.malformed;
            continue;
        }
        if (!parse_iso8601(iso, sp.t) || sp.t < 0) {
            ++sum.malformed;
            continue;
        }
        by_user[user].push_back(sp);
    }
    if (sum.lines > 0 && sum.malformed * 2 > sum.lines)
        throw std::runtime_error("ingest: more than half of the input lines are malformed (" +
                                 std::to_string(sum.malformed) + "/" + std::to_string(sum.lines) + ")");

    std::vector<Trajectory> out;
    for (auto& [user, pts] : by_user) {
        std::stable_sort(pts.begin(), pts.end(),
                         [](const StampedPoint& a, const StampedPoint& b) { return a.t < b.t; });
        std::vector<StampedPoint> dedup;
        for (const StampedPoint& p : pts)
            if (dedup.empty() || p.t != dedup.back().t) dedup.push_back(p);
        Trajectory traj;
        traj.user_id = user;
        traj.points = detail::decimate(dedup);
        if (traj.points.empty()) continue;
        validate(traj);
        sum.points_kept += traj.points.size();
        out.push_back(std::move(traj));
    }
    sum.users = out.size();
    if (summary) *summary = sum;
    return out;
}

inline std::vector<Trajectory> ingest_checkins(const std::string& path,
                                               IngestSummary* summary = nullptr) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("ingest: cannot open " + path);
    return ingest_checkins(in, summary);
}

/// Serializes trajectories back to the check-in format ingest reads.
inline void write_checkins(const std::vector<Trajectory>& trajs, std::ostream& out) {
    out.precision(12);
    for (const Trajectory& traj : trajs)
        for (const StampedPoint& sp : traj.points)
            out << traj.user_id << '\t' << format_iso8601(sp.t) << '\t' << sp.point.lat << '\t'
                << sp.point.lon << "\n";
}

inline void write_checkins(const std::vector<Trajectory>& trajs, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write check-in file: " + path);
    write_checkins(trajs, out);
}

}  // namespace stgia
