#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "stgia/geo.hpp"
#include "stgia/grid.hpp"

namespace stgia {

/// One predicted next location: a grid cell plus its representative point.
struct Candidate {
    int rank = 0;  // 1 = best
    CellId cell = 0;
    GeoPoint pos;
};

/// Up to five ranked candidates, ranks unique.
using CandidateSet = std::vector<Candidate>;

inline constexpr int kCandidateCount = 5;

/// Thrown when the remote predictor is unreachable and fallback is disabled.
/// Distinct from an empty candidate set, which is a legal prediction outcome.
class PredictorUnavailable : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Timestamped cell visits used as predictor input.
struct Stay {
    CellId cell = 0;
    int hour = 0;  // time of day, 0..23
};

/// Order-1 transition table over grid cells with add-one smoothing.
class MarkovTable {
public:
    explicit MarkovTable(CellId cells) : cells_(cells) {
        if (cells < 1) throw std::invalid_argument("MarkovTable: need at least one cell");
    }

    void observe(CellId from, CellId to) {
        check(from);
        check(to);
        counts_[from][to] += 1;
        marginal_[to] += 1;
    }

    void observe_trajectory(const std::vector<CellId>& cells) {
        for (std::size_t i = 0; i + 1 < cells.size(); ++i) observe(cells[i], cells[i + 1]);
    }

    CellId cell_count() const { return cells_; }

    /// Smoothed transition weight (count + 1).
    double weight(CellId from, CellId to) const {
        check(from);
        check(to);
        auto it = counts_.find(from);
        const double c = it == counts_.end() ? 0.0 : [&] {
            auto jt = it->second.find(to);
            return jt == it->second.end() ? 0.0 : static_cast<double>(jt->second);
        }();
        return c + 1.0;
    }

    double marginal_weight(CellId to) const {
        check(to);
        auto it = marginal_.find(to);
        return (it == marginal_.end() ? 0.0 : static_cast<double>(it->second)) + 1.0;
    }

    bool seen(CellId from) const { return counts_.count(from) != 0; }

private:
    void check(CellId c) const {
        if (c < 0 || c >= cells_) throw std::invalid_argument("MarkovTable: cell id out of range");
    }

    CellId cells_;
    std::map<CellId, std::map<CellId, std::int64_t>> counts_;
    std::map<CellId, std::int64_t> marginal_;
};

namespace detail {

/// Top-k cells by weight, ties to the smaller cell id.
inline std::vector<CellId> top_cells(const std::function<double(CellId)>& weight, CellId cells, int k) {
    std::vector<CellId> ids(static_cast<std::size_t>(cells));
    for (CellId c = 0; c < cells; ++c) ids[static_cast<std::size_t>(c)] = c;
    std::stable_sort(ids.begin(), ids.end(), [&](CellId a, CellId b) {
        const double wa = weight(a), wb = weight(b);
        if (wa != wb) return wa > wb;
        return a < b;
    });
    ids.resize(std::min<std::size_t>(ids.size(), static_cast<std::size_t>(k)));
    return ids;
}

}  // namespace detail

/// Deterministic stand-in for the language-model predictor: top-5 cells by
/// smoothed transition frequency from the last visited cell. Empty history or
/// an unseen last cell falls back to the global marginal.
inline CandidateSet markov_candidates(const std::vector<CellId>& history, const MarkovTable& table,
                                      const GridIndex& grid) {
    std::vector<CellId> top;
    if (!history.empty() && table.seen(history.back())) {
        const CellId last = history.back();
        top = detail::top_cells([&](CellId c) { return table.weight(last, c); },
                                table.cell_count(), kCandidateCount);
    } else {
        top = detail::top_cells([&](CellId c) { return table.marginal_weight(c); },
                                table.cell_count(), kCandidateCount);
    }
    CandidateSet set;
    for (std::size_t i = 0; i < top.size(); ++i)
        set.push_back(Candidate{static_cast<int>(i) + 1, top[i], grid_cell_center(top[i], grid)});
    return set;
}

inline constexpr int kHistoryStays = 40;
inline constexpr int kContextStays = 5;

/// Deterministic prompt in the historical-stay / situational-stay style:
/// up to 40 historical and 5 contextual (cell, hour) tuples, asking for
/// exactly five ranked cell ids in a bracketed list.
inline std::string build_prompt(const std::vector<Stay>& history, int history_len = kHistoryStays,
                                int context_len = kContextStays) {
    if (history.empty()) throw std::invalid_argument("build_prompt: empty history");
    const std::size_t n = history.size();
    const std::size_t ctx = std::min<std::size_t>(n, static_cast<std::size_t>(context_len));
    const std::size_t hist = std::min<std::size_t>(n - ctx, static_cast<std::size_t>(history_len));

    std::ostringstream out;
    out << "You are given the recent movements of one user on a discrete cell grid.\n";
    out << "Each stay is written as (cell=<id>, hour=<h>).\n";
    out << "<history>\n";
    for (std::size_t i = n - ctx - hist; i < n - ctx; ++i)
        out << "(cell=" << history[i].cell << ", hour=" << history[i].hour << ")\n";
    out << "</history>\n<context>\n";
    for (std::size_t i = n - ctx; i < n; ++i)
        out << "(cell=" << history[i].cell << ", hour=" << history[i].hour << ")\n";
    out << "</context>\n";
    out << "Predict the user's next cell. Reply with exactly " << kCandidateCount
        << " ranked candidate cell ids as a bracketed list, best first, e.g. [3, 14, 7, 9, 1].\n";
    return out.str();
}

/// Extracts the (cell, hour) tuples embedded in a prompt; inverse of
/// build_prompt over the included window.
inline std::vector<Stay> parse_prompt_stays(const std::string& prompt) {
    std::vector<Stay> stays;
    std::size_t pos = 0;
    while ((pos = prompt.find("(cell=", pos)) != std::string::npos) {
        long long cell = 0;
        int hour = 0;
        if (std::sscanf(prompt.c_str() + pos, "(cell=%lld, hour=%d)", &cell, &hour) == 2)
            stays.push_back(Stay{static_cast<CellId>(cell), hour});
        ++pos;
    }
    return stays;
}

/// Reply grammar: the first bracketed list of integers, ranked best first.
/// Duplicates are dropped keeping the earliest rank; at most five survive.
inline std::vector<CellId> parse_candidate_reply(const std::string& reply) {
    const std::size_t open = reply.find('[');
    const std::size_t close = open == std::string::npos ? std::string::npos : reply.find(']', open);
    if (close == std::string::npos)
        throw std::runtime_error("candidate reply: no bracketed list found");
    std::vector<CellId> out;
    std::string token;
    std::istringstream body(reply.substr(open + 1, close - open - 1));
    while (std::getline(body, token, ',')) {
        std::size_t idx = 0;
        while (idx < token.size() && std::isspace(static_cast<unsigned char>(token[idx]))) ++idx;
        if (idx == token.size()) continue;
        try {
            const CellId cell = std::stoll(token.substr(idx));
            if (std::find(out.begin(), out.end(), cell) == out.end()) out.push_back(cell);
        } catch (const std::exception&) {
            throw std::runtime_error("candidate reply: non-integer entry '" + token + "'");
        }
        if (out.size() == kCandidateCount) break;
    }
    if (out.empty()) throw std::runtime_error("candidate reply: empty list");
    return out;
}

/// Nearest candidate to the reconstruction r, ties to the better rank.
inline Candidate map_to_candidate(const GeoPoint& r, const CandidateSet& cands,
                                  const GeoPoint& origin) {
    if (cands.empty()) throw std::invalid_argument("map_to_candidate: empty candidate set");
    const Candidate* best = &cands.front();
    double best_d = distance_m(r, best->pos, origin);
    for (const Candidate& c : cands) {
        const double d = distance_m(r, c.pos, origin);
        if (d < best_d || (d == best_d && c.rank < best->rank)) {
            best = &c;
            best_d = d;
        }
    }
    return *best;
}

/// Cosine similarity of two equal-length coordinate sequences, flattened to
/// vectors of projected coordinates. Zero-norm inputs define the result as 0.
inline double traj_similarity(const std::vector<GeoPoint>& a, const std::vector<GeoPoint>& b,
                              const GeoPoint& origin) {
    if (a.size() != b.size())
        throw std::invalid_argument("traj_similarity: length mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const PlanarPoint pa = planar_project(a[i], origin);
        const PlanarPoint pb = planar_project(b[i], origin);
        dot += pa.x * pb.x + pa.y * pb.y;
        na += pa.x * pa.x + pa.y * pa.y;
        nb += pb.x * pb.x + pb.y * pb.y;
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

/// Outlier-screened aggregation: keep the ceil(n/2) recoveries with the
/// highest mean pairwise cosine similarity (greedy, seeded from the best
/// pair) and return their pointwise mean. Two or fewer recoveries cannot be
/// screened, so they are averaged directly.
inline std::vector<GeoPoint> similarity_calibrate(const std::vector<std::vector<GeoPoint>>& recoveries,
                                                  const GeoPoint& origin) {
    if (recoveries.empty())
        throw std::invalid_argument("similarity_calibrate: no recoveries");
    const std::size_t n = recoveries.size();
    const std::size_t len = recoveries[0].size();
    for (const auto& r : recoveries)
        if (r.size() != len)
            throw std::invalid_argument("similarity_calibrate: recovery length mismatch");

    auto mean_of = [&](const std::vector<std::size_t>& idx) {
        std::vector<GeoPoint> mean(len);
        for (std::size_t i : idx)
            for (std::size_t k = 0; k < len; ++k) {
                mean[k].lat += recoveries[i][k].lat;
                mean[k].lon += recoveries[i][k].lon;
            }
        for (auto& p : mean) {
            p.lat /= static_cast<double>(idx.size());
            p.lon /= static_cast<double>(idx.size());
        }
        return mean;
    };

    if (n <= 2) {
        std::vector<std::size_t> all(n);
        for (std::size_t i = 0; i < n; ++i) all[i] = i;
        return mean_of(all);
    }

    std::vector<std::vector<double>> sim(n, std::vector<double>(n, 1.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            sim[i][j] = sim[j][i] = traj_similarity(recoveries[i], recoveries[j], origin);

    std::size_t si = 0, sj = 1;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (sim[i][j] > sim[si][sj]) { si = i; sj = j; }

    const std::size_t want = (n + 1) / 2;
    std::vector<std::size_t> chosen{si, sj};
    std::vector<bool> used(n, false);
    used[si] = used[sj] = true;
    while (chosen.size() < want) {
        std::size_t best = n;
        double best_gain = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < n; ++c) {
            if (used[c]) continue;
            double gain = 0.0;
            for (std::size_t i : chosen) gain += sim[c][i];
            if (gain > best_gain) { best_gain = gain; best = c; }
        }
        used[best] = true;
        chosen.push_back(best);
    }
    return mean_of(chosen);
}

/// How candidate sets are produced during an attack: the driver passes the
/// client, the 0-based index of the point being predicted, and the stays
/// reconstructed so far.
using CandidateProvider =
    std::function<CandidateSet(const std::string& client, std::size_t point_index,
                               const std::vector<Stay>& history)>;

}  // namespace stgia
