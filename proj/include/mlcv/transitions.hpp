#pragma once

// Basin-core transition counting with hysteresis: a transition A->B is
// counted only when the trajectory enters B's core after last occupying
// A's core, so boundary chatter never counts.

#include <vector>

#include "mlcv/common.hpp"
#include "mlcv/langevin.hpp"

namespace mlcv {

struct BasinCore {
    Vec center;
    double radius = 0.0;
};

struct TransitionCounts {
    Matrix pair_matrix;             // [from][to], consecutive collapsed visits
    std::vector<int> visit_sequence;   // collapsed core visit order
    std::vector<std::size_t> visits;   // entries into each core

    std::size_t transitions(std::size_t from, std::size_t to) const {
        return static_cast<std::size_t>(pair_matrix(from, to));
    }

    // Completed a->...->b->...->a cycles, ignoring visits to other cores
    // in between.
    std::size_t round_trips(int a, int b) const {
        int last = -1;
        std::size_t switches = 0;
        for (int v : visit_sequence) {
            if (v != a && v != b) continue;
            if (last != -1 && v != last) ++switches;
            last = v;
        }
        return switches / 2;
    }
};

// periods: per-coordinate period (0 = non-periodic); may be empty.
inline TransitionCounts count_transitions(const Trajectory& traj,
                                          const std::vector<BasinCore>& basins,
                                          const std::vector<double>& periods = {}) {
    if (basins.size() < 2) throw InvalidArgumentError("need at least two basin cores");

    auto dist = [&](const Vec& a, const Vec& b) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double per = i < periods.size() ? periods[i] : 0.0;
            const double d = per > 0.0 ? periodic_delta(a[i], b[i], per) : a[i] - b[i];
            s += d * d;
        }
        return std::sqrt(s);
    };

    for (std::size_t i = 0; i < basins.size(); ++i)
        for (std::size_t j = i + 1; j < basins.size(); ++j)
            if (dist(basins[i].center, basins[j].center) <= basins[i].radius + basins[j].radius)
                throw InvalidArgumentError("basin cores " + std::to_string(i) + " and " +
                                           std::to_string(j) + " overlap");

    TransitionCounts out;
    out.pair_matrix = Matrix(basins.size(), basins.size(), 0.0);
    out.visits.assign(basins.size(), 0);

    int last = -1;
    for (const Vec& q : traj.frames) {
        int here = -1;
        for (std::size_t b = 0; b < basins.size(); ++b) {
            if (dist(q, basins[b].center) <= basins[b].radius) {
                here = static_cast<int>(b);
                break;
            }
        }
        if (here < 0 || here == last) continue;
        if (last >= 0)
            out.pair_matrix(static_cast<std::size_t>(last), static_cast<std::size_t>(here)) += 1.0;
        out.visit_sequence.push_back(here);
        out.visits[static_cast<std::size_t>(here)] += 1;
        last = here;
    }
    return out;
}

}  // namespace mlcv
