#pragma once

// Non-uniform asset grids: a diffusion grid clustered at the barrier and the
// anchor, and its jump superset (sub-barrier padding plus a geometric tail).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "ldl/errors.hpp"

namespace ldl {

enum class GridKind { diffusion, jump };

/// Coordinate in which the clustering map is uniform-based.
enum class GridSpace { asset, log };

struct Grid1D {
    std::vector<double> nodes;
    std::size_t barrier_index = 0;
    GridKind kind = GridKind::diffusion;
    // Diffusion nodes occupy [diff_begin, diff_end) of a jump grid.
    std::size_t diff_begin = 0;
    std::size_t diff_end = 0;

    std::size_t size() const { return nodes.size(); }
    double front() const { return nodes.front(); }
    double back() const { return nodes.back(); }

    /// Index of the node equal to `level` (relative tolerance 1e-12).
    std::size_t index_of(double level) const {
        auto it = std::lower_bound(nodes.begin(), nodes.end(), level * (1.0 - 1e-12));
        if (it == nodes.end() || std::abs(*it - level) > 1e-12 * std::max(1.0, std::abs(level)))
            throw DomainError("level " + std::to_string(level) + " is not a grid node");
        return static_cast<std::size_t>(it - nodes.begin());
    }

    /// Index of the node closest to `level`.
    std::size_t nearest(double level) const {
        auto it = std::lower_bound(nodes.begin(), nodes.end(), level);
        if (it == nodes.begin()) return 0;
        if (it == nodes.end()) return nodes.size() - 1;
        std::size_t k = static_cast<std::size_t>(it - nodes.begin());
        return (level - nodes[k - 1] <= nodes[k] - level) ? k - 1 : k;
    }

    std::vector<double> log_nodes() const {
        std::vector<double> x(nodes.size());
        std::transform(nodes.begin(), nodes.end(), x.begin(), [](double a) { return std::log(a); });
        return x;
    }
};

namespace detail {

// Integrated node density for the sinh clustering map.
struct StretchMap {
    double lo, anchor, width, strength;

    double operator()(double a) const {
        if (strength == 0.0) return a - lo;
        return (a - lo) + strength * width *
                              (std::asinh((a - lo) / width) + std::asinh((a - anchor) / width) -
                               std::asinh((lo - anchor) / width));
    }
    double derivative(double a) const {
        if (strength == 0.0) return 1.0;
        auto g = [&](double c) { return 1.0 / std::sqrt(1.0 + (a - c) * (a - c) / (width * width)); };
        return 1.0 + strength * (g(lo) + g(anchor));
    }

    double inverse(double target, double hi) const {
        double a = lo, b = hi;
        double x = lo + (hi - lo) * target / (*this)(hi);
        for (int it = 0; it < 100; ++it) {
            double f = (*this)(x) - target;
            if (f > 0.0) b = x; else a = x;
            double nx = x - f / derivative(x);
            if (!(nx > a && nx < b)) nx = 0.5 * (a + b);
            if (std::abs(nx - x) <= 1e-14 * std::max(1.0, std::abs(x))) return nx;
            x = nx;
        }
        return x;
    }
};

}  // namespace detail

/// Diffusion grid on [barrier, upper]. `cluster_width` is a fraction of the
/// span; strength 0 gives a grid uniform in the chosen coordinate.
inline Grid1D build_diffusion_grid(double barrier, double anchor, double upper, std::size_t n,
                                   double cluster_strength = 4.0, double cluster_width = 0.05,
                                   GridSpace space = GridSpace::asset) {
    if (!(barrier > 0.0 && barrier < anchor && anchor < upper))
        throw ConfigError("diffusion grid requires 0 < barrier < anchor < upper");
    if (n < 8) throw ConfigError("diffusion grid requires at least 8 nodes");
    if (!(cluster_strength >= 0.0) || !(cluster_width > 0.0))
        throw ConfigError("cluster strength must be >= 0 and width > 0");

    const bool logs = space == GridSpace::log;
    const double lo = logs ? std::log(barrier) : barrier;
    const double mid = logs ? std::log(anchor) : anchor;
    const double hi = logs ? std::log(upper) : upper;
    Grid1D g;
    g.kind = GridKind::diffusion;
    g.nodes.resize(n);
    const double span = hi - lo;
    if (cluster_strength == 0.0) {
        for (std::size_t k = 0; k < n; ++k)
            g.nodes[k] = lo + static_cast<double>(k) * span / static_cast<double>(n - 1);
    } else {
        detail::StretchMap map{lo, mid, cluster_width * span, cluster_strength};
        const double total = map(hi);
        for (std::size_t k = 0; k < n; ++k)
            g.nodes[k] = map.inverse(total * static_cast<double>(k) / static_cast<double>(n - 1), hi);
    }
    if (logs)
        for (double& v : g.nodes) v = std::exp(v);
    g.nodes.front() = barrier;
    g.nodes.back() = upper;
    g.barrier_index = 0;
    g.diff_begin = 0;
    g.diff_end = n;
    return g;
}

/// Move the nearest interior node onto each level so that it is represented
/// exactly. Levels outside (front, back) are ignored; levels equal to an end
/// node are already present.
inline void pin_levels(Grid1D& g, std::vector<double> levels) {
    std::sort(levels.begin(), levels.end());
    std::vector<bool> pinned(g.size(), false);
    pinned.front() = pinned.back() = true;
    for (double level : levels) {
        if (!(level > g.front() && level < g.back())) continue;
        std::size_t k = g.nearest(level);
        if (g.nodes[k] == level) {
            pinned[k] = true;
            continue;
        }
        if (pinned[k]) {
            std::size_t alt = level > g.nodes[k] ? k + 1 : k - 1;
            if (pinned[alt])
                throw ConfigError("pinned levels are too close for the grid resolution");
            k = alt;
        }
        if (!(level > g.nodes[k - 1] && level < g.nodes[k + 1]))
            throw ConfigError("pinned levels are too close for the grid resolution");
        g.nodes[k] = level;
        pinned[k] = true;
    }
}

/// Jump superset: `padding` nodes below the barrier at the first spacing,
/// the diffusion nodes, then `target_nodes` geometric nodes up to
/// `upper_bound` (the last node equals it exactly).
inline Grid1D build_jump_grid(const Grid1D& diff, double upper_bound, std::size_t target_nodes,
                              std::size_t padding = 2) {
    if (target_nodes < 1) throw ConfigError("jump grid needs at least one tail node");
    if (!(upper_bound > diff.back()))
        throw ConfigError("jump grid upper bound must exceed the diffusion grid");
    Grid1D g;
    g.kind = GridKind::jump;
    const double h0 = diff.nodes[1] - diff.nodes[0];
    const double step = std::min(h0, 0.3 * diff.front() / static_cast<double>(std::max<std::size_t>(padding, 1)));
    for (std::size_t k = padding; k > 0; --k)
        g.nodes.push_back(diff.front() - static_cast<double>(k) * step);
    g.diff_begin = g.nodes.size();
    g.nodes.insert(g.nodes.end(), diff.nodes.begin(), diff.nodes.end());
    g.diff_end = g.nodes.size();
    g.barrier_index = g.diff_begin + diff.barrier_index;
    const double top = diff.back();
    const double ratio = std::pow(upper_bound / top, 1.0 / static_cast<double>(target_nodes));
    for (std::size_t k = 1; k < target_nodes; ++k)
        g.nodes.push_back(top * std::pow(ratio, static_cast<double>(k)));
    g.nodes.push_back(upper_bound);
    return g;
}

struct GridSet {
    std::vector<Grid1D> diffusion;
    std::vector<Grid1D> jump;
    std::size_t dimension() const { return jump.size(); }
};

}  // namespace ldl
