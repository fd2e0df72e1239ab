#include "haarstab/dyadic.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

namespace haarstab {

DyadicInterval::DyadicInterval(std::uint32_t lvl, std::uint64_t idx) : level(lvl), index(idx) {
    if (lvl >= 63)
        throw std::invalid_argument("dyadic level " + std::to_string(lvl) + " out of range");
    if (idx >= (std::uint64_t{1} << lvl))
        throw std::invalid_argument("dyadic index " + std::to_string(idx) +
                                    " out of range at level " + std::to_string(lvl));
}

std::uint64_t iota(DyadicInterval I) { return (std::uint64_t{1} << I.level) + I.index; }

DyadicInterval fromIota(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("iota values start at 1");
    std::uint32_t lvl = iotaLevel(n);
    return DyadicInterval(lvl, n - (std::uint64_t{1} << lvl));
}

DyadicInterval leftHalf(DyadicInterval I) { return DyadicInterval(I.level + 1, 2 * I.index); }

DyadicInterval rightHalf(DyadicInterval I) {
    return DyadicInterval(I.level + 1, 2 * I.index + 1);
}

bool hasParent(DyadicInterval I) { return I.level > 0; }

DyadicInterval parent(DyadicInterval I) {
    if (!hasParent(I)) throw std::domain_error("the root interval [0,1) has no parent");
    return DyadicInterval(I.level - 1, I.index / 2);
}

bool contains(DyadicInterval B, DyadicInterval A) {
    if (A.level < B.level) return false;
    return (A.index >> (A.level - B.level)) == B.index;
}

ChildrenAndParent childrenAndParent(DyadicInterval I) {
    ChildrenAndParent r;
    r.plus = leftHalf(I);
    r.minus = rightHalf(I);
    r.rootHasNoParent = !hasParent(I);
    if (!r.rootHasNoParent) r.pi = parent(I);
    return r;
}

StepFunction1D::StepFunction1D(int depth) : gridDepth(depth) {
    if (depth < 0 || depth > 30) throw std::invalid_argument("grid depth out of range");
    values.assign(std::size_t{1} << depth, 0.0);
}

StepFunction2D::StepFunction2D(int depth) : gridDepth(depth) {
    if (depth < 0 || depth > 15) throw std::invalid_argument("2d grid depth out of range");
    values.assign(std::size_t{1} << (2 * depth), 0.0);
}

StepFunction1D haarStep(DyadicInterval I, int gridDepth) {
    if (static_cast<int>(I.level) + 1 > gridDepth)
        throw std::invalid_argument("grid too coarse for h_I: need depth >= level + 1");
    StepFunction1D f(gridDepth);
    const int shift = gridDepth - static_cast<int>(I.level);
    const std::size_t begin = I.index << shift;
    const std::size_t half = std::size_t{1} << (shift - 1);
    for (std::size_t c = 0; c < half; ++c) f.values[begin + c] = 1.0;
    for (std::size_t c = 0; c < half; ++c) f.values[begin + half + c] = -1.0;
    return f;
}

std::vector<std::pair<double, double>> distribution(const StepFunction1D& f) {
    std::map<double, std::uint64_t> counts;
    for (double v : f.values) counts[v == 0.0 ? 0.0 : v]++;
    const double cellMeasure = 1.0 / static_cast<double>(f.values.size());
    std::vector<std::pair<double, double>> out;
    out.reserve(counts.size());
    for (const auto& [v, c] : counts) out.emplace_back(v, static_cast<double>(c) * cellMeasure);
    return out;
}

void synthesize1DInto(const std::vector<std::pair<std::uint64_t, double>>& coeffs,
                      int gridDepth, double* out) {
    const std::size_t n = std::size_t{1} << gridDepth;
    std::fill(out, out + n, 0.0);
    // Cell values are built top-down: each level doubles the resolution and
    // adds +-a for the coefficient owning the parent cell. Using `out` as the
    // working buffer keeps per-point accumulation in strict level order.
    for (const auto& [io, a] : coeffs) {
        if (a == 0.0) continue;
        const std::uint32_t lvl = iotaLevel(io);
        if (static_cast<int>(lvl) + 1 > gridDepth)
            throw std::invalid_argument("grid too coarse for coefficient at iota " +
                                        std::to_string(io));
    }
    // Group coefficients per level for the doubling pass.
    std::vector<std::vector<std::pair<std::uint64_t, double>>> byLevel(gridDepth);
    for (const auto& [io, a] : coeffs) {
        const std::uint32_t lvl = iotaLevel(io);
        byLevel[lvl].emplace_back(io - (std::uint64_t{1} << lvl), a);
    }
    // Forward expansion: the block value of the 2^l blocks at stage l lives
    // at out[c] for c < 2^l; expanding to stage l+1 writes children at
    // positions 2c, 2c+1 (right-to-left so sources are not clobbered).
    std::vector<double> add;
    for (int l = 0; l < gridDepth; ++l) {
        const std::size_t blocks = std::size_t{1} << l;
        add.assign(blocks, 0.0);
        for (const auto& [idx, a] : byLevel[l]) add[idx] += a;
        for (std::size_t c = blocks; c-- > 0;) {
            const double base = out[c];
            out[2 * c] = base + add[c];
            out[2 * c + 1] = base - add[c];
        }
    }
}

StepFunction1D synthesize1D(const std::vector<std::pair<std::uint64_t, double>>& coeffs,
                            int gridDepth) {
    StepFunction1D f(gridDepth);
    synthesize1DInto(coeffs, gridDepth, f.values.data());
    return f;
}

double gridIntegral1D(const StepFunction1D& f) {
    double s = 0.0, c = 0.0;
    for (double v : f.values) {
        double y = v - c;
        double t = s + y;
        c = (t - s) - y;
        s = t;
    }
    return s / static_cast<double>(f.values.size());
}

double gridIntegral2D(const StepFunction2D& f) {
    double s = 0.0, c = 0.0;
    for (double v : f.values) {
        double y = v - c;
        double t = s + y;
        c = (t - s) - y;
        s = t;
    }
    return s / static_cast<double>(f.values.size());
}

}  // namespace haarstab
