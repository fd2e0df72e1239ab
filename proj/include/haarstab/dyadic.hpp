#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace haarstab {

/// A dyadic interval [k*2^-j, (k+1)*2^-j) of [0,1), stored as the pair
/// (level, index). Endpoints are never represented in floating point, so
/// every measure 2^-j is exact.
struct DyadicInterval {
    std::uint32_t level = 0;
    std::uint64_t index = 0;

    constexpr DyadicInterval() = default;
    DyadicInterval(std::uint32_t lvl, std::uint64_t idx);

    double measure() const { return 1.0 / static_cast<double>(std::uint64_t{1} << level); }

    bool operator==(const DyadicInterval& o) const {
        return level == o.level && index == o.index;
    }
    bool operator!=(const DyadicInterval& o) const { return !(*this == o); }
};

inline constexpr DyadicInterval kUnitInterval{};

/// iota(I) = 2^level + index. Bijection from the dyadic tree onto the
/// positive integers; maps level n onto {2^n, ..., 2^{n+1}-1} and induces
/// the linear order used for every sum over the tree.
std::uint64_t iota(DyadicInterval I);

/// Inverse of iota.
DyadicInterval fromIota(std::uint64_t n);

inline std::uint32_t iotaLevel(std::uint64_t n) {
    std::uint32_t l = 0;
    while ((std::uint64_t{2} << l) <= n) ++l;
    return l;
}

DyadicInterval leftHalf(DyadicInterval I);   // I^+
DyadicInterval rightHalf(DyadicInterval I);  // I^-

bool hasParent(DyadicInterval I);
DyadicInterval parent(DyadicInterval I);  // throws on the root

/// Is A contained in B?
bool contains(DyadicInterval B, DyadicInterval A);

struct ChildrenAndParent {
    DyadicInterval plus;   // left half
    DyadicInterval minus;  // right half
    bool rootHasNoParent;
    DyadicInterval pi;  // valid only when !rootHasNoParent
};

ChildrenAndParent childrenAndParent(DyadicInterval I);

/// A function on [0,1) constant on the cells of a fixed dyadic grid.
struct StepFunction1D {
    int gridDepth = 0;
    std::vector<double> values;  // size 2^gridDepth, cells left to right

    StepFunction1D() : values(1, 0.0) {}
    explicit StepFunction1D(int depth);
    std::size_t cells() const { return values.size(); }
};

/// A function on [0,1)^2 constant on grid cells, row-major: entry
/// (sCell, tCell) lives at values[sCell << gridDepth | tCell].
struct StepFunction2D {
    int gridDepth = 0;
    std::vector<double> values;

    StepFunction2D() : values(1, 0.0) {}
    explicit StepFunction2D(int depth);
    std::size_t side() const { return std::size_t{1} << gridDepth; }
    double& at(std::size_t s, std::size_t t) { return values[(s << gridDepth) | t]; }
    double at(std::size_t s, std::size_t t) const { return values[(s << gridDepth) | t]; }
};

/// h_I sampled on the depth-N grid: +1 on the left half of I, -1 on the
/// right half, 0 elsewhere. Requires level(I) + 1 <= N.
StepFunction1D haarStep(DyadicInterval I, int gridDepth);

/// Exact distribution of a step function: (value, measure) pairs with
/// strictly increasing values and measures summing to 1. Measures are
/// counts times 2^-N and hence exact doubles.
std::vector<std::pair<double, double>> distribution(const StepFunction1D& f);

/// Synthesis of sum a_I h_I on the depth-N grid from (iota, coefficient)
/// pairs. Contributions are accumulated level by level (iota order), so two
/// coefficient sets inducing the same per-point contribution sequence give
/// bit-identical values.
StepFunction1D synthesize1D(const std::vector<std::pair<std::uint64_t, double>>& coeffs,
                            int gridDepth);

/// In-place variant writing into a preallocated buffer of size 2^gridDepth.
void synthesize1DInto(const std::vector<std::pair<std::uint64_t, double>>& coeffs,
                      int gridDepth, double* out);

double gridIntegral1D(const StepFunction1D& f);
double gridIntegral2D(const StepFunction2D& f);

}  // namespace haarstab
