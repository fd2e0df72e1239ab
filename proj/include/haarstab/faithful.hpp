#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "haarstab/dyadic.hpp"
#include "haarstab/multiplier.hpp"
#include "haarstab/spaces.hpp"

namespace haarstab {

/// A faithful Haar system relative to frequencies m_0 < ... < m_K: for each
/// I at level i, a block vector h~_I = sum of signed Haar functions over a
/// pairwise disjoint collection of level-m_i intervals, whose supports
/// reproduce the dyadic splitting: supp h~_{I+-} = { h~_I = +-1 } as exact
/// dyadic sets.
struct FaithfulHaarSystem {
    struct Block {
        std::vector<std::uint64_t> cells;  // indices at level m_{level(I)}, sorted
        std::vector<std::int8_t> signs;    // +-1, aligned with cells
    };

    int depth = 0;                    // K: blocks exist for level(I) <= K
    std::vector<int> frequencies;     // m_0 .. m_K, strictly increasing
    std::vector<Block> blocks;        // indexed by iota(I), entry 0 unused

    const Block& block(DyadicInterval I) const;
    Block& block(DyadicInterval I);
    int frequencyOf(std::uint32_t level) const { return frequencies.at(level); }
    std::size_t intervalCount() const { return (std::size_t{2} << depth) - 1; }

    /// h~_I = h_I, m_i = i.
    static FaithfulHaarSystem trivial(int depth);

    /// Random valid system for the given frequency schedule: the support
    /// recursion is enforced by construction, signs are drawn from the seed.
    static FaithfulHaarSystem random(const std::vector<int>& frequencies,
                                     std::uint64_t seed);
};

/// Total support cell budget for composition outputs.
inline constexpr std::size_t kComposeCellCap = std::size_t{1} << 24;

/// Structural validation: disjoint supports at the declared frequency per
/// clause, the support recursion Gamma_{I+-} = {h~_I = +-1}, sign values,
/// and |Gamma_I| = |I|. Returns human-readable violations; empty means valid.
std::vector<std::string> validate(const FaithfulHaarSystem& sys);

/// Substitution H2 * H1: the level-i block of the result expands each
/// support interval of H2 (a level-m^{(2)}_i interval, read as an index into
/// H1) through H1. Frequencies compose as n_{m_i}.
FaithfulHaarSystem compose(const FaithfulHaarSystem& H2, const FaithfulHaarSystem& H1);

/// B maps plain tensor coefficients onto the system pair: the output is the
/// plain-basis expansion of sum a_{I,J} h~_I x k~_J.
HaarCoefficients2D operatorB(const FaithfulHaarSystem& H, const FaithfulHaarSystem& K,
                             const HaarCoefficients2D& z);

/// A recovers coefficients: a'_{I,J} = <h~_I x k~_J, z> / (|I||J|).
HaarCoefficients2D operatorA(const FaithfulHaarSystem& H, const FaithfulHaarSystem& K,
                             const HaarCoefficients2D& z);

/// D restricted to the system pair: dense multiplier whose entries average
/// the entries of D over the support product at the frequency levels.
HaarMultiplier2D restrictMultiplier(const HaarMultiplier2D& D, const FaithfulHaarSystem& H,
                                    const FaithfulHaarSystem& K);

/// One-parameter restriction: dtilde_I = sum_{L in supp h~_I} (|L|/|I|) d_L.
HaarMultiplier1D restrictMultiplier1D(const HaarMultiplier1D& D,
                                      const FaithfulHaarSystem& H);

/// Exact multiset equality of the distributions of sum a_I h_I and
/// sum a_I h~_I, coefficients keyed by iota.
bool distributionPreserved(const FaithfulHaarSystem& H,
                           const std::vector<std::pair<std::uint64_t, double>>& coefficients);

/// Plain-basis 1D expansion of sum a_I h~_I (iota-keyed input coefficients).
std::vector<std::pair<std::uint64_t, double>> expandThroughSystem(
    const FaithfulHaarSystem& H, const std::vector<std::pair<std::uint64_t, double>>& coeffs);

}  // namespace haarstab
