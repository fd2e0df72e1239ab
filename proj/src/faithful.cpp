#include "haarstab/faithful.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "haarstab/rng.hpp"

namespace haarstab {

const FaithfulHaarSystem::Block& FaithfulHaarSystem::block(DyadicInterval I) const {
    if (static_cast<int>(I.level) > depth)
        throw std::out_of_range("interval level beyond system depth");
    return blocks[iota(I)];
}

FaithfulHaarSystem::Block& FaithfulHaarSystem::block(DyadicInterval I) {
    if (static_cast<int>(I.level) > depth)
        throw std::out_of_range("interval level beyond system depth");
    return blocks[iota(I)];
}

FaithfulHaarSystem FaithfulHaarSystem::trivial(int depth) {
    FaithfulHaarSystem sys;
    sys.depth = depth;
    sys.frequencies.resize(depth + 1);
    for (int i = 0; i <= depth; ++i) sys.frequencies[i] = i;
    sys.blocks.resize(sys.intervalCount() + 1);
    for (int i = 0; i <= depth; ++i)
        for (std::uint64_t c = 0; c < (std::uint64_t{1} << i); ++c) {
            auto& b = sys.blocks[iota(DyadicInterval(i, c))];
            b.cells = {c};
            b.signs = {1};
        }
    return sys;
}

FaithfulHaarSystem FaithfulHaarSystem::random(const std::vector<int>& frequencies,
                                              std::uint64_t seed) {
    if (frequencies.empty()) throw std::invalid_argument("need at least one frequency");
    for (std::size_t i = 0; i + 1 < frequencies.size(); ++i)
        if (frequencies[i] >= frequencies[i + 1])
            throw std::invalid_argument("frequencies must be strictly increasing");
    for (std::size_t i = 0; i < frequencies.size(); ++i)
        if (frequencies[i] < static_cast<int>(i))
            throw std::invalid_argument("frequency m_i must be at least i");
    FaithfulHaarSystem sys;
    sys.depth = static_cast<int>(frequencies.size()) - 1;
    sys.frequencies = frequencies;
    sys.blocks.resize(sys.intervalCount() + 1);

    auto& root = sys.blocks[1];
    const std::uint64_t m0cells = std::uint64_t{1} << frequencies[0];
    root.cells.resize(m0cells);
    root.signs.resize(m0cells);
    for (std::uint64_t c = 0; c < m0cells; ++c) {
        root.cells[c] = c;
        root.signs[c] = static_cast<std::int8_t>(rng::toSign(rng::hash3(seed, 0, c)));
    }

    for (int i = 0; i < sys.depth; ++i) {
        const int gap = frequencies[i + 1] - frequencies[i] - 1;  // >= 0
        for (std::uint64_t ci = 0; ci < (std::uint64_t{1} << i); ++ci) {
            DyadicInterval I(i, ci);
            const auto& b = sys.blocks[iota(I)];
            for (int omega = 0; omega < 2; ++omega) {
                DyadicInterval child = omega == 0 ? leftHalf(I) : rightHalf(I);
                auto& cb = sys.blocks[iota(child)];
                for (std::size_t c = 0; c < b.cells.size(); ++c) {
                    // the omega-half of each support cell, refined to m_{i+1}
                    const std::uint64_t half =
                        2 * b.cells[c] + ((b.signs[c] > 0) == (omega == 0) ? 0 : 1);
                    const std::uint64_t base = half << gap;
                    for (std::uint64_t r = 0; r < (std::uint64_t{1} << gap); ++r)
                        cb.cells.push_back(base + r);
                }
                std::sort(cb.cells.begin(), cb.cells.end());
                cb.signs.resize(cb.cells.size());
                for (std::size_t c = 0; c < cb.cells.size(); ++c)
                    cb.signs[c] = static_cast<std::int8_t>(
                        rng::toSign(rng::hash4(seed, i + 1, iota(child), cb.cells[c])));
            }
        }
    }
    return sys;
}

std::vector<std::string> validate(const FaithfulHaarSystem& sys) {
    std::vector<std::string> v;
    auto note = [&](const std::string& s) {
        if (v.size() < 64) v.push_back(s);
    };
    if (sys.frequencies.size() != static_cast<std::size_t>(sys.depth) + 1) {
        note("frequency list size does not match depth");
        return v;
    }
    for (int i = 0; i <= sys.depth; ++i) {
        if (sys.frequencies[i] < i) note("frequency m_" + std::to_string(i) + " below level");
        if (i > 0 && sys.frequencies[i] <= sys.frequencies[i - 1])
            note("frequencies not strictly increasing at i=" + std::to_string(i));
    }
    if (!v.empty()) return v;
    if (sys.blocks.size() < sys.intervalCount() + 1) {
        note("block table too small");
        return v;
    }

    for (int i = 0; i <= sys.depth; ++i) {
        const int m = sys.frequencies[i];
        for (std::uint64_t ci = 0; ci < (std::uint64_t{1} << i); ++ci) {
            DyadicInterval I(i, ci);
            const auto& b = sys.blocks[iota(I)];
            const std::string tag = "I=(level " + std::to_string(i) + ", index " +
                                    std::to_string(ci) + ")";
            if (b.cells.size() != b.signs.size()) {
                note(tag + ": cells/signs size mismatch");
                continue;
            }
            if (b.cells.size() != (std::uint64_t{1} << (m - i))) {
                note(tag + ": |Gamma_I| != |I| (cell count " +
                     std::to_string(b.cells.size()) + ")");
                continue;
            }
            bool sortedUnique = std::is_sorted(b.cells.begin(), b.cells.end()) &&
                                std::adjacent_find(b.cells.begin(), b.cells.end()) ==
                                    b.cells.end();
            if (!sortedUnique) note(tag + ": support cells not sorted/disjoint");
            for (std::size_t c = 0; c < b.cells.size(); ++c) {
                if (b.cells[c] >= (std::uint64_t{1} << m)) {
                    note(tag + ": support cell out of range at frequency level");
                    break;
                }
                if (b.signs[c] != 1 && b.signs[c] != -1) {
                    note(tag + ": sign not in {-1, +1}");
                    break;
                }
            }
        }
    }
    if (!v.empty()) return v;

    // Gamma_{[0,1)} = [0,1)
    {
        const auto& root = sys.blocks[1];
        for (std::size_t c = 0; c < root.cells.size(); ++c)
            if (root.cells[c] != c) {
                note("root support is not all of [0,1)");
                break;
            }
    }

    // support recursion: Gamma_{I^omega} = { h~_I = omega }
    for (int i = 0; i < sys.depth; ++i) {
        const int m = sys.frequencies[i];
        const int m1 = sys.frequencies[i + 1];
        const int shift = m1 - m - 1;  // refinement from half-cells to m_{i+1}
        for (std::uint64_t ci = 0; ci < (std::uint64_t{1} << i); ++ci) {
            DyadicInterval I(i, ci);
            const auto& b = sys.blocks[iota(I)];
            std::unordered_set<std::uint64_t> plusHalves, minusHalves;
            for (std::size_t c = 0; c < b.cells.size(); ++c) {
                plusHalves.insert(2 * b.cells[c] + (b.signs[c] > 0 ? 0 : 1));
                minusHalves.insert(2 * b.cells[c] + (b.signs[c] > 0 ? 1 : 0));
            }
            for (int omega = 0; omega < 2; ++omega) {
                DyadicInterval child = omega == 0 ? leftHalf(I) : rightHalf(I);
                const auto& half = omega == 0 ? plusHalves : minusHalves;
                const auto& cb = sys.blocks[iota(child)];
                for (std::uint64_t cell : cb.cells)
                    if (!half.count(cell >> shift)) {
                        note("support recursion broken at I=(level " + std::to_string(i) +
                             ", index " + std::to_string(ci) + "), child " +
                             (omega == 0 ? "+" : "-"));
                        break;
                    }
            }
        }
    }
    return v;
}

FaithfulHaarSystem compose(const FaithfulHaarSystem& H2, const FaithfulHaarSystem& H1) {
    for (int i = 0; i <= H2.depth; ++i)
        if (H2.frequencies[i] > H1.depth)
            throw std::invalid_argument(
                "composition depth mismatch: outer frequency exceeds inner depth");
    FaithfulHaarSystem out;
    out.depth = H2.depth;
    out.frequencies.resize(H2.depth + 1);
    for (int i = 0; i <= H2.depth; ++i)
        out.frequencies[i] = H1.frequencies[H2.frequencies[i]];
    out.blocks.resize(out.intervalCount() + 1);

    std::size_t totalCells = 0;
    for (int i = 0; i <= H2.depth; ++i) {
        const int mid = H2.frequencies[i];
        for (std::uint64_t ci = 0; ci < (std::uint64_t{1} << i); ++ci) {
            DyadicInterval I(i, ci);
            const auto& b2 = H2.blocks[iota(I)];
            auto& b3 = out.blocks[iota(I)];
            std::vector<std::pair<std::uint64_t, std::int8_t>> acc;
            for (std::size_t c = 0; c < b2.cells.size(); ++c) {
                DyadicInterval inner(static_cast<std::uint32_t>(mid), b2.cells[c]);
                const auto& b1 = H1.blocks[iota(inner)];
                for (std::size_t d = 0; d < b1.cells.size(); ++d)
                    acc.emplace_back(b1.cells[d],
                                     static_cast<std::int8_t>(b2.signs[c] * b1.signs[d]));
            }
            std::sort(acc.begin(), acc.end());
            b3.cells.resize(acc.size());
            b3.signs.resize(acc.size());
            for (std::size_t c = 0; c < acc.size(); ++c) {
                b3.cells[c] = acc[c].first;
                b3.signs[c] = acc[c].second;
            }
            totalCells += acc.size();
            if (totalCells > kComposeCellCap)
                throw std::length_error("composition exceeds the support cell budget");
        }
    }
    return out;
}

HaarCoefficients2D operatorB(const FaithfulHaarSystem& H, const FaithfulHaarSystem& K,
                             const HaarCoefficients2D& z) {
    if (z.maxLevelFirst > H.depth || z.maxLevelSecond > K.depth)
        throw std::out_of_range("coefficient levels exceed system depths");
    HaarCoefficients2D out;
    for (const auto& [k, a] : z.entries) {
        DyadicInterval I = fromIota(HaarCoefficients2D::keyI(k));
        DyadicInterval J = fromIota(HaarCoefficients2D::keyJ(k));
        const auto& bh = H.block(I);
        const auto& bk = K.block(J);
        const std::uint32_t mH = static_cast<std::uint32_t>(H.frequencies[I.level]);
        const std::uint32_t mK = static_cast<std::uint32_t>(K.frequencies[J.level]);
        for (std::size_t c = 0; c < bh.cells.size(); ++c)
            for (std::size_t d = 0; d < bk.cells.size(); ++d)
                out.add(DyadicInterval(mH, bh.cells[c]), DyadicInterval(mK, bk.cells[d]),
                        a * bh.signs[c] * bk.signs[d]);
    }
    return out;
}

namespace {

/// Per frequency level: cell -> (owning iota, sign); 0 means unowned.
struct OwnershipMaps {
    std::vector<int> levels;  // frequency of each system level
    std::vector<std::vector<std::uint64_t>> owner;
    std::vector<std::vector<std::int8_t>> sign;

    explicit OwnershipMaps(const FaithfulHaarSystem& S) {
        levels = S.frequencies;
        owner.resize(S.depth + 1);
        sign.resize(S.depth + 1);
        for (int i = 0; i <= S.depth; ++i) {
            owner[i].assign(std::size_t{1} << S.frequencies[i], 0);
            sign[i].assign(std::size_t{1} << S.frequencies[i], 0);
            for (std::uint64_t ci = 0; ci < (std::uint64_t{1} << i); ++ci) {
                DyadicInterval I(i, ci);
                const auto& b = S.blocks[iota(I)];
                for (std::size_t c = 0; c < b.cells.size(); ++c) {
                    owner[i][b.cells[c]] = iota(I);
                    sign[i][b.cells[c]] = b.signs[c];
                }
            }
        }
    }
};

}  // namespace

HaarCoefficients2D operatorA(const FaithfulHaarSystem& H, const FaithfulHaarSystem& K,
                             const HaarCoefficients2D& z) {
    OwnershipMaps ownH(H), ownK(K);
    // frequency level -> system level
    std::vector<int> levH(H.frequencies.back() + 1, -1), levK(K.frequencies.back() + 1, -1);
    for (int i = 0; i <= H.depth; ++i) levH[H.frequencies[i]] = i;
    for (int j = 0; j <= K.depth; ++j) levK[K.frequencies[j]] = j;

    HaarCoefficients2D out;
    out.maxLevelFirst = H.depth;
    out.maxLevelSecond = K.depth;
    for (const auto& [k, a] : z.entries) {
        const std::uint64_t iI = HaarCoefficients2D::keyI(k);
        const std::uint64_t iJ = HaarCoefficients2D::keyJ(k);
        const int lI = static_cast<int>(iotaLevel(iI));
        const int lJ = static_cast<int>(iotaLevel(iJ));
        if (lI >= static_cast<int>(levH.size()) || levH[lI] < 0) continue;
        if (lJ >= static_cast<int>(levK.size()) || levK[lJ] < 0) continue;
        const int i = levH[lI], j = levK[lJ];
        const std::uint64_t cellI = iI - (std::uint64_t{1} << lI);
        const std::uint64_t cellJ = iJ - (std::uint64_t{1} << lJ);
        const std::uint64_t ownerI = ownH.owner[i][cellI];
        const std::uint64_t ownerJ = ownK.owner[j][cellJ];
        if (ownerI == 0 || ownerJ == 0) continue;
        const double sg = ownH.sign[i][cellI] * ownK.sign[j][cellJ];
        // |K||L| / (|I||J|) with |K| = 2^-m_i, |I| = 2^-i
        const double w = std::ldexp(1.0, -(lI - i) - (lJ - j));
        out.entries[HaarCoefficients2D::key(ownerI, ownerJ)] += sg * w * a;
    }
    // drop exact zeros introduced by accumulation
    for (auto it = out.entries.begin(); it != out.entries.end();)
        it = it->second == 0.0 ? out.entries.erase(it) : std::next(it);
    return out;
}

HaarMultiplier2D restrictMultiplier(const HaarMultiplier2D& D, const FaithfulHaarSystem& H,
                                    const FaithfulHaarSystem& K) {
    if (H.frequencies.back() > D.maxLevelFirst() || K.frequencies.back() > D.maxLevelSecond())
        throw std::out_of_range("system frequency exceeds the multiplier's declared range");
    HaarMultiplier2D out = HaarMultiplier2D::dense(H.depth, K.depth);

    if (D.backing() == HaarMultiplier2D::Backing::LevelHomogeneous) {
        for (int i = 0; i <= H.depth; ++i)
            for (int j = 0; j <= K.depth; ++j) {
                const double d = D.levelMatrix()[H.frequencies[i]][K.frequencies[j]];
                for (std::uint64_t a = 0; a < (std::uint64_t{1} << i); ++a)
                    for (std::uint64_t b = 0; b < (std::uint64_t{1} << j); ++b)
                        out.setEntry(DyadicInterval(i, a), DyadicInterval(j, b), d);
            }
        return out;
    }

    OwnershipMaps ownH(H), ownK(K);
    for (int i = 0; i <= H.depth; ++i) {
        const int m = H.frequencies[i];
        for (int j = 0; j <= K.depth; ++j) {
            const int n = K.frequencies[j];
            const std::size_t rows = std::size_t{1} << i, cols = std::size_t{1} << j;
            std::vector<double> sums(rows * cols, 0.0), comp(rows * cols, 0.0);
            auto accumulate = [&](std::uint64_t cellL, std::uint64_t cellM, double d) {
                const std::uint64_t oI = ownH.owner[i][cellL];
                const std::uint64_t oJ = ownK.owner[j][cellM];
                const std::size_t slot = (oI - rows) * cols + (oJ - cols);
                double y = d - comp[slot];
                double t = sums[slot] + y;
                comp[slot] = (t - sums[slot]) - y;
                sums[slot] = t;
            };
            if (D.backing() == HaarMultiplier2D::Backing::Dense) {
                const std::uint64_t loI = std::uint64_t{1} << m, loJ = std::uint64_t{1} << n;
                for (const auto& [key, d] : D.denseEntries()) {
                    const std::uint64_t iL = HaarCoefficients2D::keyI(key);
                    const std::uint64_t iM = HaarCoefficients2D::keyJ(key);
                    if (iL < loI || iL >= 2 * loI || iM < loJ || iM >= 2 * loJ) continue;
                    accumulate(iL - loI, iM - loJ, d);
                }
            } else {
                const std::uint64_t loI = std::uint64_t{1} << m, loJ = std::uint64_t{1} << n;
                for (std::uint64_t cl = 0; cl < loI; ++cl) {
                    const std::uint64_t st = rng::hash2(D.seed(), loI + cl);
                    for (std::uint64_t cm = 0; cm < loJ; ++cm)
                        accumulate(cl, cm,
                                   D.amplitude() * rng::toSymmetric(rng::hash2(st, loJ + cm)));
                }
            }
            const double w = std::ldexp(1.0, -(m - i) - (n - j));
            for (std::uint64_t a = 0; a < rows; ++a)
                for (std::uint64_t b = 0; b < cols; ++b)
                    out.setEntry(DyadicInterval(i, a), DyadicInterval(j, b),
                                 sums[a * cols + b] * w);
        }
    }
    return out;
}

HaarMultiplier1D restrictMultiplier1D(const HaarMultiplier1D& D,
                                      const FaithfulHaarSystem& H) {
    if (H.frequencies.back() > D.maxLevel)
        throw std::out_of_range("system frequency exceeds the multiplier's declared range");
    HaarMultiplier1D out(H.depth);
    for (int i = 0; i <= H.depth; ++i) {
        const int m = H.frequencies[i];
        for (std::uint64_t ci = 0; ci < (std::uint64_t{1} << i); ++ci) {
            DyadicInterval I(i, ci);
            const auto& b = H.blocks[iota(I)];
            double s = 0.0, c = 0.0;
            for (std::uint64_t cell : b.cells) {
                const double d = D.entries[(std::uint64_t{1} << m) + cell];
                double y = d - c, t = s + y;
                c = (t - s) - y;
                s = t;
            }
            out.set(I, s * std::ldexp(1.0, -(m - i)));
        }
    }
    return out;
}

std::vector<std::pair<std::uint64_t, double>> expandThroughSystem(
    const FaithfulHaarSystem& H,
    const std::vector<std::pair<std::uint64_t, double>>& coeffs) {
    std::vector<std::pair<std::uint64_t, double>> out;
    for (const auto& [io, a] : coeffs) {
        DyadicInterval I = fromIota(io);
        const auto& b = H.block(I);
        const std::uint64_t base = std::uint64_t{1} << H.frequencies[I.level];
        for (std::size_t c = 0; c < b.cells.size(); ++c)
            out.emplace_back(base + b.cells[c], a * b.signs[c]);
    }
    return out;
}

bool distributionPreserved(const FaithfulHaarSystem& H,
                           const std::vector<std::pair<std::uint64_t, double>>& coefficients) {
    int maxLvl = 0;
    for (const auto& [io, a] : coefficients)
        maxLvl = std::max(maxLvl, static_cast<int>(iotaLevel(io)));
    if (maxLvl > H.depth)
        throw std::out_of_range("coefficient level beyond system depth");
    StepFunction1D plain = synthesize1D(coefficients, maxLvl + 1);
    StepFunction1D faithful =
        synthesize1D(expandThroughSystem(H, coefficients), H.frequencies[maxLvl] + 1);
    return distribution(plain) == distribution(faithful);
}

}  // namespace haarstab
