#include "haarstab/stabilizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "haarstab/rng.hpp"

namespace haarstab {

EtaSchedule EtaSchedule::flat(double v) {
    if (!(v > 0.0)) throw std::invalid_argument("eta values must be positive");
    EtaSchedule s;
    s.eta = [v](int, int) { return v; };
    s.summable = false;
    return s;
}

EtaSchedule EtaSchedule::geometric(double scale, double ratio) {
    if (!(scale > 0.0) || !(ratio > 0.0) || !(ratio < 1.0))
        throw std::invalid_argument("geometric schedule needs scale > 0 and ratio in (0,1)");
    EtaSchedule s;
    s.eta = [scale, ratio](int i, int j) { return scale * std::pow(ratio, i + j); };
    s.summable = ratio < 0.25;
    return s;
}

bool EtaSchedule::checkSummability(int range) const {
    for (int i0 = 0; i0 <= range; ++i0)
        for (int j0 = 0; j0 <= range; ++j0) {
            double tailRow = 0.0, tailCol = 0.0;
            for (int j = j0 + 1; j <= range; ++j) tailRow += eta(i0, j);
            for (int i = i0 + 1; i <= range; ++i) tailCol += eta(i, j0);
            if (!(tailRow < eta(i0, j0) / 3.0)) return false;
            if (!(tailCol < eta(i0, j0) / 3.0)) return false;
        }
    return true;
}

std::string stageName(StabilizeStage s) {
    switch (s) {
        case StabilizeStage::Triangular: return "triangular";
        case StabilizeStage::Superdiagonal: return "superdiagonal";
        case StabilizeStage::Diagonal: return "diagonal";
        case StabilizeStage::Balancing: return "balancing";
    }
    return "?";
}

namespace {

struct KahanSum {
    double s = 0.0, c = 0.0;
    void add(double v) {
        double y = v - c;
        double t = s + y;
        c = (t - s) - y;
        s = t;
    }
};

std::vector<std::uint64_t> allCellsAt(int level) {
    std::vector<std::uint64_t> v(std::size_t{1} << level);
    std::iota(v.begin(), v.end(), 0);
    return v;
}

/// Average of the multiplier entries at level pair (freqF, freqS) over the
/// product of two cell unions given at coarser levels.
double productAverage(const HaarMultiplier2D& D, const std::vector<std::uint64_t>& cellsF,
                      int cellLevelF, int freqF, const std::vector<std::uint64_t>& cellsS,
                      int cellLevelS, int freqS) {
    if (freqF < cellLevelF || freqS < cellLevelS)
        throw std::logic_error("average requested above the cell level");
    if (freqF > D.maxLevelFirst() || freqS > D.maxLevelSecond())
        throw StabilizerError("frequency budget exhausted: level " + std::to_string(freqF) +
                              "/" + std::to_string(freqS) + " beyond the declared multiplier");
    const int shF = freqF - cellLevelF, shS = freqS - cellLevelS;
    const double summands = std::ldexp(static_cast<double>(cellsF.size()), shF) *
                            std::ldexp(static_cast<double>(cellsS.size()), shS);
    if (summands > 67108864.0)
        throw StabilizerError("per-entry averaging cost exceeds the 2^26 cap");
    const std::uint64_t baseF = std::uint64_t{1} << freqF;
    const std::uint64_t baseS = std::uint64_t{1} << freqS;
    KahanSum acc;
    if (D.backing() == HaarMultiplier2D::Backing::SeededRandom) {
        const double amp = D.amplitude();
        for (std::uint64_t cf : cellsF)
            for (std::uint64_t rf = cf << shF; rf < (cf + 1) << shF; ++rf) {
                const std::uint64_t st = rng::hash2(D.seed(), baseF + rf);
                for (std::uint64_t cs : cellsS)
                    for (std::uint64_t rs = cs << shS; rs < (cs + 1) << shS; ++rs)
                        acc.add(amp * rng::toSymmetric(rng::hash2(st, baseS + rs)));
            }
    } else if (D.backing() == HaarMultiplier2D::Backing::LevelHomogeneous) {
        return D.levelMatrix()[freqF][freqS];
    } else {
        const auto& map = D.denseEntries();
        for (std::uint64_t cf : cellsF)
            for (std::uint64_t rf = cf << shF; rf < (cf + 1) << shF; ++rf)
                for (std::uint64_t cs : cellsS)
                    for (std::uint64_t rs = cs << shS; rs < (cs + 1) << shS; ++rs) {
                        auto it = map.find(
                            HaarCoefficients2D::key(baseF + rf, baseS + rs));
                        if (it != map.end()) acc.add(it->second);
                    }
    }
    const double count = std::ldexp(static_cast<double>(cellsF.size()), shF) *
                         std::ldexp(static_cast<double>(cellsS.size()), shS);
    return acc.s / count;
}

double cellAverage1D(const CoefficientField1D& f, const std::vector<std::uint64_t>& cells,
                     int cellLevel, int freq) {
    const int sh = freq - cellLevel;
    KahanSum acc;
    for (std::uint64_t c : cells)
        for (std::uint64_t r = c << sh; r < (c + 1) << sh; ++r) acc.add(f(freq, r));
    return acc.s / std::ldexp(static_cast<double>(cells.size()), sh);
}

std::vector<std::uint64_t> refineCells(const std::vector<std::uint64_t>& cells, int shift) {
    std::vector<std::uint64_t> out;
    out.reserve(cells.size() << shift);
    for (std::uint64_t c : cells)
        for (std::uint64_t r = c << shift; r < (c + 1) << shift; ++r) out.push_back(r);
    return out;
}

std::vector<std::uint64_t> halfCells(const std::vector<std::uint64_t>& cells,
                                     const std::vector<std::int8_t>& signs, int omega) {
    std::vector<std::uint64_t> out(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c)
        out[c] = 2 * cells[c] + ((signs[c] > 0) == (omega > 0) ? 0 : 1);
    return out;
}

std::vector<std::int8_t> drawSigns(std::uint64_t seed, std::uint64_t tag, int attempt,
                                   const std::vector<std::uint64_t>& cells) {
    std::vector<std::int8_t> s(cells.size());
    const std::uint64_t st = rng::hash3(seed, tag, static_cast<std::uint64_t>(attempt));
    for (std::size_t c = 0; c < cells.size(); ++c)
        s[c] = static_cast<std::int8_t>(rng::toSign(rng::hash2(st, cells[c])));
    return s;
}

}  // namespace

Split1D randomSplit1D(const std::vector<std::uint64_t>& gammaCells, int m, int n,
                      const std::vector<CoefficientField1D>& families, double delta,
                      std::uint64_t seed, int retryLimit, bool enforceVarianceBudget) {
    if (m >= n) throw std::invalid_argument("split needs m < n");
    if (gammaCells.empty()) throw std::invalid_argument("empty support");
    const double gammaMeasure = std::ldexp(static_cast<double>(gammaCells.size()), -m);

    if (enforceVarianceBudget) {
        double maxEntry = 0.0;
        for (const auto& f : families)
            for (std::uint64_t c : gammaCells)
                for (std::uint64_t r = c << (n - m); r < (c + 1) << (n - m); ++r)
                    maxEntry = std::max(maxEntry, std::fabs(f(n, r)));
        const double bound = std::ldexp(1.0, -m) / gammaMeasure * maxEntry * maxEntry *
                             static_cast<double>(families.size());
        if (bound > delta * delta / 4.0)
            throw StabilizerError("variance budget violated: deepen the target level");
    }

    std::vector<double> parent(families.size()), allowance(families.size());
    for (std::size_t a = 0; a < families.size(); ++a) {
        parent[a] = cellAverage1D(families[a], gammaCells, m, m);
        const double fine = cellAverage1D(families[a], gammaCells, m, n);
        allowance[a] = delta + std::fabs(parent[a] - fine);
    }

    for (int attempt = 0; attempt < retryLimit; ++attempt) {
        Split1D r;
        r.signs = drawSigns(seed, 0x51ULL, attempt, gammaCells);
        r.plusCells = halfCells(gammaCells, r.signs, +1);
        r.minusCells = halfCells(gammaCells, r.signs, -1);
        r.draws = attempt + 1;
        bool ok = true;
        for (std::size_t a = 0; a < families.size() && ok; ++a) {
            const double ap = cellAverage1D(families[a], r.plusCells, m + 1, n);
            const double am = cellAverage1D(families[a], r.minusCells, m + 1, n);
            ok = std::fabs(ap - parent[a]) <= allowance[a] &&
                 std::fabs(am - parent[a]) <= allowance[a];
        }
        if (ok) return r;
    }
    throw StabilizerError("random split retry limit exhausted");
}

Split2D randomSplit2D(const HaarMultiplier2D& D, const std::vector<std::uint64_t>& gammaCells,
                      int i, const std::vector<std::uint64_t>& deltaCells, int j, int k, int l,
                      double delta, std::uint64_t seed, int retryLimit,
                      bool enforceVarianceBudget) {
    if (i >= k || j >= l) throw std::invalid_argument("split needs i < k and j < l");
    const double gm = std::ldexp(static_cast<double>(gammaCells.size()), -i);
    const double dm = std::ldexp(static_cast<double>(deltaCells.size()), -j);

    if (enforceVarianceBudget) {
        const double sup = D.supNorm();
        const double bound =
            4.0 * sup * sup * (std::ldexp(1.0, -i) / gm + std::ldexp(1.0, -j) / dm) * 4.0;
        if (bound > delta * delta / 4.0)
            throw StabilizerError("variance budget violated: deepen the target levels");
    }

    const double parent = productAverage(D, gammaCells, i, i, deltaCells, j, j);
    const double fine = productAverage(D, gammaCells, i, k, deltaCells, j, l);
    const double allowance = delta + std::fabs(parent - fine);

    for (int attempt = 0; attempt < retryLimit; ++attempt) {
        Split2D r;
        r.signsFirst = drawSigns(seed, 0x2d1ULL, attempt, gammaCells);
        r.signsSecond = drawSigns(seed, 0x2d2ULL, attempt, deltaCells);
        r.plusFirst = halfCells(gammaCells, r.signsFirst, +1);
        r.minusFirst = halfCells(gammaCells, r.signsFirst, -1);
        r.plusSecond = halfCells(deltaCells, r.signsSecond, +1);
        r.minusSecond = halfCells(deltaCells, r.signsSecond, -1);
        r.draws = attempt + 1;
        bool ok = true;
        for (int w = 0; w < 2 && ok; ++w)
            for (int x = 0; x < 2 && ok; ++x) {
                const auto& cf = w ? r.minusFirst : r.plusFirst;
                const auto& cs = x ? r.minusSecond : r.plusSecond;
                ok = std::fabs(productAverage(D, cf, i + 1, k, cs, j + 1, l) - parent) <=
                     allowance;
            }
        if (ok) return r;
    }
    throw StabilizerError("random split retry limit exhausted");
}

namespace {

/// Incrementally built faithful system: blocks get cells when the parent's
/// signs are fixed, and signs when their own draw is accepted.
struct SystemBuilder {
    FaithfulHaarSystem sys;

    SystemBuilder(int depth, std::vector<int> freqs) {
        sys.depth = depth;
        sys.frequencies = std::move(freqs);
        sys.blocks.resize(sys.intervalCount() + 1);
        auto& root = sys.blocks[1];
        root.cells = allCellsAt(sys.frequencies[0]);
    }

    // fix the signs of I and derive both children's support cells
    void applySigns(DyadicInterval I, std::vector<std::int8_t> signs) {
        auto& b = sys.blocks[iota(I)];
        b.signs = std::move(signs);
        const int i = static_cast<int>(I.level);
        if (i + 1 > sys.depth) return;
        const int shift = sys.frequencies[i + 1] - sys.frequencies[i] - 1;
        sys.blocks[iota(leftHalf(I))].cells = refineCells(halfCells(b.cells, b.signs, +1), shift);
        sys.blocks[iota(rightHalf(I))].cells =
            refineCells(halfCells(b.cells, b.signs, -1), shift);
    }

    // omega-half of the support of I, at frequency level m_{level(I)} + 1
    std::vector<std::uint64_t> omegaHalf(DyadicInterval I, int omega) const {
        const auto& b = sys.blocks[iota(I)];
        return halfCells(b.cells, b.signs, omega);
    }

    const std::vector<std::uint64_t>& cells(DyadicInterval I) const {
        return sys.blocks[iota(I)].cells;
    }
    int freq(int level) const { return sys.frequencies[level]; }
    int depth() const { return sys.depth; }
};

struct GameState {
    const HaarMultiplier2D& D;
    const EtaSchedule& eta;
    double delta;
    const StabilizeConfig& cfg;
    std::uint64_t seed;
    int draws = 0;

    double share() const { return cfg.stageShare; }

    [[noreturn]] void exhausted(const std::string& where) {
        throw StabilizerError("retry limit exhausted in " + where);
    }
};

/// avg of D at (freqF, freqS) over support(I in H) x support(J in K)
double entryAvg(GameState& g, const SystemBuilder& H, DyadicInterval I, int freqF,
                const SystemBuilder& K, DyadicInterval J, int freqS) {
    return productAverage(g.D, H.cells(I), H.freq(I.level), freqF, K.cells(J),
                          K.freq(J.level), freqS);
}

/// Interleaved triangular game; also verifies the diagonal, superdiagonal
/// and balancing instances that become determined along the way, so the
/// restriction enters the later stages already well conditioned.
void runTriangular(GameState& g, SystemBuilder& H, SystemBuilder& K, bool extendedChecks) {
    const int depthH = H.depth(), depthK = K.depth();
    for (int t = 0; t <= depthK; ++t) {
        // --- K-step t: signs for every J at level t ---
        for (std::uint64_t cj = 0; cj < (std::uint64_t{1} << t); ++cj) {
            DyadicInterval J(t, cj);
            const auto& cellsJ = K.cells(J);
            bool accepted = false;
            for (int attempt = 0; attempt < g.cfg.retryLimit && !accepted; ++attempt) {
                ++g.draws;
                auto signs = drawSigns(g.seed, 0x4b00ULL + iota(J) * 2, attempt, cellsJ);
                K.sys.blocks[iota(J)].signs = signs;  // provisional
                accepted = true;
                if (t + 1 > depthK) break;  // deepest level: free draw
                auto plusJ = halfCells(cellsJ, signs, +1);
                auto minusJ = halfCells(cellsJ, signs, -1);
                if (t == 0) {
                    if (!extendedChecks) break;
                    // balancing: the two root halves of the second system
                    const auto rootCells = allCellsAt(0);
                    const double dl = productAverage(g.D, rootCells, 0, H.freq(0), plusJ,
                                                     K.freq(0) + 1, K.freq(1));
                    const double dr = productAverage(g.D, rootCells, 0, H.freq(0), minusJ,
                                                     K.freq(0) + 1, K.freq(1));
                    accepted = std::fabs(dl - dr) <= g.share() * g.delta;
                    continue;
                }
                // upper instances ((i,t) -> (i,t+1)) for i < t within depthH
                for (int i = 0; i <= std::min(t - 1, depthH) && accepted; ++i) {
                    const double etaShare = g.share() * g.eta(i, t);
                    for (std::uint64_t ci = 0; ci < (std::uint64_t{1} << i) && accepted;
                         ++ci) {
                        DyadicInterval I(i, ci);
                        const double base = entryAvg(g, H, I, H.freq(i), K, J, K.freq(t));
                        for (int xi = 0; xi < 2 && accepted; ++xi) {
                            const auto& hc = xi ? minusJ : plusJ;
                            const double succ =
                                productAverage(g.D, H.cells(I), H.freq(i), H.freq(i),
                                               hc, K.freq(t) + 1, K.freq(t + 1));
                            accepted = std::fabs(base - succ) <= etaShare;
                        }
                    }
                }
                // superdiagonal instance ((t-1,t) -> (t,t+1))
                if (extendedChecks && accepted && t >= 1 && t <= depthH) {
                    const double etaShare = g.share() * g.eta(t - 1, t);
                    for (std::uint64_t ci = 0;
                         ci < (std::uint64_t{1} << (t - 1)) && accepted; ++ci) {
                        DyadicInterval I(t - 1, ci);
                        const double base = entryAvg(g, H, I, H.freq(t - 1), K, J, K.freq(t));
                        for (int w = 0; w < 2 && accepted; ++w) {
                            auto gw = H.omegaHalf(I, w ? -1 : +1);
                            for (int xi = 0; xi < 2 && accepted; ++xi) {
                                const auto& hc = xi ? minusJ : plusJ;
                                const double succ = productAverage(
                                    g.D, gw, H.freq(t - 1) + 1, H.freq(t), hc,
                                    K.freq(t) + 1, K.freq(t + 1));
                                accepted = std::fabs(base - succ) <= etaShare;
                            }
                        }
                    }
                }
            }
            if (!accepted) g.exhausted("triangular stage (second coordinate, level " +
                                       std::to_string(t) + ")");
            K.applySigns(J, K.sys.blocks[iota(J)].signs);
        }

        if (t > depthH) continue;
        // --- H-step t: signs for every I at level t ---
        for (std::uint64_t ci = 0; ci < (std::uint64_t{1} << t); ++ci) {
            DyadicInterval I(t, ci);
            const auto& cellsI = H.cells(I);
            bool accepted = false;
            for (int attempt = 0; attempt < g.cfg.retryLimit && !accepted; ++attempt) {
                ++g.draws;
                auto signs = drawSigns(g.seed, 0x4800ULL + iota(I) * 2 + 1, attempt, cellsI);
                H.sys.blocks[iota(I)].signs = signs;
                accepted = true;
                if (t + 1 > depthH) break;  // deepest level: free draw
                std::vector<std::uint64_t> gw[2] = {halfCells(cellsI, signs, +1),
                                                    halfCells(cellsI, signs, -1)};
                // lower instances ((t,j) -> (t+1,j)) for j <= t
                for (int j = 0; j <= std::min(t, depthK) && accepted; ++j) {
                    const double etaShare = g.share() * g.eta(t, j);
                    for (std::uint64_t cj = 0; cj < (std::uint64_t{1} << j) && accepted;
                         ++cj) {
                        DyadicInterval J(j, cj);
                        const double base = entryAvg(g, H, I, H.freq(t), K, J, K.freq(j));
                        for (int w = 0; w < 2 && accepted; ++w) {
                            const double succ = productAverage(
                                g.D, gw[w], H.freq(t) + 1, H.freq(t + 1), K.cells(J),
                                K.freq(j), K.freq(j));
                            accepted = std::fabs(base - succ) <= etaShare;
                        }
                    }
                }
                // diagonal instance ((t,t) -> (t+1,t+1))
                if (extendedChecks && accepted && t + 1 <= depthK) {
                    const double etaShare = g.share() * g.eta(t, t);
                    for (std::uint64_t cj = 0; cj < (std::uint64_t{1} << t) && accepted;
                         ++cj) {
                        DyadicInterval J(t, cj);
                        const double base = entryAvg(g, H, I, H.freq(t), K, J, K.freq(t));
                        for (int w = 0; w < 2 && accepted; ++w)
                            for (int x = 0; x < 2 && accepted; ++x) {
                                auto dx = K.omegaHalf(J, x ? -1 : +1);
                                const double succ = productAverage(
                                    g.D, gw[w], H.freq(t) + 1, H.freq(t + 1), dx,
                                    K.freq(t) + 1, K.freq(t + 1));
                                accepted = std::fabs(base - succ) <= etaShare;
                            }
                    }
                }
            }
            if (!accepted) g.exhausted("triangular stage (first coordinate, level " +
                                       std::to_string(t) + ")");
            H.applySigns(I, H.sys.blocks[iota(I)].signs);
        }
    }
}

/// Joint level-by-level splits for the superdiagonal (pairs (k,k+1)) or the
/// diagonal (pairs (k,k)) condition.
void runJointSplits(GameState& g, SystemBuilder& H, SystemBuilder& K, bool diagonalMode) {
    const int depthH = H.depth(), depthK = K.depth();
    if (!diagonalMode) {
        // free root draw for the second system
        auto signs = drawSigns(g.seed, 0xf00ULL, 0, K.cells(kUnitInterval));
        K.applySigns(kUnitInterval, std::move(signs));
        ++g.draws;
    }
    for (int k = 0; k <= std::max(depthH, depthK); ++k) {
        const int kLevel = diagonalMode ? k : k + 1;
        const bool hasH = k <= depthH;
        const bool hasK = kLevel <= depthK;
        if (!hasH && !hasK) break;
        // whether the instance ((k, kLevel) -> (k+1, kLevel+1)) can be verified
        const bool verifiable = hasH && hasK && k + 1 <= depthH && kLevel + 1 <= depthK;
        bool accepted = false;
        for (int attempt = 0; attempt < g.cfg.retryLimit && !accepted; ++attempt) {
            ++g.draws;
            if (hasH)
                for (std::uint64_t ci = 0; ci < (std::uint64_t{1} << k); ++ci) {
                    DyadicInterval I(k, ci);
                    H.sys.blocks[iota(I)].signs =
                        drawSigns(g.seed, 0xa00ULL + iota(I) * 2, attempt, H.cells(I));
                }
            if (hasK)
                for (std::uint64_t cj = 0; cj < (std::uint64_t{1} << kLevel); ++cj) {
                    DyadicInterval J(kLevel, cj);
                    K.sys.blocks[iota(J)].signs =
                        drawSigns(g.seed, 0xb00ULL + iota(J) * 2 + 1, attempt, K.cells(J));
                }
            accepted = true;
            if (!verifiable) break;
            const double etaShare = g.share() * g.eta(k, kLevel);
            for (std::uint64_t ci = 0; ci < (std::uint64_t{1} << k) && accepted; ++ci)
                for (std::uint64_t cj = 0; cj < (std::uint64_t{1} << kLevel) && accepted;
                     ++cj) {
                    DyadicInterval I(k, ci), J(kLevel, cj);
                    const double base =
                        entryAvg(g, H, I, H.freq(k), K, J, K.freq(kLevel));
                    for (int w = 0; w < 2 && accepted; ++w) {
                        auto gw = H.omegaHalf(I, w ? -1 : +1);
                        for (int x = 0; x < 2 && accepted; ++x) {
                            auto dx = K.omegaHalf(J, x ? -1 : +1);
                            const double succ = productAverage(
                                g.D, gw, H.freq(k) + 1, H.freq(k + 1), dx,
                                K.freq(kLevel) + 1, K.freq(kLevel + 1));
                            accepted = std::fabs(base - succ) <= etaShare;
                        }
                    }
                }
        }
        if (!accepted)
            g.exhausted(std::string(diagonalMode ? "diagonal" : "superdiagonal") +
                        " stage (level " + std::to_string(k) + ")");
        if (hasH)
            for (std::uint64_t ci = 0; ci < (std::uint64_t{1} << k); ++ci) {
                DyadicInterval I(k, ci);
                H.applySigns(I, H.sys.blocks[iota(I)].signs);
            }
        if (hasK)
            for (std::uint64_t cj = 0; cj < (std::uint64_t{1} << kLevel); ++cj) {
                DyadicInterval J(kLevel, cj);
                K.applySigns(J, K.sys.blocks[iota(J)].signs);
            }
    }
}

/// Root split of the second system against the balancing tolerance,
/// everything else drawn freely.
void runBalancing(GameState& g, SystemBuilder& H, SystemBuilder& K) {
    const int depthH = H.depth(), depthK = K.depth();
    // free draws for the first system
    for (int i = 0; i <= depthH; ++i)
        for (std::uint64_t ci = 0; ci < (std::uint64_t{1} << i); ++ci) {
            DyadicInterval I(i, ci);
            H.applySigns(I, drawSigns(g.seed, 0xc00ULL + iota(I) * 2, 0, H.cells(I)));
            ++g.draws;
        }
    // root of the second system: verified split
    {
        const auto& cells = K.cells(kUnitInterval);
        bool accepted = false;
        for (int attempt = 0; attempt < g.cfg.retryLimit && !accepted; ++attempt) {
            ++g.draws;
            auto signs = drawSigns(g.seed, 0xd00ULL, attempt, cells);
            K.sys.blocks[1].signs = signs;
            accepted = true;
            if (depthK >= 1) {
                auto plus = halfCells(cells, signs, +1);
                auto minus = halfCells(cells, signs, -1);
                const auto rootCells = allCellsAt(0);
                const double dl = productAverage(g.D, rootCells, 0, H.freq(0), plus,
                                                 K.freq(0) + 1, K.freq(1));
                const double dr = productAverage(g.D, rootCells, 0, H.freq(0), minus,
                                                 K.freq(0) + 1, K.freq(1));
                accepted = std::fabs(dl - dr) <= g.share() * g.delta;
            }
        }
        if (!accepted) g.exhausted("balancing stage (root)");
        K.applySigns(kUnitInterval, K.sys.blocks[1].signs);
    }
    for (int j = 1; j <= depthK; ++j)
        for (std::uint64_t cj = 0; cj < (std::uint64_t{1} << j); ++cj) {
            DyadicInterval J(j, cj);
            K.applySigns(J, drawSigns(g.seed, 0xe00ULL + iota(J) * 2 + 1, 0, K.cells(J)));
            ++g.draws;
        }
}

/// Interlaced schedule n_0 < m_0 < n_1 < ... within the budget; the second
/// coordinate may run deeper than the first. baseShift nudges all levels
/// down on pipeline retries, changing the drift picture of a failing step.
void interlacedSchedule(int depthH, int depthK, int budget, std::vector<int>& m,
                        std::vector<int>& n, int baseShift = 0) {
    const int deepest = 2 * std::max(depthK, depthH) + (depthH >= depthK ? 1 : 0);
    int base = std::min(3 + baseShift, budget - deepest);
    if (base < 1)
        throw StabilizerError("frequency budget exhausted: need at least " +
                              std::to_string(deepest + 1) + " levels");
    n.resize(depthK + 1);
    m.resize(depthH + 1);
    for (int j = 0; j <= depthK; ++j) n[j] = base + 2 * j;
    for (int i = 0; i <= depthH; ++i) m[i] = base + 2 * i + 1;
}

std::vector<int> increasingWithin(int count, int available, bool skipRoot) {
    // prefer the deepest levels; root skipped when there is room
    std::vector<int> v(count);
    int hi = available;
    for (int i = count - 1; i >= 0; --i) v[i] = hi--;
    if (v[0] < 0) throw StabilizerError("stage schedule does not fit the available depth");
    if (!skipRoot && v[0] > 0) {
        // shift down to include the root when freedom is not needed
        const int off = v[0];
        for (int& x : v) x -= off;
    }
    return v;
}

}  // namespace

ConditionReport checkConditions(const HaarMultiplier2D& D, const EtaSchedule& eta,
                                double delta, int depth) {
    if (depth + 1 > D.maxLevelFirst() || depth + 2 > D.maxLevelSecond())
        throw std::out_of_range("condition check needs entries to depth+1 / depth+2");
    ConditionReport r;
    r.depth = depth;
    double lower = 1e300, upper = 1e300, diag = 1e300, super = 1e300;

    for (int i = 0; i <= depth; ++i)
        for (int j = 0; j <= i; ++j)
            for (std::uint64_t a = 0; a < (std::uint64_t{1} << i); ++a)
                for (std::uint64_t b = 0; b < (std::uint64_t{1} << j); ++b) {
                    DyadicInterval I(i, a), J(j, b);
                    const double d = D.entry(I, J);
                    lower = std::min(lower,
                                     eta(i, j) - std::fabs(d - D.entry(leftHalf(I), J)));
                    lower = std::min(lower,
                                     eta(i, j) - std::fabs(d - D.entry(rightHalf(I), J)));
                }
    for (int j = 1; j <= depth; ++j)
        for (int i = 0; i < j; ++i)
            for (std::uint64_t a = 0; a < (std::uint64_t{1} << i); ++a)
                for (std::uint64_t b = 0; b < (std::uint64_t{1} << j); ++b) {
                    DyadicInterval I(i, a), J(j, b);
                    const double d = D.entry(I, J);
                    upper = std::min(upper,
                                     eta(i, j) - std::fabs(d - D.entry(I, leftHalf(J))));
                    upper = std::min(upper,
                                     eta(i, j) - std::fabs(d - D.entry(I, rightHalf(J))));
                }
    for (int i = 0; i <= depth; ++i)
        for (std::uint64_t a = 0; a < (std::uint64_t{1} << i); ++a)
            for (std::uint64_t b = 0; b < (std::uint64_t{1} << i); ++b) {
                DyadicInterval I(i, a), J(i, b);
                const double d = D.entry(I, J);
                for (int w = 0; w < 2; ++w)
                    for (int x = 0; x < 2; ++x) {
                        DyadicInterval Iw = w ? rightHalf(I) : leftHalf(I);
                        DyadicInterval Jx = x ? rightHalf(J) : leftHalf(J);
                        diag = std::min(diag, eta(i, i) - std::fabs(d - D.entry(Iw, Jx)));
                    }
            }
    for (int i = 0; i <= depth; ++i)
        for (std::uint64_t a = 0; a < (std::uint64_t{1} << i); ++a)
            for (std::uint64_t b = 0; b < (std::uint64_t{1} << (i + 1)); ++b) {
                DyadicInterval I(i, a), J(i + 1, b);
                const double d = D.entry(I, J);
                for (int w = 0; w < 2; ++w)
                    for (int x = 0; x < 2; ++x) {
                        DyadicInterval Iw = w ? rightHalf(I) : leftHalf(I);
                        DyadicInterval Jx = x ? rightHalf(J) : leftHalf(J);
                        super =
                            std::min(super, eta(i, i + 1) - std::fabs(d - D.entry(Iw, Jx)));
                    }
            }

    r.lower = lower;
    r.upper = upper;
    r.diagonal = diag;
    r.superdiagonal = super;
    r.balancing = delta - std::fabs(D.entry(kUnitInterval, DyadicInterval(1, 0)) -
                                    D.entry(kUnitInterval, DyadicInterval(1, 1)));
    r.pass = r.lower >= 0 && r.upper >= 0 && r.diagonal >= 0 && r.superdiagonal >= 0 &&
             r.balancing >= 0;
    return r;
}

OneParamStabilizeResult oneParamStabilize(const HaarMultiplier1D& D,
                                          const std::vector<double>& eta, LevelWindow window,
                                          const StabilizeConfig& config) {
    const int depth = config.outputDepth;
    if (static_cast<int>(eta.size()) < depth)
        throw std::invalid_argument("eta schedule shorter than the output depth");
    if (window.hi > D.maxLevel || window.lo < 0 || window.hi - window.lo < depth)
        throw StabilizerError("insufficient level window");

    // evenly spread frequencies across the window
    std::vector<int> m(depth + 1);
    for (int k = 0; k <= depth; ++k)
        m[k] = window.lo + (window.hi - window.lo) * k / depth;

    CoefficientField1D field = [&D](int level, std::uint64_t cell) {
        return D.entries[(std::uint64_t{1} << level) + cell];
    };

    // settling of the global averages across the window
    {
        double mn = 1e300, mx = -1e300;
        for (int k = 0; k <= depth; ++k) {
            const double e = cellAverage1D(field, allCellsAt(0), 0, m[k]);
            mn = std::min(mn, e);
            mx = std::max(mx, e);
        }
        if (mx - mn >= eta[0])
            throw StabilizerError(
                "entry averages do not settle within the window; widen or deepen it");
    }

    OneParamStabilizeResult res;
    SystemBuilder H(depth, m);
    int draws = 0;
    for (int i = 0; i <= depth; ++i) {
        for (std::uint64_t ci = 0; ci < (std::uint64_t{1} << i); ++ci) {
            DyadicInterval I(i, ci);
            const auto& cells = H.cells(I);
            bool accepted = false;
            for (int attempt = 0; attempt < config.retryLimit && !accepted; ++attempt) {
                ++draws;
                auto signs = drawSigns(config.seed, iota(I), attempt, cells);
                H.sys.blocks[iota(I)].signs = signs;
                accepted = true;
                if (i + 1 > depth) break;  // deepest level: free draw
                const double parent = cellAverage1D(field, cells, m[i], m[i]);
                for (int w = 0; w < 2 && accepted; ++w) {
                    auto hw = halfCells(cells, signs, w ? -1 : +1);
                    const double succ = cellAverage1D(field, hw, m[i] + 1, m[i + 1]);
                    accepted =
                        std::fabs(parent - succ) <= config.stageShare * eta[i];
                }
            }
            if (!accepted)
                throw StabilizerError("retry limit exhausted in one-parameter stabilization");
            H.applySigns(I, H.sys.blocks[iota(I)].signs);
        }
    }
    res.system = H.sys;
    res.retriesUsed = draws;
    res.Dtilde = restrictMultiplier1D(D, res.system);
    // verify-then-return: the produced multiplier must be eta-tree-stabilized
    for (int i = 0; i < depth; ++i)
        for (std::uint64_t ci = 0; ci < (std::uint64_t{1} << i); ++ci) {
            DyadicInterval I(i, ci);
            const double d = res.Dtilde.entry(I);
            if (std::fabs(d - res.Dtilde.entry(leftHalf(I))) > eta[i] ||
                std::fabs(d - res.Dtilde.entry(rightHalf(I))) > eta[i])
                throw StabilizerError("post-condition check failed after stabilization");
        }
    return res;
}

std::pair<FaithfulHaarSystem, FaithfulHaarSystem> stabilizeStage(
    const HaarMultiplier2D& D, StabilizeStage stage, const EtaSchedule& eta,
    const StabilizeConfig& config) {
    const int K = config.outputDepth;
    const int depthH = K + 1, depthK = K + 2;
    const int budget =
        std::min({config.frequencyBudget, D.maxLevelFirst(), D.maxLevelSecond()});
    GameState g{D, eta, config.deltaBalance, config, config.seed};

    std::vector<int> m, n;
    if (stage == StabilizeStage::Triangular) {
        interlacedSchedule(depthH, depthK, budget, m, n);
        SystemBuilder H(depthH, m), Kb(depthK, n);
        runTriangular(g, H, Kb, /*extendedChecks=*/false);
        return {H.sys, Kb.sys};
    }
    if (stage == StabilizeStage::Balancing) {
        const double sup = D.supNorm();
        int n0 = 1;
        if (sup > 0) {
            const double need = 8.0 * sup * sup /
                                (config.deltaBalance * config.deltaBalance);
            n0 = std::max(1, static_cast<int>(std::ceil(std::log2(need))));
        }
        n0 = std::min(n0, budget - depthK);
        if (n0 < 1) throw StabilizerError("frequency budget exhausted in balancing stage");
        n.resize(depthK + 1);
        for (int j = 0; j <= depthK; ++j) n[j] = n0 + j;
        m.resize(depthH + 1);
        for (int i = 0; i <= depthH; ++i) m[i] = std::min(budget, n0 + 1 + i);
        for (int i = 1; i <= depthH; ++i) m[i] = std::max(m[i], m[i - 1] + 1);
        if (m.back() > budget) throw StabilizerError("frequency budget exhausted");
        SystemBuilder H(depthH, m), Kb(depthK, n);
        runBalancing(g, H, Kb);
        return {H.sys, Kb.sys};
    }
    // superdiagonal / diagonal: spread both coordinates over the budget
    m.resize(depthH + 1);
    n.resize(depthK + 1);
    const int slots = depthH + depthK + 2;
    int base = std::min(2, budget - slots + 1);
    if (base < 0) throw StabilizerError("frequency budget exhausted");
    // alternate q, p, q, p, ... starting with the second coordinate
    {
        int pos = base;
        int i = 0, j = 0;
        while (i <= depthH || j <= depthK) {
            if (j <= depthK) n[j++] = pos++;
            if (i <= depthH) m[i++] = pos++;
        }
        if (std::max(m.back(), n.back()) > budget)
            throw StabilizerError("frequency budget exhausted");
    }
    SystemBuilder H(depthH, m), Kb(depthK, n);
    runJointSplits(g, H, Kb, stage == StabilizeStage::Diagonal);
    return {H.sys, Kb.sys};
}

StabilizeResult stabilizeFull(const HaarMultiplier2D& D, const EtaSchedule& eta, double delta,
                              const StabilizeConfig& config) {
    if (config.outputDepth < 1) throw std::invalid_argument("output depth must be >= 1");
    if (config.frequencyBudget <= 2 * config.outputDepth)
        throw std::invalid_argument("frequency budget must exceed twice the output depth");
    const int K = config.outputDepth;
    const int depthH1 = K + 2, depthK1 = K + 3;
    const int budget =
        std::min({config.frequencyBudget, D.maxLevelFirst(), D.maxLevelSecond()});

    std::string lastError;
    int drawsTotal = 0;
    for (int round = 0; round <= config.pipelineRetries; ++round) {
        try {
            StabilizeConfig cfg = config;
            cfg.seed = rng::hash2(config.seed, static_cast<std::uint64_t>(round));
            GameState g1{D, eta, delta, cfg, cfg.seed};

            // stage 1: triangular game with extended checks on the base multiplier
            std::vector<int> m, n;
            interlacedSchedule(depthH1, depthK1, budget, m, n, round);
            SystemBuilder H1(depthH1, m), K1(depthK1, n);
            runTriangular(g1, H1, K1, /*extendedChecks=*/true);
            HaarMultiplier2D D1 = restrictMultiplier(D, H1.sys, K1.sys);

            // stage 2: superdiagonal splits on the restriction
            GameState g2{D1, eta, delta, cfg, rng::hash2(cfg.seed, 2)};
            std::vector<int> p2 = increasingWithin(depthH1, depthH1, /*skipRoot=*/true);
            std::vector<int> q2 = increasingWithin(depthK1 + 1, depthK1, false);
            SystemBuilder H2(depthH1 - 1, p2), K2(depthK1, q2);
            runJointSplits(g2, H2, K2, /*diagonalMode=*/false);
            HaarMultiplier2D D2 = restrictMultiplier(D1, H2.sys, K2.sys);

            // stage 3: diagonal splits
            GameState g3{D2, eta, delta, cfg, rng::hash2(cfg.seed, 3)};
            std::vector<int> p3 = increasingWithin(depthH1, depthH1 - 1, false);
            std::vector<int> q3 = increasingWithin(depthK1 + 1, depthK1, false);
            SystemBuilder H3(depthH1 - 1, p3), K3(depthK1, q3);
            runJointSplits(g3, H3, K3, /*diagonalMode=*/true);
            HaarMultiplier2D D3 = restrictMultiplier(D2, H3.sys, K3.sys);

            // stage 4: balancing at the root, dropping one level of headroom
            GameState g4{D3, eta, delta, cfg, rng::hash2(cfg.seed, 4)};
            std::vector<int> p4 = increasingWithin(depthH1, depthH1 - 1, false);
            std::vector<int> q4 = increasingWithin(depthK1, depthK1, /*skipRoot=*/true);
            SystemBuilder H4(depthH1 - 1, p4), K4(depthK1 - 1, q4);
            runBalancing(g4, H4, K4);

            drawsTotal += g1.draws + g2.draws + g3.draws + g4.draws;

            // compose: T4 * T3 * T2 * T1, coordinatewise
            FaithfulHaarSystem Hc =
                compose(H4.sys, compose(H3.sys, compose(H2.sys, H1.sys)));
            FaithfulHaarSystem Kc =
                compose(K4.sys, compose(K3.sys, compose(K2.sys, K1.sys)));

            StabilizeResult res;
            res.systemFirst = Hc;
            res.systemSecond = Kc;
            res.Dtilde = restrictMultiplier(D, Hc, Kc);
            res.report = checkConditions(res.Dtilde, eta, delta, K);
            res.retriesUsed = drawsTotal;
            if (!res.report.pass) {
                lastError = "composed conditions failed the direct check";
                continue;
            }

            // pavement-average transport
            double worst = 0.0;
            for (int i = 0; i <= Hc.depth; ++i)
                for (int j = 0; j <= Kc.depth; ++j)
                    worst = std::max(worst,
                                     std::fabs(eAvg(res.Dtilde, i, j) -
                                               eAvg(D, Hc.frequencies[i], Kc.frequencies[j])));
            res.transportGap = worst;

            res.lambdaMuOut = lambdaMu(res.Dtilde, 0, K + 1, /*window=*/1, /*tol=*/1.0);
            res.lambdaMuIn =
                lambdaMu(D, Kc.frequencies[0],
                         std::max(Hc.frequencies[K + 1], Kc.frequencies[K + 1]),
                         /*window=*/1, /*tol=*/1.0);

            // variation-norm proximity of the residual to lambda C + mu (Id - C)
            const double lam = res.lambdaMuOut.lambda, mu = res.lambdaMuOut.mu;
            HaarMultiplier2D R = HaarMultiplier2D::linearCombination(
                1.0, res.Dtilde,
                -1.0, HaarMultiplier2D::lambdaCaponMu(lam, mu, Hc.depth, Kc.depth));
            VariationReport var = t2Variation(R, K);
            res.residualT2S = var.t2sSemiNorm;
            res.residualT2 = var.t2Norm;
            double bound = delta;
            for (int i = 0; i <= K; ++i)
                for (int j = 0; j <= K; ++j) bound += (i + j + 4) * eta(i, j);
            res.proximityBound = bound;
            res.proximityPass = res.residualT2S <= bound;
            return res;
        } catch (const StabilizerError& e) {
            lastError = e.what();
        }
    }
    throw StabilizerError("stabilization failed after retries: " + lastError);
}

}  // namespace haarstab
