#include "haarstab/multiplier.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "haarstab/rng.hpp"

namespace haarstab {

double HaarMultiplier1D::entry(DyadicInterval I) const {
    if (static_cast<int>(I.level) > maxLevel)
        throw std::out_of_range("one-parameter entry query beyond declared level");
    return entries[iota(I)];
}

void HaarMultiplier1D::set(DyadicInterval I, double d) {
    if (static_cast<int>(I.level) > maxLevel)
        throw std::out_of_range("one-parameter entry set beyond declared level");
    entries[iota(I)] = d;
}

double HaarMultiplier1D::supNorm() const {
    double m = 0.0;
    for (std::size_t i = 1; i < entries.size(); ++i) m = std::max(m, std::fabs(entries[i]));
    return m;
}

HaarMultiplier2D HaarMultiplier2D::dense(int maxLevelFirst, int maxLevelSecond) {
    HaarMultiplier2D D;
    D.backing_ = Backing::Dense;
    D.maxLevelFirst_ = maxLevelFirst;
    D.maxLevelSecond_ = maxLevelSecond;
    return D;
}

HaarMultiplier2D HaarMultiplier2D::levelHomogeneous(std::vector<std::vector<double>> matrix) {
    if (matrix.empty() || matrix[0].empty())
        throw std::invalid_argument("level matrix must be nonempty");
    HaarMultiplier2D D;
    D.backing_ = Backing::LevelHomogeneous;
    D.maxLevelFirst_ = static_cast<int>(matrix.size()) - 1;
    D.maxLevelSecond_ = static_cast<int>(matrix[0].size()) - 1;
    for (const auto& row : matrix)
        if (row.size() != matrix[0].size())
            throw std::invalid_argument("level matrix rows must have equal length");
    D.matrix_ = std::move(matrix);
    return D;
}

HaarMultiplier2D HaarMultiplier2D::seededRandom(std::uint64_t seed, double amplitude,
                                                int maxLevelFirst, int maxLevelSecond) {
    HaarMultiplier2D D;
    D.backing_ = Backing::SeededRandom;
    D.maxLevelFirst_ = maxLevelFirst;
    D.maxLevelSecond_ = maxLevelSecond;
    D.seed_ = seed;
    D.amplitude_ = amplitude;
    return D;
}

HaarMultiplier2D HaarMultiplier2D::identity(int maxLevelFirst, int maxLevelSecond) {
    return lambdaCaponMu(1.0, 1.0, maxLevelFirst, maxLevelSecond);
}

HaarMultiplier2D HaarMultiplier2D::capon(int maxLevelFirst, int maxLevelSecond) {
    return lambdaCaponMu(1.0, 0.0, maxLevelFirst, maxLevelSecond);
}

HaarMultiplier2D HaarMultiplier2D::lambdaCaponMu(double lambda, double mu, int maxLevelFirst,
                                                 int maxLevelSecond) {
    std::vector<std::vector<double>> m(maxLevelFirst + 1,
                                       std::vector<double>(maxLevelSecond + 1, mu));
    for (int i = 0; i <= maxLevelFirst; ++i)
        for (int j = 0; j <= std::min(i, maxLevelSecond); ++j) m[i][j] = lambda;
    return levelHomogeneous(std::move(m));
}

void HaarMultiplier2D::checkRange(DyadicInterval I, DyadicInterval J) const {
    if (static_cast<int>(I.level) > maxLevelFirst_ ||
        static_cast<int>(J.level) > maxLevelSecond_)
        throw std::out_of_range("multiplier entry query beyond declared levels");
}

double HaarMultiplier2D::entry(DyadicInterval I, DyadicInterval J) const {
    checkRange(I, J);
    switch (backing_) {
        case Backing::Dense: {
            auto it = entries_.find(HaarCoefficients2D::key(iota(I), iota(J)));
            return it == entries_.end() ? 0.0 : it->second;
        }
        case Backing::LevelHomogeneous:
            return matrix_[I.level][J.level];
        case Backing::SeededRandom:
            return amplitude_ * rng::toSymmetric(rng::hash3(seed_, iota(I), iota(J)));
    }
    return 0.0;
}

double HaarMultiplier2D::entryByIota(std::uint64_t iotaI, std::uint64_t iotaJ) const {
    return entry(fromIota(iotaI), fromIota(iotaJ));
}

void HaarMultiplier2D::setEntry(DyadicInterval I, DyadicInterval J, double d) {
    if (backing_ != Backing::Dense)
        throw std::logic_error("setEntry is only available on dense multipliers");
    checkRange(I, J);
    entries_[HaarCoefficients2D::key(iota(I), iota(J))] = d;
}

double HaarMultiplier2D::supNorm() const {
    switch (backing_) {
        case Backing::Dense: {
            double m = 0.0;
            for (const auto& [k, v] : entries_) m = std::max(m, std::fabs(v));
            return m;
        }
        case Backing::LevelHomogeneous: {
            double m = 0.0;
            for (const auto& row : matrix_)
                for (double v : row) m = std::max(m, std::fabs(v));
            return m;
        }
        case Backing::SeededRandom:
            return std::fabs(amplitude_);
    }
    return 0.0;
}

HaarMultiplier2D HaarMultiplier2D::linearCombination(double a, const HaarMultiplier2D& D,
                                                     double b, const HaarMultiplier2D& E) {
    const int lf = std::min(D.maxLevelFirst(), E.maxLevelFirst());
    const int ls = std::min(D.maxLevelSecond(), E.maxLevelSecond());
    HaarMultiplier2D out = dense(lf, ls);
    for (int i = 0; i <= lf; ++i)
        for (int j = 0; j <= ls; ++j)
            for (std::uint64_t ki = 0; ki < (std::uint64_t{1} << i); ++ki)
                for (std::uint64_t kj = 0; kj < (std::uint64_t{1} << j); ++kj) {
                    DyadicInterval I(i, ki), J(j, kj);
                    out.setEntry(I, J, a * D.entry(I, J) + b * E.entry(I, J));
                }
    return out;
}

double eAvg(const HaarMultiplier2D& D, int i, int j) {
    if (i > D.maxLevelFirst() || j > D.maxLevelSecond())
        throw std::out_of_range("pavement average beyond declared levels");
    if (D.backing() == HaarMultiplier2D::Backing::LevelHomogeneous)
        return D.levelMatrix()[i][j];
    if (D.backing() == HaarMultiplier2D::Backing::Dense) {
        // missing dense entries are zero, so only stored keys contribute
        double s = 0.0, c = 0.0;
        const std::uint64_t loI = std::uint64_t{1} << i, loJ = std::uint64_t{1} << j;
        for (const auto& [k, v] : D.denseEntries()) {
            const std::uint64_t iI = HaarCoefficients2D::keyI(k);
            const std::uint64_t iJ = HaarCoefficients2D::keyJ(k);
            if (iI < loI || iI >= 2 * loI || iJ < loJ || iJ >= 2 * loJ) continue;
            double y = v - c, t = s + y;
            c = (t - s) - y;
            s = t;
        }
        return std::ldexp(s, -(i + j));
    }
    // seeded: exact summation with the row-hoisted hash
    double s = 0.0, c = 0.0;
    const std::uint64_t loI = std::uint64_t{1} << i, loJ = std::uint64_t{1} << j;
    for (std::uint64_t iI = loI; iI < 2 * loI; ++iI) {
        // stage the first key so the inner loop costs one mix per cell
        const std::uint64_t st = rng::hash2(D.seed(), iI);
        for (std::uint64_t iJ = loJ; iJ < 2 * loJ; ++iJ) {
            const double v = D.amplitude() * rng::toSymmetric(rng::hash2(st, iJ));
            double y = v - c, t = s + y;
            c = (t - s) - y;
            s = t;
        }
    }
    return std::ldexp(s, -(i + j));
}

LambdaMu lambdaMu(const HaarMultiplier2D& D, int loLevel, int hiLevel, int window,
                  double tol) {
    if (!(loLevel < hiLevel) || hiLevel > D.maxLevelFirst() || hiLevel > D.maxLevelSecond())
        throw std::out_of_range("lambda/mu levels out of range: need lo < hi <= declared");
    LambdaMu lm;
    lm.loLevel = loLevel;
    lm.hiLevel = hiLevel;
    lm.convergenceTable.assign(2, std::vector<double>(hiLevel + 1, 0.0));
    for (int i = 0; i <= hiLevel; ++i) lm.convergenceTable[0][i] = eAvg(D, i, loLevel);
    for (int j = 0; j <= hiLevel; ++j) lm.convergenceTable[1][j] = eAvg(D, loLevel, j);
    lm.lambda = lm.convergenceTable[0][hiLevel];
    lm.mu = lm.convergenceTable[1][hiLevel];
    bool ok = true;
    const int w0 = std::max(0, hiLevel - window);
    for (int i = w0; i <= hiLevel; ++i)
        if (std::fabs(lm.convergenceTable[0][i] - lm.lambda) >= tol) ok = false;
    for (int j = w0; j <= hiLevel; ++j)
        if (std::fabs(lm.convergenceTable[1][j] - lm.mu) >= tol) ok = false;
    lm.converged = ok;
    return lm;
}

VariationReport t2Variation(const HaarMultiplier2D& D, int truncationLevel) {
    if (truncationLevel < 0 || truncationLevel + 1 > D.maxLevelFirst() ||
        truncationLevel + 2 > D.maxLevelSecond())
        throw std::out_of_range("variation truncation too deep for the declared levels");
    VariationReport r;
    r.truncationLevel = truncationLevel;

    auto cellsAt = [](int lvl) { return std::uint64_t{1} << lvl; };

    for (int k = 0; k <= truncationLevel; ++k) {
        double mx = 0.0;
        for (std::uint64_t a = 0; a < cellsAt(k); ++a)
            for (std::uint64_t b = 0; b < cellsAt(k); ++b) {
                DyadicInterval I(k, a), J(k, b);
                const double d = D.entry(I, J);
                for (int w = 0; w < 2; ++w)
                    for (int x = 0; x < 2; ++x) {
                        DyadicInterval Iw = w ? rightHalf(I) : leftHalf(I);
                        DyadicInterval Jx = x ? rightHalf(J) : leftHalf(J);
                        mx = std::max(mx, std::fabs(d - D.entry(Iw, Jx)));
                    }
            }
        r.diagonalSum += (k + 1) * mx;
    }

    for (int k = 0; k <= truncationLevel; ++k) {
        double mx = 0.0;
        for (std::uint64_t a = 0; a < cellsAt(k); ++a)
            for (std::uint64_t b = 0; b < cellsAt(k + 1); ++b) {
                DyadicInterval I(k, a), J(k + 1, b);
                const double d = D.entry(I, J);
                for (int w = 0; w < 2; ++w)
                    for (int x = 0; x < 2; ++x) {
                        DyadicInterval Iw = w ? rightHalf(I) : leftHalf(I);
                        DyadicInterval Jx = x ? rightHalf(J) : leftHalf(J);
                        mx = std::max(mx, std::fabs(d - D.entry(Iw, Jx)));
                    }
            }
        r.superdiagonalSum += (k + 1) * mx;
    }

    for (int i = 0; i <= truncationLevel; ++i)
        for (int j = 0; j <= i; ++j) {
            double mx = 0.0;
            for (std::uint64_t a = 0; a < cellsAt(i); ++a)
                for (std::uint64_t b = 0; b < cellsAt(j); ++b) {
                    DyadicInterval I(i, a), J(j, b);
                    const double d = D.entry(I, J);
                    mx = std::max(mx, std::fabs(d - D.entry(leftHalf(I), J)));
                    mx = std::max(mx, std::fabs(d - D.entry(rightHalf(I), J)));
                }
            r.lowerSum += mx;
        }

    for (int j = 0; j <= truncationLevel; ++j)
        for (int i = 0; i <= j; ++i) {
            double mx = 0.0;
            for (std::uint64_t a = 0; a < cellsAt(i); ++a)
                for (std::uint64_t b = 0; b < cellsAt(j + 1); ++b) {
                    DyadicInterval I(i, a), J(j + 1, b);
                    const double d = D.entry(I, J);
                    mx = std::max(mx, std::fabs(d - D.entry(I, leftHalf(J))));
                    mx = std::max(mx, std::fabs(d - D.entry(I, rightHalf(J))));
                }
            r.upperSum += mx;
        }

    r.t2sSemiNorm = r.diagonalSum + r.superdiagonalSum + r.lowerSum + r.upperSum;
    r.rootLower = D.entry(kUnitInterval, kUnitInterval);
    r.rootUpperLeft = D.entry(kUnitInterval, DyadicInterval(1, 0));
    r.rootUpperRight = D.entry(kUnitInterval, DyadicInterval(1, 1));
    r.t2Norm = r.t2sSemiNorm + std::fabs(r.rootLower) + std::fabs(r.rootUpperLeft) +
               std::fabs(r.rootUpperRight);
    return r;
}

double tVariation1D(const HaarMultiplier1D& D, int truncationLevel) {
    if (truncationLevel > D.maxLevel)
        throw std::out_of_range("tree variation truncation beyond declared level");
    double s = std::fabs(D.entries[1]);
    for (int lvl = 0; lvl < truncationLevel; ++lvl)
        for (std::uint64_t c = 0; c < (std::uint64_t{1} << lvl); ++c) {
            DyadicInterval I(lvl, c);
            const double d = D.entry(I);
            s += std::fabs(d - D.entry(leftHalf(I)));
            s += std::fabs(d - D.entry(rightHalf(I)));
        }
    return s;
}

HaarCoefficients2D applyMultiplier(const HaarMultiplier2D& D, const HaarCoefficients2D& z) {
    if (z.maxLevelFirst > D.maxLevelFirst() || z.maxLevelSecond > D.maxLevelSecond())
        throw std::out_of_range("coefficient levels exceed the multiplier's declared range");
    HaarCoefficients2D out;
    out.maxLevelFirst = z.maxLevelFirst;
    out.maxLevelSecond = z.maxLevelSecond;
    for (const auto& [k, a] : z.entries) {
        const double d = D.entryByIota(HaarCoefficients2D::keyI(k),
                                       HaarCoefficients2D::keyJ(k));
        if (d != 0.0) out.entries[k] = d * a;
    }
    return out;
}

HaarCoefficients2D caponApply(const HaarCoefficients2D& z) {
    HaarCoefficients2D out;
    out.maxLevelFirst = z.maxLevelFirst;
    out.maxLevelSecond = z.maxLevelSecond;
    for (const auto& [k, a] : z.entries) {
        const std::uint32_t lI = iotaLevel(HaarCoefficients2D::keyI(k));
        const std::uint32_t lJ = iotaLevel(HaarCoefficients2D::keyJ(k));
        if (lI >= lJ) out.entries[k] = a;
    }
    return out;
}

HaarCoefficients2D projectLeq(DyadicInterval I, DyadicInterval J,
                              const HaarCoefficients2D& z) {
    const std::uint64_t iI = iota(I), iJ = iota(J);
    HaarCoefficients2D out;
    out.maxLevelFirst = z.maxLevelFirst;
    out.maxLevelSecond = z.maxLevelSecond;
    for (const auto& [k, a] : z.entries)
        if (HaarCoefficients2D::keyI(k) <= iI && HaarCoefficients2D::keyJ(k) <= iJ)
            out.entries[k] = a;
    return out;
}

HaarCoefficients2D subRestrict(DyadicInterval K0, DyadicInterval L0,
                               const HaarCoefficients2D& z) {
    HaarCoefficients2D out;
    out.maxLevelFirst = z.maxLevelFirst;
    out.maxLevelSecond = z.maxLevelSecond;
    for (const auto& [k, a] : z.entries) {
        DyadicInterval K = fromIota(HaarCoefficients2D::keyI(k));
        DyadicInterval L = fromIota(HaarCoefficients2D::keyJ(k));
        if (contains(K0, K) && contains(L0, L)) out.entries[k] = a;
    }
    return out;
}

HaarCoefficients2D downScale(DyadicInterval I0, DyadicInterval J0,
                             const HaarCoefficients2D& z) {
    if (I0.level != J0.level)
        throw std::invalid_argument("down-scaling requires |I0| = |J0|");
    HaarCoefficients2D out;
    for (const auto& [k, a] : z.entries) {
        DyadicInterval K = fromIota(HaarCoefficients2D::keyI(k));
        DyadicInterval L = fromIota(HaarCoefficients2D::keyJ(k));
        DyadicInterval Ks(K.level + I0.level, K.index + (I0.index << K.level));
        DyadicInterval Ls(L.level + J0.level, L.index + (J0.index << L.level));
        out.set(Ks, Ls, a);
    }
    return out;
}

HaarCoefficients2D upScale(DyadicInterval I0, DyadicInterval J0,
                           const HaarCoefficients2D& z) {
    if (I0.level != J0.level)
        throw std::invalid_argument("up-scaling requires |I0| = |J0|");
    HaarCoefficients2D out;
    for (const auto& [k, a] : z.entries) {
        DyadicInterval K = fromIota(HaarCoefficients2D::keyI(k));
        DyadicInterval L = fromIota(HaarCoefficients2D::keyJ(k));
        if (!contains(I0, K) || !contains(J0, L)) continue;
        DyadicInterval Ks(K.level - I0.level, K.index - (I0.index << (K.level - I0.level)));
        DyadicInterval Ls(L.level - J0.level, L.index - (J0.index << (L.level - J0.level)));
        out.set(Ks, Ls, a);
    }
    return out;
}

StepFunction2D mField(const HaarMultiplier2D& D, int k, int which, int gridDepth) {
    if (which != 1 && which != 2) throw std::invalid_argument("m-field selector must be 1 or 2");
    const int jLevel = which == 1 ? k : k + 1;
    if (gridDepth < k + 1 || gridDepth < jLevel)
        throw std::invalid_argument("grid too coarse for the m-field at this level");
    if (k > D.maxLevelFirst() || jLevel > D.maxLevelSecond())
        throw std::out_of_range("m-field level beyond declared levels");
    StepFunction2D f(gridDepth);
    const std::size_t ws = std::size_t{1} << (gridDepth - k);
    const std::size_t wt = std::size_t{1} << (gridDepth - jLevel);
    for (std::uint64_t a = 0; a < (std::uint64_t{1} << k); ++a)
        for (std::uint64_t b = 0; b < (std::uint64_t{1} << jLevel); ++b) {
            const double d = D.entry(DyadicInterval(k, a), DyadicInterval(jLevel, b));
            if (d == 0.0) continue;
            for (std::size_t s = a * ws; s < (a + 1) * ws; ++s) {
                double* row = f.values.data() + (s << gridDepth);
                for (std::size_t t = b * wt; t < (b + 1) * wt; ++t) row[t] = d;
            }
        }
    return f;
}

namespace {

// entries constant along descending chains past level k: stepping from
// (pi(I), pi(J)) down to (I, J) changes nothing once both levels exceed k
bool eventuallyLevelConstant(const HaarMultiplier2D& D, int k) {
    if (D.backing() == HaarMultiplier2D::Backing::SeededRandom)
        throw std::invalid_argument(
            "level-constancy cannot be certified for seeded-random backings");
    for (int i = k + 1; i <= D.maxLevelFirst(); ++i)
        for (int j = k + 1; j <= D.maxLevelSecond(); ++j)
            for (std::uint64_t a = 0; a < (std::uint64_t{1} << i); ++a)
                for (std::uint64_t b = 0; b < (std::uint64_t{1} << j); ++b) {
                    DyadicInterval I(i, a), J(j, b);
                    if (D.entry(I, J) != D.entry(parent(I), parent(J))) return false;
                }
    return true;
}

}  // namespace

PointwiseIntCheck pointwiseIntCheck(const HaarMultiplier2D& D, int k, int loLevel,
                                    int hiLevel) {
    if (!eventuallyLevelConstant(D, k))
        throw std::invalid_argument("multiplier entries are not level-constant past level " +
                                    std::to_string(k));
    PointwiseIntCheck r;
    LambdaMu lm = lambdaMu(D, loLevel, hiLevel);
    r.lambda = lm.lambda;
    r.mu = lm.mu;
    const int grid1 = std::max(k + 1, 1);
    const int grid2 = std::max(k + 2, 1);
    r.intM1 = gridIntegral2D(mField(D, k, 1, grid1));
    r.intM2 = gridIntegral2D(mField(D, k, 2, grid2));
    r.gapLambda = std::fabs(r.lambda - r.intM1);
    r.gapMu = std::fabs(r.mu - r.intM2);
    return r;
}

RootProximityResult rootProximityCheck(const HaarMultiplier2D& D, int truncationLevel) {
    VariationReport var = t2Variation(D, truncationLevel);
    LambdaMu lm = lambdaMu(D, 0, truncationLevel + 1);
    RootProximityResult r;
    r.lhs = std::fabs(lm.lambda - var.rootLower) +
            std::fabs(lm.mu - 0.5 * (var.rootUpperLeft + var.rootUpperRight));
    r.rhs = var.t2Norm;
    r.pass = r.lhs <= r.rhs + 1e-12;
    return r;
}

PwProximityResult pwProximityCheck(const HaarMultiplier2D& D, const HaarCoefficients2D& z,
                                   const ZSpaceSpec& spec, int gridDepth,
                                   std::int64_t samples, std::uint64_t seed) {
    // deepest level at which both m-fields exist within the declared range
    const int mLevel =
        std::min({D.maxLevelFirst(), D.maxLevelSecond() - 1, gridDepth - 1});
    const int trunc = mLevel - 1;
    if (trunc < 0 || z.maxLevelFirst > mLevel || z.maxLevelSecond > mLevel)
        throw std::out_of_range("multiplier too shallow for this coefficient set");
    VariationReport var = t2Variation(D, trunc);

    HaarCoefficients2D lowerA, lowerB, upperA, upperB;
    for (const auto& [k, a] : z.entries) {
        const std::uint64_t iI = HaarCoefficients2D::keyI(k);
        const std::uint64_t iJ = HaarCoefficients2D::keyJ(k);
        const double d = D.entryByIota(iI, iJ);
        if (iotaLevel(iI) >= iotaLevel(iJ)) {
            lowerA.entries[k] = d * a;
            lowerB.entries[k] = a;
        } else {
            upperA.entries[k] = d * a;
            upperB.entries[k] = a;
        }
    }
    lowerA.maxLevelFirst = lowerB.maxLevelFirst = z.maxLevelFirst;
    lowerA.maxLevelSecond = lowerB.maxLevelSecond = z.maxLevelSecond;
    upperA.maxLevelFirst = upperB.maxLevelFirst = z.maxLevelFirst;
    upperA.maxLevelSecond = upperB.maxLevelSecond = z.maxLevelSecond;

    StepFunction2D m1 = mField(D, mLevel, 1, gridDepth);
    StepFunction2D m2 = mField(D, mLevel, 2, gridDepth);

    PwProximityResult r;
    NormEstimate e1 = pairedExpectationNorm(lowerA, lowerB, m1, spec, gridDepth,
                                            NormMethod::Auto, samples, seed);
    NormEstimate e2 = pairedExpectationNorm(upperA, upperB, m2, spec, gridDepth,
                                            NormMethod::Auto, samples, seed + 1);
    NormEstimate zn = zNorm(z, spec, gridDepth, NormMethod::Auto, samples, seed + 2);
    r.lhs1 = e1.value;
    r.lhs2 = e2.value;
    r.stdError1 = e1.stdError;
    r.stdError2 = e2.stdError;
    r.zNormValue = zn.value;
    r.zNormStdError = zn.stdError;
    r.rhsBound = 4.0 * var.t2sSemiNorm * zn.value;
    const double slack1 = 3.0 * (e1.stdError + 4.0 * var.t2sSemiNorm * zn.stdError) + 1e-9;
    const double slack2 = 3.0 * (e2.stdError + 4.0 * var.t2sSemiNorm * zn.stdError) + 1e-9;
    r.pass = r.lhs1 <= r.rhsBound + slack1 && r.lhs2 <= r.rhsBound + slack2;
    return r;
}

}  // namespace haarstab
