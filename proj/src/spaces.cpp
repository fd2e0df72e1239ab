#include "haarstab/spaces.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "haarstab/rng.hpp"

namespace haarstab {

HaarSystemSpaceSpec HaarSystemSpaceSpec::Lp(double p) {
    if (!(p >= 1.0))
        throw std::invalid_argument("Lp requires p >= 1");
    return HaarSystemSpaceSpec{false, p};
}

std::string HaarSystemSpaceSpec::name() const {
    if (isLinf) return "Linf";
    double ip;
    if (std::modf(p, &ip) == 0.0) return "L" + std::to_string(static_cast<long long>(ip));
    std::string s = std::to_string(p);
    while (!s.empty() && s.back() == '0') s.pop_back();
    if (!s.empty() && s.back() == '.') s.pop_back();
    return "L" + s;
}

std::string SignRegime::name() const {
    return std::string("s") + (firstIndependent ? "1" : "0") + (secondIndependent ? "1" : "0");
}

ZSpaceSpec parseZSpaceSpec(const std::string& text) {
    auto fail = [&](const std::string& why) {
        throw std::invalid_argument("bad space spec '" + text + "': " + why);
    };
    if (text.size() < 3 || text[0] != 's') fail("expected leading 's'");
    if ((text[1] != '0' && text[1] != '1') || (text[2] != '0' && text[2] != '1'))
        fail("regime digits must be 0 or 1");
    std::size_t c1 = text.find(':', 3);
    if (c1 != 3) fail("expected ':' after regime");
    std::size_t c2 = text.find(':', c1 + 1);
    if (c2 == std::string::npos) fail("expected two ':' separators");
    auto parseSpace = [&](const std::string& s) -> HaarSystemSpaceSpec {
        if (s == "Linf") return HaarSystemSpaceSpec::Linf();
        if (s.size() < 2 || s[0] != 'L') fail("space must be L<p> or Linf");
        try {
            double p = std::stod(s.substr(1));
            if (!(p >= 1.0)) fail("p must be >= 1");
            return HaarSystemSpaceSpec::Lp(p);
        } catch (const std::invalid_argument&) {
            fail("cannot parse p in '" + s + "'");
        }
        return {};
    };
    ZSpaceSpec spec;
    spec.regime.firstIndependent = text[1] == '1';
    spec.regime.secondIndependent = text[2] == '1';
    spec.X = parseSpace(text.substr(c1 + 1, c2 - c1 - 1));
    spec.Y = parseSpace(text.substr(c2 + 1));
    return spec;
}

void HaarCoefficients2D::set(DyadicInterval I, DyadicInterval J, double a) {
    maxLevelFirst = std::max(maxLevelFirst, static_cast<int>(I.level));
    maxLevelSecond = std::max(maxLevelSecond, static_cast<int>(J.level));
    entries[key(iota(I), iota(J))] = a;
}

void HaarCoefficients2D::add(DyadicInterval I, DyadicInterval J, double a) {
    maxLevelFirst = std::max(maxLevelFirst, static_cast<int>(I.level));
    maxLevelSecond = std::max(maxLevelSecond, static_cast<int>(J.level));
    entries[key(iota(I), iota(J))] += a;
}

double HaarCoefficients2D::get(DyadicInterval I, DyadicInterval J) const {
    auto it = entries.find(key(iota(I), iota(J)));
    return it == entries.end() ? 0.0 : it->second;
}

double xNorm(const double* values, std::size_t n, const HaarSystemSpaceSpec& X) {
    if (X.isLinf) {
        double m = 0.0;
        for (std::size_t i = 0; i < n; ++i) m = std::max(m, std::fabs(values[i]));
        return m;
    }
    const double inv = 1.0 / static_cast<double>(n);
    if (X.p == 1.0) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += std::fabs(values[i]);
        return s * inv;
    }
    if (X.p == 2.0) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += values[i] * values[i];
        return std::sqrt(s * inv);
    }
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::pow(std::fabs(values[i]), X.p);
    return std::pow(s * inv, 1.0 / X.p);
}

double xNorm(const StepFunction1D& f, const HaarSystemSpaceSpec& X) {
    return xNorm(f.values.data(), f.values.size(), X);
}

double mixedNorm(const StepFunction2D& g, const HaarSystemSpaceSpec& X,
                 const HaarSystemSpaceSpec& Y) {
    const std::size_t side = g.side();
    std::vector<double> rowNorms(side);
    for (std::size_t s = 0; s < side; ++s)
        rowNorms[s] = xNorm(g.values.data() + (s << g.gridDepth), side, Y);
    return xNorm(rowNorms.data(), side, X);
}

CoefficientGroups groupCoefficients(const HaarCoefficients2D& z) {
    CoefficientGroups g;
    g.maxLevelFirst = 0;
    g.maxLevelSecond = 0;
    std::uint64_t curI = 0;
    for (const auto& [k, a] : z.entries) {
        const std::uint64_t iI = HaarCoefficients2D::keyI(k);
        const std::uint64_t iJ = HaarCoefficients2D::keyJ(k);
        if (g.iotasFirst.empty() || iI != curI) {
            g.iotasFirst.push_back(iI);
            g.rows.emplace_back();
            curI = iI;
        }
        g.rows.back().emplace_back(iJ, a);
        g.iotasSecond.push_back(iJ);
        g.maxLevelFirst = std::max(g.maxLevelFirst, static_cast<int>(iotaLevel(iI)));
        g.maxLevelSecond = std::max(g.maxLevelSecond, static_cast<int>(iotaLevel(iJ)));
    }
    std::sort(g.iotasSecond.begin(), g.iotasSecond.end());
    g.iotasSecond.erase(std::unique(g.iotasSecond.begin(), g.iotasSecond.end()),
                        g.iotasSecond.end());
    return g;
}

namespace {

int signIndexOf(const std::vector<std::uint64_t>& iotas, std::uint64_t io) {
    auto it = std::lower_bound(iotas.begin(), iotas.end(), io);
    return static_cast<int>(it - iotas.begin());
}

/// Synthesize sum sig1_I sig2_J a_{I,J} h_I x k_J row-block-wise and hand
/// each finished s-row to the sink. Rows are visited in s order.
class SignedSynthesizer {
public:
    SignedSynthesizer(const CoefficientGroups& g, int gridDepth)
        : groups_(g), depth_(gridDepth), side_(std::size_t{1} << gridDepth) {
        rowFuns_.assign(g.iotasFirst.size(), std::vector<double>(side_));
        // positions of each row's J-iotas in the distinct list
        rowPosJ_.resize(g.rows.size());
        for (std::size_t r = 0; r < g.rows.size(); ++r) {
            rowPosJ_[r].reserve(g.rows[r].size());
            for (const auto& [iJ, a] : g.rows[r])
                rowPosJ_[r].push_back(signIndexOf(g.iotasSecond, iJ));
        }
        levelBufs_.assign(gridDepth + 1, std::vector<double>(side_));
        // group lookup: (level, index) -> row id
        rowAt_.assign(gridDepth, {});
        for (int l = 0; l < gridDepth; ++l) rowAt_[l].assign(std::size_t{1} << l, -1);
        for (std::size_t r = 0; r < g.iotasFirst.size(); ++r) {
            const std::uint64_t io = g.iotasFirst[r];
            const std::uint32_t lvl = iotaLevel(io);
            rowAt_[lvl][io - (std::uint64_t{1} << lvl)] = static_cast<int>(r);
        }
    }

    template <typename Sink>
    void run(const std::vector<int>& signs1, const std::vector<int>& signs2, Sink&& sink) {
        // per-row t-synthesis with the second-coordinate signs applied
        std::vector<std::pair<std::uint64_t, double>> coeffs;
        for (std::size_t r = 0; r < groups_.rows.size(); ++r) {
            coeffs.clear();
            const auto& row = groups_.rows[r];
            for (std::size_t c = 0; c < row.size(); ++c) {
                const double sg = signs2.empty() ? 1.0 : signs2[rowPosJ_[r][c]];
                coeffs.emplace_back(row[c].first, sg * row[c].second);
            }
            synthesize1DInto(coeffs, depth_, rowFuns_[r].data());
        }
        std::fill(levelBufs_[0].begin(), levelBufs_[0].end(), 0.0);
        descend(0, 0, signs1, sink);
    }

private:
    template <typename Sink>
    void descend(int level, std::size_t block, const std::vector<int>& signs1, Sink& sink) {
        if (level == depth_) {
            sink(block, levelBufs_[level].data());
            return;
        }
        const int r = rowAt_[level][block];
        auto& cur = levelBufs_[level];
        auto& next = levelBufs_[level + 1];
        if (r >= 0) {
            const double sg = signs1.empty() ? 1.0 : signs1[r];
            const double* rf = rowFuns_[r].data();
            for (std::size_t t = 0; t < side_; ++t) next[t] = cur[t] + sg * rf[t];
            descend(level + 1, 2 * block, signs1, sink);
            for (std::size_t t = 0; t < side_; ++t) next[t] = cur[t] - sg * rf[t];
            descend(level + 1, 2 * block + 1, signs1, sink);
        } else {
            std::copy(cur.begin(), cur.end(), next.begin());
            descend(level + 1, 2 * block, signs1, sink);
            // right child has the same values when no coefficient splits here
            descend(level + 1, 2 * block + 1, signs1, sink);
        }
    }

    const CoefficientGroups& groups_;
    int depth_;
    std::size_t side_;
    std::vector<std::vector<double>> rowFuns_;
    std::vector<std::vector<int>> rowPosJ_;
    std::vector<std::vector<double>> levelBufs_;
    std::vector<std::vector<int>> rowAt_;
};

void checkGridDepth(const CoefficientGroups& g, int gridDepth) {
    if (gridDepth <= g.maxLevelFirst || gridDepth <= g.maxLevelSecond)
        throw std::invalid_argument("grid too coarse: need gridDepth > max coefficient level");
    if (gridDepth > 13) throw std::invalid_argument("grid depth beyond supported range");
}

}  // namespace

StepFunction2D synthesize2D(const HaarCoefficients2D& z, int gridDepth) {
    CoefficientGroups g = groupCoefficients(z);
    checkGridDepth(g, gridDepth);
    StepFunction2D out(gridDepth);
    SignedSynthesizer synth(g, gridDepth);
    synth.run({}, {}, [&](std::size_t s, const double* row) {
        std::copy(row, row + out.side(), out.values.begin() + (s << gridDepth));
    });
    return out;
}

NormEstimate zNorm(const HaarCoefficients2D& z, const ZSpaceSpec& spec, int gridDepth,
                   NormMethod method, std::int64_t samples, std::uint64_t seed,
                   int exactThreshold) {
    CoefficientGroups g = groupCoefficients(z);
    checkGridDepth(g, gridDepth);
    NormEstimate est;
    if (z.empty()) {
        est.samples = 0;
        return est;
    }

    const int s1 = spec.regime.firstIndependent ? static_cast<int>(g.iotasFirst.size()) : 0;
    const int s2 = spec.regime.secondIndependent ? static_cast<int>(g.iotasSecond.size()) : 0;
    const int S = s1 + s2;

    bool exact;
    switch (method) {
        case NormMethod::Exact: exact = true; break;
        case NormMethod::MonteCarlo: exact = (S == 0); break;
        default: exact = (S <= exactThreshold); break;
    }

    SignedSynthesizer synth(g, gridDepth);
    const std::size_t side = std::size_t{1} << gridDepth;
    StepFunction2D acc(gridDepth);
    std::vector<int> signs1(spec.regime.firstIndependent ? g.iotasFirst.size() : 0, 1);
    std::vector<int> signs2(spec.regime.secondIndependent ? g.iotasSecond.size() : 0, 1);

    if (exact) {
        if (S > 30) throw std::invalid_argument("exact enumeration over 2^" +
                                                std::to_string(S) + " signs is not feasible");
        const std::uint64_t patterns = std::uint64_t{1} << S;
        const double w = 1.0 / static_cast<double>(patterns);
        for (std::uint64_t pat = 0; pat < patterns; ++pat) {
            for (int b = 0; b < s1; ++b) signs1[b] = (pat >> b) & 1 ? -1 : 1;
            for (int b = 0; b < s2; ++b) signs2[b] = (pat >> (s1 + b)) & 1 ? -1 : 1;
            synth.run(signs1, signs2, [&](std::size_t s, const double* row) {
                double* a = acc.values.data() + (s << gridDepth);
                for (std::size_t t = 0; t < side; ++t) a[t] += w * std::fabs(row[t]);
            });
        }
        est.value = mixedNorm(acc, spec.X, spec.Y);
        est.stdError = 0.0;
        est.exact = true;
        est.samples = static_cast<std::int64_t>(patterns);
        return est;
    }

    if (samples < 10) throw std::invalid_argument("monte-carlo needs at least 10 samples");
    const int batches = 10;
    const std::int64_t perBatch = samples / batches;
    StepFunction2D batchAcc(gridDepth);
    std::vector<double> batchNorms(batches);
    std::int64_t sampleIdx = 0;
    for (int b = 0; b < batches; ++b) {
        std::fill(batchAcc.values.begin(), batchAcc.values.end(), 0.0);
        for (std::int64_t m = 0; m < perBatch; ++m, ++sampleIdx) {
            for (int i = 0; i < s1; ++i)
                signs1[i] = rng::toSign(rng::hash4(seed, sampleIdx, 0, g.iotasFirst[i]));
            for (int j = 0; j < s2; ++j)
                signs2[j] = rng::toSign(rng::hash4(seed, sampleIdx, 1, g.iotasSecond[j]));
            synth.run(signs1, signs2, [&](std::size_t s, const double* row) {
                double* a = batchAcc.values.data() + (s << gridDepth);
                for (std::size_t t = 0; t < side; ++t) a[t] += std::fabs(row[t]);
            });
        }
        const double invPer = 1.0 / static_cast<double>(perBatch);
        StepFunction2D scaled(gridDepth);
        for (std::size_t c = 0; c < batchAcc.values.size(); ++c) {
            scaled.values[c] = batchAcc.values[c] * invPer;
            acc.values[c] += batchAcc.values[c];
        }
        batchNorms[b] = mixedNorm(scaled, spec.X, spec.Y);
    }
    const double invTotal = 1.0 / static_cast<double>(perBatch * batches);
    for (double& v : acc.values) v *= invTotal;
    est.value = mixedNorm(acc, spec.X, spec.Y);
    double mean = 0.0;
    for (double v : batchNorms) mean += v;
    mean /= batches;
    double var = 0.0;
    for (double v : batchNorms) var += (v - mean) * (v - mean);
    var /= (batches - 1);
    est.stdError = std::sqrt(var / batches);
    est.exact = false;
    est.samples = perBatch * batches;
    return est;
}

NormEstimate pairedExpectationNorm(const HaarCoefficients2D& A, const HaarCoefficients2D& B,
                                   const StepFunction2D& m, const ZSpaceSpec& spec,
                                   int gridDepth, NormMethod method, std::int64_t samples,
                                   std::uint64_t seed, int exactThreshold) {
    if (m.gridDepth != gridDepth)
        throw std::invalid_argument("field grid depth must match the evaluation grid");
    // pad both coefficient sets onto the union of their keys so sign
    // variables line up position by position
    HaarCoefficients2D Au = A, Bu = B;
    for (const auto& [k, v] : B.entries) Au.entries.emplace(k, 0.0);
    for (const auto& [k, v] : A.entries) Bu.entries.emplace(k, 0.0);
    Au.maxLevelFirst = Bu.maxLevelFirst = std::max(A.maxLevelFirst, B.maxLevelFirst);
    Au.maxLevelSecond = Bu.maxLevelSecond = std::max(A.maxLevelSecond, B.maxLevelSecond);

    CoefficientGroups gA = groupCoefficients(Au);
    CoefficientGroups gB = groupCoefficients(Bu);
    checkGridDepth(gA, gridDepth);
    NormEstimate est;
    if (Au.empty()) return est;

    const int s1 = spec.regime.firstIndependent ? static_cast<int>(gA.iotasFirst.size()) : 0;
    const int s2 = spec.regime.secondIndependent ? static_cast<int>(gA.iotasSecond.size()) : 0;
    const int S = s1 + s2;
    bool exact;
    switch (method) {
        case NormMethod::Exact: exact = true; break;
        case NormMethod::MonteCarlo: exact = (S == 0); break;
        default: exact = (S <= exactThreshold); break;
    }

    SignedSynthesizer synthA(gA, gridDepth);
    SignedSynthesizer synthB(gB, gridDepth);
    const std::size_t side = std::size_t{1} << gridDepth;
    StepFunction2D bufA(gridDepth), bufB(gridDepth), acc(gridDepth);
    std::vector<int> signs1(spec.regime.firstIndependent ? gA.iotasFirst.size() : 0, 1);
    std::vector<int> signs2(spec.regime.secondIndependent ? gA.iotasSecond.size() : 0, 1);

    auto evalPattern = [&](StepFunction2D& accum, double w) {
        synthA.run(signs1, signs2, [&](std::size_t s, const double* row) {
            std::copy(row, row + side, bufA.values.begin() + (s << gridDepth));
        });
        synthB.run(signs1, signs2, [&](std::size_t s, const double* row) {
            std::copy(row, row + side, bufB.values.begin() + (s << gridDepth));
        });
        for (std::size_t c = 0; c < accum.values.size(); ++c)
            accum.values[c] += w * std::fabs(bufA.values[c] - m.values[c] * bufB.values[c]);
    };

    if (exact) {
        if (S > 30) throw std::invalid_argument("exact enumeration over 2^" +
                                                std::to_string(S) + " signs is not feasible");
        const std::uint64_t patterns = std::uint64_t{1} << S;
        const double w = 1.0 / static_cast<double>(patterns);
        for (std::uint64_t pat = 0; pat < patterns; ++pat) {
            for (int b = 0; b < s1; ++b) signs1[b] = (pat >> b) & 1 ? -1 : 1;
            for (int b = 0; b < s2; ++b) signs2[b] = (pat >> (s1 + b)) & 1 ? -1 : 1;
            evalPattern(acc, w);
        }
        est.value = mixedNorm(acc, spec.X, spec.Y);
        est.exact = true;
        est.samples = static_cast<std::int64_t>(patterns);
        return est;
    }

    if (samples < 10) throw std::invalid_argument("monte-carlo needs at least 10 samples");
    const int batches = 10;
    const std::int64_t perBatch = samples / batches;
    StepFunction2D batchAcc(gridDepth);
    std::vector<double> batchNorms(batches);
    std::int64_t sampleIdx = 0;
    for (int b = 0; b < batches; ++b) {
        std::fill(batchAcc.values.begin(), batchAcc.values.end(), 0.0);
        for (std::int64_t q = 0; q < perBatch; ++q, ++sampleIdx) {
            for (int i = 0; i < s1; ++i)
                signs1[i] = rng::toSign(rng::hash4(seed, sampleIdx, 0, gA.iotasFirst[i]));
            for (int j = 0; j < s2; ++j)
                signs2[j] = rng::toSign(rng::hash4(seed, sampleIdx, 1, gA.iotasSecond[j]));
            evalPattern(batchAcc, 1.0);
        }
        const double invPer = 1.0 / static_cast<double>(perBatch);
        StepFunction2D scaled(gridDepth);
        for (std::size_t c = 0; c < batchAcc.values.size(); ++c) {
            scaled.values[c] = batchAcc.values[c] * invPer;
            acc.values[c] += batchAcc.values[c];
        }
        batchNorms[b] = mixedNorm(scaled, spec.X, spec.Y);
    }
    const double invTotal = 1.0 / static_cast<double>(perBatch * batches);
    for (double& v : acc.values) v *= invTotal;
    est.value = mixedNorm(acc, spec.X, spec.Y);
    double mean = 0.0;
    for (double v : batchNorms) mean += v;
    mean /= batches;
    double var = 0.0;
    for (double v : batchNorms) var += (v - mean) * (v - mean);
    var /= (batches - 1);
    est.stdError = std::sqrt(var / batches);
    est.exact = false;
    est.samples = perBatch * batches;
    return est;
}

double scalarProduct(const HaarCoefficients2D& zprime, const HaarCoefficients2D& z) {
    const auto& a = zprime.entries.size() <= z.entries.size() ? zprime : z;
    const auto& b = zprime.entries.size() <= z.entries.size() ? z : zprime;
    double s = 0.0;
    for (const auto& [k, va] : a.entries) {
        auto it = b.entries.find(k);
        if (it == b.entries.end()) continue;
        const int lI = static_cast<int>(iotaLevel(HaarCoefficients2D::keyI(k)));
        const int lJ = static_cast<int>(iotaLevel(HaarCoefficients2D::keyJ(k)));
        s += va * it->second * std::ldexp(1.0, -(lI + lJ));
    }
    return s;
}

double squareSurrogateNorm(const HaarCoefficients2D& z, const ZSpaceSpec& spec,
                           int gridDepth) {
    if (!spec.regime.any())
        throw std::invalid_argument("square surrogate undefined for the all-constant regime");
    CoefficientGroups g = groupCoefficients(z);
    checkGridDepth(g, gridDepth);
    StepFunction2D sq(gridDepth);
    const std::size_t side = sq.side();

    auto paintRect = [&](std::uint64_t iI, std::uint64_t iJ, double v) {
        const std::uint32_t lI = iotaLevel(iI), lJ = iotaLevel(iJ);
        const std::size_t s0 = (iI - (std::uint64_t{1} << lI)) << (gridDepth - lI);
        const std::size_t t0 = (iJ - (std::uint64_t{1} << lJ)) << (gridDepth - lJ);
        const std::size_t ws = std::size_t{1} << (gridDepth - lI);
        const std::size_t wt = std::size_t{1} << (gridDepth - lJ);
        for (std::size_t s = s0; s < s0 + ws; ++s) {
            double* row = sq.values.data() + (s << gridDepth);
            for (std::size_t t = t0; t < t0 + wt; ++t) row[t] += v;
        }
    };

    if (spec.regime.firstIndependent && spec.regime.secondIndependent) {
        for (const auto& [k, a] : z.entries)
            paintRect(HaarCoefficients2D::keyI(k), HaarCoefficients2D::keyJ(k), a * a);
    } else if (spec.regime.secondIndependent) {
        // partial in J: (sum_I a_{I,J} h_I)^2 per J
        std::map<std::uint64_t, std::vector<std::pair<std::uint64_t, double>>> cols;
        for (const auto& [k, a] : z.entries)
            cols[HaarCoefficients2D::keyJ(k)].emplace_back(HaarCoefficients2D::keyI(k), a);
        std::vector<double> f(side);
        for (const auto& [iJ, col] : cols) {
            synthesize1DInto(col, gridDepth, f.data());
            const std::uint32_t lJ = iotaLevel(iJ);
            const std::size_t t0 = (iJ - (std::uint64_t{1} << lJ)) << (gridDepth - lJ);
            const std::size_t wt = std::size_t{1} << (gridDepth - lJ);
            for (std::size_t s = 0; s < side; ++s) {
                double* row = sq.values.data() + (s << gridDepth);
                const double v = f[s] * f[s];
                for (std::size_t t = t0; t < t0 + wt; ++t) row[t] += v;
            }
        }
    } else {
        // partial in I: (sum_J a_{I,J} k_J)^2 per I
        std::vector<double> f(side);
        for (std::size_t r = 0; r < g.iotasFirst.size(); ++r) {
            synthesize1DInto(g.rows[r], gridDepth, f.data());
            const std::uint64_t iI = g.iotasFirst[r];
            const std::uint32_t lI = iotaLevel(iI);
            const std::size_t s0 = (iI - (std::uint64_t{1} << lI)) << (gridDepth - lI);
            const std::size_t ws = std::size_t{1} << (gridDepth - lI);
            for (std::size_t s = s0; s < s0 + ws; ++s) {
                double* row = sq.values.data() + (s << gridDepth);
                for (std::size_t t = 0; t < side; ++t) row[t] += f[t] * f[t];
            }
        }
    }
    for (double& v : sq.values) v = std::sqrt(v);
    return mixedNorm(sq, spec.X, spec.Y);
}

}  // namespace haarstab
