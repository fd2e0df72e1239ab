#include "haarstab/probes.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "haarstab/rng.hpp"

namespace haarstab {

int probeMinGridDepth(ProbeFamily family, int n) {
    return family == ProbeFamily::L1Row ? n + 2 : 2 * n + 2;
}

HaarCoefficients2D buildProbe(const ProbeFamilySpec& spec) {
    if (spec.n < 0) throw std::invalid_argument("probe size must be nonnegative");
    std::vector<double> a = spec.coefficients;
    if (a.empty()) a.assign(spec.n + 1, 1.0);
    HaarCoefficients2D z;
    if (spec.family == ProbeFamily::L1Row) {
        if (static_cast<int>(a.size()) != spec.n + 1)
            throw std::invalid_argument("need n+1 coefficients for the l1-row family");
        for (int k = 0; k <= spec.n; ++k) {
            const double fk = std::ldexp(1.0, k);  // |I_k|^{-1}
            for (int l = 0; l <= spec.n; ++l)
                for (std::uint64_t c = 0; c < (std::uint64_t{1} << l); ++c)
                    z.set(DyadicInterval(k, 0), DyadicInterval(l, c), fk * a[l]);
        }
        return z;
    }
    // linf-row: coefficients are fixed +-1 by the family
    for (int k = 1; k <= spec.n; ++k)
        for (std::uint64_t c = 0; c < (std::uint64_t{1} << (2 * k)); ++c) {
            z.set(DyadicInterval(2 * k, 0), DyadicInterval(2 * k, c), 1.0);
            z.set(DyadicInterval(2 * k - 1, 0), DyadicInterval(2 * k, c), -1.0);
        }
    return z;
}

ProbeReport probeCapon(ProbeFamilySpec spec, int nLo, int nHi) {
    if (nLo > nHi) throw std::invalid_argument("empty probe range");
    ProbeReport rep;
    const bool explicitCoeffs = !spec.coefficients.empty();
    for (int n = nLo; n <= nHi; ++n) {
        spec.n = n;
        if (!explicitCoeffs) spec.coefficients.clear();
        const int grid = spec.gridDepth > 0
                             ? spec.gridDepth
                             : probeMinGridDepth(spec.family, n);
        if (grid < probeMinGridDepth(spec.family, n))
            throw std::invalid_argument("grid too coarse for the probe family");
        HaarCoefficients2D z = buildProbe(spec);
        HaarCoefficients2D cz = caponApply(z);
        ProbeRow row;
        row.n = n;
        row.baseNorm = zNorm(z, spec.zSpec, grid, NormMethod::Auto, spec.samples, spec.seed);
        row.caponNorm =
            zNorm(cz, spec.zSpec, grid, NormMethod::Auto, spec.samples, spec.seed + 1);
        row.ratio = row.baseNorm.value > 0 ? row.caponNorm.value / row.baseNorm.value : 0.0;
        if (row.baseNorm.value > 0 && row.caponNorm.value > 0) {
            const double rc = row.caponNorm.stdError / row.caponNorm.value;
            const double rb = row.baseNorm.stdError / row.baseNorm.value;
            row.ratioStdError = row.ratio * std::sqrt(rc * rc + rb * rb);
        }
        rep.rows.push_back(row);
    }
    // least-squares slope of log ratio against log n
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int cnt = 0;
    for (const auto& r : rep.rows) {
        if (r.n < 1 || r.ratio <= 0) continue;
        const double x = std::log(static_cast<double>(r.n)), y = std::log(r.ratio);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++cnt;
    }
    if (cnt >= 2 && sxx * cnt - sx * sx > 0)
        rep.growthFit = (sxy * cnt - sx * sy) / (sxx * cnt - sx * sx);
    return rep;
}

HaarCoefficients2D randomCoefficients(int maxLevelFirst, int maxLevelSecond, int count,
                                      std::uint64_t seed) {
    HaarCoefficients2D z;
    z.maxLevelFirst = maxLevelFirst;
    z.maxLevelSecond = maxLevelSecond;
    const std::uint64_t iotaMaxF = (std::uint64_t{2} << maxLevelFirst) - 1;
    const std::uint64_t iotaMaxS = (std::uint64_t{2} << maxLevelSecond) - 1;
    for (int c = 0; c < count; ++c) {
        const std::uint64_t iI = 1 + rng::hash3(seed, 0, c) % iotaMaxF;
        const std::uint64_t iJ = 1 + rng::hash3(seed, 1, c) % iotaMaxS;
        const double v = rng::toSymmetric(rng::hash3(seed, 2, c));
        z.entries[HaarCoefficients2D::key(iI, iJ)] = v;
    }
    return z;
}

FactorizationReport checkFactorization(const HaarMultiplier2D& D, const ZSpaceSpec& zSpec,
                                       const EtaSchedule& eta, double delta,
                                       const StabilizeConfig& config, int gridDepth,
                                       int trials) {
    FactorizationReport rep;
    rep.stabilize = stabilizeFull(D, eta, delta, config);
    rep.lambda = rep.stabilize.lambdaMuOut.lambda;
    rep.mu = rep.stabilize.lambdaMuOut.mu;
    rep.residualT2S = rep.stabilize.residualT2S;
    rep.residualT2 = rep.stabilize.residualT2;
    rep.proximityBound = rep.stabilize.proximityBound;
    rep.proximityPass = rep.stabilize.proximityPass;

    const HaarMultiplier2D& Dt = rep.stabilize.Dtilde;
    rep.balancingResidue = std::fabs(Dt.entry(kUnitInterval, DyadicInterval(1, 0)) -
                                     Dt.entry(kUnitInterval, DyadicInterval(1, 1)));
    HaarMultiplier2D R = HaarMultiplier2D::linearCombination(
        1.0, Dt,
        -1.0,
        HaarMultiplier2D::lambdaCaponMu(rep.lambda, rep.mu, Dt.maxLevelFirst(),
                                        Dt.maxLevelSecond()));

    const int maxLf = Dt.maxLevelFirst(), maxLs = Dt.maxLevelSecond();
    const int grid = gridDepth > 0 ? gridDepth : std::max(maxLf, maxLs) + 1;
    for (int t = 0; t < trials; ++t) {
        HaarCoefficients2D z =
            randomCoefficients(maxLf, maxLs, 8, rng::hash2(config.seed, 1000 + t));
        NormEstimate zn = zNorm(z, zSpec, grid, NormMethod::Auto, 400, config.seed + t);
        if (zn.value <= 0) continue;
        NormEstimate rn = zNorm(applyMultiplier(R, z), zSpec, grid, NormMethod::Auto, 400,
                                config.seed + t);
        rep.operatorRatios.push_back(rn.value / zn.value);
        rep.maxOperatorRatio = std::max(rep.maxOperatorRatio, rn.value / zn.value);
    }
    return rep;
}

}  // namespace haarstab
