#pragma once

#include <cstdint>
#include <vector>

#include "haarstab/multiplier.hpp"
#include "haarstab/spaces.hpp"
#include "haarstab/stabilizer.hpp"

namespace haarstab {

enum class ProbeFamily { L1Row, LinfRow };

/// Test-vector families probing the growth of ||C z|| / ||z||:
///   l1-row:   f x g with f = sum 2^k h_{[0,2^-k)} and g = sum a_l r_l,
///   linf-row: z = sum (h_{I_2k} - h_{I_2k-1}) x r_2k.
struct ProbeFamilySpec {
    ProbeFamily family = ProbeFamily::L1Row;
    int n = 1;
    std::vector<double> coefficients;  // a_l, defaults to all ones
    ZSpaceSpec zSpec;
    int gridDepth = 0;  // 0: the family minimum
    std::int64_t samples = 2000;
    std::uint64_t seed = 1;
};

int probeMinGridDepth(ProbeFamily family, int n);

HaarCoefficients2D buildProbe(const ProbeFamilySpec& spec);

struct ProbeRow {
    int n = 0;
    NormEstimate caponNorm;
    NormEstimate baseNorm;
    double ratio = 0.0;
    double ratioStdError = 0.0;
};

struct ProbeReport {
    std::vector<ProbeRow> rows;
    double growthFit = 0.0;  // least-squares slope of log ratio vs log n
};

ProbeReport probeCapon(ProbeFamilySpec spec, int nLo, int nHi);

struct FactorizationReport {
    StabilizeResult stabilize;
    double lambda = 0.0;
    double mu = 0.0;
    double residualT2S = 0.0;
    double residualT2 = 0.0;
    double proximityBound = 0.0;
    double balancingResidue = 0.0;
    bool proximityPass = false;
    double maxOperatorRatio = 0.0;  // max over random z of ||R z|| / ||z||
    std::vector<double> operatorRatios;
};

/// Stabilize D, form R = Dtilde - (lambda C + mu (Id - C)), and report the
/// variation-norm proximity plus empirical operator ratios on random inputs.
FactorizationReport checkFactorization(const HaarMultiplier2D& D, const ZSpaceSpec& zSpec,
                                       const EtaSchedule& eta, double delta,
                                       const StabilizeConfig& config, int gridDepth = 0,
                                       int trials = 20);

/// Random sparse coefficient set with entries in [-1,1] drawn from the seed.
HaarCoefficients2D randomCoefficients(int maxLevelFirst, int maxLevelSecond, int count,
                                      std::uint64_t seed);

}  // namespace haarstab
