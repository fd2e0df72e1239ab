#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "haarstab/faithful.hpp"
#include "haarstab/multiplier.hpp"

namespace haarstab {

/// Entry weights eta_{i,j} for the semi-stabilization conditions.
struct EtaSchedule {
    std::function<double(int, int)> eta;
    bool summable = false;

    double operator()(int i, int j) const { return eta(i, j); }

    static EtaSchedule flat(double v);
    /// eta_{i,j} = scale * ratio^{i+j}; summable for ratio < 1/4.
    static EtaSchedule geometric(double scale, double ratio);

    /// Numeric check of the row/column tail bounds (tails strictly below a
    /// third of the preceding entry) over 0 <= i,j <= range.
    bool checkSummability(int range) const;
};

struct StabilizeConfig {
    int outputDepth = 2;       // K
    double deltaBalance = 0.2; // balancing tolerance
    int frequencyBudget = 16;  // deepest base level any system may touch
    std::uint64_t seed = 1;
    int retryLimit = 200;      // sign redraws per step
    int pipelineRetries = 4;   // full restarts of stabilizeFull
    double stageShare = 0.5;   // per-stage verification threshold as a share of eta/delta
};

/// Worst slack (threshold minus observed difference) per condition family.
struct ConditionReport {
    double lower = 0.0;
    double upper = 0.0;
    double diagonal = 0.0;
    double superdiagonal = 0.0;
    double balancing = 0.0;
    bool pass = false;
    int depth = 0;
};

struct StabilizeResult {
    FaithfulHaarSystem systemFirst;
    FaithfulHaarSystem systemSecond;
    HaarMultiplier2D Dtilde = HaarMultiplier2D::dense(0, 0);
    ConditionReport report;
    LambdaMu lambdaMuIn;
    LambdaMu lambdaMuOut;
    int retriesUsed = 0;
    /// worst |E(Dtilde)_{i,j} - E(D)_{m_i,n_j}| over the output level grid
    double transportGap = 0.0;
    double residualT2S = 0.0;
    double residualT2 = 0.0;
    double proximityBound = 0.0;
    bool proximityPass = false;
};

struct StabilizerError : std::runtime_error {
    explicit StabilizerError(const std::string& what) : std::runtime_error(what) {}
};

/// One-parameter coefficient field: value of d at (level, cell index).
using CoefficientField1D = std::function<double(int, std::uint64_t)>;

struct Split1D {
    std::vector<std::int8_t> signs;        // aligned with the input cells
    std::vector<std::uint64_t> plusCells;  // { sum theta h = +1 }, level m+1
    std::vector<std::uint64_t> minusCells;
    int draws = 1;
};

/// Randomly split a union of level-m cells by signs so that, for every
/// family, both half averages at the target level stay within
/// delta + |level-m average - level-n average| of the parent average.
/// Verified directly; redraws up to retryLimit. When enforceVarianceBudget
/// is set, the Chebyshev precondition is required up front.
Split1D randomSplit1D(const std::vector<std::uint64_t>& gammaCells, int m, int n,
                      const std::vector<CoefficientField1D>& families, double delta,
                      std::uint64_t seed, int retryLimit = 200,
                      bool enforceVarianceBudget = false);

struct Split2D {
    std::vector<std::int8_t> signsFirst;
    std::vector<std::int8_t> signsSecond;
    std::vector<std::uint64_t> plusFirst, minusFirst;    // level i+1
    std::vector<std::uint64_t> plusSecond, minusSecond;  // level j+1
    int draws = 1;
};

/// Bi-parameter analogue: joint signs for a product of two cell unions so
/// that all four quarter averages at the target level pair stay within
/// delta + |coarse - fine drift| of the parent average.
Split2D randomSplit2D(const HaarMultiplier2D& D, const std::vector<std::uint64_t>& gammaCells,
                      int i, const std::vector<std::uint64_t>& deltaCells, int j, int k, int l,
                      double delta, std::uint64_t seed, int retryLimit = 200,
                      bool enforceVarianceBudget = false);

struct OneParamStabilizeResult {
    FaithfulHaarSystem system;
    HaarMultiplier1D Dtilde;
    int retriesUsed = 0;
};

struct LevelWindow {
    int lo = 0;
    int hi = 0;
};

/// Build a faithful Haar system (frequencies inside the window) so that the
/// restricted one-parameter multiplier is eta-tree-stabilized; every
/// inequality is checked directly before returning.
OneParamStabilizeResult oneParamStabilize(const HaarMultiplier1D& D,
                                          const std::vector<double>& eta,
                                          LevelWindow window, const StabilizeConfig& config);

enum class StabilizeStage { Triangular, Superdiagonal, Diagonal, Balancing };

std::string stageName(StabilizeStage s);

/// Build a system pair whose restriction satisfies the stage's condition,
/// directly verified at stageShare of the thresholds.
std::pair<FaithfulHaarSystem, FaithfulHaarSystem> stabilizeStage(
    const HaarMultiplier2D& D, StabilizeStage stage, const EtaSchedule& eta,
    const StabilizeConfig& config);

/// Direct evaluation of the five condition families at the given depth;
/// needs entries up to (depth+1, depth+2).
ConditionReport checkConditions(const HaarMultiplier2D& D, const EtaSchedule& eta,
                                double delta, int depth);

/// The four-stage pipeline: triangular, superdiagonal, diagonal, balancing,
/// composed by substitution; the result carries a passing report, transport
/// data for the pavement averages and the variation-norm proximity of the
/// residual to lambda C + mu (Id - C).
StabilizeResult stabilizeFull(const HaarMultiplier2D& D, const EtaSchedule& eta, double delta,
                              const StabilizeConfig& config);

}  // namespace haarstab
