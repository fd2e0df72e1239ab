#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "haarstab/dyadic.hpp"
#include "haarstab/spaces.hpp"

namespace haarstab {

/// One-parameter Haar multiplier with dense entries up to a declared level.
struct HaarMultiplier1D {
    int maxLevel = 0;
    std::vector<double> entries;  // indexed by iota, entries[0] unused

    explicit HaarMultiplier1D(int maxLvl = 0)
        : maxLevel(maxLvl), entries((std::size_t{2} << maxLvl), 0.0) {}

    double entry(DyadicInterval I) const;
    void set(DyadicInterval I, double d);
    double supNorm() const;
};

/// Bi-parameter Haar multiplier D(h_I x k_J) = d_{I,J} h_I x k_J with one of
/// three backings: an explicit entry map, a level-homogeneous matrix, or a
/// seeded random field d = amplitude * u(hash(seed, iota(I), iota(J))).
class HaarMultiplier2D {
public:
    enum class Backing { Dense, LevelHomogeneous, SeededRandom };

    static HaarMultiplier2D dense(int maxLevelFirst, int maxLevelSecond);
    static HaarMultiplier2D levelHomogeneous(std::vector<std::vector<double>> matrix);
    static HaarMultiplier2D seededRandom(std::uint64_t seed, double amplitude,
                                         int maxLevelFirst, int maxLevelSecond);
    static HaarMultiplier2D identity(int maxLevelFirst, int maxLevelSecond);
    static HaarMultiplier2D capon(int maxLevelFirst, int maxLevelSecond);
    /// Entries lambda on the lower triangle, mu elsewhere.
    static HaarMultiplier2D lambdaCaponMu(double lambda, double mu, int maxLevelFirst,
                                          int maxLevelSecond);

    Backing backing() const { return backing_; }
    int maxLevelFirst() const { return maxLevelFirst_; }
    int maxLevelSecond() const { return maxLevelSecond_; }

    double entry(DyadicInterval I, DyadicInterval J) const;
    double entryByIota(std::uint64_t iotaI, std::uint64_t iotaJ) const;
    void setEntry(DyadicInterval I, DyadicInterval J, double d);  // dense only

    /// Exact max |entry| over the declared range for dense and
    /// level-homogeneous backings; the amplitude bound for seeded ones.
    double supNorm() const;

    /// a D + b E as a dense multiplier on the common declared range.
    static HaarMultiplier2D linearCombination(double a, const HaarMultiplier2D& D, double b,
                                              const HaarMultiplier2D& E);

    std::uint64_t seed() const { return seed_; }
    double amplitude() const { return amplitude_; }
    const std::unordered_map<std::uint64_t, double>& denseEntries() const { return entries_; }
    const std::vector<std::vector<double>>& levelMatrix() const { return matrix_; }

private:
    Backing backing_ = Backing::Dense;
    int maxLevelFirst_ = 0;
    int maxLevelSecond_ = 0;
    std::unordered_map<std::uint64_t, double> entries_;
    std::vector<std::vector<double>> matrix_;
    std::uint64_t seed_ = 0;
    double amplitude_ = 0.0;

    void checkRange(DyadicInterval I, DyadicInterval J) const;
};

/// The four truncated variation sums of the bi-tree seminorm plus the roots.
struct VariationReport {
    double t2sSemiNorm = 0.0;
    double rootLower = 0.0;      // d_{[0,1),[0,1)}
    double rootUpperLeft = 0.0;  // d_{[0,1),[0,1/2)}
    double rootUpperRight = 0.0; // d_{[0,1),[1/2,1)}
    double t2Norm = 0.0;
    int truncationLevel = 0;
    double diagonalSum = 0.0;
    double superdiagonalSum = 0.0;
    double lowerSum = 0.0;
    double upperSum = 0.0;
};

/// Finite surrogate of the iterated-limit functionals: lambda takes the
/// first coordinate deep first, mu the second.
struct LambdaMu {
    double lambda = 0.0;  // E_{hi, lo}
    double mu = 0.0;      // E_{lo, hi}
    int loLevel = 0;
    int hiLevel = 0;
    /// two slices: row 0 holds E_{i, lo} for i = 0..hi, row 1 holds E_{lo, j}
    std::vector<std::vector<double>> convergenceTable;
    bool converged = false;
};

/// E_{i,j} = 2^{-i-j} sum over the level-(i,j) pavement of the entries.
double eAvg(const HaarMultiplier2D& D, int i, int j);

LambdaMu lambdaMu(const HaarMultiplier2D& D, int loLevel, int hiLevel, int window = 2,
                  double tol = 1e-9);

VariationReport t2Variation(const HaarMultiplier2D& D, int truncationLevel);

/// Truncated tree variation of a one-parameter multiplier: parent levels
/// strictly below truncationLevel plus the root term.
double tVariation1D(const HaarMultiplier1D& D, int truncationLevel);

HaarCoefficients2D applyMultiplier(const HaarMultiplier2D& D, const HaarCoefficients2D& z);

/// Keep exactly the coefficients with level(I) >= level(J).
HaarCoefficients2D caponApply(const HaarCoefficients2D& z);

HaarCoefficients2D projectLeq(DyadicInterval I, DyadicInterval J,
                              const HaarCoefficients2D& z);
HaarCoefficients2D subRestrict(DyadicInterval K0, DyadicInterval L0,
                               const HaarCoefficients2D& z);
/// Requires |I0| = |J0|. Reindexes h_I x k_J affinely into I0 x J0.
HaarCoefficients2D downScale(DyadicInterval I0, DyadicInterval J0,
                             const HaarCoefficients2D& z);
HaarCoefficients2D upScale(DyadicInterval I0, DyadicInterval J0,
                           const HaarCoefficients2D& z);

/// m_{1,k} (which = 1, over level pairs (k,k)) or m_{2,k} (which = 2, over
/// (k,k+1)) sampled on the grid.
StepFunction2D mField(const HaarMultiplier2D& D, int k, int which, int gridDepth);

struct PointwiseIntCheck {
    double lambda = 0.0;
    double intM1 = 0.0;
    double mu = 0.0;
    double intM2 = 0.0;
    double gapLambda = 0.0;
    double gapMu = 0.0;
};

/// Checks the integral identities lambda = integral of m_{1,k} and
/// mu = integral of m_{2,k} for multipliers whose entries are constant along
/// descending chains past level k. Seeded backings are rejected.
PointwiseIntCheck pointwiseIntCheck(const HaarMultiplier2D& D, int k, int loLevel,
                                    int hiLevel);

struct RootProximityResult {
    double lhs = 0.0;
    double rhs = 0.0;
    bool pass = false;
};

RootProximityResult rootProximityCheck(const HaarMultiplier2D& D, int truncationLevel);

struct PwProximityResult {
    double lhs1 = 0.0;
    double lhs2 = 0.0;
    double rhsBound = 0.0;
    double stdError1 = 0.0;
    double stdError2 = 0.0;
    double zNormValue = 0.0;
    double zNormStdError = 0.0;
    bool pass = false;
};

/// Empirical check of the two pointwise-multiplier proximity estimates:
/// the lower-triangle part of z against m_{1,k} and the upper-triangle part
/// against m_{2,k}, both bounded by 4 ||D||_{T2S} ||z||.
PwProximityResult pwProximityCheck(const HaarMultiplier2D& D, const HaarCoefficients2D& z,
                                   const ZSpaceSpec& spec, int gridDepth,
                                   std::int64_t samples = 2000, std::uint64_t seed = 1);

}  // namespace haarstab
