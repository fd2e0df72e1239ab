#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "haarstab/dyadic.hpp"

namespace haarstab {

/// One-parameter Haar system space: L^p for finite p >= 1, or the closure
/// of the step functions under the sup norm.
struct HaarSystemSpaceSpec {
    bool isLinf = false;
    double p = 2.0;  // ignored when isLinf

    static HaarSystemSpaceSpec Lp(double p);
    static HaarSystemSpaceSpec Linf() { return HaarSystemSpaceSpec{true, 0.0}; }
    std::string name() const;
};

/// Which tensor factors carry independent random signs.
struct SignRegime {
    bool firstIndependent = false;
    bool secondIndependent = false;

    bool any() const { return firstIndependent || secondIndependent; }
    std::string name() const;  // "s00", "s10", "s01", "s11"
};

struct ZSpaceSpec {
    SignRegime regime;
    HaarSystemSpaceSpec X;
    HaarSystemSpaceSpec Y;

    std::string name() const { return regime.name() + ":" + X.name() + ":" + Y.name(); }
};

/// Parse "s<ab>:<X>:<Y>" with ab in {00,01,10,11} and X, Y either
/// "L<p>" (decimal p >= 1) or "Linf". Throws std::invalid_argument.
ZSpaceSpec parseZSpaceSpec(const std::string& text);

/// A finite bi-parameter coefficient set (I,J) -> a_{I,J}, keyed by
/// (iota(I) << 32) | iota(J) so iteration is in iota-lexicographic order.
struct HaarCoefficients2D {
    int maxLevelFirst = 0;
    int maxLevelSecond = 0;
    std::map<std::uint64_t, double> entries;

    static std::uint64_t key(std::uint64_t iotaI, std::uint64_t iotaJ) {
        return (iotaI << 32) | iotaJ;
    }
    static std::uint64_t keyI(std::uint64_t k) { return k >> 32; }
    static std::uint64_t keyJ(std::uint64_t k) { return k & 0xffffffffULL; }

    void set(DyadicInterval I, DyadicInterval J, double a);
    void add(DyadicInterval I, DyadicInterval J, double a);
    double get(DyadicInterval I, DyadicInterval J) const;
    bool empty() const { return entries.empty(); }
    std::size_t size() const { return entries.size(); }
};

struct NormEstimate {
    double value = 0.0;
    double stdError = 0.0;
    bool exact = true;
    std::int64_t samples = 0;

    std::string methodName() const { return exact ? "exact-enumeration" : "monte-carlo"; }
};

enum class NormMethod { Auto, Exact, MonteCarlo };

/// Exact-enumeration threshold: all 2^S sign assignments are enumerated when
/// the number of independent sign variables S is at most this.
inline constexpr int kExactSignThreshold = 16;

/// Norm of a step function in X: L^p uses (2^-N sum |v|^p)^{1/p}, Linf the
/// max of |v|. Depends only on the distribution of |f|.
double xNorm(const StepFunction1D& f, const HaarSystemSpaceSpec& X);
double xNorm(const double* values, std::size_t n, const HaarSystemSpaceSpec& X);

/// Mixed norm of a 2D step function: inner Y-norm in t per s-cell, then the
/// outer X-norm in s.
double mixedNorm(const StepFunction2D& g, const HaarSystemSpaceSpec& X,
                 const HaarSystemSpaceSpec& Y);

/// Synthesize sum a_{I,J} sig1(I) sig2(J) h_I x k_J on the grid. Signs are
/// passed as arrays indexed by position into the sorted distinct iota lists.
struct CoefficientGroups {
    // distinct first-coordinate iotas, sorted; per group the (iotaJ, a) list
    std::vector<std::uint64_t> iotasFirst;
    std::vector<std::vector<std::pair<std::uint64_t, double>>> rows;
    std::vector<std::uint64_t> iotasSecond;  // sorted distinct
    int maxLevelFirst = 0;
    int maxLevelSecond = 0;
};
CoefficientGroups groupCoefficients(const HaarCoefficients2D& z);

/// Norm in Z(sigma, X, Y) at finite grid depth: pointwise sign expectation
/// (exact enumeration or Monte Carlo with 10-batch standard error), then the
/// mixed X(Y) norm. For the all-constant regime the expectation stage is the
/// identity and the result is exact.
NormEstimate zNorm(const HaarCoefficients2D& z, const ZSpaceSpec& spec, int gridDepth,
                   NormMethod method = NormMethod::Auto, std::int64_t samples = 2000,
                   std::uint64_t seed = 1, int exactThreshold = kExactSignThreshold);

/// Biorthogonality pairing: sum a'_{I,J} a_{I,J} |I| |J|, equal to the grid
/// integral of the product of the two synthesized functions.
double scalarProduct(const HaarCoefficients2D& zprime, const HaarCoefficients2D& z);

/// Regime-appropriate square function norm in X(Y): the full square function
/// when both factors are independent, partial square functions otherwise.
/// Undefined (throws) for the all-constant regime.
double squareSurrogateNorm(const HaarCoefficients2D& z, const ZSpaceSpec& spec,
                           int gridDepth);

/// Evaluate the plain synthesis sum a_{I,J} h_I x k_J on the grid.
StepFunction2D synthesize2D(const HaarCoefficients2D& z, int gridDepth);

/// || E_sigma | f_A - m * f_B | ||_{X(Y)} where f_A and f_B are signed
/// syntheses of two coefficient sets sharing one set of sign variables and m
/// is a fixed step function on the same grid.
NormEstimate pairedExpectationNorm(const HaarCoefficients2D& A, const HaarCoefficients2D& B,
                                   const StepFunction2D& m, const ZSpaceSpec& spec,
                                   int gridDepth, NormMethod method = NormMethod::Auto,
                                   std::int64_t samples = 2000, std::uint64_t seed = 1,
                                   int exactThreshold = kExactSignThreshold);

}  // namespace haarstab
