#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "haarstab/multiplier.hpp"
#include "haarstab/probes.hpp"
#include "haarstab/spaces.hpp"
#include "haarstab/stabilizer.hpp"

using namespace haarstab;

TEST_CASE("l1-row probe for n = 0 is a single tensor") {
    ProbeFamilySpec spec;
    spec.family = ProbeFamily::L1Row;
    spec.n = 0;
    auto z = buildProbe(spec);
    REQUIRE(z.entries.size() == 1);
    CHECK(z.get(kUnitInterval, kUnitInterval) == 1.0);
}

TEST_CASE("l1-row first factor collapses to the telescoped indicator") {
    // f = sum |I_k|^{-1} h_{I_k} = |I_{n+1}|^{-1} chi_{I_{n+1}} - chi_{[0,1)}
    for (int n = 1; n <= 4; ++n) {
        std::vector<std::pair<std::uint64_t, double>> fCoeffs;
        for (int k = 0; k <= n; ++k)
            fCoeffs.emplace_back(iota(DyadicInterval(k, 0)), std::ldexp(1.0, k));
        const int N = n + 2;
        auto f = synthesize1D(fCoeffs, N);
        const double inv = std::ldexp(1.0, n + 1);
        for (std::size_t c = 0; c < f.cells(); ++c) {
            const bool inHead = c < (f.cells() >> (n + 1));
            CHECK(f.values[c] == (inHead ? inv - 1.0 : -1.0));
        }
    }
}

TEST_CASE("linf-row probe sizes and entries") {
    ProbeFamilySpec spec;
    spec.family = ProbeFamily::LinfRow;
    spec.n = 1;
    auto z = buildProbe(spec);
    CHECK(z.entries.size() == 8);  // (h_{I_2} - h_{I_1}) x four k_J at level 2
    CHECK(z.get(DyadicInterval(2, 0), DyadicInterval(2, 3)) == 1.0);
    CHECK(z.get(DyadicInterval(1, 0), DyadicInterval(2, 0)) == -1.0);
}

TEST_CASE("capon probe: orthogonal projection stays below one") {
    ProbeFamilySpec spec;
    spec.family = ProbeFamily::L1Row;
    spec.zSpec = parseZSpaceSpec("s00:L2:L2");
    auto rep = probeCapon(spec, 1, 4);
    for (const auto& row : rep.rows) {
        CAPTURE(row.n);
        CHECK(row.ratio <= 1.0 + 3.0 * row.ratioStdError + 1e-12);
    }
}

TEST_CASE("capon probe: the mixed L1(L2) ratios grow like sqrt(n)") {
    ProbeFamilySpec spec;
    spec.family = ProbeFamily::L1Row;
    spec.zSpec = parseZSpaceSpec("s00:L1:L2");
    auto rep = probeCapon(spec, 1, 4);
    double prev = 0.0;
    for (const auto& row : rep.rows) {
        CAPTURE(row.n);
        CHECK(row.ratio >= std::sqrt(row.n + 1.0) / 4.0 - 3.0 * row.ratioStdError);
        CHECK(row.ratio > prev);
        prev = row.ratio;
    }
    CHECK(rep.growthFit > 0.0);
}

TEST_CASE("probe ratios are invariant under coefficient scaling") {
    ProbeFamilySpec a, b;
    a.family = b.family = ProbeFamily::L1Row;
    a.zSpec = b.zSpec = parseZSpaceSpec("s00:L1:L2");
    a.n = b.n = 3;
    a.coefficients = {1.0, 1.0, 1.0, 1.0};
    b.coefficients = {2.5, 2.5, 2.5, 2.5};
    auto ra = probeCapon(a, 3, 3);
    auto rb = probeCapon(b, 3, 3);
    CHECK(ra.rows[0].ratio == doctest::Approx(rb.rows[0].ratio).epsilon(1e-12));
    CHECK(rb.rows[0].baseNorm.value ==
          doctest::Approx(2.5 * ra.rows[0].baseNorm.value).epsilon(1e-12));
}

TEST_CASE("linf-row norms match the closed forms") {
    ProbeFamilySpec spec;
    spec.family = ProbeFamily::LinfRow;
    spec.zSpec = parseZSpaceSpec("s00:Linf:L1");
    for (int n = 1; n <= 3; ++n) {
        spec.n = n;
        auto z = buildProbe(spec);
        const int grid = probeMinGridDepth(ProbeFamily::LinfRow, n);
        auto zn = zNorm(z, spec.zSpec, grid);
        CHECK(zn.value == doctest::Approx(2.0).epsilon(1e-12));
        auto cn = zNorm(caponApply(z), spec.zSpec, grid);
        // || sum of n independent signs ||_{L1}, computed from the binomial
        double mad = 0.0;
        for (int b = 0; b <= n; ++b) {
            double binom = 1.0;
            for (int x = 0; x < b; ++x) binom = binom * (n - x) / (x + 1);
            mad += binom * std::ldexp(1.0, -n) * std::fabs(2.0 * b - n);
        }
        CHECK(cn.value == doctest::Approx(mad).epsilon(1e-12));
        CHECK(cn.value >= std::sqrt(n) / std::sqrt(2.0) - 1e-12);
    }
}

TEST_CASE("factorization residual vanishes on the identity and capon") {
    auto flat = EtaSchedule::flat(0.25);
    StabilizeConfig cfg;
    cfg.seed = 5;
    auto id = HaarMultiplier2D::identity(16, 16);
    auto rep = checkFactorization(id, parseZSpaceSpec("s00:L1:L1"), flat, 0.2, cfg, 0, 6);
    CHECK(rep.lambda == doctest::Approx(1.0));
    CHECK(rep.mu == doctest::Approx(1.0));
    CHECK(rep.residualT2S == doctest::Approx(0.0));
    CHECK(rep.maxOperatorRatio <= 1e-12);

    auto capon = HaarMultiplier2D::capon(16, 16);
    auto rc = checkFactorization(capon, parseZSpaceSpec("s00:L1:L1"), flat, 0.2, cfg, 0, 6);
    CHECK(rc.lambda == doctest::Approx(1.0));
    CHECK(rc.mu == doctest::Approx(0.0));
    CHECK(rc.residualT2S == doctest::Approx(0.0));
    CHECK(rc.maxOperatorRatio <= 1e-12);
    CHECK(rc.proximityPass);
}

TEST_CASE("factorization on a seeded multiplier stays within the bounds") {
    auto flat = EtaSchedule::flat(0.25);
    StabilizeConfig cfg;
    cfg.seed = 4;
    auto D = HaarMultiplier2D::seededRandom(4, 1.0, 16, 16);
    auto rep = checkFactorization(D, parseZSpaceSpec("s00:L1:L1"), flat, 0.2, cfg, 0, 10);
    CHECK(rep.stabilize.report.pass);
    CHECK(rep.proximityPass);
    CHECK(rep.balancingResidue <= 0.2);
    CHECK(rep.residualT2S <= rep.proximityBound);
    CHECK(rep.operatorRatios.size() == 10);
}

TEST_CASE("probe input validation") {
    ProbeFamilySpec spec;
    spec.family = ProbeFamily::L1Row;
    spec.n = 2;
    spec.coefficients = {1.0};  // wrong length
    CHECK_THROWS_AS(buildProbe(spec), std::invalid_argument);
    spec.coefficients.clear();
    spec.gridDepth = 2;  // too coarse for n = 2
    spec.zSpec = parseZSpaceSpec("s00:L1:L1");
    CHECK_THROWS_AS(probeCapon(spec, 2, 2), std::invalid_argument);
}

TEST_CASE("l1-row mixed-norm values match the closed forms") {
    // ||f x g|| = ||f||_1 ||g||_2 = 2 (1 - 2^{-n-1}) sqrt(n+1); the capon
    // part integrates the row square functions over the dyadic annuli
    ProbeFamilySpec spec;
    spec.family = ProbeFamily::L1Row;
    spec.zSpec = parseZSpaceSpec("s00:L1:L2");
    for (int n = 1; n <= 5; ++n) {
        spec.n = n;
        auto z = buildProbe(spec);
        const int grid = probeMinGridDepth(ProbeFamily::L1Row, n);
        const double base = zNorm(z, spec.zSpec, grid).value;
        const double expectBase =
            2.0 * (1.0 - std::ldexp(1.0, -(n + 1))) * std::sqrt(n + 1.0);
        CHECK(base == doctest::Approx(expectBase).epsilon(1e-12));

        const double capon = zNorm(caponApply(z), spec.zSpec, grid).value;
        double expectCapon = 0.0;
        for (int k = 0; k <= n; ++k)  // annulus [2^{-k-1}, 2^{-k})
            expectCapon += std::ldexp(1.0, -(k + 1)) *
                           std::sqrt((std::ldexp(1.0, 2 * (k + 1)) - 1.0) / 3.0);
        double head = 0.0;
        for (int l = 0; l <= n; ++l) {
            const double d = std::ldexp(1.0, n + 1) - std::ldexp(1.0, l);
            head += d * d;
        }
        expectCapon += std::ldexp(1.0, -(n + 1)) * std::sqrt(head);
        CHECK(capon == doctest::Approx(expectCapon).epsilon(1e-12));
    }
}
