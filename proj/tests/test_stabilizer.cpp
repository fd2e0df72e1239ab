#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "haarstab/faithful.hpp"
#include "haarstab/multiplier.hpp"
#include "haarstab/stabilizer.hpp"

using namespace haarstab;

namespace {

StabilizeConfig baseConfig(std::uint64_t seed) {
    StabilizeConfig cfg;
    cfg.outputDepth = 2;
    cfg.deltaBalance = 0.2;
    cfg.frequencyBudget = 16;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("eta schedules and the summability bounds") {
    auto flat = EtaSchedule::flat(0.25);
    CHECK(flat(0, 0) == 0.25);
    CHECK(flat(4, 7) == 0.25);
    CHECK_FALSE(flat.checkSummability(6));

    auto geo = EtaSchedule::geometric(0.5, 0.2);
    CHECK(geo.summable);
    CHECK(geo.checkSummability(8));
    CHECK(geo(1, 1) == doctest::Approx(0.5 * 0.04));

    CHECK_FALSE(EtaSchedule::geometric(0.5, 0.4).checkSummability(8));
    CHECK_THROWS_AS(EtaSchedule::flat(0.0), std::invalid_argument);
}

TEST_CASE("one-parameter split: constant families succeed immediately") {
    CoefficientField1D constant = [](int, std::uint64_t) { return 0.7; };
    std::vector<std::uint64_t> gamma{0, 1, 2, 3};  // all of [0,1) at level 2
    auto r = randomSplit1D(gamma, 2, 6, {constant}, 0.1, 5, 10);
    CHECK(r.draws == 1);
    CHECK(r.plusCells.size() == 4);
    CHECK(r.minusCells.size() == 4);
    // the two halves split the refinement of gamma cell by cell
    for (std::size_t c = 0; c < gamma.size(); ++c)
        CHECK(r.plusCells[c] / 2 == gamma[c]);
}

TEST_CASE("one-parameter split: measured variance obeys the stated bound") {
    const auto D = HaarMultiplier2D::seededRandom(3, 1.0, 14, 1);
    CoefficientField1D field = [&](int level, std::uint64_t cell) {
        return D.entry(DyadicInterval(level, cell), kUnitInterval);
    };
    const int m = 6, n = 12;
    std::vector<std::uint64_t> gamma;
    for (std::uint64_t c = 0; c < 64; ++c) gamma.push_back(c);

    const double expected = [&] {  // E(X) = level-n average over gamma
        double s = 0.0;
        for (std::uint64_t c = 0; c < (std::uint64_t{1} << n); ++c) s += field(n, c);
        return s / std::ldexp(1.0, n);
    }();
    double var = 0.0;
    const int draws = 500;
    std::mt19937_64 gen(7);
    for (int d = 0; d < draws; ++d) {
        // test-side draw: random signs, then X_+ by direct summation
        double sum = 0.0;
        std::uint64_t count = 0;
        for (std::uint64_t c : gamma) {
            const std::uint64_t half = 2 * c + (gen() & 1);
            for (std::uint64_t r = half << (n - m - 1); r < (half + 1) << (n - m - 1); ++r) {
                sum += field(n, r);
                ++count;
            }
        }
        const double x = sum / static_cast<double>(count);
        var += (x - expected) * (x - expected);
    }
    var /= draws;
    const double bound = std::ldexp(1.0, -m) / 1.0 * 1.0;  // 2^-m / |Gamma| * max d^2
    CHECK(var <= 1.5 * bound);
}

TEST_CASE("one-parameter split: success rate at the chebyshev scale") {
    const auto D = HaarMultiplier2D::seededRandom(11, 1.0, 14, 1);
    CoefficientField1D field = [&](int level, std::uint64_t cell) {
        return D.entry(DyadicInterval(level, cell), kUnitInterval);
    };
    const int m = 5, n = 12;
    std::vector<std::uint64_t> gamma;
    for (std::uint64_t c = 0; c < 32; ++c) gamma.push_back(c);
    const double delta = 4.0 * std::pow(2.0, -2.5);
    int ok = 0;
    const int draws = 500;
    for (int d = 0; d < draws; ++d) {
        try {
            randomSplit1D(gamma, m, n, {field}, delta, 1000 + d, 1, false);
            ++ok;
        } catch (const StabilizerError&) {
        }
    }
    CHECK(ok >= draws * 3 / 4);
}

TEST_CASE("one-parameter split: the variance budget precondition is enforced") {
    CoefficientField1D big = [](int, std::uint64_t c) { return c % 2 ? 5.0 : -5.0; };
    std::vector<std::uint64_t> gamma{0, 1};
    CHECK_THROWS_WITH_AS(randomSplit1D(gamma, 1, 3, {big}, 0.01, 1, 4, true),
                         doctest::Contains("variance budget"), StabilizerError);
}

TEST_CASE("two-parameter split on homogeneous and identity multipliers") {
    auto level = HaarMultiplier2D::levelHomogeneous(
        std::vector<std::vector<double>>(11, std::vector<double>(11, 0.4)));
    std::vector<std::uint64_t> gamma{0}, delta{0};
    auto r = randomSplit2D(level, gamma, 0, delta, 0, 10, 10, 0.05, 3, 5, false);
    CHECK(r.draws == 1);

    auto id = HaarMultiplier2D::identity(10, 10);
    auto ri = randomSplit2D(id, gamma, 0, delta, 0, 10, 10, 0.05, 3, 5);
    CHECK(ri.draws == 1);
    CHECK(ri.plusFirst.size() == 1);
    CHECK(ri.plusSecond.size() == 1);
}

TEST_CASE("two-parameter split: success rate on seeded fields") {
    auto D = HaarMultiplier2D::seededRandom(13, 1.0, 10, 10);
    std::vector<std::uint64_t> gamma{0}, delta{0};
    // the a-priori variance bound at i=j=0, k=l=10 is generous; the observed
    // scale is far smaller, so a moderate tolerance already succeeds
    const double dl = 0.25;
    int ok = 0;
    const int draws = 200;
    for (int d = 0; d < draws; ++d) {
        try {
            randomSplit2D(D, gamma, 0, delta, 0, 10, 10, dl, 2000 + d, 1, false);
            ++ok;
        } catch (const StabilizerError&) {
        }
    }
    CHECK(ok >= draws * 3 / 4);
}

TEST_CASE("one-parameter stabilization of constant and level-function multipliers") {
    StabilizeConfig cfg = baseConfig(3);
    cfg.outputDepth = 3;

    HaarMultiplier1D constant(20);
    for (std::size_t i = 1; i < constant.entries.size(); ++i) constant.entries[i] = 0.3;
    auto r = oneParamStabilize(constant, std::vector<double>(4, 0.25), {8, 20}, cfg);
    CHECK(validate(r.system).empty());
    for (std::size_t i = 1; i < r.Dtilde.entries.size(); ++i)
        CHECK(r.Dtilde.entries[i] == doctest::Approx(0.3));

    // d_I = f(level) convergent: the restriction reads f at the frequencies
    HaarMultiplier1D conv(20);
    auto f = [](int level) { return 1.0 + std::ldexp(1.0, -level); };
    for (std::uint64_t io = 1; io < conv.entries.size(); ++io)
        conv.entries[io] = f(static_cast<int>(iotaLevel(io)));
    auto rc = oneParamStabilize(conv, std::vector<double>(4, 0.25), {8, 20}, cfg);
    for (int i = 0; i <= 3; ++i)
        CHECK(rc.Dtilde.entry(DyadicInterval(i, 0)) ==
              doctest::Approx(f(rc.system.frequencies[i])).epsilon(1e-12));
}

TEST_CASE("one-parameter stabilization of seeded multipliers") {
    StabilizeConfig cfg = baseConfig(1);
    cfg.outputDepth = 3;
    const std::vector<double> eta(4, 0.25);
    int ok = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        HaarMultiplier1D D(20);
        auto field = HaarMultiplier2D::seededRandom(seed, 1.0, 20, 1);
        for (std::uint64_t io = 1; io < D.entries.size(); ++io)
            D.entries[io] = field.entryByIota(io, 1);
        cfg.seed = seed;
        try {
            auto r = oneParamStabilize(D, eta, {8, 20}, cfg);
            CHECK(validate(r.system).empty());
            // direct condition check on the output
            for (int i = 0; i < 3; ++i)
                for (std::uint64_t c = 0; c < (std::uint64_t{1} << i); ++c) {
                    DyadicInterval I(i, c);
                    CHECK(std::fabs(r.Dtilde.entry(I) - r.Dtilde.entry(leftHalf(I))) <=
                          eta[i]);
                    CHECK(std::fabs(r.Dtilde.entry(I) - r.Dtilde.entry(rightHalf(I))) <=
                          eta[i]);
                }
            ++ok;
        } catch (const StabilizerError&) {
        }
    }
    CHECK(ok >= 18);
}

TEST_CASE("one-parameter stabilization reports unusable windows") {
    HaarMultiplier1D D(20);
    // averages oscillate with the level: they cannot settle
    for (std::uint64_t io = 1; io < D.entries.size(); ++io)
        D.entries[io] = (iotaLevel(io) % 2 == 0) ? 1.0 : -1.0;
    StabilizeConfig cfg = baseConfig(1);
    cfg.outputDepth = 3;
    CHECK_THROWS_WITH_AS(oneParamStabilize(D, std::vector<double>(4, 0.25), {8, 19}, cfg),
                         doctest::Contains("settle"), StabilizerError);
    CHECK_THROWS_AS(oneParamStabilize(D, std::vector<double>(4, 0.25), {18, 20}, cfg),
                    StabilizerError);
}

TEST_CASE("condition report on reference multipliers") {
    auto flat = EtaSchedule::flat(0.25);
    auto id = HaarMultiplier2D::identity(6, 6);
    auto r = checkConditions(id, flat, 0.2, 2);
    CHECK(r.pass);
    CHECK(r.lower == doctest::Approx(0.25));
    CHECK(r.balancing == doctest::Approx(0.2));

    auto capon = HaarMultiplier2D::capon(6, 6);
    auto rc = checkConditions(capon, flat, 0.0, 2);
    CHECK(rc.lower == doctest::Approx(0.25));
    CHECK(rc.upper == doctest::Approx(0.25));
    CHECK(rc.diagonal == doctest::Approx(0.25));
    CHECK(rc.superdiagonal == doctest::Approx(0.25));
    CHECK(rc.balancing == doctest::Approx(0.0));
    CHECK(rc.pass);

    // a single root entry breaks the diagonal and lower conditions by 0.5
    auto single = HaarMultiplier2D::dense(4, 4);
    single.setEntry(kUnitInterval, kUnitInterval, 1.0);
    auto rs = checkConditions(single, EtaSchedule::flat(0.5), 0.2, 2);
    CHECK(rs.diagonal == doctest::Approx(-0.5));
    CHECK(rs.lower == doctest::Approx(-0.5));
    CHECK_FALSE(rs.pass);

    CHECK_THROWS_AS(checkConditions(id, flat, 0.2, 5), std::out_of_range);
}

TEST_CASE("standalone stages on the identity and capon multipliers") {
    auto flat = EtaSchedule::flat(0.25);
    for (auto stage : {StabilizeStage::Triangular, StabilizeStage::Superdiagonal,
                       StabilizeStage::Diagonal, StabilizeStage::Balancing}) {
        CAPTURE(stageName(stage));
        auto id = HaarMultiplier2D::identity(16, 16);
        auto [H, K] = stabilizeStage(id, stage, flat, baseConfig(5));
        CHECK(validate(H).empty());
        CHECK(validate(K).empty());
        auto R = restrictMultiplier(id, H, K);
        for (const auto& [k, v] : R.denseEntries()) CHECK(v == doctest::Approx(1.0));

        auto capon = HaarMultiplier2D::capon(16, 16);
        auto [Hc, Kc] = stabilizeStage(capon, stage, flat, baseConfig(5));
        auto Rc = restrictMultiplier(capon, Hc, Kc);
        // the restriction of the lower-triangular pattern stays 0/1
        for (int i = 0; i <= Rc.maxLevelFirst(); ++i)
            for (int j = 0; j <= Rc.maxLevelSecond(); ++j) {
                const double v = Rc.entry(DyadicInterval(i, 0), DyadicInterval(j, 0));
                CHECK((v == 0.0 || v == 1.0));
            }
    }
}

TEST_CASE("standalone balancing stage meets the tolerance on seeded fields") {
    auto flat = EtaSchedule::flat(0.25);
    int ok = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        auto D = HaarMultiplier2D::seededRandom(seed, 1.0, 16, 16);
        StabilizeConfig cfg = baseConfig(seed);
        try {
            auto [H, K] = stabilizeStage(D, StabilizeStage::Balancing, flat, cfg);
            auto R = restrictMultiplier(D, H, K);
            const double gap = std::fabs(R.entry(kUnitInterval, DyadicInterval(1, 0)) -
                                         R.entry(kUnitInterval, DyadicInterval(1, 1)));
            CHECK(gap < cfg.deltaBalance);
            ++ok;
        } catch (const StabilizerError&) {
        }
    }
    CHECK(ok >= 18);
}

TEST_CASE("full pipeline: kernel patterns are fixed points") {
    auto flat = EtaSchedule::flat(0.25);
    // lambda C + mu (Id - C) pattern
    auto D = HaarMultiplier2D::lambdaCaponMu(0.8, -0.3, 16, 16);
    auto res = stabilizeFull(D, flat, 0.2, baseConfig(9));
    CHECK(res.report.pass);
    CHECK(res.lambdaMuOut.lambda == doctest::Approx(0.8).epsilon(1e-10));
    CHECK(res.lambdaMuOut.mu == doctest::Approx(-0.3).epsilon(1e-10));
    CHECK(res.residualT2S == doctest::Approx(0.0));
    CHECK(res.residualT2 == doctest::Approx(0.0));
    CHECK(res.proximityPass);

    auto id = HaarMultiplier2D::identity(16, 16);
    auto ri = stabilizeFull(id, flat, 0.2, baseConfig(9));
    CHECK(ri.lambdaMuOut.lambda == doctest::Approx(1.0));
    CHECK(ri.lambdaMuOut.mu == doctest::Approx(1.0));
    for (const auto& [k, v] : ri.Dtilde.denseEntries()) CHECK(v == doctest::Approx(1.0));
}

TEST_CASE("full pipeline is deterministic in the multiplier and seed") {
    auto flat = EtaSchedule::flat(0.25);
    auto D = HaarMultiplier2D::seededRandom(21, 1.0, 16, 16);
    auto a = stabilizeFull(D, flat, 0.2, baseConfig(77));
    auto b = stabilizeFull(D, flat, 0.2, baseConfig(77));
    CHECK(a.retriesUsed == b.retriesUsed);
    CHECK(a.systemFirst.frequencies == b.systemFirst.frequencies);
    for (std::size_t io = 1; io < a.systemFirst.intervalCount() + 1; ++io) {
        CHECK(a.systemFirst.blocks[io].cells == b.systemFirst.blocks[io].cells);
        CHECK(a.systemFirst.blocks[io].signs == b.systemFirst.blocks[io].signs);
    }
    CHECK(a.report.lower == b.report.lower);
    CHECK(a.lambdaMuOut.lambda == b.lambdaMuOut.lambda);
    for (const auto& [k, v] : a.Dtilde.denseEntries())
        CHECK(v == b.Dtilde.denseEntries().at(k));
}

TEST_CASE("full pipeline output: systems validate, averages transport, root proximity") {
    auto flat = EtaSchedule::flat(0.25);
    for (std::uint64_t seed : {2ULL, 5ULL, 12ULL}) {
        auto D = HaarMultiplier2D::seededRandom(seed, 1.0, 16, 16);
        auto res = stabilizeFull(D, flat, 0.2, baseConfig(seed));
        CHECK(res.report.pass);
        CHECK(validate(res.systemFirst).empty());
        CHECK(validate(res.systemSecond).empty());
        CHECK(res.transportGap <= 1e-10);
        CHECK(res.residualT2S <= res.proximityBound);
        CHECK(rootProximityCheck(res.Dtilde, res.report.depth).pass);
    }
}

TEST_CASE("permanence of the conditions under interlaced blocking") {
    // a level-homogeneous multiplier satisfying the geometric conditions
    auto eta = EtaSchedule::geometric(0.5, 0.2);
    REQUIRE(eta.checkSummability(6));
    std::mt19937_64 gen(91);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    std::vector<std::vector<double>> phi(8, std::vector<double>(8, 0.0));
    phi[0][0] = 0.4;
    for (int i = 1; i <= 7; ++i)
        phi[i][i] = phi[i - 1][i - 1] + 0.3 * unif(gen) * eta(i - 1, i - 1);
    for (int j = 0; j <= 7; ++j)
        for (int i = j + 1; i <= 7; ++i)
            phi[i][j] = phi[i - 1][j] + 0.3 * unif(gen) * eta(i - 1, j);
    phi[0][1] = 0.1;
    for (int i = 1; i + 1 <= 7; ++i)
        phi[i][i + 1] = phi[i - 1][i] + 0.3 * unif(gen) * eta(i - 1, i);
    for (int i = 0; i <= 7; ++i)
        for (int j = i + 2; j <= 7; ++j)
            phi[i][j] = phi[i][j - 1] + 0.3 * unif(gen) * eta(i, j - 1);
    auto D = HaarMultiplier2D::levelHomogeneous(phi);
    const double delta = 0.1 + std::fabs(phi[0][1] - phi[0][2]);
    REQUIRE(checkConditions(D, eta, delta, 2).pass);

    // interlaced random systems: 1 <= n_i < m_i < n_{i+1}
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto H = FaithfulHaarSystem::random({2, 4, 6}, seed);
        auto K = FaithfulHaarSystem::random({1, 3, 5, 7}, seed + 100);
        auto R = restrictMultiplier(D, H, K);
        auto rep = checkConditions(R, eta, delta + 1e-12, 1);
        CAPTURE(seed);
        CHECK(rep.lower >= 0);
        CHECK(rep.upper >= 0);
        CHECK(rep.diagonal >= 0);
        CHECK(rep.superdiagonal >= 0);
    }
}

TEST_CASE("the pipeline rejects impossible budgets") {
    auto flat = EtaSchedule::flat(0.25);
    auto D = HaarMultiplier2D::seededRandom(1, 1.0, 16, 16);
    StabilizeConfig cfg = baseConfig(1);
    cfg.frequencyBudget = 4;
    CHECK_THROWS_AS(stabilizeFull(D, flat, 0.2, cfg), std::invalid_argument);
    cfg.frequencyBudget = 8;  // above 2K but below the schedule's needs
    CHECK_THROWS_AS(stabilizeFull(D, flat, 0.2, cfg), StabilizerError);
}
