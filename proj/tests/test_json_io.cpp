#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "haarstab/json_io.hpp"
#include "haarstab/probes.hpp"

using namespace haarstab;
using nlohmann::json;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& contents) {
        path = std::string("/tmp/haarstab_test_") + std::to_string(::rand()) + ".json";
        std::ofstream out(path);
        out << contents;
    }
    ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("multiplier schemas round-trip bit for bit") {
    auto dense = HaarMultiplier2D::dense(3, 3);
    dense.setEntry(kUnitInterval, kUnitInterval, 0.1234567890123456789);
    dense.setEntry(DyadicInterval(2, 1), DyadicInterval(3, 5), -1.0 / 3.0);
    auto back = multiplierFromJson(json::parse(multiplierToJson(dense).dump()), "test");
    CHECK(back.backing() == HaarMultiplier2D::Backing::Dense);
    CHECK(back.denseEntries().size() == 2);
    for (const auto& [k, v] : dense.denseEntries()) CHECK(back.denseEntries().at(k) == v);

    auto level = HaarMultiplier2D::capon(4, 4);
    auto backL = multiplierFromJson(json::parse(multiplierToJson(level).dump()), "test");
    CHECK(backL.levelMatrix() == level.levelMatrix());

    auto seeded = HaarMultiplier2D::seededRandom(0xdeadbeefULL, 0.75, 10, 12);
    auto backS = multiplierFromJson(json::parse(multiplierToJson(seeded).dump()), "test");
    CHECK(backS.seed() == seeded.seed());
    CHECK(backS.amplitude() == seeded.amplitude());
    CHECK(backS.maxLevelFirst() == 10);
    CHECK(backS.maxLevelSecond() == 12);
    CHECK(backS.entryByIota(37, 911) == seeded.entryByIota(37, 911));
}

TEST_CASE("faithful system schema round-trips and re-validates") {
    auto sys = FaithfulHaarSystem::random({2, 4, 7}, 33);
    REQUIRE(validate(sys).empty());
    auto j = systemToJson(sys);
    auto back = systemFromJson(json::parse(j.dump()), "test");
    CHECK(validate(back).empty());
    CHECK(back.depth == sys.depth);
    CHECK(back.frequencies == sys.frequencies);
    for (std::size_t io = 1; io < sys.intervalCount() + 1; ++io) {
        CHECK(back.blocks[io].cells == sys.blocks[io].cells);
        CHECK(back.blocks[io].signs == sys.blocks[io].signs);
    }
}

TEST_CASE("coefficient vectors round-trip and reproduce their norms") {
    auto z = randomCoefficients(3, 3, 12, 99);
    auto back = coefficientsFromJson(json::parse(coefficientsToJson(z).dump()), "test");
    CHECK(back.entries == z.entries);
    auto spec = parseZSpaceSpec("s11:L1:L2");
    auto a = zNorm(z, spec, 4, NormMethod::MonteCarlo, 300, 5);
    auto b = zNorm(back, spec, 4, NormMethod::MonteCarlo, 300, 5);
    CHECK(a.value == b.value);
    CHECK(a.stdError == b.stdError);
}

TEST_CASE("parse errors carry the file and line") {
    TempFile bad("{\n  \"kind\": \"dense\",\n  oops\n}\n");
    try {
        loadJsonFile(bad.path);
        FAIL("expected a format error");
    } catch (const JsonFormatError& e) {
        const std::string what = e.what();
        CHECK(what.find(bad.path) != std::string::npos);
        CHECK(what.find("line 3") != std::string::npos);
    }
    CHECK_THROWS_AS(loadJsonFile("/tmp/does_not_exist_haarstab.json"), JsonFormatError);
}

TEST_CASE("field errors name the offending field") {
    TempFile noKind("{\"maxLevelFirst\": 2, \"maxLevelSecond\": 2}");
    try {
        multiplierFromJson(loadJsonFile(noKind.path), noKind.path);
        FAIL("expected a format error");
    } catch (const JsonFormatError& e) {
        CHECK(std::string(e.what()).find("'kind'") != std::string::npos);
    }

    TempFile badEntry(
        "{\"kind\": \"dense\", \"maxLevelFirst\": 1, \"maxLevelSecond\": 1,"
        " \"entries\": [[1, 1, 0.5], [0, 1, 0.5]]}");
    try {
        multiplierFromJson(loadJsonFile(badEntry.path), badEntry.path);
        FAIL("expected a format error");
    } catch (const JsonFormatError& e) {
        CHECK(std::string(e.what()).find("entries[1]") != std::string::npos);
    }

    TempFile badSigns(
        "{\"depth\": 0, \"frequencies\": [0],"
        " \"intervals\": [{\"iota\": 1, \"support\": [[0, 0]], \"signs\": [2]}]}");
    CHECK_THROWS_AS(systemFromJson(loadJsonFile(badSigns.path), badSigns.path),
                    JsonFormatError);
}

TEST_CASE("report serialization carries the fields verbatim") {
    NormEstimate est;
    est.value = 1.25;
    est.stdError = 0.003;
    est.exact = false;
    est.samples = 400;
    auto j = normEstimateToJson(est);
    CHECK(j["value"] == 1.25);
    CHECK(j["method"] == "monte-carlo");
    CHECK(j["samples"] == 400);

    auto capon = HaarMultiplier2D::capon(8, 8);
    auto v = t2Variation(capon, 5);
    auto jv = variationToJson(v);
    CHECK(jv["t2Norm"] == 1.0);
    CHECK(jv["roots"][0] == 1.0);
    CHECK(jv["roots"][1] == 0.0);

    auto lm = lambdaMu(capon, 2, 8);
    auto jl = lambdaMuToJson(lm);
    CHECK(jl["lambda"] == 1.0);
    CHECK(jl["mu"] == 0.0);
    CHECK(jl["converged"] == true);
}
