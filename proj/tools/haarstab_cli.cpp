// Command-line probe and verification surface: subcommands emit JSON to
// stdout (optional CSV via --csv) and exit 0 on pass, 1 on a failed check,
// 2 on usage or file errors.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "haarstab/dyadic.hpp"
#include "haarstab/faithful.hpp"
#include "haarstab/json_io.hpp"
#include "haarstab/multiplier.hpp"
#include "haarstab/probes.hpp"
#include "haarstab/spaces.hpp"
#include "haarstab/stabilizer.hpp"

using namespace haarstab;
using nlohmann::json;

namespace {

std::uint64_t effectiveSeed(std::uint64_t fromFlag) {
    if (const char* env = std::getenv("HAARSTAB_SEED")) {
        try {
            return std::stoull(env);
        } catch (...) {
            throw std::invalid_argument("HAARSTAB_SEED is not an unsigned integer");
        }
    }
    return fromFlag;
}

void writeCsv(const std::string& path, const std::string& header,
              const std::vector<std::string>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open CSV output file " + path);
    out << header << "\n";
    for (const auto& r : rows) out << r << "\n";
}

void parseRange(const std::string& text, int& lo, int& hi) {
    const auto dots = text.find("..");
    if (dots == std::string::npos) {
        lo = hi = std::stoi(text);
        return;
    }
    lo = std::stoi(text.substr(0, dots));
    hi = std::stoi(text.substr(dots + 2));
}

int selftest() {
    int failures = 0;
    auto check = [&](bool ok, const std::string& name) {
        std::cout << (ok ? "PASS " : "FAIL ") << name << "\n";
        if (!ok) ++failures;
    };

    check(iota(kUnitInterval) == 1 && iota(DyadicInterval(1, 1)) == 3 &&
              iota(DyadicInterval(2, 3)) == 7,
          "iota order");

    StepFunction1D h = haarStep(kUnitInterval, 2);
    check(h.values == std::vector<double>{1, 1, -1, -1}, "haar step sampling");

    HaarCoefficients2D unit;
    unit.set(kUnitInterval, kUnitInterval, 1.0);
    auto est = zNorm(unit, parseZSpaceSpec("s11:L1:L1"), 2);
    check(std::fabs(est.value - 1.0) < 1e-12, "single tensor norm");

    auto capon = HaarMultiplier2D::capon(9, 9);
    auto lm = lambdaMu(capon, 2, 9);
    check(std::fabs(lm.lambda - 1.0) < 1e-12 && std::fabs(lm.mu) < 1e-12 && lm.converged,
          "capon lambda/mu");
    check(std::fabs(t2Variation(capon, 6).t2Norm - 1.0) < 1e-12, "capon variation");

    auto sys = FaithfulHaarSystem::random({1, 3, 5}, 7);
    check(validate(sys).empty(), "random system validity");
    HaarCoefficients2D z = randomCoefficients(2, 2, 6, 11);
    auto back = operatorA(sys, sys, operatorB(sys, sys, z));
    double dev = 0.0;
    for (const auto& [k, v] : z.entries) dev = std::max(dev, std::fabs(v - back.entries[k]));
    check(dev < 1e-12, "A after B identity");
    std::vector<std::pair<std::uint64_t, double>> coeffs{{1, 0.7}, {2, -0.4}, {5, 1.3}};
    check(distributionPreserved(sys, coeffs), "distribution preservation");

    return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Haar multiplier stabilization and Capon projection probes"};
    app.require_subcommand(1);

    // --- norm ---
    auto* normCmd = app.add_subcommand("norm", "norm of a coefficient vector in Z");
    std::string normVector, normSpace = "s00:L2:L2", normCsv;
    int normGrid = 0;
    std::int64_t normSamples = 2000;
    std::uint64_t normSeed = 1;
    normCmd->add_option("--vector", normVector, "vector JSON file")->required();
    normCmd->add_option("--space", normSpace, "space spec s<ab>:<X>:<Y>");
    normCmd->add_option("--grid", normGrid, "grid depth (default: max level + 1)");
    normCmd->add_option("--samples", normSamples, "Monte Carlo sample count");
    normCmd->add_option("--seed", normSeed, "sampling seed");
    normCmd->add_option("--csv", normCsv, "also write a CSV row");

    // --- lambda-mu ---
    auto* lmCmd = app.add_subcommand("lambda-mu", "pavement-average functionals");
    std::string lmMult;
    int lmLo = 2, lmHi = 9, lmWindow = 2;
    double lmTol = 1e-9;
    lmCmd->add_option("--multiplier", lmMult, "multiplier JSON file")->required();
    lmCmd->add_option("--lo", lmLo, "outer (shallow) level");
    lmCmd->add_option("--hi", lmHi, "inner (deep) level");
    lmCmd->add_option("--window", lmWindow, "convergence window");
    lmCmd->add_option("--tol", lmTol, "convergence tolerance");

    // --- variation ---
    auto* varCmd = app.add_subcommand("variation", "bi-tree variation norm");
    std::string varMult;
    int varTrunc = -1;
    varCmd->add_option("--multiplier", varMult, "multiplier JSON file")->required();
    varCmd->add_option("--truncation", varTrunc, "truncation level (default: max - 2)");

    // --- stabilize ---
    auto* stabCmd = app.add_subcommand("stabilize", "four-stage stabilization pipeline");
    std::string stabMult, stabCsv;
    int stabDepth = 2, stabBudget = 16, stabRetry = 200;
    double stabEta = 0.25, stabDelta = 0.2;
    std::uint64_t stabSeed = 1;
    stabCmd->add_option("--multiplier", stabMult, "multiplier JSON file")->required();
    stabCmd->add_option("--depth", stabDepth, "output depth K");
    stabCmd->add_option("--eta", stabEta, "flat eta threshold");
    stabCmd->add_option("--delta", stabDelta, "balancing tolerance");
    stabCmd->add_option("--budget", stabBudget, "frequency budget");
    stabCmd->add_option("--seed", stabSeed, "stabilization seed");
    stabCmd->add_option("--retry", stabRetry, "per-step retry limit");
    stabCmd->add_option("--csv", stabCsv, "write condition slacks as CSV");

    // --- probe-capon ---
    auto* probeCmd = app.add_subcommand("probe-capon", "Capon projection growth probe");
    std::string probeFamily = "l1-row", probeSpace = "s00:L1:L2", probeRange = "1..6";
    std::string probeCsv, probeCoeffs;
    int probeGrid = 0;
    std::int64_t probeSamples = 2000;
    std::uint64_t probeSeed = 1;
    probeCmd->add_option("--family", probeFamily, "l1-row or linf-row");
    probeCmd->add_option("--space", probeSpace, "space spec");
    probeCmd->add_option("--n", probeRange, "size or range lo..hi");
    probeCmd->add_option("--grid", probeGrid, "grid depth override");
    probeCmd->add_option("--samples", probeSamples, "Monte Carlo sample count");
    probeCmd->add_option("--seed", probeSeed, "sampling seed");
    probeCmd->add_option("--coefficients", probeCoeffs, "comma-separated a_l list");
    probeCmd->add_option("--csv", probeCsv, "CSV report path");

    // --- check-factor ---
    auto* factCmd = app.add_subcommand("check-factor", "factorization residual check");
    std::string factMult, factSpace = "s00:L1:L1", factCsv;
    int factDepth = 2, factBudget = 16, factTrials = 20;
    double factEta = 0.25, factDelta = 0.2;
    std::uint64_t factSeed = 1;
    factCmd->add_option("--multiplier", factMult, "multiplier JSON file")->required();
    factCmd->add_option("--space", factSpace, "space spec");
    factCmd->add_option("--depth", factDepth, "output depth K");
    factCmd->add_option("--eta", factEta, "flat eta threshold");
    factCmd->add_option("--delta", factDelta, "balancing tolerance");
    factCmd->add_option("--budget", factBudget, "frequency budget");
    factCmd->add_option("--seed", factSeed, "stabilization seed");
    factCmd->add_option("--trials", factTrials, "random vectors for the operator ratio");
    factCmd->add_option("--csv", factCsv, "CSV report path");

    // --- selftest ---
    app.add_subcommand("selftest", "run the built-in oracle checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    }

    try {
        if (app.got_subcommand("selftest")) return selftest();

        if (app.got_subcommand("norm")) {
            HaarCoefficients2D z =
                coefficientsFromJson(loadJsonFile(normVector), normVector);
            ZSpaceSpec spec = parseZSpaceSpec(normSpace);
            const int grid = normGrid > 0
                                 ? normGrid
                                 : std::max(z.maxLevelFirst, z.maxLevelSecond) + 1;
            NormEstimate est = zNorm(z, spec, grid, NormMethod::Auto, normSamples,
                                     effectiveSeed(normSeed));
            std::cout << normEstimateToJson(est).dump(2) << "\n";
            if (!normCsv.empty())
                writeCsv(normCsv, "value,stdError,method,samples",
                         {std::to_string(est.value) + "," + std::to_string(est.stdError) +
                          "," + est.methodName() + "," + std::to_string(est.samples)});
            return 0;
        }

        if (app.got_subcommand("lambda-mu")) {
            HaarMultiplier2D D = multiplierFromJson(loadJsonFile(lmMult), lmMult);
            LambdaMu lm = lambdaMu(D, lmLo, lmHi, lmWindow, lmTol);
            std::cout << lambdaMuToJson(lm).dump(2) << "\n";
            return 0;
        }

        if (app.got_subcommand("variation")) {
            HaarMultiplier2D D = multiplierFromJson(loadJsonFile(varMult), varMult);
            const int trunc = varTrunc >= 0
                                  ? varTrunc
                                  : std::min(D.maxLevelFirst(), D.maxLevelSecond()) - 2;
            VariationReport v = t2Variation(D, trunc);
            std::cout << variationToJson(v).dump(2) << "\n";
            return 0;
        }

        if (app.got_subcommand("stabilize")) {
            HaarMultiplier2D D = multiplierFromJson(loadJsonFile(stabMult), stabMult);
            StabilizeConfig cfg;
            cfg.outputDepth = stabDepth;
            cfg.deltaBalance = stabDelta;
            cfg.frequencyBudget = stabBudget;
            cfg.seed = effectiveSeed(stabSeed);
            cfg.retryLimit = stabRetry;
            StabilizeResult res =
                stabilizeFull(D, EtaSchedule::flat(stabEta), stabDelta, cfg);
            std::cout << stabilizeResultToJson(res).dump(2) << "\n";
            if (!stabCsv.empty())
                writeCsv(stabCsv, "lower,upper,diagonal,superdiagonal,balancing,pass",
                         {std::to_string(res.report.lower) + "," +
                          std::to_string(res.report.upper) + "," +
                          std::to_string(res.report.diagonal) + "," +
                          std::to_string(res.report.superdiagonal) + "," +
                          std::to_string(res.report.balancing) + "," +
                          (res.report.pass ? "1" : "0")});
            return res.report.pass && res.proximityPass ? 0 : 1;
        }

        if (app.got_subcommand("probe-capon")) {
            ProbeFamilySpec spec;
            if (probeFamily == "l1-row")
                spec.family = ProbeFamily::L1Row;
            else if (probeFamily == "linf-row")
                spec.family = ProbeFamily::LinfRow;
            else
                throw std::invalid_argument("unknown probe family '" + probeFamily + "'");
            spec.zSpec = parseZSpaceSpec(probeSpace);
            spec.gridDepth = probeGrid;
            spec.samples = probeSamples;
            spec.seed = effectiveSeed(probeSeed);
            if (!probeCoeffs.empty()) {
                std::stringstream ss(probeCoeffs);
                std::string item;
                while (std::getline(ss, item, ',')) spec.coefficients.push_back(std::stod(item));
            }
            int lo = 1, hi = 1;
            parseRange(probeRange, lo, hi);
            ProbeReport rep = probeCapon(spec, lo, hi);
            std::cout << probeReportToJson(rep).dump(2) << "\n";
            if (!probeCsv.empty()) {
                std::vector<std::string> rows;
                for (const auto& r : rep.rows)
                    rows.push_back(std::to_string(r.n) + "," +
                                   std::to_string(r.caponNorm.value) + "," +
                                   std::to_string(r.baseNorm.value) + "," +
                                   std::to_string(r.ratio) + "," +
                                   std::to_string(r.ratioStdError));
                writeCsv(probeCsv, "n,capon_norm,base_norm,ratio,ratio_stderr", rows);
            }
            return 0;
        }

        if (app.got_subcommand("check-factor")) {
            HaarMultiplier2D D = multiplierFromJson(loadJsonFile(factMult), factMult);
            StabilizeConfig cfg;
            cfg.outputDepth = factDepth;
            cfg.deltaBalance = factDelta;
            cfg.frequencyBudget = factBudget;
            cfg.seed = effectiveSeed(factSeed);
            FactorizationReport rep =
                checkFactorization(D, parseZSpaceSpec(factSpace),
                                   EtaSchedule::flat(factEta), factDelta, cfg, 0, factTrials);
            std::cout << factorizationReportToJson(rep).dump(2) << "\n";
            if (!factCsv.empty()) {
                std::vector<std::string> rows;
                for (std::size_t i = 0; i < rep.operatorRatios.size(); ++i)
                    rows.push_back(std::to_string(i) + "," +
                                   std::to_string(rep.operatorRatios[i]));
                writeCsv(factCsv, "trial,operator_ratio", rows);
            }
            return rep.proximityPass && rep.stabilize.report.pass ? 0 : 1;
        }
    } catch (const JsonFormatError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const CLI::Error& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
