#include "haarstab/json_io.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace haarstab {

using nlohmann::json;

namespace {

[[noreturn]] void fieldError(const std::string& context, const std::string& field,
                             const std::string& why) {
    throw JsonFormatError(context + ": field '" + field + "': " + why);
}

const json& need(const json& j, const std::string& context, const std::string& field) {
    auto it = j.find(field);
    if (it == j.end()) fieldError(context, field, "missing");
    return *it;
}

int needInt(const json& j, const std::string& context, const std::string& field) {
    const json& v = need(j, context, field);
    if (!v.is_number_integer()) fieldError(context, field, "expected an integer");
    return v.get<int>();
}

double needNumber(const json& j, const std::string& context, const std::string& field) {
    const json& v = need(j, context, field);
    if (!v.is_number()) fieldError(context, field, "expected a number");
    return v.get<double>();
}

}  // namespace

json loadJsonFile(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw JsonFormatError(path + ": cannot open file");
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        std::size_t line = 1;
        for (std::size_t b = 0; b + 1 < e.byte && b < text.size(); ++b)
            if (text[b] == '\n') ++line;
        throw JsonFormatError(path + ": line " + std::to_string(line) + ": " + e.what());
    }
}

json multiplierToJson(const HaarMultiplier2D& D) {
    json j;
    j["maxLevelFirst"] = D.maxLevelFirst();
    j["maxLevelSecond"] = D.maxLevelSecond();
    switch (D.backing()) {
        case HaarMultiplier2D::Backing::Dense: {
            j["kind"] = "dense";
            json entries = json::array();
            // sorted for a stable file layout
            std::vector<std::uint64_t> keys;
            keys.reserve(D.denseEntries().size());
            for (const auto& [k, v] : D.denseEntries()) keys.push_back(k);
            std::sort(keys.begin(), keys.end());
            for (std::uint64_t k : keys)
                entries.push_back({HaarCoefficients2D::keyI(k), HaarCoefficients2D::keyJ(k),
                                   D.denseEntries().at(k)});
            j["entries"] = std::move(entries);
            break;
        }
        case HaarMultiplier2D::Backing::LevelHomogeneous:
            j["kind"] = "level";
            j["matrix"] = D.levelMatrix();
            break;
        case HaarMultiplier2D::Backing::SeededRandom:
            j["kind"] = "seeded";
            j["seed"] = D.seed();
            j["amplitude"] = D.amplitude();
            break;
    }
    return j;
}

HaarMultiplier2D multiplierFromJson(const json& j, const std::string& context) {
    const json& kindJ = need(j, context, "kind");
    if (!kindJ.is_string()) fieldError(context, "kind", "expected a string");
    const std::string kind = kindJ.get<std::string>();
    const int lf = needInt(j, context, "maxLevelFirst");
    const int ls = needInt(j, context, "maxLevelSecond");
    if (lf < 0 || ls < 0 || lf > 26 || ls > 26)
        fieldError(context, "maxLevelFirst", "levels must be in [0, 26]");
    if (kind == "dense") {
        HaarMultiplier2D D = HaarMultiplier2D::dense(lf, ls);
        const json& entries = need(j, context, "entries");
        if (!entries.is_array()) fieldError(context, "entries", "expected an array");
        std::size_t row = 0;
        for (const auto& e : entries) {
            if (!e.is_array() || e.size() != 3)
                fieldError(context, "entries[" + std::to_string(row) + "]",
                           "expected [iotaI, iotaJ, value]");
            try {
                D.setEntry(fromIota(e[0].get<std::uint64_t>()),
                           fromIota(e[1].get<std::uint64_t>()), e[2].get<double>());
            } catch (const std::exception& ex) {
                fieldError(context, "entries[" + std::to_string(row) + "]", ex.what());
            }
            ++row;
        }
        return D;
    }
    if (kind == "level") {
        const json& mj = need(j, context, "matrix");
        if (!mj.is_array() || mj.empty()) fieldError(context, "matrix", "expected rows");
        std::vector<std::vector<double>> m;
        for (const auto& rowJ : mj) {
            if (!rowJ.is_array()) fieldError(context, "matrix", "expected rows of numbers");
            m.push_back(rowJ.get<std::vector<double>>());
        }
        try {
            return HaarMultiplier2D::levelHomogeneous(std::move(m));
        } catch (const std::exception& ex) {
            fieldError(context, "matrix", ex.what());
        }
    }
    if (kind == "seeded") {
        const json& sj = need(j, context, "seed");
        if (!sj.is_number_unsigned() && !sj.is_number_integer())
            fieldError(context, "seed", "expected an unsigned integer");
        return HaarMultiplier2D::seededRandom(sj.get<std::uint64_t>(),
                                              needNumber(j, context, "amplitude"), lf, ls);
    }
    fieldError(context, "kind", "must be 'dense', 'level' or 'seeded'");
}

json systemToJson(const FaithfulHaarSystem& S) {
    json j;
    j["depth"] = S.depth;
    j["frequencies"] = S.frequencies;
    json intervals = json::array();
    for (int i = 0; i <= S.depth; ++i)
        for (std::uint64_t c = 0; c < (std::uint64_t{1} << i); ++c) {
            DyadicInterval I(i, c);
            const auto& b = S.blocks[iota(I)];
            json item;
            item["iota"] = iota(I);
            json support = json::array();
            for (std::uint64_t cell : b.cells)
                support.push_back({S.frequencies[i], cell});
            item["support"] = std::move(support);
            json signs = json::array();
            for (std::int8_t s : b.signs) signs.push_back(static_cast<int>(s));
            item["signs"] = std::move(signs);
            intervals.push_back(std::move(item));
        }
    j["intervals"] = std::move(intervals);
    return j;
}

FaithfulHaarSystem systemFromJson(const json& j, const std::string& context) {
    FaithfulHaarSystem S;
    S.depth = needInt(j, context, "depth");
    if (S.depth < 0 || S.depth > 24) fieldError(context, "depth", "out of range");
    const json& fj = need(j, context, "frequencies");
    if (!fj.is_array()) fieldError(context, "frequencies", "expected an array");
    S.frequencies = fj.get<std::vector<int>>();
    if (S.frequencies.size() != static_cast<std::size_t>(S.depth) + 1)
        fieldError(context, "frequencies", "size must be depth + 1");
    S.blocks.resize(S.intervalCount() + 1);
    const json& intervals = need(j, context, "intervals");
    if (!intervals.is_array()) fieldError(context, "intervals", "expected an array");
    for (const auto& item : intervals) {
        const std::uint64_t io =
            need(item, context, "iota").get<std::uint64_t>();
        if (io == 0 || io > S.intervalCount()) fieldError(context, "iota", "out of range");
        auto& b = S.blocks[io];
        const json& support = need(item, context, "support");
        for (const auto& cellJ : support) {
            if (!cellJ.is_array() || cellJ.size() != 2)
                fieldError(context, "support", "expected [level, index] pairs");
            b.cells.push_back(cellJ[1].get<std::uint64_t>());
        }
        const json& signs = need(item, context, "signs");
        for (const auto& sJ : signs) {
            const int s = sJ.get<int>();
            if (s != 1 && s != -1) fieldError(context, "signs", "must be +-1");
            b.signs.push_back(static_cast<std::int8_t>(s));
        }
        if (b.signs.size() != b.cells.size())
            fieldError(context, "signs", "size mismatch with support");
    }
    return S;
}

json coefficientsToJson(const HaarCoefficients2D& z) {
    json j;
    j["maxLevelFirst"] = z.maxLevelFirst;
    j["maxLevelSecond"] = z.maxLevelSecond;
    json entries = json::array();
    for (const auto& [k, v] : z.entries)
        entries.push_back(
            {HaarCoefficients2D::keyI(k), HaarCoefficients2D::keyJ(k), v});
    j["entries"] = std::move(entries);
    return j;
}

HaarCoefficients2D coefficientsFromJson(const json& j, const std::string& context) {
    HaarCoefficients2D z;
    z.maxLevelFirst = needInt(j, context, "maxLevelFirst");
    z.maxLevelSecond = needInt(j, context, "maxLevelSecond");
    const json& entries = need(j, context, "entries");
    if (!entries.is_array()) fieldError(context, "entries", "expected an array");
    std::size_t row = 0;
    for (const auto& e : entries) {
        if (!e.is_array() || e.size() != 3)
            fieldError(context, "entries[" + std::to_string(row) + "]",
                       "expected [iotaI, iotaJ, value]");
        try {
            z.set(fromIota(e[0].get<std::uint64_t>()), fromIota(e[1].get<std::uint64_t>()),
                  e[2].get<double>());
        } catch (const std::exception& ex) {
            fieldError(context, "entries[" + std::to_string(row) + "]", ex.what());
        }
        ++row;
    }
    return z;
}

json normEstimateToJson(const NormEstimate& e) {
    return json{{"value", e.value},
                {"stdError", e.stdError},
                {"method", e.methodName()},
                {"samples", e.samples}};
}

json lambdaMuToJson(const LambdaMu& lm) {
    return json{{"lambda", lm.lambda},       {"mu", lm.mu},
                {"loLevel", lm.loLevel},     {"hiLevel", lm.hiLevel},
                {"converged", lm.converged}, {"convergenceTable", lm.convergenceTable}};
}

json variationToJson(const VariationReport& v) {
    return json{{"t2sSemiNorm", v.t2sSemiNorm},
                {"roots", {v.rootLower, v.rootUpperLeft, v.rootUpperRight}},
                {"t2Norm", v.t2Norm},
                {"truncationLevel", v.truncationLevel},
                {"perTermBreakdown",
                 {{"diagonal", v.diagonalSum},
                  {"superdiagonal", v.superdiagonalSum},
                  {"lower", v.lowerSum},
                  {"upper", v.upperSum}}}};
}

json conditionReportToJson(const ConditionReport& r) {
    return json{{"lower", r.lower},
                {"upper", r.upper},
                {"diagonal", r.diagonal},
                {"superdiagonal", r.superdiagonal},
                {"balancing", r.balancing},
                {"pass", r.pass},
                {"depth", r.depth}};
}

json stabilizeResultToJson(const StabilizeResult& r) {
    json j;
    j["systemFirst"] = systemToJson(r.systemFirst);
    j["systemSecond"] = systemToJson(r.systemSecond);
    j["Dtilde"] = multiplierToJson(r.Dtilde);
    j["report"] = conditionReportToJson(r.report);
    j["lambdaMuIn"] = lambdaMuToJson(r.lambdaMuIn);
    j["lambdaMuOut"] = lambdaMuToJson(r.lambdaMuOut);
    j["retriesUsed"] = r.retriesUsed;
    j["transportGap"] = r.transportGap;
    j["residualT2S"] = r.residualT2S;
    j["residualT2"] = r.residualT2;
    j["proximityBound"] = r.proximityBound;
    j["proximityPass"] = r.proximityPass;
    return j;
}

json probeReportToJson(const ProbeReport& r) {
    json rows = json::array();
    for (const auto& row : r.rows)
        rows.push_back(json{{"n", row.n},
                            {"caponNorm", normEstimateToJson(row.caponNorm)},
                            {"baseNorm", normEstimateToJson(row.baseNorm)},
                            {"ratio", row.ratio},
                            {"ratioStdError", row.ratioStdError}});
    return json{{"ratios", std::move(rows)}, {"growthFit", r.growthFit}};
}

json factorizationReportToJson(const FactorizationReport& r) {
    return json{{"lambda", r.lambda},
                {"mu", r.mu},
                {"residualT2S", r.residualT2S},
                {"residualT2", r.residualT2},
                {"proximityBound", r.proximityBound},
                {"balancingResidue", r.balancingResidue},
                {"proximityPass", r.proximityPass},
                {"maxOperatorRatio", r.maxOperatorRatio},
                {"operatorRatios", r.operatorRatios},
                {"report", conditionReportToJson(r.stabilize.report)},
                {"retriesUsed", r.stabilize.retriesUsed},
                {"transportGap", r.stabilize.transportGap}};
}

}  // namespace haarstab
