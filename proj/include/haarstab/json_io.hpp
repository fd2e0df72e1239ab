#pragma once

#include <string>

#include <json.hpp>

#include "haarstab/faithful.hpp"
#include "haarstab/multiplier.hpp"
#include "haarstab/probes.hpp"
#include "haarstab/spaces.hpp"
#include "haarstab/stabilizer.hpp"

namespace haarstab {

/// Thrown on malformed input files; the message carries the file, line and
/// field that failed.
struct JsonFormatError : std::runtime_error {
    explicit JsonFormatError(const std::string& what) : std::runtime_error(what) {}
};

/// Parse a file, reporting the line of the first offending byte on failure.
nlohmann::json loadJsonFile(const std::string& path);

nlohmann::json multiplierToJson(const HaarMultiplier2D& D);
HaarMultiplier2D multiplierFromJson(const nlohmann::json& j, const std::string& context);

nlohmann::json systemToJson(const FaithfulHaarSystem& S);
FaithfulHaarSystem systemFromJson(const nlohmann::json& j, const std::string& context);

nlohmann::json coefficientsToJson(const HaarCoefficients2D& z);
HaarCoefficients2D coefficientsFromJson(const nlohmann::json& j, const std::string& context);

nlohmann::json normEstimateToJson(const NormEstimate& e);
nlohmann::json lambdaMuToJson(const LambdaMu& lm);
nlohmann::json variationToJson(const VariationReport& v);
nlohmann::json conditionReportToJson(const ConditionReport& r);
nlohmann::json stabilizeResultToJson(const StabilizeResult& r);
nlohmann::json probeReportToJson(const ProbeReport& r);
nlohmann::json factorizationReportToJson(const FactorizationReport& r);

}  // namespace haarstab
