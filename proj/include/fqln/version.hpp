#pragma once

namespace fqln {

inline constexpr const char* kToolName = "fqln";
inline constexpr const char* kToolVersion = "0.1.0";

// Identifier of the deterministic generator behind every random draw.
// Recorded in manifests and reports so runs can state their provenance.
inline constexpr const char* kRngAlgorithm = "splitmix64/v1";

// Checkpoint container magic and current format version.
inline constexpr const char kCheckpointMagic[4] = {'F', 'Q', 'L', 'N'};
inline constexpr unsigned kCheckpointVersion = 1;

// Report schema identifier emitted in every JSON report.
inline constexpr const char* kReportSchema = "report_v1";

}  // namespace fqln
