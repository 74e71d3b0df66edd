#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ncdl/metrics.hpp"
#include "ncdl/model.hpp"
#include "ncdl/theory.hpp"
#include "ncdl/trainer.hpp"

namespace ncdl {

using NamedMatrices = std::vector<std::pair<std::string, Matrix>>;

/// Binary checkpoint: magic "NCDL", u32 LE version (= 1), u32 LE matrix
/// count, then per matrix a u16 LE name length, the UTF-8 name, u64 LE rows,
/// u64 LE cols and rows*cols f64 LE values in row-major order.
void write_checkpoint(const std::filesystem::path& path, const NamedMatrices& matrices);
NamedMatrices read_checkpoint(const std::filesystem::path& path);

/// Checkpoint naming for a state: W1..WM, H1 and, when present, b (K x 1).
NamedMatrices state_to_named(const NetworkState& state);
NetworkState state_from_named(const NamedMatrices& matrices, const ProblemSpec& spec);

struct RunConfig {
    ProblemSpec problem;
    TrainConfig train;
    std::string output_dir;
};

/// Parse and schema-check a run configuration; unknown keys are rejected
/// with their JSON path in the message.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);

std::string prediction_to_json(const TheoryPrediction& prediction);
std::string report_to_json(const MetricReport& report);

/// Lossless decimal for doubles (17 significant digits).
std::string format_double(double v);

const char* geometry_name(Geometry g);
const char* regime_name(RegimeKind r);

}  // namespace ncdl
