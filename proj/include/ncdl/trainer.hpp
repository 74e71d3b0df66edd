#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ncdl/metrics.hpp"
#include "ncdl/model.hpp"
#include "ncdl/theory.hpp"

namespace ncdl {

struct LrDecay {
    double factor = 1.0;
    std::size_t every_n = 0;  // 0 disables
};

struct TrainConfig {
    double lr = 0.1;
    std::size_t iterations = 30000;
    std::optional<LrDecay> lr_decay;
    std::size_t record_stride = 100;
    std::optional<double> grad_tol = 1e-10;  // early stop on gradient norm
    std::uint64_t seed = 0;

    void validate() const;
};

struct TrajectorySample {
    std::size_t iteration = 0;
    double loss = 0.0;
    double grad_norm = 0.0;
    std::optional<MetricReport> report;
};

struct Trajectory {
    std::vector<TrajectorySample> samples;  // strictly increasing iterations
    NetworkState final_state;
    std::size_t final_iteration = 0;
    bool early_stopped = false;
    bool monotone = true;  // non-increasing recorded loss (slack 1e-12)

    /// Sample recorded at the given iteration, if any.
    const TrajectorySample* sample_at(std::size_t iteration) const;
};

using RecordCallback = std::function<void(const TrajectorySample&)>;

/// Full-batch gradient descent from the scaled-normal init. Records loss
/// (and a MetricReport when a prediction is supplied) at iteration 0, every
/// record_stride iterations, and at the final iteration. Deterministic in
/// (spec, config). Throws DivergenceError when the loss exceeds 1e12 or
/// stops being finite; the callback has already seen every earlier sample.
Trajectory train(const ProblemSpec& spec, const TrainConfig& config,
                 const TheoryPrediction* prediction = nullptr,
                 const RecordCallback& on_record = nullptr);

struct SweepResult {
    std::optional<Trajectory> trajectory;
    std::string error;  // empty on success
};

/// Independent trainings of several specs under one config; failures are
/// collected per run instead of aborting the others.
std::vector<SweepResult> sweep(const std::vector<ProblemSpec>& specs,
                               const TrainConfig& config,
                               bool with_predictions = false);

}  // namespace ncdl
