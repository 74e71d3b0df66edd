#include "ncdl/trainer.hpp"

#include <cmath>

namespace ncdl {

namespace {
constexpr double kDivergenceCap = 1e12;
constexpr double kMonotoneSlack = 1e-12;
}  // namespace

void TrainConfig::validate() const {
    if (!(lr >= 0.0)) throw ArgumentError("train: lr must be nonnegative");
    if (iterations < 1) throw ArgumentError("train: need at least one iteration");
    if (record_stride < 1) throw ArgumentError("train: record_stride must be >= 1");
    if (lr_decay && (!(lr_decay->factor > 0.0) || lr_decay->every_n == 0))
        throw ArgumentError("train: malformed lr decay");
}

const TrajectorySample* Trajectory::sample_at(std::size_t iteration) const {
    for (const TrajectorySample& s : samples)
        if (s.iteration == iteration) return &s;
    return nullptr;
}

Trajectory train(const ProblemSpec& spec, const TrainConfig& config,
                 const TheoryPrediction* prediction, const RecordCallback& on_record) {
    spec.validate();
    config.validate();

    NetworkState state = init_state(spec, config.seed);

    Trajectory out;
    double previous_loss = std::numeric_limits<double>::infinity();

    auto record = [&](std::size_t iteration, double loss, double grad_norm_value) {
        TrajectorySample s;
        s.iteration = iteration;
        s.loss = loss;
        s.grad_norm = grad_norm_value;
        if (prediction) s.report = compare_to_theory(state, spec, *prediction);
        if (loss > previous_loss + kMonotoneSlack) out.monotone = false;
        previous_loss = loss;
        if (on_record) on_record(s);
        out.samples.push_back(std::move(s));
    };

    double lr = config.lr;
    std::size_t iteration = 0;
    bool pending_record = true;  // iteration 0 is always recorded

    while (true) {
        const NetworkState grad = gradient(state, spec);
        const double gnorm = gradient_norm(grad);

        double loss = 0.0;
        try {
            loss = loss_value(state, spec);
        } catch (const NumericOverflowError&) {
            throw DivergenceError(iteration);
        }
        if (!std::isfinite(loss) || loss > kDivergenceCap) throw DivergenceError(iteration);

        const bool converged = config.grad_tol && gnorm < *config.grad_tol;
        const bool last = iteration == config.iterations || converged;
        if (pending_record || last) record(iteration, loss, gnorm);
        if (last) {
            out.early_stopped = converged && iteration < config.iterations;
            break;
        }

        for (std::size_t m = 0; m < state.weights.size(); ++m)
            state.weights[m] -= lr * grad.weights[m];
        state.features -= lr * grad.features;
        if (state.bias)
            for (std::size_t k = 0; k < state.bias->size(); ++k)
                (*state.bias)[k] -= lr * (*grad.bias)[k];

        ++iteration;
        if (config.lr_decay && iteration % config.lr_decay->every_n == 0)
            lr *= config.lr_decay->factor;
        pending_record = iteration % config.record_stride == 0;
    }

    out.final_state = std::move(state);
    out.final_iteration = iteration;
    return out;
}

std::vector<SweepResult> sweep(const std::vector<ProblemSpec>& specs,
                               const TrainConfig& config, bool with_predictions) {
    if (specs.empty()) throw ArgumentError("sweep: no specs given");
    std::vector<SweepResult> results(specs.size());
    for (std::size_t i = 0; i < specs.size(); ++i) {
        try {
            if (with_predictions) {
                const TheoryPrediction prediction = predict(specs[i]);
                results[i].trajectory = train(specs[i], config, &prediction);
            } else {
                results[i].trajectory = train(specs[i], config);
            }
        } catch (const std::exception& e) {
            results[i].error = e.what();
        }
    }
    return results;
}

}  // namespace ncdl
