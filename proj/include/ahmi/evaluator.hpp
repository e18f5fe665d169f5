#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ahmi/markov_recommender.hpp"
#include "ahmi/sequence_extractor.hpp"

namespace ahmi {

struct TrainTestSplit {
    std::vector<InteractionSequence> train;
    std::vector<InteractionSequence> test;
    /// Users whose only sequence went to test.
    std::size_t single_sequence_users = 0;
};

/// Holds out each user's chronologically last sequence (ties: last in input
/// order). Train keeps input order; test is ordered by user id.
TrainTestSplit split_train_test(std::span<const InteractionSequence> corpus);

/// Anything that ranks next elements for a context and history.
class NextStepPredictor {
public:
    virtual ~NextStepPredictor() = default;
    virtual RankedRecommendation predict(const ContextAttributes& context, std::span<const ElementId> history,
                                         std::size_t k) const = 0;
};

/// Serves predictions from a context store through `select_model`.
class StorePredictor final : public NextStepPredictor {
public:
    StorePredictor(const ContextModelStore& store, bool backoff) : store_(&store), backoff_(backoff) {}

    RankedRecommendation predict(const ContextAttributes& context, std::span<const ElementId> history,
                                 std::size_t k) const override;

private:
    const ContextModelStore* store_;
    bool backoff_;
};

struct StepResult {
    std::size_t position = 0;  // history is seq[0:position], truth is seq[position]
    std::size_t returned_count = 0;
    std::optional<std::size_t> rank_of_truth;

    friend bool operator==(const StepResult&, const StepResult&) = default;
};

struct SequenceSteps {
    std::string user_id;
    std::vector<StepResult> steps;
};

/// Incremental sequential evaluation: a sequence of length L yields L-1 steps;
/// step i predicts seq[i] from seq[0:i].
std::vector<SequenceSteps> incremental_eval(const NextStepPredictor& predictor,
                                            std::span<const InteractionSequence> test, std::size_t k);

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

/// Mean and population standard deviation. Zeros for an empty input.
MeanStd mean_std(std::span<const double> values);

struct MetricSummary {
    MeanStd precision;
    MeanStd recall;
    MeanStd mrr;
    double f1 = 0.0;
    std::size_t sequence_count = 0;
    std::size_t step_count = 0;
};

/// Per step: recall is the hit indicator, precision is 1/returned_count on a
/// hit, reciprocal rank is 1/rank on a hit; all 0 on a miss. Steps are averaged
/// within a sequence, then mean and population std are taken across sequences.
/// Sequences with no steps are ignored; throws std::invalid_argument when no
/// step exists at all.
MetricSummary compute_metrics(std::span<const SequenceSteps> steps, std::size_t k);

/// Harmonic mean of precision and recall; 0 when both are 0.
double f1_from_means(double precision_mean, double recall_mean);

struct OrderReport {
    std::size_t order = 0;
    MetricSummary metrics;
};

struct EvaluationReport {
    std::size_t k = 3;
    bool context_mode = true;
    bool backoff = true;
    std::size_t min_support = kDefaultMinSupport;
    std::size_t train_sequences = 0;
    std::size_t test_sequences = 0;
    std::vector<OrderReport> rows;
};

struct CompareOptions {
    std::vector<std::size_t> orders{1, 2, 3};
    std::size_t k = 3;
    bool context_mode = true;
    bool backoff = true;
    std::size_t min_support = kDefaultMinSupport;
};

/// One split, one store per order on the identical train set, one evaluation
/// per order on the identical test set.
EvaluationReport compare_orders(std::span<const InteractionSequence> corpus, const ElementVocabulary& vocabulary,
                                const CompareOptions& options);

/// Evaluates an already trained store on the test split of `corpus`.
OrderReport evaluate_store(const ContextModelStore& store, std::span<const InteractionSequence> test,
                           std::size_t k, bool backoff);

nlohmann::json to_json(const EvaluationReport& report);

/// Aligned table: metric rows by order columns, std in brackets.
std::string format_report_table(const EvaluationReport& report);

}  // namespace ahmi
