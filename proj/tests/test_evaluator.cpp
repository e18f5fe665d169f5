#include <doctest.h>

#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "ahmi/evaluator.hpp"
#include "support/test_support.hpp"

using namespace ahmi;
using ahmi::test::ids;
using ahmi::test::letters_vocab;
using ahmi::test::seq;

namespace {

// Predicts the true next element by peeking at a fixed reference sequence.
class OraclePredictor final : public NextStepPredictor {
public:
    explicit OraclePredictor(std::vector<ElementId> truth) : truth_(std::move(truth)) {}
    RankedRecommendation predict(const ContextAttributes&, std::span<const ElementId> history,
                                 std::size_t) const override {
        RankedRecommendation r;
        r.items.push_back(RankedItem{truth_.at(history.size()), 1.0, 1, 1});
        return r;
    }

private:
    std::vector<ElementId> truth_;
};

// Returns nothing at all.
class SilentPredictor final : public NextStepPredictor {
public:
    RankedRecommendation predict(const ContextAttributes&, std::span<const ElementId>, std::size_t) const override {
        return {};
    }
};

ContextModelStore global_store(const std::vector<InteractionSequence>& train, std::size_t order) {
    return build_context_store(train, order, 1'000'000, letters_vocab());
}

}  // namespace

TEST_CASE("split holds out each user's latest sequence") {
    const std::vector corpus{seq({"b", "A", "B", "e"}, "u1", 30), seq({"b", "C", "D", "e"}, "u1", 10),
                             seq({"b", "E", "F", "e"}, "u2", 5), seq({"b", "A", "C", "e"}, "u1", 20)};
    const auto split = split_train_test(corpus);
    REQUIRE(split.test.size() == 2);
    CHECK(split.test[0].start_ms == 30);
    CHECK(split.test[0].user_id == "u1");
    CHECK(split.test[1].user_id == "u2");
    CHECK(split.single_sequence_users == 1);
    REQUIRE(split.train.size() == 2);
    CHECK(split.train[0].start_ms == 10);
    CHECK(split.train[1].start_ms == 20);
    CHECK_THROWS_AS(split_train_test({}), std::invalid_argument);
}

TEST_CASE("split ties go to the later input sequence") {
    const std::vector corpus{seq({"b", "A", "B", "e"}, "u1", 7), seq({"b", "C", "D", "e"}, "u1", 7)};
    const auto split = split_train_test(corpus);
    CHECK(split.test.at(0).events == ids({"b", "C", "D", "e"}));
}

TEST_CASE("incremental evaluation yields one step per position after the begin marker") {
    const auto test_seq = seq({"b", "A", "B", "C", "e"});
    const OraclePredictor perfect(test_seq.events);
    const auto steps = incremental_eval(perfect, std::vector{test_seq}, 3);
    REQUIRE(steps.size() == 1);
    REQUIRE(steps[0].steps.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(steps[0].steps[i].position == i + 1);
        CHECK(steps[0].steps[i].rank_of_truth == 1u);
    }
    const auto m = compute_metrics(steps, 3);
    CHECK(m.precision.mean == 1.0);
    CHECK(m.recall.mean == 1.0);
    CHECK(m.mrr.mean == 1.0);
    CHECK(m.f1 == 1.0);
    CHECK_THROWS_AS(incremental_eval(perfect, std::vector{test_seq}, 0), std::invalid_argument);
}

TEST_CASE("an empty recommendation is a miss everywhere") {
    const auto steps = incremental_eval(SilentPredictor{}, std::vector{seq({"b", "A", "B", "e"})}, 3);
    const auto m = compute_metrics(steps, 3);
    CHECK(m.precision.mean == 0.0);
    CHECK(m.recall.mean == 0.0);
    CHECK(m.mrr.mean == 0.0);
    CHECK(m.f1 == 0.0);
}

TEST_CASE("hand walk at k=1") {
    const std::vector train{seq({"b", "A", "B", "e"}), seq({"b", "A", "C", "e"})};
    const auto store = global_store(train, 1);
    // [b] -> A hit; A -> B (tie, B < C) misses C; C -> e hit.
    const auto report = evaluate_store(store, std::vector{seq({"b", "A", "C", "e"})}, 1, false);
    const auto& m = report.metrics;
    CHECK(m.step_count == 3);
    CHECK(m.precision.mean == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(m.recall.mean == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(m.mrr.mean == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("hand-computed fixture at k=3") {
    const std::vector train{seq({"b", "A", "B", "e"}), seq({"b", "A", "C", "e"})};
    const auto store = global_store(train, 1);
    const std::vector test{seq({"b", "A", "B", "e"}, "u1"), seq({"b", "A", "C", "e"}, "u2")};
    const auto m = evaluate_store(store, test, 3, false).metrics;
    // u1: P = (1 + 1/2 + 1)/3, R = 1, RR = 1.  u2: P = 5/6, R = 1, RR = (1 + 1/2 + 1)/3.
    CHECK(m.sequence_count == 2);
    CHECK(m.precision.mean == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
    CHECK(m.precision.std == doctest::Approx(0.0));
    CHECK(m.recall.mean == 1.0);
    CHECK(m.mrr.mean == doctest::Approx(11.0 / 12.0).epsilon(1e-12));
    CHECK(m.mrr.std == doctest::Approx(1.0 / 12.0).epsilon(1e-12));
    CHECK(m.f1 == doctest::Approx(10.0 / 11.0).epsilon(1e-12));
}

TEST_CASE("constant rank-1 hits with three items returned") {
    std::vector<SequenceSteps> groups(4);
    for (auto& g : groups) {
        for (std::size_t i = 1; i <= 5; ++i) {
            g.steps.push_back(StepResult{i, 3, 1});
        }
    }
    const auto m = compute_metrics(groups, 3);
    CHECK(m.precision.mean == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(m.recall.mean == 1.0);
    CHECK(m.mrr.mean == 1.0);
    CHECK(m.f1 == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(m.recall.std == 0.0);
}

TEST_CASE("sequences are weighted equally, not steps") {
    std::vector<SequenceSteps> groups(2);
    groups[0].steps = {StepResult{1, 1, 1}};
    groups[1].steps = {StepResult{1, 1, std::nullopt}, StepResult{2, 1, std::nullopt}, StepResult{3, 1, std::nullopt}};
    const auto m = compute_metrics(groups, 1);
    CHECK(m.recall.mean == 0.5);
    CHECK(m.recall.std == 0.5);
    CHECK(m.step_count == 4);
    CHECK_THROWS_AS(compute_metrics(std::vector<SequenceSteps>{}, 1), std::invalid_argument);
}

TEST_CASE("F1 from published precision and recall means") {
    CHECK(f1_from_means(0.326605, 0.900249) == doctest::Approx(0.479316).epsilon(1e-5));
    CHECK(f1_from_means(0.342766, 0.890848) == doctest::Approx(0.495053).epsilon(1e-5));
    CHECK(f1_from_means(0.362626, 0.887999) == doctest::Approx(0.514961).epsilon(1e-5));
    CHECK(f1_from_means(0.0, 0.0) == 0.0);
}

TEST_CASE("population standard deviation") {
    const std::vector<double> v{2, 4, 4, 4, 5, 5, 7, 9};
    const auto s = mean_std(v);
    CHECK(s.mean == 5.0);
    CHECK(s.std == 2.0);
    CHECK(mean_std({}).mean == 0.0);
}

TEST_CASE("property: metric inequalities on random corpora") {
    const auto vocab = letters_vocab(5);
    std::mt19937_64 rng(31);
    for (int round = 0; round < 25; ++round) {
        const auto corpus = ahmi::test::random_corpus(rng, vocab, 120, 8, 6);
        for (std::size_t k : {1u, 3u, 5u}) {
            CompareOptions opt;
            opt.k = k;
            opt.min_support = 5;
            const auto report = compare_orders(corpus, vocab, opt);
            for (const auto& row : report.rows) {
                const auto& m = row.metrics;
                CHECK(m.precision.mean >= 0.0);
                CHECK(m.precision.mean <= m.mrr.mean + 1e-12);
                CHECK(m.precision.mean >= m.recall.mean / static_cast<double>(k) - 1e-12);
                CHECK(m.mrr.mean <= m.recall.mean + 1e-12);
                CHECK(m.recall.mean <= 1.0);
                CHECK(m.f1 <= std::max(m.precision.mean, m.recall.mean) + 1e-12);
                CHECK(m.f1 >= std::min(m.precision.mean, m.recall.mean) - 1e-12);
            }
        }
    }
}

TEST_CASE("comparison is deterministic and shares one split") {
    const auto vocab = letters_vocab(5);
    std::mt19937_64 rng(8);
    const auto corpus = ahmi::test::random_corpus(rng, vocab, 200);
    const auto a = compare_orders(corpus, vocab, CompareOptions{});
    const auto b = compare_orders(corpus, vocab, CompareOptions{});
    CHECK(to_json(a).dump() == to_json(b).dump());
    CHECK(format_report_table(a) == format_report_table(b));
    REQUIRE(a.rows.size() == 3);
    for (const auto& row : a.rows) {
        CHECK(row.metrics.sequence_count == a.test_sequences);
    }
    CHECK(a.rows[0].metrics.step_count == a.rows[2].metrics.step_count);
    const auto table = format_report_table(a);
    CHECK(table.find("1st.Order") != std::string::npos);
    CHECK(table.find("3rd.Order") != std::string::npos);
    CHECK(table.find("Precision") != std::string::npos);
}
