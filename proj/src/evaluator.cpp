#include "ahmi/evaluator.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace ahmi {

using nlohmann::json;

TrainTestSplit split_train_test(std::span<const InteractionSequence> corpus) {
    if (corpus.empty()) {
        throw std::invalid_argument("empty corpus");
    }
    std::map<std::string, std::size_t> last;  // user -> index of held-out sequence
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        auto [it, inserted] = last.try_emplace(corpus[i].user_id, i);
        if (!inserted && corpus[i].start_ms >= corpus[it->second].start_ms) {
            it->second = i;
        }
    }
    std::map<std::string, std::size_t> per_user;
    for (const auto& seq : corpus) {
        ++per_user[seq.user_id];
    }

    TrainTestSplit split;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        if (last.at(corpus[i].user_id) != i) {
            split.train.push_back(corpus[i]);
        }
    }
    for (const auto& [user, index] : last) {
        split.test.push_back(corpus[index]);
        if (per_user.at(user) == 1) {
            ++split.single_sequence_users;
        }
    }
    return split;
}

RankedRecommendation StorePredictor::predict(const ContextAttributes& context, std::span<const ElementId> history,
                                             std::size_t k) const {
    return select_model(*store_, context).model->recommend(history, k, backoff_);
}

std::vector<SequenceSteps> incremental_eval(const NextStepPredictor& predictor,
                                            std::span<const InteractionSequence> test, std::size_t k) {
    if (k < 1) {
        throw std::invalid_argument("k must be >= 1");
    }
    std::vector<SequenceSteps> out;
    out.reserve(test.size());
    for (const auto& seq : test) {
        SequenceSteps group{seq.user_id, {}};
        const std::span<const ElementId> events(seq.events);
        for (std::size_t i = 1; i < events.size(); ++i) {
            const auto rec = predictor.predict(seq.context, events.first(i), k);
            StepResult step{i, rec.size(), std::nullopt};
            for (const auto& item : rec.items) {
                if (item.element == events[i]) {
                    step.rank_of_truth = item.rank;
                    break;
                }
            }
            group.steps.push_back(step);
        }
        out.push_back(std::move(group));
    }
    return out;
}

MeanStd mean_std(std::span<const double> values) {
    if (values.empty()) {
        return {};
    }
    double sum = 0.0;
    for (double v : values) {
        sum += v;
    }
    const double mean = sum / static_cast<double>(values.size());
    double sq = 0.0;
    for (double v : values) {
        sq += (v - mean) * (v - mean);
    }
    return {mean, std::sqrt(sq / static_cast<double>(values.size()))};
}

double f1_from_means(double precision_mean, double recall_mean) {
    const double sum = precision_mean + recall_mean;
    return sum > 0.0 ? 2.0 * precision_mean * recall_mean / sum : 0.0;
}

MetricSummary compute_metrics(std::span<const SequenceSteps> groups, std::size_t k) {
    if (k < 1) {
        throw std::invalid_argument("k must be >= 1");
    }
    std::vector<double> precision, recall, rr;
    MetricSummary summary;
    for (const auto& group : groups) {
        if (group.steps.empty()) {
            continue;
        }
        double p = 0.0, r = 0.0, m = 0.0;
        for (const auto& step : group.steps) {
            if (step.rank_of_truth) {
                r += 1.0;
                p += 1.0 / static_cast<double>(step.returned_count);
                m += 1.0 / static_cast<double>(*step.rank_of_truth);
            }
        }
        const auto n = static_cast<double>(group.steps.size());
        precision.push_back(p / n);
        recall.push_back(r / n);
        rr.push_back(m / n);
        summary.step_count += group.steps.size();
    }
    if (summary.step_count == 0) {
        throw std::invalid_argument("no evaluation steps");
    }
    summary.sequence_count = precision.size();
    summary.precision = mean_std(precision);
    summary.recall = mean_std(recall);
    summary.mrr = mean_std(rr);
    summary.f1 = f1_from_means(summary.precision.mean, summary.recall.mean);
    return summary;
}

OrderReport evaluate_store(const ContextModelStore& store, std::span<const InteractionSequence> test,
                           std::size_t k, bool backoff) {
    const StorePredictor predictor(store, backoff);
    const auto steps = incremental_eval(predictor, test, k);
    return OrderReport{store.order, compute_metrics(steps, k)};
}

EvaluationReport compare_orders(std::span<const InteractionSequence> corpus, const ElementVocabulary& vocabulary,
                                const CompareOptions& options) {
    if (options.orders.empty()) {
        throw std::invalid_argument("no orders to compare");
    }
    const auto split = split_train_test(corpus);
    EvaluationReport report;
    report.k = options.k;
    report.context_mode = options.context_mode;
    report.backoff = options.backoff;
    report.min_support = options.min_support;
    report.train_sequences = split.train.size();
    report.test_sequences = split.test.size();
    for (const auto order : options.orders) {
        const auto store =
            build_context_store(split.train, order, options.min_support, vocabulary, options.context_mode);
        report.rows.push_back(evaluate_store(store, split.test, options.k, options.backoff));
    }
    return report;
}

namespace {

json metric_json(const MeanStd& m) {
    return json{{"mean", m.mean}, {"std", m.std}};
}

std::string ordinal(std::size_t n) {
    const char* suffix = "th";
    if (n % 100 < 11 || n % 100 > 13) {
        switch (n % 10) {
            case 1: suffix = "st"; break;
            case 2: suffix = "nd"; break;
            case 3: suffix = "rd"; break;
            default: break;
        }
    }
    return std::to_string(n) + suffix + ".Order";
}

std::string fixed6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string with_std(const MeanStd& m) {
    return fixed6(m.mean) + " (" + fixed6(m.std) + ")";
}

}  // namespace

json to_json(const EvaluationReport& report) {
    json rows = json::array();
    for (const auto& row : report.rows) {
        const auto& m = row.metrics;
        rows.push_back(json{{"order", row.order},
                            {"precision", metric_json(m.precision)},
                            {"recall", metric_json(m.recall)},
                            {"mrr", metric_json(m.mrr)},
                            {"f1", m.f1},
                            {"sequence_count", m.sequence_count},
                            {"step_count", m.step_count}});
    }
    return json{{"k", report.k},
                {"context_mode", report.context_mode},
                {"backoff", report.backoff},
                {"min_support", report.min_support},
                {"train_sequences", report.train_sequences},
                {"test_sequences", report.test_sequences},
                {"orders", std::move(rows)}};
}

std::string format_report_table(const EvaluationReport& report) {
    std::vector<std::vector<std::string>> grid;
    grid.push_back({"Metric"});
    grid.push_back({"Precision"});
    grid.push_back({"Recall"});
    grid.push_back({"MRR"});
    grid.push_back({"F1"});
    for (const auto& row : report.rows) {
        grid[0].push_back(ordinal(row.order));
        grid[1].push_back(with_std(row.metrics.precision));
        grid[2].push_back(with_std(row.metrics.recall));
        grid[3].push_back(with_std(row.metrics.mrr));
        grid[4].push_back(fixed6(row.metrics.f1));
    }
    std::vector<std::size_t> width(grid[0].size(), 0);
    for (const auto& line : grid) {
        for (std::size_t c = 0; c < line.size(); ++c) {
            width[c] = std::max(width[c], line[c].size());
        }
    }
    std::ostringstream out;
    for (const auto& line : grid) {
        for (std::size_t c = 0; c < line.size(); ++c) {
            out << line[c];
            if (c + 1 < line.size()) {
                out << std::string(width[c] - line[c].size() + 2, ' ');
            }
        }
        out << '\n';
    }
    out << "K=" << report.k << "  train=" << report.train_sequences << "  test=" << report.test_sequences
        << "  context_mode=" << (report.context_mode ? "on" : "off")
        << "  backoff=" << (report.backoff ? "on" : "off") << '\n';
    return out.str();
}

}  // namespace ahmi
