#include <doctest.h>

#include <sstream>

#include <nlohmann/json.hpp>

#include "ahmi/operator_simulator.hpp"
#include "ahmi/sequence_extractor.hpp"

using namespace ahmi;
using nlohmann::json;

namespace {

// Single order-1 profile over the default vocabulary with an explicit table.
SimulationConfig explicit_config(GroundTruthTable table, std::size_t users = 4, std::size_t per_user = 25) {
    auto config = default_simulation_config();
    config.user_count = users;
    config.sequences_per_user = per_user;
    ProfileSpec spec;
    spec.context = {"operator", "morning"};
    spec.weight = 1.0;
    spec.memory_order = 1;
    spec.ground_truth = std::move(table);
    config.profiles = {spec};
    return config;
}

struct Names {
    ElementId begin, end, a, b, c;
};

Names names() {
    const auto vocab = default_vocabulary().vocabulary;
    const auto actions = vocab.action_elements();
    return {vocab.begin_marker(), vocab.end_marker(), actions.at(0), actions.at(1), actions.at(2)};
}

std::string log_text(const SimulationResult& r) {
    std::ostringstream out;
    write_simulation_log(out, r);
    return out.str();
}

}  // namespace

TEST_CASE("default config scale") {
    const auto config = default_simulation_config();
    CHECK(config.user_count == 24);
    CHECK(config.sequences_per_user == 50);
    REQUIRE(config.profiles.size() == 4);
    double weight = 0.0;
    for (const auto& p : config.profiles) {
        weight += p.weight;
        CHECK(p.memory_order == 3);
    }
    CHECK(weight == doctest::Approx(1.0));
    CHECK(config.profiles[0].task_length.median() == 8);
    CHECK_NOTHROW(validate(config));
}

TEST_CASE("same seed, same bytes; different seed, different bytes") {
    auto config = default_simulation_config();
    config.user_count = 5;
    config.sequences_per_user = 10;
    const auto a = log_text(generate_interaction_log(config));
    const auto b = log_text(generate_interaction_log(config));
    CHECK(a == b);
    config.seed = 43;
    CHECK(log_text(generate_interaction_log(config)) != a);
}

TEST_CASE("a deterministic table emits one fixed sequence") {
    const auto n = names();
    GroundTruthTable table{{{n.begin}, {{n.a, 1.0}}}, {{n.a}, {{n.b, 1.0}}}, {{n.b}, {{n.end, 1.0}}}};
    const auto config = explicit_config(table);
    const auto result = generate_interaction_log(config);
    CHECK(result.sequence_count == 100);
    CHECK(result.events.size() == 400);
    const auto extracted = extract_all(
        [&] {
            UserEventStreams s;
            for (const auto& e : result.events) s[e.user_id].push_back(e);
            return s;
        }(),
        config.vocabulary);
    REQUIRE(extracted.sequences.size() == 100);
    for (const auto& s : extracted.sequences) {
        CHECK(s.events == std::vector<ElementId>{n.begin, n.a, n.b, n.end});
    }
}

TEST_CASE("a 50/50 branch is sampled near its probability") {
    const auto n = names();
    GroundTruthTable table{{{n.begin}, {{n.a, 1.0}}},
                           {{n.a}, {{n.b, 0.5}, {n.c, 0.5}}},
                           {{n.b}, {{n.end, 1.0}}},
                           {{n.c}, {{n.end, 1.0}}}};
    const auto result = generate_interaction_log(explicit_config(table, 10, 400));
    std::size_t b_count = 0;
    for (const auto& e : result.events) {
        b_count += e.element == n.b;
    }
    // 4000 draws: 4 sigma is about 0.032.
    CHECK(static_cast<double>(b_count) / 4000.0 == doctest::Approx(0.5).epsilon(0.035));
}

TEST_CASE("long self-loops are cut at max_inner_length") {
    const auto n = names();
    GroundTruthTable table{{{n.begin}, {{n.a, 1.0}}}, {{n.a}, {{n.a, 1.0}}}};
    auto config = explicit_config(table, 1, 3);
    config.max_inner_length = 10;
    const auto result = generate_interaction_log(config);
    CHECK(result.forced_ends == 3);
    CHECK(result.events.size() == 3 * 12);
}

TEST_CASE("noise changes logged elements only") {
    const auto n = names();
    GroundTruthTable table{{{n.begin}, {{n.a, 1.0}}}, {{n.a}, {{n.b, 1.0}}}, {{n.b}, {{n.end, 1.0}}}};
    auto config = explicit_config(table, 2, 200);
    config.profiles[0].noise_rate = 0.3;
    const auto result = generate_interaction_log(config);
    // Structure is untouched: every sequence still has exactly four events.
    CHECK(result.events.size() == 400 * 4);
    CHECK(result.noise_substitutions > 0);
    CHECK(result.forced_ends == 0);
}

TEST_CASE("generated logs ingest strictly and extract without discards") {
    auto config = default_simulation_config();
    config.user_count = 6;
    config.sequences_per_user = 20;
    const auto result = generate_interaction_log(config);
    std::istringstream in(log_text(result));
    const auto ingested = ingest_event_log(in, config.vocabulary, IngestOptions{true, &config.schema});
    CHECK(ingested.accepted_count == result.events.size());
    const auto extracted = extract_all(ingested.streams, config.vocabulary);
    CHECK(extracted.sequences.size() == result.sequence_count);
    CHECK(extracted.stats.discarded_events == 0);
    for (const auto& [user, events] : ingested.streams) {
        for (std::size_t i = 1; i < events.size(); ++i) {
            CHECK(events[i - 1].timestamp_ms < events[i].timestamp_ms);
        }
    }
    for (const auto& s : extracted.sequences) {
        CHECK(s.inner_length() >= 2);
    }
}

TEST_CASE("synthesized tables are proper distributions") {
    const auto config = default_simulation_config();
    const auto profile = synthesize_profile(config.profiles[0], config.vocabulary, 7);
    CHECK(profile.memory_order == 3);
    CHECK_FALSE(profile.ground_truth.empty());
    for (const auto& [state, dist] : profile.ground_truth) {
        CHECK(state.size() == 3);
        double sum = 0.0;
        for (const auto& [e, p] : dist) {
            CHECK(e != config.vocabulary.begin_marker());
            sum += p;
        }
        CHECK(sum == doctest::Approx(1.0));
    }
    const std::vector<ElementId> history{config.vocabulary.begin_marker()};
    const auto& first = ground_truth_distribution(profile, config.vocabulary, history);
    CHECK_FALSE(first.contains(config.vocabulary.end_marker()));
    CHECK(ground_truth_from_json(to_json(profile.ground_truth)) == profile.ground_truth);
}

TEST_CASE("config validation names the offending field") {
    const auto base = to_json(default_simulation_config());
    const auto expect = [](json doc, const std::string& field) {
        try {
            simulation_config_from_json(doc);
            FAIL("expected ConfigError for " << field);
        } catch (const ConfigError& e) {
            CHECK_MESSAGE(std::string(e.what()).find(field) != std::string::npos, e.what());
        }
    };
    auto doc = base;
    doc["profiles"][1]["weight"] = -0.5;
    expect(doc, "profiles[1].weight");
    doc = base;
    doc["profiles"][0]["weight"] = 0.9;
    expect(doc, "weights sum");
    doc = base;
    doc["user_count"] = 0;
    expect(doc, "user_count");
    doc = base;
    doc["user_count"] = "many";
    expect(doc, "user_count");
    doc = base;
    doc["profiles"][2]["noise_rate"] = 1.5;
    expect(doc, "profiles[2].noise_rate");
    doc = base;
    doc["profiles"][0]["role"] = "janitor";
    expect(doc, "profiles[0].context");
    doc = base;
    doc["profiles"][0]["memory_order"] = 0;
    expect(doc, "profiles[0].memory_order");
    expect(json::array(), "JSON object");

    CHECK_NOTHROW(simulation_config_from_json(base));
    CHECK(to_json(simulation_config_from_json(base)) == base);
}
