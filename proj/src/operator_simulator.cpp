#include "ahmi/operator_simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

#include <nlohmann/json.hpp>

namespace ahmi {

using nlohmann::json;

namespace {

/// mt19937_64 with hand-rolled draws so streams do not depend on the
/// standard library's distribution implementations.
class Rng {
public:
    explicit Rng(std::initializer_list<std::uint64_t> seeds) {
        std::vector<std::uint32_t> words;
        for (auto s : seeds) {
            words.push_back(static_cast<std::uint32_t>(s));
            words.push_back(static_cast<std::uint32_t>(s >> 32));
        }
        std::seed_seq seq(words.begin(), words.end());
        engine_.seed(seq);
    }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform in [0, n).
    std::size_t below(std::size_t n) {
        const std::uint64_t bound = n;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return static_cast<std::size_t>(x % bound);
    }

    std::int64_t between(std::int64_t lo, std::int64_t hi) {
        return lo + static_cast<std::int64_t>(below(static_cast<std::size_t>(hi - lo + 1)));
    }

private:
    std::mt19937_64 engine_;
};

const ElementId& sample(const Distribution& dist, Rng& rng) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (const auto& [element, p] : dist) {
        acc += p;
        if (u < acc) {
            return element;
        }
    }
    // Rounding slack: fall back to the last element with positive mass.
    for (auto it = dist.rbegin(); it != dist.rend(); ++it) {
        if (it->second > 0.0) {
            return it->first;
        }
    }
    return dist.rbegin()->first;
}

std::string field(std::size_t profile, const char* name) {
    return "profiles[" + std::to_string(profile) + "]." + name;
}

void check_distribution(const Distribution& dist, const ElementVocabulary& vocabulary, const std::string& where) {
    double sum = 0.0;
    for (const auto& [element, p] : dist) {
        if (!vocabulary.contains(element) || element == vocabulary.begin_marker()) {
            throw ConfigError(where + ": invalid successor '" + element.str() + "'");
        }
        if (!(p >= 0.0 && p <= 1.0)) {
            throw ConfigError(where + ": probability out of [0, 1]");
        }
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw ConfigError(where + ": probabilities sum to " + std::to_string(sum));
    }
}

json length_json(const LengthDistribution& d) {
    return json{{"min", d.min_length}, {"weights", d.weights}};
}

std::string user_name(std::size_t index, std::size_t count) {
    const auto width = std::to_string(count).size();
    auto digits = std::to_string(index + 1);
    return "user_" + std::string(width > digits.size() ? width - digits.size() : 0, '0') + digits;
}

}  // namespace

std::size_t LengthDistribution::quantile(double q) const {
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        acc += weights[i];
        if (acc >= q * total - 1e-12) {
            return min_length + i;
        }
    }
    return max_length();
}

double LengthDistribution::mean() const {
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    double m = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        m += static_cast<double>(min_length + i) * weights[i];
    }
    return m / total;
}

VocabularyFile default_vocabulary() {
    static const VocabularyFile vocab = [] {
        std::set<ElementId> elements;
        for (const char* id :
             {"task_begin",      "task_end",      "recipe_select_bread", "recipe_select_pastry",
              "recipe_select_cake", "dose_flour", "dose_water",          "dose_sugar",
              "dose_yeast",      "dose_butter",   "dose_salt",           "mixer_speed_set",
              "mixer_time_set",  "mixer_start",   "mixer_stop",          "temp_set",
              "lid_open",        "lid_close",     "alarm_ack",           "confirm_accept"}) {
            elements.emplace(id);
        }
        return VocabularyFile{
            ElementVocabulary(std::move(elements), ElementId("task_begin"), ElementId("task_end")),
            ContextSchema{{"operator", "supervisor"}, {"morning", "evening", "night"}}};
    }();
    return vocab;
}

SimulationConfig default_simulation_config() {
    SimulationConfig config;
    const std::pair<ContextAttributes, double> contexts[] = {
        {{"operator", "morning"}, 0.3},
        {{"operator", "night"}, 0.3},
        {{"supervisor", "morning"}, 0.2},
        {{"supervisor", "evening"}, 0.2},
    };
    for (const auto& [context, weight] : contexts) {
        ProfileSpec spec;
        spec.context = context;
        spec.weight = weight;
        spec.memory_order = 3;
        spec.noise_rate = 0.02;
        config.profiles.push_back(spec);
    }
    return config;
}

void validate(const SimulationConfig& config) {
    if (config.user_count < 1) {
        throw ConfigError("user_count: must be >= 1");
    }
    if (config.sequences_per_user < 1) {
        throw ConfigError("sequences_per_user: must be >= 1");
    }
    if (config.max_inner_length < kMinInnerLength) {
        throw ConfigError("max_inner_length: must be >= 2");
    }
    if (config.profiles.empty()) {
        throw ConfigError("profiles: at least one profile required");
    }
    double weight_sum = 0.0;
    for (std::size_t i = 0; i < config.profiles.size(); ++i) {
        const auto& p = config.profiles[i];
        if (!config.schema.allows(p.context)) {
            throw ConfigError(field(i, "context") + ": role/shift not allowed by the schema");
        }
        if (!(p.weight >= 0.0)) {
            throw ConfigError(field(i, "weight") + ": must be >= 0");
        }
        weight_sum += p.weight;
        if (p.memory_order < 1) {
            throw ConfigError(field(i, "memory_order") + ": must be >= 1");
        }
        if (!(p.noise_rate >= 0.0 && p.noise_rate < 1.0)) {
            throw ConfigError(field(i, "noise_rate") + ": must be in [0, 1)");
        }
        if (p.ground_truth) {
            for (const auto& [state, dist] : *p.ground_truth) {
                if (state.size() != p.memory_order) {
                    throw ConfigError(field(i, "ground_truth") + ": state length differs from memory_order");
                }
                check_distribution(dist, config.vocabulary, field(i, "ground_truth"));
            }
            continue;
        }
        const auto& len = p.task_length;
        if (len.min_length < kMinInnerLength || len.weights.empty()) {
            throw ConfigError(field(i, "task_length") + ": min must be >= 2 with at least one weight");
        }
        if (std::any_of(len.weights.begin(), len.weights.end(), [](double w) { return !(w >= 0.0); }) ||
            std::accumulate(len.weights.begin(), len.weights.end(), 0.0) <= 0.0) {
            throw ConfigError(field(i, "task_length") + ": weights must be non-negative with positive sum");
        }
        if (len.max_length() > config.max_inner_length) {
            throw ConfigError(field(i, "task_length") + ": exceeds max_inner_length");
        }
        const auto actions = config.vocabulary.action_elements().size();
        if (p.synthesis.template_count < 1) {
            throw ConfigError(field(i, "templates") + ": must be >= 1");
        }
        if (p.synthesis.opener_count < 1 || p.synthesis.opener_count >= actions) {
            throw ConfigError(field(i, "openers") + ": must be in [1, action element count)");
        }
    }
    if (std::abs(weight_sum - 1.0) > 1e-9) {
        throw ConfigError("profiles: weights sum to " + std::to_string(weight_sum) + ", expected 1");
    }
}

json to_json(const GroundTruthTable& table) {
    json rows = json::array();
    for (const auto& [state, dist] : table) {
        json ids = json::array();
        for (const auto& e : state) {
            ids.push_back(e.str());
        }
        json next = json::object();
        for (const auto& [element, p] : dist) {
            next[element.str()] = p;
        }
        rows.push_back(json{{"state", std::move(ids)}, {"next", std::move(next)}});
    }
    return rows;
}

GroundTruthTable ground_truth_from_json(const json& doc) {
    GroundTruthTable table;
    for (const auto& row : doc) {
        State state;
        for (const auto& e : row.at("state")) {
            state.emplace_back(e.get<std::string>());
        }
        Distribution dist;
        for (const auto& [element, p] : row.at("next").items()) {
            dist.emplace(ElementId(element), p.get<double>());
        }
        table.emplace(std::move(state), std::move(dist));
    }
    return table;
}

SimulationConfig simulation_config_from_json(const json& doc) {
    if (!doc.is_object()) {
        throw ConfigError("simulation config must be a JSON object");
    }
    SimulationConfig config;
    const auto get = [&](const json& obj, const char* key, auto& target, const std::string& name) {
        if (!obj.contains(key)) {
            return;
        }
        try {
            obj.at(key).get_to(target);
        } catch (const json::exception&) {
            throw ConfigError(name + ": wrong type");
        }
    };
    get(doc, "user_count", config.user_count, "user_count");
    get(doc, "sequences_per_user", config.sequences_per_user, "sequences_per_user");
    get(doc, "seed", config.seed, "seed");
    get(doc, "start_time_ms", config.start_time_ms, "start_time_ms");
    get(doc, "max_inner_length", config.max_inner_length, "max_inner_length");
    if (doc.contains("vocabulary")) {
        try {
            auto vocab = vocabulary_from_json(doc.at("vocabulary"));
            config.vocabulary = std::move(vocab.vocabulary);
            config.schema = std::move(vocab.schema);
        } catch (const DataError& e) {
            throw ConfigError(std::string("vocabulary: ") + e.what());
        }
    }
    if (!doc.contains("profiles")) {
        config.profiles = default_simulation_config().profiles;
    } else {
        const auto& profiles = doc.at("profiles");
        if (!profiles.is_array()) {
            throw ConfigError("profiles: must be an array");
        }
        for (std::size_t i = 0; i < profiles.size(); ++i) {
            const auto& p = profiles[i];
            if (!p.is_object()) {
                throw ConfigError("profiles[" + std::to_string(i) + "]: must be an object");
            }
            ProfileSpec spec;
            get(p, "role", spec.context.role, field(i, "role"));
            get(p, "shift", spec.context.shift, field(i, "shift"));
            get(p, "weight", spec.weight, field(i, "weight"));
            get(p, "memory_order", spec.memory_order, field(i, "memory_order"));
            get(p, "noise_rate", spec.noise_rate, field(i, "noise_rate"));
            get(p, "templates", spec.synthesis.template_count, field(i, "templates"));
            get(p, "openers", spec.synthesis.opener_count, field(i, "openers"));
            if (p.contains("task_length")) {
                get(p.at("task_length"), "min", spec.task_length.min_length, field(i, "task_length.min"));
                get(p.at("task_length"), "weights", spec.task_length.weights, field(i, "task_length.weights"));
            }
            if (p.contains("ground_truth")) {
                try {
                    spec.ground_truth = ground_truth_from_json(p.at("ground_truth"));
                } catch (const std::exception& e) {
                    throw ConfigError(field(i, "ground_truth") + ": " + e.what());
                }
            }
            config.profiles.push_back(std::move(spec));
        }
    }
    validate(config);
    return config;
}

json to_json(const SimulationConfig& config) {
    json profiles = json::array();
    for (const auto& p : config.profiles) {
        json entry{{"role", p.context.role},
                   {"shift", p.context.shift},
                   {"weight", p.weight},
                   {"memory_order", p.memory_order},
                   {"noise_rate", p.noise_rate},
                   {"templates", p.synthesis.template_count},
                   {"openers", p.synthesis.opener_count},
                   {"task_length", length_json(p.task_length)}};
        if (p.ground_truth) {
            entry["ground_truth"] = to_json(*p.ground_truth);
        }
        profiles.push_back(std::move(entry));
    }
    return json{{"user_count", config.user_count},
                {"sequences_per_user", config.sequences_per_user},
                {"seed", config.seed},
                {"start_time_ms", config.start_time_ms},
                {"max_inner_length", config.max_inner_length},
                {"vocabulary", to_json(config.vocabulary, config.schema)},
                {"profiles", std::move(profiles)}};
}

BehaviorProfile synthesize_profile(const ProfileSpec& spec, const ElementVocabulary& vocabulary,
                                   std::uint64_t seed) {
    BehaviorProfile profile{spec.context, spec.memory_order, {}, spec.noise_rate, spec.task_length};
    if (spec.ground_truth) {
        profile.ground_truth = *spec.ground_truth;
        return profile;
    }
    Rng rng{seed, 0x7e3a1a7e5ULL};
    auto actions = vocabulary.action_elements();
    if (spec.synthesis.opener_count < 1 || spec.synthesis.opener_count >= actions.size()) {
        throw ConfigError("openers: must be in [1, action element count)");
    }
    // Partial Fisher-Yates: the first opener_count slots become openers.
    for (std::size_t i = 0; i < spec.synthesis.opener_count; ++i) {
        std::swap(actions[i], actions[i + rng.below(actions.size() - i)]);
    }
    const std::span<const ElementId> openers(actions.data(), spec.synthesis.opener_count);
    const std::span<const ElementId> closers(actions.data() + openers.size(), actions.size() - openers.size());

    const auto pick_other = [&](std::span<const ElementId> pool, const ElementId& previous) {
        for (;;) {
            const auto& e = pool[rng.below(pool.size())];
            if (e != previous || pool.size() == 1) {
                return e;
            }
        }
    };

    const auto n_templates = spec.synthesis.template_count;
    const double weight = 1.0 / static_cast<double>(n_templates);
    std::map<State, std::map<ElementId, double>> mass;
    for (std::size_t t = 0; t < n_templates; ++t) {
        const auto length = spec.task_length.quantile((static_cast<double>(t) + 0.5) / static_cast<double>(n_templates));
        std::vector<ElementId> steps;
        steps.push_back(openers[rng.below(openers.size())]);
        for (std::size_t j = 1; j + 1 < length; ++j) {
            steps.push_back(pick_other(actions, steps.back()));
        }
        steps.push_back(pick_other(closers, steps.back()));
        steps.push_back(vocabulary.end_marker());

        State window(spec.memory_order, vocabulary.begin_marker());
        for (const auto& next : steps) {
            mass[window][next] += weight;
            std::shift_left(window.begin(), window.end(), 1);
            window.back() = next;
        }
    }
    for (auto& [state, dist] : mass) {
        const double total = std::accumulate(dist.begin(), dist.end(), 0.0,
                                             [](double acc, const auto& kv) { return acc + kv.second; });
        for (auto& [element, m] : dist) {
            m /= total;
        }
    }
    profile.ground_truth = std::move(mass);
    return profile;
}

const Distribution& ground_truth_distribution(const BehaviorProfile& profile, const ElementVocabulary& vocabulary,
                                              std::span<const ElementId> history) {
    State state(profile.memory_order, vocabulary.begin_marker());
    const auto take = std::min(profile.memory_order, history.size());
    std::copy(history.end() - static_cast<std::ptrdiff_t>(take), history.end(),
              state.end() - static_cast<std::ptrdiff_t>(take));
    const auto it = profile.ground_truth.find(state);
    if (it == profile.ground_truth.end()) {
        std::string ids;
        for (const auto& e : state) {
            ids += (ids.empty() ? "" : ",") + e.str();
        }
        throw DataError("ground truth has no row for state (" + ids + ")");
    }
    return it->second;
}

SimulationResult generate_interaction_log(const SimulationConfig& config) {
    validate(config);
    SimulationResult result;
    for (std::size_t i = 0; i < config.profiles.size(); ++i) {
        result.profiles.push_back(synthesize_profile(config.profiles[i], config.vocabulary, config.seed + 1000003 * (i + 1)));
    }

    Rng assign{config.seed, 0xa551ULL};
    const auto actions = config.vocabulary.action_elements();
    const auto& begin = config.vocabulary.begin_marker();
    const auto& end = config.vocabulary.end_marker();

    for (std::size_t u = 0; u < config.user_count; ++u) {
        std::size_t profile_index = config.profiles.size() - 1;
        {
            const double r = assign.uniform();
            double acc = 0.0;
            for (std::size_t i = 0; i < config.profiles.size(); ++i) {
                acc += config.profiles[i].weight;
                if (r < acc) {
                    profile_index = i;
                    break;
                }
            }
        }
        const auto& profile = result.profiles[profile_index];
        const auto user = user_name(u, config.user_count);
        result.user_ids.push_back(user);
        result.user_profile.push_back(profile_index);

        Rng rng{config.seed, u, 0x5eedULL};
        std::int64_t clock = config.start_time_ms + static_cast<std::int64_t>(u) * 86'400'000;
        const auto emit = [&](const ElementId& element) {
            result.events.push_back(InteractionEvent{user, element, clock, profile.context});
            clock += rng.between(800, 4000);
        };

        for (std::size_t s = 0; s < config.sequences_per_user; ++s) {
            clock += rng.between(30'000, 300'000);
            emit(begin);
            std::vector<ElementId> history{begin};
            std::size_t inner = 0;
            for (;;) {
                if (inner >= config.max_inner_length) {
                    ++result.forced_ends;
                    emit(end);
                    break;
                }
                const auto& next = sample(ground_truth_distribution(profile, config.vocabulary, history), rng);
                if (next == end) {
                    emit(end);
                    break;
                }
                // Noise corrupts what is logged; the operator's own state
                // follows the intended step.
                if (profile.noise_rate > 0.0 && rng.uniform() < profile.noise_rate) {
                    ++result.noise_substitutions;
                    emit(actions[rng.below(actions.size())]);
                } else {
                    emit(next);
                }
                history.push_back(next);
                ++inner;
            }
            ++result.sequence_count;
        }
    }
    return result;
}

void write_simulation_log(std::ostream& out, const SimulationResult& result) {
    for (const auto& event : result.events) {
        out << to_json_line(event) << '\n';
    }
}

json ground_truth_sidecar(const SimulationConfig& config, const SimulationResult& result) {
    json profiles = json::array();
    for (const auto& p : result.profiles) {
        profiles.push_back(json{{"role", p.context.role},
                                {"shift", p.context.shift},
                                {"memory_order", p.memory_order},
                                {"noise_rate", p.noise_rate},
                                {"ground_truth", to_json(p.ground_truth)}});
    }
    json users = json::array();
    for (std::size_t u = 0; u < result.user_ids.size(); ++u) {
        users.push_back(json{{"user_id", result.user_ids[u]}, {"profile", result.user_profile[u]}});
    }
    return json{{"seed", config.seed},
                {"vocabulary", to_json(config.vocabulary, config.schema)},
                {"profiles", std::move(profiles)},
                {"users", std::move(users)},
                {"sequence_count", result.sequence_count},
                {"event_count", result.events.size()},
                {"noise_substitutions", result.noise_substitutions},
                {"forced_ends", result.forced_ends}};
}

}  // namespace ahmi
