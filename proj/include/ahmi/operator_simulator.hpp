#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ahmi/event_model.hpp"
#include "ahmi/markov_recommender.hpp"

namespace ahmi {

/// Raised for an invalid simulation config; the message names the field.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

using Distribution = std::map<ElementId, double>;
using GroundTruthTable = std::map<State, Distribution>;

/// Bounded pmf over inner task lengths `min_length .. min_length + weights.size() - 1`.
struct LengthDistribution {
    std::size_t min_length = 3;
    std::vector<double> weights{0.10, 0.10, 0.10, 0.10, 0.05, 0.25, 0.20, 0.10};

    std::size_t max_length() const noexcept { return min_length + weights.size() - 1; }
    /// Smallest length whose cumulative mass reaches `q`.
    std::size_t quantile(double q) const;
    std::size_t median() const { return quantile(0.5); }
    double mean() const;
};

/// Parameters used to synthesize a ground-truth table from task templates.
struct TemplateSynthesis {
    std::size_t template_count = 12;
    std::size_t opener_count = 3;
};

struct BehaviorProfile {
    ContextAttributes context;
    std::size_t memory_order = 1;
    GroundTruthTable ground_truth;
    double noise_rate = 0.0;
    LengthDistribution task_length;
};

struct ProfileSpec {
    ContextAttributes context;
    double weight = 1.0;
    std::size_t memory_order = 3;
    double noise_rate = 0.0;
    LengthDistribution task_length;
    TemplateSynthesis synthesis;
    /// Used verbatim when present instead of synthesizing.
    std::optional<GroundTruthTable> ground_truth;
};

/// Mixing-machine HMI vocabulary with operator/supervisor roles.
VocabularyFile default_vocabulary();

struct SimulationConfig {
    std::size_t user_count = 24;
    std::size_t sequences_per_user = 50;
    std::uint64_t seed = 42;
    std::int64_t start_time_ms = 1'700'000'000'000;
    /// Inner events after which the end marker is forced.
    std::size_t max_inner_length = 64;
    ElementVocabulary vocabulary = default_vocabulary().vocabulary;
    ContextSchema schema = default_vocabulary().schema;
    std::vector<ProfileSpec> profiles;
};

/// 24 users, 50 sequences each, four order-3 profiles.
SimulationConfig default_simulation_config();

/// Throws ConfigError naming the first violated field.
void validate(const SimulationConfig& config);

SimulationConfig simulation_config_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const SimulationConfig& config);

/// Order-m chain realizing a set of task templates.
///
/// Each template is `[opener, x_2 .. x_L]` with L drawn by stratified quantiles
/// of `task_length`. Every window of every template contributes its next
/// element (or the end marker after x_L) with the template's weight. Openers
/// never finish a template, so sampled tasks always have at least two inner
/// events, and every state reachable by sampling has a row.
BehaviorProfile synthesize_profile(const ProfileSpec& spec, const ElementVocabulary& vocabulary,
                                   std::uint64_t seed);

/// Exact generating distribution for `history` (padded/truncated to the
/// profile's memory like the recommender). Throws DataError if the state has
/// no row.
const Distribution& ground_truth_distribution(const BehaviorProfile& profile, const ElementVocabulary& vocabulary,
                                              std::span<const ElementId> history);

struct SimulationResult {
    std::vector<InteractionEvent> events;  // user by user, time-ordered
    std::vector<BehaviorProfile> profiles;
    std::vector<std::string> user_ids;
    std::vector<std::size_t> user_profile;  // profile index per user
    std::size_t sequence_count = 0;
    std::size_t noise_substitutions = 0;
    std::size_t forced_ends = 0;
};

SimulationResult generate_interaction_log(const SimulationConfig& config);

void write_simulation_log(std::ostream& out, const SimulationResult& result);

/// Sidecar with the ground-truth tables and the user/profile assignment.
nlohmann::json ground_truth_sidecar(const SimulationConfig& config, const SimulationResult& result);

nlohmann::json to_json(const GroundTruthTable& table);
GroundTruthTable ground_truth_from_json(const nlohmann::json& doc);

}  // namespace ahmi
