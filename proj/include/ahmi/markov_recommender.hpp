#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ahmi/event_model.hpp"
#include "ahmi/sequence_extractor.hpp"

namespace ahmi {

/// An n-tuple of element ids, oldest first.
using State = std::vector<ElementId>;

/// Raw successor counts of one state.
struct TransitionRow {
    std::uint64_t total = 0;
    std::map<ElementId, std::uint64_t> next;

    double probability(const ElementId& element) const;

    friend bool operator==(const TransitionRow&, const TransitionRow&) = default;
};

using TransitionTable = std::map<State, TransitionRow>;

struct RankedItem {
    ElementId element;
    double score = 0.0;
    std::uint64_t count = 0;
    std::size_t rank = 0;

    friend bool operator==(const RankedItem&, const RankedItem&) = default;
};

struct RankedRecommendation {
    std::vector<RankedItem> items;
    /// Order of the table that answered; 0 is the popularity fallback.
    std::size_t source_order = 0;
    bool backed_off = false;

    bool empty() const noexcept { return items.empty(); }
    std::size_t size() const noexcept { return items.size(); }

    friend bool operator==(const RankedRecommendation&, const RankedRecommendation&) = default;
};

/// Order-n Markov chain over element ids, estimated by maximum likelihood.
///
/// Every history is left-padded with the begin marker to length n, so the
/// first action of a task is predicted from the all-begin state. Only counts
/// are stored; a probability is always count(state, next) / count(state).
///
/// The model also keeps every lower-order table (order n-1 down to 0, where
/// order 0 is next-element popularity). They are derived from the order-n
/// table by summing over state suffixes and are used only for backoff.
///
/// Immutable after construction; safe for concurrent readers.
class MarkovModel {
public:
    /// Throws std::invalid_argument on order < 1 or an empty corpus, and
    /// DataError if a sequence breaks the vocabulary.
    static MarkovModel train(std::span<const InteractionSequence> sequences, std::size_t order,
                             const ElementVocabulary& vocabulary);

    /// Rebuilds a model from its order-n count table.
    static MarkovModel from_counts(std::size_t order, ElementVocabulary vocabulary, TransitionTable counts,
                                   std::size_t training_sequences);

    std::size_t order() const noexcept { return order_; }
    const ElementVocabulary& vocabulary() const noexcept { return vocabulary_; }
    std::size_t training_sequences() const noexcept { return training_sequences_; }
    std::uint64_t total_transitions() const noexcept { return total_transitions_; }

    /// Order-n table.
    const TransitionTable& transitions() const noexcept { return tables_.back(); }

    /// Table of the given order in [0, order()].
    const TransitionTable& table(std::size_t order) const;

    const TransitionRow* find(std::span<const ElementId> state) const;

    /// Stored probability or 0 for an unseen pair. Throws std::invalid_argument
    /// when |state| != order().
    double transition_probability(std::span<const ElementId> state, const ElementId& next) const;

    /// State of the given order for `history`: the last `order` elements after
    /// left-padding with the begin marker.
    State state_for(std::span<const ElementId> history, std::size_t order) const;
    State state_for(std::span<const ElementId> history) const { return state_for(history, order_); }

    /// Successors of the state reached by `history`, most probable first.
    ///
    /// Ties are broken by higher raw count, then ascending element id. With
    /// `backoff`, an unseen state falls back to shorter suffixes of the history
    /// and finally to popularity; without it an unseen state yields nothing.
    RankedRecommendation recommend(std::span<const ElementId> history, std::size_t k, bool backoff = true) const;

    friend bool operator==(const MarkovModel&, const MarkovModel&) = default;

private:
    MarkovModel(std::size_t order, ElementVocabulary vocabulary);
    void derive_lower_orders();

    std::size_t order_;
    ElementVocabulary vocabulary_;
    std::vector<TransitionTable> tables_;  // index == order
    std::uint64_t total_transitions_ = 0;
    std::size_t training_sequences_ = 0;
};

inline MarkovModel train_markov(std::span<const InteractionSequence> sequences, std::size_t order,
                                const ElementVocabulary& vocabulary) {
    return MarkovModel::train(sequences, order, vocabulary);
}

/// Successor ranking shared by the model and its tests' expectations.
std::vector<RankedItem> rank_successors(const TransitionRow& row, std::size_t k);

enum class ModelTier { context, role, global };

std::string_view to_string(ModelTier tier) noexcept;

inline constexpr std::size_t kDefaultMinSupport = 30;

/// Models pre-filtered by context: exact (role, shift), role only, and a
/// global model trained on everything.
struct ContextModelStore {
    MarkovModel global_model;
    std::map<ContextAttributes, MarkovModel> per_context;
    std::map<std::string, MarkovModel> per_role;
    std::size_t order = 1;
    std::size_t min_support = kDefaultMinSupport;
    bool context_mode = true;

    friend bool operator==(const ContextModelStore&, const ContextModelStore&) = default;
};

/// Partitions by (role, shift) and by role; a partition gets a model only if it
/// holds at least `min_support` sequences. With `context_mode` off only the
/// global model is trained.
ContextModelStore build_context_store(std::span<const InteractionSequence> sequences, std::size_t order,
                                      std::size_t min_support, const ElementVocabulary& vocabulary,
                                      bool context_mode = true);

struct ModelSelection {
    const MarkovModel* model;
    ModelTier tier;
};

/// Most specific model available for `context`: exact, then role, then global.
ModelSelection select_model(const ContextModelStore& store, const ContextAttributes& context);

// Snapshots persist exact counts; probabilities are recomputed on load.

inline constexpr int kSnapshotVersion = 1;

nlohmann::json to_json(const MarkovModel& model);
MarkovModel model_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const ContextModelStore& store);
ContextModelStore store_from_json(const nlohmann::json& doc);

void save_store_snapshot(const std::string& path, const ContextModelStore& store);
ContextModelStore load_store_snapshot(const std::string& path);

}  // namespace ahmi
