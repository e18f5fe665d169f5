#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ahmi/event_model.hpp"

namespace ahmi {

/// A validated run `[begin, e_1 .. e_l, end]` with l >= 2.
struct InteractionSequence {
    std::string user_id;
    ContextAttributes context;
    std::vector<ElementId> events;
    std::int64_t start_ms = 0;
    std::int64_t end_ms = 0;

    std::size_t inner_length() const noexcept { return events.size() < 2 ? 0 : events.size() - 2; }

    friend bool operator==(const InteractionSequence&, const InteractionSequence&) = default;
};

inline constexpr std::size_t kMinInnerLength = 2;

/// Throws DataError if `seq` breaks the marker/length/time invariants.
void validate_sequence(const InteractionSequence& seq, const ElementVocabulary& vocabulary);

/// Discard counters. Every input event is either emitted or counted in
/// `discarded_events`.
struct ExtractionStats {
    std::size_t input_events = 0;
    std::size_t emitted_events = 0;
    std::size_t discarded_events = 0;
    std::size_t sequences = 0;
    std::size_t too_short = 0;          // closed brackets with l < 2
    std::size_t context_changed = 0;    // closed brackets whose context drifted
    std::size_t restarted_brackets = 0; // open bracket dropped by a new begin marker
    std::size_t unterminated = 0;       // bracket still open at end of stream
    std::size_t stray_end_markers = 0;
    std::size_t stray_events = 0;       // non-marker events outside any bracket

    /// Closed brackets that failed validation.
    std::size_t discarded_sequences() const noexcept { return too_short + context_changed; }

    ExtractionStats& operator+=(const ExtractionStats& other);
    friend bool operator==(const ExtractionStats&, const ExtractionStats&) = default;
};

struct ExtractionResult {
    std::vector<InteractionSequence> sequences;
    ExtractionStats stats;
};

/// Scans one user's time-ordered stream left to right.
///
/// A begin marker opens a bracket (dropping any bracket already open); an end
/// marker closes it. A closed bracket is kept only if it has at least two inner
/// events and every event shares the begin event's context.
ExtractionResult extract_valid_sequences(std::span<const InteractionEvent> events,
                                         const ElementVocabulary& vocabulary);

/// Runs the extractor over every user, ascending by user id.
ExtractionResult extract_all(const UserEventStreams& streams, const ElementVocabulary& vocabulary);

struct CorpusStats {
    std::size_t total_sequences = 0;
    std::size_t user_count = 0;
    double mean_sequences_per_user = 0.0;
    std::size_t median_inner_length = 0;  // lower middle for even counts
    std::size_t event_count = 0;          // markers included

    friend bool operator==(const CorpusStats&, const CorpusStats&) = default;
};

CorpusStats corpus_stats(std::span<const InteractionSequence> sequences);

nlohmann::json to_json(const InteractionSequence& seq);
InteractionSequence sequence_from_json(const nlohmann::json& doc, const ElementVocabulary& vocabulary);

nlohmann::json to_json(const ExtractionStats& stats);
nlohmann::json to_json(const CorpusStats& stats);

void write_sequence_corpus(std::ostream& out, std::span<const InteractionSequence> sequences);

/// Reads a sequence corpus; every line is validated against `vocabulary`.
std::vector<InteractionSequence> read_sequence_corpus(std::istream& in, const ElementVocabulary& vocabulary);
std::vector<InteractionSequence> read_sequence_corpus_file(const std::string& path,
                                                           const ElementVocabulary& vocabulary);

}  // namespace ahmi
