#include "ahmi/sequence_extractor.hpp"

#include <algorithm>
#include <istream>
#include <map>
#include <ostream>

#include <nlohmann/json.hpp>

#include "ahmi/file_io.hpp"

namespace ahmi {

using nlohmann::json;

ExtractionStats& ExtractionStats::operator+=(const ExtractionStats& o) {
    input_events += o.input_events;
    emitted_events += o.emitted_events;
    discarded_events += o.discarded_events;
    sequences += o.sequences;
    too_short += o.too_short;
    context_changed += o.context_changed;
    restarted_brackets += o.restarted_brackets;
    unterminated += o.unterminated;
    stray_end_markers += o.stray_end_markers;
    stray_events += o.stray_events;
    return *this;
}

void validate_sequence(const InteractionSequence& seq, const ElementVocabulary& vocabulary) {
    if (seq.events.size() < kMinInnerLength + 2) {
        throw DataError("sequence of user '" + seq.user_id + "' has fewer than 2 inner events");
    }
    if (seq.events.front() != vocabulary.begin_marker() || seq.events.back() != vocabulary.end_marker()) {
        throw DataError("sequence of user '" + seq.user_id + "' is not bracketed by the markers");
    }
    for (std::size_t i = 1; i + 1 < seq.events.size(); ++i) {
        const auto& e = seq.events[i];
        if (vocabulary.is_marker(e)) {
            throw DataError("sequence of user '" + seq.user_id + "' has a marker inside the bracket");
        }
        if (!vocabulary.contains(e)) {
            throw DataError("sequence of user '" + seq.user_id + "' has unknown element '" + e.str() + "'");
        }
    }
    if (seq.start_ms > seq.end_ms) {
        throw DataError("sequence of user '" + seq.user_id + "' ends before it starts");
    }
}

ExtractionResult extract_valid_sequences(std::span<const InteractionEvent> events,
                                         const ElementVocabulary& vocabulary) {
    ExtractionResult result;
    auto& stats = result.stats;
    stats.input_events = events.size();

    std::vector<const InteractionEvent*> open;
    const auto drop_open = [&] {
        stats.discarded_events += open.size();
        open.clear();
    };

    for (const auto& event : events) {
        if (event.element == vocabulary.begin_marker()) {
            if (!open.empty()) {
                ++stats.restarted_brackets;
                drop_open();
            }
            open.push_back(&event);
        } else if (event.element == vocabulary.end_marker()) {
            if (open.empty()) {
                ++stats.stray_end_markers;
                ++stats.discarded_events;
                continue;
            }
            open.push_back(&event);
            const auto& context = open.front()->context;
            const bool same_context = std::all_of(open.begin(), open.end(),
                                                  [&](const auto* e) { return e->context == context; });
            if (open.size() < kMinInnerLength + 2) {
                ++stats.too_short;
                drop_open();
            } else if (!same_context) {
                ++stats.context_changed;
                drop_open();
            } else {
                InteractionSequence seq;
                seq.user_id = open.front()->user_id;
                seq.context = context;
                seq.start_ms = open.front()->timestamp_ms;
                seq.end_ms = open.back()->timestamp_ms;
                seq.events.reserve(open.size());
                for (const auto* e : open) {
                    seq.events.push_back(e->element);
                }
                stats.emitted_events += open.size();
                ++stats.sequences;
                result.sequences.push_back(std::move(seq));
                open.clear();
            }
        } else if (!open.empty()) {
            open.push_back(&event);
        } else {
            ++stats.stray_events;
            ++stats.discarded_events;
        }
    }
    if (!open.empty()) {
        ++stats.unterminated;
        drop_open();
    }
    return result;
}

ExtractionResult extract_all(const UserEventStreams& streams, const ElementVocabulary& vocabulary) {
    ExtractionResult all;
    for (const auto& [user, events] : streams) {
        auto part = extract_valid_sequences(events, vocabulary);
        all.stats += part.stats;
        std::move(part.sequences.begin(), part.sequences.end(), std::back_inserter(all.sequences));
    }
    return all;
}

CorpusStats corpus_stats(std::span<const InteractionSequence> sequences) {
    CorpusStats stats;
    if (sequences.empty()) {
        return stats;
    }
    std::map<std::string, std::size_t> per_user;
    std::vector<std::size_t> lengths;
    lengths.reserve(sequences.size());
    for (const auto& seq : sequences) {
        ++per_user[seq.user_id];
        lengths.push_back(seq.inner_length());
        stats.event_count += seq.events.size();
    }
    stats.total_sequences = sequences.size();
    stats.user_count = per_user.size();
    stats.mean_sequences_per_user =
        static_cast<double>(stats.total_sequences) / static_cast<double>(stats.user_count);
    const auto mid = lengths.begin() + static_cast<std::ptrdiff_t>((lengths.size() - 1) / 2);
    std::nth_element(lengths.begin(), mid, lengths.end());
    stats.median_inner_length = *mid;
    return stats;
}

json to_json(const InteractionSequence& seq) {
    json events = json::array();
    for (const auto& e : seq.events) {
        events.push_back(e.str());
    }
    return json{{"user_id", seq.user_id},
                {"role", seq.context.role},
                {"shift", seq.context.shift},
                {"events", std::move(events)},
                {"start_ms", seq.start_ms},
                {"end_ms", seq.end_ms}};
}

InteractionSequence sequence_from_json(const json& doc, const ElementVocabulary& vocabulary) {
    InteractionSequence seq;
    try {
        seq.user_id = doc.at("user_id").get<std::string>();
        seq.context.role = doc.at("role").get<std::string>();
        seq.context.shift = doc.at("shift").get<std::string>();
        for (const auto& e : doc.at("events")) {
            seq.events.emplace_back(e.get<std::string>());
        }
        if (!doc.at("start_ms").is_number_integer() || !doc.at("end_ms").is_number_integer()) {
            throw DataError("sequence timestamps must be integers");
        }
        seq.start_ms = doc.at("start_ms").get<std::int64_t>();
        seq.end_ms = doc.at("end_ms").get<std::int64_t>();
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed sequence record: ") + e.what());
    }
    validate_sequence(seq, vocabulary);
    return seq;
}

json to_json(const ExtractionStats& s) {
    return json{{"input_events", s.input_events},
                {"emitted_events", s.emitted_events},
                {"discarded_events", s.discarded_events},
                {"sequences", s.sequences},
                {"discarded_sequences", s.discarded_sequences()},
                {"too_short", s.too_short},
                {"context_changed", s.context_changed},
                {"restarted_brackets", s.restarted_brackets},
                {"unterminated", s.unterminated},
                {"stray_end_markers", s.stray_end_markers},
                {"stray_events", s.stray_events}};
}

json to_json(const CorpusStats& s) {
    return json{{"total_sequences", s.total_sequences},
                {"user_count", s.user_count},
                {"mean_sequences_per_user", s.mean_sequences_per_user},
                {"median_inner_length", s.median_inner_length},
                {"event_count", s.event_count}};
}

void write_sequence_corpus(std::ostream& out, std::span<const InteractionSequence> sequences) {
    for (const auto& seq : sequences) {
        out << to_json(seq).dump() << '\n';
    }
}

std::vector<InteractionSequence> read_sequence_corpus(std::istream& in, const ElementVocabulary& vocabulary) {
    std::vector<InteractionSequence> out;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        auto doc = json::parse(line, nullptr, false);
        if (doc.is_discarded() || !doc.is_object()) {
            throw DataError("sequence corpus line " + std::to_string(line_number) + ": not a JSON object");
        }
        try {
            out.push_back(sequence_from_json(doc, vocabulary));
        } catch (const DataError& e) {
            throw DataError("sequence corpus line " + std::to_string(line_number) + ": " + e.what());
        }
    }
    return out;
}

std::vector<InteractionSequence> read_sequence_corpus_file(const std::string& path,
                                                           const ElementVocabulary& vocabulary) {
    auto in = open_input_file(path);
    return read_sequence_corpus(in, vocabulary);
}

}  // namespace ahmi
