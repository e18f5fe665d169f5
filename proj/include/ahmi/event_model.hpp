#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace ahmi {

/// Raised for data that violates the event/log schema.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Stable identifier of one interactive HMI element.
///
/// Non-empty, no surrounding whitespace, compared case-sensitively.
class ElementId {
public:
    ElementId() = default;
    explicit ElementId(std::string id);

    const std::string& str() const noexcept { return id_; }
    bool empty() const noexcept { return id_.empty(); }

    friend auto operator<=>(const ElementId&, const ElementId&) = default;
    friend bool operator==(const ElementId&, const ElementId&) = default;

    static bool is_valid(std::string_view id) noexcept;

private:
    std::string id_;
};

std::ostream& operator<<(std::ostream& os, const ElementId& id);

/// Closed set of known elements including the begin/end markers of a task.
class ElementVocabulary {
public:
    ElementVocabulary(std::set<ElementId> elements, ElementId begin_marker, ElementId end_marker);

    const std::set<ElementId>& elements() const noexcept { return elements_; }
    const ElementId& begin_marker() const noexcept { return begin_; }
    const ElementId& end_marker() const noexcept { return end_; }

    bool contains(const ElementId& id) const { return elements_.contains(id); }
    bool contains(std::string_view id) const;
    bool is_marker(const ElementId& id) const { return id == begin_ || id == end_; }

    /// Elements that are not markers, in lexicographic order.
    std::vector<ElementId> action_elements() const;

    friend bool operator==(const ElementVocabulary&, const ElementVocabulary&) = default;

private:
    std::set<ElementId> elements_;
    ElementId begin_;
    ElementId end_;
};

struct ContextAttributes {
    std::string role;
    std::string shift;

    friend auto operator<=>(const ContextAttributes&, const ContextAttributes&) = default;
    friend bool operator==(const ContextAttributes&, const ContextAttributes&) = default;
};

/// Allowed role/shift values. An empty list accepts any non-empty value.
struct ContextSchema {
    std::vector<std::string> roles;
    std::vector<std::string> shifts;

    bool allows(const ContextAttributes& context) const;
};

struct InteractionEvent {
    std::string user_id;
    ElementId element;
    std::int64_t timestamp_ms = 0;
    ContextAttributes context;

    friend bool operator==(const InteractionEvent&, const InteractionEvent&) = default;
};

/// Events keyed by user id; each list ordered by (timestamp, ingestion index).
using UserEventStreams = std::map<std::string, std::vector<InteractionEvent>>;

/// Why a single log record was not accepted.
enum class RejectReason {
    malformed,
    missing_field,
    bad_field_type,
    invalid_element_id,
    unknown_element,
    invalid_context,
};

std::string_view to_string(RejectReason reason) noexcept;

struct RecordRejection {
    RejectReason reason;
    std::string detail;
};

/// Outcome of validating one record: exactly one of `event` / `rejection` is set.
struct RecordCheck {
    std::optional<InteractionEvent> event;
    std::optional<RecordRejection> rejection;

    explicit operator bool() const noexcept { return event.has_value(); }
};

RecordCheck parse_event_record(const nlohmann::json& record,
                               const ElementVocabulary& vocabulary,
                               const ContextSchema* schema = nullptr);

RecordCheck parse_event_line(std::string_view line,
                             const ElementVocabulary& vocabulary,
                             const ContextSchema* schema = nullptr);

nlohmann::json to_json(const InteractionEvent& event);

/// One JSONL line (without the trailing newline).
std::string to_json_line(const InteractionEvent& event);

struct IngestOptions {
    bool strict = true;
    const ContextSchema* schema = nullptr;
};

struct SkippedLine {
    std::size_t line_number = 0;  // 1-based
    RecordRejection rejection;
};

struct IngestResult {
    UserEventStreams streams;
    std::size_t accepted_count = 0;
    std::size_t skipped_count = 0;
    std::vector<SkippedLine> skipped;
};

/// Raised by strict ingestion on the first invalid line.
class IngestError : public DataError {
public:
    IngestError(std::size_t line_number, const RecordRejection& rejection);

    std::size_t line_number() const noexcept { return line_number_; }
    RejectReason reason() const noexcept { return reason_; }

private:
    std::size_t line_number_;
    RejectReason reason_;
};

/// Reads a JSONL event log. Blank lines are ignored.
IngestResult ingest_event_log(std::istream& source,
                              const ElementVocabulary& vocabulary,
                              const IngestOptions& options = {});

IngestResult ingest_event_log_file(const std::string& path,
                                   const ElementVocabulary& vocabulary,
                                   const IngestOptions& options = {});

/// Writes every stream user by user (ascending user id), one record per line.
void write_event_log(std::ostream& out, const UserEventStreams& streams);

/// Vocabulary file: {"begin_marker", "end_marker", "elements": [...], "roles"?, "shifts"?}.
struct VocabularyFile {
    ElementVocabulary vocabulary;
    ContextSchema schema;
};

VocabularyFile vocabulary_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const ElementVocabulary& vocabulary, const ContextSchema& schema = {});
VocabularyFile load_vocabulary_file(const std::string& path);

}  // namespace ahmi

template <>
struct std::hash<ahmi::ElementId> {
    std::size_t operator()(const ahmi::ElementId& id) const noexcept {
        return std::hash<std::string>{}(id.str());
    }
};
