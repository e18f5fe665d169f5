#include "ahmi/event_model.hpp"

#include <algorithm>
#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "ahmi/file_io.hpp"

namespace ahmi {

using nlohmann::json;

namespace {

bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool in_list(const std::vector<std::string>& allowed, const std::string& value) {
    return allowed.empty() || std::find(allowed.begin(), allowed.end(), value) != allowed.end();
}

RecordCheck reject(RejectReason reason, std::string detail) {
    RecordCheck check;
    check.rejection = RecordRejection{reason, std::move(detail)};
    return check;
}

std::vector<std::string> string_list(const json& doc, const char* key) {
    std::vector<std::string> out;
    if (!doc.contains(key)) {
        return out;
    }
    const auto& arr = doc.at(key);
    if (!arr.is_array()) {
        throw DataError(std::string("vocabulary field '") + key + "' must be an array");
    }
    for (const auto& item : arr) {
        if (!item.is_string() || item.get_ref<const std::string&>().empty()) {
            throw DataError(std::string("vocabulary field '") + key + "' must hold non-empty strings");
        }
        out.push_back(item.get<std::string>());
    }
    return out;
}

}  // namespace

ElementId::ElementId(std::string id) : id_(std::move(id)) {
    if (!is_valid(id_)) {
        throw DataError("invalid element id '" + id_ + "'");
    }
}

bool ElementId::is_valid(std::string_view id) noexcept {
    return !id.empty() && !is_space(id.front()) && !is_space(id.back());
}

std::ostream& operator<<(std::ostream& os, const ElementId& id) {
    return os << id.str();
}

ElementVocabulary::ElementVocabulary(std::set<ElementId> elements, ElementId begin_marker,
                                     ElementId end_marker)
    : elements_(std::move(elements)), begin_(std::move(begin_marker)), end_(std::move(end_marker)) {
    if (begin_ == end_) {
        throw DataError("begin and end markers must differ");
    }
    if (!elements_.contains(begin_) || !elements_.contains(end_)) {
        throw DataError("vocabulary must contain both markers");
    }
    if (elements_.size() < 3) {
        throw DataError("vocabulary needs at least one action element besides the markers");
    }
}

bool ElementVocabulary::contains(std::string_view id) const {
    if (!ElementId::is_valid(id)) {
        return false;
    }
    return elements_.contains(ElementId(std::string(id)));
}

std::vector<ElementId> ElementVocabulary::action_elements() const {
    std::vector<ElementId> out;
    out.reserve(elements_.size());
    for (const auto& e : elements_) {
        if (!is_marker(e)) {
            out.push_back(e);
        }
    }
    return out;
}

bool ContextSchema::allows(const ContextAttributes& context) const {
    return !context.role.empty() && !context.shift.empty() && in_list(roles, context.role) &&
           in_list(shifts, context.shift);
}

std::string_view to_string(RejectReason reason) noexcept {
    switch (reason) {
        case RejectReason::malformed: return "malformed";
        case RejectReason::missing_field: return "missing_field";
        case RejectReason::bad_field_type: return "bad_field_type";
        case RejectReason::invalid_element_id: return "invalid_element_id";
        case RejectReason::unknown_element: return "unknown_element";
        case RejectReason::invalid_context: return "invalid_context";
    }
    return "unknown";
}

RecordCheck parse_event_record(const json& record, const ElementVocabulary& vocabulary,
                               const ContextSchema* schema) {
    if (!record.is_object()) {
        return reject(RejectReason::malformed, "record is not a JSON object");
    }
    for (const char* key : {"user_id", "element_id", "timestamp_ms", "role", "shift"}) {
        if (!record.contains(key)) {
            return reject(RejectReason::missing_field, std::string("missing field '") + key + "'");
        }
    }
    for (const char* key : {"user_id", "element_id", "role", "shift"}) {
        if (!record.at(key).is_string()) {
            return reject(RejectReason::bad_field_type, std::string("field '") + key + "' must be a string");
        }
    }
    if (!record.at("timestamp_ms").is_number_integer()) {
        return reject(RejectReason::bad_field_type, "field 'timestamp_ms' must be an integer");
    }
    const auto& ts = record.at("timestamp_ms");
    if (ts.is_number_unsigned() && ts.get<std::uint64_t>() > static_cast<std::uint64_t>(INT64_MAX)) {
        return reject(RejectReason::bad_field_type, "field 'timestamp_ms' out of range");
    }

    InteractionEvent event;
    event.user_id = record.at("user_id").get<std::string>();
    if (event.user_id.empty()) {
        return reject(RejectReason::bad_field_type, "field 'user_id' must be non-empty");
    }
    const auto& element = record.at("element_id").get_ref<const std::string&>();
    if (!ElementId::is_valid(element)) {
        return reject(RejectReason::invalid_element_id, "invalid element id '" + element + "'");
    }
    event.element = ElementId(element);
    if (!vocabulary.contains(event.element)) {
        return reject(RejectReason::unknown_element, "unknown element '" + element + "'");
    }
    event.timestamp_ms = ts.get<std::int64_t>();
    event.context.role = record.at("role").get<std::string>();
    event.context.shift = record.at("shift").get<std::string>();
    const ContextSchema any;
    if (!(schema ? *schema : any).allows(event.context)) {
        return reject(RejectReason::invalid_context,
                      "context (" + event.context.role + ", " + event.context.shift + ") not allowed");
    }

    RecordCheck check;
    check.event = std::move(event);
    return check;
}

RecordCheck parse_event_line(std::string_view line, const ElementVocabulary& vocabulary,
                             const ContextSchema* schema) {
    auto doc = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (doc.is_discarded()) {
        return reject(RejectReason::malformed, "line is not valid JSON");
    }
    return parse_event_record(doc, vocabulary, schema);
}

json to_json(const InteractionEvent& event) {
    return json{{"user_id", event.user_id},
                {"element_id", event.element.str()},
                {"timestamp_ms", event.timestamp_ms},
                {"role", event.context.role},
                {"shift", event.context.shift}};
}

std::string to_json_line(const InteractionEvent& event) {
    return to_json(event).dump();
}

IngestError::IngestError(std::size_t line_number, const RecordRejection& rejection)
    : DataError("line " + std::to_string(line_number) + ": " + std::string(to_string(rejection.reason)) +
                ": " + rejection.detail),
      line_number_(line_number),
      reason_(rejection.reason) {}

IngestResult ingest_event_log(std::istream& source, const ElementVocabulary& vocabulary,
                              const IngestOptions& options) {
    IngestResult result;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(source, line)) {
        ++line_number;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (std::all_of(line.begin(), line.end(), is_space)) {
            continue;
        }
        auto check = parse_event_line(line, vocabulary, options.schema);
        if (!check) {
            if (options.strict) {
                throw IngestError(line_number, *check.rejection);
            }
            ++result.skipped_count;
            result.skipped.push_back({line_number, std::move(*check.rejection)});
            continue;
        }
        auto& event = *check.event;
        result.streams[event.user_id].push_back(std::move(event));
        ++result.accepted_count;
    }
    if (source.bad()) {
        throw DataError("error reading event log");
    }
    // Stable sort keeps ingestion order for equal timestamps.
    for (auto& [user, events] : result.streams) {
        std::stable_sort(events.begin(), events.end(), [](const auto& a, const auto& b) {
            return a.timestamp_ms < b.timestamp_ms;
        });
    }
    return result;
}

IngestResult ingest_event_log_file(const std::string& path, const ElementVocabulary& vocabulary,
                                   const IngestOptions& options) {
    auto in = open_input_file(path);
    return ingest_event_log(in, vocabulary, options);
}

void write_event_log(std::ostream& out, const UserEventStreams& streams) {
    for (const auto& [user, events] : streams) {
        for (const auto& event : events) {
            out << to_json_line(event) << '\n';
        }
    }
}

VocabularyFile vocabulary_from_json(const json& doc) {
    if (!doc.is_object()) {
        throw DataError("vocabulary document must be a JSON object");
    }
    for (const char* key : {"begin_marker", "end_marker"}) {
        if (!doc.contains(key) || !doc.at(key).is_string()) {
            throw DataError(std::string("vocabulary field '") + key + "' must be a string");
        }
    }
    std::set<ElementId> elements;
    for (auto& id : string_list(doc, "elements")) {
        elements.insert(ElementId(std::move(id)));
    }
    ElementId begin(doc.at("begin_marker").get<std::string>());
    ElementId end(doc.at("end_marker").get<std::string>());
    // Markers are implicitly members even if the file does not list them.
    elements.insert(begin);
    elements.insert(end);
    return VocabularyFile{ElementVocabulary(std::move(elements), std::move(begin), std::move(end)),
                          ContextSchema{string_list(doc, "roles"), string_list(doc, "shifts")}};
}

json to_json(const ElementVocabulary& vocabulary, const ContextSchema& schema) {
    json elements = json::array();
    for (const auto& e : vocabulary.elements()) {
        elements.push_back(e.str());
    }
    json doc{{"begin_marker", vocabulary.begin_marker().str()},
             {"end_marker", vocabulary.end_marker().str()},
             {"elements", std::move(elements)}};
    if (!schema.roles.empty()) {
        doc["roles"] = schema.roles;
    }
    if (!schema.shifts.empty()) {
        doc["shifts"] = schema.shifts;
    }
    return doc;
}

VocabularyFile load_vocabulary_file(const std::string& path) {
    auto doc = json::parse(read_text_file(path), nullptr, false);
    if (doc.is_discarded()) {
        throw DataError("vocabulary file is not valid JSON: " + path);
    }
    return vocabulary_from_json(doc);
}

}  // namespace ahmi
