#include "ahmi/markov_recommender.hpp"

#include <algorithm>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "ahmi/file_io.hpp"

namespace ahmi {

using nlohmann::json;

namespace {

constexpr std::string_view kStoreFormat = "ahmi.markov_store";
constexpr std::string_view kModelFormat = "ahmi.markov_model";

json counts_to_json(const MarkovModel& model) {
    json rows = json::array();
    for (const auto& [state, row] : model.transitions()) {
        json ids = json::array();
        for (const auto& e : state) {
            ids.push_back(e.str());
        }
        json next = json::object();
        for (const auto& [element, count] : row.next) {
            next[element.str()] = count;
        }
        rows.push_back(json{{"state", std::move(ids)}, {"next", std::move(next)}});
    }
    return json{{"order", model.order()},
                {"training_sequences", model.training_sequences()},
                {"transitions", std::move(rows)}};
}

MarkovModel model_from_counts_json(const json& doc, const ElementVocabulary& vocabulary) {
    try {
        const auto order = doc.at("order").get<std::size_t>();
        TransitionTable table;
        for (const auto& entry : doc.at("transitions")) {
            State state;
            for (const auto& e : entry.at("state")) {
                state.emplace_back(e.get<std::string>());
            }
            TransitionRow row;
            for (const auto& [element, count] : entry.at("next").items()) {
                const auto c = count.get<std::uint64_t>();
                row.next.emplace(ElementId(element), c);
                row.total += c;
            }
            if (!table.emplace(std::move(state), std::move(row)).second) {
                throw DataError("duplicate state in snapshot");
            }
        }
        return MarkovModel::from_counts(order, vocabulary, std::move(table),
                                        doc.at("training_sequences").get<std::size_t>());
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed model snapshot: ") + e.what());
    }
}

void check_snapshot_header(const json& doc, std::string_view format) {
    if (!doc.is_object() || doc.value("format", "") != format) {
        throw DataError("not a " + std::string(format) + " snapshot");
    }
    if (doc.value("version", 0) != kSnapshotVersion) {
        throw DataError("unsupported snapshot version");
    }
}

}  // namespace

double TransitionRow::probability(const ElementId& element) const {
    const auto it = next.find(element);
    if (it == next.end() || total == 0) {
        return 0.0;
    }
    return static_cast<double>(it->second) / static_cast<double>(total);
}

MarkovModel::MarkovModel(std::size_t order, ElementVocabulary vocabulary)
    : order_(order), vocabulary_(std::move(vocabulary)), tables_(order + 1) {}

MarkovModel MarkovModel::train(std::span<const InteractionSequence> sequences, std::size_t order,
                               const ElementVocabulary& vocabulary) {
    if (order < 1) {
        throw std::invalid_argument("Markov order must be >= 1");
    }
    if (sequences.empty()) {
        throw std::invalid_argument("empty training corpus");
    }
    MarkovModel model(order, vocabulary);
    auto& top = model.tables_[order];

    // Sliding window over [begin x order, e_1, e_2, ...].
    State window(order, vocabulary.begin_marker());
    for (const auto& seq : sequences) {
        validate_sequence(seq, vocabulary);
        std::fill(window.begin(), window.end(), vocabulary.begin_marker());
        for (std::size_t i = 1; i < seq.events.size(); ++i) {
            std::shift_left(window.begin(), window.end(), 1);
            window.back() = seq.events[i - 1];
            auto& row = top[window];
            ++row.next[seq.events[i]];
            ++row.total;
        }
    }
    model.training_sequences_ = sequences.size();
    model.derive_lower_orders();
    return model;
}

MarkovModel MarkovModel::from_counts(std::size_t order, ElementVocabulary vocabulary, TransitionTable counts,
                                     std::size_t training_sequences) {
    if (order < 1) {
        throw DataError("Markov order must be >= 1");
    }
    MarkovModel model(order, std::move(vocabulary));
    for (const auto& [state, row] : counts) {
        if (state.size() != order) {
            throw DataError("state length does not match model order");
        }
        for (const auto& e : state) {
            if (!model.vocabulary_.contains(e)) {
                throw DataError("state element '" + e.str() + "' not in vocabulary");
            }
        }
        std::uint64_t total = 0;
        for (const auto& [element, count] : row.next) {
            if (count == 0) {
                throw DataError("zero count stored for a transition");
            }
            if (!model.vocabulary_.contains(element)) {
                throw DataError("successor '" + element.str() + "' not in vocabulary");
            }
            total += count;
        }
        if (total != row.total || total == 0) {
            throw DataError("row total does not match successor counts");
        }
    }
    model.tables_[order] = std::move(counts);
    model.training_sequences_ = training_sequences;
    model.derive_lower_orders();
    return model;
}

void MarkovModel::derive_lower_orders() {
    const auto& top = tables_[order_];
    total_transitions_ = 0;
    for (std::size_t j = 0; j < order_; ++j) {
        tables_[j].clear();
    }
    for (const auto& [state, row] : top) {
        total_transitions_ += row.total;
        for (std::size_t j = 0; j < order_; ++j) {
            State suffix(state.end() - static_cast<std::ptrdiff_t>(j), state.end());
            auto& lower = tables_[j][suffix];
            lower.total += row.total;
            for (const auto& [element, count] : row.next) {
                lower.next[element] += count;
            }
        }
    }
}

const TransitionTable& MarkovModel::table(std::size_t order) const {
    if (order > order_) {
        throw std::out_of_range("requested table order exceeds model order");
    }
    return tables_[order];
}

const TransitionRow* MarkovModel::find(std::span<const ElementId> state) const {
    if (state.size() > order_) {
        return nullptr;
    }
    const auto& t = tables_[state.size()];
    const auto it = t.find(State(state.begin(), state.end()));
    return it == t.end() ? nullptr : &it->second;
}

double MarkovModel::transition_probability(std::span<const ElementId> state, const ElementId& next) const {
    if (state.size() != order_) {
        throw std::invalid_argument("state length " + std::to_string(state.size()) +
                                    " does not match model order " + std::to_string(order_));
    }
    const auto* row = find(state);
    return row ? row->probability(next) : 0.0;
}

State MarkovModel::state_for(std::span<const ElementId> history, std::size_t order) const {
    State state(order, vocabulary_.begin_marker());
    const auto take = std::min(order, history.size());
    std::copy(history.end() - static_cast<std::ptrdiff_t>(take), history.end(),
              state.end() - static_cast<std::ptrdiff_t>(take));
    return state;
}

std::vector<RankedItem> rank_successors(const TransitionRow& row, std::size_t k) {
    std::vector<RankedItem> items;
    items.reserve(row.next.size());
    for (const auto& [element, count] : row.next) {
        items.push_back(RankedItem{element, row.probability(element), count, 0});
    }
    // Within one row probability order equals count order, so comparing counts
    // avoids floating-point ties; the map already yields ascending ids.
    const auto take = std::min(k, items.size());
    std::partial_sort(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(take), items.end(),
                      [](const RankedItem& a, const RankedItem& b) {
                          if (a.count != b.count) {
                              return a.count > b.count;
                          }
                          return a.element < b.element;
                      });
    items.resize(take);
    for (std::size_t i = 0; i < items.size(); ++i) {
        items[i].rank = i + 1;
    }
    return items;
}

RankedRecommendation MarkovModel::recommend(std::span<const ElementId> history, std::size_t k,
                                            bool backoff) const {
    if (k < 1) {
        throw std::invalid_argument("k must be >= 1");
    }
    for (const auto& e : history) {
        if (!vocabulary_.contains(e)) {
            throw std::invalid_argument("history element '" + e.str() + "' not in vocabulary");
        }
    }
    RankedRecommendation out;
    const auto full = state_for(history, order_);
    for (std::size_t j = order_ + 1; j-- > 0;) {
        const auto* row = find(std::span<const ElementId>(full).last(j));
        if (row != nullptr) {
            out.items = rank_successors(*row, k);
            out.source_order = j;
            out.backed_off = j != order_;
            return out;
        }
        if (!backoff) {
            break;
        }
    }
    out.source_order = order_;
    return out;
}

std::string_view to_string(ModelTier tier) noexcept {
    switch (tier) {
        case ModelTier::context: return "context";
        case ModelTier::role: return "role";
        case ModelTier::global: return "global";
    }
    return "global";
}

ContextModelStore build_context_store(std::span<const InteractionSequence> sequences, std::size_t order,
                                      std::size_t min_support, const ElementVocabulary& vocabulary,
                                      bool context_mode) {
    ContextModelStore store{MarkovModel::train(sequences, order, vocabulary), {}, {}, order, min_support,
                            context_mode};
    if (!context_mode) {
        return store;
    }
    std::map<ContextAttributes, std::vector<InteractionSequence>> by_context;
    std::map<std::string, std::vector<InteractionSequence>> by_role;
    for (const auto& seq : sequences) {
        by_context[seq.context].push_back(seq);
        by_role[seq.context.role].push_back(seq);
    }
    for (const auto& [context, part] : by_context) {
        if (part.size() >= min_support) {
            store.per_context.emplace(context, MarkovModel::train(part, order, vocabulary));
        }
    }
    for (const auto& [role, part] : by_role) {
        if (part.size() >= min_support) {
            store.per_role.emplace(role, MarkovModel::train(part, order, vocabulary));
        }
    }
    return store;
}

ModelSelection select_model(const ContextModelStore& store, const ContextAttributes& context) {
    if (const auto it = store.per_context.find(context); it != store.per_context.end()) {
        return {&it->second, ModelTier::context};
    }
    if (const auto it = store.per_role.find(context.role); it != store.per_role.end()) {
        return {&it->second, ModelTier::role};
    }
    return {&store.global_model, ModelTier::global};
}

json to_json(const MarkovModel& model) {
    json doc{{"format", kModelFormat}, {"version", kSnapshotVersion}, {"vocabulary", to_json(model.vocabulary())}};
    doc.update(counts_to_json(model));
    return doc;
}

MarkovModel model_from_json(const json& doc) {
    check_snapshot_header(doc, kModelFormat);
    const auto vocab = vocabulary_from_json(doc.at("vocabulary")).vocabulary;
    return model_from_counts_json(doc, vocab);
}

json to_json(const ContextModelStore& store) {
    json contexts = json::array();
    for (const auto& [context, model] : store.per_context) {
        contexts.push_back(json{{"role", context.role}, {"shift", context.shift}, {"model", counts_to_json(model)}});
    }
    json roles = json::array();
    for (const auto& [role, model] : store.per_role) {
        roles.push_back(json{{"role", role}, {"model", counts_to_json(model)}});
    }
    return json{{"format", kStoreFormat},
                {"version", kSnapshotVersion},
                {"order", store.order},
                {"min_support", store.min_support},
                {"context_mode", store.context_mode},
                {"vocabulary", to_json(store.global_model.vocabulary())},
                {"global", counts_to_json(store.global_model)},
                {"per_context", std::move(contexts)},
                {"per_role", std::move(roles)}};
}

ContextModelStore store_from_json(const json& doc) {
    check_snapshot_header(doc, kStoreFormat);
    try {
        const auto vocab = vocabulary_from_json(doc.at("vocabulary")).vocabulary;
        ContextModelStore store{model_from_counts_json(doc.at("global"), vocab),
                                {},
                                {},
                                doc.at("order").get<std::size_t>(),
                                doc.at("min_support").get<std::size_t>(),
                                doc.at("context_mode").get<bool>()};
        for (const auto& entry : doc.at("per_context")) {
            ContextAttributes context{entry.at("role").get<std::string>(), entry.at("shift").get<std::string>()};
            store.per_context.emplace(std::move(context), model_from_counts_json(entry.at("model"), vocab));
        }
        for (const auto& entry : doc.at("per_role")) {
            store.per_role.emplace(entry.at("role").get<std::string>(),
                                   model_from_counts_json(entry.at("model"), vocab));
        }
        return store;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed store snapshot: ") + e.what());
    }
}

void save_store_snapshot(const std::string& path, const ContextModelStore& store) {
    write_text_file(path, to_json(store).dump(1) + "\n");
}

ContextModelStore load_store_snapshot(const std::string& path) {
    auto doc = json::parse(read_text_file(path), nullptr, false);
    if (doc.is_discarded()) {
        throw DataError("model snapshot is not valid JSON: " + path);
    }
    return store_from_json(doc);
}

}  // namespace ahmi
