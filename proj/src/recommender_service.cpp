#include "ahmi/recommender_service.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <sstream>

#include <httplib.h>

#include "ahmi/file_io.hpp"
#include "ahmi/sequence_extractor.hpp"

namespace ahmi {

using nlohmann::json;

namespace {

json field_error(std::string field, std::string error) {
    return json{{"field", std::move(field)}, {"error", std::move(error)}};
}

ServiceResponse validation_error(json fields) {
    return {400, json{{"error", "validation_error"}, {"fields", std::move(fields)}}};
}

std::optional<std::size_t> positive_int(const json& body, const char* key, json& errors) {
    if (!body.contains(key)) {
        return std::nullopt;
    }
    const auto& v = body.at(key);
    if (!v.is_number_integer() || v.get<std::int64_t>() < 1) {
        errors.push_back(field_error(key, "must be an integer >= 1"));
        return std::nullopt;
    }
    return v.get<std::size_t>();
}

std::optional<bool> boolean(const json& body, const char* key, json& errors) {
    if (!body.contains(key)) {
        return std::nullopt;
    }
    if (!body.at(key).is_boolean()) {
        errors.push_back(field_error(key, "must be a boolean"));
        return std::nullopt;
    }
    return body.at(key).get<bool>();
}

json tier_summary(const ContextModelStore& store) {
    json contexts = json::array();
    for (const auto& [context, model] : store.per_context) {
        contexts.push_back(
            json{{"role", context.role}, {"shift", context.shift}, {"sequences", model.training_sequences()}});
    }
    json roles = json::array();
    for (const auto& [role, model] : store.per_role) {
        roles.push_back(json{{"role", role}, {"sequences", model.training_sequences()}});
    }
    return json{{"global", store.global_model.training_sequences()},
                {"per_context", std::move(contexts)},
                {"per_role", std::move(roles)}};
}

}  // namespace

ServiceConfig service_config_from_json(const json& doc, ServiceConfig base) {
    if (!doc.is_object()) {
        throw DataError("service config must be a JSON object");
    }
    try {
        if (doc.contains("host")) base.host = doc.at("host").get<std::string>();
        if (doc.contains("port")) base.port = doc.at("port").get<int>();
        if (doc.contains("store_path")) base.store_path = doc.at("store_path").get<std::string>();
        if (doc.contains("vocabulary_path")) base.vocabulary_path = doc.at("vocabulary_path").get<std::string>();
        if (doc.contains("model_path")) base.model_path = doc.at("model_path").get<std::string>();
        if (doc.contains("order")) base.default_order = doc.at("order").get<std::size_t>();
        if (doc.contains("k")) base.default_k = doc.at("k").get<std::size_t>();
        if (doc.contains("min_support")) base.default_min_support = doc.at("min_support").get<std::size_t>();
        if (doc.contains("context_mode")) base.default_context_mode = doc.at("context_mode").get<bool>();
        if (doc.contains("backoff")) base.backoff = doc.at("backoff").get<bool>();
        if (doc.contains("surface_end_marker")) base.surface_end_marker = doc.at("surface_end_marker").get<bool>();
    } catch (const json::exception& e) {
        throw DataError(std::string("service config: ") + e.what());
    }
    return base;
}

EventStore::EventStore(std::string path) : path_(std::move(path)) {}

void EventStore::append(const std::vector<std::string>& lines) {
    if (lines.empty()) {
        return;
    }
    std::string buffer;
    for (const auto& line : lines) {
        buffer += line;
        buffer += '\n';
    }
    std::lock_guard lock(mutex_);
    const int fd = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd < 0) {
        throw FileError(std::string("cannot open event store (") + std::strerror(errno) + ")", path_);
    }
    const off_t original_size = ::lseek(fd, 0, SEEK_END);
    std::size_t written = 0;
    while (written < buffer.size()) {
        const auto n = ::write(fd, buffer.data() + written, buffer.size() - written);
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            const int err = errno;
            // Roll back a partial append so the store only holds whole records.
            if (original_size >= 0) {
                [[maybe_unused]] const int rc = ::ftruncate(fd, original_size);
            }
            ::close(fd);
            throw FileError(std::string("cannot append to event store (") + std::strerror(err) + ")", path_);
        }
        written += static_cast<std::size_t>(n);
    }
    const bool synced = ::fsync(fd) == 0;
    ::close(fd);
    if (!synced) {
        throw FileError("cannot sync event store", path_);
    }
}

std::string EventStore::snapshot() const {
    std::lock_guard lock(mutex_);
    std::ifstream in(path_, std::ios::binary);
    if (!in) {
        return {};
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

RecommenderService::RecommenderService(ServiceConfig config, VocabularyFile vocabulary)
    : config_(std::move(config)), vocabulary_(std::move(vocabulary)), events_(config_.store_path) {}

std::shared_ptr<const ServingModel> RecommenderService::current() const {
    std::lock_guard lock(model_mutex_);
    return model_;
}

std::string RecommenderService::install(ContextModelStore store, std::size_t event_count,
                                        std::size_t sequence_count) {
    if (!(store.global_model.vocabulary() == vocabulary_.vocabulary)) {
        throw DataError("model vocabulary differs from the service vocabulary");
    }
    auto model = std::make_shared<ServingModel>(ServingModel{std::move(store), {}, event_count, sequence_count});
    std::lock_guard lock(model_mutex_);
    model->version = "v" + std::to_string(next_version_++);
    model_ = std::move(model);
    return model_->version;
}

ServiceResponse RecommenderService::health() const {
    return {200, json{{"status", "ok"}}};
}

ServiceResponse RecommenderService::model_info() const {
    const auto model = current();
    if (!model) {
        return {200, json{{"ready", false}}};
    }
    const auto& store = model->store;
    return {200, json{{"ready", true},
                      {"model_version", model->version},
                      {"order", store.order},
                      {"context_mode", store.context_mode},
                      {"min_support", store.min_support},
                      {"event_count", model->event_count},
                      {"sequence_count", model->sequence_count},
                      {"tiers", tier_summary(store)}}};
}

ServiceResponse RecommenderService::ingest_events(const json& body) {
    if (!body.is_object() || !body.contains("events") || !body.at("events").is_array()) {
        return validation_error(json::array({field_error("events", "must be an array of event records")}));
    }
    const auto& records = body.at("events");
    std::vector<std::string> lines;
    json reasons = json::array();
    for (std::size_t i = 0; i < records.size(); ++i) {
        auto check = parse_event_record(records[i], vocabulary_.vocabulary, &vocabulary_.schema);
        if (check) {
            lines.push_back(to_json_line(*check.event));
        } else {
            reasons.push_back(json{{"index", i},
                                   {"reason", to_string(check.rejection->reason)},
                                   {"detail", check.rejection->detail}});
        }
    }
    try {
        events_.append(lines);
    } catch (const FileError& e) {
        return {500, json{{"error", "storage_failure"}, {"detail", e.what()}}};
    }
    return {200, json{{"accepted", lines.size()}, {"rejected", reasons.size()}, {"reasons", std::move(reasons)}}};
}

ServiceResponse RecommenderService::trigger_retrain(const json& body) {
    if (!body.is_object()) {
        return validation_error(json::array({field_error("body", "must be a JSON object")}));
    }
    json errors = json::array();
    const auto order = positive_int(body, "order", errors).value_or(config_.default_order);
    const auto min_support = positive_int(body, "min_support", errors).value_or(config_.default_min_support);
    const auto context_mode = boolean(body, "context_mode", errors).value_or(config_.default_context_mode);
    if (!errors.empty()) {
        return validation_error(std::move(errors));
    }

    std::lock_guard retrain_lock(retrain_mutex_);
    std::istringstream snapshot(events_.snapshot());
    const auto ingested =
        ingest_event_log(snapshot, vocabulary_.vocabulary, IngestOptions{false, &vocabulary_.schema});
    if (ingested.accepted_count == 0) {
        return {422, json{{"error", "empty_event_store"}}};
    }
    auto extracted = extract_all(ingested.streams, vocabulary_.vocabulary);
    if (extracted.sequences.empty()) {
        return {422, json{{"error", "no_valid_sequences"}, {"extraction", to_json(extracted.stats)}}};
    }
    auto store = build_context_store(extracted.sequences, order, min_support, vocabulary_.vocabulary, context_mode);
    auto tiers = tier_summary(store);
    if (pre_swap_hook_) {
        pre_swap_hook_();
    }
    const auto version = install(std::move(store), ingested.accepted_count, extracted.sequences.size());
    return {200, json{{"model_version", version},
                      {"order", order},
                      {"context_mode", context_mode},
                      {"min_support", min_support},
                      {"event_count", ingested.accepted_count},
                      {"skipped_records", ingested.skipped_count},
                      {"sequence_count", extracted.sequences.size()},
                      {"extraction", to_json(extracted.stats)},
                      {"tiers", std::move(tiers)}}};
}

ServiceResponse RecommenderService::recommend(const json& body) const {
    if (!body.is_object()) {
        return validation_error(json::array({field_error("body", "must be a JSON object")}));
    }
    json errors = json::array();
    ContextAttributes context;
    for (const char* key : {"role", "shift"}) {
        if (!body.contains(key) || !body.at(key).is_string() || body.at(key).get_ref<const std::string&>().empty()) {
            errors.push_back(field_error(key, "must be a non-empty string"));
        }
    }
    if (errors.empty()) {
        context = {body.at("role").get<std::string>(), body.at("shift").get<std::string>()};
    }
    std::vector<ElementId> recent;
    if (!body.contains("recent") || !body.at("recent").is_array() || body.at("recent").empty()) {
        errors.push_back(field_error("recent", "must be a non-empty array of element ids"));
    } else {
        const auto& arr = body.at("recent");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const auto name = "recent[" + std::to_string(i) + "]";
            if (!arr[i].is_string()) {
                errors.push_back(field_error(name, "must be a string"));
            } else if (!vocabulary_.vocabulary.contains(arr[i].get_ref<const std::string&>())) {
                errors.push_back(field_error(name, "unknown element"));
            } else {
                recent.emplace_back(arr[i].get<std::string>());
            }
        }
    }
    const auto k = positive_int(body, "k", errors).value_or(config_.default_k);
    if (!errors.empty()) {
        return validation_error(std::move(errors));
    }

    const auto model = current();
    if (!model) {
        return {409, json{{"error", "model_not_ready"}}};
    }
    const auto selection = select_model(model->store, context);
    const auto& end = vocabulary_.vocabulary.end_marker();
    auto ranked = selection.model->recommend(recent, config_.surface_end_marker ? k : k + 1, config_.backoff);
    if (!config_.surface_end_marker) {
        std::erase_if(ranked.items, [&](const RankedItem& item) { return item.element == end; });
        if (ranked.items.size() > k) {
            ranked.items.resize(k);
        }
        for (std::size_t i = 0; i < ranked.items.size(); ++i) {
            ranked.items[i].rank = i + 1;
        }
    }
    json items = json::array();
    for (const auto& item : ranked.items) {
        items.push_back(json{{"element_id", item.element.str()}, {"score", item.score}, {"rank", item.rank}});
    }
    return {200, json{{"recommendations", std::move(items)},
                      {"model_tier", to_string(selection.tier)},
                      {"model_order", selection.model->order()},
                      {"model_version", model->version}}};
}

HttpServer::HttpServer(RecommenderService& service)
    : service_(service), server_(std::make_unique<httplib::Server>()) {
    const auto reply = [](httplib::Response& res, const ServiceResponse& r) {
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    };
    const auto with_body = [reply](auto handler) {
        return [reply, handler](const httplib::Request& req, httplib::Response& res) {
            auto body = json::parse(req.body, nullptr, false);
            if (body.is_discarded()) {
                reply(res, {400, json{{"error", "malformed_json"}}});
                return;
            }
            reply(res, handler(body));
        };
    };
    server_->Post("/api/events", with_body([this](const json& b) { return service_.ingest_events(b); }));
    server_->Post("/api/train", with_body([this](const json& b) { return service_.trigger_retrain(b); }));
    server_->Post("/api/recommend", with_body([this](const json& b) { return service_.recommend(b); }));
    server_->Get("/api/model", [this, reply](const httplib::Request&, httplib::Response& res) {
        reply(res, service_.model_info());
    });
    server_->Get("/api/health", [this, reply](const httplib::Request&, httplib::Response& res) {
        reply(res, service_.health());
    });
    server_->set_exception_handler([reply](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string what = "unknown error";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            what = e.what();
        } catch (...) {
        }
        reply(res, {500, json{{"error", "internal_error"}, {"detail", what}}});
    });
}

HttpServer::~HttpServer() {
    stop();
}

int HttpServer::start(const std::string& host, int port) {
    int bound = port;
    if (port == 0) {
        bound = server_->bind_to_any_port(host);
    } else if (!server_->bind_to_port(host, port)) {
        bound = -1;
    }
    if (bound < 0) {
        throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
    }
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return bound;
}

void HttpServer::run(const std::string& host, int port) {
    if (!server_->listen(host, port)) {
        throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
    }
}

void HttpServer::stop() {
    if (server_) {
        server_->stop();
    }
    if (thread_.joinable()) {
        thread_.join();
    }
}

}  // namespace ahmi
