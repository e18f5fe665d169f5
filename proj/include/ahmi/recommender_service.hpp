#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "ahmi/event_model.hpp"
#include "ahmi/markov_recommender.hpp"

namespace httplib {
class Server;
}

namespace ahmi {

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string store_path = "events.jsonl";
    std::string vocabulary_path;
    /// Optional snapshot loaded at startup.
    std::string model_path;
    std::size_t default_order = 2;
    std::size_t default_k = 3;
    std::size_t default_min_support = kDefaultMinSupport;
    bool default_context_mode = true;
    bool backoff = true;
    /// When false the end marker is removed from responses.
    bool surface_end_marker = true;
};

/// Reads {"host","port","store_path","vocabulary_path","model_path","order","k",
/// "min_support","context_mode","backoff","surface_end_marker"}; absent keys keep defaults.
ServiceConfig service_config_from_json(const nlohmann::json& doc, ServiceConfig base = {});

/// Status + JSON body, transport independent.
struct ServiceResponse {
    int status = 200;
    nlohmann::json body;
};

/// One trained store plus the metadata served alongside it.
struct ServingModel {
    ContextModelStore store;
    std::string version;
    std::size_t event_count = 0;
    std::size_t sequence_count = 0;
};

/// Append-only JSONL event store. Appends are serialized and fsync'ed.
class EventStore {
public:
    explicit EventStore(std::string path);

    /// Appends whole lines in one write; throws FileError on failure.
    void append(const std::vector<std::string>& lines);

    /// Contents as of the call, safe against concurrent appends.
    std::string snapshot() const;

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
    mutable std::mutex mutex_;
};

/// Request handlers behind the HTTP API. Recommendation readers take a
/// shared_ptr to the current model and never see a partially built store;
/// retraining builds off to the side and swaps the pointer under a mutex.
class RecommenderService {
public:
    RecommenderService(ServiceConfig config, VocabularyFile vocabulary);

    ServiceResponse ingest_events(const nlohmann::json& body);
    ServiceResponse trigger_retrain(const nlohmann::json& body);
    ServiceResponse recommend(const nlohmann::json& body) const;
    ServiceResponse model_info() const;
    ServiceResponse health() const;

    /// Installs a trained store (e.g. loaded from a snapshot).
    std::string install(ContextModelStore store, std::size_t event_count, std::size_t sequence_count);

    std::shared_ptr<const ServingModel> current() const;

    /// Test hook run after a retrain is built and before it is swapped in.
    void set_pre_swap_hook(std::function<void()> hook) { pre_swap_hook_ = std::move(hook); }

    const ServiceConfig& config() const noexcept { return config_; }
    const ElementVocabulary& vocabulary() const noexcept { return vocabulary_.vocabulary; }

private:
    ServiceConfig config_;
    VocabularyFile vocabulary_;
    EventStore events_;

    mutable std::mutex model_mutex_;
    std::shared_ptr<const ServingModel> model_;
    std::uint64_t next_version_ = 1;

    std::mutex retrain_mutex_;
    std::function<void()> pre_swap_hook_;
};

/// HTTP front end. `start` binds (port 0 picks a free port) and serves on a
/// background thread; `run` blocks.
class HttpServer {
public:
    explicit HttpServer(RecommenderService& service);
    ~HttpServer();

    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    /// Returns the bound port.
    int start(const std::string& host, int port);
    void run(const std::string& host, int port);
    void stop();

private:
    RecommenderService& service_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
};

}  // namespace ahmi
