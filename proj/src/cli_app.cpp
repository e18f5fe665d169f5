#include "ahmi/cli_app.hpp"

#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ahmi/evaluator.hpp"
#include "ahmi/event_model.hpp"
#include "ahmi/file_io.hpp"
#include "ahmi/markov_recommender.hpp"
#include "ahmi/operator_simulator.hpp"
#include "ahmi/recommender_service.hpp"
#include "ahmi/sequence_extractor.hpp"

namespace ahmi::cli {

using nlohmann::json;

namespace {

/// Missing required path for the chosen subcommand.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string sibling(const std::string& path, const std::string& suffix) {
    std::filesystem::path p(path);
    p.replace_extension();
    return p.string() + suffix;
}

const std::string& require(const std::string& value, const char* flag) {
    if (value.empty()) {
        throw UsageError(std::string("missing required ") + flag);
    }
    return value;
}

json parse_json_file(const std::string& path) {
    auto doc = json::parse(read_text_file(path), nullptr, false);
    if (doc.is_discarded()) {
        throw DataError("not valid JSON: " + path);
    }
    return doc;
}

std::vector<std::size_t> parse_orders(const std::string& text) {
    std::vector<std::size_t> orders;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t pos = 0;
        unsigned long value = 0;
        try {
            value = std::stoul(item, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos != item.size() || value < 1) {
            throw CLI::ValidationError("--orders", "expected a comma-separated list of integers >= 1");
        }
        orders.push_back(value);
    }
    if (orders.empty()) {
        throw CLI::ValidationError("--orders", "empty list");
    }
    return orders;
}

/// Flag values; an option only overrides the config when it was given.
struct Flags {
    std::string config;
    RunConfig values;
    std::string orders;
    std::string out;
    std::string truth;
    std::string vocab_out;
    std::string stats;
    std::size_t users = 0;
    std::size_t sequences_per_user = 0;
    bool lenient = false;
    bool holdout = false;
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string store = "events.jsonl";
    bool hide_end_marker = false;
};

struct Subcommand {
    CLI::App* app;
    std::map<std::string, CLI::Option*> options;

    bool given(const std::string& name) const {
        const auto it = options.find(name);
        return it != options.end() && it->second->count() > 0;
    }
};

RunConfig merge(const Flags& flags, const Subcommand& sub) {
    RunConfig config;
    if (!flags.config.empty()) {
        apply_config_json(config, parse_json_file(flags.config));
    }
    const auto& v = flags.values;
    if (sub.given("--log")) config.event_log = v.event_log;
    if (sub.given("--sequences")) config.sequences = v.sequences;
    if (sub.given("--model")) config.model = v.model;
    if (sub.given("--vocabulary")) config.vocabulary = v.vocabulary;
    if (sub.given("--sim-config")) config.simulation = v.simulation;
    if (sub.given("--orders")) config.orders = parse_orders(flags.orders);
    if (sub.given("--order")) config.order = v.order;
    if (sub.given("--k")) config.k = v.k;
    if (sub.given("--context-mode")) config.context_mode = v.context_mode;
    if (sub.given("--backoff")) config.backoff = v.backoff;
    if (sub.given("--min-support")) config.min_support = v.min_support;
    if (sub.given("--seed")) config.seed = v.seed;
    if (sub.given("--out")) config.report = flags.out;
    return config;
}

VocabularyFile vocabulary_for(const RunConfig& config) {
    return load_vocabulary_file(require(config.vocabulary, "--vocabulary"));
}

void write_report(const std::string& json_path, const EvaluationReport& report, std::ostream& out) {
    write_text_file(json_path, to_json(report).dump(2) + "\n");
    const auto table = format_report_table(report);
    write_text_file(sibling(json_path, ".txt"), table);
    out << table;
}

int cmd_simulate(const Flags& flags, const Subcommand& sub, std::ostream& out) {
    const auto config = merge(flags, sub);
    const auto& log_path = require(flags.out, "--out");
    auto sim = config.simulation.empty() ? default_simulation_config()
                                         : simulation_config_from_json(parse_json_file(config.simulation));
    bool seed_in_config = false;
    if (!flags.config.empty()) {
        seed_in_config = parse_json_file(flags.config).contains("seed");
    }
    if (sub.given("--seed") || seed_in_config) {
        sim.seed = config.seed;
    }
    if (sub.given("--users")) sim.user_count = flags.users;
    if (sub.given("--sequences-per-user")) sim.sequences_per_user = flags.sequences_per_user;

    const auto result = generate_interaction_log(sim);
    std::ostringstream log;
    write_simulation_log(log, result);
    write_text_file(log_path, log.str());
    const auto truth_path = flags.truth.empty() ? sibling(log_path, ".truth.json") : flags.truth;
    write_text_file(truth_path, ground_truth_sidecar(sim, result).dump(1) + "\n");
    const auto vocab_path = flags.vocab_out.empty() ? sibling(log_path, ".vocab.json") : flags.vocab_out;
    write_text_file(vocab_path, to_json(sim.vocabulary, sim.schema).dump(2) + "\n");
    out << "simulated " << result.user_ids.size() << " users, " << result.sequence_count << " sequences, "
        << result.events.size() << " events (seed " << sim.seed << ")\n"
        << "log: " << log_path << "\ntruth: " << truth_path << "\nvocabulary: " << vocab_path << '\n';
    return kExitOk;
}

int cmd_extract(const Flags& flags, const Subcommand& sub, std::ostream& out) {
    const auto config = merge(flags, sub);
    const auto vocab = vocabulary_for(config);
    const auto& out_path = require(flags.out, "--out");
    const auto ingested = ingest_event_log_file(require(config.event_log, "--log"), vocab.vocabulary,
                                                IngestOptions{!flags.lenient, &vocab.schema});
    const auto extracted = extract_all(ingested.streams, vocab.vocabulary);
    std::ostringstream corpus;
    write_sequence_corpus(corpus, extracted.sequences);
    write_text_file(out_path, corpus.str());

    const auto cstats = corpus_stats(extracted.sequences);
    const json stats{{"skipped_records", ingested.skipped_count},
                     {"extraction", to_json(extracted.stats)},
                     {"corpus", to_json(cstats)}};
    const auto stats_path = flags.stats.empty() ? sibling(out_path, ".stats.json") : flags.stats;
    write_text_file(stats_path, stats.dump(2) + "\n");
    out << "sequences: " << cstats.total_sequences << " (discarded " << extracted.stats.discarded_sequences()
        << ")\nusers: " << cstats.user_count << "\nmean sequences/user: " << cstats.mean_sequences_per_user
        << "\nmedian inner length: " << cstats.median_inner_length << "\nevents: " << extracted.stats.input_events
        << " (discarded " << extracted.stats.discarded_events << ", skipped records " << ingested.skipped_count
        << ")\n";
    return kExitOk;
}

int cmd_train(const Flags& flags, const Subcommand& sub, std::ostream& out) {
    const auto config = merge(flags, sub);
    const auto vocab = vocabulary_for(config);
    const auto& out_path = require(flags.out, "--out");
    auto corpus = read_sequence_corpus_file(require(config.sequences, "--sequences"), vocab.vocabulary);
    if (flags.holdout) {
        corpus = split_train_test(corpus).train;
    }
    const auto store =
        build_context_store(corpus, config.order, config.min_support, vocab.vocabulary, config.context_mode);
    auto doc = to_json(store);
    doc["training_scope"] = flags.holdout ? "train_split" : "full";
    write_text_file(out_path, doc.dump(1) + "\n");
    out << "trained order-" << store.order << " store on " << corpus.size() << " sequences ("
        << store.per_context.size() << " context models, " << store.per_role.size() << " role models)\n"
        << "model: " << out_path << '\n';
    return kExitOk;
}

int cmd_evaluate(const Flags& flags, const Subcommand& sub, std::ostream& out) {
    const auto config = merge(flags, sub);
    const auto vocab = vocabulary_for(config);
    const auto& out_path = require(config.report, "--out");
    const auto corpus = read_sequence_corpus_file(require(config.sequences, "--sequences"), vocab.vocabulary);
    EvaluationReport report;
    if (config.model.empty()) {
        CompareOptions options{{config.order}, config.k, config.context_mode, config.backoff, config.min_support};
        report = compare_orders(corpus, vocab.vocabulary, options);
    } else {
        const auto doc = parse_json_file(config.model);
        if (doc.value("training_scope", "") != "train_split") {
            throw DataError("model was not trained on the train split (use `train --holdout`): " + config.model);
        }
        const auto store = store_from_json(doc);
        const auto split = split_train_test(corpus);
        if (store.global_model.training_sequences() != split.train.size()) {
            throw DataError("model was trained on a different corpus than " + config.sequences);
        }
        report.k = config.k;
        report.context_mode = store.context_mode;
        report.backoff = config.backoff;
        report.min_support = store.min_support;
        report.train_sequences = split.train.size();
        report.test_sequences = split.test.size();
        report.rows.push_back(evaluate_store(store, split.test, config.k, config.backoff));
    }
    write_report(out_path, report, out);
    return kExitOk;
}

int cmd_compare(const Flags& flags, const Subcommand& sub, std::ostream& out) {
    const auto config = merge(flags, sub);
    const auto vocab = vocabulary_for(config);
    const auto& out_path = require(config.report, "--out");
    std::vector<InteractionSequence> corpus;
    if (!config.sequences.empty()) {
        corpus = read_sequence_corpus_file(config.sequences, vocab.vocabulary);
    } else {
        const auto ingested = ingest_event_log_file(require(config.event_log, "--sequences or --log"),
                                                    vocab.vocabulary, IngestOptions{true, &vocab.schema});
        corpus = extract_all(ingested.streams, vocab.vocabulary).sequences;
    }
    CompareOptions options{config.orders, config.k, config.context_mode, config.backoff, config.min_support};
    write_report(out_path, compare_orders(corpus, vocab.vocabulary, options), out);
    return kExitOk;
}

int cmd_serve(const Flags& flags, const Subcommand& sub, std::ostream& out) {
    const auto config = merge(flags, sub);
    ServiceConfig service;
    if (!flags.config.empty()) {
        const auto doc = parse_json_file(flags.config);
        if (doc.contains("service")) {
            service = service_config_from_json(doc.at("service"));
        }
    }
    if (sub.given("--host")) service.host = flags.host;
    if (sub.given("--port")) service.port = flags.port;
    if (sub.given("--store")) service.store_path = flags.store;
    if (sub.given("--hide-end-marker")) service.surface_end_marker = !flags.hide_end_marker;
    if (!config.vocabulary.empty()) service.vocabulary_path = config.vocabulary;
    if (!config.model.empty()) service.model_path = config.model;
    if (sub.given("--order")) service.default_order = config.order;
    if (sub.given("--k")) service.default_k = config.k;
    if (sub.given("--min-support")) service.default_min_support = config.min_support;
    if (sub.given("--context-mode")) service.default_context_mode = config.context_mode;
    if (sub.given("--backoff")) service.backoff = config.backoff;

    auto vocab = load_vocabulary_file(require(service.vocabulary_path, "--vocabulary"));
    RecommenderService svc(service, std::move(vocab));
    if (!service.model_path.empty()) {
        const auto version = svc.install(load_store_snapshot(service.model_path), 0, 0);
        out << "loaded " << service.model_path << " as " << version << '\n';
    }
    HttpServer server(svc);
    out << "serving on http://" << service.host << ":" << service.port << " (store " << service.store_path
        << ")" << std::endl;
    server.run(service.host, service.port);
    return kExitOk;
}

}  // namespace

void apply_config_json(RunConfig& config, const json& doc) {
    if (!doc.is_object()) {
        throw std::invalid_argument("run config must be a JSON object");
    }
    const auto get = [&](const char* key, auto& target) {
        if (!doc.contains(key)) {
            return;
        }
        try {
            doc.at(key).get_to(target);
        } catch (const json::exception&) {
            throw std::invalid_argument(std::string("run config field '") + key + "' has the wrong type");
        }
    };
    get("event_log", config.event_log);
    get("sequences", config.sequences);
    get("model", config.model);
    get("report", config.report);
    get("vocabulary", config.vocabulary);
    get("simulation", config.simulation);
    get("orders", config.orders);
    get("order", config.order);
    get("k", config.k);
    get("context_mode", config.context_mode);
    get("backoff", config.backoff);
    get("min_support", config.min_support);
    get("seed", config.seed);
    if (config.order < 1 || config.k < 1) {
        throw std::invalid_argument("run config: order and k must be >= 1");
    }
    for (auto o : config.orders) {
        if (o < 1) {
            throw std::invalid_argument("run config: orders must be >= 1");
        }
    }
}

int run(std::span<const std::string> argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Adaptive HMI next-action recommender pipeline", argv.empty() ? "ahmi" : argv.front()};
    app.require_subcommand(1);
    Flags flags;
    auto& v = flags.values;

    std::map<std::string, Subcommand> subs;
    const auto add = [&](const std::string& name, const std::string& help) -> Subcommand& {
        auto& sub = subs[name];
        sub.app = app.add_subcommand(name, help);
        sub.app->add_option("--config", flags.config, "Run config JSON")->check(CLI::ExistingFile);
        return sub;
    };
    const auto opt = [](Subcommand& sub, const std::string& name, auto& target, const std::string& help) {
        sub.options[name] = sub.app->add_option(name, target, help);
        return sub.options[name];
    };
    const auto model_opts = [&](Subcommand& sub) {
        opt(sub, "--order", v.order, "Markov order")->check(CLI::PositiveNumber);
        opt(sub, "--min-support", v.min_support, "Minimum sequences per contextual model");
        opt(sub, "--context-mode", v.context_mode, "Context pre-filtering (true/false)");
    };
    const auto eval_opts = [&](Subcommand& sub) {
        opt(sub, "--k", v.k, "Recommendations per step")->check(CLI::PositiveNumber);
        opt(sub, "--backoff", v.backoff, "Back off on unseen states (true/false)");
    };

    auto& simulate = add("simulate", "Generate a synthetic interaction log");
    opt(simulate, "--sim-config", v.simulation, "Simulation config JSON");
    opt(simulate, "--seed", v.seed, "Random seed");
    opt(simulate, "--users", flags.users, "Override user count")->check(CLI::PositiveNumber);
    opt(simulate, "--sequences-per-user", flags.sequences_per_user, "Override sequences per user")
        ->check(CLI::PositiveNumber);
    opt(simulate, "--out", flags.out, "Event log output (JSONL)");
    opt(simulate, "--truth", flags.truth, "Ground-truth sidecar output");
    opt(simulate, "--vocab-out", flags.vocab_out, "Vocabulary output");

    auto& extract = add("extract", "Extract valid sequences from an event log");
    opt(extract, "--log", v.event_log, "Event log (JSONL)");
    opt(extract, "--vocabulary", v.vocabulary, "Vocabulary JSON");
    opt(extract, "--out", flags.out, "Sequence corpus output (JSONL)");
    opt(extract, "--stats", flags.stats, "Statistics output");
    extract.options["--lenient"] = extract.app->add_flag("--lenient", flags.lenient, "Skip invalid records");

    auto& train = add("train", "Train a context model store");
    opt(train, "--sequences", v.sequences, "Sequence corpus (JSONL)");
    opt(train, "--vocabulary", v.vocabulary, "Vocabulary JSON");
    opt(train, "--out", flags.out, "Model snapshot output");
    model_opts(train);
    train.options["--holdout"] =
        train.app->add_flag("--holdout", flags.holdout, "Train on the train split only (for evaluate --model)");

    auto& evaluate = add("evaluate", "Split, train and evaluate one order");
    opt(evaluate, "--sequences", v.sequences, "Sequence corpus (JSONL)");
    opt(evaluate, "--vocabulary", v.vocabulary, "Vocabulary JSON");
    opt(evaluate, "--model", v.model, "Snapshot from `train --holdout` instead of training");
    opt(evaluate, "--out", flags.out, "Report output (JSON; table written next to it)");
    model_opts(evaluate);
    eval_opts(evaluate);

    auto& compare = add("compare", "Evaluate several orders on one split");
    opt(compare, "--sequences", v.sequences, "Sequence corpus (JSONL)");
    opt(compare, "--log", v.event_log, "Event log, extracted in-process when --sequences is absent");
    opt(compare, "--vocabulary", v.vocabulary, "Vocabulary JSON");
    opt(compare, "--orders", flags.orders, "Comma-separated orders, e.g. 1,2,3");
    opt(compare, "--out", flags.out, "Report output (JSON; table written next to it)");
    model_opts(compare);
    eval_opts(compare);

    auto& serve = add("serve", "Run the recommendation service");
    opt(serve, "--vocabulary", v.vocabulary, "Vocabulary JSON");
    opt(serve, "--model", v.model, "Snapshot to serve at startup");
    opt(serve, "--host", flags.host, "Listen address");
    opt(serve, "--port", flags.port, "Listen port");
    opt(serve, "--store", flags.store, "Event store path (JSONL)");
    serve.options["--hide-end-marker"] =
        serve.app->add_flag("--hide-end-marker", flags.hide_end_marker, "Never recommend the end marker");
    model_opts(serve);
    eval_opts(serve);

    std::vector<std::string> args(argv.begin() + (argv.empty() ? 0 : 1), argv.end());
    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        for (const auto& [name, sub] : subs) {
            if (!sub.app->parsed()) {
                continue;
            }
            if (name == "simulate") return cmd_simulate(flags, sub, out);
            if (name == "extract") return cmd_extract(flags, sub, out);
            if (name == "train") return cmd_train(flags, sub, out);
            if (name == "evaluate") return cmd_evaluate(flags, sub, out);
            if (name == "compare") return cmd_compare(flags, sub, out);
            if (name == "serve") return cmd_serve(flags, sub, out);
        }
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const FileError& e) {
        err << "error: " << e.what() << "\n";
        return kExitDomainError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitDomainError;
    }
    return kExitUsage;
}

int run(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace ahmi::cli
