#include <doctest.h>

#include <filesystem>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ahmi/cli_app.hpp"
#include "ahmi/file_io.hpp"
#include "support/test_support.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        std::random_device rd;
        path = fs::temp_directory_path() / ("ahmi_cli_" + std::to_string(rd()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& name) const { return (path / name).string(); }
};

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome run(std::vector<std::string> args) {
    args.insert(args.begin(), "ahmi");
    std::ostringstream out, err;
    const int code = ahmi::cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) {
    return ahmi::read_text_file(path);
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
    CHECK(run({}).code == 2);
    CHECK(run({"bogus"}).code == 2);
    CHECK(run({"train", "--order", "zero"}).code == 2);
    CHECK(run({"train", "--order", "0"}).code == 2);
    const auto missing = run({"train", "--vocabulary", ahmi::test::fixture("vocabulary.json")});
    CHECK(missing.code == 2);
    CHECK(missing.err.find("missing required --out") != std::string::npos);
}

TEST_CASE("domain errors exit with 1") {
    TempDir dir;
    const auto r = run({"extract", "--log", dir / "absent.jsonl", "--vocabulary", ahmi::test::fixture("vocabulary.json"),
                        "--out", dir / "seq.jsonl"});
    CHECK(r.code == 1);
    CHECK(r.err.find("absent.jsonl") != std::string::npos);

    // Strict extraction stops on the fixture's malformed line 7.
    const auto strict = run({"extract", "--log", ahmi::test::fixture("events_50.jsonl"), "--vocabulary",
                             ahmi::test::fixture("vocabulary.json"), "--out", dir / "seq.jsonl"});
    CHECK(strict.code == 1);
    CHECK(strict.err.find("line 7") != std::string::npos);
}

TEST_CASE("extract reports discarded sequences") {
    TempDir dir;
    const auto r = run({"extract", "--log", ahmi::test::fixture("short_bracket.jsonl"), "--vocabulary",
                        ahmi::test::fixture("vocabulary.json"), "--out", dir / "seq.jsonl"});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("sequences: 2 (discarded 1)") != std::string::npos);
    const auto stats = json::parse(slurp(dir / "seq.stats.json"));
    CHECK(stats["extraction"]["too_short"] == 1);
    CHECK(stats["corpus"]["total_sequences"] == 2);
}

TEST_CASE("simulate is byte-for-byte deterministic") {
    TempDir dir;
    const std::vector<std::string> common{"--users", "4", "--sequences-per-user", "10", "--seed", "7"};
    auto a = common;
    a.insert(a.begin(), {"simulate", "--out", dir / "a.jsonl"});
    auto b = common;
    b.insert(b.begin(), {"simulate", "--out", dir / "b.jsonl"});
    REQUIRE(run(a).code == 0);
    REQUIRE(run(b).code == 0);
    CHECK(slurp(dir / "a.jsonl") == slurp(dir / "b.jsonl"));
    CHECK(slurp(dir / "a.truth.json") == slurp(dir / "b.truth.json"));
    CHECK(slurp(dir / "a.vocab.json") == slurp(dir / "b.vocab.json"));
}

TEST_CASE("pipeline: extract, train --holdout, evaluate --model matches compare") {
    TempDir dir;
    REQUIRE(run({"simulate", "--out", dir / "log.jsonl", "--users", "8", "--sequences-per-user", "30"}).code == 0);
    const auto vocab = dir / "log.vocab.json";
    REQUIRE(run({"extract", "--log", dir / "log.jsonl", "--vocabulary", vocab, "--out", dir / "seq.jsonl"}).code == 0);
    REQUIRE(run({"train", "--sequences", dir / "seq.jsonl", "--vocabulary", vocab, "--order", "2", "--holdout",
                 "--out", dir / "model.json"})
                .code == 0);
    const auto eval = run({"evaluate", "--sequences", dir / "seq.jsonl", "--vocabulary", vocab, "--model",
                           dir / "model.json", "--out", dir / "eval.json"});
    REQUIRE(eval.code == 0);
    const auto cmp = run({"compare", "--sequences", dir / "seq.jsonl", "--vocabulary", vocab, "--orders", "2",
                          "--out", dir / "cmp.json"});
    REQUIRE(cmp.code == 0);
    CHECK(slurp(dir / "eval.json") == slurp(dir / "cmp.json"));
    CHECK(slurp(dir / "eval.txt") == slurp(dir / "cmp.txt"));
    CHECK(eval.out == cmp.out);

    const auto via_log = run({"compare", "--log", dir / "log.jsonl", "--vocabulary", vocab, "--orders", "2",
                              "--out", dir / "cmp2.json"});
    REQUIRE(via_log.code == 0);
    CHECK(slurp(dir / "cmp2.json") == slurp(dir / "cmp.json"));

    const auto report = json::parse(slurp(dir / "cmp.json"));
    const auto& row = report["orders"][0];
    const double p = row["precision"]["mean"], r = row["recall"]["mean"];
    CHECK(row["f1"].get<double>() == doctest::Approx(2 * p * r / (p + r)).epsilon(1e-12));

    // A full-corpus snapshot is refused by evaluate.
    REQUIRE(run({"train", "--sequences", dir / "seq.jsonl", "--vocabulary", vocab, "--out", dir / "full.json"}).code ==
            0);
    CHECK(run({"evaluate", "--sequences", dir / "seq.jsonl", "--vocabulary", vocab, "--model", dir / "full.json",
               "--out", dir / "bad.json"})
              .code == 1);
}

TEST_CASE("run config file supplies defaults that flags override") {
    TempDir dir;
    REQUIRE(run({"simulate", "--out", dir / "log.jsonl", "--users", "4", "--sequences-per-user", "12"}).code == 0);
    const auto vocab = dir / "log.vocab.json";
    REQUIRE(run({"extract", "--log", dir / "log.jsonl", "--vocabulary", vocab, "--out", dir / "seq.jsonl"}).code == 0);
    ahmi::write_text_file(dir / "run.json", json{{"sequences", dir / "seq.jsonl"},
                                                 {"vocabulary", vocab},
                                                 {"orders", {1, 2}},
                                                 {"k", 5}}
                                                .dump());
    REQUIRE(run({"compare", "--config", dir / "run.json", "--k", "2", "--out", dir / "r.json"}).code == 0);
    const auto report = json::parse(slurp(dir / "r.json"));
    CHECK(report["k"] == 2);
    CHECK(report["orders"].size() == 2);
}
