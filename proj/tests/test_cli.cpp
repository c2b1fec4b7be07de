#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <fstream>
#include <thread>

#include "test_support.hpp"

using namespace explaingrade;
using testsupport::TempDir;
namespace fs = std::filesystem;

namespace {

struct CommandResult {
    int exit_code = -1;
    std::string output;
};

std::string cli_path() {
    const char* env = std::getenv("EXPLAINGRADE_CLI");
    REQUIRE(env != nullptr);
    return env;
}

CommandResult run_cli(const std::string& args, const fs::path& scratch,
                      bool clear_credentials = false, bool raw_command = false) {
    static int counter = 0;
    fs::path out_file = scratch / ("cli-out-" + std::to_string(counter++) + ".txt");
    std::string command;
    if (clear_credentials) {
        command = "env -u EXPLAINGRADE_API_KEY -u EXPLAINGRADE_API_BASE ";
    }
    if (!raw_command) command += cli_path() + " ";
    command += args + " > " + out_file.string() + " 2>&1";
    int status = std::system(command.c_str());
    CommandResult result;
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    result.output = util::read_file(out_file);
    return result;
}

}  // namespace

TEST_CASE("ingest prints class counts and is idempotent", "[cli]") {
    TempDir dir("cli-ingest");
    fs::path run = dir.path() / "run";
    auto mini = testsupport::fixtures_dir() / "mini";
    auto first = run_cli("ingest --dataset " + mini.string() + " --run " + run.string(),
                         dir.path());
    INFO(first.output);
    REQUIRE(first.exit_code == 0);
    REQUIRE(first.output.find("(21 correct, 3 incorrect)") != std::string::npos);
    REQUIRE(fs::exists(run / "corpus" / "records.jsonl"));

    // --input is an accepted alias; the resume check keys on the value
    auto again = run_cli("ingest --input " + mini.string() + " --run " + run.string(),
                         dir.path());
    REQUIRE(again.exit_code == 0);
    REQUIRE(again.output.find("up to date") != std::string::npos);
}

TEST_CASE("ingest surfaces validation errors with row context and exit 1", "[cli]") {
    TempDir dir("cli-ingest-bad");
    fs::path data = dir.path() / "data";
    fs::create_directories(data);
    {
        std::ofstream ex(data / "examples.jsonl");
        ex << corpus::example_to_json(testsupport::make_example("ex1", 2)).dump() << "\n";
        std::ofstream rec(data / "records.jsonl");
        rec << R"({"record_id":"r1","example_id":"ex1","line_number":1,)"
            << R"("student_explanation":"s.","expert_explanation":"e.",)"
            << R"("label":"correct","provenance":"human"})" << "\n";
        rec << R"({"record_id":"r2","example_id":"ghost","line_number":1,)"
            << R"("student_explanation":"s.","expert_explanation":"e.",)"
            << R"("label":"correct","provenance":"human"})" << "\n";
    }
    auto result = run_cli("ingest --dataset " + data.string() + " --run " +
                              (dir.path() / "run").string(),
                          dir.path());
    REQUIRE(result.exit_code == 1);
    REQUIRE(result.output.find("row 2") != std::string::npos);
    REQUIRE(result.output.find("ghost") != std::string::npos);
}

TEST_CASE("judge with no credential and a cold cache exits 2", "[cli]") {
    TempDir dir("cli-judge-nocred");
    fs::path run = dir.path() / "run";
    auto mini = testsupport::fixtures_dir() / "mini";
    REQUIRE(run_cli("ingest --dataset " + mini.string() + " --run " + run.string(), dir.path())
                .exit_code == 0);
    auto result = run_cli("judge --run " + run.string() +
                              " --scorer judge:behavior --api-base http://127.0.0.1:9",
                          dir.path(), /*clear_credentials=*/true);
    INFO(result.output);
    REQUIRE(result.exit_code == 2);
}

TEST_CASE("offline cache misses exit 2", "[cli]") {
    TempDir dir("cli-offline");
    fs::path run = dir.path() / "run";
    auto mini = testsupport::fixtures_dir() / "mini";
    REQUIRE(run_cli("ingest --dataset " + mini.string() + " --run " + run.string(), dir.path())
                .exit_code == 0);
    auto result = run_cli("judge --run " + run.string() + " --scorer judge:behavior --offline",
                          dir.path(), /*clear_credentials=*/true);
    INFO(result.output);
    REQUIRE(result.exit_code == 2);
    REQUIRE(result.output.find("offline") != std::string::npos);
}

TEST_CASE("external scores drive evaluate and report end to end", "[cli]") {
    TempDir dir("cli-external");
    fs::path run = dir.path() / "run";
    auto mini = testsupport::fixtures_dir() / "mini";
    REQUIRE(run_cli("ingest --dataset " + mini.string() + " --run " + run.string(), dir.path())
                .exit_code == 0);

    // synthesize an external score file over the ingested corpus
    auto ds = corpus::load_dataset(run / "corpus");
    fs::path scores = dir.path() / "external.jsonl";
    {
        std::ofstream out(scores);
        for (const auto& rec : ds.records) {
            double score = rec.label == corpus::Label::Correct ? 0.9 : 0.2;
            out << nlohmann::json{{"record_id", rec.record_id}, {"score", score}}.dump() << "\n";
        }
    }
    auto scored = run_cli("score --run " + run.string() +
                              " --scorer external:deep-tutor --scores-file " + scores.string(),
                          dir.path());
    INFO(scored.output);
    REQUIRE(scored.exit_code == 0);
    REQUIRE(fs::exists(run / "scores" / "external-deep-tutor.jsonl"));

    auto evaluated = run_cli("evaluate --run " + run.string() +
                                 " --scorer external:deep-tutor --k 3 --seed 5",
                             dir.path());
    INFO(evaluated.output);
    REQUIRE(evaluated.exit_code == 0);
    REQUIRE(fs::exists(run / "eval" / "result.json"));

    auto reported = run_cli("report --run " + run.string() + " --format csv", dir.path());
    REQUIRE(reported.exit_code == 0);
    REQUIRE(fs::exists(run / "report.csv"));
    REQUIRE(reported.output.find("external:deep-tutor") != std::string::npos);

    // the perfect external scorer separates the classes
    auto machine = run_cli("report --run " + run.string() + " --format machine", dir.path());
    REQUIRE(machine.exit_code == 0);
    auto parsed = eval::ExperimentResult::from_json(
        nlohmann::json::parse(util::read_file(run / "report.json")));
    REQUIRE(parsed.scorers.size() == 1);
    REQUIRE(parsed.scorers[0].aggregate_row.f1 == 1.0);
}

TEST_CASE("evaluate requires upstream artifacts", "[cli]") {
    TempDir dir("cli-missing");
    fs::path run = dir.path() / "run";
    auto mini = testsupport::fixtures_dir() / "mini";
    REQUIRE(run_cli("ingest --dataset " + mini.string() + " --run " + run.string(), dir.path())
                .exit_code == 0);
    auto result = run_cli("evaluate --run " + run.string() + " --scorer similarity:none --k 3",
                          dir.path());
    REQUIRE(result.exit_code == 1);
    REQUIRE(result.output.find("run score first") != std::string::npos);
}

TEST_CASE("a judge that never yields a verdict exits 3", "[cli]") {
    // endpoint replies 200 with chatty text that carries no 0/1 token
    httplib::Server server;
    server.Post("/chat/completions", [](const httplib::Request&, httplib::Response& res) {
        nlohmann::json body = {
            {"choices",
             nlohmann::json::array({{{"message", {{"content", "It depends on many things."}}},
                                     {"finish_reason", "stop"}}})}};
        res.set_content(body.dump(), "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread listener([&server] { server.listen_after_bind(); });
    server.wait_until_ready();

    TempDir dir("cli-unparseable");
    fs::path run = dir.path() / "run";
    auto mini = testsupport::fixtures_dir() / "mini";
    REQUIRE(run_cli("ingest --dataset " + mini.string() + " --run " + run.string(), dir.path())
                .exit_code == 0);
    auto result = run_cli("env EXPLAINGRADE_API_KEY=k " + cli_path() + " judge --run " +
                              run.string() +
                              " --scorer judge:behavior --api-base http://127.0.0.1:" +
                              std::to_string(port),
                          dir.path(), /*clear_credentials=*/false, /*raw_command=*/true);
    server.stop();
    listener.join();
    INFO(result.output);
    REQUIRE(result.exit_code == 3);
    REQUIRE(result.output.find("verdict") != std::string::npos);
}

TEST_CASE("verify-sample is deterministic for a fixed seed", "[cli]") {
    TempDir dir("cli-verify");
    fs::path data = dir.path() / "data";
    // a corpus that already contains synthetic negatives
    auto ds = testsupport::make_dataset(6, 0);
    for (int i = 0; i < 5; ++i) {
        corpus::ExplanationRecord rec;
        rec.record_id = "syn-" + std::to_string(i);
        rec.example_id = "ex1";
        rec.line_number = i % 4 + 1;
        rec.student_explanation = "Wrong claim number " + std::to_string(i) + ".";
        rec.expert_explanation = "Expert explanation for line 1.";
        rec.label = corpus::Label::Incorrect;
        rec.provenance = corpus::Provenance::Synthetic;
        ds.records.push_back(rec);
    }
    corpus::save_dataset(ds, data);

    fs::path run1 = dir.path() / "run1";
    fs::path run2 = dir.path() / "run2";
    for (const auto& run : {run1, run2}) {
        REQUIRE(run_cli("ingest --dataset " + data.string() + " --run " + run.string(),
                        dir.path())
                    .exit_code == 0);
        auto result = run_cli("verify-sample --run " + run.string() + " --n 3 --seed 11",
                              dir.path());
        INFO(result.output);
        REQUIRE(result.exit_code == 0);
    }
    auto sheet1 = util::read_file(run1 / "verification" / "sample-n3-s11.csv");
    auto sheet2 = util::read_file(run2 / "verification" / "sample-n3-s11.csv");
    REQUIRE(sheet1 == sheet2);
    REQUIRE_FALSE(sheet1.empty());
}
