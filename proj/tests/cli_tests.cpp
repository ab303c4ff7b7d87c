// End-to-end tests for the `disco` command line tool. Each test drives the
// real binary as a subprocess; the path to the binary is passed on the test
// command line as `--cli <path>`.
#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest.h"

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "disco/eval.hpp"
#include "disco/index.hpp"
#include "disco/sparse.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace disco;

namespace {

std::string g_cli;  // path to the binary under test

struct CliResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return {};
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch_root() { return fs::temp_directory_path() / "disco_cli_tests"; }

fs::path fresh_dir(const std::string& name) {
    fs::path dir = scratch_root() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

CliResult run_cli(const std::string& args) {
    fs::path logs = scratch_root() / "logs";
    fs::create_directories(logs);
    fs::path out_path = logs / "stdout.txt";
    fs::path err_path = logs / "stderr.txt";
    std::string cmd =
        g_cli + " " + args + " >" + out_path.string() + " 2>" + err_path.string();
    int status = std::system(cmd.c_str());
    CliResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out_path);
    r.err = slurp(err_path);
    return r;
}

fs::path write_manifest(const fs::path& dir, const json& body,
                        const std::string& name = "manifest.json") {
    fs::path path = dir / name;
    std::ofstream out(path);
    out << body.dump(2) << "\n";
    return path;
}

json base_manifest(const fs::path& out_dir) {
    return json{{"out_dir", out_dir.string()}, {"seed", 1}, {"train", {{"epochs", 2}}}};
}

// Replaces every occurrence of `dir` with a placeholder and drops lines whose
// content is legitimately run-dependent (wall-clock timings, timestamps), so
// two runs of the same experiment in different directories can be compared.
std::string normalized(std::string text, const std::string& dir) {
    const std::string placeholder = "<OUT>";
    size_t pos = 0;
    while ((pos = text.find(dir, pos)) != std::string::npos) {
        text.replace(pos, dir.size(), placeholder);
        pos += placeholder.size();
    }
    std::istringstream in(text);
    std::string line;
    std::string kept;
    while (std::getline(in, line)) {
        if (line.find("timestamp") != std::string::npos) continue;
        if (line.find("wall_sec") != std::string::npos) continue;
        kept += line;
        kept += '\n';
    }
    return kept;
}

// One shared end-to-end run at reduced epoch count; read-only for consumers.
// Tests that need to mutate artifacts copy this directory first.
struct Pipeline {
    fs::path dir;
    fs::path out;
    fs::path manifest;
    bool ok = false;
    std::string error;
};

const Pipeline& shared_pipeline() {
    static Pipeline p = [] {
        Pipeline s;
        s.dir = fresh_dir("pipeline");
        s.out = s.dir / "out";
        s.manifest = write_manifest(s.dir, base_manifest(s.out));
        const std::string mf = " --manifest " + s.manifest.string();
        const std::vector<std::string> steps = {
            "synth",
            "index",
            "teacher-scores",
            "train --objective disco_kld",
            "retrieve --mode student --objective disco_kld --split test",
            "retrieve --mode teacher --split test",
            "retrieve --mode raw --split test",
            "evaluate --run disco_kld",
            "evaluate --run teacher",
            "evaluate --run raw",
            "fuse --a disco_kld --b teacher",
            "evaluate --run fusion",
        };
        for (const auto& step : steps) {
            CliResult r = run_cli(step + mf);
            if (r.exit_code != 0) {
                s.error = "`disco " + step + "` exited " + std::to_string(r.exit_code) +
                          "\nstderr: " + r.err;
                return s;
            }
        }
        s.ok = true;
        return s;
    }();
    return p;
}

// Clones the shared pipeline's artifacts so a test can overwrite them freely.
// Returns the manifest path for the clone.
fs::path clone_pipeline(const std::string& name, fs::path* out_dir,
                        json manifest_overrides = json::object()) {
    const Pipeline& p = shared_pipeline();
    REQUIRE_MESSAGE(p.ok, p.error);
    fs::path dir = fresh_dir(name);
    *out_dir = dir / "out";
    fs::copy(p.out, *out_dir, fs::copy_options::recursive);
    json m = base_manifest(*out_dir);
    for (auto& [key, value] : manifest_overrides.items()) m[key] = value;
    return write_manifest(dir, m);
}

json parse_file(const fs::path& path) {
    std::string text = slurp(path);
    REQUIRE_MESSAGE(!text.empty(), "missing or empty file: " << path.string());
    return json::parse(text);
}

std::map<std::string, std::vector<double>> scores_by_query(const fs::path& trec) {
    std::map<std::string, std::vector<double>> result;
    std::ifstream in(trec);
    REQUIRE_MESSAGE(bool(in), "cannot open " << trec.string());
    std::string qid, q0, doc, tag;
    long rank = 0;
    double score = 0.0;
    while (in >> qid >> q0 >> doc >> rank >> score >> tag) {
        result[qid].push_back(score);
    }
    return result;
}

}  // namespace

TEST_CASE("the full pipeline produces every expected artifact") {
    const Pipeline& p = shared_pipeline();
    REQUIRE_MESSAGE(p.ok, p.error);
    const std::vector<std::string> expected = {
        "vocab.txt",
        "corpus.jsonl",
        "conversations.jsonl",
        "qrels.trec",
        "teacher.ckpt.json",
        "encoded_corpus.jsonl",
        "scores.jsonl",
        "examples.jsonl",
        "student_disco_kld.ckpt.json",
        "train_report_disco_kld.json",
        "train_report_disco_kld.csv",
        "run_disco_kld.trec",
        "run_disco_kld.reps.jsonl",
        "run_teacher.trec",
        "run_teacher.reps.jsonl",
        "run_raw.trec",
        "run_raw.reps.jsonl",
        "run_fusion.trec",
        "run_fusion.reps.jsonl",
        "eval_disco_kld.json",
        "eval_disco_kld.csv",
        "eval_teacher.json",
        "eval_raw.json",
        "eval_fusion.json",
        "synth_summary.json",
        "index_summary.json",
        "teacher_scores_summary.json",
        "train_summary.json",
        "retrieve_summary.json",
        "evaluate_summary.json",
        "fuse_summary.json",
    };
    for (const auto& name : expected) {
        CHECK_MESSAGE(fs::exists(p.out / name), "missing artifact " << name);
    }

    std::string report_csv = slurp(p.out / "train_report_disco_kld.csv");
    CHECK(report_csv.rfind("epoch,distill,reg_q,reg_d,mean_query_nnz\n", 0) == 0);

    json synth_summary = parse_file(p.out / "synth_summary.json");
    CHECK(synth_summary.at("documents").get<int>() == 144);
    CHECK(synth_summary.at("conversations").get<int>() == 40);
}

TEST_CASE("evaluation artifacts report metrics in valid ranges") {
    const Pipeline& p = shared_pipeline();
    REQUIRE_MESSAGE(p.ok, p.error);
    for (const std::string tag : {"disco_kld", "teacher", "raw", "fusion"}) {
        json report = parse_file(p.out / ("eval_" + tag + ".json"));
        const json& agg = report.at("aggregates");
        for (const std::string key : {"mrr", "ndcg3", "recall10", "recall100"}) {
            double v = agg.at(key).get<double>();
            CHECK_MESSAGE(v >= 0.0, tag << " " << key);
            CHECK_MESSAGE(v <= 1.0, tag << " " << key);
        }
        CHECK(report.at("mean_query_nnz").get<double>() > 0.0);
        CHECK(report.at("flops").get<double>() >= 0.0);
        CHECK(report.at("counts").at("evaluated").get<int>() > 0);
        CHECK(report.at("per_query").size() ==
              static_cast<size_t>(report.at("counts").at("evaluated").get<int>()));
    }
}

TEST_CASE("human rewrites retrieve better than raw utterances") {
    const Pipeline& p = shared_pipeline();
    REQUIRE_MESSAGE(p.ok, p.error);
    double teacher_mrr =
        parse_file(p.out / "eval_teacher.json").at("aggregates").at("mrr").get<double>();
    double raw_mrr = parse_file(p.out / "eval_raw.json").at("aggregates").at("mrr").get<double>();
    CHECK(teacher_mrr > raw_mrr);
}

TEST_CASE("run files are ranked and respect the depth limit") {
    const Pipeline& p = shared_pipeline();
    REQUIRE_MESSAGE(p.ok, p.error);
    auto runs = scores_by_query(p.out / "run_teacher.trec");
    CHECK(!runs.empty());
    for (const auto& [qid, scores] : runs) {
        CHECK_MESSAGE(scores.size() <= 100, qid << " holds " << scores.size() << " results");
        for (size_t i = 1; i < scores.size(); ++i) {
            CHECK_MESSAGE(scores[i - 1] >= scores[i], qid << " is not ranked");
        }
    }
}

TEST_CASE("retrieve honors an explicit depth override") {
    fs::path out;
    fs::path manifest = clone_pipeline("depth_override", &out);
    const std::string mf = " --manifest " + manifest.string();

    CliResult train = run_cli("train --objective infonce_only" + mf);
    REQUIRE_MESSAGE(train.exit_code == 0, train.err);
    CliResult retrieve =
        run_cli("retrieve --mode student --objective infonce_only --split test --k 5" + mf);
    REQUIRE_MESSAGE(retrieve.exit_code == 0, retrieve.err);

    auto runs = scores_by_query(out / "run_infonce_only.trec");
    CHECK(!runs.empty());
    for (const auto& [qid, scores] : runs) {
        CHECK_MESSAGE(scores.size() <= 5, qid << " holds " << scores.size() << " results");
    }
    json summary = parse_file(out / "retrieve_summary.json");
    CHECK(summary.at("k").get<int>() == 5);
    CHECK(summary.at("tag").get<std::string>() == "infonce_only");
}

TEST_CASE("teacher-scores honors an explicit teacher subset") {
    fs::path out;
    fs::path manifest = clone_pipeline("teacher_subset", &out);
    CliResult r =
        run_cli("teacher-scores --teachers llm_a --manifest " + manifest.string());
    REQUIRE_MESSAGE(r.exit_code == 0, r.err);

    json summary = parse_file(out / "teacher_scores_summary.json");
    CHECK(summary.at("teachers") == json::array({"llm_a"}));

    std::ifstream scores(out / "scores.jsonl");
    std::string line;
    REQUIRE(std::getline(scores, line));
    json record = json::parse(line);
    REQUIRE(record.at("scores").size() == 1);
    CHECK(record.at("scores").contains("llm_a"));
}

TEST_CASE("missing artifacts name the producing command") {
    fs::path dir = fresh_dir("missing_artifacts");
    fs::path manifest = write_manifest(dir, base_manifest(dir / "out"));
    const std::string mf = " --manifest " + manifest.string();

    struct Case {
        std::string command;
        std::string producer;
    };
    const std::vector<Case> cases = {
        {"index", "disco synth"},
        {"teacher-scores", "disco synth"},
        {"train --objective disco_kld", "disco teacher-scores"},
        {"retrieve --mode teacher", "disco synth"},
        {"evaluate --run disco_kld", "disco retrieve"},
        {"fuse --a disco_kld --b teacher", "disco retrieve"},
        {"sweep-lambda", "disco synth"},
    };
    for (const auto& c : cases) {
        CliResult r = run_cli(c.command + mf);
        CHECK_MESSAGE(r.exit_code == 1, c.command << " exited " << r.exit_code);
        CHECK_MESSAGE(r.err.find("error: missing required artifact:") != std::string::npos,
                      c.command << " stderr: " << r.err);
        CHECK_MESSAGE(r.err.find("(produced by `" + c.producer + "`)") != std::string::npos,
                      c.command << " stderr: " << r.err);
    }
}

TEST_CASE("a trained student is required before retrieving with it") {
    fs::path out;
    fs::path manifest = clone_pipeline("missing_student", &out);
    fs::remove(out / "student_convdr_mse.ckpt.json");
    CliResult r = run_cli("retrieve --mode student --objective convdr_mse --manifest " +
                          manifest.string());
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("student_convdr_mse.ckpt.json") != std::string::npos);
    CHECK(r.err.find("train --objective convdr_mse") != std::string::npos);
}

TEST_CASE("invalid manifests are rejected before any work happens") {
    fs::path dir = fresh_dir("bad_manifests");

    CliResult missing = run_cli("synth --manifest " + (dir / "nope.json").string());
    CHECK(missing.exit_code == 1);
    CHECK(missing.err.find("error:") != std::string::npos);

    fs::path malformed = dir / "malformed.json";
    std::ofstream(malformed) << "this is not json {";
    CliResult bad_json = run_cli("synth --manifest " + malformed.string());
    CHECK(bad_json.exit_code == 1);
    CHECK(bad_json.err.find("invalid manifest JSON") != std::string::npos);

    json m = base_manifest(dir / "out");
    m["test_fraction"] = 1.5;
    fs::path invalid = write_manifest(dir, m, "invalid.json");
    CliResult rejected = run_cli("synth --manifest " + invalid.string());
    CHECK(rejected.exit_code == 1);
    CHECK(rejected.err.find("test_fraction") != std::string::npos);
    CHECK_MESSAGE(!fs::exists(dir / "out"),
                  "rejected manifest must not produce an output directory");
}

TEST_CASE("bad flags and missing subcommands fail fast") {
    fs::path dir = fresh_dir("bad_flags");
    fs::path manifest = write_manifest(dir, base_manifest(dir / "out"));
    const std::string mf = " --manifest " + manifest.string();

    CHECK(run_cli("train --objective bogus" + mf).exit_code != 0);
    CHECK(run_cli("retrieve --mode bogus" + mf).exit_code != 0);
    CHECK(run_cli("retrieve --split bogus" + mf).exit_code != 0);
    CHECK(run_cli("").exit_code != 0);
    CHECK(run_cli("synth").exit_code != 0);
    CHECK(run_cli("frobnicate" + mf).exit_code != 0);
    CHECK_MESSAGE(!fs::exists(dir / "out"), "failed parses must not write artifacts");
}

TEST_CASE("a run scoring every relevant document first evaluates to ones") {
    fs::path dir = fresh_dir("perfect_run");
    fs::path out = dir / "out";
    fs::create_directories(out);

    EncodedCorpus enc;
    enc.add("d1", SparseVec(8, {{0, 1.0}, {1, 0.5}}));
    enc.add("d2", SparseVec(8, {{2, 2.0}}));
    enc.add("d3", SparseVec(8, {{1, 1.0}, {3, 0.25}}));
    save_encoded_corpus(enc, (out / "encoded_corpus.jsonl").string());

    Qrels qrels;
    qrels.add("q1", "d1", 1);
    qrels.add("q2", "d2", 1);
    qrels.save((out / "qrels.trec").string());

    std::vector<RunList> runs;
    runs.push_back(RunList{"q1", {{"d1", 3.0}, {"d3", 1.0}}, "perfect"});
    runs.push_back(RunList{"q2", {{"d2", 9.0}, {"d1", 4.0}}, "perfect"});
    save_runs(runs, (out / "run_perfect.trec").string());

    std::ofstream reps(out / "run_perfect.reps.jsonl");
    reps << json{{"query_id", "q1"}, {"depth", 0}, {"vocab_size", 8},
                 {"tokens", {0}}, {"weights", {1.0}}}.dump()
         << "\n"
         << json{{"query_id", "q2"}, {"depth", 1}, {"vocab_size", 8},
                 {"tokens", {2, 3}}, {"weights", {1.0, 0.5}}}.dump()
         << "\n";
    reps.close();

    fs::path manifest = write_manifest(dir, base_manifest(out));
    CliResult r = run_cli("evaluate --run perfect --manifest " + manifest.string());
    REQUIRE_MESSAGE(r.exit_code == 0, r.err);

    json summary = parse_file(out / "evaluate_summary.json");
    CHECK(summary.at("mrr").get<double>() == 1.0);
    CHECK(summary.at("ndcg3").get<double>() == 1.0);
    CHECK(summary.at("recall10").get<double>() == 1.0);
    CHECK(summary.at("recall100").get<double>() == 1.0);
    CHECK(summary.at("evaluated").get<int>() == 2);
    CHECK(summary.at("skipped").get<int>() == 0);

    std::string csv = slurp(out / "eval_perfect.csv");
    CHECK(csv.rfind("qid,depth,nnz,", 0) == 0);
}

TEST_CASE("sweep-lambda writes one csv row per sparsity weight") {
    fs::path out;
    fs::path manifest = clone_pipeline("sweep", &out,
                                       json{{"sweep_lambda_q", {0.0, 0.01}}});
    CliResult r = run_cli("sweep-lambda --manifest " + manifest.string());
    REQUIRE_MESSAGE(r.exit_code == 0, r.err);

    std::ifstream csv(out / "sweep_lambda.csv");
    REQUIRE(bool(csv));
    std::string header;
    REQUIRE(std::getline(csv, header));
    CHECK(header == "lambda_q,mean_query_nnz,flops,mrr");

    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(csv, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        REQUIRE(row.size() == 4);
        rows.push_back(row);
    }
    REQUIRE(rows.size() == 2);
    CHECK(rows[0][0] == 0.0);
    CHECK(rows[1][0] == 0.01);
    for (const auto& row : rows) {
        CHECK(row[1] > 0.0);
        CHECK(row[2] >= 0.0);
        CHECK(row[3] >= 0.0);
        CHECK(row[3] <= 1.0);
    }

    json summary = parse_file(out / "sweep_lambda_summary.json");
    CHECK(summary.at("rows").size() == 2);
}

TEST_CASE("the same manifest reproduces every artifact byte for byte") {
    const std::vector<std::string> steps = {
        "synth",
        "index",
        "teacher-scores",
        "train --objective disco_kld",
        "retrieve --mode student --objective disco_kld --split test",
        "evaluate --run disco_kld",
    };
    fs::path dirs[2];
    for (int i = 0; i < 2; ++i) {
        fs::path dir = fresh_dir("repro_" + std::to_string(i));
        fs::path manifest = write_manifest(dir, base_manifest(dir / "out"));
        for (const auto& step : steps) {
            CliResult r = run_cli(step + " --manifest " + manifest.string());
            REQUIRE_MESSAGE(r.exit_code == 0, step << ": " << r.err);
        }
        dirs[i] = dir / "out";
    }

    const std::vector<std::string> byte_identical = {
        "vocab.txt",          "corpus.jsonl",
        "conversations.jsonl", "qrels.trec",
        "teacher.ckpt.json",  "encoded_corpus.jsonl",
        "scores.jsonl",       "examples.jsonl",
        "student_disco_kld.ckpt.json",
        "train_report_disco_kld.csv",
        "run_disco_kld.trec", "run_disco_kld.reps.jsonl",
        "eval_disco_kld.json", "eval_disco_kld.csv",
    };
    for (const auto& name : byte_identical) {
        std::string a = slurp(dirs[0] / name);
        std::string b = slurp(dirs[1] / name);
        REQUIRE_MESSAGE(!a.empty(), name << " missing in first run");
        CHECK_MESSAGE(a == b, name << " differs between identical runs");
    }

    // Reports and summaries embed the output directory and wall-clock data;
    // compare them with those normalized away.
    const std::vector<std::string> normalized_identical = {
        "train_report_disco_kld.json", "synth_summary.json",
        "index_summary.json",          "teacher_scores_summary.json",
        "train_summary.json",          "retrieve_summary.json",
        "evaluate_summary.json",
    };
    for (const auto& name : normalized_identical) {
        std::string a = normalized(slurp(dirs[0] / name), dirs[0].parent_path().string());
        std::string b = normalized(slurp(dirs[1] / name), dirs[1].parent_path().string());
        REQUIRE_MESSAGE(!a.empty(), name << " missing in first run");
        CHECK_MESSAGE(a == b, name << " differs between identical runs");
    }
}

TEST_CASE("the seed flag changes the generated data") {
    fs::path dir = fresh_dir("seed_flag");
    json m = base_manifest(dir / "never");
    fs::path manifest = write_manifest(dir, m);

    CliResult a = run_cli("synth --out " + (dir / "out1").string() + " --manifest " +
                          manifest.string());
    REQUIRE_MESSAGE(a.exit_code == 0, a.err);
    CliResult b = run_cli("synth --seed 2 --out " + (dir / "out2").string() + " --manifest " +
                          manifest.string());
    REQUIRE_MESSAGE(b.exit_code == 0, b.err);

    CHECK_MESSAGE(!fs::exists(dir / "never"),
                  "--out must fully redirect the output directory");
    std::string corpus1 = slurp(dir / "out1" / "corpus.jsonl");
    std::string corpus2 = slurp(dir / "out2" / "corpus.jsonl");
    REQUIRE(!corpus1.empty());
    REQUIRE(!corpus2.empty());
    CHECK(corpus1 != corpus2);
}

int main(int argc, char** argv) {
    std::vector<char*> passthrough;
    for (int i = 0; i < argc; ++i) {
        if (std::string(argv[i]) == "--cli" && i + 1 < argc) {
            g_cli = argv[i + 1];
            ++i;
            continue;
        }
        passthrough.push_back(argv[i]);
    }
    if (g_cli.empty()) {
        std::fprintf(stderr, "usage: cli_tests --cli <path-to-disco-binary> [doctest args]\n");
        return 1;
    }
    if (!fs::exists(g_cli)) {
        std::fprintf(stderr, "cli binary not found: %s\n", g_cli.c_str());
        return 1;
    }
    doctest::Context context(static_cast<int>(passthrough.size()), passthrough.data());
    return context.run();
}
