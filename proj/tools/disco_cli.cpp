#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "disco/data.hpp"
#include "disco/distill.hpp"
#include "disco/encoder.hpp"
#include "disco/eval.hpp"
#include "disco/index.hpp"
#include "disco/manifest.hpp"
#include "disco/rng.hpp"
#include "disco/sparse.hpp"
#include "disco/synth.hpp"
#include "disco/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace disco;

namespace {

std::string iso_timestamp() {
    std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm_utc;
    gmtime_r(&t, &tm_utc);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

void require_artifact(const std::string& path, const std::string& producer) {
    if (!fs::exists(path)) {
        throw std::runtime_error("missing required artifact: " + path + " (produced by `disco " +
                                 producer + "`)");
    }
}

void write_summary(const ExperimentManifest& m, const std::string& cmd, json body) {
    body["command"] = cmd;
    body["timestamp"] = iso_timestamp();
    fs::create_directories(m.out_dir);
    std::string path = m.out_dir + "/" + cmd + "_summary.json";
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << body.dump(2) << "\n";
}

EncoderModel build_teacher(const ExperimentManifest& m) {
    EncoderModel teacher = EncoderModel::tied_lexical_init(
        m.encoder_config(), derive_seed(m.seed, "teacher"), m.teacher_gain, m.teacher_bias);
    teacher.freeze();
    return teacher;
}

TeacherEnsemble make_ensemble(const ExperimentManifest& m,
                              std::shared_ptr<const EncoderModel> model,
                              const std::vector<std::string>& tags) {
    TeacherEnsemble ensemble;
    ensemble.aggregation = aggregation_from_string(m.aggregation);
    for (const auto& tag : tags) {
        ensemble.teachers.push_back(Teacher{tag, model, tag});
    }
    ensemble.validate();
    return ensemble;
}

std::string run_file(const ExperimentManifest& m, const std::string& tag) {
    return m.out_dir + "/run_" + tag + ".trec";
}

std::string reps_file(const ExperimentManifest& m, const std::string& tag) {
    return m.out_dir + "/run_" + tag + ".reps.jsonl";
}

void save_query_reps(const std::map<std::string, QueryMeta>& queries, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const auto& [qid, meta] : queries) {
        json j;
        j["query_id"] = qid;
        j["depth"] = meta.depth;
        j["vocab_size"] = meta.rep.vocab_size();
        auto tokens = json::array();
        auto weights = json::array();
        for (const auto& e : meta.rep.entries()) {
            tokens.push_back(e.token);
            weights.push_back(e.weight);
        }
        j["tokens"] = std::move(tokens);
        j["weights"] = std::move(weights);
        out << j.dump() << "\n";
    }
}

std::map<std::string, QueryMeta> load_query_reps(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::map<std::string, QueryMeta> queries;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        std::vector<SparseEntry> entries;
        const auto& tokens = j.at("tokens");
        const auto& weights = j.at("weights");
        if (tokens.size() != weights.size()) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": tokens/weights length mismatch");
        }
        entries.reserve(tokens.size());
        for (size_t i = 0; i < tokens.size(); ++i) {
            entries.push_back(SparseEntry{tokens[i].get<int32_t>(), weights[i].get<double>()});
        }
        QueryMeta meta;
        meta.depth = j.at("depth").get<int>();
        meta.rep = SparseVec(j.at("vocab_size").get<int32_t>(), std::move(entries));
        std::string qid = j.at("query_id").get<std::string>();
        if (!queries.emplace(qid, std::move(meta)).second) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": duplicate query id " +
                                     qid);
        }
    }
    return queries;
}

// Conversations whose index falls in [lo, hi) for the requested split.
std::pair<size_t, size_t> split_range(const ExperimentManifest& m, size_t num_conversations,
                                      const std::string& split) {
    size_t point = m.split_point(num_conversations);
    if (split == "train") return {0, point};
    if (split == "test") return {point, num_conversations};
    if (split == "all") return {0, num_conversations};
    throw std::invalid_argument("unknown split '" + split + "' (expected train, test, or all)");
}

struct RetrievalOutput {
    std::vector<RunList> runs;
    std::map<std::string, QueryMeta> queries;
};

RetrievalOutput run_retrieval(const ExperimentManifest& m, const EncoderModel& model,
                              const std::string& mode, const std::string& tag,
                              const std::vector<Conversation>& convs, const Vocabulary& vocab,
                              const InvertedIndex& index, const std::string& split, size_t k) {
    auto [lo, hi] = split_range(m, convs.size(), split);
    EncoderConfig ecfg = model.config();
    RetrievalOutput out;
    for (size_t ci = lo; ci < hi; ++ci) {
        const Conversation& conv = convs[ci];
        for (size_t t = 0; t < conv.turns.size(); ++t) {
            const Turn& turn = conv.turns[t];
            std::vector<int32_t> tokens;
            if (mode == "student") {
                tokens = flatten_conversation(conv, t, vocab, ecfg);
            } else if (mode == "teacher") {
                auto it = turn.rewrites.find("human");
                if (it == turn.rewrites.end()) {
                    throw std::runtime_error("conversation " + conv.id + " turn " +
                                             std::to_string(t) + ": no human rewrite to retrieve with");
                }
                tokens = token_ids(it->second, vocab);
            } else if (mode == "raw") {
                tokens = token_ids(turn.utterance, vocab);
            } else {
                throw std::invalid_argument("unknown retrieval mode '" + mode + "'");
            }
            std::string qid = query_id(conv.id, static_cast<int>(t));
            SparseVec rep = model.encode(tokens);
            out.runs.push_back(index.search(rep, k, qid, tag));
            QueryMeta meta;
            meta.depth = static_cast<int>(t);
            meta.rep = std::move(rep);
            out.queries.emplace(qid, std::move(meta));
        }
    }
    return out;
}

// Restricts qrels to the queries actually retrieved, so split evaluation does
// not punish a run for the other split's queries.
Qrels restrict_qrels(const Qrels& qrels, const std::map<std::string, QueryMeta>& queries) {
    Qrels sub;
    for (const auto& [qid, docs] : qrels.queries()) {
        if (queries.count(qid) == 0) continue;
        for (const auto& [doc, grade] : docs) sub.add(qid, doc, grade);
    }
    return sub;
}

void cmd_synth(const ExperimentManifest& m) {
    SynthConfig cfg = m.synth;
    cfg.seed = derive_seed(m.seed, "synth");
    EncoderModel verifier = build_teacher(m);
    SynthData data = generate_synthetic(cfg, &verifier);

    fs::create_directories(m.out_dir);
    data.vocab.save(m.vocab_file());
    save_corpus(data.corpus, m.corpus_file());
    save_conversations(data.conversations, m.conversations_file());
    data.qrels.save(m.qrels_file());

    size_t turns = 0;
    for (const auto& c : data.conversations) turns += c.turns.size();
    write_summary(m, "synth",
                  json{{"vocab_size", data.vocab.size()},
                       {"documents", data.corpus.size()},
                       {"conversations", data.conversations.size()},
                       {"turns", turns},
                       {"files",
                        {m.vocab_file(), m.corpus_file(), m.conversations_file(), m.qrels_file()}}});
    std::cout << "synth: " << data.corpus.size() << " docs, " << data.conversations.size()
              << " conversations, " << turns << " turns -> " << m.out_dir << "\n";
}

void cmd_index(const ExperimentManifest& m) {
    require_artifact(m.vocab_file(), "synth");
    require_artifact(m.corpus_file(), "synth");
    Vocabulary vocab = Vocabulary::load(m.vocab_file());
    Corpus corpus = load_corpus(m.corpus_file());

    EncoderModel teacher = build_teacher(m);
    teacher.save(m.teacher_checkpoint());

    EncodedCorpus enc = encode_corpus(corpus, teacher, vocab);
    save_encoded_corpus(enc, m.encoded_corpus_file());
    InvertedIndex index = InvertedIndex::build(enc);

    double mean_nnz = 0.0;
    for (const auto& rep : enc.reps) mean_nnz += static_cast<double>(rep.nnz());
    if (!enc.reps.empty()) mean_nnz /= static_cast<double>(enc.reps.size());

    write_summary(m, "index",
                  json{{"documents", enc.size()},
                       {"total_postings", index.total_postings()},
                       {"mean_doc_nnz", mean_nnz},
                       {"teacher_checkpoint", m.teacher_checkpoint()},
                       {"encoded_corpus", m.encoded_corpus_file()}});
    std::cout << "index: " << enc.size() << " docs, " << index.total_postings() << " postings -> "
              << m.encoded_corpus_file() << "\n";
}

void cmd_teacher_scores(const ExperimentManifest& m, std::vector<std::string> tags) {
    require_artifact(m.vocab_file(), "synth");
    require_artifact(m.conversations_file(), "synth");
    require_artifact(m.teacher_checkpoint(), "index");
    require_artifact(m.encoded_corpus_file(), "index");
    if (tags.empty()) tags = m.teacher_tags;

    Vocabulary vocab = Vocabulary::load(m.vocab_file());
    auto convs = load_conversations(m.conversations_file());
    auto model = std::make_shared<EncoderModel>(EncoderModel::load(m.teacher_checkpoint()));
    TeacherEnsemble ensemble = make_ensemble(m, model, tags);
    EncodedCorpus enc = load_encoded_corpus(m.encoded_corpus_file());
    InvertedIndex index = InvertedIndex::build(enc);

    size_t num_negatives = static_cast<size_t>(m.train.num_negatives);
    std::vector<ScoreRecord> records;
    std::vector<TrainingExample> examples;
    size_t flagged = 0;
    size_t split = m.split_point(convs.size());
    for (size_t ci = 0; ci < split; ++ci) {
        const Conversation& conv = convs[ci];
        for (size_t t = 0; t < conv.turns.size(); ++t) {
            const Turn& turn = conv.turns[t];
            if (turn.relevant.empty()) continue;
            std::string qid = query_id(conv.id, static_cast<int>(t));

            std::map<std::string, std::vector<int32_t>> rewrites;
            for (const auto& tag : tags) {
                auto it = turn.rewrites.find(tag);
                if (it == turn.rewrites.end()) {
                    throw std::runtime_error("conversation " + conv.id + " turn " +
                                             std::to_string(t) + ": missing rewrite tag '" + tag +
                                             "'");
                }
                rewrites[tag] = token_ids(it->second, vocab);
            }

            MiningResult mined =
                mine_hard_negatives(ensemble, rewrites, index, turn.relevant, m.mine_pool_size,
                                    num_negatives, derive_seed(m.seed, "mine:" + qid));
            if (mined.random_fill) ++flagged;

            std::vector<std::string> candidates;
            candidates.reserve(1 + mined.negatives.size());
            candidates.push_back(turn.relevant.front());
            for (const auto& d : mined.negatives) candidates.push_back(d);
            std::vector<ScoreRecord> turn_records =
                teacher_scores(ensemble, rewrites, candidates, enc, conv.id, static_cast<int>(t));

            TrainingExample ex;
            ex.conversation_id = conv.id;
            ex.turn = static_cast<int>(t);
            ex.q_conv = flatten_conversation(conv, t, vocab, m.encoder_config());
            ex.rewrites = rewrites;
            ex.positive = candidates.front();
            ex.negatives = mined.negatives;
            ex.positive_score = turn_records.front().aggregate;
            for (size_t i = 1; i < turn_records.size(); ++i) {
                ex.negative_scores.push_back(turn_records[i].aggregate);
            }
            ex.flagged = mined.random_fill;
            ex.validate();
            examples.push_back(std::move(ex));
            for (auto& r : turn_records) records.push_back(std::move(r));
        }
    }

    save_score_records(records, m.scores_file());
    save_examples(examples, m.examples_file());
    write_summary(m, "teacher_scores",
                  json{{"teachers", tags},
                       {"aggregation", m.aggregation},
                       {"examples", examples.size()},
                       {"score_records", records.size()},
                       {"random_fill_examples", flagged},
                       {"pool_size", m.mine_pool_size}});
    std::cout << "teacher-scores: " << examples.size() << " examples (" << flagged
              << " random-filled) -> " << m.examples_file() << "\n";
}

void cmd_train(const ExperimentManifest& m, const std::string& objective) {
    require_artifact(m.examples_file(), "teacher-scores");
    require_artifact(m.teacher_checkpoint(), "index");
    require_artifact(m.encoded_corpus_file(), "index");

    TrainConfig cfg = m.train;
    cfg.objective = objective_from_string(objective);
    cfg.seed = derive_seed(m.seed, "train");

    auto examples = load_examples(m.examples_file());
    auto model = std::make_shared<EncoderModel>(EncoderModel::load(m.teacher_checkpoint()));
    TeacherEnsemble ensemble = make_ensemble(m, model, m.teacher_tags);
    EncodedCorpus enc = load_encoded_corpus(m.encoded_corpus_file());

    // The student starts from the teacher's weights (standard for distilled
    // retrievers) and diverges as it learns to read the raw conversation.
    EncoderModel student = EncoderModel::tied_lexical_init(
        m.encoder_config(), derive_seed(m.seed, "teacher"), m.teacher_gain, m.teacher_bias);
    std::string ckpt_dir = m.out_dir + "/ckpt_" + objective;
    auto [trained, report] = train(cfg, examples, student, ensemble, enc, ckpt_dir);

    std::string student_path = m.out_dir + "/student_" + objective + ".ckpt.json";
    trained.save(student_path);
    report.save_json(m.out_dir + "/train_report_" + objective + ".json");
    report.save_csv(m.out_dir + "/train_report_" + objective + ".csv");

    write_summary(m, "train",
                  json{{"objective", objective},
                       {"examples", examples.size()},
                       {"epochs", cfg.epochs},
                       {"final_mean_kld", report.final_mean_kld},
                       {"final_distill", report.epochs.back().distill},
                       {"student_checkpoint", student_path}});
    std::cout << "train[" << objective << "]: " << cfg.epochs << " epochs, final distill "
              << report.epochs.back().distill << ", mean kld " << report.final_mean_kld << " -> "
              << student_path << "\n";
}

void cmd_retrieve(const ExperimentManifest& m, const std::string& mode,
                  const std::string& objective, const std::string& split, size_t k) {
    require_artifact(m.vocab_file(), "synth");
    require_artifact(m.conversations_file(), "synth");
    require_artifact(m.encoded_corpus_file(), "index");

    std::string tag;
    EncoderModel model;
    if (mode == "student") {
        std::string student_path = m.out_dir + "/student_" + objective + ".ckpt.json";
        require_artifact(student_path, "train --objective " + objective);
        model = EncoderModel::load(student_path);
        tag = objective;
    } else if (mode == "teacher" || mode == "raw") {
        require_artifact(m.teacher_checkpoint(), "index");
        model = EncoderModel::load(m.teacher_checkpoint());
        tag = mode;
    } else {
        throw std::invalid_argument("unknown retrieval mode '" + mode + "'");
    }

    Vocabulary vocab = Vocabulary::load(m.vocab_file());
    auto convs = load_conversations(m.conversations_file());
    EncodedCorpus enc = load_encoded_corpus(m.encoded_corpus_file());
    InvertedIndex index = InvertedIndex::build(enc);

    RetrievalOutput out = run_retrieval(m, model, mode, tag, convs, vocab, index, split, k);
    save_runs(out.runs, run_file(m, tag));
    save_query_reps(out.queries, reps_file(m, tag));

    write_summary(m, "retrieve",
                  json{{"tag", tag},
                       {"mode", mode},
                       {"split", split},
                       {"k", k},
                       {"queries", out.queries.size()},
                       {"run", run_file(m, tag)}});
    std::cout << "retrieve[" << tag << "]: " << out.queries.size() << " queries, top-" << k
              << " -> " << run_file(m, tag) << "\n";
}

void cmd_fuse(const ExperimentManifest& m, const std::string& tag_a, const std::string& tag_b) {
    require_artifact(run_file(m, tag_a), "retrieve");
    require_artifact(run_file(m, tag_b), "retrieve");
    require_artifact(reps_file(m, tag_a), "retrieve");

    auto runs_a = load_runs(run_file(m, tag_a));
    auto runs_b = load_runs(run_file(m, tag_b));
    std::map<std::string, const RunList*> by_qid_b;
    for (const auto& r : runs_b) by_qid_b[r.query_id] = &r;

    std::vector<RunList> fused;
    std::map<std::string, bool> seen;
    for (const auto& a : runs_a) {
        seen[a.query_id] = true;
        auto it = by_qid_b.find(a.query_id);
        if (it != by_qid_b.end()) {
            fused.push_back(fuse(a, *it->second));
        } else {
            RunList empty_b;
            empty_b.query_id = a.query_id;
            empty_b.tag = tag_b;
            fused.push_back(fuse(a, empty_b));
        }
    }
    for (const auto& b : runs_b) {
        if (seen.count(b.query_id)) continue;
        RunList empty_a;
        empty_a.query_id = b.query_id;
        empty_a.tag = tag_a;
        fused.push_back(fuse(empty_a, b));
    }

    save_runs(fused, run_file(m, "fusion"));
    fs::copy_file(reps_file(m, tag_a), reps_file(m, "fusion"),
                  fs::copy_options::overwrite_existing);

    write_summary(m, "fuse",
                  json{{"inputs", {tag_a, tag_b}},
                       {"queries", fused.size()},
                       {"run", run_file(m, "fusion")}});
    std::cout << "fuse: " << tag_a << " + " << tag_b << " over " << fused.size()
              << " queries -> " << run_file(m, "fusion") << "\n";
}

void cmd_evaluate(const ExperimentManifest& m, const std::string& tag) {
    require_artifact(run_file(m, tag), "retrieve");
    require_artifact(reps_file(m, tag), "retrieve");
    require_artifact(m.qrels_file(), "synth");
    require_artifact(m.encoded_corpus_file(), "index");

    auto runs = load_runs(run_file(m, tag));
    auto queries = load_query_reps(reps_file(m, tag));
    Qrels qrels = restrict_qrels(Qrels::load(m.qrels_file()), queries);
    EncodedCorpus enc = load_encoded_corpus(m.encoded_corpus_file());

    EvalReport report = evaluate(runs, qrels, queries, enc.reps);
    report.save_json(m.out_dir + "/eval_" + tag + ".json");
    report.save_csv(m.out_dir + "/eval_" + tag + ".csv");

    json summary{{"tag", tag},
                 {"mrr", report.mrr},
                 {"ndcg3", report.ndcg3},
                 {"flops", report.flops},
                 {"mean_query_nnz", report.mean_query_nnz},
                 {"evaluated", report.evaluated},
                 {"skipped", report.skipped}};
    for (const auto& [k, v] : report.recall) summary["recall" + std::to_string(k)] = v;
    write_summary(m, "evaluate", summary);
    std::cout << "evaluate[" << tag << "]: mrr " << report.mrr << ", ndcg@3 " << report.ndcg3;
    for (const auto& [k, v] : report.recall) std::cout << ", recall@" << k << " " << v;
    std::cout << " over " << report.evaluated << " queries\n";
}

void cmd_sweep_lambda(const ExperimentManifest& m) {
    require_artifact(m.vocab_file(), "synth");
    require_artifact(m.conversations_file(), "synth");
    require_artifact(m.qrels_file(), "synth");
    require_artifact(m.teacher_checkpoint(), "index");
    require_artifact(m.encoded_corpus_file(), "index");
    require_artifact(m.examples_file(), "teacher-scores");

    Vocabulary vocab = Vocabulary::load(m.vocab_file());
    auto convs = load_conversations(m.conversations_file());
    Qrels qrels = Qrels::load(m.qrels_file());
    auto examples = load_examples(m.examples_file());
    auto model = std::make_shared<EncoderModel>(EncoderModel::load(m.teacher_checkpoint()));
    TeacherEnsemble ensemble = make_ensemble(m, model, m.teacher_tags);
    EncodedCorpus enc = load_encoded_corpus(m.encoded_corpus_file());
    InvertedIndex index = InvertedIndex::build(enc);

    EncoderModel student = EncoderModel::tied_lexical_init(
        m.encoder_config(), derive_seed(m.seed, "teacher"), m.teacher_gain, m.teacher_bias);

    std::string csv_path = m.out_dir + "/sweep_lambda.csv";
    std::ofstream csv(csv_path);
    if (!csv) throw std::runtime_error("cannot write " + csv_path);
    csv << "lambda_q,mean_query_nnz,flops,mrr\n";
    char buf[64];
    auto fmt = [&buf](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };

    json rows = json::array();
    for (double lambda : m.sweep_lambda_q) {
        TrainConfig cfg = m.train;
        cfg.objective = Objective::disco_kld;
        cfg.lambda_q = lambda;
        cfg.seed = derive_seed(m.seed, "train");
        auto [trained, report] = train(cfg, examples, student, ensemble, enc);

        RetrievalOutput out = run_retrieval(m, trained, "student", "disco_kld", convs, vocab,
                                            index, "test", m.retrieve_k);
        Qrels sub = restrict_qrels(qrels, out.queries);
        EvalReport eval_report = evaluate(out.runs, sub, out.queries, enc.reps);

        csv << fmt(lambda) << ',' << fmt(eval_report.mean_query_nnz) << ','
            << fmt(eval_report.flops) << ',' << fmt(eval_report.mrr) << '\n';
        rows.push_back(json{{"lambda_q", lambda},
                            {"mean_query_nnz", eval_report.mean_query_nnz},
                            {"flops", eval_report.flops},
                            {"mrr", eval_report.mrr}});
        std::cout << "sweep lambda_q=" << lambda << ": nnz " << eval_report.mean_query_nnz
                  << ", flops " << eval_report.flops << ", mrr " << eval_report.mrr << "\n";
    }
    write_summary(m, "sweep_lambda", json{{"rows", rows}, {"csv", csv_path}});
    std::cout << "sweep-lambda: " << m.sweep_lambda_q.size() << " points -> " << csv_path << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"learned sparse retrieval with conversational score distillation"};
    app.require_subcommand(1);

    std::string manifest_path;
    uint64_t seed_override = 0;
    std::string out_override;
    std::string objective = "disco_kld";
    std::string mode = "student";
    std::string split = "test";
    std::string teachers_csv;
    std::string tag = "disco_kld";
    std::string fuse_a = "disco_kld";
    std::string fuse_b = "teacher";
    size_t k = 100;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--manifest", manifest_path, "experiment manifest path")->required();
        sub->add_option("--seed", seed_override, "override the manifest seed");
        sub->add_option("--out", out_override, "override the manifest output directory");
    };

    CLI::App* synth = app.add_subcommand("synth", "generate the synthetic corpus and dialogues");
    add_common(synth);
    CLI::App* index_cmd =
        app.add_subcommand("index", "initialize the teacher and encode + index the corpus");
    add_common(index_cmd);
    CLI::App* scores =
        app.add_subcommand("teacher-scores", "mine hard negatives and score training candidates");
    add_common(scores);
    scores->add_option("--teachers", teachers_csv, "comma-separated rewrite tags to use");
    CLI::App* train_cmd = app.add_subcommand("train", "distill a student encoder");
    add_common(train_cmd);
    train_cmd->add_option("--objective", objective, "training objective")
        ->check(CLI::IsMember({"disco_kld", "convdr_mse", "infonce_only"}));
    CLI::App* retrieve = app.add_subcommand("retrieve", "run top-k retrieval over a split");
    add_common(retrieve);
    retrieve->add_option("--k", k, "results per query");
    retrieve->add_option("--mode", mode, "query encoder to use")
        ->check(CLI::IsMember({"student", "teacher", "raw"}));
    retrieve->add_option("--objective", objective, "which student checkpoint (student mode)")
        ->check(CLI::IsMember({"disco_kld", "convdr_mse", "infonce_only"}));
    retrieve->add_option("--split", split, "conversation split")
        ->check(CLI::IsMember({"train", "test", "all"}));
    CLI::App* fuse_cmd = app.add_subcommand("fuse", "fuse two runs by averaged normalized score");
    add_common(fuse_cmd);
    fuse_cmd->add_option("--a", fuse_a, "first run tag");
    fuse_cmd->add_option("--b", fuse_b, "second run tag");
    CLI::App* eval_cmd = app.add_subcommand("evaluate", "score a run against the qrels");
    add_common(eval_cmd);
    eval_cmd->add_option("--run", tag, "run tag to evaluate");
    CLI::App* sweep =
        app.add_subcommand("sweep-lambda", "train and evaluate across query-sparsity weights");
    add_common(sweep);

    CLI11_PARSE(app, argc, argv);

    try {
        ExperimentManifest m = ExperimentManifest::load(manifest_path);
        CLI::App* sub = app.get_subcommands().front();
        if (sub->count("--seed") > 0) m.seed = seed_override;
        if (sub->count("--out") > 0) m.out_dir = out_override;

        if (sub == synth) {
            cmd_synth(m);
        } else if (sub == index_cmd) {
            cmd_index(m);
        } else if (sub == scores) {
            std::vector<std::string> tags;
            if (!teachers_csv.empty()) {
                std::stringstream ss(teachers_csv);
                std::string item;
                while (std::getline(ss, item, ',')) {
                    if (!item.empty()) tags.push_back(item);
                }
            }
            cmd_teacher_scores(m, tags);
        } else if (sub == train_cmd) {
            cmd_train(m, objective);
        } else if (sub == retrieve) {
            if (retrieve->count("--k") == 0) k = m.retrieve_k;
            cmd_retrieve(m, mode, objective, split, k);
        } else if (sub == fuse_cmd) {
            cmd_fuse(m, fuse_a, fuse_b);
        } else if (sub == eval_cmd) {
            cmd_evaluate(m, tag);
        } else if (sub == sweep) {
            cmd_sweep_lambda(m);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
