#include "disco/manifest.hpp"

#include <cmath>
#include <fstream>
#include <algorithm>
#include <stdexcept>

#include "json.hpp"

namespace disco {

namespace {

std::string join(const std::string& dir, const std::string& name) {
    if (dir.empty()) return name;
    if (dir.back() == '/') return dir + name;
    return dir + "/" + name;
}

}  // namespace

ExperimentManifest ExperimentManifest::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw std::runtime_error("invalid manifest JSON in " + path + ": " + e.what());
    }

    ExperimentManifest m;
    m.out_dir = j.value("out_dir", m.out_dir);
    m.seed = j.value("seed", m.seed);
    m.hidden_dim = j.value("hidden_dim", m.hidden_dim);
    m.teacher_gain = j.value("teacher_gain", m.teacher_gain);
    m.teacher_bias = j.value("teacher_bias", m.teacher_bias);
    m.max_context_tokens = j.value("max_context_tokens", m.max_context_tokens);

    if (j.contains("synth")) {
        const auto& s = j.at("synth");
        m.synth.vocab_size = s.value("vocab_size", m.synth.vocab_size);
        m.synth.num_topics = s.value("num_topics", m.synth.num_topics);
        m.synth.docs_per_topic = s.value("docs_per_topic", m.synth.docs_per_topic);
        m.synth.num_conversations = s.value("num_conversations", m.synth.num_conversations);
        m.synth.turns_per_conversation = s.value("turns_per_conversation", m.synth.turns_per_conversation);
        m.synth.topic_switch_prob = s.value("topic_switch_prob", m.synth.topic_switch_prob);
        m.synth.omission_rate = s.value("omission_rate", m.synth.omission_rate);
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        m.train.epochs = t.value("epochs", m.train.epochs);
        m.train.learning_rate = t.value("learning_rate", m.train.learning_rate);
        m.train.batch_size = t.value("batch_size", m.train.batch_size);
        m.train.num_negatives = t.value("num_negatives", m.train.num_negatives);
        m.train.lambda_q = t.value("lambda_q", m.train.lambda_q);
        m.train.lambda_d = t.value("lambda_d", m.train.lambda_d);
        m.train.temperature = t.value("temperature", m.train.temperature);
    }
    if (j.contains("teacher_tags")) m.teacher_tags = j.at("teacher_tags").get<std::vector<std::string>>();
    m.aggregation = j.value("aggregation", m.aggregation);
    m.mine_pool_size = j.value("mine_pool_size", m.mine_pool_size);
    m.retrieve_k = j.value("retrieve_k", m.retrieve_k);
    m.test_fraction = j.value("test_fraction", m.test_fraction);
    if (j.contains("sweep_lambda_q")) m.sweep_lambda_q = j.at("sweep_lambda_q").get<std::vector<double>>();

    m.vocab_path = j.value("vocab_path", m.vocab_path);
    m.corpus_path = j.value("corpus_path", m.corpus_path);
    m.conversations_path = j.value("conversations_path", m.conversations_path);
    m.qrels_path = j.value("qrels_path", m.qrels_path);

    m.validate();
    return m;
}

void ExperimentManifest::save(const std::string& path) const {
    validate();
    nlohmann::json j;
    j["out_dir"] = out_dir;
    j["seed"] = seed;
    j["hidden_dim"] = hidden_dim;
    j["teacher_gain"] = teacher_gain;
    j["teacher_bias"] = teacher_bias;
    j["max_context_tokens"] = max_context_tokens;
    j["synth"] = {
        {"vocab_size", synth.vocab_size},
        {"num_topics", synth.num_topics},
        {"docs_per_topic", synth.docs_per_topic},
        {"num_conversations", synth.num_conversations},
        {"turns_per_conversation", synth.turns_per_conversation},
        {"topic_switch_prob", synth.topic_switch_prob},
        {"omission_rate", synth.omission_rate},
    };
    j["train"] = {
        {"epochs", train.epochs},
        {"learning_rate", train.learning_rate},
        {"batch_size", train.batch_size},
        {"num_negatives", train.num_negatives},
        {"lambda_q", train.lambda_q},
        {"lambda_d", train.lambda_d},
        {"temperature", train.temperature},
    };
    j["teacher_tags"] = teacher_tags;
    j["aggregation"] = aggregation;
    j["mine_pool_size"] = mine_pool_size;
    j["retrieve_k"] = retrieve_k;
    j["test_fraction"] = test_fraction;
    j["sweep_lambda_q"] = sweep_lambda_q;
    if (!vocab_path.empty()) j["vocab_path"] = vocab_path;
    if (!corpus_path.empty()) j["corpus_path"] = corpus_path;
    if (!conversations_path.empty()) j["conversations_path"] = conversations_path;
    if (!qrels_path.empty()) j["qrels_path"] = qrels_path;

    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write manifest: " + path);
    out << j.dump(2) << "\n";
}

void ExperimentManifest::validate() const {
    if (out_dir.empty()) throw std::invalid_argument("manifest: out_dir must not be empty");
    if (hidden_dim <= 0) throw std::invalid_argument("manifest: hidden_dim must be positive");
    if (max_context_tokens <= 0) {
        throw std::invalid_argument("manifest: max_context_tokens must be positive");
    }
    synth.validate();
    train.validate();
    if (teacher_tags.empty()) throw std::invalid_argument("manifest: need at least one teacher tag");
    aggregation_from_string(aggregation);
    if (mine_pool_size == 0) throw std::invalid_argument("manifest: mine_pool_size must be positive");
    if (retrieve_k == 0) throw std::invalid_argument("manifest: retrieve_k must be positive");
    if (test_fraction < 0.0 || test_fraction >= 1.0)
        throw std::invalid_argument("manifest: test_fraction must be in [0, 1)");
}

std::string ExperimentManifest::vocab_file() const {
    return vocab_path.empty() ? join(out_dir, "vocab.txt") : vocab_path;
}
std::string ExperimentManifest::corpus_file() const {
    return corpus_path.empty() ? join(out_dir, "corpus.jsonl") : corpus_path;
}
std::string ExperimentManifest::conversations_file() const {
    return conversations_path.empty() ? join(out_dir, "conversations.jsonl") : conversations_path;
}
std::string ExperimentManifest::qrels_file() const {
    return qrels_path.empty() ? join(out_dir, "qrels.trec") : qrels_path;
}
std::string ExperimentManifest::teacher_checkpoint() const {
    return join(out_dir, "teacher.ckpt.json");
}
std::string ExperimentManifest::encoded_corpus_file() const {
    return join(out_dir, "encoded_corpus.jsonl");
}
std::string ExperimentManifest::scores_file() const {
    return join(out_dir, "scores.jsonl");
}
std::string ExperimentManifest::examples_file() const {
    return join(out_dir, "examples.jsonl");
}

EncoderConfig ExperimentManifest::encoder_config() const {
    EncoderConfig cfg;
    cfg.hidden_dim = hidden_dim;
    cfg.vocab_size = synth.vocab_size;
    cfg.max_context_tokens = max_context_tokens;
    cfg.max_query_tokens = std::min(cfg.max_query_tokens, max_context_tokens);
    return cfg;
}

size_t ExperimentManifest::split_point(size_t num_conversations) const {
    size_t test = static_cast<size_t>(std::floor(test_fraction * static_cast<double>(num_conversations)));
    if (test >= num_conversations && num_conversations > 0) test = num_conversations - 1;
    return num_conversations - test;
}

}  // namespace disco
