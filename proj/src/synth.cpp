#include "disco/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "disco/index.hpp"
#include "disco/rng.hpp"

namespace disco {

namespace {

constexpr int kTopicWidth = 6;
constexpr int kMinFillers = 8;
constexpr int kDocFillerTokens = 12;
constexpr int kAnswerTokens = 10;

std::string pad_id(const char* prefix, int n, int width) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%0*d", prefix, width, n);
    return buf;
}

struct TokenLayout {
    std::vector<std::string> tokens;
    int topic_start = 0;  // num_topics * kTopicWidth topic words
    int attr_start = 0;   // 2 * docs_per_topic attributes shared across topics
    int filler_start = 0;
    int filler_count = 0;

    std::string topic_word(int topic, int k) const {
        return tokens[static_cast<size_t>(topic_start + topic * kTopicWidth + k)];
    }
    std::string attr(int k) const { return tokens[static_cast<size_t>(attr_start + k)]; }
    std::string filler(int k) const { return tokens[static_cast<size_t>(filler_start + k)]; }
};

TokenLayout make_layout(const SynthConfig& cfg) {
    TokenLayout layout;
    layout.tokens.push_back("[SEP]");
    layout.topic_start = 1;
    for (int t = 0; t < cfg.num_topics; ++t) {
        for (int k = 0; k < kTopicWidth; ++k) {
            layout.tokens.push_back("topic" + std::to_string(t) + "w" + std::to_string(k));
        }
    }
    layout.attr_start = static_cast<int>(layout.tokens.size());
    for (int k = 0; k < 2 * cfg.docs_per_topic; ++k) {
        layout.tokens.push_back("attr" + std::to_string(k));
    }
    layout.filler_start = static_cast<int>(layout.tokens.size());
    layout.filler_count = cfg.vocab_size - layout.filler_start;
    for (int k = 0; k < layout.filler_count; ++k) {
        layout.tokens.push_back("filler" + std::to_string(k));
    }
    return layout;
}

std::string join(const std::vector<std::string>& tokens) {
    std::ostringstream oss;
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (i) oss << ' ';
        oss << tokens[i];
    }
    return oss.str();
}

SynthData generate_once(const SynthConfig& cfg, uint64_t seed) {
    Rng rng(seed);
    TokenLayout layout = make_layout(cfg);
    SynthData data;
    data.vocab = Vocabulary(layout.tokens);

    // Doc (topic, slot): slot's attribute pair recurs in every topic, so the
    // pair alone is ambiguous and the topic words disambiguate.
    for (int t = 0; t < cfg.num_topics; ++t) {
        for (int j = 0; j < cfg.docs_per_topic; ++j) {
            std::string a0 = layout.attr(2 * j);
            std::string a1 = layout.attr(2 * j + 1);
            std::vector<size_t> tw = rng.sample_without_replacement(kTopicWidth, 3);
            std::string t0 = layout.topic_word(t, static_cast<int>(tw[0]));
            std::string t1 = layout.topic_word(t, static_cast<int>(tw[1]));
            std::string t2 = layout.topic_word(t, static_cast<int>(tw[2]));
            std::vector<std::string> tokens = {a0, a1, t0, t1, a0, t2, a1, t0};
            for (int f = 0; f < kDocFillerTokens; ++f) {
                tokens.push_back(
                    layout.filler(static_cast<int>(rng.index(static_cast<size_t>(layout.filler_count)))));
            }
            data.corpus.add(pad_id("d", t * cfg.docs_per_topic + j, 3), join(tokens));
        }
    }

    for (int c = 0; c < cfg.num_conversations; ++c) {
        Conversation conv;
        conv.id = pad_id("c", c, 2);
        int topic = static_cast<int>(rng.index(static_cast<size_t>(cfg.num_topics)));
        for (int k = 0; k < cfg.turns_per_conversation; ++k) {
            bool switched = false;
            if (k > 0 && cfg.num_topics > 1 && rng.bernoulli(cfg.topic_switch_prob)) {
                switched = true;
                topic = (topic + 1 +
                         static_cast<int>(rng.index(static_cast<size_t>(cfg.num_topics - 1)))) %
                        cfg.num_topics;
            }
            int slot = static_cast<int>(rng.index(static_cast<size_t>(cfg.docs_per_topic)));
            std::string doc_id = pad_id("d", topic * cfg.docs_per_topic + slot, 3);

            std::vector<size_t> tw = rng.sample_without_replacement(kTopicWidth, 2);
            std::string t0 = layout.topic_word(topic, static_cast<int>(tw[0]));
            std::string t1 = layout.topic_word(topic, static_cast<int>(tw[1]));
            std::string filler =
                layout.filler(static_cast<int>(rng.index(static_cast<size_t>(layout.filler_count))));
            std::vector<std::string> full = {layout.attr(2 * slot), layout.attr(2 * slot + 1), t0,
                                             t1, filler};

            // Topic tokens can only be dropped when history carries them: not
            // on the opening turn and not when the turn introduces a topic.
            bool omit = k > 0 && !switched && rng.bernoulli(cfg.omission_rate);

            Turn turn;
            if (omit) {
                turn.utterance = join({full[0], full[1], filler});
                turn.rewrites["human"] = turn.utterance + " " + t0 + " " + t1;
            } else {
                turn.utterance = join(full);
                turn.rewrites["human"] = turn.utterance;
            }

            for (const char* tag : {"llm_a", "llm_b"}) {
                std::vector<std::string> noisy = tokenize(turn.rewrites["human"]);
                if (rng.bernoulli(0.2) && omit) {
                    noisy.pop_back();
                }
                if (rng.bernoulli(0.2)) {
                    noisy.push_back(layout.filler(
                        static_cast<int>(rng.index(static_cast<size_t>(layout.filler_count)))));
                }
                turn.rewrites[tag] = join(noisy);
            }

            // The answer paraphrases the doc with its topic words and fillers;
            // repeating the attribute pair here would let stale attributes
            // drown out the current turn in a pooled conversation encoding.
            std::vector<std::string> answer_tokens;
            for (const std::string& tok : tokenize(data.corpus.text_of(doc_id))) {
                if (tok.rfind("attr", 0) == 0) continue;
                if (std::find(answer_tokens.begin(), answer_tokens.end(), tok) !=
                    answer_tokens.end()) {
                    continue;
                }
                answer_tokens.push_back(tok);
                if (answer_tokens.size() == kAnswerTokens) break;
            }
            turn.answer = join(answer_tokens);
            turn.relevant.push_back(doc_id);
            data.qrels.add(query_id(conv.id, k), doc_id, 1);
            conv.turns.push_back(std::move(turn));
        }
        data.conversations.push_back(std::move(conv));
    }
    return data;
}

// Mean Recall@10 gap between gold rewrites and raw utterances.
double gold_advantage(const SynthData& data, const EncoderModel& verifier) {
    EncodedCorpus enc = encode_corpus(data.corpus, verifier, data.vocab);
    InvertedIndex index = InvertedIndex::build(enc);
    double gold_total = 0.0;
    double raw_total = 0.0;
    size_t n = 0;
    for (const auto& conv : data.conversations) {
        for (size_t k = 0; k < conv.turns.size(); ++k) {
            const Turn& turn = conv.turns[k];
            auto hits = [&](const std::string& text) {
                std::vector<int32_t> ids = token_ids(text, data.vocab);
                if (ids.empty()) return 0.0;
                RunList run = index.search(verifier.encode(ids), 10);
                for (const auto& e : run.entries) {
                    if (e.doc_id == turn.relevant.front()) return 1.0;
                }
                return 0.0;
            };
            gold_total += hits(turn.rewrites.at("human"));
            raw_total += hits(turn.utterance);
            ++n;
        }
    }
    return (gold_total - raw_total) / static_cast<double>(n);
}

}  // namespace

void SynthConfig::validate() const {
    if (vocab_size <= 0 || num_topics <= 0 || docs_per_topic <= 0 || num_conversations <= 0 ||
        turns_per_conversation <= 0) {
        throw std::invalid_argument("synth config: all counts must be positive");
    }
    if (topic_switch_prob < 0.0 || topic_switch_prob > 1.0 || omission_rate < 0.0 ||
        omission_rate > 1.0) {
        throw std::invalid_argument("synth config: probabilities must lie in [0, 1]");
    }
    int reserved = 1 + num_topics * kTopicWidth + 2 * docs_per_topic;
    if (vocab_size < reserved + kMinFillers) {
        throw std::invalid_argument(
            "synth config: unsatisfiable config, vocab of " + std::to_string(vocab_size) +
            " cannot hold " + std::to_string(reserved) + " structural tokens plus " +
            std::to_string(kMinFillers) + " fillers");
    }
}

std::string query_id(const std::string& conversation_id, int turn) {
    return conversation_id + "_t" + std::to_string(turn);
}

SynthData generate_synthetic(const SynthConfig& cfg, const EncoderModel* verifier) {
    cfg.validate();

    EncoderModel fallback;
    if (!verifier) {
        EncoderConfig ec;
        ec.hidden_dim = cfg.vocab_size;
        ec.vocab_size = cfg.vocab_size;
        fallback = EncoderModel::tied_lexical_init(ec, derive_seed(cfg.seed, "verifier"));
        fallback.freeze();
        verifier = &fallback;
    }
    if (verifier->config().vocab_size != cfg.vocab_size) {
        throw std::invalid_argument("synth: verifier vocab size " +
                                    std::to_string(verifier->config().vocab_size) +
                                    " does not match config vocab size " +
                                    std::to_string(cfg.vocab_size));
    }

    bool check = cfg.omission_rate > 0.0 && cfg.turns_per_conversation > 1;
    constexpr int kMaxAttempts = 50;
    uint64_t seed = cfg.seed;
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        SynthData data = generate_once(cfg, seed);
        if (!check || gold_advantage(data, *verifier) > 0.0) {
            return data;
        }
        seed = derive_seed(cfg.seed, "retry", static_cast<uint64_t>(attempt + 1));
    }
    throw std::runtime_error(
        "synth: could not generate data where gold rewrites beat raw utterances; "
        "the config may leave too few turns with omitted topic tokens");
}

}  // namespace disco
