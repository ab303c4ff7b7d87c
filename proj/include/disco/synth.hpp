#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "disco/data.hpp"
#include "disco/encoder.hpp"
#include "disco/eval.hpp"
#include "disco/sparse.hpp"

namespace disco {

struct SynthConfig {
    int32_t vocab_size = 400;
    int num_topics = 12;
    int docs_per_topic = 12;
    int num_conversations = 40;
    int turns_per_conversation = 6;
    double topic_switch_prob = 0.3;
    // chance that a continuation turn drops its topic tokens, leaving them
    // recoverable only from the conversation history
    double omission_rate = 0.7;
    uint64_t seed = 1;

    void validate() const;
};

struct SynthData {
    Vocabulary vocab;
    Corpus corpus;
    std::vector<Conversation> conversations;
    Qrels qrels;
};

// Topic-structured corpus plus conversations whose turns sometimes omit the
// topic tokens that identify the target document among its cross-topic
// twins; the gold rewrite ("human" tag) restores them. Deterministic for a
// fixed seed. When omission can occur, generation verifies that the gold
// rewrites beat the raw utterances on Recall@10 under `verifier` (or an
// internally built lexical encoder when null) and deterministically retries
// with a derived seed until they do.
SynthData generate_synthetic(const SynthConfig& cfg, const EncoderModel* verifier = nullptr);

// Query id convention shared by qrels, runs, and training examples.
std::string query_id(const std::string& conversation_id, int turn);

}  // namespace disco
