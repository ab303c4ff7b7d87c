#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "disco/data.hpp"
#include "disco/sparse.hpp"

namespace disco {

struct EncoderConfig {
    int32_t hidden_dim = 128;
    int32_t vocab_size = 0;
    int32_t max_query_tokens = 64;
    int32_t max_answer_tokens = 100;
    int32_t max_context_tokens = 256;
    int32_t max_doc_tokens = 256;
};

// Gradient accumulator matching EncoderModel's parameter layout.
struct EncoderGradients {
    std::vector<double> embedding;   // hidden_dim x vocab_size, token-major
    std::vector<double> projection;  // vocab_size x hidden_dim, row per output dim
    std::vector<double> bias;        // vocab_size

    explicit EncoderGradients(const EncoderConfig& cfg);
    void zero();
    size_t num_params() const;
    // Flat view in the order embedding, projection, bias.
    double param(size_t i) const;
};

// Mean-pooled token embeddings through a linear projection with a
// log1p(relu(.)) head, so outputs are non-negative and sparse once biases
// pull weak activations below zero.
class EncoderModel {
public:
    EncoderModel() = default;
    explicit EncoderModel(EncoderConfig cfg);

    // Uniform +-1/sqrt(hidden_dim) weights, zero bias.
    static EncoderModel random_init(const EncoderConfig& cfg, uint64_t seed);

    // Random embeddings with the projection tied to their transpose (scaled
    // so a token present in the input drives its own output logit toward
    // gain * frequency) and a shared negative bias that prunes cross-talk.
    // Acts as a working lexical retriever without any training.
    static EncoderModel tied_lexical_init(const EncoderConfig& cfg, uint64_t seed,
                                          double gain = 10.0, double activation_bias = -0.25);

    const EncoderConfig& config() const { return cfg_; }

    SparseVec encode(const std::vector<int32_t>& tokens) const;
    std::vector<double> encode_dense(const std::vector<int32_t>& tokens) const;

    // Accumulates d(upstream . output)/d(params) into grads. upstream is a
    // dense vocab_size vector of output-side gradients.
    void encode_backward(const std::vector<int32_t>& tokens, const std::vector<double>& upstream,
                         EncoderGradients& grads) const;

    size_t num_params() const;
    // Flat view in the order embedding, projection, bias.
    double param(size_t i) const;
    void set_param(size_t i, double v);
    void add_to_param(size_t i, double delta);

    void freeze() { frozen_ = true; }
    bool frozen() const { return frozen_; }

    const std::vector<double>& embedding() const { return embedding_; }
    const std::vector<double>& projection() const { return projection_; }
    const std::vector<double>& bias() const { return bias_; }
    std::vector<double>& mutable_embedding();
    std::vector<double>& mutable_projection();
    std::vector<double>& mutable_bias();

    void save(const std::string& path) const;
    static EncoderModel load(const std::string& path);

private:
    void check_mutable() const;
    std::vector<double> mean_pool(const std::vector<int32_t>& tokens) const;

    EncoderConfig cfg_;
    std::vector<double> embedding_;   // token t's column at [t*H, t*H+H)
    std::vector<double> projection_;  // output j's row at [j*H, j*H+H)
    std::vector<double> bias_;
    bool frozen_ = false;
};

// Flattened conversational query for the given turn: the current utterance,
// then each earlier turn's answer and utterance from newest to oldest, with
// a [SEP] token between segments. Utterances and answers are truncated to
// max_query_tokens and max_answer_tokens respectively, empty segments are
// skipped, and the result is cut to max_context_tokens (dropping the oldest
// context at the tail).
std::vector<int32_t> flatten_conversation(const Conversation& conv, size_t turn,
                                          const Vocabulary& vocab, const EncoderConfig& cfg);

}  // namespace disco
