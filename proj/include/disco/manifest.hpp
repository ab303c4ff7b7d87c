#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "disco/synth.hpp"
#include "disco/trainer.hpp"

namespace disco {

// One experiment = one manifest; every stage derives its randomness from the
// manifest seed, so reruns reproduce artifacts byte for byte.
struct ExperimentManifest {
    std::string out_dir = "out";
    uint64_t seed = 1;

    int32_t hidden_dim = 400;
    double teacher_gain = 10.0;
    double teacher_bias = -0.25;
    // tokens of flattened conversation the student reads; a tight window keeps
    // mean-pool dilution comparable between opening and deep turns
    int32_t max_context_tokens = 16;

    SynthConfig synth;
    TrainConfig train;

    std::vector<std::string> teacher_tags = {"human", "llm_a", "llm_b"};
    std::string aggregation = "mean";
    size_t mine_pool_size = 50;
    size_t retrieve_k = 100;
    double test_fraction = 0.25;
    std::vector<double> sweep_lambda_q = {0.0, 1e-4, 1e-3, 1e-2};

    // optional overrides; empty means the out_dir default
    std::string vocab_path;
    std::string corpus_path;
    std::string conversations_path;
    std::string qrels_path;

    static ExperimentManifest load(const std::string& path);
    void save(const std::string& path) const;
    void validate() const;

    std::string vocab_file() const;
    std::string corpus_file() const;
    std::string conversations_file() const;
    std::string qrels_file() const;
    std::string teacher_checkpoint() const;
    std::string encoded_corpus_file() const;
    std::string scores_file() const;
    std::string examples_file() const;

    EncoderConfig encoder_config() const;
    // conversations with index >= this are the held-out test split
    size_t split_point(size_t num_conversations) const;
};

}  // namespace disco
