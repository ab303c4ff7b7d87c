#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "disco/data.hpp"
#include "disco/encoder.hpp"
#include "disco/sparse.hpp"

namespace disco {

// Document representations keyed by external id; the canonical on-disk form
// of an indexed corpus (the inverted index is rebuilt from it in memory).
struct EncodedCorpus {
    std::vector<std::string> ids;
    std::vector<SparseVec> reps;
    std::unordered_map<std::string, size_t> by_id;

    void add(std::string id, SparseVec rep);
    const SparseVec& rep_of(const std::string& id) const;
    size_t size() const { return ids.size(); }
};

EncodedCorpus encode_corpus(const Corpus& corpus, const EncoderModel& model,
                            const Vocabulary& vocab);

// JSONL, one {"id": ..., "tokens": [...], "weights": [...]} object per line.
EncodedCorpus load_encoded_corpus(const std::string& path);
void save_encoded_corpus(const EncodedCorpus& enc, const std::string& path);

struct RunEntry {
    std::string doc_id;
    double score = 0.0;
};

// Ranked retrieval output for one query: scores non-increasing, ties broken
// by ascending doc id, no duplicate docs.
struct RunList {
    std::string query_id;
    std::vector<RunEntry> entries;
    std::string tag;
};

// Sorts by (score desc, doc id asc) in place.
void rank_entries(std::vector<RunEntry>& entries);

// TREC run format: `<qid> Q0 <docid> <rank> <score> <tag>`, rank from 1.
// Queries are grouped in first-appearance order; scores must be
// non-increasing within a query.
std::vector<RunList> load_runs(const std::string& path);
void save_runs(const std::vector<RunList>& runs, const std::string& path);

struct Posting {
    int32_t doc = 0;
    double weight = 0.0;
};

class InvertedIndex {
public:
    static InvertedIndex build(const EncodedCorpus& docs);

    // Exact top-k by dot product; zero-score docs are omitted, so fewer than
    // k results mean fewer than k docs share a token with the query.
    RunList search(const SparseVec& query, size_t k, const std::string& query_id = "",
                   const std::string& tag = "") const;

    size_t doc_count() const { return doc_ids_.size(); }
    size_t total_postings() const;
    const std::vector<std::string>& doc_ids() const { return doc_ids_; }

private:
    int32_t vocab_size_ = 0;
    std::vector<std::vector<Posting>> postings_;
    std::vector<std::string> doc_ids_;
};

// Expected multiplications per query-document pair in an inverted index:
// sum over tokens of (fraction of queries activating the token) times
// (fraction of docs activating it). Throws on an empty list.
double flops_metric(const std::vector<SparseVec>& queries, const std::vector<SparseVec>& docs);

struct DepthBucket {
    int depth = 0;
    double mean_nnz = 0.0;
    size_t count = 0;
};

// Mean activated tokens per conversation depth, buckets sorted by depth.
std::vector<DepthBucket> sparsity_by_depth(const std::vector<std::pair<int, size_t>>& depth_nnz);

}  // namespace disco
