#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "disco/index.hpp"
#include "disco/sparse.hpp"

namespace disco {

// Graded relevance judgements: (query id, doc id) -> grade >= 0.
class Qrels {
public:
    void add(const std::string& qid, const std::string& doc_id, int grade);
    int grade(const std::string& qid, const std::string& doc_id) const;
    bool has_query(const std::string& qid) const;
    // docs with grade >= threshold
    size_t relevant_count(const std::string& qid, int threshold = 1) const;
    const std::map<std::string, std::map<std::string, int>>& queries() const { return grades_; }

    // TREC qrels format: `<qid> 0 <docid> <grade>`.
    static Qrels load(const std::string& path);
    void save(const std::string& path) const;

private:
    std::map<std::string, std::map<std::string, int>> grades_;
};

// Reciprocal rank of the first doc with grade >= threshold, 0 when none.
// cutoff 0 means no cutoff. nullopt (with a warning) when the query is not
// judged at all.
std::optional<double> mrr(const RunList& run, const Qrels& qrels, size_t cutoff = 0,
                          int threshold = 1);

// DCG with gain 2^grade - 1 and log2(rank+1) discount, normalized by the
// ideal DCG at k. 0 (with a warning) when every judged grade is zero.
std::optional<double> ndcg_at_k(const RunList& run, const Qrels& qrels, size_t k = 3);

// |relevant in top k| / |relevant|; nullopt (with a warning) when the query
// has no relevant docs to recall.
std::optional<double> recall_at_k(const RunList& run, const Qrels& qrels, size_t k,
                                  int threshold = 1);

// Min-max normalizes each run's scores to [0,1] (constant runs become all
// 1.0 with a warning), averages per doc with absent docs contributing 0, and
// re-ranks with the standard tie-break. Both runs must carry the same query.
RunList fuse(const RunList& run_a, const RunList& run_b);

struct QueryMeta {
    int depth = 0;
    SparseVec rep;
};

struct PerQueryMetrics {
    double mrr = 0.0;
    double ndcg3 = 0.0;
    std::map<size_t, double> recall;
    int depth = 0;
    size_t nnz = 0;
};

struct EvalReport {
    double mrr = 0.0;
    double ndcg3 = 0.0;
    std::map<size_t, double> recall;
    std::map<std::string, PerQueryMetrics> per_query;
    std::vector<DepthBucket> sparsity;
    double flops = 0.0;
    double mean_query_nnz = 0.0;
    size_t evaluated = 0;
    size_t skipped = 0;

    void save_json(const std::string& path) const;
    void save_csv(const std::string& path) const;
};

// Scores every positively judged query (a missing run counts as an empty
// one, contributing 0 to each metric); aggregates are means of the per-query
// values. Sparsity, FLOPs, and mean nnz are computed over all entries of
// `queries` against `doc_reps`.
EvalReport evaluate(const std::vector<RunList>& runs, const Qrels& qrels,
                    const std::map<std::string, QueryMeta>& queries,
                    const std::vector<SparseVec>& doc_reps,
                    const std::vector<size_t>& recall_cutoffs = {10, 100}, size_t mrr_cutoff = 0,
                    int threshold = 1);

}  // namespace disco
