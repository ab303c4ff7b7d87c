#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "disco/encoder.hpp"
#include "disco/index.hpp"
#include "disco/sparse.hpp"

namespace disco {

enum class Aggregation { mean, min, max };

Aggregation aggregation_from_string(const std::string& s);
std::string to_string(Aggregation agg);
double aggregate_scores(const std::vector<double>& scores, Aggregation agg);

struct Teacher {
    std::string name;
    std::shared_ptr<const EncoderModel> model;
    std::string rewrite_tag;
};

struct TeacherEnsemble {
    std::vector<Teacher> teachers;
    Aggregation aggregation = Aggregation::mean;

    // T >= 1, models present and frozen, shared vocab size.
    void validate() const;
    size_t size() const { return teachers.size(); }
};

struct ScoreRecord {
    std::string conversation_id;
    int turn = 0;
    std::string doc_id;
    std::map<std::string, double> per_teacher;
    double aggregate = 0.0;
};

std::vector<ScoreRecord> load_score_records(const std::string& path);
void save_score_records(const std::vector<ScoreRecord>& records, const std::string& path);

// Scores one turn's candidate docs with every teacher: each teacher encodes
// its own rewrite and takes dot products with the candidate representations.
std::vector<ScoreRecord> teacher_scores(const TeacherEnsemble& ensemble,
                                        const std::map<std::string, std::vector<int32_t>>& rewrites,
                                        const std::vector<std::string>& candidate_ids,
                                        const EncodedCorpus& docs,
                                        const std::string& conversation_id, int turn);

struct MiningResult {
    std::vector<std::string> negatives;
    // set when the teacher pool ran short and random corpus docs filled in
    bool random_fill = false;
};

// Samples N negatives (seeded, uniform, without replacement) from the
// ensemble's top-pool_size retrieved docs minus the positives.
MiningResult mine_hard_negatives(const TeacherEnsemble& ensemble,
                                 const std::map<std::string, std::vector<int32_t>>& rewrites,
                                 const InvertedIndex& index,
                                 const std::vector<std::string>& positive_ids, size_t pool_size,
                                 size_t n, uint64_t seed);

struct TrainingExample {
    std::string conversation_id;
    int turn = 0;
    std::vector<int32_t> q_conv;
    // rewrite tag -> token ids; lets in-batch candidates be teacher-scored
    // lazily, since their identity depends on batch composition
    std::map<std::string, std::vector<int32_t>> rewrites;
    std::string positive;
    std::vector<std::string> negatives;
    double positive_score = 0.0;
    std::vector<double> negative_scores;
    bool flagged = false;

    void validate() const;
    std::string key() const { return conversation_id + "_t" + std::to_string(turn); }
};

std::vector<TrainingExample> load_examples(const std::string& path);
void save_examples(const std::vector<TrainingExample>& examples, const std::string& path);

struct LossGrad {
    double loss = 0.0;
    std::vector<double> grad;
};

// Forward KL between softmax(teacher/T) and softmax(student/T), teacher as
// the reference distribution; grad is w.r.t. the student scores.
LossGrad kld_loss(const std::vector<double>& teacher, const std::vector<double>& student,
                  double temperature);

// Mean squared error over all vocabulary dimensions; grad is w.r.t. the
// dense student representation.
LossGrad mse_rep_loss(const SparseVec& student_rep, const SparseVec& teacher_rep);

// -log softmax probability of the positive; grad is w.r.t. the scores.
LossGrad infonce_loss(const std::vector<double>& scores, size_t positive_index);

struct RegLoss {
    double loss = 0.0;
    // d loss / d dense coords, identical for every vector in the batch
    std::vector<double> grad;
};

// Sum over tokens of the squared mean absolute weight across the batch.
RegLoss flops_reg_loss(const std::vector<SparseVec>& batch);
// Mean over the batch of each vector's L1 mass.
RegLoss l1_reg_loss(const std::vector<SparseVec>& batch);

struct Candidate {
    std::string doc_id;
    const SparseVec* rep = nullptr;
    double teacher_score = 0.0;
    bool in_batch = false;
};

struct ExampleContext {
    std::string key;
    std::vector<int32_t> q_conv;
    std::map<std::string, std::vector<int32_t>> rewrites;
    // positive first, then stored negatives, then other examples' positives
    std::vector<Candidate> candidates;
    size_t positive_index = 0;
};

struct BatchContext {
    std::vector<ExampleContext> examples;
};

// Per-example teacher rewrite representations, keyed by example key; safe to
// reuse across batches because teachers are frozen.
using RewriteCache = std::map<std::string, std::vector<SparseVec>>;

// Expands each example's candidates with the other examples' positives
// (deduplicated), scoring the added candidates with the ensemble on the fly.
BatchContext build_batch_context(const std::vector<TrainingExample>& batch,
                                 const TeacherEnsemble& ensemble, const EncodedCorpus& docs,
                                 RewriteCache* cache = nullptr);

struct StepResult {
    double total = 0.0;  // kld + reg_q
    double kld = 0.0;
    double reg_q = 0.0;  // lambda_q * flops regularizer over the batch's query reps
    double reg_d = 0.0;  // lambda_d * L1 over this example's candidate docs; reported
                         // only, since the frozen doc encoder takes no gradient
    EncoderGradients grads;
};

// One example's score-distillation loss inside its batch: KL divergence
// between the teacher's and the student's candidate-score distributions,
// plus the query-side sparsity regularizer. Gradients cover the full total
// (the regularizer part flows through every query in the batch).
StepResult disco_step_loss(size_t example_index, const BatchContext& ctx,
                           const EncoderModel& student, double lambda_q, double lambda_d,
                           double temperature);

}  // namespace disco
