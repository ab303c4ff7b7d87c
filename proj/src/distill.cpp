#include "disco/distill.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <unordered_set>

#include "json.hpp"

#include "disco/rng.hpp"

namespace disco {

using nlohmann::json;

Aggregation aggregation_from_string(const std::string& s) {
    if (s == "mean") return Aggregation::mean;
    if (s == "min") return Aggregation::min;
    if (s == "max") return Aggregation::max;
    throw std::invalid_argument("aggregation: unknown mode '" + s + "'");
}

std::string to_string(Aggregation agg) {
    switch (agg) {
        case Aggregation::mean: return "mean";
        case Aggregation::min: return "min";
        case Aggregation::max: return "max";
    }
    throw std::logic_error("aggregation: invalid enum value");
}

double aggregate_scores(const std::vector<double>& scores, Aggregation agg) {
    if (scores.empty()) {
        throw std::invalid_argument("aggregation: empty score list");
    }
    switch (agg) {
        case Aggregation::mean: {
            double sum = 0.0;
            for (double s : scores) sum += s;
            return sum / static_cast<double>(scores.size());
        }
        case Aggregation::min: return *std::min_element(scores.begin(), scores.end());
        case Aggregation::max: return *std::max_element(scores.begin(), scores.end());
    }
    throw std::logic_error("aggregation: invalid enum value");
}

void TeacherEnsemble::validate() const {
    if (teachers.empty()) {
        throw std::invalid_argument("ensemble: at least one teacher required");
    }
    int32_t vocab = -1;
    for (const auto& t : teachers) {
        if (!t.model) {
            throw std::invalid_argument("ensemble: teacher '" + t.name + "' has no model");
        }
        if (!t.model->frozen()) {
            throw std::invalid_argument("ensemble: teacher '" + t.name + "' is not frozen");
        }
        if (vocab < 0) {
            vocab = t.model->config().vocab_size;
        } else if (t.model->config().vocab_size != vocab) {
            throw std::invalid_argument("ensemble: teacher '" + t.name +
                                        "' has a different vocabulary size");
        }
    }
}

std::vector<ScoreRecord> load_score_records(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("score records: cannot open " + path);
    }
    std::vector<ScoreRecord> records;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        ScoreRecord r;
        r.conversation_id = j.at("conversation_id").get<std::string>();
        r.turn = j.at("turn").get<int>();
        r.doc_id = j.at("doc_id").get<std::string>();
        for (auto it = j.at("scores").begin(); it != j.at("scores").end(); ++it) {
            r.per_teacher[it.key()] = it.value().get<double>();
        }
        r.aggregate = j.at("aggregate").get<double>();
        records.push_back(std::move(r));
    }
    return records;
}

void save_score_records(const std::vector<ScoreRecord>& records, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("score records: cannot write " + path);
    }
    for (const auto& r : records) {
        json j;
        j["conversation_id"] = r.conversation_id;
        j["turn"] = r.turn;
        j["doc_id"] = r.doc_id;
        j["scores"] = json::object();
        for (const auto& [name, s] : r.per_teacher) j["scores"][name] = s;
        j["aggregate"] = r.aggregate;
        out << j.dump() << '\n';
    }
}

// One encoded rewrite per teacher, reused across candidates and mining.
static std::vector<SparseVec> encode_rewrites(
    const TeacherEnsemble& ensemble, const std::map<std::string, std::vector<int32_t>>& rewrites) {
    std::vector<SparseVec> reps;
    reps.reserve(ensemble.size());
    for (const auto& t : ensemble.teachers) {
        auto it = rewrites.find(t.rewrite_tag);
        if (it == rewrites.end()) {
            throw std::invalid_argument("teacher '" + t.name + "': missing rewrite for tag '" +
                                        t.rewrite_tag + "'");
        }
        reps.push_back(t.model->encode(it->second));
    }
    return reps;
}

std::vector<ScoreRecord> teacher_scores(const TeacherEnsemble& ensemble,
                                        const std::map<std::string, std::vector<int32_t>>& rewrites,
                                        const std::vector<std::string>& candidate_ids,
                                        const EncodedCorpus& docs,
                                        const std::string& conversation_id, int turn) {
    ensemble.validate();
    std::vector<SparseVec> reps = encode_rewrites(ensemble, rewrites);
    std::vector<ScoreRecord> records;
    records.reserve(candidate_ids.size());
    for (const auto& doc_id : candidate_ids) {
        const SparseVec& doc = docs.rep_of(doc_id);
        ScoreRecord r;
        r.conversation_id = conversation_id;
        r.turn = turn;
        r.doc_id = doc_id;
        std::vector<double> scores;
        scores.reserve(ensemble.size());
        for (size_t i = 0; i < ensemble.size(); ++i) {
            double s = dot(reps[i], doc);
            r.per_teacher[ensemble.teachers[i].name] = s;
            scores.push_back(s);
        }
        r.aggregate = aggregate_scores(scores, ensemble.aggregation);
        records.push_back(std::move(r));
    }
    return records;
}

MiningResult mine_hard_negatives(const TeacherEnsemble& ensemble,
                                 const std::map<std::string, std::vector<int32_t>>& rewrites,
                                 const InvertedIndex& index,
                                 const std::vector<std::string>& positive_ids, size_t pool_size,
                                 size_t n, uint64_t seed) {
    if (pool_size < n) {
        throw std::invalid_argument("mining: pool_size " + std::to_string(pool_size) +
                                    " < N " + std::to_string(n));
    }
    ensemble.validate();
    std::vector<SparseVec> reps = encode_rewrites(ensemble, rewrites);

    // Aggregated full ranking; docs a teacher never retrieves score 0 for it.
    std::map<std::string, std::vector<double>> by_doc;
    for (size_t i = 0; i < reps.size(); ++i) {
        RunList run = index.search(reps[i], std::max<size_t>(index.doc_count(), 1));
        for (const auto& e : run.entries) {
            auto [it, inserted] = by_doc.emplace(e.doc_id, std::vector<double>());
            if (inserted) it->second.assign(reps.size(), 0.0);
            it->second[i] = e.score;
        }
    }
    std::vector<RunEntry> ranked;
    ranked.reserve(by_doc.size());
    for (const auto& [doc_id, scores] : by_doc) {
        ranked.push_back({doc_id, aggregate_scores(scores, ensemble.aggregation)});
    }
    rank_entries(ranked);

    std::unordered_set<std::string> positives(positive_ids.begin(), positive_ids.end());
    std::vector<std::string> pool;
    for (const auto& e : ranked) {
        if (pool.size() >= pool_size) break;
        pool.push_back(e.doc_id);
    }
    std::vector<std::string> eligible;
    for (const auto& doc_id : pool) {
        if (!positives.count(doc_id)) eligible.push_back(doc_id);
    }

    Rng rng(seed);
    MiningResult result;
    for (size_t idx : rng.sample_without_replacement(eligible.size(), std::min(n, eligible.size()))) {
        result.negatives.push_back(eligible[idx]);
    }

    if (result.negatives.size() < n) {
        result.random_fill = true;
        std::unordered_set<std::string> taken(result.negatives.begin(), result.negatives.end());
        std::vector<std::string> fallback;
        for (const auto& doc_id : index.doc_ids()) {
            if (!positives.count(doc_id) && !taken.count(doc_id)) fallback.push_back(doc_id);
        }
        size_t need = n - result.negatives.size();
        if (fallback.size() < need) {
            throw std::runtime_error("mining: corpus has fewer than " + std::to_string(n) +
                                     " non-positive docs");
        }
        for (size_t idx : rng.sample_without_replacement(fallback.size(), need)) {
            result.negatives.push_back(fallback[idx]);
        }
    }
    return result;
}

void TrainingExample::validate() const {
    if (negatives.empty()) {
        throw std::invalid_argument("example " + key() + ": at least one negative required");
    }
    if (negatives.size() != negative_scores.size()) {
        throw std::invalid_argument("example " + key() + ": negative/score count mismatch");
    }
    if (q_conv.empty()) {
        throw std::invalid_argument("example " + key() + ": empty q_conv");
    }
    if (!std::isfinite(positive_score)) {
        throw std::invalid_argument("example " + key() + ": non-finite positive score");
    }
    for (const auto& id : negatives) {
        if (id == positive) {
            throw std::invalid_argument("example " + key() + ": positive '" + positive +
                                        "' listed as negative");
        }
    }
    for (double s : negative_scores) {
        if (!std::isfinite(s)) {
            throw std::invalid_argument("example " + key() + ": non-finite negative score");
        }
    }
}

std::vector<TrainingExample> load_examples(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("examples: cannot open " + path);
    }
    std::vector<TrainingExample> examples;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        TrainingExample e;
        e.conversation_id = j.at("conversation_id").get<std::string>();
        e.turn = j.at("turn").get<int>();
        e.q_conv = j.at("q_conv").get<std::vector<int32_t>>();
        for (auto it = j.at("rewrites").begin(); it != j.at("rewrites").end(); ++it) {
            e.rewrites[it.key()] = it.value().get<std::vector<int32_t>>();
        }
        e.positive = j.at("positive").get<std::string>();
        e.negatives = j.at("negatives").get<std::vector<std::string>>();
        e.positive_score = j.at("positive_score").get<double>();
        e.negative_scores = j.at("negative_scores").get<std::vector<double>>();
        e.flagged = j.value("flagged", false);
        e.validate();
        examples.push_back(std::move(e));
    }
    return examples;
}

void save_examples(const std::vector<TrainingExample>& examples, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("examples: cannot write " + path);
    }
    for (const auto& e : examples) {
        json j;
        j["conversation_id"] = e.conversation_id;
        j["turn"] = e.turn;
        j["q_conv"] = e.q_conv;
        j["rewrites"] = json::object();
        for (const auto& [tag, ids] : e.rewrites) j["rewrites"][tag] = ids;
        j["positive"] = e.positive;
        j["negatives"] = e.negatives;
        j["positive_score"] = e.positive_score;
        j["negative_scores"] = e.negative_scores;
        j["flagged"] = e.flagged;
        out << j.dump() << '\n';
    }
}

static void check_finite_scores(const std::vector<double>& scores, const char* what) {
    for (double s : scores) {
        if (!std::isfinite(s)) {
            throw std::invalid_argument(std::string(what) + ": non-finite score");
        }
    }
}

static std::vector<double> softmax(const std::vector<double>& scores, double temperature) {
    double hi = *std::max_element(scores.begin(), scores.end());
    std::vector<double> p(scores.size());
    double z = 0.0;
    for (size_t i = 0; i < scores.size(); ++i) {
        p[i] = std::exp((scores[i] - hi) / temperature);
        z += p[i];
    }
    for (double& v : p) v /= z;
    return p;
}

LossGrad kld_loss(const std::vector<double>& teacher, const std::vector<double>& student,
                  double temperature) {
    if (teacher.size() != student.size()) {
        throw std::invalid_argument("kld: score list lengths differ (" +
                                    std::to_string(teacher.size()) + " vs " +
                                    std::to_string(student.size()) + ")");
    }
    if (teacher.size() < 2) {
        throw std::invalid_argument("kld: need at least two candidates");
    }
    if (!(temperature > 0.0)) {
        throw std::invalid_argument("kld: temperature must be positive");
    }
    check_finite_scores(teacher, "kld");
    check_finite_scores(student, "kld");

    std::vector<double> t = softmax(teacher, temperature);
    std::vector<double> p = softmax(student, temperature);
    LossGrad out;
    out.grad.resize(student.size());
    for (size_t i = 0; i < t.size(); ++i) {
        if (t[i] > 0.0) {
            out.loss += t[i] * (std::log(t[i]) - std::log(p[i]));
        }
        out.grad[i] = (p[i] - t[i]) / temperature;
    }
    if (out.loss < 0.0 && out.loss > -1e-15) out.loss = 0.0;
    return out;
}

LossGrad mse_rep_loss(const SparseVec& student_rep, const SparseVec& teacher_rep) {
    if (student_rep.vocab_size() != teacher_rep.vocab_size()) {
        throw std::invalid_argument("mse: vocab sizes differ (" +
                                    std::to_string(student_rep.vocab_size()) + " vs " +
                                    std::to_string(teacher_rep.vocab_size()) + ")");
    }
    size_t V = static_cast<size_t>(student_rep.vocab_size());
    std::vector<double> s = student_rep.to_dense();
    std::vector<double> t = teacher_rep.to_dense();
    LossGrad out;
    out.grad.resize(V);
    for (size_t j = 0; j < V; ++j) {
        double diff = s[j] - t[j];
        out.loss += diff * diff;
        out.grad[j] = 2.0 * diff / static_cast<double>(V);
    }
    out.loss /= static_cast<double>(V);
    return out;
}

LossGrad infonce_loss(const std::vector<double>& scores, size_t positive_index) {
    if (scores.empty()) {
        throw std::invalid_argument("infonce: empty score list");
    }
    if (positive_index >= scores.size()) {
        throw std::invalid_argument("infonce: positive index " + std::to_string(positive_index) +
                                    " out of range");
    }
    check_finite_scores(scores, "infonce");
    std::vector<double> p = softmax(scores, 1.0);
    LossGrad out;
    out.loss = -std::log(p[positive_index]);
    out.grad = p;
    out.grad[positive_index] -= 1.0;
    return out;
}

RegLoss flops_reg_loss(const std::vector<SparseVec>& batch) {
    if (batch.empty()) {
        throw std::invalid_argument("flops regularizer: empty batch");
    }
    size_t V = static_cast<size_t>(batch[0].vocab_size());
    double inv_b = 1.0 / static_cast<double>(batch.size());
    std::vector<double> mean(V, 0.0);
    for (const auto& v : batch) {
        if (static_cast<size_t>(v.vocab_size()) != V) {
            throw std::invalid_argument("flops regularizer: vocab sizes differ");
        }
        for (const auto& e : v.entries()) mean[static_cast<size_t>(e.token)] += e.weight * inv_b;
    }
    RegLoss out;
    out.grad.resize(V);
    for (size_t j = 0; j < V; ++j) {
        out.loss += mean[j] * mean[j];
        out.grad[j] = 2.0 * mean[j] * inv_b;
    }
    return out;
}

RegLoss l1_reg_loss(const std::vector<SparseVec>& batch) {
    if (batch.empty()) {
        throw std::invalid_argument("l1 regularizer: empty batch");
    }
    size_t V = static_cast<size_t>(batch[0].vocab_size());
    double inv_b = 1.0 / static_cast<double>(batch.size());
    RegLoss out;
    out.grad.assign(V, inv_b);
    for (const auto& v : batch) {
        if (static_cast<size_t>(v.vocab_size()) != V) {
            throw std::invalid_argument("l1 regularizer: vocab sizes differ");
        }
        out.loss += v.l1() * inv_b;
    }
    return out;
}

BatchContext build_batch_context(const std::vector<TrainingExample>& batch,
                                 const TeacherEnsemble& ensemble, const EncodedCorpus& docs,
                                 RewriteCache* cache) {
    if (batch.empty()) {
        throw std::invalid_argument("batch context: empty batch");
    }
    ensemble.validate();
    BatchContext ctx;
    ctx.examples.reserve(batch.size());

    for (size_t e = 0; e < batch.size(); ++e) {
        const TrainingExample& ex = batch[e];
        ex.validate();
        ExampleContext ec;
        ec.key = ex.key();
        ec.q_conv = ex.q_conv;
        ec.rewrites = ex.rewrites;
        ec.positive_index = 0;
        ec.candidates.push_back({ex.positive, &docs.rep_of(ex.positive), ex.positive_score, false});
        for (size_t i = 0; i < ex.negatives.size(); ++i) {
            ec.candidates.push_back(
                {ex.negatives[i], &docs.rep_of(ex.negatives[i]), ex.negative_scores[i], false});
        }

        std::unordered_set<std::string> present;
        for (const auto& c : ec.candidates) present.insert(c.doc_id);

        const std::vector<SparseVec>* reps = nullptr;
        std::vector<SparseVec> local;
        for (size_t o = 0; o < batch.size(); ++o) {
            if (o == e) continue;
            const std::string& doc_id = batch[o].positive;
            if (present.count(doc_id)) continue;
            present.insert(doc_id);
            if (!reps) {
                if (cache) {
                    auto [it, inserted] = cache->emplace(ec.key, std::vector<SparseVec>());
                    if (inserted) it->second = encode_rewrites(ensemble, ex.rewrites);
                    reps = &it->second;
                } else {
                    local = encode_rewrites(ensemble, ex.rewrites);
                    reps = &local;
                }
            }
            const SparseVec& doc = docs.rep_of(doc_id);
            std::vector<double> scores;
            scores.reserve(reps->size());
            for (const auto& rep : *reps) scores.push_back(dot(rep, doc));
            ec.candidates.push_back(
                {doc_id, &doc, aggregate_scores(scores, ensemble.aggregation), true});
        }
        ctx.examples.push_back(std::move(ec));
    }
    return ctx;
}

StepResult disco_step_loss(size_t example_index, const BatchContext& ctx,
                           const EncoderModel& student, double lambda_q, double lambda_d,
                           double temperature) {
    if (example_index >= ctx.examples.size()) {
        throw std::out_of_range("step loss: example index out of range");
    }
    const ExampleContext& ec = ctx.examples[example_index];
    size_t V = static_cast<size_t>(student.config().vocab_size);

    StepResult result{0.0, 0.0, 0.0, 0.0, EncoderGradients(student.config())};

    SparseVec query_rep = student.encode(ec.q_conv);
    std::vector<double> teacher(ec.candidates.size());
    std::vector<double> scores(ec.candidates.size());
    for (size_t c = 0; c < ec.candidates.size(); ++c) {
        teacher[c] = ec.candidates[c].teacher_score;
        scores[c] = dot(query_rep, *ec.candidates[c].rep);
    }
    LossGrad kld = kld_loss(teacher, scores, temperature);
    result.kld = kld.loss;

    std::vector<double> upstream(V, 0.0);
    for (size_t c = 0; c < ec.candidates.size(); ++c) {
        if (kld.grad[c] == 0.0) continue;
        for (const auto& e : ec.candidates[c].rep->entries()) {
            upstream[static_cast<size_t>(e.token)] += kld.grad[c] * e.weight;
        }
    }
    student.encode_backward(ec.q_conv, upstream, result.grads);

    if (lambda_q != 0.0) {
        std::vector<SparseVec> query_reps;
        query_reps.reserve(ctx.examples.size());
        for (size_t o = 0; o < ctx.examples.size(); ++o) {
            query_reps.push_back(o == example_index ? query_rep
                                                    : student.encode(ctx.examples[o].q_conv));
        }
        RegLoss reg = flops_reg_loss(query_reps);
        result.reg_q = lambda_q * reg.loss;
        std::vector<double> reg_upstream(V);
        for (size_t j = 0; j < V; ++j) reg_upstream[j] = lambda_q * reg.grad[j];
        for (const auto& other : ctx.examples) {
            student.encode_backward(other.q_conv, reg_upstream, result.grads);
        }
    }

    if (lambda_d != 0.0) {
        std::vector<SparseVec> doc_reps;
        doc_reps.reserve(ec.candidates.size());
        for (const auto& c : ec.candidates) doc_reps.push_back(*c.rep);
        result.reg_d = lambda_d * l1_reg_loss(doc_reps).loss;
    }

    result.total = result.kld + result.reg_q;
    return result;
}

}  // namespace disco
