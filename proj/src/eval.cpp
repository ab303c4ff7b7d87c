#include "disco/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace disco {

using nlohmann::json;

void Qrels::add(const std::string& qid, const std::string& doc_id, int grade) {
    if (grade < 0) {
        throw std::invalid_argument("qrels: negative grade for query " + qid + " doc " + doc_id);
    }
    grades_[qid][doc_id] = grade;
}

int Qrels::grade(const std::string& qid, const std::string& doc_id) const {
    auto qit = grades_.find(qid);
    if (qit == grades_.end()) return 0;
    auto dit = qit->second.find(doc_id);
    return dit == qit->second.end() ? 0 : dit->second;
}

bool Qrels::has_query(const std::string& qid) const { return grades_.count(qid) > 0; }

size_t Qrels::relevant_count(const std::string& qid, int threshold) const {
    auto qit = grades_.find(qid);
    if (qit == grades_.end()) return 0;
    size_t n = 0;
    for (const auto& [doc, g] : qit->second) {
        if (g >= threshold) ++n;
    }
    return n;
}

Qrels Qrels::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("qrels: cannot open " + path);
    }
    Qrels qrels;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream iss(line);
        std::string qid, zero, doc;
        int grade = 0;
        if (!(iss >> qid >> zero >> doc >> grade)) {
            throw std::runtime_error("qrels: malformed line " + std::to_string(lineno) + " in " +
                                     path);
        }
        qrels.add(qid, doc, grade);
    }
    return qrels;
}

void Qrels::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("qrels: cannot write " + path);
    }
    for (const auto& [qid, docs] : grades_) {
        for (const auto& [doc, grade] : docs) {
            out << qid << " 0 " << doc << ' ' << grade << '\n';
        }
    }
}

std::optional<double> mrr(const RunList& run, const Qrels& qrels, size_t cutoff, int threshold) {
    if (!qrels.has_query(run.query_id)) {
        std::cerr << "warning: query " << run.query_id << " has no judgements, skipped\n";
        return std::nullopt;
    }
    size_t limit = cutoff == 0 ? run.entries.size() : std::min(cutoff, run.entries.size());
    for (size_t r = 0; r < limit; ++r) {
        if (qrels.grade(run.query_id, run.entries[r].doc_id) >= threshold) {
            return 1.0 / static_cast<double>(r + 1);
        }
    }
    return 0.0;
}

std::optional<double> ndcg_at_k(const RunList& run, const Qrels& qrels, size_t k) {
    if (!qrels.has_query(run.query_id)) {
        std::cerr << "warning: query " << run.query_id << " has no judgements, skipped\n";
        return std::nullopt;
    }
    std::vector<int> judged;
    for (const auto& [doc, g] : qrels.queries().at(run.query_id)) {
        (void)doc;
        judged.push_back(g);
    }
    std::sort(judged.rbegin(), judged.rend());
    double ideal = 0.0;
    for (size_t r = 0; r < std::min(k, judged.size()); ++r) {
        ideal += (std::pow(2.0, judged[r]) - 1.0) / std::log2(static_cast<double>(r + 2));
    }
    if (ideal == 0.0) {
        std::cerr << "warning: query " << run.query_id << " has only zero grades, ndcg is 0\n";
        return 0.0;
    }
    double dcg = 0.0;
    for (size_t r = 0; r < std::min(k, run.entries.size()); ++r) {
        int g = qrels.grade(run.query_id, run.entries[r].doc_id);
        dcg += (std::pow(2.0, g) - 1.0) / std::log2(static_cast<double>(r + 2));
    }
    return dcg / ideal;
}

std::optional<double> recall_at_k(const RunList& run, const Qrels& qrels, size_t k,
                                  int threshold) {
    if (!qrels.has_query(run.query_id)) {
        std::cerr << "warning: query " << run.query_id << " has no judgements, skipped\n";
        return std::nullopt;
    }
    size_t relevant = qrels.relevant_count(run.query_id, threshold);
    if (relevant == 0) {
        std::cerr << "warning: query " << run.query_id << " has no relevant docs, skipped\n";
        return std::nullopt;
    }
    size_t hit = 0;
    for (size_t r = 0; r < std::min(k, run.entries.size()); ++r) {
        if (qrels.grade(run.query_id, run.entries[r].doc_id) >= threshold) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(relevant);
}

static std::map<std::string, double> minmax_normalize(const RunList& run) {
    std::map<std::string, double> out;
    if (run.entries.empty()) return out;
    double lo = run.entries.front().score;
    double hi = run.entries.front().score;
    for (const auto& e : run.entries) {
        lo = std::min(lo, e.score);
        hi = std::max(hi, e.score);
    }
    if (hi == lo) {
        std::cerr << "warning: constant-score run for query " << run.query_id
                  << ", normalizing to 1.0\n";
        for (const auto& e : run.entries) out[e.doc_id] = 1.0;
        return out;
    }
    for (const auto& e : run.entries) out[e.doc_id] = (e.score - lo) / (hi - lo);
    return out;
}

RunList fuse(const RunList& run_a, const RunList& run_b) {
    if (run_a.query_id != run_b.query_id) {
        throw std::invalid_argument("fuse: query ids differ (" + run_a.query_id + " vs " +
                                    run_b.query_id + ")");
    }
    std::map<std::string, double> na = minmax_normalize(run_a);
    std::map<std::string, double> nb = minmax_normalize(run_b);
    std::map<std::string, double> fused;
    for (const auto& [doc, s] : na) fused[doc] += 0.5 * s;
    for (const auto& [doc, s] : nb) fused[doc] += 0.5 * s;

    RunList out;
    out.query_id = run_a.query_id;
    out.tag = "fusion";
    out.entries.reserve(fused.size());
    for (const auto& [doc, s] : fused) out.entries.push_back({doc, s});
    rank_entries(out.entries);
    return out;
}

EvalReport evaluate(const std::vector<RunList>& runs, const Qrels& qrels,
                    const std::map<std::string, QueryMeta>& queries,
                    const std::vector<SparseVec>& doc_reps,
                    const std::vector<size_t>& recall_cutoffs, size_t mrr_cutoff, int threshold) {
    std::map<std::string, const RunList*> run_by_qid;
    for (const auto& run : runs) {
        if (!run_by_qid.emplace(run.query_id, &run).second) {
            throw std::invalid_argument("evaluate: duplicate run for query " + run.query_id);
        }
    }

    EvalReport report;
    for (const auto& run : runs) {
        if (!qrels.has_query(run.query_id)) {
            std::cerr << "warning: query " << run.query_id << " has no judgements, skipped\n";
            ++report.skipped;
        }
    }

    for (const auto& [qid, docs] : qrels.queries()) {
        (void)docs;
        if (qrels.relevant_count(qid, threshold) == 0) {
            std::cerr << "warning: query " << qid << " has no positive judgements, skipped\n";
            ++report.skipped;
            continue;
        }
        RunList empty;
        empty.query_id = qid;
        auto it = run_by_qid.find(qid);
        const RunList& run = it == run_by_qid.end() ? empty : *it->second;

        PerQueryMetrics pq;
        pq.mrr = mrr(run, qrels, mrr_cutoff, threshold).value();
        pq.ndcg3 = ndcg_at_k(run, qrels, 3).value();
        for (size_t k : recall_cutoffs) {
            pq.recall[k] = recall_at_k(run, qrels, k, threshold).value();
        }
        auto qit = queries.find(qid);
        if (qit != queries.end()) {
            pq.depth = qit->second.depth;
            pq.nnz = qit->second.rep.nnz();
        }
        report.per_query.emplace(qid, std::move(pq));
    }

    report.evaluated = report.per_query.size();
    if (report.evaluated > 0) {
        for (const auto& [qid, pq] : report.per_query) {
            (void)qid;
            report.mrr += pq.mrr;
            report.ndcg3 += pq.ndcg3;
            for (const auto& [k, v] : pq.recall) report.recall[k] += v;
        }
        double n = static_cast<double>(report.evaluated);
        report.mrr /= n;
        report.ndcg3 /= n;
        for (auto& [k, v] : report.recall) {
            (void)k;
            v /= n;
        }
    }

    if (!queries.empty()) {
        std::vector<std::pair<int, size_t>> depth_nnz;
        std::vector<SparseVec> query_reps;
        for (const auto& [qid, meta] : queries) {
            (void)qid;
            depth_nnz.push_back({meta.depth, meta.rep.nnz()});
            query_reps.push_back(meta.rep);
            report.mean_query_nnz += static_cast<double>(meta.rep.nnz());
        }
        report.mean_query_nnz /= static_cast<double>(queries.size());
        report.sparsity = sparsity_by_depth(depth_nnz);
        if (!doc_reps.empty()) {
            report.flops = flops_metric(query_reps, doc_reps);
        }
    }
    return report;
}

void EvalReport::save_json(const std::string& path) const {
    json j;
    j["aggregates"]["mrr"] = mrr;
    j["aggregates"]["ndcg3"] = ndcg3;
    for (const auto& [k, v] : recall) {
        j["aggregates"]["recall" + std::to_string(k)] = v;
    }
    j["flops"] = flops;
    j["mean_query_nnz"] = mean_query_nnz;
    j["counts"]["evaluated"] = evaluated;
    j["counts"]["skipped"] = skipped;
    j["sparsity_by_depth"] = json::array();
    for (const auto& b : sparsity) {
        j["sparsity_by_depth"].push_back(
            {{"depth", b.depth}, {"mean_nnz", b.mean_nnz}, {"count", b.count}});
    }
    j["per_query"] = json::object();
    for (const auto& [qid, pq] : per_query) {
        json q;
        q["mrr"] = pq.mrr;
        q["ndcg3"] = pq.ndcg3;
        for (const auto& [k, v] : pq.recall) q["recall" + std::to_string(k)] = v;
        q["depth"] = pq.depth;
        q["nnz"] = pq.nnz;
        j["per_query"][qid] = q;
    }
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("eval report: cannot write " + path);
    }
    out << j.dump(2) << '\n';
}

void EvalReport::save_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("eval report: cannot write " + path);
    }
    std::vector<size_t> cutoffs;
    for (const auto& [k, v] : recall) {
        (void)v;
        cutoffs.push_back(k);
    }
    out << "qid,depth,nnz,mrr,ndcg3";
    for (size_t k : cutoffs) out << ",recall" << k;
    out << '\n';
    char buf[64];
    auto fmt = [&buf](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    for (const auto& [qid, pq] : per_query) {
        out << qid << ',' << pq.depth << ',' << pq.nnz << ',' << fmt(pq.mrr) << ','
            << fmt(pq.ndcg3);
        for (size_t k : cutoffs) {
            auto it = pq.recall.find(k);
            out << ',' << fmt(it == pq.recall.end() ? 0.0 : it->second);
        }
        out << '\n';
    }
}

}  // namespace disco
