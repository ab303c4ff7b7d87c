#include "disco/index.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace disco {

using nlohmann::json;

void EncodedCorpus::add(std::string id, SparseVec rep) {
    if (by_id.count(id)) {
        throw std::invalid_argument("encoded corpus: duplicate doc id '" + id + "'");
    }
    by_id.emplace(id, ids.size());
    ids.push_back(std::move(id));
    reps.push_back(std::move(rep));
}

const SparseVec& EncodedCorpus::rep_of(const std::string& id) const {
    auto it = by_id.find(id);
    if (it == by_id.end()) {
        throw std::out_of_range("encoded corpus: unknown doc id '" + id + "'");
    }
    return reps[it->second];
}

EncodedCorpus encode_corpus(const Corpus& corpus, const EncoderModel& model,
                            const Vocabulary& vocab) {
    EncodedCorpus enc;
    size_t max_doc = static_cast<size_t>(model.config().max_doc_tokens);
    for (size_t i = 0; i < corpus.size(); ++i) {
        std::vector<int32_t> ids = token_ids(corpus.texts[i], vocab);
        if (ids.size() > max_doc) ids.resize(max_doc);
        enc.add(corpus.ids[i], model.encode(ids));
    }
    return enc;
}

EncodedCorpus load_encoded_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("encoded corpus: cannot open " + path);
    }
    EncodedCorpus enc;
    std::string line;
    size_t lineno = 0;
    int32_t vocab_size = -1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j = json::parse(line);
        if (vocab_size < 0) vocab_size = j.at("vocab_size").get<int32_t>();
        auto tokens = j.at("tokens").get<std::vector<int32_t>>();
        auto weights = j.at("weights").get<std::vector<double>>();
        if (tokens.size() != weights.size()) {
            throw std::runtime_error("encoded corpus: line " + std::to_string(lineno) +
                                     " tokens/weights length mismatch");
        }
        std::vector<SparseEntry> entries(tokens.size());
        for (size_t i = 0; i < tokens.size(); ++i) entries[i] = {tokens[i], weights[i]};
        enc.add(j.at("id").get<std::string>(), SparseVec(vocab_size, std::move(entries)));
    }
    return enc;
}

void save_encoded_corpus(const EncodedCorpus& enc, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("encoded corpus: cannot write " + path);
    }
    for (size_t i = 0; i < enc.size(); ++i) {
        json j;
        j["id"] = enc.ids[i];
        j["vocab_size"] = enc.reps[i].vocab_size();
        std::vector<int32_t> tokens;
        std::vector<double> weights;
        tokens.reserve(enc.reps[i].nnz());
        weights.reserve(enc.reps[i].nnz());
        for (const auto& e : enc.reps[i].entries()) {
            tokens.push_back(e.token);
            weights.push_back(e.weight);
        }
        j["tokens"] = tokens;
        j["weights"] = weights;
        out << j.dump() << '\n';
    }
}

void rank_entries(std::vector<RunEntry>& entries) {
    std::sort(entries.begin(), entries.end(), [](const RunEntry& a, const RunEntry& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.doc_id < b.doc_id;
    });
}

static std::string format_score(double score) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", score);
    return buf;
}

std::vector<RunList> load_runs(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("runs: cannot open " + path);
    }
    std::vector<RunList> runs;
    std::unordered_map<std::string, size_t> by_qid;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream iss(line);
        std::string qid, q0, docid, tag;
        long rank = 0;
        double score = 0.0;
        if (!(iss >> qid >> q0 >> docid >> rank >> score >> tag)) {
            throw std::runtime_error("runs: malformed line " + std::to_string(lineno) + " in " +
                                     path);
        }
        auto [it, inserted] = by_qid.emplace(qid, runs.size());
        if (inserted) {
            runs.push_back(RunList{qid, {}, tag});
        }
        RunList& run = runs[it->second];
        if (!run.entries.empty() && run.entries.back().score < score) {
            throw std::runtime_error("runs: scores increase at line " + std::to_string(lineno) +
                                     " for query " + qid);
        }
        run.entries.push_back({docid, score});
    }
    return runs;
}

void save_runs(const std::vector<RunList>& runs, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("runs: cannot write " + path);
    }
    for (const auto& run : runs) {
        for (size_t r = 0; r < run.entries.size(); ++r) {
            out << run.query_id << " Q0 " << run.entries[r].doc_id << ' ' << (r + 1) << ' '
                << format_score(run.entries[r].score) << ' ' << run.tag << '\n';
        }
    }
}

InvertedIndex InvertedIndex::build(const EncodedCorpus& docs) {
    InvertedIndex idx;
    if (docs.size() == 0) return idx;
    idx.vocab_size_ = docs.reps[0].vocab_size();
    idx.postings_.resize(static_cast<size_t>(idx.vocab_size_));
    idx.doc_ids_ = docs.ids;
    for (size_t d = 0; d < docs.size(); ++d) {
        if (docs.reps[d].vocab_size() != idx.vocab_size_) {
            throw std::invalid_argument("index: vocab sizes differ across documents");
        }
        for (const auto& e : docs.reps[d].entries()) {
            idx.postings_[static_cast<size_t>(e.token)].push_back(
                {static_cast<int32_t>(d), e.weight});
        }
    }
    return idx;
}

RunList InvertedIndex::search(const SparseVec& query, size_t k, const std::string& query_id,
                              const std::string& tag) const {
    if (k == 0) {
        throw std::invalid_argument("search: k must be at least 1");
    }
    RunList out;
    out.query_id = query_id;
    out.tag = tag;
    if (doc_ids_.empty()) return out;
    if (query.vocab_size() != vocab_size_) {
        throw std::invalid_argument("search: query vocab size " +
                                    std::to_string(query.vocab_size()) + " != index vocab size " +
                                    std::to_string(vocab_size_));
    }

    // Term-at-a-time over ascending token ids: each accumulator receives its
    // products in the same order as the pairwise dot product, keeping scores
    // bitwise-equal to a direct evaluation.
    std::vector<double> acc(doc_ids_.size(), 0.0);
    for (const auto& qe : query.entries()) {
        for (const auto& p : postings_[static_cast<size_t>(qe.token)]) {
            acc[static_cast<size_t>(p.doc)] += qe.weight * p.weight;
        }
    }

    std::vector<RunEntry> entries;
    for (size_t d = 0; d < acc.size(); ++d) {
        if (acc[d] > 0.0) {
            entries.push_back({doc_ids_[d], acc[d]});
        }
    }
    rank_entries(entries);
    if (entries.size() > k) entries.resize(k);
    out.entries = std::move(entries);
    return out;
}

size_t InvertedIndex::total_postings() const {
    size_t n = 0;
    for (const auto& list : postings_) n += list.size();
    return n;
}

double flops_metric(const std::vector<SparseVec>& queries, const std::vector<SparseVec>& docs) {
    if (queries.empty() || docs.empty()) {
        throw std::invalid_argument("flops: empty query or document list");
    }
    int32_t V = queries[0].vocab_size();
    std::vector<double> pq(static_cast<size_t>(V), 0.0);
    std::vector<double> pd(static_cast<size_t>(V), 0.0);
    for (const auto& q : queries) {
        if (q.vocab_size() != V) {
            throw std::invalid_argument("flops: vocab sizes differ");
        }
        for (const auto& e : q.entries()) pq[static_cast<size_t>(e.token)] += 1.0;
    }
    for (const auto& d : docs) {
        if (d.vocab_size() != V) {
            throw std::invalid_argument("flops: vocab sizes differ");
        }
        for (const auto& e : d.entries()) pd[static_cast<size_t>(e.token)] += 1.0;
    }
    double total = 0.0;
    for (size_t j = 0; j < static_cast<size_t>(V); ++j) {
        total += (pq[j] / static_cast<double>(queries.size())) *
                 (pd[j] / static_cast<double>(docs.size()));
    }
    return total;
}

std::vector<DepthBucket> sparsity_by_depth(const std::vector<std::pair<int, size_t>>& depth_nnz) {
    std::map<int, std::pair<double, size_t>> sums;
    for (const auto& [depth, nnz] : depth_nnz) {
        auto& s = sums[depth];
        s.first += static_cast<double>(nnz);
        s.second += 1;
    }
    std::vector<DepthBucket> out;
    for (const auto& [depth, s] : sums) {
        out.push_back({depth, s.first / static_cast<double>(s.second), s.second});
    }
    return out;
}

}  // namespace disco
