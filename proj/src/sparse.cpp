#include "disco/sparse.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

namespace disco {

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    by_token_.reserve(tokens_.size());
    for (size_t i = 0; i < tokens_.size(); ++i) {
        if (tokens_[i].empty()) {
            throw std::invalid_argument("vocabulary: empty token at line " + std::to_string(i));
        }
        auto [it, inserted] = by_token_.emplace(tokens_[i], static_cast<int32_t>(i));
        (void)it;
        if (!inserted) {
            throw std::invalid_argument("vocabulary: duplicate token '" + tokens_[i] + "'");
        }
    }
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("vocabulary: cannot open " + path);
    }
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        tokens.push_back(line);
    }
    return Vocabulary(std::move(tokens));
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("vocabulary: cannot write " + path);
    }
    for (const auto& t : tokens_) {
        out << t << '\n';
    }
}

const std::string& Vocabulary::token(int32_t id) const {
    if (id < 0 || id >= size()) {
        throw std::out_of_range("vocabulary: id " + std::to_string(id) + " out of range");
    }
    return tokens_[static_cast<size_t>(id)];
}

int32_t Vocabulary::id_of(const std::string& token) const {
    auto it = by_token_.find(token);
    return it == by_token_.end() ? -1 : it->second;
}

SparseVec::SparseVec(int32_t vocab_size, std::vector<SparseEntry> entries)
    : vocab_size_(vocab_size), entries_(std::move(entries)) {
    if (vocab_size_ < 0) {
        throw std::invalid_argument("sparse: negative vocab size");
    }
    std::sort(entries_.begin(), entries_.end(),
              [](const SparseEntry& a, const SparseEntry& b) { return a.token < b.token; });
    int32_t prev = -1;
    for (const auto& e : entries_) {
        if (e.token < 0 || e.token >= vocab_size_) {
            throw std::invalid_argument("sparse: token " + std::to_string(e.token) +
                                        " outside vocab of size " + std::to_string(vocab_size_));
        }
        if (e.token == prev) {
            throw std::invalid_argument("sparse: duplicate token " + std::to_string(e.token));
        }
        if (!(e.weight > 0.0)) {
            throw std::invalid_argument("sparse: non-positive weight at token " +
                                        std::to_string(e.token));
        }
        prev = e.token;
    }
}

SparseVec SparseVec::from_dense(const std::vector<double>& dense) {
    std::vector<SparseEntry> entries;
    for (size_t i = 0; i < dense.size(); ++i) {
        if (dense[i] < 0.0) {
            throw std::invalid_argument("sparse: negative value at dim " + std::to_string(i));
        }
        if (dense[i] > 0.0) {
            entries.push_back({static_cast<int32_t>(i), dense[i]});
        }
    }
    return SparseVec(static_cast<int32_t>(dense.size()), std::move(entries));
}

std::vector<double> SparseVec::to_dense() const {
    std::vector<double> dense(static_cast<size_t>(vocab_size_), 0.0);
    for (const auto& e : entries_) {
        dense[static_cast<size_t>(e.token)] = e.weight;
    }
    return dense;
}

double SparseVec::weight(int32_t token) const {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), token,
                               [](const SparseEntry& e, int32_t t) { return e.token < t; });
    if (it != entries_.end() && it->token == token) return it->weight;
    return 0.0;
}

double SparseVec::l1() const {
    double s = 0.0;
    for (const auto& e : entries_) s += e.weight;
    return s;
}

double dot(const SparseVec& a, const SparseVec& b) {
    if (a.vocab_size() != b.vocab_size()) {
        throw std::invalid_argument("dot: vocab sizes differ (" + std::to_string(a.vocab_size()) +
                                    " vs " + std::to_string(b.vocab_size()) + ")");
    }
    const auto& ea = a.entries();
    const auto& eb = b.entries();
    double acc = 0.0;
    size_t i = 0, j = 0;
    while (i < ea.size() && j < eb.size()) {
        if (ea[i].token < eb[j].token) {
            ++i;
        } else if (eb[j].token < ea[i].token) {
            ++j;
        } else {
            acc += ea[i].weight * eb[j].weight;
            ++i;
            ++j;
        }
    }
    return acc;
}

}  // namespace disco
