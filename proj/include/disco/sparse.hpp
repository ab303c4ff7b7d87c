#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace disco {

// Token table; id == line number in the backing file, first line is id 0.
class Vocabulary {
public:
    Vocabulary() = default;
    explicit Vocabulary(std::vector<std::string> tokens);

    static Vocabulary load(const std::string& path);
    void save(const std::string& path) const;

    int32_t size() const { return static_cast<int32_t>(tokens_.size()); }
    const std::string& token(int32_t id) const;
    // -1 when absent
    int32_t id_of(const std::string& token) const;
    bool contains(const std::string& token) const { return id_of(token) >= 0; }
    const std::vector<std::string>& tokens() const { return tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int32_t> by_token_;
};

struct SparseEntry {
    int32_t token = 0;
    double weight = 0.0;
};

// Non-negative vocabulary-aligned sparse vector. Entries are sorted by token
// id, token ids are unique and in [0, vocab_size), weights are strictly
// positive (zeros are simply absent).
class SparseVec {
public:
    SparseVec() = default;
    explicit SparseVec(int32_t vocab_size) : vocab_size_(vocab_size) {}
    // Validates and sorts; throws std::invalid_argument on any violation.
    SparseVec(int32_t vocab_size, std::vector<SparseEntry> entries);

    static SparseVec from_dense(const std::vector<double>& dense);
    std::vector<double> to_dense() const;

    int32_t vocab_size() const { return vocab_size_; }
    size_t nnz() const { return entries_.size(); }
    const std::vector<SparseEntry>& entries() const { return entries_; }

    // 0.0 when the token is absent
    double weight(int32_t token) const;

    double l1() const;

private:
    int32_t vocab_size_ = 0;
    std::vector<SparseEntry> entries_;
};

// Merge-join over the two sorted entry lists, accumulated in doubles in
// ascending token order. Throws on vocab-size mismatch.
double dot(const SparseVec& a, const SparseVec& b);

}  // namespace disco
