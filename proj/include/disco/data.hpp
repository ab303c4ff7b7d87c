#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "disco/sparse.hpp"

namespace disco {

// Whitespace tokenization, lowercased. Unknown tokens are dropped when
// mapping to ids.
std::vector<std::string> tokenize(const std::string& text);
std::vector<int32_t> token_ids(const std::string& text, const Vocabulary& vocab);

struct Turn {
    std::string utterance;
    std::string answer;
    // rewrite tag ("human", "llm_a", ...) -> standalone query text
    std::map<std::string, std::string> rewrites;
    std::vector<std::string> relevant;
};

struct Conversation {
    std::string id;
    std::vector<Turn> turns;
};

struct Corpus {
    std::vector<std::string> ids;
    std::vector<std::string> texts;
    std::unordered_map<std::string, size_t> by_id;

    void add(std::string id, std::string text);
    bool contains(const std::string& id) const { return by_id.count(id) > 0; }
    const std::string& text_of(const std::string& id) const;
    size_t size() const { return ids.size(); }
};

// JSONL, one {"id": ..., "text": ...} object per line.
Corpus load_corpus(const std::string& path);
void save_corpus(const Corpus& corpus, const std::string& path);

// JSONL, one conversation per line:
// {"id": ..., "turns": [{"utterance", "answer", "rewrites": {tag: text},
//  "relevant": [doc ids]}]}
std::vector<Conversation> load_conversations(const std::string& path);
void save_conversations(const std::vector<Conversation>& convs, const std::string& path);

}  // namespace disco
