#include "disco/data.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace disco {

using nlohmann::json;

static json parse_jsonl_line(const std::string& line, size_t lineno, const char* what) {
    try {
        return json::parse(line);
    } catch (const json::parse_error& e) {
        throw std::runtime_error(std::string(what) + ": malformed JSON at line " +
                                 std::to_string(lineno) + ": " + e.what());
    }
}

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty()) {
                out.push_back(std::move(cur));
                cur.clear();
            }
        } else {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

std::vector<int32_t> token_ids(const std::string& text, const Vocabulary& vocab) {
    std::vector<int32_t> ids;
    for (const auto& tok : tokenize(text)) {
        int32_t id = vocab.id_of(tok);
        if (id >= 0) ids.push_back(id);
    }
    return ids;
}

void Corpus::add(std::string id, std::string text) {
    if (by_id.count(id)) {
        throw std::invalid_argument("corpus: duplicate doc id '" + id + "'");
    }
    by_id.emplace(id, ids.size());
    ids.push_back(std::move(id));
    texts.push_back(std::move(text));
}

const std::string& Corpus::text_of(const std::string& id) const {
    auto it = by_id.find(id);
    if (it == by_id.end()) {
        throw std::out_of_range("corpus: unknown doc id '" + id + "'");
    }
    return texts[it->second];
}

Corpus load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("corpus: cannot open " + path);
    }
    Corpus corpus;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j = parse_jsonl_line(line, lineno, "corpus");
        if (!j.contains("id") || !j.contains("text")) {
            throw std::runtime_error("corpus: line " + std::to_string(lineno) +
                                     " missing id or text");
        }
        corpus.add(j["id"].get<std::string>(), j["text"].get<std::string>());
    }
    return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("corpus: cannot write " + path);
    }
    for (size_t i = 0; i < corpus.size(); ++i) {
        json j;
        j["id"] = corpus.ids[i];
        j["text"] = corpus.texts[i];
        out << j.dump() << '\n';
    }
}

static Turn turn_from_json(const json& j) {
    Turn t;
    t.utterance = j.at("utterance").get<std::string>();
    t.answer = j.value("answer", std::string());
    if (j.contains("rewrites")) {
        for (auto it = j["rewrites"].begin(); it != j["rewrites"].end(); ++it) {
            t.rewrites[it.key()] = it.value().get<std::string>();
        }
    }
    if (j.contains("relevant")) {
        for (const auto& d : j["relevant"]) {
            t.relevant.push_back(d.get<std::string>());
        }
    }
    return t;
}

static json turn_to_json(const Turn& t) {
    json j;
    j["utterance"] = t.utterance;
    j["answer"] = t.answer;
    j["rewrites"] = json::object();
    for (const auto& [tag, text] : t.rewrites) {
        j["rewrites"][tag] = text;
    }
    j["relevant"] = t.relevant;
    return j;
}

std::vector<Conversation> load_conversations(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("conversations: cannot open " + path);
    }
    std::vector<Conversation> convs;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j = parse_jsonl_line(line, lineno, "conversations");
        Conversation c;
        c.id = j.at("id").get<std::string>();
        for (const auto& tj : j.at("turns")) {
            c.turns.push_back(turn_from_json(tj));
        }
        if (c.turns.empty()) {
            throw std::runtime_error("conversations: line " + std::to_string(lineno) +
                                     " has no turns");
        }
        convs.push_back(std::move(c));
    }
    return convs;
}

void save_conversations(const std::vector<Conversation>& convs, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("conversations: cannot write " + path);
    }
    for (const auto& c : convs) {
        json j;
        j["id"] = c.id;
        j["turns"] = json::array();
        for (const auto& t : c.turns) {
            j["turns"].push_back(turn_to_json(t));
        }
        out << j.dump() << '\n';
    }
}

}  // namespace disco
