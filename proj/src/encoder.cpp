#include "disco/encoder.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

#include "disco/rng.hpp"

namespace disco {

using nlohmann::json;

static void check_config(const EncoderConfig& cfg) {
    if (cfg.hidden_dim <= 0 || cfg.vocab_size <= 0) {
        throw std::invalid_argument("encoder: hidden_dim and vocab_size must be positive");
    }
    if (cfg.max_query_tokens <= 0 || cfg.max_answer_tokens <= 0 || cfg.max_context_tokens <= 0 ||
        cfg.max_doc_tokens <= 0) {
        throw std::invalid_argument("encoder: token limits must be positive");
    }
    if (cfg.max_context_tokens < cfg.max_query_tokens) {
        throw std::invalid_argument("encoder: max_context_tokens < max_query_tokens");
    }
}

EncoderGradients::EncoderGradients(const EncoderConfig& cfg) {
    check_config(cfg);
    size_t hv = static_cast<size_t>(cfg.hidden_dim) * static_cast<size_t>(cfg.vocab_size);
    embedding.assign(hv, 0.0);
    projection.assign(hv, 0.0);
    bias.assign(static_cast<size_t>(cfg.vocab_size), 0.0);
}

void EncoderGradients::zero() {
    std::fill(embedding.begin(), embedding.end(), 0.0);
    std::fill(projection.begin(), projection.end(), 0.0);
    std::fill(bias.begin(), bias.end(), 0.0);
}

size_t EncoderGradients::num_params() const {
    return embedding.size() + projection.size() + bias.size();
}

double EncoderGradients::param(size_t i) const {
    if (i < embedding.size()) return embedding[i];
    i -= embedding.size();
    if (i < projection.size()) return projection[i];
    i -= projection.size();
    if (i < bias.size()) return bias[i];
    throw std::out_of_range("gradients: param index out of range");
}

EncoderModel::EncoderModel(EncoderConfig cfg) : cfg_(cfg) {
    check_config(cfg_);
    size_t hv = static_cast<size_t>(cfg_.hidden_dim) * static_cast<size_t>(cfg_.vocab_size);
    embedding_.assign(hv, 0.0);
    projection_.assign(hv, 0.0);
    bias_.assign(static_cast<size_t>(cfg_.vocab_size), 0.0);
}

EncoderModel EncoderModel::random_init(const EncoderConfig& cfg, uint64_t seed) {
    EncoderModel m(cfg);
    Rng rng(seed);
    double bound = 1.0 / std::sqrt(static_cast<double>(cfg.hidden_dim));
    for (auto& w : m.embedding_) w = rng.uniform(-bound, bound);
    for (auto& w : m.projection_) w = rng.uniform(-bound, bound);
    return m;
}

EncoderModel EncoderModel::tied_lexical_init(const EncoderConfig& cfg, uint64_t seed, double gain,
                                             double activation_bias) {
    EncoderModel m(cfg);
    Rng rng(seed);
    size_t H = static_cast<size_t>(cfg.hidden_dim);
    size_t V = static_cast<size_t>(cfg.vocab_size);
    double bound = 1.0 / std::sqrt(static_cast<double>(cfg.hidden_dim));
    for (auto& w : m.embedding_) w = rng.uniform(-bound, bound);

    // E[e_t . e_t] = 1/3 under the uniform bound above, so 3 * gain * E^T
    // pushes token t's own logit to about gain * (count_t / n).
    for (size_t j = 0; j < V; ++j) {
        const double* col = m.embedding_.data() + j * H;
        double* row = m.projection_.data() + j * H;
        for (size_t i = 0; i < H; ++i) row[i] = 3.0 * gain * col[i];
    }
    for (auto& b : m.bias_) b = activation_bias;
    return m;
}

void EncoderModel::check_mutable() const {
    if (frozen_) {
        throw std::logic_error("encoder: model is frozen");
    }
}

std::vector<double>& EncoderModel::mutable_embedding() {
    check_mutable();
    return embedding_;
}

std::vector<double>& EncoderModel::mutable_projection() {
    check_mutable();
    return projection_;
}

std::vector<double>& EncoderModel::mutable_bias() {
    check_mutable();
    return bias_;
}

std::vector<double> EncoderModel::mean_pool(const std::vector<int32_t>& tokens) const {
    if (tokens.empty()) {
        throw std::invalid_argument("encoder: empty token sequence");
    }
    size_t H = static_cast<size_t>(cfg_.hidden_dim);
    std::vector<double> h(H, 0.0);
    for (int32_t t : tokens) {
        if (t < 0 || t >= cfg_.vocab_size) {
            throw std::invalid_argument("encoder: token " + std::to_string(t) +
                                        " outside vocab of size " +
                                        std::to_string(cfg_.vocab_size));
        }
        const double* col = embedding_.data() + static_cast<size_t>(t) * H;
        for (size_t i = 0; i < H; ++i) h[i] += col[i];
    }
    double inv = 1.0 / static_cast<double>(tokens.size());
    for (size_t i = 0; i < H; ++i) h[i] *= inv;
    return h;
}

std::vector<double> EncoderModel::encode_dense(const std::vector<int32_t>& tokens) const {
    size_t H = static_cast<size_t>(cfg_.hidden_dim);
    size_t V = static_cast<size_t>(cfg_.vocab_size);
    std::vector<double> h = mean_pool(tokens);
    std::vector<double> out(V, 0.0);
    for (size_t j = 0; j < V; ++j) {
        const double* row = projection_.data() + j * H;
        double logit = bias_[j];
        for (size_t i = 0; i < H; ++i) logit += row[i] * h[i];
        if (logit > 0.0) out[j] = std::log1p(logit);
    }
    return out;
}

SparseVec EncoderModel::encode(const std::vector<int32_t>& tokens) const {
    return SparseVec::from_dense(encode_dense(tokens));
}

void EncoderModel::encode_backward(const std::vector<int32_t>& tokens,
                                   const std::vector<double>& upstream,
                                   EncoderGradients& grads) const {
    if (frozen_) {
        throw std::logic_error("encoder: backward pass on a frozen model");
    }
    size_t H = static_cast<size_t>(cfg_.hidden_dim);
    size_t V = static_cast<size_t>(cfg_.vocab_size);
    if (upstream.size() != V) {
        throw std::invalid_argument("encoder: upstream size mismatch");
    }
    if (grads.bias.size() != V || grads.projection.size() != H * V) {
        throw std::invalid_argument("encoder: gradient shape mismatch");
    }

    std::vector<double> h = mean_pool(tokens);
    std::vector<double> grad_h(H, 0.0);
    for (size_t j = 0; j < V; ++j) {
        const double* row = projection_.data() + j * H;
        double logit = bias_[j];
        for (size_t i = 0; i < H; ++i) logit += row[i] * h[i];
        if (logit <= 0.0 || upstream[j] == 0.0) continue;
        double coef = upstream[j] / (1.0 + logit);
        grads.bias[j] += coef;
        double* grow = grads.projection.data() + j * H;
        for (size_t i = 0; i < H; ++i) {
            grow[i] += coef * h[i];
            grad_h[i] += coef * row[i];
        }
    }

    double inv = 1.0 / static_cast<double>(tokens.size());
    for (int32_t t : tokens) {
        double* col = grads.embedding.data() + static_cast<size_t>(t) * H;
        for (size_t i = 0; i < H; ++i) col[i] += grad_h[i] * inv;
    }
}

size_t EncoderModel::num_params() const {
    return embedding_.size() + projection_.size() + bias_.size();
}

double EncoderModel::param(size_t i) const {
    if (i < embedding_.size()) return embedding_[i];
    i -= embedding_.size();
    if (i < projection_.size()) return projection_[i];
    i -= projection_.size();
    if (i < bias_.size()) return bias_[i];
    throw std::out_of_range("encoder: param index out of range");
}

void EncoderModel::set_param(size_t i, double v) {
    check_mutable();
    if (i < embedding_.size()) {
        embedding_[i] = v;
        return;
    }
    i -= embedding_.size();
    if (i < projection_.size()) {
        projection_[i] = v;
        return;
    }
    i -= projection_.size();
    if (i < bias_.size()) {
        bias_[i] = v;
        return;
    }
    throw std::out_of_range("encoder: param index out of range");
}

void EncoderModel::add_to_param(size_t i, double delta) {
    set_param(i, param(i) + delta);
}

void EncoderModel::save(const std::string& path) const {
    json j;
    j["hidden_dim"] = cfg_.hidden_dim;
    j["vocab_size"] = cfg_.vocab_size;
    j["max_query_tokens"] = cfg_.max_query_tokens;
    j["max_answer_tokens"] = cfg_.max_answer_tokens;
    j["max_context_tokens"] = cfg_.max_context_tokens;
    j["max_doc_tokens"] = cfg_.max_doc_tokens;
    j["frozen"] = frozen_;
    j["embedding"] = embedding_;
    j["projection"] = projection_;
    j["bias"] = bias_;
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("encoder: cannot write " + path);
    }
    out << j.dump(2) << '\n';
}

EncoderModel EncoderModel::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("encoder: cannot open " + path);
    }
    json j = json::parse(in);
    EncoderConfig cfg;
    cfg.hidden_dim = j.at("hidden_dim").get<int32_t>();
    cfg.vocab_size = j.at("vocab_size").get<int32_t>();
    cfg.max_query_tokens = j.at("max_query_tokens").get<int32_t>();
    cfg.max_answer_tokens = j.at("max_answer_tokens").get<int32_t>();
    cfg.max_context_tokens = j.at("max_context_tokens").get<int32_t>();
    cfg.max_doc_tokens = j.at("max_doc_tokens").get<int32_t>();
    EncoderModel m(cfg);
    m.embedding_ = j.at("embedding").get<std::vector<double>>();
    m.projection_ = j.at("projection").get<std::vector<double>>();
    m.bias_ = j.at("bias").get<std::vector<double>>();
    size_t hv = static_cast<size_t>(cfg.hidden_dim) * static_cast<size_t>(cfg.vocab_size);
    if (m.embedding_.size() != hv || m.projection_.size() != hv ||
        m.bias_.size() != static_cast<size_t>(cfg.vocab_size)) {
        throw std::runtime_error("encoder: checkpoint shape mismatch in " + path);
    }
    if (j.at("frozen").get<bool>()) m.freeze();
    return m;
}

static void append_truncated(std::vector<int32_t>& out, const std::string& text,
                             const Vocabulary& vocab, int32_t max_tokens, int32_t sep_id,
                             bool& first) {
    std::vector<int32_t> ids = token_ids(text, vocab);
    if (ids.size() > static_cast<size_t>(max_tokens)) {
        ids.resize(static_cast<size_t>(max_tokens));
    }
    if (ids.empty()) return;
    if (!first) out.push_back(sep_id);
    first = false;
    out.insert(out.end(), ids.begin(), ids.end());
}

std::vector<int32_t> flatten_conversation(const Conversation& conv, size_t turn,
                                          const Vocabulary& vocab, const EncoderConfig& cfg) {
    if (turn >= conv.turns.size()) {
        throw std::out_of_range("flatten: turn " + std::to_string(turn) +
                                " out of range for conversation " + conv.id);
    }
    int32_t sep_id = vocab.id_of("[SEP]");
    if (sep_id < 0) {
        throw std::invalid_argument("flatten: vocabulary has no [SEP] token");
    }

    std::vector<int32_t> out;
    bool first = true;
    append_truncated(out, conv.turns[turn].utterance, vocab, cfg.max_query_tokens, sep_id, first);
    for (size_t i = turn; i-- > 0;) {
        append_truncated(out, conv.turns[i].answer, vocab, cfg.max_answer_tokens, sep_id, first);
        append_truncated(out, conv.turns[i].utterance, vocab, cfg.max_query_tokens, sep_id, first);
    }
    if (out.size() > static_cast<size_t>(cfg.max_context_tokens)) {
        out.resize(static_cast<size_t>(cfg.max_context_tokens));
    }
    return out;
}

}  // namespace disco
