#include "disco/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

#include "disco/rng.hpp"

namespace disco {

using nlohmann::json;

Objective objective_from_string(const std::string& s) {
    if (s == "disco_kld") return Objective::disco_kld;
    if (s == "convdr_mse") return Objective::convdr_mse;
    if (s == "infonce_only") return Objective::infonce_only;
    throw std::invalid_argument("objective: unknown value '" + s + "'");
}

std::string to_string(Objective objective) {
    switch (objective) {
        case Objective::disco_kld: return "disco_kld";
        case Objective::convdr_mse: return "convdr_mse";
        case Objective::infonce_only: return "infonce_only";
    }
    throw std::logic_error("objective: invalid enum value");
}

void TrainConfig::validate() const {
    if (epochs <= 0) throw std::invalid_argument("train config: epochs must be positive");
    if (batch_size <= 0) throw std::invalid_argument("train config: batch_size must be positive");
    if (!(learning_rate > 0.0)) {
        throw std::invalid_argument("train config: learning_rate must be positive");
    }
    if (num_negatives < 1) {
        throw std::invalid_argument("train config: num_negatives must be at least 1");
    }
    if (lambda_q < 0.0 || lambda_d < 0.0) {
        throw std::invalid_argument("train config: lambda weights must be non-negative");
    }
    if (!(temperature > 0.0)) {
        throw std::invalid_argument("train config: temperature must be positive");
    }
}

Adam::Adam(size_t num_params, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(num_params, 0.0),
      v_(num_params, 0.0) {}

void Adam::step(EncoderModel& model, const EncoderGradients& grads) {
    if (grads.num_params() != m_.size() || model.num_params() != m_.size()) {
        throw std::invalid_argument("adam: parameter count mismatch");
    }
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t i = 0; i < m_.size(); ++i) {
        double g = grads.param(i);
        if (g == 0.0 && m_[i] == 0.0 && v_[i] == 0.0) continue;
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
        double update = lr_ * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + eps_);
        model.add_to_param(i, -update);
    }
}

ConvdrResult baseline_convdr_step(size_t example_index, const BatchContext& ctx,
                                  const EncoderModel& student, const EncoderModel& teacher,
                                  double w_mse, double w_infonce) {
    if (example_index >= ctx.examples.size()) {
        throw std::out_of_range("convdr step: example index out of range");
    }
    const ExampleContext& ec = ctx.examples[example_index];
    auto rw = ec.rewrites.find("human");
    if (rw == ec.rewrites.end()) {
        throw std::invalid_argument("convdr step: missing gold rewrite for " + ec.key);
    }
    size_t V = static_cast<size_t>(student.config().vocab_size);

    ConvdrResult result{0.0, 0.0, 0.0, EncoderGradients(student.config())};
    SparseVec query_rep = student.encode(ec.q_conv);
    SparseVec target = teacher.encode(rw->second);

    LossGrad mse = mse_rep_loss(query_rep, target);
    result.mse = mse.loss;
    std::vector<double> upstream(V, 0.0);
    for (size_t j = 0; j < V; ++j) upstream[j] = w_mse * mse.grad[j];

    std::vector<double> scores(ec.candidates.size());
    for (size_t c = 0; c < ec.candidates.size(); ++c) {
        scores[c] = dot(query_rep, *ec.candidates[c].rep);
    }
    LossGrad nce = infonce_loss(scores, ec.positive_index);
    result.infonce = nce.loss;
    for (size_t c = 0; c < ec.candidates.size(); ++c) {
        if (nce.grad[c] == 0.0) continue;
        for (const auto& e : ec.candidates[c].rep->entries()) {
            upstream[static_cast<size_t>(e.token)] += w_infonce * nce.grad[c] * e.weight;
        }
    }
    student.encode_backward(ec.q_conv, upstream, result.grads);
    result.total = w_mse * result.mse + w_infonce * result.infonce;
    return result;
}

namespace {

struct BatchStats {
    double total = 0.0;
    double distill = 0.0;
    double reg_q = 0.0;
    double reg_d = 0.0;
    double mean_query_nnz = 0.0;
};

// Batch loss: mean per-example distillation term plus one query-side FLOPS
// regularizer over the whole batch. Gradients accumulate into `grads`.
BatchStats batch_objective(const TrainConfig& cfg, const BatchContext& ctx,
                           const EncoderModel& student, const EncoderModel& teacher_model,
                           EncoderGradients& grads,
                           std::map<std::string, SparseVec>& target_cache) {
    size_t B = ctx.examples.size();
    size_t V = static_cast<size_t>(student.config().vocab_size);
    double inv_b = 1.0 / static_cast<double>(B);
    BatchStats stats;

    std::vector<SparseVec> query_reps;
    query_reps.reserve(B);
    for (const auto& ec : ctx.examples) {
        query_reps.push_back(student.encode(ec.q_conv));
        stats.mean_query_nnz += static_cast<double>(query_reps.back().nnz()) * inv_b;
    }

    std::vector<SparseVec> doc_reps;
    for (size_t e = 0; e < B; ++e) {
        const ExampleContext& ec = ctx.examples[e];
        std::vector<double> upstream(V, 0.0);

        std::vector<double> scores(ec.candidates.size());
        for (size_t c = 0; c < ec.candidates.size(); ++c) {
            scores[c] = dot(query_reps[e], *ec.candidates[c].rep);
        }

        std::vector<double> score_grad(ec.candidates.size(), 0.0);
        switch (cfg.objective) {
            case Objective::disco_kld: {
                std::vector<double> teacher(ec.candidates.size());
                for (size_t c = 0; c < ec.candidates.size(); ++c) {
                    teacher[c] = ec.candidates[c].teacher_score;
                }
                LossGrad kld = kld_loss(teacher, scores, cfg.temperature);
                stats.distill += kld.loss * inv_b;
                score_grad = kld.grad;
                break;
            }
            case Objective::convdr_mse: {
                auto rw = ec.rewrites.find("human");
                if (rw == ec.rewrites.end()) {
                    throw std::invalid_argument("train: missing gold rewrite for " + ec.key);
                }
                auto [target, inserted] = target_cache.emplace(ec.key, SparseVec());
                if (inserted) target->second = teacher_model.encode(rw->second);
                LossGrad mse = mse_rep_loss(query_reps[e], target->second);
                stats.distill += mse.loss * inv_b;
                for (size_t j = 0; j < V; ++j) upstream[j] += mse.grad[j] * inv_b;
                LossGrad nce = infonce_loss(scores, ec.positive_index);
                stats.distill += nce.loss * inv_b;
                score_grad = nce.grad;
                break;
            }
            case Objective::infonce_only: {
                LossGrad nce = infonce_loss(scores, ec.positive_index);
                stats.distill += nce.loss * inv_b;
                score_grad = nce.grad;
                break;
            }
        }

        for (size_t c = 0; c < ec.candidates.size(); ++c) {
            if (score_grad[c] == 0.0) continue;
            for (const auto& entry : ec.candidates[c].rep->entries()) {
                upstream[static_cast<size_t>(entry.token)] += score_grad[c] * entry.weight * inv_b;
            }
        }
        student.encode_backward(ec.q_conv, upstream, grads);

        if (cfg.lambda_d != 0.0) {
            for (const auto& c : ec.candidates) doc_reps.push_back(*c.rep);
        }
    }

    if (cfg.lambda_q != 0.0) {
        RegLoss reg = flops_reg_loss(query_reps);
        stats.reg_q = cfg.lambda_q * reg.loss;
        std::vector<double> reg_upstream(V);
        for (size_t j = 0; j < V; ++j) reg_upstream[j] = cfg.lambda_q * reg.grad[j];
        for (const auto& ec : ctx.examples) {
            student.encode_backward(ec.q_conv, reg_upstream, grads);
        }
    }
    if (cfg.lambda_d != 0.0 && !doc_reps.empty()) {
        stats.reg_d = cfg.lambda_d * l1_reg_loss(doc_reps).loss;
    }
    stats.total = stats.distill + stats.reg_q;
    return stats;
}

const EncoderModel& gold_teacher(const TeacherEnsemble& ensemble) {
    for (const auto& t : ensemble.teachers) {
        if (t.rewrite_tag == "human") return *t.model;
    }
    return *ensemble.teachers.front().model;
}

double mean_kld(const std::vector<TrainingExample>& examples, const EncoderModel& model,
                const TeacherEnsemble& ensemble, const EncodedCorpus& docs, int batch_size,
                double temperature, RewriteCache& cache) {
    double total = 0.0;
    size_t count = 0;
    for (size_t start = 0; start < examples.size(); start += static_cast<size_t>(batch_size)) {
        size_t end = std::min(examples.size(), start + static_cast<size_t>(batch_size));
        std::vector<TrainingExample> batch(examples.begin() + static_cast<long>(start),
                                           examples.begin() + static_cast<long>(end));
        BatchContext ctx = build_batch_context(batch, ensemble, docs, &cache);
        for (const auto& ec : ctx.examples) {
            SparseVec rep = model.encode(ec.q_conv);
            std::vector<double> teacher(ec.candidates.size());
            std::vector<double> student(ec.candidates.size());
            for (size_t c = 0; c < ec.candidates.size(); ++c) {
                teacher[c] = ec.candidates[c].teacher_score;
                student[c] = dot(rep, *ec.candidates[c].rep);
            }
            total += kld_loss(teacher, student, temperature).loss;
            ++count;
        }
    }
    return count == 0 ? 0.0 : total / static_cast<double>(count);
}

}  // namespace

std::pair<EncoderModel, TrainReport> train(const TrainConfig& cfg,
                                           const std::vector<TrainingExample>& examples,
                                           const EncoderModel& student_init,
                                           const TeacherEnsemble& ensemble,
                                           const EncodedCorpus& docs,
                                           const std::string& checkpoint_dir) {
    cfg.validate();
    ensemble.validate();
    if (examples.empty()) {
        throw std::invalid_argument("train: no training examples");
    }
    if (student_init.frozen()) {
        throw std::invalid_argument("train: student model is frozen");
    }
    if (!checkpoint_dir.empty()) {
        std::filesystem::create_directories(checkpoint_dir);
    }

    EncoderModel model = student_init;
    const EncoderModel& teacher_model = gold_teacher(ensemble);
    Adam adam(model.num_params(), cfg.learning_rate);
    RewriteCache rewrite_cache;
    std::map<std::string, SparseVec> target_cache;
    TrainReport report;
    report.objective = to_string(cfg.objective);

    std::vector<size_t> order(examples.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        Rng rng(derive_seed(cfg.seed, "epoch", static_cast<uint64_t>(epoch)));
        rng.shuffle(order);

        EpochStats stats;
        stats.epoch = epoch;
        size_t batches = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
            size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
            std::vector<TrainingExample> batch;
            batch.reserve(end - start);
            for (size_t i = start; i < end; ++i) batch.push_back(examples[order[i]]);

            BatchContext ctx = build_batch_context(batch, ensemble, docs, &rewrite_cache);
            EncoderGradients grads(model.config());
            BatchStats bs = batch_objective(cfg, ctx, model, teacher_model, grads, target_cache);
            if (!std::isfinite(bs.total)) {
                throw std::runtime_error("train: non-finite loss in epoch " +
                                         std::to_string(epoch) + ", batch starting at " +
                                         batch.front().key());
            }
            adam.step(model, grads);

            stats.distill += bs.distill;
            stats.reg_q += bs.reg_q;
            stats.reg_d += bs.reg_d;
            stats.mean_query_nnz += bs.mean_query_nnz;
            ++batches;
        }
        double inv = 1.0 / static_cast<double>(batches);
        stats.distill *= inv;
        stats.reg_q *= inv;
        stats.reg_d *= inv;
        stats.mean_query_nnz *= inv;
        stats.wall_sec =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        if (!checkpoint_dir.empty()) {
            char name[32];
            std::snprintf(name, sizeof(name), "epoch_%03d.ckpt.json", epoch);
            stats.checkpoint = (std::filesystem::path(checkpoint_dir) / name).string();
            model.save(stats.checkpoint);
        }
        report.epochs.push_back(std::move(stats));
    }

    report.final_checkpoint = report.epochs.back().checkpoint;
    report.final_mean_kld = mean_kld(examples, model, ensemble, docs, cfg.batch_size,
                                     cfg.temperature, rewrite_cache);
    return {std::move(model), std::move(report)};
}

void TrainReport::save_json(const std::string& path) const {
    json j;
    j["objective"] = objective;
    j["final_checkpoint"] = final_checkpoint;
    j["final_mean_kld"] = final_mean_kld;
    j["epochs"] = json::array();
    for (const auto& e : epochs) {
        j["epochs"].push_back({{"epoch", e.epoch},
                               {"distill", e.distill},
                               {"reg_q", e.reg_q},
                               {"reg_d", e.reg_d},
                               {"mean_query_nnz", e.mean_query_nnz},
                               {"wall_sec", e.wall_sec},
                               {"checkpoint", e.checkpoint}});
    }
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("train report: cannot write " + path);
    }
    out << j.dump(2) << '\n';
}

void TrainReport::save_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("train report: cannot write " + path);
    }
    out << "epoch,distill,reg_q,reg_d,mean_query_nnz\n";
    char buf[64];
    auto fmt = [&buf](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    for (const auto& e : epochs) {
        out << e.epoch << ',' << fmt(e.distill) << ',' << fmt(e.reg_q) << ',' << fmt(e.reg_d)
            << ',' << fmt(e.mean_query_nnz) << '\n';
    }
}

}  // namespace disco
