#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "disco/distill.hpp"
#include "disco/encoder.hpp"
#include "disco/index.hpp"

namespace disco {

enum class Objective { disco_kld, convdr_mse, infonce_only };

Objective objective_from_string(const std::string& s);
std::string to_string(Objective objective);

struct TrainConfig {
    Objective objective = Objective::disco_kld;
    int epochs = 5;
    double learning_rate = 2e-5;
    int batch_size = 10;
    int num_negatives = 16;
    double lambda_q = 1e-3;
    double lambda_d = 5e-4;
    double temperature = 1.0;
    uint64_t seed = 1;

    void validate() const;
};

struct EpochStats {
    int epoch = 0;
    double distill = 0.0;
    double reg_q = 0.0;
    double reg_d = 0.0;
    double mean_query_nnz = 0.0;
    double wall_sec = 0.0;
    std::string checkpoint;
};

struct TrainReport {
    std::string objective;
    std::vector<EpochStats> epochs;
    std::string final_checkpoint;
    // mean per-example KLD against the teacher over all examples, computed
    // with the final parameters
    double final_mean_kld = 0.0;

    void save_json(const std::string& path) const;
    void save_csv(const std::string& path) const;
};

class Adam {
public:
    explicit Adam(size_t num_params, double lr, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8);
    void step(EncoderModel& model, const EncoderGradients& grads);

private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<double> m_, v_;
};

struct ConvdrResult {
    double total = 0.0;
    double mse = 0.0;
    double infonce = 0.0;
    EncoderGradients grads;
};

// Representation-matching baseline: MSE between the student's flattened-
// conversation representation and the teacher's gold-rewrite representation,
// plus InfoNCE over the example's candidates.
ConvdrResult baseline_convdr_step(size_t example_index, const BatchContext& ctx,
                                  const EncoderModel& student, const EncoderModel& teacher,
                                  double w_mse = 1.0, double w_infonce = 1.0);

// Adam over shuffled mini-batches; deterministic for a fixed config seed.
// Writes one checkpoint per epoch when checkpoint_dir is non-empty.
std::pair<EncoderModel, TrainReport> train(const TrainConfig& cfg,
                                           const std::vector<TrainingExample>& examples,
                                           const EncoderModel& student_init,
                                           const TeacherEnsemble& ensemble,
                                           const EncodedCorpus& docs,
                                           const std::string& checkpoint_dir = "");

}  // namespace disco
