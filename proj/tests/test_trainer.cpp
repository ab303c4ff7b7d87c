#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"

#include "disco/distill.hpp"
#include "disco/encoder.hpp"
#include "disco/index.hpp"
#include "disco/trainer.hpp"
#include "oracles.hpp"

using namespace disco;

namespace {

EncoderConfig toy_cfg() {
    EncoderConfig cfg;
    cfg.hidden_dim = 8;
    cfg.vocab_size = 30;
    cfg.max_query_tokens = 16;
    cfg.max_answer_tokens = 16;
    cfg.max_context_tokens = 64;
    cfg.max_doc_tokens = 64;
    return cfg;
}

struct ToyTask {
    EncoderConfig cfg = toy_cfg();
    std::shared_ptr<const EncoderModel> teacher;
    TeacherEnsemble ens;
    EncodedCorpus docs;
    std::vector<TrainingExample> examples;

    explicit ToyTask(size_t num_examples, uint32_t data_seed = 167) {
        auto frozen = std::make_shared<EncoderModel>(
            EncoderModel::tied_lexical_init(cfg, 3, 4.0, -0.05));
        frozen->freeze();
        teacher = frozen;
        ens.teachers.push_back({"human", teacher, "human"});

        oracle::Gen gen(data_seed);
        for (int d = 0; d < 12; ++d) {
            docs.add("d" + std::to_string(d), gen.sparse(30, 6, 0.2, 2.0));
        }
        for (size_t i = 0; i < num_examples; ++i) {
            std::vector<int32_t> q = {static_cast<int32_t>(gen.uniform_int(0, 29)),
                                      static_cast<int32_t>(gen.uniform_int(0, 29)),
                                      static_cast<int32_t>(gen.uniform_int(0, 29))};
            SparseVec rep = teacher->encode(q);
            TrainingExample ex;
            ex.conversation_id = "c" + std::to_string(i);
            ex.turn = 0;
            ex.q_conv = q;
            ex.rewrites["human"] = q;
            ex.positive = "d" + std::to_string(i % 12);
            ex.negatives = {"d" + std::to_string((i + 1) % 12),
                            "d" + std::to_string((i + 2) % 12),
                            "d" + std::to_string((i + 3) % 12)};
            ex.positive_score = dot(rep, docs.rep_of(ex.positive));
            for (const auto& neg : ex.negatives) {
                ex.negative_scores.push_back(dot(rep, docs.rep_of(neg)));
            }
            examples.push_back(std::move(ex));
        }
    }
};

TrainConfig quick_config(Objective objective, int epochs, uint64_t seed = 1) {
    TrainConfig cfg;
    cfg.objective = objective;
    cfg.epochs = epochs;
    cfg.learning_rate = 1e-3;
    cfg.batch_size = 4;
    cfg.num_negatives = 3;
    cfg.lambda_q = 1e-3;
    cfg.lambda_d = 5e-4;
    cfg.temperature = 1.0;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("objectives map to and from their names") {
    CHECK(objective_from_string("disco_kld") == Objective::disco_kld);
    CHECK(objective_from_string("convdr_mse") == Objective::convdr_mse);
    CHECK(objective_from_string("infonce_only") == Objective::infonce_only);
    CHECK(to_string(Objective::disco_kld) == "disco_kld");
    CHECK(to_string(Objective::convdr_mse) == "convdr_mse");
    CHECK(to_string(Objective::infonce_only) == "infonce_only");
    CHECK_THROWS_AS(objective_from_string("dpr"), std::invalid_argument);
}

TEST_CASE("train config validation rejects each bad field") {
    TrainConfig cfg = quick_config(Objective::disco_kld, 2);
    cfg.validate();

    TrainConfig bad = cfg;
    bad.epochs = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.batch_size = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.learning_rate = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.num_negatives = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.lambda_q = -1.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.temperature = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// optimizer

TEST_CASE("adam leaves parameters untouched on a zero gradient") {
    EncoderConfig cfg = toy_cfg();
    EncoderModel model = EncoderModel::random_init(cfg, 9);
    std::vector<double> before;
    for (size_t i = 0; i < model.num_params(); ++i) before.push_back(model.param(i));

    Adam adam(model.num_params(), 0.1);
    EncoderGradients grads(cfg);
    adam.step(model, grads);
    for (size_t i = 0; i < model.num_params(); ++i) {
        CHECK(model.param(i) == before[i]);
    }
}

TEST_CASE("adam moves parameters against the gradient") {
    EncoderConfig cfg = toy_cfg();
    EncoderModel model = EncoderModel::random_init(cfg, 9);
    double before = model.param(5);

    Adam adam(model.num_params(), 0.1);
    EncoderGradients grads(cfg);
    grads.embedding[5] = 2.0;
    adam.step(model, grads);
    CHECK(model.param(5) < before);
    // an untouched coordinate stays put
    CHECK(model.param(6) == EncoderModel::random_init(cfg, 9).param(6));
}

TEST_CASE("adam rejects a gradient of the wrong size") {
    EncoderConfig cfg = toy_cfg();
    EncoderModel model = EncoderModel::random_init(cfg, 9);
    Adam adam(3, 0.1);
    EncoderGradients grads(cfg);
    CHECK_THROWS_AS(adam.step(model, grads), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// the representation-matching baseline step

TEST_CASE("a teacher-copy student with uniform candidates isolates the infonce floor") {
    EncoderConfig cfg = toy_cfg();
    EncoderModel base = EncoderModel::tied_lexical_init(cfg, 3, 4.0, -0.05);
    EncoderModel student = base;
    auto frozen = std::make_shared<EncoderModel>(base);
    frozen->freeze();
    TeacherEnsemble ens;
    ens.teachers.push_back({"human", frozen, "human"});

    EncodedCorpus docs;
    for (int d = 0; d < 4; ++d) {
        docs.add("d" + std::to_string(d), SparseVec(30, {{0, 1.0}, {5, 0.5}}));
    }
    TrainingExample ex;
    ex.conversation_id = "c0";
    ex.turn = 0;
    ex.q_conv = {2, 5};
    ex.rewrites["human"] = {2, 5};
    ex.positive = "d0";
    ex.negatives = {"d1", "d2", "d3"};
    SparseVec rep = frozen->encode(ex.q_conv);
    ex.positive_score = dot(rep, docs.rep_of("d0"));
    ex.negative_scores = {ex.positive_score, ex.positive_score, ex.positive_score};

    BatchContext ctx = build_batch_context({ex}, ens, docs);
    ConvdrResult res = baseline_convdr_step(0, ctx, student, *frozen);
    CHECK(res.mse == 0.0);
    CHECK(res.infonce == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    CHECK(res.total == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("the baseline step weights its two terms") {
    ToyTask task(2);
    EncoderModel student = EncoderModel::random_init(task.cfg, 5);
    BatchContext ctx = build_batch_context(task.examples, task.ens, task.docs);
    ConvdrResult res = baseline_convdr_step(0, ctx, student, *task.teacher, 2.0, 0.5);
    CHECK(res.total == doctest::Approx(2.0 * res.mse + 0.5 * res.infonce).epsilon(1e-12));
    CHECK(res.mse > 0.0);
}

TEST_CASE("the baseline step demands a gold rewrite") {
    ToyTask task(1);
    std::vector<TrainingExample> batch = task.examples;
    batch[0].rewrites.clear();
    batch[0].rewrites["llm_a"] = batch[0].q_conv;
    BatchContext ctx = build_batch_context(batch, task.ens, task.docs);
    EncoderModel student = EncoderModel::random_init(task.cfg, 5);
    CHECK_THROWS_AS(baseline_convdr_step(0, ctx, student, *task.teacher), std::invalid_argument);
    CHECK_THROWS_AS(baseline_convdr_step(7, ctx, student, *task.teacher), std::out_of_range);
}

TEST_CASE("baseline gradients match finite differences through the encoder") {
    ToyTask task(3);
    EncoderModel student = EncoderModel::random_init(task.cfg, 7);
    BatchContext ctx = build_batch_context(task.examples, task.ens, task.docs);
    ConvdrResult res = baseline_convdr_step(1, ctx, student, *task.teacher);
    auto f = [&]() { return baseline_convdr_step(1, ctx, student, *task.teacher).total; };
    size_t hv = 8 * 30;
    std::vector<size_t> probe = {2,       41,       133,      239,       hv + 9,
                                 hv + 84, hv + 150, hv + 239, 2 * hv + 7, 2 * hv + 21};
    for (size_t i : probe) {
        double fd = oracle::fd_param(student, i, f);
        double an = res.grads.param(i);
        if (std::abs(fd) < 1e-10 && std::abs(an) < 1e-10) continue;
        CHECK(oracle::rel_err(an, fd) < 1e-3);
    }
}

// ---------------------------------------------------------------------------
// the training loop

TEST_CASE("training demands examples and a live student") {
    ToyTask task(4);
    TrainConfig cfg = quick_config(Objective::disco_kld, 1);
    EncoderModel student = EncoderModel::random_init(task.cfg, 5);
    CHECK_THROWS_AS(train(cfg, {}, student, task.ens, task.docs), std::invalid_argument);

    EncoderModel frozen_student = EncoderModel::random_init(task.cfg, 5);
    frozen_student.freeze();
    CHECK_THROWS_AS(train(cfg, task.examples, frozen_student, task.ens, task.docs),
                    std::invalid_argument);
}

TEST_CASE("training is bitwise deterministic for a fixed seed") {
    ToyTask task(10);
    TrainConfig cfg = quick_config(Objective::disco_kld, 3, 11);
    EncoderModel student = EncoderModel::random_init(task.cfg, 5);

    auto [model_a, report_a] = train(cfg, task.examples, student, task.ens, task.docs);
    auto [model_b, report_b] = train(cfg, task.examples, student, task.ens, task.docs);
    REQUIRE(model_a.num_params() == model_b.num_params());
    for (size_t i = 0; i < model_a.num_params(); ++i) {
        CHECK(model_a.param(i) == model_b.param(i));
    }
    CHECK(report_a.final_mean_kld == report_b.final_mean_kld);
    REQUIRE(report_a.epochs.size() == report_b.epochs.size());
    for (size_t e = 0; e < report_a.epochs.size(); ++e) {
        CHECK(report_a.epochs[e].distill == report_b.epochs[e].distill);
    }
}

TEST_CASE("distillation training reduces the mean divergence across epochs") {
    ToyTask task(12);
    TrainConfig cfg = quick_config(Objective::disco_kld, 8, 11);
    // one batch per epoch keeps the candidate sets, and so the per-epoch
    // losses, directly comparable
    cfg.batch_size = 12;
    EncoderModel student = EncoderModel::random_init(task.cfg, 5);
    auto [model, report] = train(cfg, task.examples, student, task.ens, task.docs);
    REQUIRE(report.epochs.size() == 8);
    CHECK(report.epochs.back().distill < report.epochs.front().distill);
    CHECK(report.objective == "disco_kld");
    CHECK(report.final_mean_kld >= 0.0);
    for (const auto& stats : report.epochs) {
        CHECK(stats.wall_sec >= 0.0);
        CHECK(stats.mean_query_nnz >= 0.0);
    }
}

TEST_CASE("every epoch writes a loadable checkpoint") {
    auto dir = oracle::temp_dir("trainer_ckpt");
    ToyTask task(6);
    TrainConfig cfg = quick_config(Objective::disco_kld, 3, 11);
    EncoderModel student = EncoderModel::random_init(task.cfg, 5);
    auto [model, report] = train(cfg, task.examples, student, task.ens, task.docs, dir.string());
    REQUIRE(report.epochs.size() == 3);
    for (const auto& stats : report.epochs) {
        CHECK_FALSE(stats.checkpoint.empty());
        CHECK(std::filesystem::exists(stats.checkpoint));
    }
    CHECK(report.final_checkpoint == report.epochs.back().checkpoint);
    EncoderModel reloaded = EncoderModel::load(report.final_checkpoint);
    REQUIRE(reloaded.num_params() == model.num_params());
    for (size_t i = 0; i < model.num_params(); ++i) {
        CHECK(reloaded.param(i) == model.param(i));
    }
}

TEST_CASE("baseline training pulls the student representation toward the teacher") {
    auto dir = oracle::temp_dir("trainer_convdr");
    ToyTask task(12);
    TrainConfig cfg = quick_config(Objective::convdr_mse, 6, 11);
    EncoderModel student = EncoderModel::random_init(task.cfg, 5);
    auto [model, report] = train(cfg, task.examples, student, task.ens, task.docs, dir.string());
    REQUIRE(report.epochs.size() == 6);

    auto mean_distance = [&](const EncoderModel& m) {
        double total = 0.0;
        for (const auto& ex : task.examples) {
            SparseVec got = m.encode(ex.q_conv);
            SparseVec want = task.teacher->encode(ex.rewrites.at("human"));
            total += mse_rep_loss(got, want).loss;
        }
        return total / static_cast<double>(task.examples.size());
    };

    double prev = mean_distance(student);
    for (const auto& stats : report.epochs) {
        double d = mean_distance(EncoderModel::load(stats.checkpoint));
        CHECK(d < prev);
        prev = d;
    }
}

TEST_CASE("contrastive-only training runs end to end") {
    ToyTask task(8);
    TrainConfig cfg = quick_config(Objective::infonce_only, 2, 11);
    EncoderModel student = EncoderModel::random_init(task.cfg, 5);
    auto [model, report] = train(cfg, task.examples, student, task.ens, task.docs);
    CHECK(report.objective == "infonce_only");
    REQUIRE(report.epochs.size() == 2);
    CHECK(report.final_mean_kld >= 0.0);
}

TEST_CASE("train reports serialize to json and csv") {
    auto dir = oracle::temp_dir("trainer_report");
    ToyTask task(6);
    TrainConfig cfg = quick_config(Objective::disco_kld, 2, 11);
    EncoderModel student = EncoderModel::random_init(task.cfg, 5);
    auto [model, report] = train(cfg, task.examples, student, task.ens, task.docs);

    std::string jpath = (dir / "report.json").string();
    std::string cpath = (dir / "report.csv").string();
    report.save_json(jpath);
    report.save_csv(cpath);

    std::ifstream jin(jpath);
    REQUIRE(jin.good());
    std::string jtext((std::istreambuf_iterator<char>(jin)), std::istreambuf_iterator<char>());
    CHECK(jtext.find("final_mean_kld") != std::string::npos);
    CHECK(jtext.find("disco_kld") != std::string::npos);

    std::ifstream cin(cpath);
    REQUIRE(cin.good());
    std::string header;
    std::getline(cin, header);
    CHECK(header == "epoch,distill,reg_q,reg_d,mean_query_nnz");
    size_t rows = 0;
    std::string row;
    while (std::getline(cin, row)) {
        if (!row.empty()) ++rows;
    }
    CHECK(rows == 2);
}
