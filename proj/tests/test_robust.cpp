#include <gtest/gtest.h>

#include <random>

#include "drgnn/datagen.hpp"
#include "drgnn/robust.hpp"
#include "drgnn/verify.hpp"

using namespace drgnn;

namespace {

LossSpec squared() {
    LossSpec s;
    s.kind = LossKind::squared;
    return s;
}

Dataset small_task(std::uint64_t seed, std::size_t n_samples = 64) {
    DatagenConfig cfg;
    cfg.n_nodes = 16;
    cfg.samples.n_samples = n_samples;
    cfg.seed = seed;
    return generate_dataset(cfg);
}

GnnModel small_model(std::uint64_t seed) { return init_model(make_layer_specs(2, 2, 2, 4, 1), seed); }

RobustConfig small_config() {
    RobustConfig cfg;
    cfg.rho = 1.0;
    cfg.epochs = 3;
    cfg.batch_size = 16;
    cfg.learning_rate = 1e-2;
    cfg.seed = 7;
    cfg.threads = 1;
    return cfg;
}

} // namespace

TEST(Adam, ZeroGradientLeavesParameters) {
    const Vector p = Vector::LinSpaced(4, -1.0, 1.0);
    auto st = AdamState::zeros(4);
    Vector cur = p;
    for (int i = 0; i < 5; ++i) {
        auto r = adam_step(st, cur, Vector::Zero(4), 0.1);
        st = r.state;
        cur = r.params;
    }
    EXPECT_EQ(cur, p);
    EXPECT_EQ(st.step, 5u);
}

TEST(Adam, FirstStepMagnitudeIsLearningRate) {
    std::mt19937_64 rng(1);
    const Vector g = verify::random_signal(6, 1, rng).col(0);
    const auto r = adam_step(AdamState::zeros(6), Vector::Zero(6), g, 0.01);
    for (Eigen::Index i = 0; i < 6; ++i) {
        EXPECT_LE(std::abs(r.params(i)), 0.01 * (1.0 + 1e-6));
        EXPECT_NEAR(std::abs(r.params(i)), 0.01, 1e-8);
        EXPECT_LT(r.params(i) * g(i), 0.0);
    }
}

TEST(Adam, ScalarQuadraticDescends) {
    Vector w = Vector::Constant(1, 1.0);
    auto st = AdamState::zeros(1);
    for (int i = 0; i < 10; ++i) {
        auto r = adam_step(st, w, 2.0 * w, 0.1);
        EXPECT_LT(r.params(0), w(0));
        st = r.state;
        w = r.params;
    }
}

TEST(Adam, ShapeMismatch) {
    EXPECT_THROW(adam_step(AdamState::zeros(2), Vector::Zero(3), Vector::Zero(3), 0.1), DimensionMismatch);
}

TEST(InnerMaximize, OneNodeClosedForm) {
    const auto r = inner_maximize(verify::identity_model(), verify::single_node_graph(), verify::scalar_sample(1.0, 0.0),
                                  2.0, 0.0, squared(), 200, 0.1);
    EXPECT_NEAR(r.xi(0, 0), 2.0, 1e-3);
    EXPECT_NEAR(r.value, 2.0, 1e-3);
    EXPECT_TRUE(is_nondecreasing(r.trace));
}

TEST(InnerMaximize, HugeGammaPinsCenter) {
    std::mt19937_64 rng(2);
    const auto inst = verify::random_instance(rng);
    const auto s = verify::random_sample(inst.input, rng);
    const auto r = inner_maximize(inst.model, inst.graph, s, 1e6, 1.0, LossSpec{}, 15, 0.1);
    EXPECT_LE((r.xi - s.features).norm(), 1e-3);
}

TEST(InnerMaximize, Errors) {
    const auto s = verify::scalar_sample(1.0, 0.0);
    EXPECT_THROW(inner_maximize(verify::identity_model(), verify::single_node_graph(), s, 0.0, 0.0, squared(), 5, 0.1),
                 InvalidArgument);
    EXPECT_THROW(inner_maximize(verify::identity_model(), verify::single_node_graph(), s, 1.0, 0.0, squared(), 5, 0.0),
                 InvalidArgument);
}

TEST(InnerMaximizeProperty, TraceIsMonotone) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> unif(0.05, 3.0);
    for (int t = 0; t < 50; ++t) {
        const auto inst = verify::random_instance(rng);
        const auto s = verify::random_sample(inst.input, rng);
        LossSpec spec;
        spec.kind = t % 2 ? LossKind::huber : LossKind::squared;
        const auto r = inner_maximize(inst.model, inst.graph, s, unif(rng), unif(rng), spec, 30, unif(rng));
        EXPECT_TRUE(is_nondecreasing(r.trace)) << "instance " << t;
        EXPECT_GE(r.value, r.trace.front() - 1e-12);
        EXPECT_EQ(r.value, r.trace.back());
    }
}

TEST(DualObjective, OneNodeClosedForm) {
    EXPECT_NEAR(dual_objective(verify::identity_model(), verify::single_node_graph(), {verify::scalar_sample(1.0, 0.0)},
                               2.0, 0.0, squared(), 200, 0.1),
                2.0, 1e-3);
    EXPECT_THROW(dual_objective(verify::identity_model(), verify::single_node_graph(), {}, 2.0, 0.0, squared(), 5, 0.1),
                 InvalidArgument);
}

TEST(DualObjective, HugeGammaLimit) {
    std::mt19937_64 rng(4);
    const auto inst = verify::random_instance(rng);
    std::vector<Sample> batch;
    for (int i = 0; i < 4; ++i)
        batch.push_back(verify::random_sample(
            verify::random_signal(inst.input.rows(), inst.input.cols(), rng), rng));
    double clean = 0.0;
    for (const auto& s : batch) clean += loss_value(inst.model, inst.graph, s.features, s, LossSpec{});
    clean /= 4.0;
    const double gamma = 1e6;
    for (double rho : {0.0, 0.3}) {
        const double d = dual_objective(inst.model, inst.graph, batch, gamma, rho, LossSpec{}, 15, 0.1);
        EXPECT_GE(d, clean + gamma * rho - 1e-9);
        EXPECT_NEAR(d, clean + gamma * rho, 1e-4);
    }
}

TEST(CurvatureProbe, Examples) {
    const auto g = verify::single_node_graph();
    const auto s = verify::scalar_sample(0.3, -0.2);
    EXPECT_NEAR(curvature_probe(verify::identity_model(), g, {s}, squared(), 8, 1), 2.0, 0.2);

    std::mt19937_64 rng(5);
    const auto inst = verify::random_instance(rng);
    GnnModel zero = inst.model;
    for (auto& layer : zero.coefficients)
        for (auto& h : layer) h.setZero();
    const auto sample = verify::random_sample(inst.input, rng);
    EXPECT_EQ(curvature_probe(zero, inst.graph, {sample}, LossSpec{}, 16, 2), 0.0);
    EXPECT_GE(curvature_probe(inst.model, inst.graph, {sample}, LossSpec{}, 16, 3), 0.0);
    EXPECT_THROW(curvature_probe(inst.model, inst.graph, {sample}, LossSpec{}, 0, 3), InvalidArgument);
}

TEST(Config, Validation) {
    RobustConfig c;
    EXPECT_NO_THROW(validate(c));
    c.gamma_floor = 2.0;
    c.gamma_init = 1.0;
    EXPECT_THROW(validate(c), ConfigError);
    c = RobustConfig{};
    c.rho = -1.0;
    EXPECT_THROW(validate(c), ConfigError);
    c = RobustConfig{};
    c.batch_size = 0;
    EXPECT_THROW(validate(c), ConfigError);
}

TEST(ErmTrain, ZeroLabelsZeroModelStaysPut) {
    auto data = small_task(1, 16).samples;
    for (auto& s : data) s.labels.setZero();
    auto model = small_model(1);
    for (auto& layer : model.coefficients)
        for (auto& h : layer) h.setZero();
    auto cfg = small_config();
    const auto r = erm_train(data, small_task(1, 16).graph, model, cfg);
    EXPECT_EQ(r.model, model);
    EXPECT_EQ(r.report.final_train_loss, 0.0);
}

TEST(ErmTrain, DeterministicAndLearns) {
    const auto d = small_task(2, 128);
    auto cfg = small_config();
    cfg.epochs = 40;
    const auto model = small_model(2);
    const auto a = erm_train(d.samples, d.graph, model, cfg);
    const auto b = erm_train(d.samples, d.graph, model, cfg);
    EXPECT_EQ(a.model, b.model);
    EXPECT_EQ(a.report.final_train_loss, b.report.final_train_loss);
    double initial = 0.0;
    for (const auto& s : d.samples) initial += loss_value(model, d.graph, s.features, s, cfg.loss_spec);
    initial /= static_cast<double>(d.samples.size());
    EXPECT_LT(a.report.final_train_loss, 0.5 * initial);
    EXPECT_EQ(a.report.epochs.size(), cfg.epochs);
}

TEST(ErmTrain, DivergenceIsReported) {
    const auto d = small_task(3, 32);
    auto cfg = small_config();
    cfg.learning_rate = 1e200;
    cfg.epochs = 5;
    EXPECT_THROW(erm_train(d.samples, d.graph, small_model(3), cfg), NumericalFailure);
}

TEST(RobustTrain, DeterministicAndFeasible) {
    const auto d = small_task(4);
    const auto cfg = small_config();
    const auto a = robust_train(d.samples, d.graph, small_model(4), cfg);
    const auto b = robust_train(d.samples, d.graph, small_model(4), cfg);
    EXPECT_EQ(a.model, b.model);
    EXPECT_EQ(a.gamma, b.gamma);
    ASSERT_EQ(a.report.epochs.size(), b.report.epochs.size());
    for (std::size_t e = 0; e < a.report.epochs.size(); ++e) {
        EXPECT_EQ(a.report.epochs[e].objective, b.report.epochs[e].objective);
        EXPECT_EQ(a.report.epochs[e].gamma, b.report.epochs[e].gamma);
        EXPECT_GT(a.report.epochs[e].gamma, a.report.gamma_floor);
    }
    EXPECT_EQ(a.report.gamma_violations, 0u);
    EXPECT_EQ(a.report.nonmonotone_traces, 0u);
    EXPECT_EQ(a.report.traces_checked, cfg.epochs * d.samples.size());
}

TEST(RobustTrain, ThreadCountDoesNotChangeResult) {
    const auto d = small_task(5, 32);
    auto cfg = small_config();
    cfg.epochs = 2;
    const auto one = robust_train(d.samples, d.graph, small_model(5), cfg);
    cfg.threads = 4;
    const auto four = robust_train(d.samples, d.graph, small_model(5), cfg);
    EXPECT_EQ(one.model, four.model);
    EXPECT_EQ(one.gamma, four.gamma);
}

TEST(RobustTrain, ObjectiveTrendsDown) {
    const auto d = small_task(6, 128);
    auto cfg = small_config();
    cfg.epochs = 15;
    const auto r = robust_train(d.samples, d.graph, small_model(6), cfg);
    EXPECT_LT(r.report.epochs.back().objective, r.report.epochs.front().objective);
}

TEST(RobustTrain, ZeroRadiusPinnedGammaMatchesErm) {
    const auto d = small_task(7, 128);
    auto cfg = small_config();
    cfg.epochs = 20;
    cfg.rho = 0.0;
    cfg.gamma_floor = 1e4;
    cfg.gamma_init = 2e4;
    const auto robust = robust_train(d.samples, d.graph, small_model(7), cfg);
    const auto erm = erm_train(d.samples, d.graph, small_model(7), cfg);
    EXPECT_LE(std::abs(robust.report.final_train_loss - erm.report.final_train_loss),
              0.05 * erm.report.final_train_loss);
}

// One full-batch step: gamma moves against sign(rho - c).
TEST(RobustTrain, GammaGradientSign) {
    const auto d = small_task(8, 16);
    auto cfg = small_config();
    cfg.epochs = 1;
    cfg.batch_size = 16;
    cfg.gamma_floor = 0.5;
    cfg.gamma_init = 1.0;
    const auto model = small_model(8);

    double cost = 0.0;
    for (const auto& s : d.samples) {
        const auto r = inner_maximize(model, d.graph, s, 1.0, 0.0, cfg.loss_spec, cfg.ascent_steps, cfg.ascent_step_size);
        cost += (r.xi - s.features).squaredNorm();
    }
    cost /= static_cast<double>(d.samples.size());
    ASSERT_GT(cost, 0.0);

    cfg.rho = 0.5 * cost;
    EXPECT_GT(robust_train(d.samples, d.graph, model, cfg).gamma, 1.0);
    cfg.rho = 2.0 * cost;
    EXPECT_LT(robust_train(d.samples, d.graph, model, cfg).gamma, 1.0);
}

// Directional derivative of the dual objective in theta equals the Danskin
// gradient evaluated at the inner maximizer.
TEST(RobustProperty, DanskinConsistency) {
    std::mt19937_64 rng(9);
    const auto spec = squared();
    for (int t = 0; t < 5; ++t) {
        const auto inst = verify::random_instance(rng, 4, 2, 2, 1);
        std::vector<Sample> batch;
        for (int i = 0; i < 3; ++i)
            batch.push_back(verify::random_sample(
                verify::random_signal(inst.input.rows(), inst.input.cols(), rng, 0.5), rng, 0.5));
        const double curvature = curvature_probe(inst.model, inst.graph, batch, spec, 64, 1);
        const double gamma = 3.0 * std::max(curvature, 0.5);
        const double rho = 0.2;
        const std::size_t steps = 2000;
        const double eta = 0.25 / gamma;

        const Vector theta = flatten(inst.model.coefficients);
        const Vector dir = verify::random_signal(theta.size(), 1, rng).col(0).normalized();

        Vector grad = Vector::Zero(theta.size());
        for (const auto& s : batch) {
            const auto r = inner_maximize(inst.model, inst.graph, s, gamma, rho, spec, steps, eta);
            grad += flatten(evaluate_loss(inst.model, inst.graph, r.xi, s, spec).grad_params);
        }
        grad /= static_cast<double>(batch.size());
        const double analytic = grad.dot(dir);

        const double h = 1e-4;
        auto dual_at = [&](double step) {
            GnnModel m = inst.model;
            unflatten(theta + step * dir, m.coefficients);
            return dual_objective(m, inst.graph, batch, gamma, rho, spec, steps, eta);
        };
        const double numeric = (dual_at(h) - dual_at(-h)) / (2.0 * h);
        EXPECT_LE(std::abs(numeric - analytic), 5e-3 * std::max({std::abs(numeric), std::abs(analytic), 1e-2}))
            << "instance " << t << ": numeric " << numeric << " analytic " << analytic;
    }
}
