#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "drm/mlp.hpp"
#include "drm/optimizer.hpp"
#include "drm/risk.hpp"
#include "test_util.hpp"

using namespace drm;
using drm::testing::uniform;

namespace {

Sample linear_sample(std::vector<double> a, double b) {
    Sample z;
    z.features = std::move(a);
    z.target = b;
    return z;
}

Dataset quadratic_data(std::size_t m, std::size_t dim, Rng& rng) {
    Dataset d;
    for (std::size_t i = 0; i < m; ++i) {
        d.samples.push_back(linear_sample(drm::testing::gaussian_vector(dim, rng), uniform(rng, -1.0, 1.0)));
    }
    return d;
}

Dataset blob_data(const MlpSpec& spec, std::size_t m, Rng& rng) {
    Dataset d;
    d.num_classes = static_cast<int>(spec.num_classes);
    for (std::size_t i = 0; i < m; ++i) {
        Sample z;
        z.label = static_cast<int>(i % spec.num_classes);
        z.features = drm::testing::gaussian_vector(spec.input_dim, rng);
        z.features[0] += 2.0 * z.label;
        d.samples.push_back(z);
    }
    return d;
}

DrmConfig base_config(std::size_t iterations, std::size_t batch_size, double lr) {
    DrmConfig cfg;
    cfg.iterations = iterations;
    cfg.batch_size = batch_size;
    cfg.lr_schedule = {{iterations, lr}};
    cfg.seed = 42;
    return cfg;
}

}  // namespace

TEST_CASE("select_worst examples") {
    const QuadraticLoss quad(1);
    const std::vector<Sample> batch{linear_sample({1.0}, 0.0)};
    const auto w = ParamVector::scalar(0.0);

    const std::vector<ParamVector> one{ParamVector::scalar(0.3)};
    const auto s1 = select_worst(quad, w, batch, one);
    CHECK(s1.index == 0);
    CHECK(s1.perturbation == one[0]);

    const std::vector<ParamVector> two{ParamVector::scalar(-1.0), ParamVector::scalar(0.5)};
    const auto s2 = select_worst(quad, w, batch, two);
    CHECK(s2.index == 0);
    CHECK(s2.risk == 0.5);

    const ConstantLoss c(ParamVector::scalar(0.0), 1.0);
    std::vector<ParamVector> five;
    for (int i = 0; i < 5; ++i) five.push_back(ParamVector::scalar(i));
    CHECK(select_worst(c, w, batch, five).index == 0);

    CHECK_THROWS_AS(select_worst(quad, w, batch, std::vector<ParamVector>{}), std::invalid_argument);
}

TEST_CASE("one perturbed step on the 1-D quadratic lands at 0.85") {
    const QuadraticLoss quad(1);
    const std::vector<Sample> batch{linear_sample({1.0}, 0.0)};
    const auto next = perturbed_gradient_step(quad, ParamVector::scalar(1.0), batch, ParamVector::scalar(0.5), 0.1,
                                              Unbounded{});
    CHECK(next.front() == doctest::Approx(0.85).epsilon(1e-15));
}

TEST_CASE("simple step with gamma 0 equals an ERM step, constant loss stays put") {
    Rng data(1);
    const QuadraticLoss quad(3);
    const auto batch = quadratic_data(5, 3, data).samples;
    const auto w = ParamVector::from_values({0.3, -0.1, 2.0});
    auto cfg = base_config(1, 5, 0.05);
    cfg.gamma = 0.0;
    Rng rng(2);
    CHECK(simple_sgd_drm_step(quad, w, batch, cfg, 0.05, rng) ==
          perturbed_gradient_step(quad, w, batch, w.zeros_like(), 0.05, Unbounded{}));

    const ConstantLoss c(w.zeros_like(), 4.0);
    cfg.gamma = 0.7;
    CHECK(simple_sgd_drm_step(c, w, batch, cfg, 0.05, rng) == w);
}

TEST_CASE("ERM on one quadratic sample follows the closed-form contraction") {
    const QuadraticLoss quad(1);
    Dataset d;
    const double a = 1.5, b = -0.4, lr = 0.1;
    d.samples.push_back(linear_sample({a}, b));
    auto cfg = base_config(50, 1, lr);
    std::vector<double> iterates;
    RunHooks hooks;
    hooks.on_iterate = [&](std::size_t, const ParamVector& w) { iterates.push_back(w.front()); };
    const auto res = sgd_erm_run(quad, ParamVector::scalar(2.0), d, Dataset{}, cfg, hooks);
    double w = 2.0;
    REQUIRE(iterates.size() == 50);
    for (double got : iterates) {
        w = (1.0 - lr * a * a) * w + lr * a * b;
        CHECK(got == doctest::Approx(w).epsilon(1e-12));
    }
    CHECK(res.w.front() == iterates.back());
}

TEST_CASE("zero gradient keeps ERM parameters constant") {
    const ConstantLoss c(ParamVector::from_values({0, 0}), 1.0);
    Dataset d;
    d.samples.resize(10);
    const auto w0 = ParamVector::from_values({0.5, -3.0});
    CHECK(sgd_erm_run(c, w0, d, Dataset{}, base_config(30, 3, 0.5)).w == w0);
}

TEST_CASE("reduction law: gamma 0 DRM trace is bitwise the ERM trace") {
    Rng rng(3);
    const MlpSpec spec{4, {6}, 3, 7};
    const MlpLoss model(spec);
    const auto train = blob_data(spec, 60, rng);
    const auto test = blob_data(spec, 30, rng);
    auto cfg = base_config(80, 8, 0.05);
    cfg.gamma = 0.0;
    cfg.r = 5;
    cfg.q = 3;
    cfg.epoch_eval_draws = 3;
    cfg.sampling = SampleWithProbability{0.3};
    const auto w0 = init_params(spec);
    const auto erm = sgd_erm_run(model, w0, train, test, cfg);
    const auto drm = sgd_drm_run(model, w0, train, test, cfg);
    CHECK(erm.trace.to_csv() == drm.trace.to_csv());
    CHECK(erm.w == drm.w);
    CHECK(erm.trace.batch_fingerprint == drm.trace.batch_fingerprint);
    CHECK(erm.trace.init_fingerprint == drm.trace.init_fingerprint);
}

TEST_CASE("reduction law: q 1 with sampling every iteration is bitwise the simple variant") {
    Rng rng(4);
    const MlpSpec spec{3, {5}, 2, 1};
    const MlpLoss model(spec);
    const auto train = blob_data(spec, 40, rng);
    auto cfg = base_config(60, 5, 0.05);
    cfg.gamma = 0.3;
    cfg.r = 4;
    cfg.q = 1;
    cfg.sampling = SampleEveryK{1};
    cfg.epoch_eval_draws = 2;
    const auto w0 = init_params(spec);
    const auto a = sgd_drm_run(model, w0, train, train, cfg);
    const auto b = simple_sgd_drm_run(model, w0, train, train, cfg);
    CHECK(a.trace.to_csv() == b.trace.to_csv());
    CHECK(a.w == b.w);
}

TEST_CASE("queue law: size never exceeds q and eviction is FIFO over 200 iterations") {
    Rng rng(5);
    const QuadraticLoss quad(2);
    const auto train = quadratic_data(30, 2, rng);
    auto cfg = base_config(200, 4, 0.01);
    cfg.gamma = 0.5;
    cfg.r = 3;
    cfg.q = 3;
    cfg.sampling = SampleWithProbability{0.5};
    cfg.norm_kind = NormKind::Euclidean;
    std::vector<std::deque<ParamVector>> snaps;
    RunHooks hooks;
    hooks.on_queue = [&](std::size_t, const PerturbQueue& q) {
        CHECK(q.size() <= 3);
        snaps.push_back(q.entries());
    };
    const auto res = sgd_drm_run(quad, ParamVector::from_values({1.0, 1.0}), train, Dataset{}, cfg, hooks);
    REQUIRE(snaps.size() == 200);
    std::size_t events = 0;
    for (std::size_t t = 0; t < snaps.size(); ++t) {
        const bool event = res.trace.records[t].event;
        events += event;
        if (t == 0) {
            CHECK(event);
            CHECK(snaps[0].size() == 1);
            continue;
        }
        const auto& prev = snaps[t - 1];
        const auto& cur = snaps[t];
        if (!event) {
            CHECK(cur == prev);
        } else if (prev.size() < 3) {
            CHECK(cur.size() == prev.size() + 1);
            CHECK(std::equal(prev.begin(), prev.end(), cur.begin()));
        } else {
            CHECK(cur.size() == 3);
            CHECK(std::equal(prev.begin() + 1, prev.end(), cur.begin()));
        }
        if (event) CHECK(std::abs(euclidean_norm(cur.back()) - 0.5) <= 1e-12);
    }
    CHECK(events > 60);
    CHECK(events < 140);
}

TEST_CASE("PerturbQueue returns the evicted oldest entry") {
    PerturbQueue q(2);
    CHECK_FALSE(q.push(ParamVector::scalar(1.0)).has_value());
    CHECK_FALSE(q.push(ParamVector::scalar(2.0)).has_value());
    const auto out = q.push(ParamVector::scalar(3.0));
    REQUIRE(out.has_value());
    CHECK(out->front() == 1.0);
    CHECK(q.entries().front().front() == 2.0);
    CHECK_THROWS_AS(PerturbQueue(0), std::invalid_argument);
}

TEST_CASE("property: every iterate of every algorithm lies in W") {
    Rng rng(6);
    const QuadraticLoss quad(3);
    const auto train = quadratic_data(25, 3, rng);
    const auto center = ParamVector::from_values({0.2, 0.0, -0.1});
    const FeasibleSet sets[] = {Box{-0.3, 0.4}, EuclideanBall{center, 0.5}};
    for (const auto& set : sets) {
        auto cfg = base_config(120, 5, 0.5);
        cfg.gamma = 0.8;
        cfg.r = 4;
        cfg.q = 2;
        cfg.norm_kind = NormKind::Euclidean;
        cfg.feasible = set;
        std::size_t checked = 0;
        RunHooks hooks;
        hooks.on_iterate = [&](std::size_t, const ParamVector& w) {
            CHECK(contains(set, w));
            ++checked;
        };
        const auto w0 = project(ParamVector::from_values({0.1, 0.1, 0.1}), set);
        sgd_erm_run(quad, w0, train, Dataset{}, cfg, hooks);
        sgd_drm_run(quad, w0, train, Dataset{}, cfg, hooks);
        simple_sgd_drm_run(quad, w0, train, Dataset{}, cfg, hooks);
        CHECK(checked == 360);
    }
}

TEST_CASE("initial point outside W is rejected") {
    Rng rng(7);
    const QuadraticLoss quad(1);
    auto cfg = base_config(5, 1, 0.1);
    cfg.feasible = Box{0.0, 1.0};
    CHECK_THROWS(sgd_drm_run(quad, ParamVector::scalar(2.0), quadratic_data(3, 1, rng), Dataset{}, cfg));
    CHECK_THROWS(sgd_erm_run(quad, ParamVector::scalar(0.5), Dataset{}, Dataset{}, cfg));
}

TEST_CASE("make_batches partitions the data deterministically") {
    for (std::size_t n : {1, 7, 30, 101}) {
        for (std::size_t bs : {1, 4, 30, 200}) {
            const auto batches = make_batches(n, bs, 9, 3);
            CHECK(batches.size() == batches_per_epoch(n, bs));
            std::set<std::size_t> seen;
            std::size_t total = 0;
            for (const auto& b : batches) {
                CHECK(b.size() <= bs);
                CHECK(std::is_sorted(b.begin(), b.end()));
                seen.insert(b.begin(), b.end());
                total += b.size();
            }
            CHECK(total == n);
            CHECK(seen.size() == n);
            CHECK(*seen.rbegin() == n - 1);
            CHECK(make_batches(n, bs, 9, 3) == batches);
        }
    }
    CHECK(make_batches(50, 100, 1, 0).size() == 1);
    CHECK(make_batches(50, 5, 1, 0) != make_batches(50, 5, 1, 1));
    CHECK(batches_per_epoch(10, 3) == 4);
}

TEST_CASE("descent on the 1-D quadratic until the step can cross the kink") {
    // R_m^gamma(w) = c (|w - x0| + gamma)^2 + const for a 1-D quadratic, so the
    // worst-side gradient is a descent direction while the step cannot jump past x0.
    // Fresh draws every iteration keep the worst side current after a crossing.
    Rng rng(8);
    const QuadraticLoss quad(1);
    const auto train = quadratic_data(20, 1, rng);
    const double lr = 0.05, gamma = 0.3;
    auto cfg = base_config(400, train.size(), lr);
    cfg.gamma = gamma;
    cfg.r = 20;
    cfg.q = 2;
    cfg.sampling = SampleEveryK{1};
    cfg.norm_kind = NormKind::Euclidean;

    double saa = 0.0, sab = 0.0;
    for (const auto& z : train.samples) {
        saa += z.features[0] * z.features[0];
        sab += z.features[0] * z.target;
    }
    const double x0 = sab / saa;
    const double c = 0.5 * saa / static_cast<double>(train.size());
    auto exact = [&](double w) { return diametrical_risk_grid_1d(quad, w, gamma, train.samples, 3).value; };

    double w = x0 + 6.0;
    double prev = exact(w);
    bool reached_band = false;
    RunHooks hooks;
    hooks.on_iterate = [&](std::size_t, const ParamVector& next) {
        const double max_step = lr * 2.0 * c * (std::abs(w - x0) + gamma);
        const double cur = exact(next.front());
        if (std::abs(w - x0) > max_step) {
            CHECK(cur <= prev + 1e-9);
        } else {
            reached_band = true;
        }
        w = next.front();
        prev = cur;
    };
    sgd_drm_run(quad, ParamVector::scalar(w), train, Dataset{}, cfg, hooks);
    CHECK(reached_band);
}

TEST_CASE("config validation") {
    auto ok = base_config(10, 2, 0.1);
    CHECK_NOTHROW(ok.validate());
    auto bad = ok;
    bad.gamma = -1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = ok;
    bad.r = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = ok;
    bad.q = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = ok;
    bad.batch_size = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = ok;
    bad.sampling = SampleEveryK{0};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = ok;
    bad.sampling = SampleWithProbability{1.5};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = ok;
    bad.lr_schedule = {};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = ok;
    bad.lr_schedule = {{5, 0.1}};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = ok;
    bad.lr_schedule = {{5, 0.1}, {5, 0.01}, {10, 0.001}};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = ok;
    bad.lr_schedule = {{10, 0.0}};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = ok;
    bad.feasible = Box{1.0, -1.0};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("piecewise-constant learning rate") {
    auto cfg = base_config(10, 1, 0.1);
    cfg.lr_schedule = {{4, 0.1}, {10, 0.01}};
    CHECK(cfg.learning_rate(0) == 0.1);
    CHECK(cfg.learning_rate(3) == 0.1);
    CHECK(cfg.learning_rate(4) == 0.01);
    CHECK(cfg.learning_rate(9) == 0.01);
}

TEST_CASE("sampling schedules") {
    auto cfg = base_config(10, 1, 0.1);
    Rng coin(1);
    cfg.sampling = SampleEveryK{5};
    std::vector<std::size_t> due;
    for (std::size_t t = 0; t < 12; ++t)
        if (cfg.sampling_due(t, coin)) due.push_back(t);
    CHECK(due == std::vector<std::size_t>{0, 5, 10});

    cfg.sampling = SampleWithProbability{0.0};
    CHECK(cfg.sampling_due(0, coin));
    for (std::size_t t = 1; t < 50; ++t) CHECK_FALSE(cfg.sampling_due(t, coin));

    cfg.sampling = SampleWithProbability{0.25};
    Rng a(3), b(3);
    std::size_t hits = 0;
    for (std::size_t t = 1; t < 4001; ++t) {
        const bool x = cfg.sampling_due(t, a);
        CHECK(x == cfg.sampling_due(t, b));
        hits += x;
    }
    // binomial(4000, 0.25): sd about 27
    CHECK(std::abs(static_cast<double>(hits) - 1000.0) < 150.0);
}

TEST_CASE("probabilistic sampling runs are reproducible") {
    Rng rng(9);
    const QuadraticLoss quad(2);
    const auto train = quadratic_data(20, 2, rng);
    auto cfg = base_config(100, 3, 0.02);
    cfg.gamma = 0.2;
    cfg.q = 4;
    cfg.sampling = SampleWithProbability{0.4};
    const auto w0 = ParamVector::from_values({0.5, 0.5});
    const auto a = sgd_drm_run(quad, w0, train, Dataset{}, cfg);
    const auto b = sgd_drm_run(quad, w0, train, Dataset{}, cfg);
    CHECK(a.trace.to_csv() == b.trace.to_csv());
    cfg.seed = 43;
    CHECK(sgd_drm_run(quad, w0, train, Dataset{}, cfg).trace.to_csv() != a.trace.to_csv());
}

TEST_CASE("trace carries epoch metrics on the last iteration of each epoch") {
    Rng rng(10);
    const MlpSpec spec{3, {4}, 2, 0};
    const MlpLoss model(spec);
    const auto train = blob_data(spec, 20, rng);
    auto cfg = base_config(12, 6, 0.05);  // 4 batches per epoch, 3 epochs
    cfg.gamma = 0.1;
    cfg.epoch_eval_draws = 2;
    const auto res = sgd_drm_run(model, init_params(spec), train, train, cfg);
    REQUIRE(res.trace.records.size() == 12);
    const auto epochs = res.trace.epoch_records();
    REQUIRE(epochs.size() == 3);
    for (std::size_t e = 0; e < 3; ++e) {
        CHECK(epochs[e].iter == 4 * e + 3);
        CHECK(epochs[e].epoch == e);
        CHECK(epochs[e].train_risk.has_value());
        CHECK(epochs[e].test_acc.has_value());
        CHECK(epochs[e].diam_risk_est.has_value());
    }
    CHECK_FALSE(res.trace.records[0].train_risk.has_value());
    const auto csv = res.trace.to_csv();
    CHECK(csv.rfind(RunTrace::csv_header(), 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 13);
}

TEST_CASE("classification accuracy") {
    const MlpSpec spec{2, {}, 2, 0};
    const MlpLoss model(spec);
    auto w = init_params(spec).zeros_like();
    w.layer(1).values = {1.0, 0.0};
    Dataset d;
    d.samples = drm::testing::labels({0, 0, 1, 0});
    for (auto& z : d.samples) z.features = {0.0, 0.0};
    CHECK(classification_accuracy(model, w, d.view()) == 0.75);
    CHECK_THROWS(classification_accuracy(QuadraticLoss(1), ParamVector::scalar(0.0), d.view()));
}
