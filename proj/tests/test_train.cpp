#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sfnet/train.hpp"

using namespace sfnet;

namespace {

ArchConfig tiny_config(int classes = 4) {
    ArchConfig c;
    c.T = 2;
    c.tau = 4;
    c.omega = 2;
    c.phi = Rational{1, 2};
    c.blocks = {1, 1, 1, 1};
    c.base_width = 8;
    c.num_classes = classes;
    c.dropout = 0.0;
    return c;
}

AugmentParams toy_augment() { return AugmentParams{16, 16, 16, false}; }

}  // namespace

TEST_CASE("lr_at: cosine values and endpoints") {
    LrSchedule s{1.6, 100, 0, 0.0};
    CHECK(lr_at(s, 0) == doctest::Approx(1.6).epsilon(1e-12));
    CHECK(lr_at(s, 100) == doctest::Approx(0.0).scale(1).epsilon(1e-12));
    CHECK(lr_at(s, 50) == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(lr_at(s, 25) == doctest::Approx(1.6 * 0.5 * (std::cos(0.25 * M_PI) + 1.0)).epsilon(1e-12));
    CHECK_THROWS_AS(lr_at(s, -1), InputError);
    CHECK_THROWS_AS(lr_at(s, 101), InputError);
}

TEST_CASE("lr_at: warm-up is linear and continuous at the junction") {
    LrSchedule s{1.6, 1000, 100, 0.02};
    CHECK(lr_at(s, 0) == doctest::Approx(0.02).epsilon(1e-12));
    // linear: midpoint between the start lr and the cosine value at the junction
    const double target = 1.6 * 0.5 * (std::cos(100.0 / 1000.0 * M_PI) + 1.0);
    CHECK(lr_at(s, 50) == doctest::Approx(0.02 + (target - 0.02) * 0.5).epsilon(1e-12));
    CHECK(std::fabs(lr_at(s, 100) - target) < 1e-12);  // continuity
    // non-increasing after warm-up
    double prev = lr_at(s, 100);
    for (int n = 101; n <= 1000; ++n) {
        const double v = lr_at(s, n);
        CHECK(v <= prev + 1e-15);
        prev = v;
    }
}

TEST_CASE("sgd_step: hand-iterated updates") {
    ParamStore p;
    p.put("w.weight", Tensor(Shape{1, 1, 1, 1, 1}, 1.0));
    ParamStore g;
    g.put("w.weight", Tensor(Shape{1, 1, 1, 1, 1}, 1.0));
    OptimState st;
    st.weight_decay = 0.0;

    sgd_step(p, g, st, 0.1);
    CHECK(p.at("w.weight")[0] == doctest::Approx(0.9).epsilon(1e-12));   // v=1, p -= 0.1
    sgd_step(p, g, st, 0.1);
    CHECK(p.at("w.weight")[0] == doctest::Approx(0.71).epsilon(1e-12));  // v=1.9, p -= 0.19
    CHECK(st.iteration == 2);
}

TEST_CASE("sgd_step: zero gradient and zero decay leave parameters unchanged") {
    ParamStore p;
    p.put("w.weight", Tensor(Shape{1, 4, 1, 1, 1}, 2.5));
    ParamStore g;
    g.put("w.weight", Tensor(Shape{1, 4, 1, 1, 1}, 0.0));
    OptimState st;
    st.weight_decay = 0.0;
    for (int i = 0; i < 5; ++i) sgd_step(p, g, st, 0.5);
    for (int64_t i = 0; i < 4; ++i) CHECK(p.at("w.weight")[i] == 2.5);
}

TEST_CASE("sgd_step: decay-only dynamics shrink weights monotonically toward zero") {
    ParamStore p;
    p.put("w.weight", Tensor(Shape{1, 1, 1, 1, 1}, 1.0));
    ParamStore g;
    g.put("w.weight", Tensor(Shape{1, 1, 1, 1, 1}, 0.0));
    OptimState st;
    st.weight_decay = 1e-4;
    double prev = 1.0;
    for (int i = 0; i < 200; ++i) {
        sgd_step(p, g, st, 0.5);
        const double v = p.at("w.weight")[0];
        CHECK(v < prev);
        CHECK(v > 0.0);
        prev = v;
    }
}

TEST_CASE("sgd_step: bn affine and biases are exempt from decay by default") {
    ParamStore p;
    p.put("bn.scale", Tensor(Shape{1, 1, 1, 1, 1}, 1.0));
    p.put("fc.bias", Tensor(Shape{1, 1, 1, 1, 1}, 0.5));
    p.put("conv.weight", Tensor(Shape{1, 1, 1, 1, 1}, 1.0));
    ParamStore g;
    g.put("bn.scale", Tensor(Shape{1, 1, 1, 1, 1}, 0.0));
    g.put("fc.bias", Tensor(Shape{1, 1, 1, 1, 1}, 0.0));
    g.put("conv.weight", Tensor(Shape{1, 1, 1, 1, 1}, 0.0));
    OptimState st;
    st.weight_decay = 0.01;
    sgd_step(p, g, st, 1.0);
    CHECK(p.at("bn.scale")[0] == 1.0);
    CHECK(p.at("fc.bias")[0] == 0.5);
    CHECK(p.at("conv.weight")[0] < 1.0);

    OptimState st2;
    st2.weight_decay = 0.01;
    st2.decay_affine_and_bias = true;
    sgd_step(p, g, st2, 1.0);
    CHECK(p.at("bn.scale")[0] < 1.0);
}

TEST_CASE("sgd_step: non-finite gradients raise a numeric error") {
    ParamStore p;
    p.put("w.weight", Tensor(Shape{1, 1, 1, 1, 1}, 1.0));
    ParamStore g;
    g.put("w.weight", Tensor(Shape{1, 1, 1, 1, 1}, std::nan("")));
    OptimState st;
    CHECK_THROWS_AS(sgd_step(p, g, st, 0.1), NumericError);
}

TEST_CASE("sgd with momentum 0 reduces a convex quadratic") {
    // f(w) = 0.5*(w0^2 + 4*w1^2); explicit gradient steps must descend
    ParamStore p;
    Tensor w(Shape{1, 2, 1, 1, 1});
    w[0] = 3.0;
    w[1] = -2.0;
    p.put("q.weight", w);
    OptimState st;
    st.momentum = 0.0;
    st.weight_decay = 0.0;
    auto loss = [&]() {
        const Tensor& q = p.at("q.weight");
        return 0.5 * (q[0] * q[0] + 4.0 * q[1] * q[1]);
    };
    double prev = loss();
    for (int i = 0; i < 50; ++i) {
        const Tensor& q = p.at("q.weight");
        ParamStore g;
        Tensor gt(Shape{1, 2, 1, 1, 1});
        gt[0] = q[0];
        gt[1] = 4.0 * q[1];
        g.put("q.weight", gt);
        sgd_step(p, g, st, 0.1);
        const double cur = loss();
        CHECK(cur < prev);
        prev = cur;
    }
}

TEST_CASE("train_loop: lr 0 keeps the loss constant on a fixed batch") {
    // corpus size == batch size, no augmentation jitter, no dropout: each
    // iteration sees the same batch, so with lr = 0 the loss cannot move
    ArchConfig c = tiny_config(2);
    CorpusGeometry geom;
    geom.frames = 8;  // exactly T*tau: the temporal window is forced to start 0
    auto corpus = generate_synthetic_corpus(91, 2, 4, geom);  // 8 clips = one batch
    StageGraph g = build_graph(c);
    Network net(g, init_params(g, 91), RunMode::Train);
    TrainOptions opt;
    opt.batch = 8;
    opt.sched = LrSchedule{0.0, 12, 0, 0.0};
    opt.seed = 91;
    opt.augment = toy_augment();
    opt.eval_every = 0;
    TrainResult r = train_loop(net, corpus, {}, opt);
    REQUIRE(r.log.size() == 12);
    for (const auto& e : r.log) CHECK(std::fabs(e.loss - r.log[0].loss) < 1e-10);
}

TEST_CASE("train_loop: identical seeds give byte-identical logs") {
    ArchConfig c = tiny_config(2);
    auto corpus = generate_synthetic_corpus(93, 2, 8);
    TrainOptions opt;
    opt.batch = 4;
    opt.sched = LrSchedule{0.05, 10, 2, 0.0};
    opt.seed = 93;
    opt.augment = toy_augment();
    opt.eval_every = 5;

    auto run = [&]() {
        StageGraph g = build_graph(c);
        Network net(g, init_params(g, 93), RunMode::Train);
        auto val = generate_synthetic_corpus(94, 2, 2);
        return train_log_text(train_loop(net, corpus, val, opt).log);
    };
    CHECK(run() == run());
}

TEST_CASE("train_loop: empty corpus and divergence are reported") {
    ArchConfig c = tiny_config(2);
    StageGraph g = build_graph(c);
    Network net(g, init_params(g, 1), RunMode::Train);
    TrainOptions opt;
    CHECK_THROWS_AS(train_loop(net, {}, {}, opt), DataError);

    // absurd learning rate diverges; the error names the iteration
    auto corpus = generate_synthetic_corpus(95, 2, 4);
    Network net2(g, init_params(g, 1), RunMode::Train);
    TrainOptions hot;
    hot.batch = 4;
    hot.sched = LrSchedule{1e14, 50, 0, 0.0};
    hot.seed = 95;
    hot.augment = toy_augment();
    hot.eval_every = 0;
    CHECK_THROWS_WITH_AS(train_loop(net2, corpus, {}, hot), doctest::Contains("iteration"),
                         NumericError);
}

TEST_CASE("train log format carries the stable fields") {
    std::vector<TrainLogEntry> log;
    TrainLogEntry e;
    e.iter = 3;
    e.lr = 0.125;
    e.loss = 1.5;
    e.train_top1 = 50.0;
    log.push_back(e);
    e.iter = 4;
    e.val_top1 = 75.0;
    log.push_back(e);
    const std::string text = train_log_text(log);
    CHECK(text.find("iter=3 lr=0.125 loss=1.5 train_top1=50") != std::string::npos);
    CHECK(text.find("val_top1=75") != std::string::npos);
    // first line has no val field
    CHECK(text.substr(0, text.find('\n')).find("val_top1") == std::string::npos);
}

TEST_CASE("step-on-plateau policy drops the learning rate after stale evals") {
    // lr 0: validation accuracy cannot improve, so every eval is stale and the
    // rate must drop by the step factor after each `patience` window
    ArchConfig c = tiny_config(2);
    CorpusGeometry geom;
    geom.frames = 8;
    auto corpus = generate_synthetic_corpus(97, 2, 4, geom);
    auto val = generate_synthetic_corpus(98, 2, 2, geom);
    StageGraph g = build_graph(c);
    Network net(g, init_params(g, 97), RunMode::Train);
    TrainOptions opt;
    opt.batch = 4;
    opt.sched = LrSchedule{0.0, 12, 0, 0.0};
    opt.lr_policy = LrPolicy::StepOnPlateau;
    opt.step_factor = 0.1;
    opt.patience = 2;
    opt.seed = 97;
    opt.augment = toy_augment();
    opt.eval_every = 2;
    TrainResult r = train_loop(net, corpus, val, opt);
    // evals at iters 2,4,6,8,10,12; the first sets the best, the next two are
    // stale -> drop before iter 7; two more stale -> second drop before iter 11
    CHECK(r.log[0].lr == 0.0);

    // with a nonzero base rate the same schedule shows the multiplicative drops
    Network net2(build_graph(c), init_params(g, 97), RunMode::Train);
    opt.sched = LrSchedule{0.08, 12, 0, 0.0};
    TrainResult r2 = train_loop(net2, corpus, val, opt);
    CHECK(r2.log[0].lr == doctest::Approx(0.08));
    bool dropped = false;
    for (const auto& e : r2.log)
        if (std::fabs(e.lr - 0.008) < 1e-12) dropped = true;
    CHECK(dropped);
}
