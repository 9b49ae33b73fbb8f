#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "adlab/losses.hpp"
#include "adlab/nn.hpp"
#include "test_util.hpp"

using namespace adlab;

namespace {

// independent naive forward pass, kept free of Mlp internals
std::vector<double> naive_forward(const MlpSpec& spec, const ParamSet& params,
                                  const std::string& prefix,
                                  std::vector<double> x) {
    for (size_t l = 0; l < spec.layers.size(); ++l) {
        const Matrix& w = params.at(prefix + ".w" + std::to_string(l)).value;
        const Matrix& b = params.at(prefix + ".b" + std::to_string(l)).value;
        std::vector<double> y(spec.layers[l].width);
        for (size_t i = 0; i < y.size(); ++i) {
            double acc = b(i, 0);
            for (size_t j = 0; j < x.size(); ++j) acc += w(i, j) * x[j];
            switch (spec.layers[l].act) {
                case Activation::kIdentity: y[i] = acc; break;
                case Activation::kRelu: y[i] = acc > 0.0 ? acc : 0.0; break;
                case Activation::kSigmoid: y[i] = 1.0 / (1.0 + std::exp(-acc)); break;
            }
        }
        x = std::move(y);
    }
    return x;
}

MlpSpec random_spec(Rng& rng, size_t input_dim) {
    MlpSpec spec;
    spec.input_dim = input_dim;
    size_t n_layers = 1 + rng.uniform_index(3);
    for (size_t l = 0; l < n_layers; ++l) {
        size_t width = 1 + rng.uniform_index(8);
        Activation act = static_cast<Activation>(rng.uniform_index(3));
        spec.layers.push_back({width, act});
    }
    return spec;
}

}  // namespace

TEST_CASE("identity layer with identity weights reproduces the input") {
    MlpSpec spec{2, {{2, Activation::kIdentity}}};
    ParamSet ps;
    Mlp mlp("net", spec);
    Rng rng(1);
    mlp.init(ps, rng);
    ps.at("net.w0").value(0, 0) = 1.0;
    ps.at("net.w0").value(0, 1) = 0.0;
    ps.at("net.w0").value(1, 0) = 0.0;
    ps.at("net.w0").value(1, 1) = 1.0;
    ps.at("net.b0").value.fill(0.0);
    MlpTape tape;
    std::vector<double> in = {1.0, 2.0};
    mlp.forward(in, tape);
    CHECK(tape.post.back()[0] == doctest::Approx(1.0));
    CHECK(tape.post.back()[1] == doctest::Approx(2.0));
}

TEST_CASE("zero-weight sigmoid layer outputs 0.5 everywhere") {
    MlpSpec spec{3, {{2, Activation::kSigmoid}}};
    ParamSet ps;
    Mlp mlp("net", spec);
    Rng rng(2);
    mlp.init(ps, rng);
    ps.at("net.w0").value.fill(0.0);
    ps.at("net.b0").value.fill(0.0);
    MlpTape tape;
    std::vector<double> in = {0.3, -4.0, 17.0};
    mlp.forward(in, tape);
    for (double v : tape.post.back()) CHECK(v == doctest::Approx(0.5));
}

TEST_CASE("random two-layer relu net matches an independent forward pass") {
    MlpSpec spec{4, {{6, Activation::kRelu}, {3, Activation::kRelu}}};
    ParamSet ps;
    Mlp mlp("net", spec);
    Rng rng(42);
    mlp.init(ps, rng);
    Rng in_rng(43);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> in(4);
        for (auto& v : in) v = in_rng.normal();
        MlpTape tape;
        mlp.forward(in, tape);
        auto expected = naive_forward(spec, ps, "net", in);
        for (size_t i = 0; i < expected.size(); ++i)
            CHECK(tape.post.back()[i] == doctest::Approx(expected[i]).epsilon(1e-12));
    }
}

TEST_CASE("forward is deterministic and infer matches the taped path") {
    MlpSpec spec{5, {{7, Activation::kRelu}, {1, Activation::kSigmoid}}};
    ParamSet ps;
    Mlp mlp("net", spec);
    Rng rng(7);
    mlp.init(ps, rng);
    std::vector<double> in = {0.1, -0.2, 0.3, 1.5, -0.7};
    MlpTape t1, t2;
    mlp.forward(in, t1);
    mlp.forward(in, t2);
    CHECK(t1.post.back()[0] == t2.post.back()[0]);  // bit-identical
    std::vector<double> scratch;
    double out[1];
    mlp.infer(in, scratch, out);
    CHECK(out[0] == t1.post.back()[0]);
}

TEST_CASE("input length mismatch raises a configuration error") {
    MlpSpec spec{3, {{2, Activation::kIdentity}}};
    ParamSet ps;
    Mlp mlp("net", spec);
    Rng rng(1);
    mlp.init(ps, rng);
    MlpTape tape;
    std::vector<double> in = {1.0, 2.0};
    CHECK_THROWS_AS(mlp.forward(in, tape), ConfigError);
}

TEST_CASE("backward without forward raises a usage error") {
    MlpSpec spec{2, {{1, Activation::kIdentity}}};
    ParamSet ps;
    Mlp mlp("net", spec);
    Rng rng(1);
    mlp.init(ps, rng);
    MlpTape tape;
    const double up[1] = {1.0};
    CHECK_THROWS_AS(mlp.backward(tape, up, {}), UsageError);
}

TEST_CASE("linear layer gradient is g x^T") {
    MlpSpec spec{3, {{2, Activation::kIdentity}}};
    ParamSet ps;
    Mlp mlp("net", spec);
    Rng rng(5);
    mlp.init(ps, rng);
    std::vector<double> in = {1.0, -2.0, 0.5};
    MlpTape tape;
    mlp.forward(in, tape);
    ps.zero_grads();
    std::vector<double> up = {2.0, -1.0};
    mlp.backward(tape, up, {});
    const Matrix& dw = ps.at("net.w0").grad;
    for (size_t i = 0; i < 2; ++i)
        for (size_t j = 0; j < 3; ++j)
            CHECK(dw(i, j) == doctest::Approx(up[i] * in[j]));
    const Matrix& db = ps.at("net.b0").grad;
    CHECK(db(0, 0) == doctest::Approx(2.0));
    CHECK(db(1, 0) == doctest::Approx(-1.0));
}

TEST_CASE("zero upstream gradient leaves all parameter gradients zero") {
    MlpSpec spec{3, {{4, Activation::kRelu}, {2, Activation::kSigmoid}}};
    ParamSet ps;
    Mlp mlp("net", spec);
    Rng rng(9);
    mlp.init(ps, rng);
    MlpTape tape;
    std::vector<double> in = {0.4, 0.2, -0.3};
    mlp.forward(in, tape);
    ps.zero_grads();
    std::vector<double> up = {0.0, 0.0};
    mlp.backward(tape, up, {});
    for (const auto& [name, p] : ps)
        for (size_t i = 0; i < p.grad.size(); ++i)
            CHECK(p.grad.data()[i] == 0.0);
}

TEST_CASE("analytic gradients match central finite differences on random nets") {
    size_t configs_checked = 0;
    uint64_t seed = 1000;
    while (configs_checked < 30) {
        Rng rng(seed++);
        MlpSpec spec = random_spec(rng, 1 + rng.uniform_index(5));
        ParamSet ps;
        Mlp mlp("net", spec);
        mlp.init(ps, rng);
        std::vector<double> in(spec.input_dim);
        for (auto& v : in) v = rng.normal();
        std::vector<double> coeff(spec.output_dim());
        for (auto& v : coeff) v = rng.normal();

        MlpTape probe;
        mlp.forward(in, probe);
        if (adlab::test::tape_near_relu_kink(spec, probe)) continue;

        auto loss_fn = [&]() {
            MlpTape t;
            mlp.forward(in, t);
            double s = 0.0;
            for (size_t i = 0; i < coeff.size(); ++i)
                s += coeff[i] * t.post.back()[i];
            return s;
        };
        auto grad_fn = [&]() {
            MlpTape t;
            mlp.forward(in, t);
            mlp.backward(t, coeff, {});
        };
        auto report = adlab::test::finite_difference_check(ps, loss_fn, grad_fn);
        INFO("worst param: ", report.worst_param);
        CHECK(report.worst_rel_err < 1e-4);
        ++configs_checked;
    }
}

TEST_CASE("input gradient matches finite differences") {
    MlpSpec spec{3, {{5, Activation::kSigmoid}, {1, Activation::kIdentity}}};
    ParamSet ps;
    Mlp mlp("net", spec);
    Rng rng(12);
    mlp.init(ps, rng);
    std::vector<double> in = {0.2, -0.5, 0.9};
    MlpTape tape;
    mlp.forward(in, tape);
    ps.zero_grads();
    std::vector<double> dinput(3, 0.0);
    const double up[1] = {1.0};
    mlp.backward(tape, up, dinput);
    const double h = 1e-5;
    for (size_t j = 0; j < in.size(); ++j) {
        auto probe = in;
        probe[j] += h;
        MlpTape t;
        mlp.forward(probe, t);
        double up_val = t.post.back()[0];
        probe[j] -= 2 * h;
        mlp.forward(probe, t);
        double dn_val = t.post.back()[0];
        double numeric = (up_val - dn_val) / (2 * h);
        CHECK(dinput[j] == doctest::Approx(numeric).epsilon(1e-4));
    }
}

TEST_CASE("binary cross entropy anchors") {
    CHECK(binary_ce_loss(0.5, 1.0).loss == doctest::Approx(std::log(2.0)));
    CHECK(binary_ce_loss(clamp_prob(1.0), 1.0).loss ==
          doctest::Approx(0.0).epsilon(1e-6));
    CHECK(binary_ce_loss(clamp_prob(0.0), 0.0).loss ==
          doctest::Approx(0.0).epsilon(1e-6));
    // scalar oracle on random pairs
    Rng rng(77);
    for (int i = 0; i < 200; ++i) {
        double p = rng.uniform(0.001, 0.999);
        double y = rng.bernoulli(0.5) ? 1.0 : 0.0;
        double expected = -(y * std::log(p) + (1 - y) * std::log(1 - p));
        CHECK(binary_ce_loss(p, y).loss == doctest::Approx(expected));
        CHECK(binary_ce_loss(p, y).loss >= 0.0);
    }
}

TEST_CASE("soft-label cross entropy hits its entropy floor at the match point") {
    double h03 = -(0.3 * std::log(0.3) + 0.7 * std::log(0.7));
    auto lg = soft_label_ce_loss(0.3, 0.3);
    CHECK(lg.loss == doctest::Approx(h03));
    CHECK(std::abs(lg.grad) < 1e-9);
    // degenerate soft labels reduce to the hard-label loss
    for (double p : {0.2, 0.55, 0.91}) {
        CHECK(soft_label_ce_loss(p, 1.0).loss ==
              doctest::Approx(binary_ce_loss(p, 1.0).loss));
        CHECK(soft_label_ce_loss(p, 0.0).loss ==
              doctest::Approx(binary_ce_loss(p, 0.0).loss));
    }
}

TEST_CASE("soft-label cross entropy gradient matches finite differences") {
    Rng rng(13);
    for (int i = 0; i < 100; ++i) {
        double p = rng.uniform(0.01, 0.99);
        double t = rng.uniform(0.0, 1.0);
        const double h = 1e-7;
        double numeric = (soft_label_ce_loss(p + h, t).loss -
                          soft_label_ce_loss(p - h, t).loss) /
                         (2 * h);
        CHECK(soft_label_ce_loss(p, t).grad ==
              doctest::Approx(numeric).epsilon(1e-6));
    }
}

TEST_CASE("mse loss: direct values and batch-mean oracle") {
    CHECK(mse_loss(0.7, 0.7).loss == 0.0);
    CHECK(mse_loss(0.5, 0.2).loss == doctest::Approx(0.09));
    CHECK(mse_loss(0.5, 0.2).grad == doctest::Approx(-2.0 * (0.2 - 0.5)));
    CHECK_THROWS_AS(mse_loss(std::nan(""), 0.0), DataError);

    Rng rng(21);
    double sum = 0.0, oracle = 0.0;
    const int n = 512;
    for (int i = 0; i < n; ++i) {
        double pred = rng.normal(), label = rng.normal();
        sum += mse_loss(pred, label).loss;
        oracle += (label - pred) * (label - pred);
    }
    CHECK(sum / n == doctest::Approx(oracle / n));
}

TEST_CASE("sgd step and zero-gradient behavior") {
    ParamSet ps;
    Param& p = ps.add("w", 1, 1);
    p.value(0, 0) = 1.0;
    p.grad(0, 0) = 0.5;
    optimizer_step(ps, {OptimizerAlgo::kSgd, 0.1});
    CHECK(p.value(0, 0) == doctest::Approx(0.95));
    ps.zero_grads();
    optimizer_step(ps, {OptimizerAlgo::kSgd, 0.1});
    CHECK(p.value(0, 0) == doctest::Approx(0.95));
}

TEST_CASE("adagrad follows a hand-computed two-step trace") {
    ParamSet ps;
    Param& p = ps.add("w", 1, 1);
    const double eps = 1e-8;
    p.value(0, 0) = 1.0;
    p.grad(0, 0) = 0.5;
    optimizer_step(ps, {OptimizerAlgo::kAdagrad, 0.1, eps});
    // acc = 0.25, step = 0.1 * 0.5 / (0.5 + eps)
    double expect1 = 1.0 - 0.1 * 0.5 / (std::sqrt(0.25) + eps);
    CHECK(p.value(0, 0) == doctest::Approx(expect1).epsilon(1e-12));
    CHECK(p.accum(0, 0) == doctest::Approx(0.25));
    p.grad(0, 0) = -0.2;
    optimizer_step(ps, {OptimizerAlgo::kAdagrad, 0.1, eps});
    double acc2 = 0.25 + 0.04;
    double expect2 = expect1 + 0.1 * 0.2 / (std::sqrt(acc2) + eps);
    CHECK(p.value(0, 0) == doctest::Approx(expect2).epsilon(1e-12));
    CHECK(p.accum(0, 0) == doctest::Approx(acc2));
}

TEST_CASE("adagrad accumulator never decreases") {
    ParamSet ps;
    Param& p = ps.add("w", 2, 2);
    Rng rng(3);
    double prev = 0.0;
    for (int step = 0; step < 50; ++step) {
        for (size_t i = 0; i < 4; ++i) p.grad.data()[i] = rng.normal();
        optimizer_step(ps, {OptimizerAlgo::kAdagrad, 0.05});
        double acc_sum = 0.0;
        for (size_t i = 0; i < 4; ++i) acc_sum += p.accum.data()[i];
        CHECK(acc_sum >= prev);
        prev = acc_sum;
    }
}

TEST_CASE("NaN gradient aborts naming the parameter") {
    ParamSet ps;
    ps.add("fine", 1, 1);
    Param& bad = ps.add("student.w0", 1, 1);
    bad.grad(0, 0) = std::nan("");
    try {
        optimizer_step(ps, {OptimizerAlgo::kSgd, 0.1});
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("student.w0") != std::string::npos);
    }
}

TEST_CASE("initialization stays inside the fan-in bound and is reproducible") {
    MlpSpec spec{16, {{8, Activation::kRelu}}};
    ParamSet a, b;
    Mlp ma("net", spec), mb("net", spec);
    Rng ra(99), rb(99);
    ma.init(a, ra);
    mb.init(b, rb);
    double bound = 1.0 / std::sqrt(16.0);
    const Matrix& w = a.at("net.w0").value;
    for (size_t i = 0; i < w.size(); ++i) {
        CHECK(std::abs(w.data()[i]) <= bound);
        CHECK(w.data()[i] == b.at("net.w0").value.data()[i]);
    }
}

TEST_CASE("embedding lookup, gradient scatter, and id range errors") {
    ParamSet ps;
    EmbeddingSet emb("e", {4, 3}, 2);
    Rng rng(5);
    emb.init(ps, rng);
    std::vector<int32_t> ids = {3, 1};
    std::vector<double> out(4);
    emb.forward(ids, out);
    CHECK(out[0] == ps.at("e.emb0").value(3, 0));
    CHECK(out[2] == ps.at("e.emb1").value(1, 0));

    ps.zero_grads();
    std::vector<double> grad = {1.0, 2.0, 3.0, 4.0};
    emb.backward(ids, grad);
    CHECK(ps.at("e.emb0").grad(3, 1) == doctest::Approx(2.0));
    CHECK(ps.at("e.emb1").grad(1, 0) == doctest::Approx(3.0));
    CHECK(ps.at("e.emb0").grad(0, 0) == 0.0);

    std::vector<int32_t> bad = {4, 1};
    CHECK_THROWS_AS(emb.forward(bad, out), DataError);
}
