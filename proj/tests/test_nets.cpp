#include <doctest.h>

#include <cmath>

#include "surro/nets.hpp"
#include "surro/rng.hpp"

using namespace surro;

TEST_CASE("parameter counts for the shipped architectures") {
    FeedForwardSpec omega_wide{{3, 32, 64, 64, 64, 32, 3}, FeedForwardSpec::Output::Sigmoid};
    FeedForwardSpec omega_narrow{{3, 32, 64, 32, 3}, FeedForwardSpec::Output::Sigmoid};
    FeedForwardSpec head{{32, 32, 64, 32, 16, 3}, FeedForwardSpec::Output::Identity};
    GruSpec recur{3, 32};

    CHECK(parameter_count(omega_wide) == 12739);
    CHECK(parameter_count(omega_narrow) == 4419);
    CHECK(parameter_count(head) == 5827);
    CHECK(parameter_count(recur) == 3552);
    CHECK(parameter_count(recur) + parameter_count(head) + parameter_count(omega_narrow) == 13798);
}

TEST_CASE("feed-forward init shapes, bounds, and store bookkeeping") {
    FeedForwardSpec spec{{3, 5, 2}, FeedForwardSpec::Output::Sigmoid};
    RngStream rng(7);
    ParameterStore store;
    init_feed_forward(store, "net", spec, rng);

    CHECK(store.tensor_count() == 4);
    CHECK(store.scalar_count() == parameter_count(spec));
    const ad::Tensor& w0 = store.get("net.w0");
    const ad::Tensor& b0 = store.get("net.b0");
    CHECK(w0.rows == 5);
    CHECK(w0.cols == 3);
    CHECK(b0.rows == 1);
    CHECK(b0.cols == 5);
    double bound0 = 1.0 / std::sqrt(3.0);
    for (double v : w0.v) {
        CHECK(v >= -bound0);
        CHECK(v <= bound0);
    }
    for (double v : b0.v) CHECK(v == 0.0);
    CHECK(store.get("net.w1").rows == 2);
    CHECK(store.get("net.w1").cols == 5);
}

TEST_CASE("gru init produces the twelve expected tensors") {
    GruSpec spec{3, 4};
    RngStream rng(9);
    ParameterStore store;
    init_gru(store, "g", spec, rng);
    CHECK(store.tensor_count() == 12);
    CHECK(store.scalar_count() == parameter_count(spec));
    for (const char* gate : {"r", "u", "n"}) {
        std::string g(gate);
        CHECK(store.get("g.w_" + g).rows == 4);
        CHECK(store.get("g.w_" + g).cols == 3);
        CHECK(store.get("g.u_" + g).rows == 4);
        CHECK(store.get("g.u_" + g).cols == 4);
        CHECK(store.get("g.b_" + g).cols == 4);
        CHECK(store.get("g.c_" + g).cols == 4);
    }
}

TEST_CASE("flatten and unflatten round-trip the store") {
    FeedForwardSpec spec{{2, 3, 2}, FeedForwardSpec::Output::Identity};
    RngStream rng(3);
    ParameterStore store;
    init_feed_forward(store, "f", spec, rng);
    std::vector<double> flat = store.flatten();
    CHECK(flat.size() == store.scalar_count());

    ParameterStore copy = store;
    std::vector<double> shifted = flat;
    for (double& v : shifted) v += 1.0;
    copy.unflatten(shifted);
    std::vector<double> back = copy.flatten();
    for (std::size_t i = 0; i < back.size(); ++i) CHECK(back[i] == flat[i] + 1.0);
    std::vector<double> wrong(flat.size() + 1, 0.0);
    CHECK_THROWS(copy.unflatten(wrong));
}

TEST_CASE("feed-forward evaluation matches a hand-built identity network") {
    // One layer, weights = identity, bias = (1, -1): y = relu on hidden does
    // not apply because a single layer only uses the output activation.
    FeedForwardSpec spec{{2, 2}, FeedForwardSpec::Output::Identity};
    ParameterStore store;
    ad::Tensor w(2, 2);
    w.v = {1.0, 0.0, 0.0, 1.0};
    ad::Tensor b(1, 2);
    b.v = {1.0, -1.0};
    store.add("f.w0", w);
    store.add("f.b0", b);

    std::vector<double> in{0.25, 0.5};
    std::vector<double> out = ff_eval(spec, store, "f", in);
    CHECK(out[0] == 1.25);
    CHECK(out[1] == -0.5);

    // Same network through the tape path.
    ad::Tape tape;
    StoreLeaves leaves = register_store(tape, store);
    ad::Node x = tape.constant(ad::Tensor::row({0.25, 0.5}));
    ad::Node y = ff_forward(tape, spec, leaves, "f", x);
    CHECK(tape.val(y).v[0] == 1.25);
    CHECK(tape.val(y).v[1] == -0.5);
}

TEST_CASE("relu applies between hidden layers and sigmoid at the output when asked") {
    FeedForwardSpec spec{{1, 1, 1}, FeedForwardSpec::Output::Sigmoid};
    ParameterStore store;
    ad::Tensor w(1, 1);
    w.v = {-1.0};
    ad::Tensor b(1, 1, 0.0);
    store.add("f.w0", w);
    store.add("f.b0", b);
    ad::Tensor w1(1, 1);
    w1.v = {2.0};
    store.add("f.w1", w1);
    store.add("f.b1", b);

    // x = 1: hidden pre-activation -1, relu -> 0, output sigmoid(0) = 0.5.
    std::vector<double> xpos{1.0};
    CHECK(ff_eval(spec, store, "f", xpos)[0] == 0.5);
    // x = -1: hidden 1, output sigmoid(2).
    std::vector<double> xneg{-1.0};
    CHECK(ff_eval(spec, store, "f", xneg)[0] ==
          doctest::Approx(1.0 / (1.0 + std::exp(-2.0))).epsilon(1e-15));
}

TEST_CASE("gru step reproduces the gate equations on a scalar cell") {
    // One input, one hidden unit, all weights fixed by hand.
    ParameterStore store;
    auto one = [](double x) {
        ad::Tensor t(1, 1);
        t.v = {x};
        return t;
    };
    store.add("g.w_r", one(0.5));
    store.add("g.u_r", one(0.25));
    store.add("g.b_r", one(0.1));
    store.add("g.c_r", one(-0.1));
    store.add("g.w_u", one(-0.3));
    store.add("g.u_u", one(0.2));
    store.add("g.b_u", one(0.0));
    store.add("g.c_u", one(0.05));
    store.add("g.w_n", one(1.0));
    store.add("g.u_n", one(-0.5));
    store.add("g.b_n", one(0.2));
    store.add("g.c_n", one(0.0));

    double x = 0.8, h = 0.3;
    double r = 1.0 / (1.0 + std::exp(-(0.5 * x + 0.1 + 0.25 * h - 0.1)));
    double u = 1.0 / (1.0 + std::exp(-(-0.3 * x + 0.0 + 0.2 * h + 0.05)));
    double n = std::tanh(1.0 * x + 0.2 + r * (-0.5 * h + 0.0));
    double expected = (1.0 - u) * h + u * n;

    ad::Tape tape;
    StoreLeaves leaves = register_store(tape, store);
    ad::Node xs = tape.constant(ad::Tensor::row({x}));
    ad::Node hs = tape.constant(ad::Tensor::row({h}));
    ad::Node out = gru_step(tape, leaves, "g", xs, hs);
    CHECK(tape.val(out).v[0] == doctest::Approx(expected).epsilon(1e-15));
}

TEST_CASE("store rejects duplicate names and unknown lookups") {
    ParameterStore store;
    store.add("a", ad::Tensor(1, 1, 0.0));
    CHECK_THROWS(store.add("a", ad::Tensor(1, 1, 0.0)));
    CHECK_THROWS(store.get("missing"));
    CHECK(store.has("a"));
    CHECK(!store.has("b"));
}
