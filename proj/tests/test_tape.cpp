#include <doctest.h>

#include <cmath>
#include <limits>

#include "surro/ode.hpp"
#include "surro/tape.hpp"

using namespace surro::ad;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Central-difference gradient of a scalar graph builder with respect to one
// leaf tensor.
template <typename Build>
void check_leaf_gradient(Tensor x0, Build&& build, double h = 1e-6, double tol = 1e-6) {
    Tape tape;
    Node x = tape.leaf(x0);
    Node loss = build(tape, x);
    tape.backward(loss);
    Tensor analytic = tape.grad(x);

    for (std::size_t i = 0; i < x0.size(); ++i) {
        Tensor xp = x0, xm = x0;
        xp.v[i] += h;
        xm.v[i] -= h;
        Tape tp, tm;
        double fp = tp.val(build(tp, tp.leaf(xp))).v[0];
        double fm = tm.val(build(tm, tm.leaf(xm))).v[0];
        double fd = (fp - fm) / (2.0 * h);
        CHECK(analytic.v[i] == doctest::Approx(fd).epsilon(tol).scale(1.0));
    }
}

Tensor weights_one(std::size_t rows) { return Tensor(rows, 1, 1.0); }

} // namespace

TEST_CASE("sum of squares has gradient 2x") {
    Tape tape;
    Node x = tape.leaf(Tensor::row({1.0, 2.0}));
    Node sq = tape.mul(x, x);
    // Reduce the row to a scalar: route through a [2,1] shape via linear.
    Node w = tape.constant(Tensor(1, 2, 1.0));
    Node b = tape.constant(Tensor(1, 1, 0.0));
    Node loss = tape.linear(sq, w, b);
    CHECK(tape.val(loss).v[0] == 5.0);
    tape.backward(loss);
    CHECK(tape.grad(x).v[0] == 2.0);
    CHECK(tape.grad(x).v[1] == 4.0);
}

TEST_CASE("linear layer forward and gradients match the affine map") {
    Tensor x0(2, 3);
    for (std::size_t i = 0; i < x0.size(); ++i) x0.v[i] = 0.1 * (static_cast<double>(i) + 1.0);
    check_leaf_gradient(x0, [](Tape& tp, Node x) {
        Tensor w(2, 3);
        for (std::size_t i = 0; i < w.size(); ++i) w.v[i] = 0.05 * (static_cast<double>(i) - 2.5);
        Tensor b(1, 2);
        b.v[0] = 0.3;
        b.v[1] = -0.2;
        Node y = tp.linear(x, tp.constant(w), tp.constant(b));
        Node s = tp.linear(tp.mul(y, y), tp.constant(Tensor(1, 2, 1.0)),
                           tp.constant(Tensor(1, 1)));
        return tp.weighted_sum(s, Tensor(2, 1, 1.0));
    });

    Tape tape;
    Tensor w(1, 2);
    w.v = {1.0, 0.0};
    Tensor b(1, 1);
    b.v = {0.0};
    Node x = tape.leaf(Tensor::row({3.5, -1.0}));
    Node y = tape.linear(x, tape.constant(w), tape.constant(b));
    CHECK(tape.val(y).v[0] == 3.5); // identity row picks the first input
}

TEST_CASE("weight and bias gradients flow through linear") {
    Tensor w0(2, 2);
    w0.v = {0.4, -0.3, 0.2, 0.7};
    check_leaf_gradient(w0, [](Tape& tp, Node w) {
        Tensor x(3, 2);
        for (std::size_t i = 0; i < x.size(); ++i) x.v[i] = 0.2 * (static_cast<double>(i) - 2.0);
        Node y = tp.linear(tp.constant(x), w, tp.constant(Tensor(1, 2, 0.1)));
        Node s = tp.linear(tp.mul(y, y), tp.constant(Tensor(1, 2, 1.0)),
                           tp.constant(Tensor(1, 1)));
        return tp.weighted_sum(s, weights_one(3));
    });
}

TEST_CASE("activation gradients match finite differences") {
    Tensor x0(1, 4);
    x0.v = {-1.2, 0.4, 2.0, -0.1};
    for (int which = 0; which < 3; ++which) {
        check_leaf_gradient(x0, [which](Tape& tp, Node x) {
            Node a = which == 0 ? tp.sigmoid(x) : which == 1 ? tp.tanh_(x) : tp.relu(x);
            Node s = tp.linear(tp.mul(a, a), tp.constant(Tensor(1, 4, 1.0)),
                               tp.constant(Tensor(1, 1)));
            return tp.weighted_sum(s, weights_one(1));
        });
    }
}

TEST_CASE("euler step on the tape matches the plain integrator") {
    Tape tape;
    Node z = tape.leaf(Tensor::row({0.9, 0.1, 0.0}));
    Node th = tape.constant(Tensor::row({0.5, 0.2, 0.1}));
    Node z1 = tape.sirs_euler_step(z, th, 1.0);
    auto plain = surro::euler_step({0.9, 0.1, 0.0}, {0.5, 0.2, 0.1}, 1.0);
    CHECK(tape.val(z1).v[0] == plain[0]);
    CHECK(tape.val(z1).v[1] == plain[1]);
    CHECK(tape.val(z1).v[2] == plain[2]);
    CHECK(plain[0] == doctest::Approx(0.855).epsilon(1e-15));
    CHECK(plain[1] == doctest::Approx(0.125).epsilon(1e-15));
    CHECK(plain[2] == doctest::Approx(0.020).epsilon(1e-15));
}

TEST_CASE("euler step gradients match finite differences in states and parameters") {
    Tensor z0(2, 3);
    z0.v = {0.7, 0.2, 0.1, 0.5, 0.3, 0.2};
    check_leaf_gradient(z0, [](Tape& tp, Node z) {
        Tensor th(2, 3);
        th.v = {0.6, 0.3, 0.2, 0.4, 0.5, 0.1};
        Node z1 = tp.sirs_euler_step(z, tp.constant(th), 1.0);
        Node z2 = tp.sirs_euler_step(z1, tp.constant(th), 1.0);
        Node s = tp.linear(tp.mul(z2, z2), tp.constant(Tensor(1, 3, 1.0)),
                           tp.constant(Tensor(1, 1)));
        return tp.weighted_sum(s, weights_one(2));
    });

    Tensor th0(1, 3);
    th0.v = {0.6, 0.3, 0.2};
    check_leaf_gradient(th0, [](Tape& tp, Node th) {
        Node z = tp.constant(Tensor::row({0.7, 0.2, 0.1}));
        Node z1 = tp.sirs_euler_step(z, th, 1.0);
        Node z2 = tp.sirs_euler_step(z1, th, 1.0);
        Node s = tp.linear(tp.mul(z2, z2), tp.constant(Tensor(1, 3, 1.0)),
                           tp.constant(Tensor(1, 1)));
        return tp.weighted_sum(s, weights_one(1));
    });
}

TEST_CASE("simplex guard is the identity inside the simplex") {
    Tape tape;
    Tensor z0(2, 3);
    z0.v = {0.2, 0.5, 0.3, 1.0, 0.0, 0.0};
    Node z = tape.leaf(z0);
    Node c = tape.clamp_simplex(z);
    for (std::size_t i = 0; i < z0.size(); ++i) CHECK(tape.val(c).v[i] == z0.v[i]);
    CHECK(tape.clamp_events() == 0);
    tape.backward(tape.weighted_sum(
        tape.linear(c, tape.constant(Tensor(1, 3, 1.0)), tape.constant(Tensor(1, 1))),
        weights_one(2)));
    for (std::size_t i = 0; i < z0.size(); ++i) CHECK(tape.grad(z).v[i] == 1.0);
}

TEST_CASE("simplex guard clamps and renormalises rows that leave the simplex") {
    Tape tape;
    Tensor z0(1, 3);
    z0.v = {1.2, -0.1, 0.1}; // clamps to (1.0, 0.0, 0.1), sum 1.1
    Node c = tape.clamp_simplex(tape.leaf(z0));
    CHECK(tape.val(c).v[0] == doctest::Approx(1.0 / 1.1).epsilon(1e-14));
    CHECK(tape.val(c).v[1] == 0.0);
    CHECK(tape.val(c).v[2] == doctest::Approx(0.1 / 1.1).epsilon(1e-14));
    CHECK(tape.clamp_events() == 1);
}

TEST_CASE("multinomial log-pmf on probabilities matches the closed form") {
    Tape tape;
    Tensor p(1, 3, 1.0 / 3.0);
    Node ll = tape.mn_logpmf_probs({{1, 1, 1}}, tape.constant(p));
    CHECK(tape.val(ll).v[0] == doctest::Approx(std::log(6.0 / 27.0)).epsilon(1e-12));
}

TEST_CASE("multinomial log-pmf gradients match finite differences") {
    Tensor p0(1, 3);
    p0.v = {0.5, 0.3, 0.2};
    check_leaf_gradient(p0, [](Tape& tp, Node p) {
        return tp.weighted_sum(tp.mn_logpmf_probs({{3, 1, 2}}, p), weights_one(1));
    });

    Tensor o0(2, 3);
    o0.v = {0.5, -0.2, 1.1, -0.4, 0.9, 0.3};
    check_leaf_gradient(o0, [](Tape& tp, Node o) {
        Tensor w(2, 1);
        w.v = {0.7, 0.3};
        return tp.weighted_sum(tp.mn_logpmf_logits({{3, 1, 2}, {0, 4, 1}}, o), w);
    });
}

TEST_CASE("impossible outcomes yield -inf but excluded rows leave gradients finite") {
    Tape tape;
    Tensor p(2, 3);
    p.v = {0.5, 0.5, 0.0, 0.25, 0.25, 0.5};
    Node probs = tape.leaf(p);
    Node ll = tape.mn_logpmf_probs({{1, 1, 2}, {2, 1, 1}}, probs);
    CHECK(tape.val(ll).v[0] == -kInf);
    CHECK(std::isfinite(tape.val(ll).v[1]));

    Tensor w(2, 1);
    w.v = {0.0, -1.0}; // excluded row carries weight zero
    Node loss = tape.weighted_sum(ll, w);
    CHECK(std::isfinite(tape.val(loss).v[0]));
    tape.backward(loss);
    for (double g : tape.grad(probs).v) CHECK(std::isfinite(g));
}

TEST_CASE("tape misuse is rejected") {
    Tape tape;
    Node x = tape.leaf(Tensor::row({1.0, 2.0}));
    CHECK_THROWS(tape.add(x, tape.constant(Tensor(2, 2))));
    CHECK_THROWS(tape.backward(x)); // not a scalar
    Node loss = tape.weighted_sum(tape.linear(x, tape.constant(Tensor(1, 2, 1.0)),
                                              tape.constant(Tensor(1, 1))),
                                  weights_one(1));
    tape.backward(loss);
    CHECK_THROWS(tape.backward(loss)); // second pass without reset
    CHECK_THROWS(tape.val(Node{9999}));
}
