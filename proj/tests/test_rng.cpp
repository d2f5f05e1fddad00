#include <doctest.h>

#include "surro/rng.hpp"

using surro::RngStream;

TEST_CASE("uniform draws lie in [0, 1) and reproduce for equal seeds") {
    RngStream a(42), b(42);
    for (int i = 0; i < 1000; ++i) {
        double u = a.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        CHECK(u == b.uniform());
    }
}

TEST_CASE("different seeds give different streams") {
    RngStream a(1), b(2);
    int equal = 0;
    for (int i = 0; i < 100; ++i)
        if (a.uniform() == b.uniform()) ++equal;
    CHECK(equal < 5);
}

TEST_CASE("split depends on index only, not on parent draw position") {
    RngStream parent(7);
    RngStream child_before = parent.split(3);
    for (int i = 0; i < 17; ++i) parent.uniform();
    RngStream child_after = parent.split(3);
    for (int i = 0; i < 20; ++i) CHECK(child_before.uniform() == child_after.uniform());
}

TEST_CASE("split children with different indices are distinct") {
    RngStream parent(7);
    RngStream a = parent.split(0), b = parent.split(1);
    int equal = 0;
    for (int i = 0; i < 100; ++i)
        if (a.uniform() == b.uniform()) ++equal;
    CHECK(equal < 5);
}

TEST_CASE("uniform_int covers the inclusive range") {
    RngStream rng(11);
    bool seen[6] = {false, false, false, false, false, false};
    for (int i = 0; i < 1000; ++i) {
        int k = rng.uniform_int(5, 10);
        CHECK(k >= 5);
        CHECK(k <= 10);
        seen[k - 5] = true;
    }
    for (bool s : seen) CHECK(s);
}
