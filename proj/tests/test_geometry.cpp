#include <doctest.h>

#include "mrblat/geometry.hpp"
#include "mrblat/rng.hpp"

using namespace mrblat;

TEST_CASE("local_to_global: identity pose") {
    const RadarPose pose{};
    const GlobalPoint g = local_to_global(LocalPoint{Vec2{3.0, 4.0}}, pose);
    CHECK(g.v.x() == doctest::Approx(3.0));
    CHECK(g.v.y() == doctest::Approx(4.0));
}

TEST_CASE("local_to_global: pure translation") {
    const RadarPose pose{Vec2{50.0, 0.0}, 0.0};
    const GlobalPoint g = local_to_global(LocalPoint{Vec2{0.0, 100.0}}, pose);
    CHECK(g.v.x() == doctest::Approx(50.0));
    CHECK(g.v.y() == doctest::Approx(100.0));
}

TEST_CASE("rotation convention: positive psi turns boresight CCW from +y") {
    // boresight = local (0, 1); at psi = pi/2 it must land on -x
    const RadarPose pose{Vec2{0.0, 0.0}, kPi / 2.0};
    const GlobalPoint bore = local_to_global(LocalPoint{Vec2{0.0, 1.0}}, pose);
    CHECK(bore.v.x() == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(bore.v.y() == doctest::Approx(0.0).epsilon(1e-12));

    // a point on boresight maps back to u = 0
    const LocalPoint back = global_to_local(GlobalPoint{Vec2{-7.0, 0.0}}, pose);
    CHECK(back.v.x() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(back.v.y() == doctest::Approx(7.0).epsilon(1e-12));

    // round trip at the rotated pose
    const LocalPoint p{Vec2{1.0, 0.0}};
    const LocalPoint rt = global_to_local(local_to_global(p, pose), pose);
    CHECK((rt.v - p.v).norm() < 1e-14);
}

TEST_CASE("global_to_local: trivial cases") {
    CHECK((global_to_local(GlobalPoint{Vec2{3.0, 4.0}}, RadarPose{}).v - Vec2{3.0, 4.0}).norm() <
          1e-15);
    const RadarPose pose{Vec2{50.0, 0.0}, 0.0};
    CHECK((global_to_local(GlobalPoint{Vec2{50.0, 200.0}}, pose).v - Vec2{0.0, 200.0}).norm() <
          1e-12);
}

TEST_CASE("round trip is the identity for 1e4 random poses and points") {
    Rng rng(42);
    double worst = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const RadarPose pose{Vec2{200.0 * (rng.uniform() - 0.5), 200.0 * (rng.uniform() - 0.5)},
                             kPi * (2.0 * rng.uniform() - 1.0) * 0.999};
        const GlobalPoint g{Vec2{500.0 * (rng.uniform() - 0.5), 500.0 * (rng.uniform() - 0.5)}};
        const GlobalPoint rt = local_to_global(global_to_local(g, pose), pose);
        worst = std::max(worst, (rt.v - g.v).norm());
    }
    CHECK(worst < 1e-12);
}

TEST_CASE("rotation matrices are orthonormal and preserve distances") {
    Rng rng(7);
    for (int i = 0; i < 100; ++i) {
        const double psi = kPi * (2.0 * rng.uniform() - 1.0);
        const Mat2 r = rotation(psi);
        CHECK((r * r.transpose() - Mat2::Identity()).norm() < 1e-14);

        const RadarPose pose{Vec2{rng.normal(), rng.normal()}, 0.5 * psi};
        const LocalPoint a{Vec2{rng.normal() * 10.0, rng.normal() * 10.0}};
        const LocalPoint b{Vec2{rng.normal() * 10.0, rng.normal() * 10.0}};
        const double before = (a.v - b.v).norm();
        const double after =
            (local_to_global(a, pose).v - local_to_global(b, pose).v).norm();
        CHECK(after == doctest::Approx(before).epsilon(1e-12));
    }
}

TEST_CASE("two_way_delay") {
    const RadarPose pose{};
    CHECK(two_way_delay(GlobalPoint{Vec2{0.0, 150.0}}, pose) ==
          doctest::Approx(1.00069e-6).epsilon(1e-5));
    CHECK(two_way_delay(GlobalPoint{Vec2{299.792458, 0.0}}, pose) ==
          doctest::Approx(2.0e-6).epsilon(1e-15));
    CHECK_THROWS_AS(two_way_delay(GlobalPoint{Vec2{0.0, 0.0}}, pose), NumericError);

    // monotone in range along a ray
    double prev = 0.0;
    for (double r = 1.0; r < 400.0; r += 7.3) {
        const double tau = two_way_delay(GlobalPoint{Vec2{0.6 * r, 0.8 * r}}, pose);
        CHECK(tau > prev);
        prev = tau;
    }
}

TEST_CASE("pose validation") {
    CHECK_THROWS_AS((RadarPose{Vec2{0.0, 0.0}, 4.0}.validate()), ConfigError);
    RadarPose ok{Vec2{1.0, 2.0}, -3.0};
    CHECK_NOTHROW(ok.validate());
}
