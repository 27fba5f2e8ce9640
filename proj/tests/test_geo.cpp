#include <catch2/catch_amalgamated.hpp>

#include "stgia/geo.hpp"
#include "stgia/grid.hpp"
#include "stgia/rng.hpp"

using namespace stgia;

TEST_CASE("planar projection basics") {
    const GeoPoint origin{35.0, 139.0};

    SECTION("origin maps to zero") {
        const PlanarPoint p = planar_project(origin, origin);
        CHECK(p.x == 0.0);
        CHECK(p.y == 0.0);
    }
    SECTION("one millidegree of latitude") {
        const PlanarPoint p = planar_project(GeoPoint{35.001, 139.0}, origin);
        CHECK_THAT(p.y, Catch::Matchers::WithinAbs(111.32, 0.01));
        CHECK_THAT(p.x, Catch::Matchers::WithinAbs(0.0, 1e-9));
    }
    SECTION("one millidegree of longitude scales by cos(lat)") {
        const PlanarPoint p = planar_project(GeoPoint{35.0, 139.001}, origin);
        CHECK_THAT(p.x, Catch::Matchers::WithinAbs(91.19, 0.01));
        CHECK_THAT(p.y, Catch::Matchers::WithinAbs(0.0, 1e-9));
    }
    SECTION("round trip within 1e-9 degrees") {
        Rng rng(11);
        for (int i = 0; i < 200; ++i) {
            GeoPoint p{35.0 + 0.05 * (rng.uniform() - 0.5), 139.0 + 0.05 * (rng.uniform() - 0.5)};
            const GeoPoint q = planar_unproject(planar_project(p, origin), origin);
            CHECK_THAT(q.lat, Catch::Matchers::WithinAbs(p.lat, 1e-9));
            CHECK_THAT(q.lon, Catch::Matchers::WithinAbs(p.lon, 1e-9));
        }
    }
}

TEST_CASE("distance_m is a metric on the projected plane") {
    const GeoPoint origin{35.0, 139.0};

    SECTION("identity and the latitude example") {
        CHECK(distance_m(origin, origin, origin) == 0.0);
        CHECK_THAT(distance_m(GeoPoint{35.0, 139.0}, GeoPoint{35.001, 139.0}, origin),
                   Catch::Matchers::WithinAbs(111.32, 0.01));
    }
    SECTION("symmetry and triangle inequality over random triples") {
        Rng rng(23);
        auto pt = [&] {
            return GeoPoint{35.0 + 0.05 * (rng.uniform() - 0.5),
                            139.0 + 0.05 * (rng.uniform() - 0.5)};
        };
        for (int i = 0; i < 300; ++i) {
            const GeoPoint a = pt(), b = pt(), c = pt();
            const double ab = distance_m(a, b, origin);
            const double ba = distance_m(b, a, origin);
            const double bc = distance_m(b, c, origin);
            const double ac = distance_m(a, c, origin);
            CHECK(ab == ba);
            CHECK(ab >= 0.0);
            CHECK(ac <= ab + bc + 1e-9);
        }
    }
}

TEST_CASE("geo validation rejects bad values") {
    CHECK_THROWS_AS(validate(GeoPoint{91.0, 0.0}), std::invalid_argument);
    CHECK_THROWS_AS(validate(GeoPoint{0.0, 181.0}), std::invalid_argument);
    CHECK_THROWS_AS(validate(GeoPoint{std::numeric_limits<double>::quiet_NaN(), 0.0}),
                    std::invalid_argument);

    Trajectory t;
    t.user_id = "u";
    CHECK_THROWS_AS(validate(t), std::invalid_argument);  // empty
    t.points = {{100, GeoPoint{35, 139}}, {100, GeoPoint{35, 139}}};
    CHECK_THROWS_AS(validate(t), std::invalid_argument);  // non-increasing time
    t.points[1].t = 200;
    CHECK_NOTHROW(validate(t));
}

TEST_CASE("grid cells") {
    GridIndex grid;
    grid.lat_min = 35.0;
    grid.lat_max = 35.04;
    grid.lon_min = 139.0;
    grid.lon_max = 139.04;
    grid.g = 4;
    validate(grid);

    SECTION("corners and centroid") {
        CHECK(grid_cell_of(GeoPoint{35.0, 139.0}, grid) == 0);
        CHECK(grid_cell_of(GeoPoint{35.04, 139.04}, grid) == grid.cell_count() - 1);
        // bbox centroid falls in row 2, col 2 of a 4x4 grid
        CHECK(grid_cell_of(GeoPoint{35.02, 139.02}, grid) == 10);
    }
    SECTION("points outside clamp to boundary cells") {
        CHECK(grid_cell_of(GeoPoint{34.9, 138.9}, grid) == 0);
        CHECK(grid_cell_of(GeoPoint{35.1, 139.1}, grid) == 15);
    }
    SECTION("cell center inverts within one cell diagonal") {
        Rng rng(5);
        const GeoPoint origin{35.02, 139.02};
        const double diag = distance_m(GeoPoint{35.0, 139.0}, GeoPoint{35.01, 139.01}, origin);
        for (int i = 0; i < 200; ++i) {
            GeoPoint p{35.0 + 0.04 * rng.uniform(), 139.0 + 0.04 * rng.uniform()};
            const CellId c = grid_cell_of(p, grid);
            const GeoPoint center = grid_cell_center(c, grid);
            CHECK(grid_cell_of(center, grid) == c);
            CHECK(distance_m(p, center, origin) <= diag + 1e-9);
        }
    }
    SECTION("bad cell ids and degenerate boxes are rejected") {
        CHECK_THROWS_AS(grid_cell_center(-1, grid), std::invalid_argument);
        CHECK_THROWS_AS(grid_cell_center(16, grid), std::invalid_argument);
        GridIndex bad = grid;
        bad.g = 1;
        CHECK_THROWS_AS(validate(bad), std::invalid_argument);
    }
}

TEST_CASE("coordinate scaler is bijective over the bbox") {
    GridIndex grid;
    grid.lat_min = 35.0;
    grid.lat_max = 35.04;
    grid.lon_min = 139.0;
    grid.lon_max = 139.06;
    grid.g = 4;
    const CoordScaler scaler(grid);

    Rng rng(7);
    for (int i = 0; i < 200; ++i) {
        GeoPoint p{35.0 + 0.04 * rng.uniform(), 139.0 + 0.06 * rng.uniform()};
        double nx, ny;
        scaler.encode(p, nx, ny);
        CHECK(nx >= -1.0 - 1e-9);
        CHECK(nx <= 1.0 + 1e-9);
        const GeoPoint q = scaler.decode(nx, ny);
        CHECK_THAT(q.lat, Catch::Matchers::WithinAbs(p.lat, 1e-9));
        CHECK_THAT(q.lon, Catch::Matchers::WithinAbs(p.lon, 1e-9));
    }
}
