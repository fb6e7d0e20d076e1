#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "dp/rng.hpp"
#include "dp/toy_world.hpp"

using namespace dp;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

Caption random_caption(Rng& rng) {
    return {static_cast<Background>(rng.uniform_int(4)), static_cast<Placement>(rng.uniform_int(3)),
            static_cast<FaceSize>(rng.uniform_int(2))};
}

}  // namespace

TEST_CASE("render_sample is deterministic and geometrically consistent") {
    auto ids = make_identities(2, 7);
    Caption cap{Background::green, Placement::left, FaceSize::large};
    auto a = render_sample(ids[0], cap, 123);
    auto b = render_sample(ids[0], cap, 123);
    CHECK(a.image.v == b.image.v);
    CHECK(a.mask.v == b.mask.v);
    auto c = render_sample(ids[0], cap, 124);
    CHECK(a.image.v != c.image.v);  // different jitter

    // mask is exactly the face-disk support and the bbox is tight
    double area = 0.0;
    int x0 = 32, y0 = 32, x1 = -1, y1 = -1;
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
            if (a.mask.at(y, x) > 0.5f) {
                area += 1.0;
                x0 = std::min(x0, x);
                y0 = std::min(y0, y);
                x1 = std::max(x1, x);
                y1 = std::max(y1, y);
            }
    CHECK(area > 200);  // r=9 disk
    CHECK(a.bbox.x == x0);
    CHECK(a.bbox.y == y0);
    CHECK(a.bbox.w == x1 - x0 + 1);
    CHECK(a.bbox.h == y1 - y0 + 1);
    // inside the mask: face color except the eye dots; outside: background
    int face_px = 0, eye_px = 0;
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) {
            const bool in = a.mask.at(y, x) > 0.5f;
            const bool is_face = a.image.at(0, y, x) == ids[0].face_color[0] &&
                                 a.image.at(1, y, x) == ids[0].face_color[1] &&
                                 a.image.at(2, y, x) == ids[0].face_color[2];
            const bool is_eye = a.image.at(0, y, x) == ids[0].eye_color[0] &&
                                a.image.at(1, y, x) == ids[0].eye_color[1] &&
                                a.image.at(2, y, x) == ids[0].eye_color[2];
            if (in && is_face) ++face_px;
            if (in && is_eye) ++eye_px;
            if (!in) CHECK(!is_face);
        }
    CHECK(face_px > 200);
    CHECK(eye_px >= 2);
}

TEST_CASE("identities satisfy the color-separation constraints") {
    auto ids = make_identities(30, 99);
    REQUIRE(ids.size() == 30);
    auto linf = [](const std::array<float, 3>& a, const std::array<float, 3>& b) {
        float m = 0.0f;
        for (int i = 0; i < 3; ++i) m = std::max(m, std::abs(a[i] - b[i]));
        return m;
    };
    for (size_t i = 0; i < ids.size(); ++i) {
        CHECK(ids[i].id == static_cast<int>(i));
        CHECK(linf(ids[i].face_color, ids[i].eye_color) >= 0.5f);
        for (size_t j = i + 1; j < ids.size(); ++j)
            CHECK(linf(ids[i].face_color, ids[j].face_color) >= 0.5f);
    }
}

TEST_CASE("dataset round-trips byte-identically and balances captions") {
    auto ds = make_dataset(2, 12, 5);  // 24 samples: every caption combo once
    REQUIRE(ds.samples.size() == 24);
    std::array<int, 4> bg{};
    std::array<int, 3> pl{};
    std::array<int, 2> sz{};
    for (const auto& s : ds.samples) {
        ++bg[static_cast<size_t>(s.caption.background)];
        ++pl[static_cast<size_t>(s.caption.placement)];
        ++sz[static_cast<size_t>(s.caption.size)];
    }
    for (int n : bg) CHECK(n == 6);  // exactly 25% each
    for (int n : pl) CHECK(n == 8);
    for (int n : sz) CHECK(n == 12);

    const std::string p1 = "toyworld_rt1.dptoy", p2 = "toyworld_rt2.dptoy";
    save_dataset(p1, ds);
    auto loaded = load_dataset(p1);
    REQUIRE(loaded.samples.size() == ds.samples.size());
    CHECK(loaded.identities.size() == ds.identities.size());
    for (size_t i = 0; i < ds.samples.size(); ++i) {
        CHECK(loaded.samples[i].image.v == ds.samples[i].image.v);
        CHECK(loaded.samples[i].mask.v == ds.samples[i].mask.v);
        CHECK(loaded.samples[i].caption == ds.samples[i].caption);
        CHECK(loaded.samples[i].identity.id == ds.samples[i].identity.id);
        CHECK(loaded.samples[i].bbox.x == ds.samples[i].bbox.x);
        CHECK(loaded.samples[i].bbox.w == ds.samples[i].bbox.w);
    }
    save_dataset(p2, loaded);
    CHECK(slurp(p1) == slurp(p2));
    std::remove(p1.c_str());
    std::remove(p2.c_str());

    // empty dataset: header-only file loads back empty
    Dataset empty;
    save_dataset(p1, empty);
    CHECK(load_dataset(p1).samples.empty());
    std::remove(p1.c_str());
}

TEST_CASE("the analytic classifier closes the loop on 500 rendered samples") {
    Rng rng(17);
    auto ids = make_identities(10, 55);
    for (int trial = 0; trial < 500; ++trial) {
        const auto& id = ids[static_cast<size_t>(rng.uniform_int(10))];
        const Caption cap = random_caption(rng);
        auto s = render_sample(id, cap, rng.next_u64());
        CHECK(text_match_score(s.image, s.mask, cap) == 1.0);
        // size + jitter variation against the fixed small reference portrait
        // caps ground-truth renders around 0.97
        CHECK(face_score(s.image, s.mask, id) >= 0.95);
    }
}

TEST_CASE("face_score separates identities") {
    Rng rng(18);
    auto ids = make_identities(8, 77);
    for (int trial = 0; trial < 50; ++trial) {
        const int i = rng.uniform_int(8);
        int j = rng.uniform_int(8);
        while (j == i) j = rng.uniform_int(8);
        const Caption cap = random_caption(rng);
        auto s = render_sample(ids[static_cast<size_t>(i)], cap, rng.next_u64());
        const double same = face_score(s.image, s.mask, ids[static_cast<size_t>(i)]);
        const double cross = face_score(s.image, s.mask, ids[static_cast<size_t>(j)]);
        CHECK(same > cross);
    }
}

TEST_CASE("background is read only outside the mask") {
    auto ids = make_identities(1, 3);
    Caption cap{Background::blue, Placement::center, FaceSize::small};
    auto s = render_sample(ids[0], cap, 9);
    // painting the whole face region must not change the background read-out
    auto vandalized = s.image;
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
            if (s.mask.at(y, x) > 0.5f)
                for (int c = 0; c < 3; ++c) vandalized.at(c, y, x) = 0.9f;
    CHECK(classify_background(vandalized, s.mask) == Background::blue);
    CHECK(classify_background(s.image, s.mask) == Background::blue);
}

TEST_CASE("caption token round-trip covers the vocabulary") {
    Caption c{Background::striped, Placement::right, FaceSize::large};
    auto t = c.tokens();
    CHECK(t[0] == 3);
    CHECK(t[1] == 6);
    CHECK(t[2] == 8);
    Background b;
    Placement p;
    FaceSize f;
    CHECK(parse_background("striped", b));
    CHECK(b == Background::striped);
    CHECK(parse_placement("right", p));
    CHECK(p == Placement::right);
    CHECK(parse_face_size("large", f));
    CHECK(f == FaceSize::large);
    CHECK(!parse_background("mauve", b));
}
