#include <cmath>

#include "doctest.h"
#include "dp/adapters.hpp"
#include "dp/backbone.hpp"
#include "dp/rng.hpp"

using namespace dp;

TEST_CASE("encode_face area-averages the crop exactly") {
    Rng rng(41);
    TensorF img({3, 32, 32});
    for (auto& v : img.v) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    // bbox whose sides are multiples of 4: every output cell is a plain mean
    // of a 2x2 block, easy to recompute independently
    BBox b{5, 9, 8, 8};
    auto emb = encode_face(img, b);
    REQUIRE(emb.shape == std::vector<int>{kFaceEmbedDim});
    for (int oy = 0; oy < 4; ++oy)
        for (int ox = 0; ox < 4; ++ox)
            for (int c = 0; c < 3; ++c) {
                double want = 0.0;
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx)
                        want += img.at(c, b.y + oy * 2 + dy, b.x + ox * 2 + dx);
                want /= 4.0;
                CHECK(emb[static_cast<size_t>((oy * 4 + ox) * 3 + c)] ==
                      doctest::Approx(want).epsilon(1e-6));
            }
}

TEST_CASE("encode_face on a constant crop returns that color everywhere") {
    TensorF img({3, 32, 32});
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 32 * 32; ++i)
            img.v[static_cast<size_t>(c) * 1024 + static_cast<size_t>(i)] = 0.25f * (c + 1);
    auto emb = encode_face(img, {3, 3, 7, 5});  // odd sizes exercise fractional overlap
    for (int cell = 0; cell < 16; ++cell)
        for (int c = 0; c < 3; ++c)
            CHECK(emb[static_cast<size_t>(cell * 3 + c)] ==
                  doctest::Approx(0.25 * (c + 1)).epsilon(1e-6));
}

TEST_CASE("encode_face rejects empty or out-of-bounds boxes") {
    TensorF img({3, 32, 32});
    CHECK_THROWS(encode_face(img, {0, 0, 0, 4}));
    CHECK_THROWS(encode_face(img, {30, 0, 4, 4}));
    CHECK_THROWS(encode_face(img, {-1, 0, 4, 4}));
}

TEST_CASE("adapters default to their role strengths and start as no-ops") {
    BackboneConfig cfg;
    cfg.base_channels = 8;
    cfg.groups = 4;
    ParamStore<float> store;
    Rng rng(42);
    auto iea = make_adapter<float>(store, "iea", cfg.attention_layer_channels(),
                                   cfg.n_image_tokens, cfg.token_dim, cfg.adapter_hidden, rng);
    auto tca = make_adapter<float>(store, "tca", cfg.attention_layer_channels(),
                                   cfg.n_image_tokens, cfg.token_dim, cfg.adapter_hidden, rng);
    CHECK(iea.alpha_default == 1.0f);
    CHECK(tca.alpha_default == 0.5f);
    for (const auto& [id, c] : cfg.attention_layer_channels()) {
        CHECK_NOTHROW(iea.layer(id));
        CHECK(iea.layer(id).wk->val.shape == std::vector<int>{cfg.token_dim, c});
        // value projections start at zero: the adapter injects nothing
        for (float v : iea.layer(id).wv->val.v) CHECK(v == 0.0f);
    }
    CHECK_THROWS(iea.layer("nope"));
    // store name partition
    CHECK(store.has_prefix("iea."));
    CHECK(store.has_prefix("tca."));
    CHECK(!store.has_prefix("base."));
}

TEST_CASE("project_embedding produces the token grid and adapter_kv projects it") {
    BackboneConfig cfg;
    cfg.base_channels = 8;
    cfg.groups = 4;
    ParamStore<float> store;
    Rng rng(43);
    auto a = make_adapter<float>(store, "iea", cfg.attention_layer_channels(), cfg.n_image_tokens,
                                 cfg.token_dim, cfg.adapter_hidden, rng);
    TensorF emb({kFaceEmbedDim});
    for (auto& v : emb.v) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    auto toks = project_embedding(emb, a);
    REQUIRE(toks->val.shape == std::vector<int>{cfg.n_image_tokens, cfg.token_dim});
    auto kv = adapter_kv(toks, a.layer("mid"));
    const int c_mid = cfg.attention_layer_channels().at("mid");
    CHECK(kv.k->val.shape == std::vector<int>{cfg.n_image_tokens, c_mid});
    CHECK(kv.v->val.shape == std::vector<int>{cfg.n_image_tokens, c_mid});
    for (float v : kv.v->val.v) CHECK(v == 0.0f);  // zero wv -> zero values
    TensorF bad({kFaceEmbedDim + 1});
    CHECK_THROWS(project_embedding(bad, a));
}
