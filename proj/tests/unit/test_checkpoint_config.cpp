#include <cstdio>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "dp/checkpoint.hpp"
#include "dp/config.hpp"
#include "dp/rng.hpp"

using namespace dp;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("checkpoints survive 50 save/load cycles byte-identically") {
    Rng rng(91);
    Checkpoint ckpt;
    for (int i = 0; i < 5; ++i) {
        CheckpointEntry e;
        e.name = "base.layer" + std::to_string(i) + ".w";
        e.dims = {2 + i, 3};
        e.data.resize(static_cast<size_t>((2 + i) * 3));
        for (auto& v : e.data) v = static_cast<float>(rng.normal());
        ckpt.entries.push_back(std::move(e));
    }
    const std::string path = "ckpt_rt.dpckpt";
    save_checkpoint(path, ckpt);
    std::string first = slurp(path);
    for (int cycle = 0; cycle < 50; ++cycle) {
        auto loaded = load_checkpoint(path);
        save_checkpoint(path, loaded);
        CHECK(slurp(path) == first);
    }
    auto loaded = load_checkpoint(path);
    REQUIRE(loaded.entries.size() == ckpt.entries.size());
    for (size_t i = 0; i < ckpt.entries.size(); ++i) {
        CHECK(loaded.entries[i].name == ckpt.entries[i].name);
        CHECK(loaded.entries[i].dims == ckpt.entries[i].dims);
        CHECK(loaded.entries[i].data == ckpt.entries[i].data);
    }
    std::remove(path.c_str());
}

TEST_CASE("checkpoint loader rejects corrupt files") {
    const std::string path = "ckpt_bad.dpckpt";
    {
        std::ofstream f(path, std::ios::binary);
        f << "NOTCKP";
    }
    CHECK_THROWS(load_checkpoint(path));
    {
        std::ofstream f(path, std::ios::binary);
        f.write("DPCKPT", 6);
        const char ver[2] = {1, 0};
        f.write(ver, 2);
        const unsigned char count[4] = {5, 0, 0, 0};  // promises entries, delivers none
        f.write(reinterpret_cast<const char*>(count), 4);
    }
    CHECK_THROWS(load_checkpoint(path));
    std::remove(path.c_str());
    CHECK_THROWS(load_checkpoint("does_not_exist.dpckpt"));
}

TEST_CASE("snapshot/restore roundtrips the store and respects prefixes") {
    Rng rng(92);
    ParamStore<float> store;
    store.add("base.w", rng.normal_tensor<float>({3, 3}));
    store.add("iea.w", rng.normal_tensor<float>({2, 2}));
    store.add("tca.w", rng.normal_tensor<float>({2, 2}));
    auto full = snapshot(store);
    CHECK(full.entries.size() == 3);
    CHECK(full.has_prefix("base."));
    auto base_only = snapshot(store, {"base."});
    CHECK(base_only.entries.size() == 1);
    CHECK(!base_only.has_prefix("iea."));

    auto orig_iea = store.get("iea.w")->val.v;
    for (auto& v : store.get("iea.w")->val.v) v = 0.0f;
    restore(full, store, {"iea."});
    CHECK(store.get("iea.w")->val.v == orig_iea);
    // restoring all prefixes from a partial checkpoint fails loudly
    CHECK_THROWS(restore(base_only, store));
    // shape mismatch fails
    ParamStore<float> other;
    other.add("base.w", rng.normal_tensor<float>({4, 4}));
    CHECK_THROWS(restore(full, other));
}

TEST_CASE("config serialization is stable across 50 round-trips") {
    RunConfig cfg;
    cfg.lr = 3e-4;
    cfg.ffb_mode = "independent";
    cfg.channel_multipliers = {1, 2, 2, 4};
    const std::string s0 = serialize_config(cfg);
    std::string s = s0;
    for (int i = 0; i < 50; ++i) {
        RunConfig rt = parse_config(s);
        CHECK(rt == cfg);
        s = serialize_config(rt);
        CHECK(s == s0);
    }
}

TEST_CASE("config parsing rejects unknown keys and bad types") {
    CHECK_THROWS_WITH_AS(parse_config("{\"train.lrr\": 0.1}"),
                         doctest::Contains("unknown key"), std::runtime_error);
    CHECK_THROWS(parse_config("{\"train.lr\": \"fast\"}"));
    CHECK_THROWS(parse_config("[1,2,3]"));
    CHECK_THROWS(parse_config("not json"));
    // absent keys keep defaults
    auto cfg = parse_config("{\"train.lr\": 0.01}");
    CHECK(cfg.lr == 0.01);
    CHECK(cfg.batch_size == RunConfig{}.batch_size);
}

TEST_CASE("config file io and presets") {
    const std::string path = "cfg_rt.json";
    RunConfig cfg;
    cfg.ddim_steps = 25;
    save_config(path, cfg);
    CHECK(load_config(path) == cfg);
    std::remove(path.c_str());

    RunConfig p;
    apply_preset(p, "paper");
    CHECK(p.lr == 1e-5);
    CHECK(p.batch_size == 4);
    CHECK(p.ddim_steps == 50);
    CHECK(p.guidance_scale == 5.0);
    CHECK_THROWS(apply_preset(p, "warp"));
}
