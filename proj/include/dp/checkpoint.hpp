#pragma once
// DPCKPT flat tensor container: byte-for-byte stable save/load so repeated
// round-trips are identical.

#include <cstdint>
#include <string>
#include <vector>

#include "dp/params.hpp"

namespace dp {

struct CheckpointEntry {
    std::string name;
    std::vector<int> dims;
    std::vector<float> data;  // f32 little-endian on disk
};

struct Checkpoint {
    std::vector<CheckpointEntry> entries;  // preserved in file order

    const CheckpointEntry* find(const std::string& name) const;
    bool has_prefix(const std::string& prefix) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Snapshot params whose names start with any of `prefixes` (empty = all) in
// the store's deterministic name order.
Checkpoint snapshot(const ParamStore<float>& store, const std::vector<std::string>& prefixes = {});

// Copy checkpoint tensors into matching store params. Every store param with
// one of the prefixes must be present with matching dims.
void restore(const Checkpoint& ckpt, ParamStore<float>& store,
             const std::vector<std::string>& prefixes = {});

}  // namespace dp
