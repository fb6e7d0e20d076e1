#include "dp/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace dp {

namespace {

constexpr char kMagic[6] = {'D', 'P', 'C', 'K', 'P', 'T'};
constexpr uint16_t kVersion = 1;
constexpr uint8_t kDtypeF32 = 0;

void put_u16(std::ostream& o, uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>(v >> 8)};
    o.write(reinterpret_cast<const char*>(b), 2);
}
void put_u32(std::ostream& o, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    o.write(reinterpret_cast<const char*>(b), 4);
}
uint16_t get_u16(std::istream& i) {
    unsigned char b[2];
    i.read(reinterpret_cast<char*>(b), 2);
    return static_cast<uint16_t>(b[0] | (b[1] << 8));
}
uint32_t get_u32(std::istream& i) {
    unsigned char b[4];
    i.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

bool starts_with(const std::string& s, const std::string& p) { return s.rfind(p, 0) == 0; }

bool matches(const std::string& name, const std::vector<std::string>& prefixes) {
    if (prefixes.empty()) return true;
    for (const auto& p : prefixes)
        if (starts_with(name, p)) return true;
    return false;
}

}  // namespace

const CheckpointEntry* Checkpoint::find(const std::string& name) const {
    for (const auto& e : entries)
        if (e.name == name) return &e;
    return nullptr;
}

bool Checkpoint::has_prefix(const std::string& prefix) const {
    for (const auto& e : entries)
        if (starts_with(e.name, prefix)) return true;
    return false;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
    f.write(kMagic, 6);
    put_u16(f, kVersion);
    put_u32(f, static_cast<uint32_t>(ckpt.entries.size()));
    for (const auto& e : ckpt.entries) {
        if (e.name.size() > 0xffff) throw std::runtime_error("save_checkpoint: name too long");
        size_t n = 1;
        for (int d : e.dims) {
            if (d <= 0) throw std::runtime_error("save_checkpoint: bad dim in " + e.name);
            n *= static_cast<size_t>(d);
        }
        if (n != e.data.size()) throw std::runtime_error("save_checkpoint: dim/data mismatch in " + e.name);
        put_u16(f, static_cast<uint16_t>(e.name.size()));
        f.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        f.put(static_cast<char>(kDtypeF32));
        f.put(static_cast<char>(e.dims.size()));
        for (int d : e.dims) put_u32(f, static_cast<uint32_t>(d));
        for (float v : e.data) {
            uint32_t u;
            std::memcpy(&u, &v, 4);
            put_u32(f, u);
        }
    }
    if (!f) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
    char magic[6];
    f.read(magic, 6);
    if (!f || std::memcmp(magic, kMagic, 6) != 0)
        throw std::runtime_error("load_checkpoint: bad magic in " + path);
    if (get_u16(f) != kVersion) throw std::runtime_error("load_checkpoint: unsupported version");
    const uint32_t count = get_u32(f);
    Checkpoint ckpt;
    ckpt.entries.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        CheckpointEntry e;
        const uint16_t name_len = get_u16(f);
        e.name.resize(name_len);
        f.read(e.name.data(), name_len);
        const int dtype = f.get();
        if (dtype != kDtypeF32) throw std::runtime_error("load_checkpoint: unsupported dtype");
        const int rank = f.get();
        size_t n = 1;
        for (int d = 0; d < rank; ++d) {
            e.dims.push_back(static_cast<int>(get_u32(f)));
            n *= static_cast<size_t>(e.dims.back());
        }
        e.data.resize(n);
        for (auto& v : e.data) {
            uint32_t u = get_u32(f);
            std::memcpy(&v, &u, 4);
        }
        if (!f) throw std::runtime_error("load_checkpoint: truncated file " + path);
        ckpt.entries.push_back(std::move(e));
    }
    return ckpt;
}

Checkpoint snapshot(const ParamStore<float>& store, const std::vector<std::string>& prefixes) {
    Checkpoint ckpt;
    for (const auto& [name, var] : store.params) {
        if (!matches(name, prefixes)) continue;
        CheckpointEntry e;
        e.name = name;
        e.dims = var->val.shape;
        e.data = var->val.v;
        ckpt.entries.push_back(std::move(e));
    }
    return ckpt;
}

void restore(const Checkpoint& ckpt, ParamStore<float>& store,
             const std::vector<std::string>& prefixes) {
    for (auto& [name, var] : store.params) {
        if (!matches(name, prefixes)) continue;
        const CheckpointEntry* e = ckpt.find(name);
        if (!e) throw std::runtime_error("restore: checkpoint missing " + name);
        if (e->dims != var->val.shape) throw std::runtime_error("restore: shape mismatch for " + name);
        var->val.v = e->data;
    }
}

}  // namespace dp
