#include "dp/toy_world.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "dp/rng.hpp"

namespace dp {

namespace {

constexpr float kBgLevel = 0.9f;
constexpr float kStripeLevel = 0.7f;  // striped = alternating light/dark gray 4px columns

std::array<float, 3> background_color(Background b) {
    switch (b) {
        case Background::red: return {kBgLevel, -kBgLevel, -kBgLevel};
        case Background::green: return {-kBgLevel, kBgLevel, -kBgLevel};
        case Background::blue: return {-kBgLevel, -kBgLevel, kBgLevel};
        default: return {0.0f, 0.0f, 0.0f};
    }
}

float linf(const std::array<float, 3>& a, const std::array<float, 3>& b) {
    float m = 0.0f;
    for (int i = 0; i < 3; ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

BBox tight_box(const TensorF& mask) {
    int x0 = kImageSize, y0 = kImageSize, x1 = -1, y1 = -1;
    for (int y = 0; y < kImageSize; ++y)
        for (int x = 0; x < kImageSize; ++x)
            if (mask.v[static_cast<size_t>(y) * kImageSize + x] > 0.5f) {
                x0 = std::min(x0, x);
                y0 = std::min(y0, y);
                x1 = std::max(x1, x);
                y1 = std::max(y1, y);
            }
    if (x1 < 0) return {0, 0, 0, 0};
    return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

Sample render(const IdentitySpec& identity, const Caption& caption, int dx, int dy) {
    Sample s;
    s.identity = identity;
    s.caption = caption;
    s.image = TensorF({3, kImageSize, kImageSize});
    s.mask = TensorF({kImageSize, kImageSize});
    s.mask.fill(0.0f);

    if (caption.background == Background::striped) {
        for (int y = 0; y < kImageSize; ++y)
            for (int x = 0; x < kImageSize; ++x) {
                float v = ((x / 4) % 2 == 0) ? kStripeLevel : -kStripeLevel;
                for (int c = 0; c < 3; ++c) s.image.at(c, y, x) = v;
            }
    } else {
        auto bg = background_color(caption.background);
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < kImageSize; ++y)
                for (int x = 0; x < kImageSize; ++x) s.image.at(c, y, x) = bg[static_cast<size_t>(c)];
    }

    static const int cx_for[3] = {8, 16, 24};
    const int cx = cx_for[static_cast<int>(caption.placement)] + dx;
    const int cy = kImageSize / 2 + dy;
    const int r = face_radius(caption.size);
    for (int y = 0; y < kImageSize; ++y)
        for (int x = 0; x < kImageSize; ++x)
            if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) {
                s.mask.v[static_cast<size_t>(y) * kImageSize + x] = 1.0f;
                for (int c = 0; c < 3; ++c) s.image.at(c, y, x) = identity.face_color[static_cast<size_t>(c)];
            }

    // two eye dots inside the disk, upper half
    const int ex = std::max(1, (r * 2) / 5);
    const int ey = std::max(1, r / 3);
    const int dot = caption.size == FaceSize::large ? 1 : 0;  // 2x2 vs 1x1
    for (int side = -1; side <= 1; side += 2) {
        const int ecx = cx + side * ex, ecy = cy - ey;
        for (int oy = 0; oy <= dot; ++oy)
            for (int ox = 0; ox <= dot; ++ox) {
                const int px = ecx + ox, py = ecy + oy;
                if (px < 0 || px >= kImageSize || py < 0 || py >= kImageSize) continue;
                for (int c = 0; c < 3; ++c) s.image.at(c, py, px) = identity.eye_color[static_cast<size_t>(c)];
            }
    }

    s.bbox = tight_box(s.mask);
    return s;
}

void put_u16(std::ostream& o, uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>(v >> 8)};
    o.write(reinterpret_cast<const char*>(b), 2);
}
void put_u32(std::ostream& o, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    o.write(reinterpret_cast<const char*>(b), 4);
}
void put_f32(std::ostream& o, float v) {
    static_assert(sizeof(float) == 4);
    uint32_t u;
    std::memcpy(&u, &v, 4);
    put_u32(o, u);
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
float get_f32(std::istream& i) {
    uint32_t u = get_u32(i);
    float v;
    std::memcpy(&v, &u, 4);
    return v;
}

Caption caption_from_tokens(const std::array<uint16_t, 3>& t) {
    Caption c;
    if (t[0] > 3 || t[1] < kPlacementTokenBase || t[1] > kPlacementTokenBase + 2 ||
        t[2] < kSizeTokenBase || t[2] > kSizeTokenBase + 1)
        throw std::runtime_error("dataset: bad caption tokens");
    c.background = static_cast<Background>(t[0]);
    c.placement = static_cast<Placement>(t[1] - kPlacementTokenBase);
    c.size = static_cast<FaceSize>(t[2] - kSizeTokenBase);
    return c;
}

// 4x4 area-averaged crop embedding; empty mask -> full-image crop.
// Pixels outside the mask are zeroed first so the bbox corners (which show
// whatever background surrounds the face) cannot leak into the embedding.
TensorF face_embedding_of(const TensorF& image, const TensorF& mask) {
    BBox b = tight_box(mask);
    if (b.w <= 0 || b.h <= 0) b = {0, 0, kImageSize, kImageSize};
    TensorF blanked = image;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < kImageSize; ++y)
            for (int x = 0; x < kImageSize; ++x)
                if (mask.v[static_cast<size_t>(y) * kImageSize + x] <= 0.5f)
                    blanked.v[(static_cast<size_t>(c) * kImageSize + y) * kImageSize + x] = 0.0f;
    return encode_face(blanked, b);
}

double cosine(const TensorF& a, const TensorF& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.v.size(); ++i) {
        dot += static_cast<double>(a.v[i]) * b.v[i];
        na += static_cast<double>(a.v[i]) * a.v[i];
        nb += static_cast<double>(b.v[i]) * b.v[i];
    }
    const double d = std::sqrt(na) * std::sqrt(nb);
    return d > 0.0 ? dot / d : 0.0;
}

float gray(const TensorF& img, int y, int x) {
    return (img.v[static_cast<size_t>(y) * kImageSize + x] +
            img.v[(1 * kImageSize + y) * static_cast<size_t>(kImageSize) + x] +
            img.v[(2 * kImageSize + y) * static_cast<size_t>(kImageSize) + x]) /
           3.0f;
}

}  // namespace

const char* to_string(Background b) {
    static const char* n[] = {"red", "green", "blue", "striped"};
    return n[static_cast<int>(b)];
}
const char* to_string(Placement p) {
    static const char* n[] = {"left", "center", "right"};
    return n[static_cast<int>(p)];
}
const char* to_string(FaceSize s) { return s == FaceSize::small ? "small" : "large"; }

bool parse_background(const std::string& s, Background& out) {
    for (int i = 0; i < 4; ++i)
        if (s == to_string(static_cast<Background>(i))) {
            out = static_cast<Background>(i);
            return true;
        }
    return false;
}
bool parse_placement(const std::string& s, Placement& out) {
    for (int i = 0; i < 3; ++i)
        if (s == to_string(static_cast<Placement>(i))) {
            out = static_cast<Placement>(i);
            return true;
        }
    return false;
}
bool parse_face_size(const std::string& s, FaceSize& out) {
    for (int i = 0; i < 2; ++i)
        if (s == to_string(static_cast<FaceSize>(i))) {
            out = static_cast<FaceSize>(i);
            return true;
        }
    return false;
}

int face_radius(FaceSize s) { return s == FaceSize::small ? 5 : 9; }

Sample render_sample(const IdentitySpec& identity, const Caption& caption, uint64_t seed) {
    Rng rng(seed);
    const int dx = static_cast<int>(rng.uniform_int(3)) - 1;
    const int dy = static_cast<int>(rng.uniform_int(3)) - 1;
    return render(identity, caption, dx, dy);
}

Sample reference_portrait(const IdentitySpec& identity) {
    return render(identity, Caption{Background::red, Placement::center, FaceSize::small}, 0, 0);
}

std::vector<IdentitySpec> make_identities(int n, uint64_t seed) {
    Rng rng(seed);
    std::vector<IdentitySpec> out;
    out.reserve(static_cast<size_t>(n));
    auto draw_color = [&] {
        std::array<float, 3> c;
        for (auto& v : c) v = static_cast<float>(rng.uniform() * 2.0 - 1.0);
        return c;
    };
    for (int i = 0; i < n; ++i) {
        IdentitySpec id;
        id.id = i;
        for (int tries = 0;; ++tries) {
            if (tries > 100000) throw std::runtime_error("make_identities: rejection sampling stuck");
            id.face_color = draw_color();
            bool ok = true;
            for (const auto& other : out)
                if (linf(id.face_color, other.face_color) < 0.5f) {
                    ok = false;
                    break;
                }
            if (ok) break;
        }
        do {
            id.eye_color = draw_color();
        } while (linf(id.eye_color, id.face_color) < 0.5f);
        out.push_back(id);
    }
    return out;
}

Dataset make_dataset(int n_identities, int samples_per_identity, uint64_t seed) {
    Dataset ds;
    ds.identities = make_identities(n_identities, seed);
    const int total = n_identities * samples_per_identity;
    // balanced caption deck: every (background, placement, size) combo
    // repeated, shuffled once across the whole dataset
    std::vector<Caption> deck;
    while (static_cast<int>(deck.size()) < total)
        for (int b = 0; b < 4; ++b)
            for (int p = 0; p < 3; ++p)
                for (int s = 0; s < 2; ++s)
                    deck.push_back({static_cast<Background>(b), static_cast<Placement>(p),
                                    static_cast<FaceSize>(s)});
    Rng rng(seed ^ 0x9e3779b97f4a7c15ull);
    for (size_t i = deck.size(); i > 1; --i)
        std::swap(deck[i - 1], deck[static_cast<size_t>(rng.uniform_int(static_cast<int>(i)))]);
    ds.samples.reserve(static_cast<size_t>(total));
    size_t k = 0;
    for (int id = 0; id < n_identities; ++id)
        for (int j = 0; j < samples_per_identity; ++j, ++k)
            ds.samples.push_back(
                render_sample(ds.identities[static_cast<size_t>(id)], deck[k], rng.next_u64()));
    return ds;
}

void save_dataset(const std::string& path, const Dataset& ds) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_dataset: cannot open " + path);
    f.write("DPTOY\0", 6);
    put_u16(f, 1);
    put_u32(f, static_cast<uint32_t>(ds.samples.size()));
    for (const auto& s : ds.samples) {
        for (float v : s.identity.face_color) put_f32(f, v);
        for (float v : s.identity.eye_color) put_f32(f, v);
        put_u32(f, static_cast<uint32_t>(s.identity.id));
        for (uint16_t t : s.caption.tokens()) put_u16(f, t);
        put_u16(f, static_cast<uint16_t>(s.bbox.x));
        put_u16(f, static_cast<uint16_t>(s.bbox.y));
        put_u16(f, static_cast<uint16_t>(s.bbox.w));
        put_u16(f, static_cast<uint16_t>(s.bbox.h));
        // mask: packed bits, row-major, MSB first
        unsigned char byte = 0;
        int nbits = 0;
        for (int i = 0; i < kImageSize * kImageSize; ++i) {
            byte = static_cast<unsigned char>((byte << 1) | (s.mask.v[static_cast<size_t>(i)] > 0.5f ? 1 : 0));
            if (++nbits == 8) {
                f.put(static_cast<char>(byte));
                byte = 0;
                nbits = 0;
            }
        }
        // image: HWC interleaved
        for (int y = 0; y < kImageSize; ++y)
            for (int x = 0; x < kImageSize; ++x)
                for (int c = 0; c < 3; ++c) put_f32(f, s.image.v[(static_cast<size_t>(c) * kImageSize + y) * kImageSize + x]);
    }
    if (!f) throw std::runtime_error("save_dataset: write failed for " + path);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_dataset: cannot open " + path);
    char magic[6];
    f.read(magic, 6);
    if (!f || std::memcmp(magic, "DPTOY\0", 6) != 0)
        throw std::runtime_error("load_dataset: bad magic in " + path);
    if (get_u16(f) != 1) throw std::runtime_error("load_dataset: unsupported version");
    const uint32_t count = get_u32(f);
    Dataset ds;
    ds.samples.reserve(count);
    std::vector<int> seen_ids;
    for (uint32_t i = 0; i < count; ++i) {
        Sample s;
        for (auto& v : s.identity.face_color) v = get_f32(f);
        for (auto& v : s.identity.eye_color) v = get_f32(f);
        s.identity.id = static_cast<int>(get_u32(f));
        std::array<uint16_t, 3> toks = {get_u16(f), get_u16(f), get_u16(f)};
        s.caption = caption_from_tokens(toks);
        s.bbox.x = get_u16(f);
        s.bbox.y = get_u16(f);
        s.bbox.w = get_u16(f);
        s.bbox.h = get_u16(f);
        s.mask = TensorF({kImageSize, kImageSize});
        for (int b = 0; b < kImageSize * kImageSize / 8; ++b) {
            const int byte = f.get();
            for (int j = 0; j < 8; ++j)
                s.mask.v[static_cast<size_t>(b) * 8 + j] = ((byte >> (7 - j)) & 1) ? 1.0f : 0.0f;
        }
        s.image = TensorF({3, kImageSize, kImageSize});
        for (int y = 0; y < kImageSize; ++y)
            for (int x = 0; x < kImageSize; ++x)
                for (int c = 0; c < 3; ++c)
                    s.image.v[(static_cast<size_t>(c) * kImageSize + y) * kImageSize + x] = get_f32(f);
        if (!f) throw std::runtime_error("load_dataset: truncated file " + path);
        if (std::find(seen_ids.begin(), seen_ids.end(), s.identity.id) == seen_ids.end()) {
            seen_ids.push_back(s.identity.id);
            ds.identities.push_back(s.identity);
        }
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

double face_score(const TensorF& image, const TensorF& mask, const IdentitySpec& identity) {
    const Sample ref = reference_portrait(identity);
    const TensorF ref_emb = face_embedding_of(ref.image, ref.mask);
    const TensorF emb = face_embedding_of(image, mask);
    return cosine(emb, ref_emb);
}

Background classify_background(const TensorF& image, const TensorF& mask) {
    // mean gray per column over non-face pixels; stripe energy = mean abs
    // difference of adjacent column means
    std::array<double, kImageSize> colsum{}, colcnt{};
    double mean[3] = {0, 0, 0};
    double n = 0;
    for (int y = 0; y < kImageSize; ++y)
        for (int x = 0; x < kImageSize; ++x) {
            if (mask.v[static_cast<size_t>(y) * kImageSize + x] > 0.5f) continue;
            colsum[static_cast<size_t>(x)] += gray(image, y, x);
            colcnt[static_cast<size_t>(x)] += 1.0;
            for (int c = 0; c < 3; ++c) mean[c] += image.v[(static_cast<size_t>(c) * kImageSize + y) * kImageSize + x];
            n += 1.0;
        }
    if (n == 0)  // fully-masked image: read everything
        return classify_background(image, TensorF({kImageSize, kImageSize}));
    double energy = 0.0;
    int pairs = 0;
    double prev = 0.0;
    bool have_prev = false;
    for (int x = 0; x < kImageSize; ++x) {
        if (colcnt[static_cast<size_t>(x)] == 0.0) {
            have_prev = false;
            continue;
        }
        const double g = colsum[static_cast<size_t>(x)] / colcnt[static_cast<size_t>(x)];
        if (have_prev) {
            energy += std::abs(g - prev);
            ++pairs;
        }
        prev = g;
        have_prev = true;
    }
    if (pairs > 0 && energy / pairs > 0.15) return Background::striped;
    for (int c = 0; c < 3; ++c) mean[c] /= n;
    double best = 1e30;
    Background pick = Background::red;
    for (int b = 0; b < 3; ++b) {
        auto proto = background_color(static_cast<Background>(b));
        double d = 0.0;
        for (int c = 0; c < 3; ++c) d += (mean[c] - proto[static_cast<size_t>(c)]) * (mean[c] - proto[static_cast<size_t>(c)]);
        if (d < best) {
            best = d;
            pick = static_cast<Background>(b);
        }
    }
    return pick;
}

bool classify_placement(const TensorF& mask, Placement& out) {
    double sx = 0.0, n = 0.0;
    for (int y = 0; y < kImageSize; ++y)
        for (int x = 0; x < kImageSize; ++x)
            if (mask.v[static_cast<size_t>(y) * kImageSize + x] > 0.5f) {
                sx += x;
                n += 1.0;
            }
    if (n == 0.0) return false;
    const double cx = sx / n;
    out = cx < kImageSize / 3.0 ? Placement::left
                                : (cx < 2.0 * kImageSize / 3.0 ? Placement::center : Placement::right);
    return true;
}

bool classify_size(const TensorF& mask, FaceSize& out) {
    double n = 0.0;
    for (float v : mask.v)
        if (v > 0.5f) n += 1.0;
    if (n == 0.0) return false;
    // small disk area ~ pi*25 = 79, large ~ pi*81 = 254; split in between
    out = n < 160.0 ? FaceSize::small : FaceSize::large;
    return true;
}

double text_match_score(const TensorF& image, const TensorF& mask, const Caption& caption) {
    int hits = 0;
    if (classify_background(image, mask) == caption.background) ++hits;
    Placement p;
    if (classify_placement(mask, p) && p == caption.placement) ++hits;
    FaceSize s;
    if (classify_size(mask, s) && s == caption.size) ++hits;
    return hits / 3.0;
}

}  // namespace dp
