#pragma once
// Procedural 32x32 face-on-background world: identities are (face color, eye
// color) pairs, captions are (background, placement, size) triples. Includes
// the DPTOY dataset container and the analytic identity/text metrics.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dp/adapters.hpp"
#include "dp/tensor.hpp"

namespace dp {

constexpr int kImageSize = 32;

// token vocabulary: 0..3 backgrounds, 4..6 placements, 7..8 sizes, 9 null
enum class Background : int { red = 0, green = 1, blue = 2, striped = 3 };
enum class Placement : int { left = 0, center = 1, right = 2 };
enum class FaceSize : int { small = 0, large = 1 };

constexpr int kPlacementTokenBase = 4;
constexpr int kSizeTokenBase = 7;
constexpr int kNullToken = 9;

struct IdentitySpec {
    std::array<float, 3> face_color{};
    std::array<float, 3> eye_color{};
    int id = 0;
};

struct Caption {
    Background background = Background::red;
    Placement placement = Placement::center;
    FaceSize size = FaceSize::small;

    std::array<uint16_t, 3> tokens() const {
        return {static_cast<uint16_t>(background),
                static_cast<uint16_t>(kPlacementTokenBase + static_cast<int>(placement)),
                static_cast<uint16_t>(kSizeTokenBase + static_cast<int>(size))};
    }
    bool operator==(const Caption&) const = default;
};

const char* to_string(Background b);
const char* to_string(Placement p);
const char* to_string(FaceSize s);
bool parse_background(const std::string& s, Background& out);
bool parse_placement(const std::string& s, Placement& out);
bool parse_face_size(const std::string& s, FaceSize& out);

struct Sample {
    TensorF image;  // [3,32,32] in [-1,1]
    TensorF mask;   // [32,32] binary, face-disk support
    BBox bbox;      // tight box of the mask
    IdentitySpec identity;
    Caption caption;
};

int face_radius(FaceSize s);

// Deterministic render; `seed` only drives the <=1px center jitter.
Sample render_sample(const IdentitySpec& identity, const Caption& caption, uint64_t seed);

// Jitter-free canonical portrait of an identity (red background, centered,
// small); reference for the identity metric.
Sample reference_portrait(const IdentitySpec& identity);

// Identities with pairwise face-color separation and face/eye separation of
// at least 0.5 in L-infinity.
std::vector<IdentitySpec> make_identities(int n, uint64_t seed);

struct Dataset {
    std::vector<IdentitySpec> identities;
    std::vector<Sample> samples;
};

// Balanced caption coverage (each background ~25% of samples), per-sample
// jitter seeds derived from `seed`.
Dataset make_dataset(int n_identities, int samples_per_identity, uint64_t seed);

void save_dataset(const std::string& path, const Dataset& ds);
Dataset load_dataset(const std::string& path);

// Cosine similarity of 4x4 area-averaged face crops: generated image cropped
// to `mask`'s tight box vs the identity's canonical portrait crop. Empty mask
// falls back to the full image.
double face_score(const TensorF& image, const TensorF& mask, const IdentitySpec& identity);

// Fraction of the 3 caption attributes recovered by the analytic classifier.
// Background reads only pixels outside the mask; placement and size read the
// mask geometry.
double text_match_score(const TensorF& image, const TensorF& mask, const Caption& caption);

// Attribute read-outs, exposed for the classifier's closed-loop tests.
Background classify_background(const TensorF& image, const TensorF& mask);
bool classify_placement(const TensorF& mask, Placement& out);  // false if mask empty
bool classify_size(const TensorF& mask, FaceSize& out);

}  // namespace dp
