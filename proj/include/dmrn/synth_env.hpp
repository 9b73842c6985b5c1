#pragma once

// Procedural scene + referring-expression generator. Scenes are shape/color/
// size objects on a cell grid; expressions are attribute chains with up to
// three relational hops, guaranteed unambiguous by exhaustive checking.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dmrn/box.hpp"
#include "dmrn/tensor.hpp"

namespace dmrn::synth {

enum class Shape { square, circle, triangle };
enum class Color { red, green, blue, yellow, magenta, cyan };
enum class ObjSize { small, large };
enum class Relation { left_of, right_of, above, below };

const char* to_string(Shape s);
const char* to_string(Color c);
const char* to_string(ObjSize s);
const char* to_string(Relation r);

struct SceneObject {
    Shape shape;
    Color color;
    ObjSize size;
    int row = 0, col = 0;
    BoundingBox pixel_box;  // exact rasterized extent at the scene's image_px
};

struct SceneSpec {
    int grid_size = 8;
    int image_px = 64;
    std::vector<SceneObject> objects;
    std::uint64_t seed = 0;
};

// One hop of an expression: an attribute descriptor, optionally reached
// through a relation from the previous hop's object.
struct Descriptor {
    std::optional<Shape> shape;
    std::optional<Color> color;
    std::optional<ObjSize> size;
    bool matches(const SceneObject& o) const;
    std::vector<std::string> words() const;
};

struct ExpressionSpec {
    std::vector<Descriptor> descriptors;  // descriptors[0] describes the target
    std::vector<Relation> relations;      // relations.size() + 1 == descriptors.size()
};

struct GroundingInstance {
    SceneSpec scene;
    int target_index = -1;
    ExpressionSpec expr;
    std::string expression_text;
    std::vector<std::string> token_text;  // includes [CLS]/[SEP]/[PAD]
    std::vector<int> token_ids;           // length n_max
    BoundingBox gt_box;
    int hop_count = 1;
    std::uint64_t seed = 0;
};

class GenerationError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};
class NoUniqueReferentError : public GenerationError {
    using GenerationError::GenerationError;
};

namespace vocab {
constexpr int kCls = 0;
constexpr int kSep = 1;
constexpr int kPad = 2;
const std::vector<std::string>& words();
int size();
int id(const std::string& word);
}  // namespace vocab

struct GenConfig {
    int grid_size = 8;
    int image_px = 64;
    int n_objects_min = 5;
    int n_objects_max = 8;
    int n_max = 20;  // token budget including [CLS]/[SEP]
};

SceneSpec generate_scene(std::uint64_t seed, int grid_size, int n_objects, int image_px = 0);

struct ExpressionResult {
    ExpressionSpec spec;
    std::vector<std::string> words;
    int hop_count = 1;
};
ExpressionResult generate_expression(const SceneSpec& scene, int target_index, int hops,
                                     std::uint64_t seed);

// Returns indices of all objects satisfying the expression (brute force).
std::vector<int> satisfying_objects(const SceneSpec& scene, const ExpressionSpec& expr);

// Deterministic rasterization to an [image_px*image_px, 3] tensor in [0,1].
Tensor render(const SceneSpec& scene, int image_px);

// Exact drawn extent of an object, without rendering the whole scene.
BoundingBox rasterized_extent(const SceneObject& obj, int grid_size, int image_px);

std::vector<int> tokenize(const std::vector<std::string>& words, int n_max,
                          std::vector<std::string>* padded_text = nullptr);

// Full instance pipeline: scene -> target -> expression -> tokens. Retries
// internally with derived seeds until an unambiguous expression is found.
GroundingInstance generate_instance(std::uint64_t seed, int hops, const GenConfig& cfg = {});

// Deterministic seed derivation for sub-streams.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace dmrn::synth
