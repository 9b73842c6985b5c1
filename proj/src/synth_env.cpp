#include "dmrn/synth_env.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>

namespace dmrn::synth {

namespace {

constexpr std::array<std::array<double, 3>, 6> kColorRgb = {{
    {0.85, 0.10, 0.10},  // red
    {0.10, 0.75, 0.10},  // green
    {0.15, 0.20, 0.85},  // blue
    {0.90, 0.85, 0.10},  // yellow
    {0.85, 0.15, 0.80},  // magenta
    {0.10, 0.80, 0.85},  // cyan
}};
constexpr double kBackground = 0.95;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

bool relation_holds(Relation r, const SceneObject& x, const SceneObject& y) {
    switch (r) {
        case Relation::left_of: return x.col < y.col;
        case Relation::right_of: return x.col > y.col;
        case Relation::above: return x.row < y.row;
        case Relation::below: return x.row > y.row;
    }
    return false;
}

// Pixel coverage test for one object; (x, y) in image coordinates.
bool covers(const SceneObject& obj, int grid_size, int image_px, int x, int y) {
    const int cell = image_px / grid_size;
    const int extent = obj.size == ObjSize::small ? cell / 2 : cell;
    const int x0 = obj.col * cell + (cell - extent) / 2;
    const int y0 = obj.row * cell + (cell - extent) / 2;
    if (x < x0 || x >= x0 + extent || y < y0 || y >= y0 + extent) return false;
    const double cx = x0 + extent / 2.0;
    const double cy = y0 + extent / 2.0;
    switch (obj.shape) {
        case Shape::square:
            return true;
        case Shape::circle: {
            const double dx = x + 0.5 - cx;
            const double dy = y + 0.5 - cy;
            const double r = extent / 2.0;
            return dx * dx + dy * dy <= r * r;
        }
        case Shape::triangle: {
            const double half_width = (y - y0 + 1) / 2.0;
            return std::abs(x + 0.5 - cx) <= half_width;
        }
    }
    return false;
}

bool sat_from(const SceneSpec& scene, const ExpressionSpec& expr, std::size_t level, int obj) {
    if (!expr.descriptors[level].matches(scene.objects[obj])) return false;
    if (level + 1 == expr.descriptors.size()) return true;
    for (int next = 0; next < static_cast<int>(scene.objects.size()); ++next) {
        if (next == obj) continue;
        if (relation_holds(expr.relations[level], scene.objects[obj], scene.objects[next]) &&
            sat_from(scene, expr, level + 1, next)) {
            return true;
        }
    }
    return false;
}

std::vector<std::string> relation_words(Relation r) {
    switch (r) {
        case Relation::left_of: return {"left", "of"};
        case Relation::right_of: return {"right", "of"};
        case Relation::above: return {"above"};
        case Relation::below: return {"below"};
    }
    return {};
}

}  // namespace

const char* to_string(Shape s) {
    switch (s) {
        case Shape::square: return "square";
        case Shape::circle: return "circle";
        case Shape::triangle: return "triangle";
    }
    return "?";
}

const char* to_string(Color c) {
    switch (c) {
        case Color::red: return "red";
        case Color::green: return "green";
        case Color::blue: return "blue";
        case Color::yellow: return "yellow";
        case Color::magenta: return "magenta";
        case Color::cyan: return "cyan";
    }
    return "?";
}

const char* to_string(ObjSize s) { return s == ObjSize::small ? "small" : "large"; }

const char* to_string(Relation r) {
    switch (r) {
        case Relation::left_of: return "left of";
        case Relation::right_of: return "right of";
        case Relation::above: return "above";
        case Relation::below: return "below";
    }
    return "?";
}

bool Descriptor::matches(const SceneObject& o) const {
    if (shape && *shape != o.shape) return false;
    if (color && *color != o.color) return false;
    if (size && *size != o.size) return false;
    return true;
}

std::vector<std::string> Descriptor::words() const {
    std::vector<std::string> w;
    if (size) w.emplace_back(to_string(*size));
    if (color) w.emplace_back(to_string(*color));
    if (shape) w.emplace_back(to_string(*shape));
    return w;
}

namespace vocab {

const std::vector<std::string>& words() {
    static const std::vector<std::string> kWords = {
        "[CLS]", "[SEP]", "[PAD]", "the",   "that",    "is",   "of",
        "left",  "right", "above", "below", "small",   "large", "square",
        "circle", "triangle", "red", "green", "blue",  "yellow", "magenta", "cyan"};
    return kWords;
}

int size() { return static_cast<int>(words().size()); }

int id(const std::string& word) {
    const auto& w = words();
    for (int i = 0; i < static_cast<int>(w.size()); ++i) {
        if (w[i] == word) return i;
    }
    throw GenerationError("unknown vocabulary word: " + word);
}

}  // namespace vocab

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    return splitmix64(seed ^ splitmix64(stream));
}

BoundingBox rasterized_extent(const SceneObject& obj, int grid_size, int image_px) {
    const int cell = image_px / grid_size;
    int xmin = image_px, ymin = image_px, xmax = -1, ymax = -1;
    const int cx0 = obj.col * cell, cy0 = obj.row * cell;
    for (int y = cy0; y < cy0 + cell; ++y) {
        for (int x = cx0; x < cx0 + cell; ++x) {
            if (covers(obj, grid_size, image_px, x, y)) {
                xmin = std::min(xmin, x);
                ymin = std::min(ymin, y);
                xmax = std::max(xmax, x);
                ymax = std::max(ymax, y);
            }
        }
    }
    if (xmax < 0) throw GenerationError("object rasterized to zero pixels");
    return {static_cast<double>(xmin), static_cast<double>(ymin),
            static_cast<double>(xmax + 1), static_cast<double>(ymax + 1)};
}

SceneSpec generate_scene(std::uint64_t seed, int grid_size, int n_objects, int image_px) {
    if (image_px == 0) image_px = grid_size * 8;
    if (grid_size < 1 || image_px % grid_size != 0) {
        throw GenerationError("image_px must be a positive multiple of grid_size");
    }
    if (n_objects < 2) throw GenerationError("scenes need at least 2 objects");
    if (n_objects > grid_size * grid_size) {
        throw GenerationError("n_objects exceeds grid capacity");
    }
    std::mt19937_64 rng(splitmix64(seed));
    std::vector<int> cells(static_cast<std::size_t>(grid_size) * grid_size);
    std::iota(cells.begin(), cells.end(), 0);
    // partial Fisher-Yates: first n_objects entries are a uniform sample
    for (int i = 0; i < n_objects; ++i) {
        std::uniform_int_distribution<int> pick(i, static_cast<int>(cells.size()) - 1);
        std::swap(cells[i], cells[pick(rng)]);
    }
    SceneSpec scene;
    scene.grid_size = grid_size;
    scene.image_px = image_px;
    scene.seed = seed;
    std::uniform_int_distribution<int> shape_d(0, 2), color_d(0, 5), size_d(0, 1);
    for (int i = 0; i < n_objects; ++i) {
        SceneObject obj;
        obj.row = cells[i] / grid_size;
        obj.col = cells[i] % grid_size;
        obj.shape = static_cast<Shape>(shape_d(rng));
        obj.color = static_cast<Color>(color_d(rng));
        obj.size = static_cast<ObjSize>(size_d(rng));
        obj.pixel_box = rasterized_extent(obj, grid_size, image_px);
        scene.objects.push_back(obj);
    }
    return scene;
}

std::vector<int> satisfying_objects(const SceneSpec& scene, const ExpressionSpec& expr) {
    std::vector<int> out;
    for (int i = 0; i < static_cast<int>(scene.objects.size()); ++i) {
        if (sat_from(scene, expr, 0, i)) out.push_back(i);
    }
    return out;
}

ExpressionResult generate_expression(const SceneSpec& scene, int target_index, int hops,
                                     std::uint64_t seed) {
    if (hops < 1 || hops > 3) throw GenerationError("hops must be in [1,3]");
    if (target_index < 0 || target_index >= static_cast<int>(scene.objects.size())) {
        throw GenerationError("target_index out of range");
    }
    std::mt19937_64 rng(splitmix64(seed ^ 0xa5a5a5a5a5a5a5a5ull));
    const SceneObject& target = scene.objects[target_index];
    const int n = static_cast<int>(scene.objects.size());

    auto descriptor_for = [](const SceneObject& o, int kind) {
        Descriptor d;
        d.shape = o.shape;
        if (kind >= 1) d.color = o.color;
        if (kind >= 2) d.size = o.size;
        return d;
    };

    for (int attempt = 0; attempt < 100; ++attempt) {
        ExpressionSpec spec;
        if (hops == 1) {
            std::uniform_int_distribution<int> kind_d(0, 2);
            spec.descriptors.push_back(descriptor_for(target, kind_d(rng)));
        } else {
            std::uniform_int_distribution<int> rel_d(0, 3);
            std::uniform_int_distribution<int> coin(0, 1);
            // target named by shape alone (or shape+color), so the relation
            // is what disambiguates it
            spec.descriptors.push_back(descriptor_for(target, coin(rng) == 0 ? 0 : 1));
            const SceneObject* prev = &target;
            int prev_idx = target_index;
            bool ok = true;
            for (int h = 1; h < hops; ++h) {
                const Relation rel = static_cast<Relation>(rel_d(rng));
                std::vector<int> anchors;
                for (int j = 0; j < n; ++j) {
                    if (j != prev_idx && relation_holds(rel, *prev, scene.objects[j])) {
                        anchors.push_back(j);
                    }
                }
                if (anchors.empty()) {
                    ok = false;
                    break;
                }
                std::uniform_int_distribution<int> pick(0, static_cast<int>(anchors.size()) - 1);
                const int j = anchors[pick(rng)];
                spec.relations.push_back(rel);
                const bool last = (h == hops - 1);
                const int kind = last ? (coin(rng) == 0 ? 1 : 2) : 0;
                spec.descriptors.push_back(descriptor_for(scene.objects[j], kind));
                prev = &scene.objects[j];
                prev_idx = j;
            }
            if (!ok) continue;
        }
        const std::vector<int> sat = satisfying_objects(scene, spec);
        if (sat.size() == 1 && sat[0] == target_index) {
            ExpressionResult res;
            res.spec = spec;
            res.hop_count = hops;
            res.words.emplace_back("the");
            for (const std::string& w : spec.descriptors[0].words()) res.words.push_back(w);
            for (std::size_t h = 0; h < spec.relations.size(); ++h) {
                if (h > 0) {
                    res.words.emplace_back("that");
                    res.words.emplace_back("is");
                }
                for (const std::string& w : relation_words(spec.relations[h])) {
                    res.words.push_back(w);
                }
                res.words.emplace_back("the");
                for (const std::string& w : spec.descriptors[h + 1].words()) {
                    res.words.push_back(w);
                }
            }
            return res;
        }
    }
    throw NoUniqueReferentError("no unambiguous expression found in 100 attempts");
}

Tensor render(const SceneSpec& scene, int image_px) {
    if (image_px % scene.grid_size != 0) {
        throw GenerationError("image_px must be divisible by grid_size");
    }
    Tensor img({static_cast<std::size_t>(image_px) * image_px, 3}, kBackground);
    const int cell = image_px / scene.grid_size;
    for (const SceneObject& obj : scene.objects) {
        const auto& rgb = kColorRgb[static_cast<int>(obj.color)];
        const int x0 = obj.col * cell, y0 = obj.row * cell;
        for (int y = y0; y < y0 + cell; ++y) {
            for (int x = x0; x < x0 + cell; ++x) {
                if (covers(obj, scene.grid_size, image_px, x, y)) {
                    const std::size_t p = static_cast<std::size_t>(y) * image_px + x;
                    img.at(p, 0) = rgb[0];
                    img.at(p, 1) = rgb[1];
                    img.at(p, 2) = rgb[2];
                }
            }
        }
    }
    return img;
}

std::vector<int> tokenize(const std::vector<std::string>& words, int n_max,
                          std::vector<std::string>* padded_text) {
    if (static_cast<int>(words.size()) + 2 > n_max) {
        throw GenerationError("expression exceeds token budget");
    }
    std::vector<int> ids;
    ids.reserve(n_max);
    ids.push_back(vocab::kCls);
    for (const std::string& w : words) ids.push_back(vocab::id(w));
    ids.push_back(vocab::kSep);
    while (static_cast<int>(ids.size()) < n_max) ids.push_back(vocab::kPad);
    if (padded_text != nullptr) {
        padded_text->clear();
        for (int id : ids) padded_text->push_back(vocab::words()[id]);
    }
    return ids;
}

GroundingInstance generate_instance(std::uint64_t seed, int hops, const GenConfig& cfg) {
    for (std::uint64_t attempt = 0; attempt < 1000; ++attempt) {
        const std::uint64_t scene_seed = mix_seed(seed, attempt * 3);
        const int span = cfg.n_objects_max - cfg.n_objects_min + 1;
        const int n_objects =
            cfg.n_objects_min + static_cast<int>(mix_seed(seed, attempt * 3 + 1) % span);
        SceneSpec scene = generate_scene(scene_seed, cfg.grid_size, n_objects, cfg.image_px);
        const int target =
            static_cast<int>(mix_seed(seed, attempt * 3 + 2) % scene.objects.size());
        try {
            ExpressionResult expr =
                generate_expression(scene, target, hops, mix_seed(seed, attempt * 3 + 2));
            GroundingInstance inst;
            inst.scene = std::move(scene);
            inst.target_index = target;
            inst.expr = expr.spec;
            inst.hop_count = expr.hop_count;
            inst.seed = seed;
            for (std::size_t i = 0; i < expr.words.size(); ++i) {
                if (i > 0) inst.expression_text += ' ';
                inst.expression_text += expr.words[i];
            }
            inst.token_ids = tokenize(expr.words, cfg.n_max, &inst.token_text);
            inst.gt_box = inst.scene.objects[target].pixel_box;
            return inst;
        } catch (const NoUniqueReferentError&) {
            continue;
        }
    }
    throw GenerationError("failed to generate an unambiguous instance");
}

}  // namespace dmrn::synth
