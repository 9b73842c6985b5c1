#include "dmrn/dataset_io.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace dmrn::dataio {

using nlohmann::json;
using namespace synth;

namespace {

template <typename E>
E enum_from_string(const std::string& s, const std::vector<E>& values, const char* what) {
    for (E v : values) {
        if (s == to_string(v)) return v;
    }
    throw std::runtime_error(std::string("dataset: unknown ") + what + " '" + s + "'");
}

const std::vector<Shape> kShapes = {Shape::square, Shape::circle, Shape::triangle};
const std::vector<Color> kColors = {Color::red,    Color::green,   Color::blue,
                                    Color::yellow, Color::magenta, Color::cyan};
const std::vector<ObjSize> kSizes = {ObjSize::small, ObjSize::large};
const std::vector<Relation> kRelations = {Relation::left_of, Relation::right_of,
                                          Relation::above, Relation::below};

json descriptor_to_json(const Descriptor& d) {
    json j = json::object();
    if (d.shape) j["shape"] = to_string(*d.shape);
    if (d.color) j["color"] = to_string(*d.color);
    if (d.size) j["size"] = to_string(*d.size);
    return j;
}

Descriptor descriptor_from_json(const json& j) {
    Descriptor d;
    if (j.contains("shape")) d.shape = enum_from_string(j["shape"], kShapes, "shape");
    if (j.contains("color")) d.color = enum_from_string(j["color"], kColors, "color");
    if (j.contains("size")) d.size = enum_from_string(j["size"], kSizes, "size");
    return d;
}

json instance_to_json(const GroundingInstance& inst) {
    json objects = json::array();
    for (const auto& o : inst.scene.objects) {
        objects.push_back({{"shape", to_string(o.shape)},
                           {"color", to_string(o.color)},
                           {"size", to_string(o.size)},
                           {"row", o.row},
                           {"col", o.col}});
    }
    json descriptors = json::array();
    for (const auto& d : inst.expr.descriptors) descriptors.push_back(descriptor_to_json(d));
    json relations = json::array();
    for (Relation r : inst.expr.relations) relations.push_back(to_string(r));
    return json{{"seed", inst.seed},
                {"grid_size", inst.scene.grid_size},
                {"image_px", inst.scene.image_px},
                {"scene_seed", inst.scene.seed},
                {"objects", objects},
                {"target_index", inst.target_index},
                {"descriptors", descriptors},
                {"relations", relations},
                {"expression_text", inst.expression_text},
                {"token_ids", inst.token_ids},
                {"hop_count", inst.hop_count}};
}

GroundingInstance instance_from_json(const json& j) {
    GroundingInstance inst;
    inst.seed = j.at("seed").get<std::uint64_t>();
    inst.scene.grid_size = j.at("grid_size").get<int>();
    inst.scene.image_px = j.at("image_px").get<int>();
    inst.scene.seed = j.at("scene_seed").get<std::uint64_t>();
    for (const auto& jo : j.at("objects")) {
        SceneObject o;
        o.shape = enum_from_string<Shape>(jo.at("shape"), kShapes, "shape");
        o.color = enum_from_string<Color>(jo.at("color"), kColors, "color");
        o.size = enum_from_string<ObjSize>(jo.at("size"), kSizes, "size");
        o.row = jo.at("row").get<int>();
        o.col = jo.at("col").get<int>();
        o.pixel_box = rasterized_extent(o, inst.scene.grid_size, inst.scene.image_px);
        inst.scene.objects.push_back(o);
    }
    inst.target_index = j.at("target_index").get<int>();
    if (inst.target_index < 0 ||
        static_cast<std::size_t>(inst.target_index) >= inst.scene.objects.size()) {
        throw std::runtime_error("dataset: target_index out of range");
    }
    for (const auto& jd : j.at("descriptors")) {
        inst.expr.descriptors.push_back(descriptor_from_json(jd));
    }
    for (const auto& jr : j.at("relations")) {
        inst.expr.relations.push_back(enum_from_string<Relation>(jr, kRelations, "relation"));
    }
    inst.expression_text = j.at("expression_text").get<std::string>();
    inst.token_ids = j.at("token_ids").get<std::vector<int>>();
    inst.hop_count = j.at("hop_count").get<int>();
    inst.gt_box = inst.scene.objects[inst.target_index].pixel_box;
    for (int id : inst.token_ids) {
        if (id < 0 || id >= vocab::size()) {
            throw std::runtime_error("dataset: token id out of range");
        }
        inst.token_text.push_back(vocab::words()[static_cast<std::size_t>(id)]);
    }
    return inst;
}

}  // namespace

void save_jsonl(const std::string& path, const std::vector<GroundingInstance>& data) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("dataset: cannot open " + path + " for writing");
    for (const auto& inst : data) out << instance_to_json(inst).dump() << '\n';
    if (!out) throw std::runtime_error("dataset: write failed for " + path);
}

std::vector<GroundingInstance> load_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("dataset: cannot open " + path);
    std::vector<GroundingInstance> data;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            throw std::runtime_error("dataset: malformed JSON on line " + std::to_string(lineno));
        }
        data.push_back(instance_from_json(j));
    }
    return data;
}

std::vector<GroundingInstance> make_dataset(std::uint64_t seed, std::size_t count,
                                            const GenConfig& cfg, int max_hops) {
    if (max_hops < 1) throw std::invalid_argument("make_dataset: max_hops must be >= 1");
    std::vector<GroundingInstance> data;
    data.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const int hops = 1 + static_cast<int>(i % static_cast<std::size_t>(max_hops));
        data.push_back(generate_instance(mix_seed(seed, 0xDA7A0000ull + i), hops, cfg));
    }
    return data;
}

}  // namespace dmrn::dataio
