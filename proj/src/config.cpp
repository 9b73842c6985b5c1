#include "dmrn/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dmrn::cfgio {

using nlohmann::json;

std::map<std::string, std::string> parse_kv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_kv_text(ss.str());
}

static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::map<std::string, std::string> parse_kv_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error("config: line " + std::to_string(lineno) +
                                     " is not key=value");
        }
        const std::string key = trim(t.substr(0, eq));
        const std::string val = trim(t.substr(eq + 1));
        if (key.empty()) {
            throw std::runtime_error("config: empty key on line " + std::to_string(lineno));
        }
        kv[key] = val;
    }
    return kv;
}

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& val);

template <>
double parse_number<double>(const std::string& key, const std::string& val) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(val, &pos);
    } catch (const std::exception&) {
        throw std::runtime_error("config: bad number for " + key + ": '" + val + "'");
    }
    if (pos != val.size()) {
        throw std::runtime_error("config: bad number for " + key + ": '" + val + "'");
    }
    return v;
}

template <>
std::size_t parse_number<std::size_t>(const std::string& key, const std::string& val) {
    const double v = parse_number<double>(key, val);
    if (v < 0 || v != static_cast<double>(static_cast<std::size_t>(v))) {
        throw std::runtime_error("config: expected non-negative integer for " + key);
    }
    return static_cast<std::size_t>(v);
}

template <>
int parse_number<int>(const std::string& key, const std::string& val) {
    const double v = parse_number<double>(key, val);
    if (v != static_cast<double>(static_cast<int>(v))) {
        throw std::runtime_error("config: expected integer for " + key);
    }
    return static_cast<int>(v);
}

bool parse_bool(const std::string& key, const std::string& val) {
    if (val == "true" || val == "1") return true;
    if (val == "false" || val == "0") return false;
    throw std::runtime_error("config: expected true/false for " + key);
}

}  // namespace

void apply(Settings& s, const std::map<std::string, std::string>& kv) {
    for (const auto& [key, val] : kv) {
        if (key == "model.feature_dim") s.model.feature_dim = parse_number<std::size_t>(key, val);
        else if (key == "model.n_max") s.model.n_max = parse_number<std::size_t>(key, val);
        else if (key == "model.image_px") s.model.image_px = parse_number<std::size_t>(key, val);
        else if (key == "model.fusion_layers") s.model.fusion_layers = parse_number<std::size_t>(key, val);
        else if (key == "model.fusion_heads") s.model.fusion_heads = parse_number<std::size_t>(key, val);
        else if (key == "model.fusion_ff_dim") s.model.fusion_ff_dim = parse_number<std::size_t>(key, val);
        else if (key == "model.attn_hidden") s.model.attn_hidden = parse_number<std::size_t>(key, val);
        else if (key == "model.policy_hidden") s.model.policy_hidden = parse_number<std::size_t>(key, val);
        else if (key == "model.anchors_per_cell") s.model.anchors_per_cell = parse_number<std::size_t>(key, val);
        else if (key == "model.encoder_norm") s.model.encoder_norm = parse_bool(key, val);
        else if (key == "train.epochs") s.train.epochs = parse_number<std::size_t>(key, val);
        else if (key == "train.batch_size") s.train.batch_size = parse_number<std::size_t>(key, val);
        else if (key == "train.lr") s.train.lr = parse_number<double>(key, val);
        else if (key == "train.lr_halve_every") s.train.lr_halve_every = parse_number<std::size_t>(key, val);
        else if (key == "train.t_max") s.train.t_max = parse_number<std::size_t>(key, val);
        else if (key == "train.gamma") s.train.gamma = parse_number<double>(key, val);
        else if (key == "train.lambda_box") s.train.lambda_box = parse_number<double>(key, val);
        else if (key == "train.lambda_policy") s.train.lambda_policy = parse_number<double>(key, val);
        else if (key == "train.grad_clip") s.train.grad_clip = parse_number<double>(key, val);
        else if (key == "train.seed") s.train.seed = parse_number<std::size_t>(key, val);
        else if (key == "train.use_ultimate") s.train.use_ultimate = parse_bool(key, val);
        else if (key == "train.use_immediate") s.train.use_immediate = parse_bool(key, val);
        else if (key == "train.box_loss_all_steps") s.train.box_loss_all_steps = parse_bool(key, val);
        else if (key == "train.policy_self_labels") s.train.policy_self_labels = parse_bool(key, val);
        else if (key == "train.detach_policy_inputs") s.train.detach_policy_inputs = parse_bool(key, val);
        else if (key == "gen.grid_size") s.gen.grid_size = parse_number<int>(key, val);
        else if (key == "gen.image_px") s.gen.image_px = parse_number<int>(key, val);
        else if (key == "gen.n_objects_min") s.gen.n_objects_min = parse_number<int>(key, val);
        else if (key == "gen.n_objects_max") s.gen.n_objects_max = parse_number<int>(key, val);
        else if (key == "gen.n_max") s.gen.n_max = parse_number<int>(key, val);
        else if (key == "data.train_instances") s.train_instances = parse_number<std::size_t>(key, val);
        else if (key == "data.eval_instances") s.eval_instances = parse_number<std::size_t>(key, val);
        else throw std::runtime_error("config: unknown key '" + key + "'");
    }
}

json to_json(const ModelConfig& c) {
    return json{{"feature_dim", c.feature_dim},
                {"n_max", c.n_max},
                {"image_px", c.image_px},
                {"fusion_layers", c.fusion_layers},
                {"fusion_heads", c.fusion_heads},
                {"fusion_ff_dim", c.fusion_ff_dim},
                {"attn_hidden", c.attn_hidden},
                {"policy_hidden", c.policy_hidden},
                {"anchors_per_cell", c.anchors_per_cell},
                {"encoder_norm", c.encoder_norm}};
}

ModelConfig model_from_json(const json& j) {
    ModelConfig c;
    c.feature_dim = j.at("feature_dim").get<std::size_t>();
    c.n_max = j.at("n_max").get<std::size_t>();
    c.image_px = j.at("image_px").get<std::size_t>();
    c.fusion_layers = j.at("fusion_layers").get<std::size_t>();
    c.fusion_heads = j.at("fusion_heads").get<std::size_t>();
    c.fusion_ff_dim = j.at("fusion_ff_dim").get<std::size_t>();
    c.attn_hidden = j.at("attn_hidden").get<std::size_t>();
    c.policy_hidden = j.at("policy_hidden").get<std::size_t>();
    c.anchors_per_cell = j.at("anchors_per_cell").get<std::size_t>();
    c.encoder_norm = j.at("encoder_norm").get<bool>();
    return c;
}

json to_json(const TrainConfig& c) {
    return json{{"epochs", c.epochs},
                {"batch_size", c.batch_size},
                {"lr", c.lr},
                {"lr_halve_every", c.lr_halve_every},
                {"t_max", c.t_max},
                {"gamma", c.gamma},
                {"lambda_box", c.lambda_box},
                {"lambda_policy", c.lambda_policy},
                {"grad_clip", c.grad_clip},
                {"seed", c.seed},
                {"use_ultimate", c.use_ultimate},
                {"use_immediate", c.use_immediate},
                {"box_loss_all_steps", c.box_loss_all_steps},
                {"policy_self_labels", c.policy_self_labels},
                {"detach_policy_inputs", c.detach_policy_inputs}};
}

TrainConfig train_from_json(const json& j) {
    TrainConfig c;
    c.epochs = j.at("epochs").get<std::size_t>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.lr = j.at("lr").get<double>();
    c.lr_halve_every = j.at("lr_halve_every").get<std::size_t>();
    c.t_max = j.at("t_max").get<std::size_t>();
    c.gamma = j.at("gamma").get<double>();
    c.lambda_box = j.at("lambda_box").get<double>();
    c.lambda_policy = j.at("lambda_policy").get<double>();
    c.grad_clip = j.at("grad_clip").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.use_ultimate = j.at("use_ultimate").get<bool>();
    c.use_immediate = j.at("use_immediate").get<bool>();
    c.box_loss_all_steps = j.at("box_loss_all_steps").get<bool>();
    c.policy_self_labels = j.at("policy_self_labels").get<bool>();
    c.detach_policy_inputs = j.at("detach_policy_inputs").get<bool>();
    return c;
}

json to_json(const synth::GenConfig& c) {
    return json{{"grid_size", c.grid_size},
                {"image_px", c.image_px},
                {"n_objects_min", c.n_objects_min},
                {"n_objects_max", c.n_objects_max},
                {"n_max", c.n_max}};
}

synth::GenConfig gen_from_json(const json& j) {
    synth::GenConfig c;
    c.grid_size = j.at("grid_size").get<int>();
    c.image_px = j.at("image_px").get<int>();
    c.n_objects_min = j.at("n_objects_min").get<int>();
    c.n_objects_max = j.at("n_objects_max").get<int>();
    c.n_max = j.at("n_max").get<int>();
    return c;
}

}  // namespace dmrn::cfgio
