#include "dmrn/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "dmrn/config.hpp"

namespace dmrn {

namespace {

constexpr char kMagic[4] = {'D', 'M', 'R', 'N'};
constexpr std::uint8_t kDtypeF64 = 0;

template <typename T>
void write_pod(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw CheckpointError("checkpoint: truncated file");
    return v;
}

void write_string(std::ostream& out, const std::string& s) {
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
    const auto len = read_pod<std::uint32_t>(in);
    std::string s(len, '\0');
    in.read(s.data(), len);
    if (!in) throw CheckpointError("checkpoint: truncated file");
    return s;
}

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : tensors) {
        if (n == name) return &t;
    }
    return nullptr;
}

void save_checkpoint(const std::string& path, const Checkpoint& c) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("checkpoint: cannot open " + path + " for writing");
    out.write(kMagic, sizeof(kMagic));
    write_pod<std::uint32_t>(out, c.format_version);
    write_string(out, c.header.dump());
    write_pod<std::uint64_t>(out, c.tensors.size());
    for (const auto& [name, t] : c.tensors) {
        write_string(out, name);
        write_pod<std::uint8_t>(out, kDtypeF64);
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape) write_pod<std::uint64_t>(out, d);
        out.write(reinterpret_cast<const char*>(t.data.data()),
                  static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    if (!out) throw CheckpointError("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("checkpoint: cannot open " + path);
    char magic[4];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw CheckpointError("checkpoint: bad magic in " + path);
    }
    Checkpoint c;
    c.format_version = read_pod<std::uint32_t>(in);
    if (c.format_version != kCheckpointVersion) {
        throw CheckpointError("checkpoint: unsupported format version " +
                              std::to_string(c.format_version));
    }
    const std::string header = read_string(in);
    c.header = nlohmann::json::parse(header, nullptr, false);
    if (c.header.is_discarded()) throw CheckpointError("checkpoint: malformed header JSON");
    const auto count = read_pod<std::uint64_t>(in);
    c.tensors.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::string name = read_string(in);
        const auto dtype = read_pod<std::uint8_t>(in);
        if (dtype != kDtypeF64) throw CheckpointError("checkpoint: unknown dtype tag");
        const auto rank = read_pod<std::uint32_t>(in);
        std::vector<std::size_t> shape(rank);
        for (auto& d : shape) d = static_cast<std::size_t>(read_pod<std::uint64_t>(in));
        Tensor t(shape);
        in.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.size() * sizeof(double)));
        if (!in) throw CheckpointError("checkpoint: truncated tensor payload");
        c.tensors.emplace_back(name, std::move(t));
    }
    return c;
}

Checkpoint snapshot(const Model& model, const RMSProp* opt, const TrainConfig& train_cfg,
                    std::size_t epoch) {
    Checkpoint c;
    c.header = nlohmann::json{{"model", cfgio::to_json(model.config())},
                              {"train", cfgio::to_json(train_cfg)},
                              {"epoch", epoch},
                              {"rng", {{"seed", train_cfg.seed}}}};
    const auto& params = model.params().all();
    for (const auto* p : params) c.tensors.emplace_back(p->name, p->value);
    if (opt) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            c.tensors.emplace_back("opt/" + params[i]->name, opt->caches()[i]);
        }
    }
    return c;
}

void restore(Model& model, RMSProp* opt, const Checkpoint& c) {
    auto& params = model.params().all();
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = *params[i];
        const Tensor* t = c.find(p.name);
        if (!t) throw CheckpointError("checkpoint: missing tensor " + p.name);
        if (t->shape != p.value.shape) {
            throw CheckpointError("checkpoint: shape mismatch for " + p.name);
        }
        p.value = *t;
        p.zero_grad();
        if (opt) {
            const Tensor* cache = c.find("opt/" + p.name);
            if (!cache) throw CheckpointError("checkpoint: missing optimizer state for " + p.name);
            if (cache->shape != p.value.shape) {
                throw CheckpointError("checkpoint: optimizer shape mismatch for " + p.name);
            }
            opt->caches()[i] = *cache;
        }
    }
}

}  // namespace dmrn
