#pragma once

// Checkpoint container: "DMRN" magic, u32 format version, length-prefixed
// JSON header (config snapshot, epoch, rng seed), then named tensor blocks
// (name, dtype tag, shape, little-endian float64 payload). Optimizer caches
// are stored under "opt/<param-name>".

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "dmrn/model.hpp"
#include "dmrn/training.hpp"

namespace dmrn {

constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    std::uint32_t format_version = kCheckpointVersion;
    nlohmann::json header;
    std::vector<std::pair<std::string, Tensor>> tensors;

    const Tensor* find(const std::string& name) const;
};

class CheckpointError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

void save_checkpoint(const std::string& path, const Checkpoint& c);
// Throws CheckpointError on bad magic, unsupported version, or truncation.
Checkpoint load_checkpoint(const std::string& path);

// opt may be null when no optimizer state should be stored.
Checkpoint snapshot(const Model& model, const RMSProp* opt, const TrainConfig& train_cfg,
                    std::size_t epoch);

// Restores parameters (and optimizer caches when opt is non-null) by name.
// Throws CheckpointError on missing names or shape mismatches.
void restore(Model& model, RMSProp* opt, const Checkpoint& c);

}  // namespace dmrn
