#pragma once

// JSONL persistence for grounding instances and dataset assembly. Pixel
// boxes are recomputed from object attributes on load, so files stay small
// and rasterization remains the single source of truth.

#include <cstdint>
#include <string>
#include <vector>

#include "dmrn/synth_env.hpp"

namespace dmrn::dataio {

void save_jsonl(const std::string& path, const std::vector<synth::GroundingInstance>& data);
std::vector<synth::GroundingInstance> load_jsonl(const std::string& path);

// count instances with hop counts cycling 1..max_hops, generated from
// per-index derived seeds.
std::vector<synth::GroundingInstance> make_dataset(std::uint64_t seed, std::size_t count,
                                                   const synth::GenConfig& cfg,
                                                   int max_hops = 3);

}  // namespace dmrn::dataio
