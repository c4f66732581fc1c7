#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mcsfqf/agent.hpp"
#include "mcsfqf/common.hpp"
#include "mcsfqf/config.hpp"

namespace mcsfqf {

// Portable tensor container: magic "MCSFQF01", then a u32 tensor count and
// the u64 total file byte length, a tensor table (length-prefixed UTF-8
// name, u32 rank, u32 dims, f32 little-endian row-major values), and a
// trailing key-value section for run metadata. Values are stored as f32.
struct Checkpoint {
    std::vector<std::pair<std::string, Mat>> tensors;
    std::vector<std::pair<std::string, std::string>> kv;

    const Mat* find(const std::string& name) const;
    std::string meta(const std::string& key) const;  // throws if missing
    bool has_meta(const std::string& key) const;
};

void checkpoint_save(const std::string& path, const Checkpoint& ck);
Checkpoint checkpoint_load(const std::string& path);

// Trainer state <-> checkpoint. The replay buffer contents are not part of
// the format; resuming restarts collection with the persisted counters.
Checkpoint checkpoint_from_trainer(const Trainer& t, const RunConfig& cfg);
Trainer trainer_from_checkpoint(const Checkpoint& ck, RunConfig& cfg_out);

}  // namespace mcsfqf
