#pragma once

#include <string>

#include "mcsfqf/config.hpp"

namespace mcsfqf {

// Exit codes: 0 success, 1 usage/config error, 2 check failure, 3 divergence.
constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitCheckFailed = 2;
constexpr int kExitDiverged = 3;

int cmd_train(const RunConfig& cfg);
int cmd_eval(const std::string& checkpoint_path, int episodes, std::uint64_t seed);
int cmd_verify(const RunConfig& cfg);

struct InspectOptions {
    std::string checkpoint_path;
    std::string traces_path = "traces.csv";
    std::string pop_raster_path;  // empty = skip
    int neurons = 128;
    int fraction = 0;
};
int cmd_inspect(const InspectOptions& opt);

}  // namespace mcsfqf
