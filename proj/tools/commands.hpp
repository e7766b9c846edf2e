#pragma once

#include <cstdint>
#include <string>

namespace herdgate::cli {

inline constexpr const char* kToolVersion = "0.1.0";

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    int threads = 0;  // 0 = all available cores
};

int cmd_generate(const CommonArgs& args);
int cmd_train(const CommonArgs& args);
int cmd_tune(const CommonArgs& args);
int cmd_eval(const CommonArgs& args);
int cmd_importance(const CommonArgs& args);
int cmd_practices(const CommonArgs& args);
int cmd_simulate(const CommonArgs& args);
int cmd_fit(const CommonArgs& args);
int cmd_sweep(const CommonArgs& args);

} // namespace herdgate::cli
