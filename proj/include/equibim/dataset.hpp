#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "equibim/sim.hpp"

namespace equibim {

struct DatasetManifest {
    int format_version = 1;
    std::string task;
    std::string modality;     // image | pointcloud
    std::string action_mode;  // joint | ee
    std::string side;         // left | right | both
    int history = 2;          // m
    int horizon = 8;          // n
    int obs_dim = 0;          // per-frame feature length
    int step_dim = 0;
    int act_dim = 0;          // horizon * step_dim
    int image_w = 0, image_h = 0, image_c = 0;
    int cloud_points = 0;
    int joints_per_arm = 0;
    int count = 0;
    uint64_t seed = 0;
    uint64_t cloud_seed = 0;

    FeaturizeConfig featurize_config() const;
    TaskSpec task_spec() const;
};

// One recorded episode: per-step observation features and flattened expert
// chunks, exactly what ep_<index>.bin stores.
struct EpisodeRecord {
    uint64_t seed = 0;
    std::vector<std::vector<float>> obs;      // T x obs_dim
    std::vector<std::vector<float>> actions;  // T x act_dim
    bool success = false;
};

struct Dataset {
    DatasetManifest manifest;
    std::vector<EpisodeRecord> episodes;
};

// Episode file: magic "EQB1"; u32le T, obs_len, act_len; T*obs_len f32le;
// T*act_len f32le; one success byte. No padding.
void write_episode(const std::string& path, const EpisodeRecord& ep);
EpisodeRecord read_episode(const std::string& path);

void write_manifest(const std::string& path, const DatasetManifest& m);
DatasetManifest read_manifest(const std::string& path);

Dataset load_dataset(const std::string& dir);

// Rolls out the scripted expert, keeping successful episodes only (seeds are
// resampled up to 5x count attempts). Writes manifest.json + ep_<i>.bin.
DatasetManifest generate_demos(const Simulator& sim, const TaskSpec& task, int count,
                               uint64_t seed, ObsModality modality, ActionMode action_mode,
                               const std::string& out_dir);

}  // namespace equibim
