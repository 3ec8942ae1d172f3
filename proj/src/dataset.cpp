#include "equibim/dataset.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "equibim/rng.hpp"

namespace equibim {

namespace {

void put_u32(std::string& out, uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                 static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.append(b, 4);
}

void put_f32(std::string& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

uint32_t get_u32(const std::string& s, size_t& at) {
    if (at + 4 > s.size()) throw Error("episode file truncated");
    uint32_t v = (static_cast<uint32_t>(static_cast<unsigned char>(s[at])) |
                  static_cast<uint32_t>(static_cast<unsigned char>(s[at + 1])) << 8 |
                  static_cast<uint32_t>(static_cast<unsigned char>(s[at + 2])) << 16 |
                  static_cast<uint32_t>(static_cast<unsigned char>(s[at + 3])) << 24);
    at += 4;
    return v;
}

float get_f32(const std::string& s, size_t& at) {
    uint32_t bits = get_u32(s, at);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open file: " + path);
    std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return s;
}

void spit(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write file: " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("short write: " + path);
}

}  // namespace

FeaturizeConfig DatasetManifest::featurize_config() const {
    FeaturizeConfig f;
    f.modality = obs_modality_from_string(modality);
    f.action_mode = action_mode_from_string(action_mode);
    f.image_w = image_w;
    f.image_h = image_h;
    f.image_c = image_c;
    f.cloud_points = cloud_points;
    f.joints_per_arm = joints_per_arm;
    f.history = history;
    f.horizon = horizon;
    return f;
}

TaskSpec DatasetManifest::task_spec() const {
    return make_task(task_from_string(task), side_from_string(side));
}

void write_episode(const std::string& path, const EpisodeRecord& ep) {
    std::string out;
    uint32_t T = static_cast<uint32_t>(ep.obs.size());
    uint32_t obs_len = T ? static_cast<uint32_t>(ep.obs[0].size()) : 0;
    uint32_t act_len = T ? static_cast<uint32_t>(ep.actions[0].size()) : 0;
    if (ep.actions.size() != T) throw Error("episode obs/action lengths differ");
    out.reserve(16 + static_cast<size_t>(T) * (obs_len + act_len) * 4 + 1);
    out += "EQB1";
    put_u32(out, T);
    put_u32(out, obs_len);
    put_u32(out, act_len);
    for (const auto& row : ep.obs) {
        if (row.size() != obs_len) throw Error("ragged observation rows");
        for (float v : row) put_f32(out, v);
    }
    for (const auto& row : ep.actions) {
        if (row.size() != act_len) throw Error("ragged action rows");
        for (float v : row) put_f32(out, v);
    }
    out.push_back(ep.success ? 1 : 0);
    spit(path, out);
}

EpisodeRecord read_episode(const std::string& path) {
    std::string s = slurp(path);
    if (s.size() < 17 || s.compare(0, 4, "EQB1") != 0)
        throw Error("not an episode file (bad magic): " + path);
    size_t at = 4;
    uint32_t T = get_u32(s, at);
    uint32_t obs_len = get_u32(s, at);
    uint32_t act_len = get_u32(s, at);
    EpisodeRecord ep;
    ep.obs.resize(T);
    ep.actions.resize(T);
    for (uint32_t t = 0; t < T; ++t) {
        ep.obs[t].resize(obs_len);
        for (uint32_t i = 0; i < obs_len; ++i) ep.obs[t][i] = get_f32(s, at);
    }
    for (uint32_t t = 0; t < T; ++t) {
        ep.actions[t].resize(act_len);
        for (uint32_t i = 0; i < act_len; ++i) ep.actions[t][i] = get_f32(s, at);
    }
    if (at + 1 != s.size()) throw Error("trailing bytes in episode file: " + path);
    ep.success = s[at] != 0;
    return ep;
}

void write_manifest(const std::string& path, const DatasetManifest& m) {
    nlohmann::json j;
    j["format_version"] = m.format_version;
    j["task"] = m.task;
    j["modality"] = m.modality;
    j["action_mode"] = m.action_mode;
    j["side"] = m.side;
    j["history"] = m.history;
    j["horizon"] = m.horizon;
    j["obs_dim"] = m.obs_dim;
    j["step_dim"] = m.step_dim;
    j["act_dim"] = m.act_dim;
    j["image_w"] = m.image_w;
    j["image_h"] = m.image_h;
    j["image_c"] = m.image_c;
    j["cloud_points"] = m.cloud_points;
    j["joints_per_arm"] = m.joints_per_arm;
    j["count"] = m.count;
    j["seed"] = m.seed;
    j["cloud_seed"] = m.cloud_seed;
    spit(path, j.dump(2) + "\n");
}

DatasetManifest read_manifest(const std::string& path) {
    nlohmann::json j = nlohmann::json::parse(slurp(path));
    DatasetManifest m;
    m.format_version = j.at("format_version").get<int>();
    if (m.format_version != 1) throw Error("unsupported dataset format version");
    m.task = j.at("task").get<std::string>();
    m.modality = j.at("modality").get<std::string>();
    m.action_mode = j.at("action_mode").get<std::string>();
    m.side = j.at("side").get<std::string>();
    m.history = j.at("history").get<int>();
    m.horizon = j.at("horizon").get<int>();
    m.obs_dim = j.at("obs_dim").get<int>();
    m.step_dim = j.at("step_dim").get<int>();
    m.act_dim = j.at("act_dim").get<int>();
    m.image_w = j.at("image_w").get<int>();
    m.image_h = j.at("image_h").get<int>();
    m.image_c = j.at("image_c").get<int>();
    m.cloud_points = j.at("cloud_points").get<int>();
    m.joints_per_arm = j.at("joints_per_arm").get<int>();
    m.count = j.at("count").get<int>();
    m.seed = j.at("seed").get<uint64_t>();
    m.cloud_seed = j.at("cloud_seed").get<uint64_t>();
    return m;
}

Dataset load_dataset(const std::string& dir) {
    Dataset d;
    d.manifest = read_manifest(dir + "/manifest.json");
    d.episodes.reserve(d.manifest.count);
    for (int i = 0; i < d.manifest.count; ++i)
        d.episodes.push_back(read_episode(dir + "/ep_" + std::to_string(i) + ".bin"));
    return d;
}

DatasetManifest generate_demos(const Simulator& sim, const TaskSpec& task, int count,
                               uint64_t seed, ObsModality modality, ActionMode action_mode,
                               const std::string& out_dir) {
    if (count < 1) throw Error("demo count must be at least 1");
    std::filesystem::create_directories(out_dir);

    FeaturizeConfig fc = sim.featurize_config(modality, action_mode);
    ActionLayout layout = fc.action_layout();

    DatasetManifest m;
    m.task = to_string(task.id);
    m.modality = to_string(modality);
    m.action_mode = to_string(action_mode);
    m.side = to_string(task.side);
    m.history = fc.history;
    m.horizon = fc.horizon;
    m.obs_dim = fc.frame_dim();
    m.step_dim = layout.step_dim();
    m.act_dim = layout.flat_dim();
    m.image_w = fc.image_w;
    m.image_h = fc.image_h;
    m.image_c = fc.image_c;
    m.cloud_points = fc.cloud_points;
    m.joints_per_arm = fc.joints_per_arm;
    m.count = count;
    m.seed = seed;
    m.cloud_seed = sim.config().cloud_seed;

    int written = 0;
    const int max_attempts = 5 * count;
    for (int attempt = 0; attempt < max_attempts && written < count; ++attempt) {
        uint64_t ep_seed = mix_seed(seed, attempt);
        WorldState s = sim.reset(task, ep_seed);
        EpisodeRecord ep;
        ep.seed = ep_seed;
        bool done = false;
        for (int t = 0; t < task.episode_cap && !done; ++t) {
            Frame frame = sim.observe(s, modality, action_mode);
            ep.obs.push_back(frame_features(frame, fc));
            std::string phase;
            ActionChunk chunk = sim.scripted_expert(s, task, action_mode, fc.horizon, &phase);
            std::vector<double> enc = encode_chunk(chunk, layout);
            std::vector<float> row(enc.size());
            for (size_t i = 0; i < enc.size(); ++i) row[i] = static_cast<float>(enc[i]);
            ep.actions.push_back(std::move(row));
            ActionStep first = chunk.steps[0];
            s = sim.step(s, first, action_mode);
            s.phase = phase;
            done = sim.success(s, task);
        }
        if (!done) continue;  // resample
        ep.success = true;
        write_episode(out_dir + "/ep_" + std::to_string(written) + ".bin", ep);
        ++written;
    }
    if (written < count)
        throw Error("expert success rate collapsed: only " + std::to_string(written) + "/" +
                    std::to_string(count) + " demos within the attempt cap");
    write_manifest(out_dir + "/manifest.json", m);
    return m;
}

}  // namespace equibim
