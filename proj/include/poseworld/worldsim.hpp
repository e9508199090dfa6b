#pragma once

// Synthetic camera-pose world: action semantics, ground-truth trajectory
// generation, and the labeled (optionally label-corrupted) dataset used for
// pretraining and evaluation.
//
// Fixed conventions, asserted by tests:
//   forward = (cos(pitch)sin(yaw), sin(pitch), cos(pitch)cos(yaw))
//   right   = (cos(yaw), 0, -sin(yaw)), left = -right
//   up      = (-sin(pitch)sin(yaw), cos(pitch), -sin(pitch)cos(yaw))
//   rotate-right decreases yaw; rotate-up increases pitch.
//   Translation within a step uses the pre-rotation orientation.
//   yaw wraps to (-pi, pi]; pitch clamps to [-pi/2, pi/2].

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "poseworld/io.hpp"
#include "poseworld/rng.hpp"

namespace poseworld {

inline constexpr double kPi = 3.14159265358979323846;

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(dot(*this)); }
};

// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
  double w = std::fmod(a + kPi, 2.0 * kPi);
  if (w <= 0.0) w += 2.0 * kPi;
  return w - kPi;
}

struct Pose {
  Vec3 position;
  double yaw = 0.0;    // radians, (-pi, pi]
  double pitch = 0.0;  // radians, [-pi/2, pi/2]
};

struct CameraBasis {
  Vec3 right, up, forward;
};

inline CameraBasis camera_basis(double yaw, double pitch) {
  const double cy = std::cos(yaw), sy = std::sin(yaw);
  const double cp = std::cos(pitch), sp = std::sin(pitch);
  return CameraBasis{
      {cy, 0.0, -sy},
      {-sp * sy, cp, -sp * cy},
      {cp * sy, sp, cp * cy},
  };
}

// ----------------------------------------------------------------------------
// Actions

// Bit layout doubles as the on-disk encoding.
enum ActionBit : std::uint8_t {
  kMoveForward = 1u << 0,
  kMoveBackward = 1u << 1,
  kMoveLeft = 1u << 2,
  kMoveRight = 1u << 3,
  kRotUp = 1u << 4,
  kRotDown = 1u << 5,
  kRotLeft = 1u << 6,
  kRotRight = 1u << 7,
};

struct ActionToken {
  std::uint8_t bits = 0;

  bool has(ActionBit b) const { return (bits & b) != 0; }
  bool empty() const { return bits == 0; }
  int count() const { return std::popcount(static_cast<unsigned>(bits)); }
  std::uint8_t translate_bits() const { return bits & 0x0f; }
  std::uint8_t rotate_bits() const { return bits & 0xf0; }

  // No opposing pair within the translate set or within the rotate set.
  bool valid() const {
    if (has(kMoveForward) && has(kMoveBackward)) return false;
    if (has(kMoveLeft) && has(kMoveRight)) return false;
    if (has(kRotUp) && has(kRotDown)) return false;
    if (has(kRotLeft) && has(kRotRight)) return false;
    return true;
  }

  bool operator==(const ActionToken&) const = default;

  // Multi-hot encoding, order: fwd, back, left, right, r-up, r-down, r-left, r-right.
  std::array<double, 8> multihot() const {
    std::array<double, 8> m{};
    for (int i = 0; i < 8; ++i) m[static_cast<std::size_t>(i)] = has(static_cast<ActionBit>(1u << i)) ? 1.0 : 0.0;
    return m;
  }

  std::string str() const {
    static constexpr const char* kNames[8] = {"fwd", "back", "left", "right",
                                              "rup", "rdown", "rleft", "rright"};
    if (empty()) return "noop";
    std::string s;
    for (int i = 0; i < 8; ++i) {
      if (has(static_cast<ActionBit>(1u << i))) {
        if (!s.empty()) s += '+';
        s += kNames[i];
      }
    }
    return s;
  }
};

inline const std::vector<ActionToken>& basic_tokens() {
  static const std::vector<ActionToken> toks = [] {
    std::vector<ActionToken> v;
    for (int i = 0; i < 8; ++i) v.push_back(ActionToken{static_cast<std::uint8_t>(1u << i)});
    return v;
  }();
  return toks;
}

// All valid 1- and 2-element tokens: 8 singles + 24 pairs = 32.
inline const std::vector<ActionToken>& combined_tokens() {
  static const std::vector<ActionToken> toks = [] {
    std::vector<ActionToken> v = basic_tokens();
    for (int i = 0; i < 8; ++i)
      for (int j = i + 1; j < 8; ++j) {
        ActionToken t{static_cast<std::uint8_t>((1u << i) | (1u << j))};
        if (t.valid()) v.push_back(t);
      }
    return v;
  }();
  return toks;
}

enum class ActionMode { kBasic, kCombined };

inline const std::vector<ActionToken>& token_space(ActionMode mode) {
  return mode == ActionMode::kBasic ? basic_tokens() : combined_tokens();
}

// ----------------------------------------------------------------------------
// Scene and clips

struct SceneContext {
  std::uint64_t scene_id = 0;
  Pose initial_pose;
  double step_scale = 0.02;  // world units per frame
  double rot_step = 2.0 * kPi / 180.0;  // radians per frame
};

// One generation chunk: F frames plus the pose they chain from (the final
// frame of the previous clip, or the scene's initial pose).
struct Clip {
  Pose start;
  std::vector<Pose> frames;
};

struct DatasetEntry {
  SceneContext scene;
  std::vector<ActionToken> labels;  // possibly corrupted
  std::vector<Clip> clips;          // always follow the true actions
  std::vector<std::uint8_t> corrupted;
};

struct Dataset {
  std::uint32_t frames_per_clip = 8;
  std::uint32_t clips_per_entry = 8;
  std::vector<DatasetEntry> entries;
};

// ----------------------------------------------------------------------------
// Operations

inline Pose apply_action(const Pose& pose, const ActionToken& action, const SceneContext& ctx) {
  if (!action.valid()) throw std::invalid_argument("invalid action token: " + action.str());
  Pose out = pose;
  const CameraBasis b = camera_basis(pose.yaw, pose.pitch);
  const double s = ctx.step_scale;
  if (action.has(kMoveForward)) out.position += b.forward * s;
  if (action.has(kMoveBackward)) out.position += b.forward * -s;
  if (action.has(kMoveLeft)) out.position += b.right * -s;
  if (action.has(kMoveRight)) out.position += b.right * s;
  const double r = ctx.rot_step;
  if (action.has(kRotLeft)) out.yaw += r;
  if (action.has(kRotRight)) out.yaw -= r;
  if (action.has(kRotUp)) out.pitch += r;
  if (action.has(kRotDown)) out.pitch -= r;
  out.yaw = wrap_angle(out.yaw);
  out.pitch = std::clamp(out.pitch, -kPi / 2.0, kPi / 2.0);
  return out;
}

struct JitterConfig {
  double sigma_rel = 0.1;  // positional noise std as a fraction of step_scale
};

// Chained clip generation: clip n applies actions[n] once per frame starting
// from the previous clip's final frame. Positional jitter, when enabled, is
// part of the state evolution (the next frame continues from the jittered one).
inline std::vector<Clip> gen_trajectory(const SceneContext& ctx,
                                        const std::vector<ActionToken>& actions, int frames,
                                        const JitterConfig& jitter, Rng& rng) {
  if (actions.empty()) throw std::invalid_argument("gen_trajectory: empty action sequence");
  if (frames < 1) throw std::invalid_argument("gen_trajectory: frames must be >= 1");
  const double sigma = jitter.sigma_rel * ctx.step_scale;
  std::vector<Clip> clips;
  clips.reserve(actions.size());
  Pose pose = ctx.initial_pose;
  for (const ActionToken& action : actions) {
    Clip clip;
    clip.start = pose;
    clip.frames.reserve(static_cast<std::size_t>(frames));
    for (int k = 0; k < frames; ++k) {
      pose = apply_action(pose, action, ctx);
      if (sigma > 0.0) {
        pose.position.x += sigma * rng.normal();
        pose.position.y += sigma * rng.normal();
        pose.position.z += sigma * rng.normal();
      }
      clip.frames.push_back(pose);
    }
    clips.push_back(std::move(clip));
  }
  return clips;
}

// Action sequence with persistence: consecutive tokens repeat with
// probability 1 - switch_prob.
inline std::vector<ActionToken> sample_action_sequence(ActionMode mode, int n, double switch_prob,
                                                       Rng& rng) {
  if (n < 1) throw std::invalid_argument("sample_action_sequence: n must be >= 1");
  const auto& space = token_space(mode);
  std::vector<ActionToken> seq;
  seq.reserve(static_cast<std::size_t>(n));
  seq.push_back(space[rng.below(space.size())]);
  for (int i = 1; i < n; ++i) {
    if (rng.uniform() < switch_prob) {
      seq.push_back(space[rng.below(space.size())]);
    } else {
      seq.push_back(seq.back());
    }
  }
  return seq;
}

struct WorldConfig {
  int entries = 256;
  int clips_per_entry = 8;
  int frames_per_clip = 8;
  ActionMode action_mode = ActionMode::kCombined;
  double switch_prob = 0.3;
  double corruption_rate = 0.0;
  double step_scale_min = 0.015;
  double step_scale_max = 0.035;
  double rot_step_min_deg = 0.75;
  double rot_step_max_deg = 1.5;
  JitterConfig jitter;
  double world_bound = 10.0;
  double init_pos_frac = 0.5;   // initial positions drawn in +-bound*frac
  double init_pitch_max = 0.3;  // radians
};

namespace detail {

// A trajectory is usable as ground truth only if it never clamps pitch and
// never leaves the world bounds; offending entries are regenerated whole
// (fresh pose and actions) rather than clipped, which keeps data on-manifold.
inline bool trajectory_in_bounds(const std::vector<Clip>& clips, double bound) {
  constexpr double kPitchMargin = 1e-9;
  for (const Clip& c : clips) {
    for (const Pose& p : c.frames) {
      if (std::abs(p.position.x) > bound || std::abs(p.position.y) > bound ||
          std::abs(p.position.z) > bound)
        return false;
      if (std::abs(p.pitch) >= kPi / 2.0 - kPitchMargin) return false;
    }
  }
  return true;
}

inline ActionToken different_token(const ActionToken& t, ActionMode mode, Rng& rng) {
  const auto& space = token_space(mode);
  for (;;) {
    const ActionToken cand = space[rng.below(space.size())];
    if (!(cand == t)) return cand;
  }
}

}  // namespace detail

// Per-entry streams are derived from (seed, entry index, attempt), so entries
// are independent and the dataset is reproducible under parallel construction.
inline Dataset make_dataset(const WorldConfig& cfg, std::uint64_t seed) {
  if (cfg.corruption_rate < 0.0 || cfg.corruption_rate >= 1.0)
    throw std::invalid_argument("corruption_rate must be in [0, 1)");
  Dataset ds;
  ds.frames_per_clip = static_cast<std::uint32_t>(cfg.frames_per_clip);
  ds.clips_per_entry = static_cast<std::uint32_t>(cfg.clips_per_entry);
  ds.entries.reserve(static_cast<std::size_t>(cfg.entries));
  const double deg = kPi / 180.0;
  for (int i = 0; i < cfg.entries; ++i) {
    DatasetEntry entry;
    bool ok = false;
    for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
      Rng rng = derive_rng(seed, "dataset.entry", static_cast<std::uint64_t>(i),
                           static_cast<std::uint64_t>(attempt));
      SceneContext scene;
      scene.scene_id = static_cast<std::uint64_t>(i);
      const double b0 = cfg.world_bound * cfg.init_pos_frac;
      scene.initial_pose.position = {rng.uniform(-b0, b0), rng.uniform(-b0, b0),
                                     rng.uniform(-b0, b0)};
      scene.initial_pose.yaw = wrap_angle(rng.uniform(-kPi, kPi));
      scene.initial_pose.pitch = rng.uniform(-cfg.init_pitch_max, cfg.init_pitch_max);
      scene.step_scale = rng.uniform(cfg.step_scale_min, cfg.step_scale_max);
      scene.rot_step = rng.uniform(cfg.rot_step_min_deg * deg, cfg.rot_step_max_deg * deg);

      std::vector<ActionToken> actions =
          sample_action_sequence(cfg.action_mode, cfg.clips_per_entry, cfg.switch_prob, rng);
      std::vector<Clip> clips =
          gen_trajectory(scene, actions, cfg.frames_per_clip, cfg.jitter, rng);
      if (!detail::trajectory_in_bounds(clips, cfg.world_bound)) continue;

      entry.scene = scene;
      entry.clips = std::move(clips);
      entry.labels = actions;
      entry.corrupted.assign(actions.size(), 0);
      for (std::size_t n = 0; n < actions.size(); ++n) {
        if (rng.uniform() < cfg.corruption_rate) {
          entry.labels[n] = detail::different_token(actions[n], cfg.action_mode, rng);
          entry.corrupted[n] = 1;
        }
      }
      ok = true;
    }
    if (!ok) throw std::runtime_error("make_dataset: could not place entry " + std::to_string(i));
    ds.entries.push_back(std::move(entry));
  }
  return ds;
}

// ----------------------------------------------------------------------------
// Serialization: "WCDS" binary, plus JSON-lines export for debugging.
//
// Layout (all little-endian):
//   magic "WCDS" | u32 version | u32 F | u32 N | u64 entry_count
//   per entry:
//     u64 scene_id | f64 pos.x,pos.y,pos.z,yaw,pitch | f64 step_scale | f64 rot_step
//     N x u8 action bits | N x u8 corrupted flag
//     N x F x (f64 pos.x,pos.y,pos.z,yaw,pitch)   (absolute frame poses)

inline constexpr std::uint32_t kDatasetVersion = 1;

namespace detail {

inline void write_pose(io::ByteWriter& w, const Pose& p) {
  w.f64(p.position.x);
  w.f64(p.position.y);
  w.f64(p.position.z);
  w.f64(p.yaw);
  w.f64(p.pitch);
}

inline Pose read_pose(io::ByteReader& r) {
  Pose p;
  p.position.x = r.f64();
  p.position.y = r.f64();
  p.position.z = r.f64();
  p.yaw = r.f64();
  p.pitch = r.f64();
  return p;
}

}  // namespace detail

inline void save_dataset(const std::filesystem::path& path, const Dataset& ds) {
  io::ByteWriter w;
  w.bytes("WCDS", 4);
  w.u32(kDatasetVersion);
  w.u32(ds.frames_per_clip);
  w.u32(ds.clips_per_entry);
  w.u64(ds.entries.size());
  for (const DatasetEntry& e : ds.entries) {
    w.u64(e.scene.scene_id);
    detail::write_pose(w, e.scene.initial_pose);
    w.f64(e.scene.step_scale);
    w.f64(e.scene.rot_step);
    for (const ActionToken& a : e.labels) w.u8(a.bits);
    for (std::uint8_t f : e.corrupted) w.u8(f);
    for (const Clip& c : e.clips)
      for (const Pose& p : c.frames) detail::write_pose(w, p);
  }
  io::write_file_atomic(path, w.data());
}

inline nlohmann::json pose_to_json(const Pose& p) {
  return nlohmann::json{{"pos", {p.position.x, p.position.y, p.position.z}},
                        {"yaw", p.yaw},
                        {"pitch", p.pitch}};
}

// One JSON object per entry, one entry per line.
inline void export_dataset_jsonl(const std::filesystem::path& path, const Dataset& ds) {
  std::string out;
  for (const DatasetEntry& e : ds.entries) {
    nlohmann::json j;
    j["scene_id"] = e.scene.scene_id;
    j["initial_pose"] = pose_to_json(e.scene.initial_pose);
    j["step_scale"] = e.scene.step_scale;
    j["rot_step"] = e.scene.rot_step;
    nlohmann::json labels = nlohmann::json::array();
    for (const ActionToken& a : e.labels) labels.push_back(a.str());
    j["labels"] = labels;
    j["corrupted"] = e.corrupted;
    nlohmann::json clips = nlohmann::json::array();
    for (const Clip& c : e.clips) {
      nlohmann::json frames = nlohmann::json::array();
      for (const Pose& p : c.frames) frames.push_back(pose_to_json(p));
      clips.push_back(frames);
    }
    j["clips"] = clips;
    out += j.dump();
    out += '\n';
  }
  io::write_text_atomic(path, out);
}

inline Dataset load_dataset(const std::filesystem::path& path) {
  io::ByteReader r(io::read_file(path));
  char magic[4];
  for (char& c : magic) c = static_cast<char>(r.u8());
  if (std::string(magic, 4) != "WCDS") throw std::runtime_error("not a WCDS dataset file");
  const std::uint32_t version = r.u32();
  if (version != kDatasetVersion) throw std::runtime_error("unsupported WCDS version");
  Dataset ds;
  ds.frames_per_clip = r.u32();
  ds.clips_per_entry = r.u32();
  const std::uint64_t count = r.u64();
  ds.entries.reserve(count);
  const std::size_t n = ds.clips_per_entry;
  const std::size_t f = ds.frames_per_clip;
  for (std::uint64_t i = 0; i < count; ++i) {
    DatasetEntry e;
    e.scene.scene_id = r.u64();
    e.scene.initial_pose = detail::read_pose(r);
    e.scene.step_scale = r.f64();
    e.scene.rot_step = r.f64();
    e.labels.resize(n);
    for (auto& a : e.labels) a.bits = r.u8();
    e.corrupted.resize(n);
    for (auto& c : e.corrupted) c = r.u8();
    e.clips.resize(n);
    Pose prev = e.scene.initial_pose;
    for (Clip& c : e.clips) {
      c.start = prev;
      c.frames.resize(f);
      for (Pose& p : c.frames) p = detail::read_pose(r);
      prev = c.frames.back();
    }
    ds.entries.push_back(std::move(e));
  }
  if (!r.done()) throw std::runtime_error("trailing bytes in WCDS file");
  return ds;
}

}  // namespace poseworld
