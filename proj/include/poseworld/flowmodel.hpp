#pragma once

// The autoregressive flow-matching world model: a small MLP velocity field
// over clip vectors, exact reverse-mode gradients for its squared-error
// losses, an Euler sampler from noise to data, and flow-matching pretraining.
//
// Clip vectors hold per-frame deltas relative to the clip's start pose,
// expressed in the start pose's camera frame and normalized by the scene's
// step scales, so the action-to-motion mapping the model has to learn is
// essentially independent of where the camera happens to be.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "poseworld/io.hpp"
#include "poseworld/rng.hpp"
#include "poseworld/worldsim.hpp"

namespace poseworld {

using ClipVec = std::vector<double>;
using EvalCounter = std::atomic<std::uint64_t>;

inline constexpr int kPoseDims = 5;     // camera-frame dx,dy,dz + dyaw + dpitch
inline constexpr int kContextDim = 6;   // position/ref, cos yaw, sin yaw, pitch norm
inline constexpr int kActionDim = 8;
inline constexpr int kSceneDim = 2;
inline constexpr double kPosRef = 10.0;     // world bound used for position features
inline constexpr double kStepRef = 0.05;    // step_scale feature reference
inline constexpr double kRotRef = 5.0 * kPi / 180.0;  // rot_step feature reference

// ----------------------------------------------------------------------------
// Clip vector <-> Clip

inline int clip_dim(int frames_per_clip) { return kPoseDims * frames_per_clip; }

inline ClipVec encode_clip(const Clip& clip, const SceneContext& ctx) {
  const CameraBasis b = camera_basis(clip.start.yaw, clip.start.pitch);
  ClipVec v(clip.frames.size() * kPoseDims);
  for (std::size_t k = 0; k < clip.frames.size(); ++k) {
    const Pose& p = clip.frames[k];
    const Vec3 d = p.position - clip.start.position;
    v[kPoseDims * k + 0] = d.dot(b.right) / ctx.step_scale;
    v[kPoseDims * k + 1] = d.dot(b.up) / ctx.step_scale;
    v[kPoseDims * k + 2] = d.dot(b.forward) / ctx.step_scale;
    v[kPoseDims * k + 3] = wrap_angle(p.yaw - clip.start.yaw) / ctx.rot_step;
    v[kPoseDims * k + 4] = (p.pitch - clip.start.pitch) / ctx.rot_step;
  }
  return v;
}

inline Clip decode_clip(const ClipVec& v, const Pose& start, const SceneContext& ctx) {
  if (v.size() % kPoseDims != 0) throw std::invalid_argument("decode_clip: bad vector length");
  const CameraBasis b = camera_basis(start.yaw, start.pitch);
  Clip clip;
  clip.start = start;
  const std::size_t frames = v.size() / kPoseDims;
  clip.frames.reserve(frames);
  for (std::size_t k = 0; k < frames; ++k) {
    Pose p;
    const double dx = v[kPoseDims * k + 0] * ctx.step_scale;
    const double dy = v[kPoseDims * k + 1] * ctx.step_scale;
    const double dz = v[kPoseDims * k + 2] * ctx.step_scale;
    p.position = start.position + b.right * dx + b.up * dy + b.forward * dz;
    p.yaw = wrap_angle(start.yaw + v[kPoseDims * k + 3] * ctx.rot_step);
    p.pitch = std::clamp(start.pitch + v[kPoseDims * k + 4] * ctx.rot_step, -kPi / 2.0, kPi / 2.0);
    clip.frames.push_back(p);
  }
  return clip;
}

// ----------------------------------------------------------------------------
// Conditioning

struct GenerationInput {
  std::array<double, kContextDim> context{};
  std::array<double, kActionDim> action{};
  std::array<double, kSceneDim> scene{};
  double t = 0.0;
};

inline GenerationInput make_input(const Pose& context_pose, const ActionToken& action,
                                  const SceneContext& ctx, double t = 0.0) {
  GenerationInput in;
  in.context = {context_pose.position.x / kPosRef, context_pose.position.y / kPosRef,
                context_pose.position.z / kPosRef, std::cos(context_pose.yaw),
                std::sin(context_pose.yaw),        context_pose.pitch / (kPi / 2.0)};
  in.action = action.multihot();
  in.scene = {ctx.step_scale / kStepRef, ctx.rot_step / kRotRef};
  in.t = t;
  return in;
}

// ----------------------------------------------------------------------------
// Parameters

struct ArchConfig {
  int clip_dim = 40;
  std::vector<int> hidden = {64, 64};
  int time_freqs = 4;

  bool operator==(const ArchConfig&) const = default;

  int input_dim() const {
    return clip_dim + kContextDim + kActionDim + kSceneDim + 2 * time_freqs;
  }

  void validate() const {
    if (clip_dim < kPoseDims || clip_dim % kPoseDims != 0)
      throw std::invalid_argument("clip_dim must be a positive multiple of 5");
    if (hidden.empty()) throw std::invalid_argument("at least one hidden layer required");
    for (int h : hidden)
      if (h < 1) throw std::invalid_argument("hidden layer width must be >= 1");
    if (time_freqs < 1) throw std::invalid_argument("time_freqs must be >= 1");
  }
};

struct LayerSpec {
  int in = 0, out = 0;
  std::size_t w_off = 0, b_off = 0;
  bool has_bias = true;
};

// Hidden layers are tanh with bias; the final layer is linear and bias-free.
inline std::vector<LayerSpec> layer_layout(const ArchConfig& arch) {
  arch.validate();
  std::vector<int> sizes;
  sizes.push_back(arch.input_dim());
  for (int h : arch.hidden) sizes.push_back(h);
  sizes.push_back(arch.clip_dim);
  std::vector<LayerSpec> layers;
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    LayerSpec spec;
    spec.in = sizes[l];
    spec.out = sizes[l + 1];
    spec.has_bias = l + 2 < sizes.size();
    spec.w_off = off;
    off += static_cast<std::size_t>(spec.in) * static_cast<std::size_t>(spec.out);
    spec.b_off = off;
    if (spec.has_bias) off += static_cast<std::size_t>(spec.out);
    layers.push_back(spec);
  }
  return layers;
}

inline std::size_t param_count(const ArchConfig& arch) {
  const auto layers = layer_layout(arch);
  const LayerSpec& last = layers.back();
  return last.b_off + (last.has_bias ? static_cast<std::size_t>(last.out) : 0);
}

struct PolicyParams {
  ArchConfig arch;
  std::vector<double> values;

  void validate() const {
    if (values.size() != param_count(arch))
      throw std::invalid_argument("parameter vector length inconsistent with architecture");
  }
};

// Uniform fan-in initialization: W ~ U(-1/sqrt(in), 1/sqrt(in)), biases zero.
inline PolicyParams init_params(const ArchConfig& arch, std::uint64_t seed) {
  PolicyParams p;
  p.arch = arch;
  p.values.assign(param_count(arch), 0.0);
  const auto layers = layer_layout(arch);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Rng rng = derive_rng(seed, "init.layer", l);
    const LayerSpec& spec = layers[l];
    const double bound = 1.0 / std::sqrt(static_cast<double>(spec.in));
    const std::size_t n = static_cast<std::size_t>(spec.in) * static_cast<std::size_t>(spec.out);
    for (std::size_t i = 0; i < n; ++i) p.values[spec.w_off + i] = rng.uniform(-bound, bound);
  }
  return p;
}

// ----------------------------------------------------------------------------
// Forward / backward

// Per-frame magnitude scale of clip-vector components: deltas are relative to
// the clip start, so frame k spans roughly k+1 step units. The network sees
// and emits unit-scale values; velocity() rescales at the boundary. Purely an
// architecture detail -- clip vectors and losses stay in natural units.
inline double frame_scale(int component) {
  return 1.0 + static_cast<double>(component / kPoseDims);
}

namespace detail {

inline void assemble_features(const ArchConfig& arch, const ClipVec& z,
                              const GenerationInput& in, std::vector<double>& feat) {
  if (static_cast<int>(z.size()) != arch.clip_dim)
    throw std::invalid_argument("velocity: clip vector has wrong dimension");
  feat.resize(static_cast<std::size_t>(arch.input_dim()));
  std::size_t i = 0;
  for (std::size_t d = 0; d < z.size(); ++d) feat[i++] = z[d] / frame_scale(static_cast<int>(d));
  for (double v : in.context) feat[i++] = v;
  for (double v : in.action) feat[i++] = v;
  for (double v : in.scene) feat[i++] = v;
  double freq = kPi;  // sin/cos of pi * 2^j * t, j = 0..time_freqs-1
  for (int j = 0; j < arch.time_freqs; ++j) {
    feat[i++] = std::sin(freq * in.t);
    feat[i++] = std::cos(freq * in.t);
    freq *= 2.0;
  }
}

struct ForwardCache {
  // acts[0] is the feature vector; acts[l+1] the output of layer l
  // (post-tanh for hidden layers, raw for the final layer).
  std::vector<std::vector<double>> acts;
};

inline void mlp_forward(const PolicyParams& p, const std::vector<LayerSpec>& layers,
                        const std::vector<double>& features, ForwardCache& cache,
                        bool check_finite) {
  cache.acts.resize(layers.size() + 1);
  cache.acts[0] = features;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LayerSpec& spec = layers[l];
    const std::vector<double>& x = cache.acts[l];
    std::vector<double>& y = cache.acts[l + 1];
    y.assign(static_cast<std::size_t>(spec.out), 0.0);
    const double* w = p.values.data() + spec.w_off;
    for (int o = 0; o < spec.out; ++o) {
      double acc = spec.has_bias ? p.values[spec.b_off + static_cast<std::size_t>(o)] : 0.0;
      const double* row = w + static_cast<std::size_t>(o) * static_cast<std::size_t>(spec.in);
      for (int i = 0; i < spec.in; ++i) acc += row[i] * x[static_cast<std::size_t>(i)];
      y[static_cast<std::size_t>(o)] = l + 1 < layers.size() ? std::tanh(acc) : acc;
    }
    if (check_finite) {
      for (double v : y)
        if (!std::isfinite(v))
          throw std::runtime_error("non-finite activation in layer " + std::to_string(l));
    }
  }
}

// Backprop of d(loss)/d(output) = cot into the parameter gradient.
inline void mlp_backward(const PolicyParams& p, const std::vector<LayerSpec>& layers,
                         const ForwardCache& cache, std::vector<double> cot,
                         std::vector<double>& grad) {
  for (std::size_t li = layers.size(); li-- > 0;) {
    const LayerSpec& spec = layers[li];
    const std::vector<double>& x = cache.acts[li];
    double* gw = grad.data() + spec.w_off;
    for (int o = 0; o < spec.out; ++o) {
      const double d = cot[static_cast<std::size_t>(o)];
      if (spec.has_bias) grad[spec.b_off + static_cast<std::size_t>(o)] += d;
      double* row = gw + static_cast<std::size_t>(o) * static_cast<std::size_t>(spec.in);
      for (int i = 0; i < spec.in; ++i) row[i] += d * x[static_cast<std::size_t>(i)];
    }
    if (li == 0) break;
    std::vector<double> prev(static_cast<std::size_t>(spec.in), 0.0);
    const double* w = p.values.data() + spec.w_off;
    for (int o = 0; o < spec.out; ++o) {
      const double d = cot[static_cast<std::size_t>(o)];
      const double* row = w + static_cast<std::size_t>(o) * static_cast<std::size_t>(spec.in);
      for (int i = 0; i < spec.in; ++i) prev[static_cast<std::size_t>(i)] += d * row[i];
    }
    // derivative of tanh through the previous layer's output
    const std::vector<double>& h = cache.acts[li];
    for (int i = 0; i < spec.in; ++i)
      prev[static_cast<std::size_t>(i)] *= 1.0 - h[static_cast<std::size_t>(i)] * h[static_cast<std::size_t>(i)];
    cot = std::move(prev);
  }
}

}  // namespace detail

// Deterministic forward evaluation of the velocity field.
inline ClipVec velocity(const PolicyParams& params, const ClipVec& z, const GenerationInput& in,
                        EvalCounter* counter = nullptr) {
  params.validate();
  const auto layers = layer_layout(params.arch);
  std::vector<double> features;
  detail::assemble_features(params.arch, z, in, features);
  detail::ForwardCache cache;
  detail::mlp_forward(params, layers, features, cache, false);
  if (counter) counter->fetch_add(1, std::memory_order_relaxed);
  ClipVec out = cache.acts.back();
  for (std::size_t d = 0; d < out.size(); ++d) out[d] *= frame_scale(static_cast<int>(d));
  return out;
}

// One weighted squared-error loss term: weight * || coeff * v(z, input) + offset ||^2.
// Both the flow-matching loss and the NFT loss reduce to sums of these.
struct SquaredErrorTerm {
  ClipVec z;
  GenerationInput input;
  double coeff = 1.0;
  ClipVec offset;
  double weight = 1.0;
};

struct GradResult {
  double loss = 0.0;
  std::vector<double> grad;
};

// Exact reverse-mode gradient of the summed loss terms.
inline GradResult grad(const PolicyParams& params, std::span<const SquaredErrorTerm> terms,
                       EvalCounter* counter = nullptr) {
  params.validate();
  const auto layers = layer_layout(params.arch);
  GradResult out;
  out.grad.assign(params.values.size(), 0.0);
  std::vector<double> features;
  detail::ForwardCache cache;
  for (const SquaredErrorTerm& term : terms) {
    if (static_cast<int>(term.offset.size()) != params.arch.clip_dim)
      throw std::invalid_argument("loss term offset has wrong dimension");
    detail::assemble_features(params.arch, term.z, term.input, features);
    detail::mlp_forward(params, layers, features, cache, true);
    if (counter) counter->fetch_add(1, std::memory_order_relaxed);
    const std::vector<double>& y = cache.acts.back();
    std::vector<double> cot(y.size());
    double term_loss = 0.0;
    for (std::size_t d = 0; d < y.size(); ++d) {
      const double scale = frame_scale(static_cast<int>(d));
      const double resid = term.coeff * y[d] * scale + term.offset[d];
      term_loss += resid * resid;
      cot[d] = 2.0 * term.weight * term.coeff * resid * scale;
    }
    if (!std::isfinite(term_loss)) throw std::runtime_error("non-finite loss term value");
    out.loss += term.weight * term_loss;
    if (term.weight != 0.0 && term.coeff != 0.0)
      detail::mlp_backward(params, layers, cache, std::move(cot), out.grad);
  }
  return out;
}

// ----------------------------------------------------------------------------
// Sampling

inline double grid_time(int i, int steps) {
  return 1.0 - static_cast<double>(i) / static_cast<double>(steps);
}

// Euler integration of dz/dt = -v from t=1 (z = noise) down to t=0 over a
// uniform grid: z <- z + (1/T) * v(z, t_i) at t_i = 1 - i/T.
inline ClipVec sample_clip(const PolicyParams& params, GenerationInput input, const ClipVec& noise,
                           int steps, EvalCounter* counter = nullptr) {
  if (steps < 1) throw std::invalid_argument("sample_clip: steps must be >= 1");
  ClipVec z = noise;
  const double dt = 1.0 / static_cast<double>(steps);
  for (int i = 0; i < steps; ++i) {
    input.t = grid_time(i, steps);
    const ClipVec v = velocity(params, z, input, counter);
    for (std::size_t d = 0; d < z.size(); ++d) z[d] += dt * v[d];
  }
  return z;
}

// Autoregressive generation: each clip is sampled with fresh noise and decoded
// against the previous clip's final pose, so the model consumes its own
// outputs as context.
inline std::vector<Clip> generate_sequence(const PolicyParams& params, const SceneContext& ctx,
                                           const std::vector<ActionToken>& actions, Rng& rng,
                                           int steps, EvalCounter* counter = nullptr) {
  if (actions.empty()) throw std::invalid_argument("generate_sequence: empty action sequence");
  std::vector<Clip> clips;
  clips.reserve(actions.size());
  Pose context_pose = ctx.initial_pose;
  for (const ActionToken& action : actions) {
    const ClipVec noise = rng.normal_vec(static_cast<std::size_t>(params.arch.clip_dim));
    const GenerationInput input = make_input(context_pose, action, ctx);
    const ClipVec z0 = sample_clip(params, input, noise, steps, counter);
    Clip clip = decode_clip(z0, context_pose, ctx);
    context_pose = clip.frames.back();
    clips.push_back(std::move(clip));
  }
  return clips;
}

// ----------------------------------------------------------------------------
// Flow matching

struct FlowMatchLoss {
  double value = 0.0;
  SquaredErrorTerm term;
};

// || v(z_t, ., t) - (x - eps) ||^2 with z_t = (1-t) x + t eps.
inline FlowMatchLoss flowmatch_loss(const PolicyParams& params, const ClipVec& x,
                                    GenerationInput input, double t, const ClipVec& eps,
                                    EvalCounter* counter = nullptr) {
  if (t < 0.0 || t > 1.0) throw std::invalid_argument("flowmatch_loss: t outside [0,1]");
  if (x.size() != eps.size()) throw std::invalid_argument("flowmatch_loss: dim mismatch");
  SquaredErrorTerm term;
  term.z.resize(x.size());
  term.offset.resize(x.size());
  for (std::size_t d = 0; d < x.size(); ++d) {
    term.z[d] = (1.0 - t) * x[d] + t * eps[d];
    term.offset[d] = -(x[d] - eps[d]);
  }
  input.t = t;
  term.input = input;
  term.coeff = 1.0;
  term.weight = 1.0;
  FlowMatchLoss out;
  const ClipVec v = velocity(params, term.z, term.input, counter);
  for (std::size_t d = 0; d < v.size(); ++d) {
    const double r = v[d] + term.offset[d];
    out.value += r * r;
  }
  out.term = std::move(term);
  return out;
}

// ----------------------------------------------------------------------------
// Pretraining

struct PretrainConfig {
  int steps = 120000;
  int batch_size = 32;
  double lr = 3e-3;
  double lr_final = 3e-4;  // geometric decay target; set equal to lr for a constant rate
  double grad_clip = 1.0;

  double lr_at(int step) const {
    if (steps <= 1 || lr_final == lr) return lr;
    const double f = static_cast<double>(step) / (steps - 1);
    return lr * std::pow(lr_final / lr, f);
  }
};

struct PretrainResult {
  PolicyParams params;
  std::vector<double> loss_curve;  // mean batch loss per step
};

namespace detail {

struct TrainingExample {
  ClipVec x;
  GenerationInput input;  // t filled per draw
};

inline std::vector<TrainingExample> collect_examples(const Dataset& ds, const ArchConfig& arch) {
  std::vector<TrainingExample> ex;
  ex.reserve(ds.entries.size() * ds.clips_per_entry);
  for (const DatasetEntry& e : ds.entries) {
    for (std::size_t n = 0; n < e.clips.size(); ++n) {
      TrainingExample t;
      t.x = encode_clip(e.clips[n], e.scene);
      if (static_cast<int>(t.x.size()) != arch.clip_dim)
        throw std::invalid_argument("dataset clip length does not match architecture");
      t.input = make_input(e.clips[n].start, e.labels[n], e.scene);
      ex.push_back(std::move(t));
    }
  }
  return ex;
}

inline double clip_gradient(std::vector<double>& g, double max_norm) {
  double sq = 0.0;
  for (double v : g) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (double& v : g) v *= s;
  }
  return norm;
}

}  // namespace detail

// Minibatch gradient descent on the flow-matching objective with uniform t.
inline PretrainResult pretrain(const PolicyParams& init, const Dataset& dataset,
                               const PretrainConfig& cfg, std::uint64_t seed) {
  if (dataset.entries.empty()) throw std::invalid_argument("pretrain: empty dataset");
  PretrainResult out;
  out.params = init;
  out.params.validate();
  const auto examples = detail::collect_examples(dataset, init.arch);
  Rng rng = derive_rng(seed, "pretrain");
  const std::size_t dim = static_cast<std::size_t>(init.arch.clip_dim);
  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<SquaredErrorTerm> terms;
    terms.reserve(static_cast<std::size_t>(cfg.batch_size));
    for (int b = 0; b < cfg.batch_size; ++b) {
      const auto& ex = examples[rng.below(examples.size())];
      const double t = rng.uniform();
      const ClipVec eps = rng.normal_vec(dim);
      SquaredErrorTerm term;
      term.z.resize(dim);
      term.offset.resize(dim);
      for (std::size_t d = 0; d < dim; ++d) {
        term.z[d] = (1.0 - t) * ex.x[d] + t * eps[d];
        term.offset[d] = -(ex.x[d] - eps[d]);
      }
      term.input = ex.input;
      term.input.t = t;
      term.weight = 1.0 / static_cast<double>(cfg.batch_size);
      terms.push_back(std::move(term));
    }
    GradResult g = grad(out.params, terms);
    if (!std::isfinite(g.loss))
      throw std::runtime_error("pretrain diverged at step " + std::to_string(step));
    detail::clip_gradient(g.grad, cfg.grad_clip);
    const double lr = cfg.lr_at(step);
    for (std::size_t i = 0; i < out.params.values.size(); ++i)
      out.params.values[i] -= lr * g.grad[i];
    out.loss_curve.push_back(g.loss);
  }
  return out;
}

// ----------------------------------------------------------------------------
// Checkpoints: "WCPM" binary.
//
// Layout (little-endian):
//   magic "WCPM" | u32 version | u32 clip_dim | u32 hidden_count | u32 x widths
//   | u32 activation_tag (0 = tanh) | u32 time_freqs | u64 param_count
//   | f64 x params | u64 fnv1a-64 checksum of all preceding bytes

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const std::filesystem::path& path, const PolicyParams& params) {
  params.validate();
  io::ByteWriter w;
  w.bytes("WCPM", 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(params.arch.clip_dim));
  w.u32(static_cast<std::uint32_t>(params.arch.hidden.size()));
  for (int h : params.arch.hidden) w.u32(static_cast<std::uint32_t>(h));
  w.u32(0);  // activation tag: tanh
  w.u32(static_cast<std::uint32_t>(params.arch.time_freqs));
  w.u64(params.values.size());
  for (double v : params.values) w.f64(v);
  w.u64(io::fnv1a64_bytes(w.data().data(), w.data().size()));
  io::write_file_atomic(path, w.data());
}

inline PolicyParams load_checkpoint(const std::filesystem::path& path,
                                    const ArchConfig* expected = nullptr) {
  const auto bytes = io::read_file(path);
  if (bytes.size() < 12) throw std::runtime_error("checkpoint file too short");
  std::uint64_t stored_sum = 0;
  for (int i = 0; i < 8; ++i)
    stored_sum |= static_cast<std::uint64_t>(bytes[bytes.size() - 8 + static_cast<std::size_t>(i)])
                  << (8 * i);
  const std::uint64_t computed = io::fnv1a64_bytes(bytes.data(), bytes.size() - 8);
  if (stored_sum != computed) throw std::runtime_error("checkpoint checksum mismatch");
  io::ByteReader r(bytes);
  char magic[4];
  for (char& c : magic) c = static_cast<char>(r.u8());
  if (std::string(magic, 4) != "WCPM") throw std::runtime_error("not a WCPM checkpoint");
  if (r.u32() != kCheckpointVersion) throw std::runtime_error("unsupported WCPM version");
  PolicyParams p;
  p.arch.clip_dim = static_cast<int>(r.u32());
  p.arch.hidden.resize(r.u32());
  for (int& h : p.arch.hidden) h = static_cast<int>(r.u32());
  if (r.u32() != 0) throw std::runtime_error("unknown activation tag");
  p.arch.time_freqs = static_cast<int>(r.u32());
  const std::uint64_t count = r.u64();
  if (count != param_count(p.arch))
    throw std::runtime_error("checkpoint parameter count inconsistent with architecture");
  p.values.resize(count);
  for (double& v : p.values) v = r.f64();
  if (expected && !(p.arch == *expected))
    throw std::runtime_error("checkpoint architecture does not match configuration");
  return p;
}

}  // namespace poseworld
