#include "vidode/applications.hpp"

#include "vidode/errors.hpp"
#include "vidode/style.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>

namespace vidode {

namespace {

void check_times(const std::vector<double>& times) {
  if (times.empty()) throw ValidationError("no query times");
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!std::isfinite(times[i]) || times[i] < 0.0) throw ValidationError("query times must be finite and non-negative");
    if (i > 0 && times[i] < times[i - 1]) throw ValidationError("query times must be sorted");
  }
}

}  // namespace

Generation generate(const Model& model, const GlobalCode& z_c, const DynamicsState& initial,
                    const EmbeddingVector& style, const std::vector<double>& times) {
  check_times(times);
  ad::NoGradGuard no_grad;
  Generation g;
  g.z_c = z_c;
  g.style = style;
  g.initial = initial;
  g.times = times;
  g.states = model.flow(initial, times, &g.report);
  const ad::Var s = style.as_var();
  for (const auto& st : g.states) {
    const ad::Var z = model.predict_latent(z_c, st, s);
    g.latents.push_back(GlobalCode::from_var(z));
    g.frames.push_back(from_var(model.decode(z)));
  }
  return g;
}

DynamicsState encode_dynamics(const Model& model, const VideoClip& clip) {
  ad::NoGradGuard no_grad;
  return model.dynamics().encode_frames(clip.frames());
}

EmbeddingVector reconstruction_style(const Model& model, const GlobalCode& z_c, const VideoClip* clip) {
  return style_base_embedding(model.backends(), model.config().style_source, z_c, clip);
}

Generation reconstruct(const Model& model, const VideoClip& clip, const std::vector<double>& times) {
  return reconstruct(model, clip, times, model.config().pooling);
}

Generation reconstruct(const Model& model, const VideoClip& clip, const std::vector<double>& times, ContentMode mode) {
  const GlobalCode z_c = model.encode_content(clip, mode);
  return generate(model, z_c, encode_dynamics(model, clip), reconstruction_style(model, z_c, &clip), times);
}

Generation edit_video(const Model& model, const VideoClip& clip, const std::string& src_text,
                      const std::string& tgt_text, double alpha, const std::vector<double>& times) {
  if (!std::isfinite(alpha)) throw ValidationError("edit: alpha must be finite");
  const GlobalCode z_c = model.encode_content(clip);
  const EmbeddingVector base = reconstruction_style(model, z_c, &clip);
  const EmbeddingVector dir = style_direction(*model.backends().embedder, src_text, tgt_text);
  return generate(model, z_c, encode_dynamics(model, clip), build_style_code(base, dir, alpha).values, times);
}

Generation animate_image(const Model& model, const Image& still, const VideoClip& driving,
                         const std::vector<double>& times) {
  return animate_code(model, model.backends().inverter->invert(still), driving, times);
}

Generation animate_code(const Model& model, const GlobalCode& z_c, const VideoClip& driving,
                        const std::vector<double>& times) {
  // the still has no clip of its own, so the style always comes from decode(z_C)
  const EmbeddingVector style = model.backends().embedder->embed_image(model.backends().decoder->decode(z_c));
  return generate(model, z_c, encode_dynamics(model, driving), style, times);
}

std::vector<double> interpolation_grid(const std::vector<double>& observed, int n_intermediate) {
  if (observed.size() < 2) throw ValidationError("interpolation needs at least 2 observed frames");
  if (n_intermediate < 0) throw ValidationError("n_intermediate must be non-negative");
  std::vector<double> out;
  for (std::size_t i = 0; i + 1 < observed.size(); ++i) {
    const double a = observed[i], b = observed[i + 1];
    if (!(b > a)) throw ValidationError("observed times must be strictly increasing");
    for (int j = 0; j <= n_intermediate; ++j) out.push_back(a + (b - a) * j / (n_intermediate + 1));
  }
  out.push_back(observed.back());
  return out;
}

Generation interpolate_video(const Model& model, const VideoClip& observed, int n_intermediate) {
  return reconstruct(model, observed, interpolation_grid(observed.timestamps(), n_intermediate));
}

std::vector<double> extrapolation_grid(const std::vector<double>& observed, double horizon_factor, int n_future) {
  if (!(horizon_factor >= 1.0) || !std::isfinite(horizon_factor)) {
    throw ValidationError("horizon_factor must be at least 1");
  }
  if (n_future < 0) throw ValidationError("n_future must be non-negative");
  if (observed.empty()) throw ValidationError("extrapolation needs observed frames");
  std::vector<double> out = observed;
  const double t_max = observed.back();
  if (horizon_factor == 1.0 || n_future == 0) return out;
  if (!(t_max > 0.0)) throw ValidationError("extrapolation needs a clip spanning positive time");
  for (int i = 1; i <= n_future; ++i) out.push_back(t_max + (horizon_factor - 1.0) * t_max * i / n_future);
  return out;
}

Generation extrapolate_video(const Model& model, const VideoClip& clip, double horizon_factor, int n_future) {
  return reconstruct(model, clip, extrapolation_grid(clip.timestamps(), horizon_factor, n_future));
}

Generation transfer_local_motion(const Model& model, const VideoClip& clip_a, const VideoClip& clip_b,
                                 const CellMask& mask, const std::vector<double>& times) {
  const DynamicsState a = encode_dynamics(model, clip_a);
  const DynamicsState b = encode_dynamics(model, clip_b);
  if (mask.rows != a.grid.dim(0) || mask.cols != a.grid.dim(1)) {
    throw ShapeError("blend mask is " + std::to_string(mask.rows) + "x" + std::to_string(mask.cols) +
                     " but the dynamics grid is " + std::to_string(a.grid.dim(0)) + "x" +
                     std::to_string(a.grid.dim(1)));
  }
  const GlobalCode z_c = model.encode_content(clip_a);
  DynamicsState blended;
  {
    ad::NoGradGuard no_grad;
    blended = blend_dynamics(a, b, mask);
  }
  return generate(model, z_c, blended, reconstruction_style(model, z_c, &clip_a), times);
}

Generation interpolate_motion(const Model& model, const VideoClip& clip_a, const VideoClip& clip_b, double lam,
                              const std::vector<double>& times) {
  const DynamicsState a = encode_dynamics(model, clip_a);
  const DynamicsState b = encode_dynamics(model, clip_b);
  const GlobalCode z_c = model.encode_content(clip_a);
  DynamicsState mixed;
  {
    ad::NoGradGuard no_grad;
    mixed = interpolate_dynamics(a, b, lam);
  }
  return generate(model, z_c, mixed, reconstruction_style(model, z_c, &clip_a), times);
}

void write_generation(const Generation& g, const std::filesystem::path& out_dir, const std::string& command,
                      const std::string& parameters_json) {
  std::filesystem::create_directories(out_dir);
  using nlohmann::ordered_json;
  ordered_json files = ordered_json::array();
  for (std::size_t i = 0; i < g.frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%05zu.png", i);
    save_png(g.frames[i], out_dir / name);
    files.push_back(name);
  }
  ordered_json m;
  m["command"] = command;
  m["times"] = g.times;
  m["frames"] = files;
  m["parameters"] = ordered_json::parse(parameters_json);
  m["solver"] = {{"accepted_steps", g.report.accepted_steps},
                 {"rejected_steps", g.report.rejected_steps},
                 {"rhs_evaluations", g.report.rhs_evaluations}};
  std::ofstream f(out_dir / "manifest.json", std::ios::trunc);
  f << m.dump(2) << "\n";
  if (!f) throw Error("failed writing " + (out_dir / "manifest.json").string());
}

}  // namespace vidode
