#pragma once

// Inference-time compositions of a trained model: reconstruction, text-guided
// editing, image animation, interpolation/extrapolation, local motion
// transfer and dynamics interpolation.

#include "vidode/data.hpp"
#include "vidode/dynamics.hpp"
#include "vidode/model.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace vidode {

/// Output of one application run. Intermediate states are kept so tests can
/// assert on them directly.
struct Generation {
  GlobalCode z_c;
  EmbeddingVector style;
  DynamicsState initial;
  std::vector<double> times;
  std::vector<DynamicsState> states;
  std::vector<GlobalCode> latents;
  std::vector<Image> frames;
  SolverReport report;
};

/// Shared tail of every application: flow from `initial`, predict and decode.
Generation generate(const Model& model, const GlobalCode& z_c, const DynamicsState& initial,
                    const EmbeddingVector& style, const std::vector<double>& times);

/// Dynamics initial state from all frames of a clip.
DynamicsState encode_dynamics(const Model& model, const VideoClip& clip);
/// Style base embedding for reconstruction (per the model's style source).
EmbeddingVector reconstruction_style(const Model& model, const GlobalCode& z_c, const VideoClip* clip);

Generation reconstruct(const Model& model, const VideoClip& clip, const std::vector<double>& times);
Generation reconstruct(const Model& model, const VideoClip& clip, const std::vector<double>& times, ContentMode mode);

Generation edit_video(const Model& model, const VideoClip& clip, const std::string& src_text,
                      const std::string& tgt_text, double alpha, const std::vector<double>& times);

/// z_C = invert(still); dynamics from the driving clip.
Generation animate_image(const Model& model, const Image& still, const VideoClip& driving,
                         const std::vector<double>& times);
/// Same with an explicit content code.
Generation animate_code(const Model& model, const GlobalCode& z_c, const VideoClip& driving,
                        const std::vector<double>& times);

/// Observed times with n uniformly spaced times inserted into every gap.
std::vector<double> interpolation_grid(const std::vector<double>& observed, int n_intermediate);
Generation interpolate_video(const Model& model, const VideoClip& observed, int n_intermediate);

/// Clip timestamps followed by n_future uniform times up to horizon_factor * T_max.
std::vector<double> extrapolation_grid(const std::vector<double>& observed, double horizon_factor, int n_future);
Generation extrapolate_video(const Model& model, const VideoClip& clip, double horizon_factor, int n_future);

/// Blends the initial dynamics states (mask 1 -> clip_a), then one flow;
/// content and style from clip_a.
Generation transfer_local_motion(const Model& model, const VideoClip& clip_a, const VideoClip& clip_b,
                                 const CellMask& mask, const std::vector<double>& times);
/// (1 - lam) * z_d0(a) + lam * z_d0(b); content and style from clip_a.
Generation interpolate_motion(const Model& model, const VideoClip& clip_a, const VideoClip& clip_b, double lam,
                              const std::vector<double>& times);

/// Writes frame_00000.png, ... and manifest.json. `parameters` is a JSON
/// object text merged into the manifest.
void write_generation(const Generation& g, const std::filesystem::path& out_dir, const std::string& command,
                      const std::string& parameters_json = "{}");

}  // namespace vidode
