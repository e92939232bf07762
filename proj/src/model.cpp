#include "vidode/model.hpp"

#include "vidode/errors.hpp"

namespace vidode {

ModelConfig ModelConfig::from_config(const Config& c, const Backends& b) {
  ModelConfig m;
  m.dynamics = DynamicsConfig::from_config(c, b.decoder->image_height(), b.decoder->image_width());
  m.head = HeadConfig::from_config(c);
  m.ode = solver_options_from_config(c);
  m.pooling = ContentMode::parse(c.get_string("content.pooling", "mean"));
  m.style_source = StyleImageSource::parse(c.get_string("style.image_source", "content_frame"));
  m.seed = static_cast<std::uint64_t>(c.get_int("model.seed", 0));
  return m;
}

Model::Model(const ModelConfig& cfg, Backends backends) : cfg_(cfg), backends_(std::move(backends)) {
  dynamics_ = std::make_unique<DynamicsModel>(params_, cfg_.dynamics, cfg_.seed * 2 + 1);
  HeadDims dims;
  dims.grid_rows = cfg_.dynamics.m_d;
  dims.grid_cols = cfg_.dynamics.n_d;
  dims.state_channels = cfg_.dynamics.d_ode;
  dims.style_dim = backends_.embedder->dim();
  dims.layers = backends_.decoder->layers();
  dims.layer_width = backends_.decoder->width();
  head_ = std::make_unique<DirectionHead>(params_, cfg_.head, dims, cfg_.seed * 2 + 2);
}

std::unique_ptr<Model> Model::from_config(const Config& config) {
  Backends b = make_backends(config);
  ModelConfig mc = ModelConfig::from_config(config, b);
  return std::make_unique<Model>(mc, std::move(b));
}

GlobalCode Model::encode_content(const VideoClip& clip) const { return encode_content(clip, cfg_.pooling); }

GlobalCode Model::encode_content(const VideoClip& clip, ContentMode mode) const {
  return vidode::encode_content(clip, *backends_.inverter, mode);
}

std::unique_ptr<Model> Model::from_checkpoint(const Checkpoint& ckpt) {
  auto model = from_config(Config::parse(ckpt.config));
  model->load_parameters(ckpt.parameters);
  return model;
}

std::vector<DynamicsState> Model::flow(const DynamicsState& initial, const std::vector<double>& times,
                                       SolverReport* report) const {
  return dynamics_->solve_flow(initial, times, cfg_.ode, report);
}

ad::Var Model::predict_direction(const GlobalCode& z_c, const DynamicsState& state, const ad::Var& style) const {
  return head_->predict_direction(z_c, state.grid, style);
}

ad::Var Model::predict_latent(const GlobalCode& z_c, const DynamicsState& state, const ad::Var& style) const {
  return head_->predict_frame_latent(z_c, state.grid, style);
}

void Model::load_parameters(const std::vector<NamedArray>& arrays) {
  const auto& all = params_.all();
  if (arrays.size() != all.size()) {
    throw ValidationError("parameter count mismatch: model has " + std::to_string(all.size()) + ", got " +
                          std::to_string(arrays.size()));
  }
  for (std::size_t i = 0; i < arrays.size(); ++i) {
    if (arrays[i].name != all[i]->name || arrays[i].shape != all[i]->shape) {
      throw ValidationError("parameter '" + arrays[i].name + "' " + ad::shape_str(arrays[i].shape) +
                            " does not match model parameter '" + all[i]->name + "' " +
                            ad::shape_str(all[i]->shape));
    }
  }
  for (std::size_t i = 0; i < arrays.size(); ++i) all[i]->value = arrays[i].values;
}

std::vector<NamedArray> Model::export_parameters() const {
  std::vector<NamedArray> out;
  for (const auto& p : params_.all()) out.push_back({p->name, p->shape, p->value});
  return out;
}

}  // namespace vidode
