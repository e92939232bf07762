#include "vidode/dynamics.hpp"

#include "vidode/errors.hpp"

#include <cmath>

namespace vidode {

namespace {

ad::Parameter& conv_weight(ParameterSet& ps, const std::string& name, int k, int cin, int cout) {
  return ps.add(name, {k, k, cin, cout});
}

}  // namespace

DynamicsConfig DynamicsConfig::from_config(const Config& c, int image_height, int image_width) {
  DynamicsConfig d;
  d.image_height = image_height;
  d.image_width = image_width;
  d.m_d = static_cast<int>(c.get_int("dyn.m_d", d.m_d));
  const int factor = d.m_d > 0 ? image_height / d.m_d : 0;
  const int default_n = factor > 0 ? image_width / factor : d.n_d;
  d.n_d = static_cast<int>(c.get_int("dyn.n_d", default_n));
  d.d_sp = static_cast<int>(c.get_int("dyn.d_sp", d.d_sp));
  d.d_ode = static_cast<int>(c.get_int("dyn.d_ode", d.d_ode));
  d.validate();
  return d;
}

void DynamicsConfig::validate() const {
  if (m_d <= 0 || n_d <= 0 || d_sp <= 0 || d_ode <= 0) throw ValidationError("dyn.* sizes must be positive");
  if (image_height % m_d != 0 || image_width % n_d != 0 || image_height / m_d != image_width / n_d) {
    throw ValidationError("dynamics grid " + std::to_string(m_d) + "x" + std::to_string(n_d) +
                          " must divide the image " + std::to_string(image_height) + "x" +
                          std::to_string(image_width) + " by one common factor");
  }
  const int factor = image_height / m_d;
  if ((factor & (factor - 1)) != 0) throw ValidationError("image / dynamics grid factor must be a power of two");
}

SolverOptions solver_options_from_config(const Config& c) {
  SolverOptions o;
  o.rtol = c.get_double("ode.rtol", o.rtol);
  o.atol = c.get_double("ode.atol", o.atol);
  o.min_step = c.get_double("ode.min_step", o.min_step);
  o.max_steps = static_cast<int>(c.get_int("ode.max_steps", o.max_steps));
  if (!(o.rtol > 0) || !(o.atol > 0) || !(o.min_step > 0) || o.max_steps <= 0) {
    throw ValidationError("ode.rtol, ode.atol, ode.min_step and ode.max_steps must be positive");
  }
  return o;
}

CellMask CellMask::filled(int rows, int cols, double v) {
  return {rows, cols, std::vector<double>(static_cast<std::size_t>(rows) * cols, v)};
}

CellMask CellMask::complement() const {
  CellMask m = *this;
  for (auto& v : m.values) v = 1.0 - v;
  return m;
}

// ---------------------------------------------------------------------------

SpatialEncoder::SpatialEncoder(ParameterSet& ps, const DynamicsConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
  cfg_.validate();
  int downsamples = 0;
  for (int f = cfg.image_height / cfg.m_d; f > 1; f /= 2) ++downsamples;
  int cin = Image::kChannels;
  for (int i = 0; i < std::max(1, downsamples); ++i) {
    const int cout = std::min(cfg.d_sp, 8 << i);
    const std::string prefix = "dyn.enc.conv" + std::to_string(i);
    auto& w = conv_weight(ps, prefix + ".w", 3, cin, cout);
    auto& b = ps.add(prefix + ".b", {cout});
    init_normal(w, std::sqrt(2.0 / (9.0 * cin)), rng);
    layers_.push_back({&w, &b, downsamples > 0 ? 2 : 1, 1, true});
    cin = cout;
  }
  auto& w = conv_weight(ps, "dyn.enc.out.w", 1, cin, cfg.d_sp);
  auto& b = ps.add("dyn.enc.out.b", {cfg.d_sp});
  init_normal(w, std::sqrt(1.0 / cin), rng);
  layers_.push_back({&w, &b, 1, 0, false});
}

ad::Var SpatialEncoder::encode(const ad::Var& frame) const {
  if (frame.rank() != 3 || frame.dim(0) != cfg_.image_height || frame.dim(1) != cfg_.image_width ||
      frame.dim(2) != Image::kChannels) {
    throw ShapeError("encode_spatial: expected [" + std::to_string(cfg_.image_height) + "," +
                     std::to_string(cfg_.image_width) + ",3], got " + ad::shape_str(frame.shape()));
  }
  ad::Var x = frame;
  for (const auto& l : layers_) {
    x = ad::conv2d(x, ad::Var::leaf(*l.w), ad::Var::leaf(*l.b), l.stride, l.pad);
    if (l.activation) x = ad::silu(x);
  }
  return x;
}

// ---------------------------------------------------------------------------

ConvGru::ConvGru(ParameterSet& ps, int input_channels, int hidden_channels, std::mt19937_64& rng)
    : input_(input_channels), hidden_(hidden_channels) {
  const int cin = input_ + hidden_;
  const double s = 1.0 / std::sqrt(9.0 * cin);
  auto make = [&](const std::string& gate, ad::Parameter*& w, ad::Parameter*& b) {
    w = &conv_weight(ps, "dyn.gru." + gate + ".w", 3, cin, hidden_);
    b = &ps.add("dyn.gru." + gate + ".b", {hidden_});
    init_normal(*w, s, rng);
  };
  make("update", wz_, bz_);
  make("reset", wr_, br_);
  make("candidate", wh_, bh_);
}

ad::Var ConvGru::step(const ad::Var& x, const ad::Var& h) const {
  const ad::Var xh = ad::concat_last({x, h});
  const ad::Var z = ad::sigmoid(ad::conv2d(xh, ad::Var::leaf(*wz_), ad::Var::leaf(*bz_), 1, 1));
  const ad::Var r = ad::sigmoid(ad::conv2d(xh, ad::Var::leaf(*wr_), ad::Var::leaf(*br_), 1, 1));
  const ad::Var cand = ad::tanh(
      ad::conv2d(ad::concat_last({x, ad::mul(r, h)}), ad::Var::leaf(*wh_), ad::Var::leaf(*bh_), 1, 1));
  // h' = h + z * (cand - h)
  return ad::add(h, ad::mul(z, ad::sub(cand, h)));
}

ad::Var ConvGru::summarize(const std::vector<ad::Var>& features) const {
  if (features.empty()) throw ValidationError("summarize: empty feature sequence");
  const auto& f0 = features.front();
  if (f0.rank() != 3 || f0.dim(2) != input_) {
    throw ShapeError("summarize: expected [m,n," + std::to_string(input_) + "] features, got " +
                     ad::shape_str(f0.shape()));
  }
  ad::Var h = ad::Var::zeros({f0.dim(0), f0.dim(1), hidden_});
  for (auto it = features.rbegin(); it != features.rend(); ++it) {
    if (it->shape() != f0.shape()) throw ShapeError("summarize: feature maps differ in shape");
    h = step(*it, h);
  }
  return h;
}

// ---------------------------------------------------------------------------

OdeField::OdeField(ParameterSet& ps, int channels, std::mt19937_64& rng) {
  w1_ = &conv_weight(ps, "dyn.field.conv0.w", 3, channels, channels);
  b1_ = &ps.add("dyn.field.conv0.b", {channels});
  w2_ = &conv_weight(ps, "dyn.field.conv1.w", 3, channels, channels);
  b2_ = &ps.add("dyn.field.conv1.b", {channels});
  init_normal(*w1_, 1.0 / std::sqrt(9.0 * channels), rng);
}

ad::Var OdeField::operator()(const ad::Var& z) const {
  const ad::Var h = ad::tanh(ad::conv2d(z, ad::Var::leaf(*w1_), ad::Var::leaf(*b1_), 1, 1));
  return ad::conv2d(h, ad::Var::leaf(*w2_), ad::Var::leaf(*b2_), 1, 1);
}

// ---------------------------------------------------------------------------

DynamicsModel::DynamicsModel(ParameterSet& ps, const DynamicsConfig& cfg, std::uint64_t seed)
    : cfg_(cfg),
      rng_(seed),
      encoder_(ps, cfg, rng_),
      gru_(ps, cfg.d_sp, cfg.d_ode, rng_),
      field_(ps, cfg.d_ode, rng_) {}

ad::Var DynamicsModel::encode_spatial(const ad::Var& frame) const { return encoder_.encode(frame); }

DynamicsState DynamicsModel::summarize(const std::vector<ad::Var>& features) const {
  for (const auto& f : features) {
    if (f.shape() != ad::Shape{cfg_.m_d, cfg_.n_d, cfg_.d_sp}) {
      throw ShapeError("summarize: feature map " + ad::shape_str(f.shape()) + " does not match the dynamics grid");
    }
  }
  return {gru_.summarize(features), 0.0};
}

DynamicsState DynamicsModel::encode_frames(const std::vector<Image>& frames) const {
  std::vector<ad::Var> vars;
  vars.reserve(frames.size());
  for (const auto& f : frames) vars.push_back(to_var(f));
  return encode_frames(vars);
}

DynamicsState DynamicsModel::encode_frames(const std::vector<ad::Var>& frames) const {
  std::vector<ad::Var> feats;
  feats.reserve(frames.size());
  for (const auto& f : frames) feats.push_back(encode_spatial(f));
  return summarize(feats);
}

ad::Var DynamicsModel::field(const ad::Var& z) const { return override_ ? override_(z) : field_(z); }

std::vector<DynamicsState> DynamicsModel::solve_flow(const DynamicsState& initial,
                                                     const std::vector<double>& query_times,
                                                     const SolverOptions& options, SolverReport* report) const {
  auto result = dopri5([this](const ad::Var& z) { return field(z); }, initial.grid, initial.time, query_times,
                       options);
  if (report) *report = result.report;
  std::vector<DynamicsState> out;
  out.reserve(result.states.size());
  for (std::size_t i = 0; i < result.states.size(); ++i) out.push_back({result.states[i], query_times[i]});
  return out;
}

// ---------------------------------------------------------------------------

DynamicsState interpolate_dynamics(const DynamicsState& a, const DynamicsState& b, double lam) {
  if (a.grid.shape() != b.grid.shape()) throw ShapeError("interpolate_dynamics: shape mismatch");
  if (a.time != b.time) throw ValidationError("interpolate_dynamics: states are at different times");
  if (!(lam >= 0.0 && lam <= 1.0)) throw ValidationError("interpolate_dynamics: lambda must lie in [0, 1]");
  if (lam == 0.0) return a;
  if (lam == 1.0) return b;
  return {ad::linear_combination({a.grid, b.grid}, {1.0 - lam, lam}), a.time};
}

DynamicsState blend_dynamics(const DynamicsState& a, const DynamicsState& b, const CellMask& mask) {
  if (a.grid.shape() != b.grid.shape()) throw ShapeError("blend_dynamics: shape mismatch");
  if (a.grid.rank() != 3 || mask.rows != a.grid.dim(0) || mask.cols != a.grid.dim(1) ||
      mask.values.size() != static_cast<std::size_t>(mask.rows) * mask.cols) {
    throw ShapeError("blend_dynamics: mask " + std::to_string(mask.rows) + "x" + std::to_string(mask.cols) +
                     " does not match grid " + ad::shape_str(a.grid.shape()));
  }
  const int channels = a.grid.dim(2);
  std::vector<bool> take_a(a.grid.size());
  for (std::size_t cell = 0; cell < mask.values.size(); ++cell) {
    const double m = mask.values[cell];
    if (m != 0.0 && m != 1.0) throw ValidationError("blend_dynamics: mask must be binary");
    for (int c = 0; c < channels; ++c) take_a[cell * channels + c] = m == 1.0;
  }
  return {ad::select(take_a, a.grid, b.grid), a.time};
}

}  // namespace vidode
