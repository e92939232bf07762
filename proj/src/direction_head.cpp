#include "vidode/direction_head.hpp"

#include "vidode/errors.hpp"

#include <cmath>

namespace vidode {

HeadConfig HeadConfig::from_config(const Config& c) {
  HeadConfig h;
  h.n_sa = static_cast<int>(c.get_int("head.n_sa", h.n_sa));
  h.n_ca = static_cast<int>(c.get_int("head.n_ca", h.n_ca));
  h.heads = static_cast<int>(c.get_int("head.heads", h.heads));
  h.width = static_cast<int>(c.get_int("head.width", h.width));
  h.ff_mult = static_cast<int>(c.get_int("head.ff_mult", h.ff_mult));
  h.context_tokens = static_cast<int>(c.get_int("head.context_tokens", h.context_tokens));
  h.fine_fraction = c.get_double("head.fine_fraction", h.fine_fraction);
  h.validate();
  return h;
}

void HeadConfig::validate() const {
  if (n_sa < 0 || n_ca < 0) throw ValidationError("head.n_sa and head.n_ca must be non-negative");
  if (heads <= 0 || width <= 0 || width % heads != 0) {
    throw ValidationError("head.width must be a positive multiple of head.heads");
  }
  if (ff_mult <= 0 || context_tokens <= 0) throw ValidationError("head.ff_mult and head.context_tokens must be positive");
  if (!(fine_fraction >= 0.0 && fine_fraction < 1.0)) throw ValidationError("head.fine_fraction must lie in [0, 1)");
}

std::vector<double> standardize_layers(const GlobalCode& z, double eps) {
  std::vector<double> out(z.values.size());
  for (int l = 0; l < z.layers; ++l) {
    double mean = 0.0;
    for (int j = 0; j < z.width; ++j) mean += z.at(l, j);
    mean /= z.width;
    double var = 0.0;
    for (int j = 0; j < z.width; ++j) var += (z.at(l, j) - mean) * (z.at(l, j) - mean);
    var /= z.width;
    const double inv = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < z.width; ++j) out[static_cast<std::size_t>(l) * z.width + j] = (z.at(l, j) - mean) * inv;
  }
  return out;
}

DirectionHead::Linear DirectionHead::make_linear(ParameterSet& ps, const std::string& name, int in, int out,
                                                 double stddev) {
  Linear l{&ps.add(name + ".w", {in, out}), &ps.add(name + ".b", {out})};
  if (stddev > 0.0) init_normal(*l.w, stddev, rng_);
  return l;
}

DirectionHead::Norm DirectionHead::make_norm(ParameterSet& ps, const std::string& name) {
  Norm n{&ps.add(name + ".g", {cfg_.width}), &ps.add(name + ".b", {cfg_.width})};
  init_constant(*n.g, 1.0);
  return n;
}

DirectionHead::DirectionHead(ParameterSet& ps, const HeadConfig& cfg, const HeadDims& dims, std::uint64_t seed)
    : cfg_(cfg), dims_(dims), rng_(seed) {
  cfg_.validate();
  fine_layers_ = static_cast<int>(std::ceil(dims.layers * cfg.fine_fraction - 1e-12));
  const int w = cfg.width;
  const double s = 1.0 / std::sqrt(static_cast<double>(w));

  tokens_ = make_linear(ps, "head.tok", dims.state_channels, w, 1.0 / std::sqrt(static_cast<double>(dims.state_channels)));
  const int n_tok = dims.grid_rows * dims.grid_cols;
  pos_.resize(static_cast<std::size_t>(n_tok) * w);
  for (int p = 0; p < n_tok; ++p)
    for (int i = 0; i < w; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / w);
      pos_[static_cast<std::size_t>(p) * w + i] = std::sin(p * freq);
      if (i + 1 < w) pos_[static_cast<std::size_t>(p) * w + i + 1] = std::cos(p * freq);
    }

  auto block = [&](const std::string& prefix, bool cross) {
    Block b;
    b.norm1 = make_norm(ps, prefix + ".norm1");
    b.q = make_linear(ps, prefix + ".q", w, w, s);
    b.k = make_linear(ps, prefix + ".k", w, w, s);
    b.v = make_linear(ps, prefix + ".v", w, w, s);
    b.o = make_linear(ps, prefix + ".o", w, w, s);
    b.norm2 = make_norm(ps, prefix + ".norm2");
    b.ff1 = make_linear(ps, prefix + ".ff1", w, cfg.ff_mult * w, s);
    b.ff2 = make_linear(ps, prefix + ".ff2", cfg.ff_mult * w, w, 1.0 / std::sqrt(static_cast<double>(cfg.ff_mult * w)));
    if (cross) {
      b.context = make_linear(ps, prefix + ".context", dims.style_dim, cfg.context_tokens * w,
                              1.0 / std::sqrt(static_cast<double>(dims.style_dim)));
      b.offset = make_linear(ps, prefix + ".offset", w, dims.style_dim, 0.0);
    }
    return b;
  };
  for (int i = 0; i < cfg.n_sa; ++i) sa_.push_back(block("head.sa" + std::to_string(i), false));
  for (int i = 0; i < cfg.n_ca; ++i) ca_.push_back(block("head.ca" + std::to_string(i), true));

  const int cond = w + dims.style_dim;
  gamma_ = make_linear(ps, "head.gamma", cond, dims.layers * dims.layer_width, 0.0);
  beta_ = make_linear(ps, "head.beta", cond, dims.layers * dims.layer_width, 0.0);
}

ad::Var DirectionHead::tokenize(const ad::Var& grid) const {
  const ad::Shape expect{dims_.grid_rows, dims_.grid_cols, dims_.state_channels};
  if (grid.shape() != expect) {
    throw ShapeError("tokenize: expected grid " + ad::shape_str(expect) + ", got " + ad::shape_str(grid.shape()));
  }
  const int n_tok = dims_.grid_rows * dims_.grid_cols;
  const ad::Var cells = ad::reshape(grid, {n_tok, dims_.state_channels});
  return ad::add(tokens_(cells), ad::Var::constant(pos_, {n_tok, cfg_.width}));
}

ad::Var DirectionHead::attention(const Block& blk, const ad::Var& queries, const ad::Var& keys_values,
                                 std::vector<ad::Var>* weights) const {
  const ad::Var q = blk.q(queries), k = blk.k(keys_values), v = blk.v(keys_values);
  const int dh = cfg_.width / cfg_.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<ad::Var> heads;
  for (int h = 0; h < cfg_.heads; ++h) {
    const ad::Var qh = ad::slice_last(q, h * dh, (h + 1) * dh);
    const ad::Var kh = ad::slice_last(k, h * dh, (h + 1) * dh);
    const ad::Var vh = ad::slice_last(v, h * dh, (h + 1) * dh);
    const ad::Var a = ad::softmax_rows(ad::scale(ad::matmul(qh, ad::transpose(kh)), scale));
    if (weights) weights->push_back(a);
    heads.push_back(ad::matmul(a, vh));
  }
  return blk.o(ad::concat_last(heads));
}

ad::Var DirectionHead::feed_forward(const Block& blk, const ad::Var& x) const {
  return blk.ff2(ad::gelu(blk.ff1(blk.norm2(x))));
}

ad::Var DirectionHead::self_attend(const ad::Var& tokens, AttentionTrace* trace) const {
  ad::Var x = tokens;
  for (const auto& blk : sa_) {
    const ad::Var n = blk.norm1(x);
    x = ad::add(x, attention(blk, n, n, trace ? &trace->self_attention : nullptr));
    x = ad::add(x, feed_forward(blk, x));
  }
  return x;
}

DirectionHead::CrossOutput DirectionHead::cross_attend(const ad::Var& tokens, const ad::Var& style,
                                                       AttentionTrace* trace) const {
  if (style.size() != static_cast<std::size_t>(dims_.style_dim)) {
    throw ShapeError("cross_attend: style code has " + std::to_string(style.size()) + " entries, expected " +
                     std::to_string(dims_.style_dim));
  }
  ad::Var x = tokens;
  ad::Var s = ad::reshape(style, {dims_.style_dim});
  for (const auto& blk : ca_) {
    const ad::Var context = ad::reshape(blk.context(s), {cfg_.context_tokens, cfg_.width});
    x = ad::add(x, attention(blk, blk.norm1(x), context, trace ? &trace->cross_attention : nullptr));
    x = ad::add(x, feed_forward(blk, x));
    s = ad::add(s, blk.offset(ad::mean_rows(x)));
  }
  return {ad::mean_rows(x), s};
}

ad::Var DirectionHead::modulate(const ad::Var& pooled, const ad::Var& style, const GlobalCode& z_c) const {
  if (z_c.layers != dims_.layers || z_c.width != dims_.layer_width) {
    throw ShapeError("modulate: content code shape does not match the head");
  }
  const ad::Var c = ad::concat_last({pooled, style});
  const ad::Shape shape{dims_.layers, dims_.layer_width};
  const ad::Var gamma = ad::reshape(gamma_(c), shape);
  const ad::Var beta = ad::reshape(beta_(c), shape);
  const ad::Var normed = ad::Var::constant(standardize_layers(z_c), shape);
  const ad::Var delta = ad::add(ad::mul(gamma, normed), beta);
  const std::size_t active = static_cast<std::size_t>(dims_.layers - fine_layers_) * dims_.layer_width;
  std::vector<bool> keep(delta.size(), false);
  std::fill(keep.begin(), keep.begin() + static_cast<std::ptrdiff_t>(active), true);
  return ad::select(keep, delta, ad::Var::zeros(shape));
}

ad::Var DirectionHead::predict_direction(const GlobalCode& z_c, const ad::Var& grid, const ad::Var& style,
                                         AttentionTrace* trace) const {
  const ad::Var tokens = self_attend(tokenize(grid), trace);
  const auto cross = cross_attend(tokens, style, trace);
  return modulate(cross.pooled, cross.style, z_c);
}

ad::Var DirectionHead::predict_frame_latent(const GlobalCode& z_c, const ad::Var& grid, const ad::Var& style,
                                            AttentionTrace* trace) const {
  return ad::add(z_c.as_var(), predict_direction(z_c, grid, style, trace));
}

}  // namespace vidode
