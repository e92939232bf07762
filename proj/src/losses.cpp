#include "vidode/losses.hpp"

#include "vidode/errors.hpp"

#include <algorithm>
#include <cmath>

namespace vidode {

namespace {

constexpr double kDirectionEps = 1e-8;

}  // namespace

LossWeights LossWeights::from_config(const Config& c) {
  LossWeights w;
  w.consistency = c.get_double("loss.lambda_c", w.consistency);
  w.appearance = c.get_double("loss.lambda_a", w.appearance);
  w.structure = c.get_double("loss.lambda_s", w.structure);
  w.directional = c.get_double("loss.lambda_d", w.directional);
  w.latent = c.get_double("loss.lambda_l", w.latent);
  w.tradeoff = c.get_double("loss.struct_app_tradeoff", w.tradeoff);
  w.schedule_start = c.get_double("loss.schedule_start", w.schedule_start);
  w.schedule_steps = c.get_int("loss.schedule_steps", w.schedule_steps);
  w.n_c = static_cast<int>(c.get_int("loss.n_c", w.n_c));
  w.validate();
  return w;
}

void LossWeights::validate() const {
  for (double v : {consistency, appearance, structure, directional, latent, schedule_start}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("loss weights must be finite and non-negative");
  }
  if (!(tradeoff >= 0.0 && tradeoff <= 1.0)) throw ValidationError("loss.struct_app_tradeoff must lie in [0, 1]");
  if (schedule_steps < 0) throw ValidationError("loss.schedule_steps must be non-negative");
  if (n_c < 2) throw ValidationError("loss.n_c must be at least 2");
}

bool LossBreakdown::operator==(const LossBreakdown& o) const {
  return consistency == o.consistency && appearance == o.appearance && structure == o.structure &&
         directional == o.directional && latent == o.latent && total == o.total;
}

double consistency_schedule(long step, long steps, double start, double end) {
  if (step < 0) throw ValidationError("consistency_schedule: negative step");
  if (steps <= 0 || step >= steps) return end;
  return start + (end - start) * static_cast<double>(step) / static_cast<double>(steps);
}

ad::Var pairwise_dissimilarity(const std::vector<ad::Var>& embeddings) {
  if (embeddings.size() < 2) throw ValidationError("consistency: need at least 2 frames");
  std::vector<ad::Var> unit;
  for (const auto& e : embeddings) unit.push_back(ad::normalize(e));
  std::vector<ad::Var> terms;
  for (std::size_t i = 0; i < unit.size(); ++i)
    for (std::size_t j = i + 1; j < unit.size(); ++j) {
      terms.push_back(ad::add_scalar(ad::neg(ad::dot(unit[i], unit[j])), 1.0));
    }
  // Summing in value order makes the result independent of frame order.
  std::stable_sort(terms.begin(), terms.end(), [](const ad::Var& a, const ad::Var& b) { return a.item() < b.item(); });
  return ad::sum_all(terms);
}

std::vector<std::size_t> spread_indices(std::size_t count, std::size_t n) {
  std::vector<std::size_t> out;
  if (n >= count) {
    for (std::size_t i = 0; i < count; ++i) out.push_back(i);
    return out;
  }
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(n == 1 ? 0 : static_cast<std::size_t>(std::llround(static_cast<double>(i) * (count - 1) / (n - 1))));
  }
  return out;
}

ad::Var consistency_loss(const JointEmbedder& embedder, const std::vector<ad::Var>& frames, int n_c) {
  if (frames.size() < 2) throw ValidationError("consistency_loss: need at least 2 frames");
  if (n_c < 2) throw ValidationError("consistency_loss: n_c must be at least 2");
  std::vector<ad::Var> emb;
  for (std::size_t i : spread_indices(frames.size(), static_cast<std::size_t>(n_c))) {
    emb.push_back(embedder.embed_image(frames[i]));
  }
  return pairwise_dissimilarity(emb);
}

ad::Var appearance_loss(const Backends& b, const GlobalCode& z_c, const std::vector<ad::Var>& frame_latents) {
  if (frame_latents.empty()) throw ValidationError("appearance_loss: no frame latents");
  const ad::Var ref = b.features->appearance(b.decoder->decode(z_c.as_var()));
  std::vector<ad::Var> terms;
  for (const auto& z : frame_latents) {
    terms.push_back(ad::norm(ad::sub(ref, b.features->appearance(b.decoder->decode(z)))));
  }
  return ad::scale(ad::sum_all(terms), 1.0 / static_cast<double>(terms.size()));
}

ad::Var structure_loss(const Backends& b, const std::vector<ad::Var>& input_frames,
                       const std::vector<ad::Var>& frame_latents) {
  if (input_frames.size() != frame_latents.size()) {
    throw ValidationError("structure_loss: " + std::to_string(input_frames.size()) + " input frames but " +
                          std::to_string(frame_latents.size()) + " latents");
  }
  if (input_frames.empty()) throw ValidationError("structure_loss: no frames");
  std::vector<ad::Var> terms;
  for (std::size_t i = 0; i < input_frames.size(); ++i) {
    const ad::Var s_in = b.features->structure(input_frames[i]);
    const ad::Var s_out = b.features->structure(b.decoder->decode(frame_latents[i]));
    terms.push_back(ad::norm(ad::sub(s_in, s_out)));
  }
  return ad::scale(ad::sum_all(terms), 1.0 / static_cast<double>(terms.size()));
}

ad::Var directional_loss_from_embeddings(const std::vector<ad::Var>& input_embeddings,
                                         const std::vector<ad::Var>& generated_embeddings,
                                         const ad::Var& text_direction) {
  if (input_embeddings.size() != generated_embeddings.size() || input_embeddings.empty()) {
    throw ValidationError("directional_loss: frame counts differ or are zero");
  }
  std::vector<ad::Var> diffs;
  for (std::size_t i = 0; i < input_embeddings.size(); ++i) {
    diffs.push_back(ad::sub(generated_embeddings[i], input_embeddings[i]));
  }
  const ad::Var dv = ad::scale(ad::sum_all(diffs), 1.0 / static_cast<double>(diffs.size()));
  const ad::Var nv = ad::norm(dv), nt = ad::norm(text_direction);
  if (nv.item() < kDirectionEps || nt.item() < kDirectionEps) return ad::Var::constant(0.0);
  return ad::add_scalar(ad::neg(ad::dot(ad::normalize(dv), ad::normalize(text_direction))), 1.0);
}

ad::Var directional_loss(const JointEmbedder& embedder, const std::vector<ad::Var>& input_frames,
                         const std::vector<ad::Var>& generated_frames, const std::string& src_text,
                         const std::string& tgt_text) {
  if (src_text.empty() || tgt_text.empty()) throw ValidationError("directional_loss: descriptions must be non-empty");
  if (input_frames.size() != generated_frames.size()) throw ValidationError("directional_loss: frame counts differ");
  const auto src = embedder.embed_text(src_text), tgt = embedder.embed_text(tgt_text);
  std::vector<double> dt(src.dim());
  for (std::size_t i = 0; i < dt.size(); ++i) dt[i] = tgt.values[i] - src.values[i];
  std::vector<ad::Var> in, gen;
  for (std::size_t i = 0; i < input_frames.size(); ++i) {
    in.push_back(embedder.embed_image(input_frames[i]));
    gen.push_back(embedder.embed_image(generated_frames[i]));
  }
  return directional_loss_from_embeddings(in, gen, ad::Var::constant(dt, {static_cast<int>(dt.size())}));
}

ad::Var latent_direction_loss(const std::vector<ad::Var>& directions) {
  if (directions.empty()) throw ValidationError("latent_direction_loss: no directions");
  std::vector<ad::Var> norms;
  for (const auto& d : directions) norms.push_back(ad::norm(d));
  return ad::scale(ad::sum_all(norms), 1.0 / static_cast<double>(norms.size()));
}

WeightedLoss total_loss(const LossTerms& t, const LossWeights& w, long step) {
  w.validate();
  LossBreakdown b;
  b.weights.consistency = w.consistency * consistency_schedule(step, w.schedule_steps, w.schedule_start, 1.0);
  b.weights.appearance = 2.0 * w.tradeoff * w.appearance;
  b.weights.structure = 2.0 * (1.0 - w.tradeoff) * w.structure;
  b.weights.directional = w.directional;
  b.weights.latent = w.latent;

  const ad::Var total = ad::linear_combination(
      {t.consistency, t.appearance, t.structure, t.directional, t.latent},
      {b.weights.consistency, b.weights.appearance, b.weights.structure, b.weights.directional, b.weights.latent});
  b.consistency = t.consistency.item();
  b.appearance = t.appearance.item();
  b.structure = t.structure.item();
  b.directional = t.directional.item();
  b.latent = t.latent.item();
  b.total = total.item();
  return {total, b};
}

}  // namespace vidode
