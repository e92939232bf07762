#include "vidode/cli.hpp"

#include "vidode/applications.hpp"
#include "vidode/checkpoint.hpp"
#include "vidode/errors.hpp"
#include "vidode/metrics.hpp"
#include "vidode/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#ifndef VIDODE_VERSION
#define VIDODE_VERSION "0.0.0"
#endif

namespace vidode::cli {

namespace fs = std::filesystem;

const char* version() { return VIDODE_VERSION; }

namespace {

std::string num(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string num(long long v) { return std::to_string(v); }

// keys read by the CLI itself rather than a library struct
const std::vector<std::pair<std::string, std::string>> kCliKeys = {
    {"data.root", ""}, {"data.split_fraction", "0.8"}, {"data.seed", "0"}, {"data.time_scale", "1"}};

}  // namespace

Config effective_config(const Config& user) {
  Config e;
  auto put = [&](const std::string& k, const std::string& v) { e.set(k, v); };

  const std::string kind = user.get_string("backend.kind", "toy");
  put("backend.kind", kind);
  Backends backends = make_backends(user);
  if (kind == "toy") {
    const ToyBackendOptions t = toy_options_from_config(user);
    put("backend.profile", user.get_string("backend.profile", "fashion"));
    put("backend.seed", num(static_cast<long long>(t.seed)));
    put("backend.layers", num(static_cast<long long>(t.layers)));
    put("backend.width", num(static_cast<long long>(t.width)));
    put("backend.embed_dim", num(static_cast<long long>(t.embed_dim)));
    put("backend.patch", num(static_cast<long long>(t.patch)));
    put("image.height", num(static_cast<long long>(t.height)));
    put("image.width", num(static_cast<long long>(t.image_width)));
  }
  const ModelConfig m = ModelConfig::from_config(user, backends);
  put("model.seed", num(static_cast<long long>(m.seed)));
  put("dyn.m_d", num(static_cast<long long>(m.dynamics.m_d)));
  put("dyn.n_d", num(static_cast<long long>(m.dynamics.n_d)));
  put("dyn.d_sp", num(static_cast<long long>(m.dynamics.d_sp)));
  put("dyn.d_ode", num(static_cast<long long>(m.dynamics.d_ode)));
  put("head.n_sa", num(static_cast<long long>(m.head.n_sa)));
  put("head.n_ca", num(static_cast<long long>(m.head.n_ca)));
  put("head.heads", num(static_cast<long long>(m.head.heads)));
  put("head.width", num(static_cast<long long>(m.head.width)));
  put("head.ff_mult", num(static_cast<long long>(m.head.ff_mult)));
  put("head.context_tokens", num(static_cast<long long>(m.head.context_tokens)));
  put("head.fine_fraction", num(m.head.fine_fraction));
  put("ode.rtol", num(m.ode.rtol));
  put("ode.atol", num(m.ode.atol));
  put("ode.min_step", num(m.ode.min_step));
  put("ode.max_steps", num(static_cast<long long>(m.ode.max_steps)));
  put("content.pooling", user.get_string("content.pooling", "mean"));
  put("style.image_source", user.get_string("style.image_source", "content_frame"));

  const LossWeights w = LossWeights::from_config(user);
  put("loss.lambda_c", num(w.consistency));
  put("loss.lambda_a", num(w.appearance));
  put("loss.lambda_s", num(w.structure));
  put("loss.lambda_d", num(w.directional));
  put("loss.lambda_l", num(w.latent));
  put("loss.struct_app_tradeoff", num(w.tradeoff));
  put("loss.schedule_start", num(w.schedule_start));
  put("loss.schedule_steps", num(static_cast<long long>(w.schedule_steps)));
  put("loss.n_c", num(static_cast<long long>(w.n_c)));

  const TrainConfig t = TrainConfig::from_config(user);
  put("train.learning_rate", num(t.learning_rate));
  put("train.beta1", num(t.beta1));
  put("train.beta2", num(t.beta2));
  put("train.adam_eps", num(t.adam_eps));
  put("train.batch_size", num(static_cast<long long>(t.batch_size)));
  put("train.frames_per_clip", num(static_cast<long long>(t.frames_per_clip)));
  put("train.max_steps", num(static_cast<long long>(t.max_steps)));
  put("train.seed", num(static_cast<long long>(t.seed)));
  put("train.checkpoint_interval", num(static_cast<long long>(t.checkpoint_interval)));
  put("train.warmup_steps", num(static_cast<long long>(t.warmup_steps)));
  put("train.decay_steps", num(static_cast<long long>(t.decay_steps)));
  put("train.final_lr_fraction", num(t.final_lr_fraction));
  put("train.alpha", num(t.alpha));
  put("train.manipulation", t.manipulation ? "true" : "false");

  for (const auto& [k, v] : kCliKeys) put(k, user.get_string(k, v));
  for (const auto& [k, v] : user.entries()) {
    // adapter backends may take their own keys
    if (!e.contains(k) && !(kind != "toy" && k.rfind("backend.", 0) == 0)) {
      throw ValidationError("unknown config key '" + k + "'");
    }
    if (!e.contains(k)) e.set(k, v);
  }
  return e;
}

namespace {

struct Common {
  std::string config_file;
  std::vector<std::string> sets;
  std::optional<long long> seed;
  std::string out_dir = ".";
  bool dry_run = false;
  std::string checkpoint;
};

std::vector<double> parse_times(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    double v = 0.0;
    const char* b = item.data();
    const char* e = b + item.size();
    while (b < e && *b == ' ') ++b;
    auto r = std::from_chars(b, e, v);
    if (r.ec != std::errc() || r.ptr != e) throw ValidationError("bad time value '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ValidationError("--times needs at least one value");
  return out;
}

CellMask parse_mask(const std::string& text) {
  CellMask m;
  std::stringstream in(text);
  std::string row;
  while (std::getline(in, row, ';')) {
    int cols = 0;
    for (char ch : row) {
      if (ch == '0' || ch == '1') {
        m.values.push_back(ch == '1' ? 1.0 : 0.0);
        ++cols;
      } else if (ch != ',' && ch != ' ') {
        throw ValidationError("mask rows may only contain 0 and 1, got '" + row + "'");
      }
    }
    if (m.rows == 0) m.cols = cols;
    if (cols != m.cols || cols == 0) throw ValidationError("mask rows must be non-empty and of equal length");
    ++m.rows;
  }
  if (m.rows == 0) throw ValidationError("empty mask");
  return m;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

class Session {
 public:
  Session(const Common& c, std::ostream& out) : c_(c), out_(out) {}

  /// base <- config file <- --set <- explicit flags.
  Config resolve(const Config& base, const std::vector<std::pair<std::string, std::string>>& flags) {
    Config cfg = base;
    if (!c_.config_file.empty()) {
      if (!fs::exists(c_.config_file)) throw ValidationError("config file not found: " + c_.config_file);
      cfg.merge(Config::load(c_.config_file));
    }
    for (const auto& s : c_.sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos || eq == 0) throw ValidationError("--set expects key=value, got '" + s + "'");
      cfg.set(s.substr(0, eq), s.substr(eq + 1));
    }
    for (const auto& [k, v] : flags) cfg.set(k, v);
    effective_ = effective_config(cfg);
    return effective_;
  }

  void write_run_record(const std::string& command) {
    fs::create_directories(c_.out_dir);
    {
      std::ofstream f(fs::path(c_.out_dir) / "effective_config.txt", std::ios::trunc);
      f << effective_.dump();
    }
    nlohmann::ordered_json j;
    j["command"] = command;
    j["version"] = version();
    j["config_hash"] = hex64(effective_.hash());
    j["seed"] = c_.seed ? nlohmann::ordered_json(*c_.seed) : nlohmann::ordered_json(nullptr);
    j["checkpoint"] = c_.checkpoint;
    j["dry_run"] = c_.dry_run;
    std::ofstream f(fs::path(c_.out_dir) / "run.json", std::ios::trunc);
    f << j.dump(2) << "\n";
  }

  std::unique_ptr<Model> load_model(const std::vector<std::pair<std::string, std::string>>& flags) {
    if (c_.checkpoint.empty()) throw ValidationError("--checkpoint is required");
    if (!fs::exists(c_.checkpoint)) throw ValidationError("checkpoint not found: " + c_.checkpoint);
    const Checkpoint ck = load_checkpoint(c_.checkpoint);
    const Config cfg = resolve(Config::parse(ck.config), flags);
    auto model = Model::from_config(cfg);
    model->load_parameters(ck.parameters);
    return model;
  }

  const Common& common() const { return c_; }
  std::ostream& out() { return out_; }
  const Config& effective() const { return effective_; }

 private:
  const Common& c_;
  std::ostream& out_;
  Config effective_;
};

std::vector<std::pair<std::string, std::string>> seed_flags(const Common& c, std::initializer_list<const char*> keys) {
  std::vector<std::pair<std::string, std::string>> f;
  if (c.seed) {
    for (const char* k : keys) f.emplace_back(k, std::to_string(*c.seed));
  }
  return f;
}

VideoClip clip_from_dir(const std::string& dir) {
  if (!fs::is_directory(dir)) throw ValidationError("clip directory not found: " + dir);
  return load_clip(dir, fs::path(dir).filename().string(), std::nullopt);
}

std::vector<Image> frames_from_dir(const std::string& dir) {
  if (!fs::is_directory(dir)) throw ValidationError("frames directory not found: " + dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Image> frames;
  for (const auto& f : files) frames.push_back(load_png(f));
  if (frames.empty()) throw ValidationError("no PNG frames in " + dir);
  return frames;
}

void add_common(CLI::App* app, Common& c, bool needs_checkpoint) {
  app->add_option("--config", c.config_file, "Flat key=value config file");
  app->add_option("--set", c.sets, "Config override key=value (repeatable)");
  app->add_option("--seed", c.seed, "Seed, recorded in run.json");
  app->add_option("--out-dir", c.out_dir, "Output directory");
  app->add_flag("--dry-run", c.dry_run, "Validate config and inputs, then stop");
  if (needs_checkpoint) app->add_option("--checkpoint", c.checkpoint, "Trained checkpoint");
}

std::string params_json(const nlohmann::ordered_json& j) { return j.dump(); }

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"vidode: continuous-time text-guided video generation at desk scale", "vidode"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(version()));

  Common common;

  // train
  auto* train = app.add_subcommand("train", "Train a model on a clip dataset");
  add_common(train, common, false);
  std::string data_root, resume;
  std::optional<long long> max_steps, ckpt_interval;
  std::optional<double> lr;
  train->add_option("--data", data_root, "Dataset root");
  train->add_option("--resume", resume, "Checkpoint to resume from");
  train->add_option("--max-steps", max_steps, "Total optimizer steps");
  train->add_option("--checkpoint-interval", ckpt_interval, "Steps between checkpoints");
  train->add_option("--learning-rate", lr, "Adam learning rate");

  // synth
  auto* synth = app.add_subcommand("synth", "Write a synthetic translating-blob dataset");
  add_common(synth, common, false);
  int synth_clips = 5, synth_frames = 8;
  synth->add_option("--clips", synth_clips, "Number of clips")->check(CLI::PositiveNumber);
  synth->add_option("--frames", synth_frames, "Frames per clip")->check(CLI::PositiveNumber);

  // applications
  std::string clip_dir, clip_b_dir, still, src_text, tgt_text, times_text, mask_text;
  double alpha = 1.0, horizon = 2.0;
  int n_inter = 3, n_future = 4;
  std::optional<double> lambda;

  auto* edit = app.add_subcommand("edit", "Text-guided editing of a clip");
  add_common(edit, common, true);
  edit->add_option("--clip", clip_dir, "Clip directory")->required();
  edit->add_option("--src", src_text, "Source description")->required();
  edit->add_option("--tgt", tgt_text, "Target description")->required();
  edit->add_option("--alpha", alpha, "Manipulation strength");
  edit->add_option("--times", times_text, "Comma-separated query times (default: clip timestamps)");

  auto* animate = app.add_subcommand("animate", "Animate a still image with a driving clip");
  add_common(animate, common, true);
  animate->add_option("--still", still, "Still image (PNG)")->required();
  animate->add_option("--driving", clip_b_dir, "Driving clip directory")->required();
  animate->add_option("--times", times_text, "Comma-separated query times (default: driving timestamps)");

  auto* interp = app.add_subcommand("interp", "Interpolate between sparse observed frames");
  add_common(interp, common, true);
  interp->add_option("--clip", clip_dir, "Clip directory with the observed frames")->required();
  interp->add_option("--n", n_inter, "Frames inserted in every gap")->check(CLI::NonNegativeNumber);

  auto* extrap = app.add_subcommand("extrap", "Extrapolate a clip into the future");
  add_common(extrap, common, true);
  extrap->add_option("--clip", clip_dir, "Clip directory")->required();
  extrap->add_option("--horizon", horizon, "Horizon as a multiple of the clip's last time");
  extrap->add_option("--n-future", n_future, "Number of future frames")->check(CLI::NonNegativeNumber);

  auto* blend = app.add_subcommand("blend", "Local motion transfer or dynamics interpolation");
  add_common(blend, common, true);
  blend->add_option("--clip-a", clip_dir, "Content clip (mask 1)")->required();
  blend->add_option("--clip-b", clip_b_dir, "Second motion clip (mask 0)")->required();
  auto* mask_opt = blend->add_option("--mask", mask_text, "Grid mask rows, e.g. 110;011;...");
  auto* lambda_opt = blend->add_option("--lambda", lambda, "Dynamics interpolation weight in [0, 1]");
  mask_opt->excludes(lambda_opt);
  blend->add_option("--times", times_text, "Comma-separated query times (default: clip-a timestamps)");

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a directory of frames");
  add_common(eval, common, true);
  std::string frames_dir, metric, flow_name = "exhaustive";
  eval->add_option("--frames-dir", frames_dir, "Directory of PNG frames (sorted by name)")->required();
  eval->add_option("--metric", metric, "warp, consist or acc")
      ->required()
      ->check(CLI::IsMember({"warp", "consist", "acc"}));
  eval->add_option("--flow-oracle", flow_name, "zero, constant-shift:<dx>,<dy> or exhaustive");
  eval->add_option("--gt", src_text, "Ground-truth description (acc)");
  eval->add_option("--tgt", tgt_text, "Target description (acc)");

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << version() << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitValidation;
  }

  Session s(common, out);
  try {
    CLI::App* cmd = app.get_subcommands().front();
    const std::string name = cmd->get_name();

    if (name == "train") {
      auto flags = seed_flags(common, {"train.seed", "model.seed"});
      if (max_steps) flags.emplace_back("train.max_steps", std::to_string(*max_steps));
      if (ckpt_interval) flags.emplace_back("train.checkpoint_interval", std::to_string(*ckpt_interval));
      if (lr) flags.emplace_back("train.learning_rate", num(*lr));
      if (!data_root.empty()) flags.emplace_back("data.root", data_root);
      std::optional<Checkpoint> ck;
      Config base;
      if (!resume.empty()) {
        if (!fs::exists(resume)) throw ValidationError("resume checkpoint not found: " + resume);
        ck = load_checkpoint(resume);
        base = Config::parse(ck->config);
      }
      const Config cfg = s.resolve(base, flags);
      const std::string root = cfg.get_string("data.root", "");
      if (root.empty()) throw ValidationError("--data (or data.root) is required");
      DatasetOptions dopt;
      dopt.split_fraction = cfg.get_double("data.split_fraction", 0.8);
      dopt.seed = static_cast<std::uint64_t>(cfg.get_int("data.seed", 0));
      dopt.time_scale = cfg.get_double("data.time_scale", 1.0);
      auto clips = load_dataset(root, Split::Train, dopt);
      if (clips.empty()) throw DatasetError("training split of " + root + " is empty");
      s.write_run_record("train");
      if (common.dry_run) {
        out << "dry run: config and " << clips.size() << " training clips ok\n";
        return kExitOk;
      }
      std::vector<ClipPtr> ptrs;
      for (auto& c : clips) ptrs.push_back(std::make_shared<const VideoClip>(std::move(c)));
      auto model = Model::from_config(cfg);
      Trainer trainer(*model, TrainConfig::from_config(cfg), LossWeights::from_config(cfg), cfg);
      if (const char* cache = std::getenv("VIDODE_CACHE"); cache && *cache) trainer.set_cache_directory(cache);
      if (ck) trainer.restore(*ck);
      std::ofstream log(fs::path(common.out_dir) / "losses.tsv", ck ? std::ios::app : std::ios::trunc);
      if (!ck) log << "step\ttotal\tconsistency\tappearance\tstructure\tdirectional\tlatent\n";
      log << std::setprecision(17);
      Trainer::FitOptions o;
      o.steps = std::max(0L, TrainConfig::from_config(cfg).max_steps - trainer.step());
      o.checkpoint_dir = common.out_dir;
      o.checkpoint_interval = TrainConfig::from_config(cfg).checkpoint_interval;
      o.on_step = [&](long step, const LossBreakdown& b) {
        log << step << '\t' << b.total << '\t' << b.consistency << '\t' << b.appearance << '\t' << b.structure
            << '\t' << b.directional << '\t' << b.latent << '\n';
      };
      trainer.fit(ptrs, o);
      out << "trained to step " << trainer.step() << "; checkpoint "
          << checkpoint_path(common.out_dir, trainer.step()).string() << "\n";
      return kExitOk;
    }

    if (name == "synth") {
      const Config cfg = s.resolve({}, {});
      (void)cfg;
      s.write_run_record("synth");
      if (common.dry_run) return kExitOk;
      SyntheticOptions o;
      o.clips = synth_clips;
      o.frames = synth_frames;
      o.seed = static_cast<std::uint64_t>(common.seed.value_or(1));
      const ToyBackendOptions t = toy_options_from_config(s.effective());
      o.height = t.height;
      o.width = t.image_width;
      write_dataset(common.out_dir, make_blob_clips(o));
      out << "wrote " << o.clips << " clips to " << common.out_dir << "\n";
      return kExitOk;
    }

    if (name == "eval") {
      std::unique_ptr<Model> model;
      Backends backends;
      if (!common.checkpoint.empty()) {
        model = s.load_model({});
        backends = model->backends();
      } else {
        backends = make_backends(s.resolve({}, {}));
      }
      const auto frames = frames_from_dir(frames_dir);
      if (metric == "acc" && (src_text.empty() || tgt_text.empty())) {
        throw ValidationError("--metric acc needs --gt and --tgt");
      }
      const FlowOracle oracle = flow_oracle_from_name(flow_name);
      s.write_run_record("eval");
      if (common.dry_run) return kExitOk;
      MetricReport r;
      r.frames = frames.size();
      if (metric == "warp") {
        r.warping_error = warping_error(frames, oracle);
        r.flow_oracle = flow_name;
      } else if (metric == "consist") {
        r.embedding_consistency = embedding_consistency(*backends.embedder, frames);
      } else {
        r.manipulation_accuracy = manipulation_accuracy(*backends.embedder, frames, src_text, tgt_text);
        r.gt_text = src_text;
        r.tgt_text = tgt_text;
      }
      const std::string json = r.to_json();
      std::ofstream(fs::path(common.out_dir) / "report.json", std::ios::trunc) << json;
      out << json;
      return kExitOk;
    }

    // inference applications
    auto model = s.load_model({});
    nlohmann::ordered_json params;
    if (common.seed) params["seed"] = *common.seed;
    Generation g;
    auto times_or = [&](const VideoClip& c) {
      return times_text.empty() ? c.timestamps() : parse_times(times_text);
    };
    if (name == "edit") {
      const VideoClip clip = clip_from_dir(clip_dir);
      const auto times = times_or(clip);
      s.write_run_record(name);
      if (common.dry_run) return kExitOk;
      g = edit_video(*model, clip, src_text, tgt_text, alpha, times);
      params["src"] = src_text;
      params["tgt"] = tgt_text;
      params["alpha"] = alpha;
    } else if (name == "animate") {
      if (!fs::exists(still)) throw ValidationError("still image not found: " + still);
      const Image img = load_png(still);
      const VideoClip driving = clip_from_dir(clip_b_dir);
      const auto times = times_or(driving);
      s.write_run_record(name);
      if (common.dry_run) return kExitOk;
      g = animate_image(*model, img, driving, times);
    } else if (name == "interp") {
      const VideoClip clip = clip_from_dir(clip_dir);
      interpolation_grid(clip.timestamps(), n_inter);
      s.write_run_record(name);
      if (common.dry_run) return kExitOk;
      g = interpolate_video(*model, clip, n_inter);
      params["n_intermediate"] = n_inter;
    } else if (name == "extrap") {
      const VideoClip clip = clip_from_dir(clip_dir);
      extrapolation_grid(clip.timestamps(), horizon, n_future);
      s.write_run_record(name);
      if (common.dry_run) return kExitOk;
      g = extrapolate_video(*model, clip, horizon, n_future);
      params["horizon_factor"] = horizon;
      params["n_future"] = n_future;
    } else if (name == "blend") {
      const VideoClip a = clip_from_dir(clip_dir);
      const VideoClip b = clip_from_dir(clip_b_dir);
      const auto times = times_or(a);
      if (mask_text.empty() && !lambda) throw ValidationError("blend needs --mask or --lambda");
      std::optional<CellMask> mask;
      if (!mask_text.empty()) mask = parse_mask(mask_text);
      s.write_run_record(name);
      if (common.dry_run) return kExitOk;
      if (mask) {
        g = transfer_local_motion(*model, a, b, *mask, times);
        params["mask"] = mask_text;
      } else {
        g = interpolate_motion(*model, a, b, *lambda, times);
        params["lambda"] = *lambda;
      }
    }
    write_generation(g, common.out_dir, name, params_json(params));
    out << "wrote " << g.frames.size() << " frames to " << common.out_dir << "\n";
    return kExitOk;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "runtime failure: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace vidode::cli
