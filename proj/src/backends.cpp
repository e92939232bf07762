#include "vidode/backends.hpp"

#include "vidode/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <random>

namespace vidode {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::uint64_t hash_doubles(std::uint64_t h, const double* data, std::size_t n) {
  const auto* bytes = reinterpret_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n * sizeof(double); ++i) {
    h ^= bytes[i];
    h *= 1099511628211ull;
  }
  return h;
}

constexpr std::uint64_t kFnvOffset = 14695981039346656037ull;

ad::RowMatrix gaussian_matrix(int rows, int cols, double stddev, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, stddev);
  ad::RowMatrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = d(rng);
  return m;
}

Eigen::MatrixXd random_rotation(int n, std::uint64_t seed) {
  Eigen::MatrixXd g = gaussian_matrix(n, n, 1.0, seed);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  // Fix column signs so the result is uniquely determined by the seed.
  Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < n; ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  return q;
}

}  // namespace

GlobalCode GlobalCode::from_var(const ad::Var& v) {
  if (v.rank() != 2) throw ShapeError("GlobalCode::from_var: expected [L_w, d_w]");
  GlobalCode c;
  c.layers = v.dim(0);
  c.width = v.dim(1);
  c.values = v.value();
  return c;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ShapeError("cosine: size mismatch");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  const double d = std::sqrt(aa) * std::sqrt(bb);
  return d > 0.0 ? ab / d : 0.0;
}

Image LatentDecoder::decode(const GlobalCode& code) const {
  ad::NoGradGuard guard;
  return from_var(decode(code.as_var()));
}

EmbeddingVector JointEmbedder::embed_image(const Image& image) const {
  ad::NoGradGuard guard;
  return {embed_image(to_var(image)).value(), EmbeddingSource::Image};
}

FeatureBundle FeatureExtractor::extract(const Image& image) const {
  ad::NoGradGuard guard;
  const ad::Var x = to_var(image);
  FeatureBundle out;
  out.appearance = appearance(x).value();
  const ad::Var s = structure(x);
  out.patches = s.dim(0);
  out.structure = s.value();
  return out;
}

std::uint64_t Backends::checksum() const {
  std::uint64_t h = kFnvOffset;
  for (std::uint64_t part : {decoder->checksum(), inverter->checksum(), embedder->checksum(), features->checksum()}) {
    h ^= part;
    h *= 1099511628211ull;
  }
  return h;
}

// ---------------------------------------------------------------------------
// ToyDecoder

ToyDecoder::ToyDecoder(const ToyBackendOptions& o)
    : layers_(o.layers), width_(o.width), height_(o.height), image_width_(o.image_width) {
  const int pixels = height_ * image_width_ * Image::kChannels;
  const int dim = layers_ * width_;
  if (layers_ <= 0 || width_ <= 0 || dim > pixels) {
    throw ValidationError("toy decoder: latent size must be positive and no larger than the pixel count");
  }

  // Frequencies ordered by normalized magnitude, channel-interleaved.
  struct Freq {
    double key;
    int ky, kx;
  };
  std::vector<Freq> freqs;
  for (int ky = 0; ky < height_; ++ky)
    for (int kx = 0; kx < image_width_; ++kx) {
      const double fy = static_cast<double>(ky) / height_, fx = static_cast<double>(kx) / image_width_;
      freqs.push_back({fy * fy + fx * fx, ky, kx});
    }
  std::stable_sort(freqs.begin(), freqs.end(), [](const Freq& a, const Freq& b) { return a.key < b.key; });

  ad::RowMatrix basis = ad::RowMatrix::Zero(pixels, dim);
  for (int j = 0; j < dim; ++j) {
    const Freq& f = freqs[static_cast<std::size_t>(j / Image::kChannels)];
    const int ch = j % Image::kChannels;
    const double cy = f.ky == 0 ? std::sqrt(1.0 / height_) : std::sqrt(2.0 / height_);
    const double cx = f.kx == 0 ? std::sqrt(1.0 / image_width_) : std::sqrt(2.0 / image_width_);
    for (int y = 0; y < height_; ++y) {
      const double by = cy * std::cos(kPi * (2 * y + 1) * f.ky / (2.0 * height_));
      for (int x = 0; x < image_width_; ++x) {
        const double bx = cx * std::cos(kPi * (2 * x + 1) * f.kx / (2.0 * image_width_));
        basis((y * image_width_ + x) * Image::kChannels + ch, j) = by * bx;
      }
    }
  }

  weight_.resize(pixels, dim);
  for (int l = 0; l < layers_; ++l) {
    const Eigen::MatrixXd q = random_rotation(width_, o.seed * 1000003ull + 17ull + static_cast<std::uint64_t>(l));
    weight_.middleCols(l * width_, width_) = basis.middleCols(l * width_, width_) * q;
  }

  bias_ = Eigen::VectorXd::Zero(pixels);
  if (!o.zero_bias) {
    std::mt19937_64 rng(o.seed * 7919ull + 3ull);
    std::uniform_real_distribution<double> u(0.45, 0.55);
    for (int i = 0; i < pixels; ++i) bias_(i) = u(rng);
  }
}

ad::Var ToyDecoder::decode(const ad::Var& code) const {
  if (code.size() != static_cast<std::size_t>(layers_) * width_) {
    throw ShapeError("decode: expected code [" + std::to_string(layers_) + "," + std::to_string(width_) + "], got " +
                     ad::shape_str(code.shape()));
  }
  ad::Var flat = ad::affine_frozen(weight_, &bias_, code);
  return ad::reshape(ad::clamp(flat, 0.0, 1.0), {height_, image_width_, Image::kChannels});
}

Eigen::VectorXd ToyDecoder::decode_unclamped(const GlobalCode& code) const {
  if (code.values.size() != static_cast<std::size_t>(weight_.cols())) throw ShapeError("decode: code size mismatch");
  return weight_ * Eigen::Map<const Eigen::VectorXd>(code.values.data(), code.values.size()) + bias_;
}

std::uint64_t ToyDecoder::checksum() const {
  std::uint64_t h = hash_doubles(kFnvOffset, weight_.data(), weight_.size());
  return hash_doubles(h, bias_.data(), bias_.size());
}

// ---------------------------------------------------------------------------
// ToyInverter

ToyInverter::ToyInverter(const ToyDecoder& decoder)
    : layers_(decoder.layers()),
      width_(decoder.width()),
      height_(decoder.image_height()),
      image_width_(decoder.image_width()),
      bias_(decoder.bias()) {
  // W has full column rank, so pinv(W) = (W^T W)^{-1} W^T.
  const ad::RowMatrix& w = decoder.matrix();
  const Eigen::MatrixXd gram = w.transpose() * w;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    throw ValidationError("toy inverter: decoder matrix is rank deficient");
  }
  pinv_ = ldlt.solve(Eigen::MatrixXd(w.transpose()));
}

GlobalCode ToyInverter::invert(const Image& image) const {
  if (image.height != height_ || image.width != image_width_) {
    throw ShapeError("invert: expected " + std::to_string(height_) + "x" + std::to_string(image_width_) +
                     " image, got " + std::to_string(image.height) + "x" + std::to_string(image.width));
  }
  Eigen::Map<const Eigen::VectorXd> x(image.pixels.data(), image.pixels.size());
  GlobalCode code(layers_, width_);
  Eigen::Map<Eigen::VectorXd>(code.values.data(), code.values.size()).noalias() = pinv_ * (x - bias_);
  return code;
}

std::uint64_t ToyInverter::checksum() const {
  std::uint64_t h = hash_doubles(kFnvOffset, pinv_.data(), pinv_.size());
  return hash_doubles(h, bias_.data(), bias_.size());
}

// ---------------------------------------------------------------------------
// ToyEmbedder

ToyEmbedder::ToyEmbedder(const ToyBackendOptions& o) : dim_(o.embed_dim), pool_(o.embed_pool) {
  if (o.height % pool_ != 0 || o.image_width % pool_ != 0) {
    throw ValidationError("toy embedder: image size must be divisible by the pooling factor");
  }
  const int in_dim = (o.height / pool_) * (o.image_width / pool_) * Image::kChannels;
  image_proj_ = gaussian_matrix(dim_, in_dim, 1.0 / std::sqrt(static_cast<double>(in_dim)), o.seed * 31ull + 5ull);
  text_proj_ = gaussian_matrix(dim_, dim_, 1.0 / std::sqrt(static_cast<double>(dim_)), o.seed * 37ull + 11ull);
}

ad::Var ToyEmbedder::embed_image(const ad::Var& image) const {
  if (image.rank() != 3 || image.dim(2) != Image::kChannels) {
    throw ShapeError("embed_image: expected [H,W,3], got " + ad::shape_str(image.shape()));
  }
  ad::Var pooled = ad::avg_pool2d(image, pool_, pool_);
  return ad::affine_frozen(image_proj_, nullptr, pooled);
}

std::vector<std::string> ToyEmbedder::tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(cur);
  return tokens;
}

EmbeddingVector ToyEmbedder::embed_text(const std::string& text) const {
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(dim_);
  for (const auto& tok : tokenize(text)) counts(static_cast<Eigen::Index>(fnv1a64(tok) % dim_)) += 1.0;
  Eigen::VectorXd e = text_proj_ * counts;
  return {std::vector<double>(e.data(), e.data() + e.size()), EmbeddingSource::Text};
}

std::uint64_t ToyEmbedder::checksum() const {
  std::uint64_t h = hash_doubles(kFnvOffset, image_proj_.data(), image_proj_.size());
  return hash_doubles(h, text_proj_.data(), text_proj_.size());
}

// ---------------------------------------------------------------------------
// ToyFeatureExtractor

ad::Var ToyFeatureExtractor::patch_statistics(const ad::Var& image) const {
  if (image.rank() != 3 || image.dim(2) != Image::kChannels) {
    throw ShapeError("features: expected [H,W,3], got " + ad::shape_str(image.shape()));
  }
  ad::Var mean = ad::avg_pool2d(image, patch_, patch_);
  ad::Var second = ad::avg_pool2d(ad::square(image), patch_, patch_);
  ad::Var var = ad::sub(second, ad::square(mean));
  ad::Var stddev = ad::sqrt(ad::add_scalar(var, kVarianceEps));
  ad::Var stats = ad::concat_last({mean, stddev});
  return ad::reshape(stats, {mean.dim(0) * mean.dim(1), 2 * Image::kChannels});
}

ad::Var ToyFeatureExtractor::appearance(const ad::Var& image) const {
  ad::Var stats = patch_statistics(image);
  return ad::reshape(stats, {static_cast<int>(stats.size())});
}

ad::Var ToyFeatureExtractor::structure(const ad::Var& image) const {
  ad::Var stats = patch_statistics(image);
  const int patches = stats.dim(0);
  ad::Var centered = ad::add_bias(stats, ad::neg(ad::mean_rows(stats)));
  ad::Var anchor = ad::Var::constant(std::vector<double>(patches, kAnchor), {patches, 1});
  ad::Var unit = ad::normalize_rows(ad::concat_last({centered, anchor}));
  return ad::matmul(unit, ad::transpose(unit));
}

std::uint64_t ToyFeatureExtractor::checksum() const {
  const double p = patch_;
  return hash_doubles(kFnvOffset, &p, 1);
}

// ---------------------------------------------------------------------------

Backends make_toy_backends(const ToyBackendOptions& options) {
  auto decoder = std::make_shared<ToyDecoder>(options);
  Backends b;
  b.inverter = std::make_shared<ToyInverter>(*decoder);
  b.decoder = decoder;
  b.embedder = std::make_shared<ToyEmbedder>(options);
  b.features = std::make_shared<ToyFeatureExtractor>(options);
  return b;
}

namespace {

std::map<std::string, BackendFactory>& adapter_registry() {
  static std::map<std::string, BackendFactory> registry;
  return registry;
}

std::mutex& registry_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

void register_backend_adapter(const std::string& name, BackendFactory factory) {
  std::lock_guard lock(registry_mutex());
  adapter_registry()[name] = std::move(factory);
}

ToyBackendOptions toy_options_from_config(const Config& config) {
  ToyBackendOptions o;
  const std::string profile = config.get_string("backend.profile", "fashion");
  if (profile == "face") {
    o.height = 32;
    o.image_width = 32;
  } else if (profile != "fashion") {
    throw ValidationError("backend.profile must be 'fashion' or 'face', got '" + profile + "'");
  }
  o.seed = static_cast<std::uint64_t>(config.get_int("backend.seed", static_cast<long long>(o.seed)));
  o.layers = static_cast<int>(config.get_int("backend.layers", o.layers));
  o.width = static_cast<int>(config.get_int("backend.width", o.width));
  o.embed_dim = static_cast<int>(config.get_int("backend.embed_dim", o.embed_dim));
  o.height = static_cast<int>(config.get_int("image.height", o.height));
  o.image_width = static_cast<int>(config.get_int("image.width", o.image_width));
  o.patch = static_cast<int>(config.get_int("backend.patch", o.patch));
  return o;
}

Backends make_backends(const Config& config) {
  const std::string kind = config.get_string("backend.kind", "toy");
  if (kind == "toy") return make_toy_backends(toy_options_from_config(config));
  const std::string prefix = "adapter:";
  if (kind.rfind(prefix, 0) == 0) {
    const std::string name = kind.substr(prefix.size());
    BackendFactory factory;
    {
      std::lock_guard lock(registry_mutex());
      auto it = adapter_registry().find(name);
      if (it == adapter_registry().end()) throw ValidationError("no backend adapter registered as '" + name + "'");
      factory = it->second;
    }
    return factory(config);
  }
  throw ValidationError("backend.kind must be 'toy' or 'adapter:<name>', got '" + kind + "'");
}

}  // namespace vidode
