#include "mvclust/network.hpp"

#include <cstring>
#include <fstream>

#include "mvclust/rng.hpp"

namespace mvclust {

namespace {

constexpr char kMagic[4] = {'M', 'V', 'C', 'K'};

void init_stack(DenseStack& stack, Rng& rng) {
  stack.weights.clear();
  stack.biases.clear();
  const auto& w = stack.spec.layer_widths;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    const int fan_in = w[l];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Matrix weight(fan_in, w[l + 1]);
    for (Eigen::Index i = 0; i < weight.rows(); ++i)
      for (Eigen::Index j = 0; j < weight.cols(); ++j)
        weight(i, j) = rng.uniform(-bound, bound);
    stack.weights.push_back(std::move(weight));
    stack.biases.push_back(Matrix::Zero(1, w[l + 1]));
  }
}

Matrix forward_plain(const DenseStack& stack, const Matrix& input) {
  if (input.cols() != stack.spec.input_width()) {
    throw ShapeError("forward: input width " + std::to_string(input.cols()) +
                     " != expected " + std::to_string(stack.spec.input_width()));
  }
  Matrix h = input;
  for (std::size_t l = 0; l < stack.layer_count(); ++l) {
    h = (h * stack.weights[l]).rowwise() + stack.biases[l].row(0);
    if (l + 1 < stack.layer_count()) h = h.cwiseMax(0.0);
  }
  if (stack.spec.final_activation == MLPSpec::Final::softmax) {
    for (Eigen::Index i = 0; i < h.rows(); ++i) {
      const double m = h.row(i).maxCoeff();
      h.row(i) = (h.row(i).array() - m).exp();
      h.row(i) /= h.row(i).sum();
    }
  }
  return h;
}

void collect_stack(std::vector<Matrix*>& out, DenseStack& s) {
  for (std::size_t l = 0; l < s.layer_count(); ++l) {
    out.push_back(&s.weights[l]);
    out.push_back(&s.biases[l]);
  }
}

void collect_stack(std::vector<const Matrix*>& out, const DenseStack& s) {
  for (std::size_t l = 0; l < s.layer_count(); ++l) {
    out.push_back(&s.weights[l]);
    out.push_back(&s.biases[l]);
  }
}

// Little-endian scalar IO, independent of host byte order.
void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw IntegrityError("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void put_f64(std::ostream& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u64(out, bits);
}

double get_f64(std::istream& in) {
  const std::uint64_t bits = get_u64(in);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

struct Fnv1a {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  void update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  }
};

std::uint64_t hash_file_contents(const std::string& bytes) {
  Fnv1a f;
  f.update(bytes.data(), bytes.size());
  return f.h;
}

}  // namespace

void MLPSpec::validate() const {
  if (layer_widths.size() < 2) throw ConfigError("MLPSpec needs at least 2 widths");
  for (const int w : layer_widths)
    if (w < 1) throw ConfigError("MLPSpec widths must be >= 1");
}

std::vector<Matrix*> ModelParams::all_tensors() {
  std::vector<Matrix*> out;
  for (auto& ae : autoencoders) {
    collect_stack(out, ae.encoder);
    collect_stack(out, ae.decoder);
  }
  collect_stack(out, heads.student);
  collect_stack(out, heads.predictor);
  collect_stack(out, heads.teacher);
  return out;
}

std::vector<const Matrix*> ModelParams::all_tensors() const {
  std::vector<const Matrix*> out;
  for (const auto& ae : autoencoders) {
    collect_stack(out, ae.encoder);
    collect_stack(out, ae.decoder);
  }
  collect_stack(out, heads.student);
  collect_stack(out, heads.predictor);
  collect_stack(out, heads.teacher);
  return out;
}

std::vector<Matrix*> ModelParams::student_head_tensors() {
  std::vector<Matrix*> out;
  collect_stack(out, heads.student);
  collect_stack(out, heads.predictor);
  return out;
}

std::vector<Matrix*> ModelParams::encoder_tensors() {
  std::vector<Matrix*> out;
  for (auto& ae : autoencoders) collect_stack(out, ae.encoder);
  return out;
}

ModelParams init_params(const TrainConfig& config, const std::vector<int>& view_dims,
                        int num_clusters, std::uint64_t seed) {
  config.validate();
  if (view_dims.size() < 2) throw ConfigError("init_params: need at least 2 views");
  if (num_clusters < 2) throw ConfigError("init_params: need k >= 2");

  Rng rng(derive_seed(seed, "init"));
  ModelParams params;

  for (std::size_t v = 0; v < view_dims.size(); ++v) {
    AutoencoderParams ae;
    ae.view_index = static_cast<int>(v);
    ae.encoder.spec.layer_widths.push_back(view_dims[v]);
    for (const int w : config.encoder_hidden) ae.encoder.spec.layer_widths.push_back(w);
    ae.encoder.spec.layer_widths.push_back(config.latent_dim);
    ae.decoder.spec.layer_widths.push_back(config.latent_dim);
    for (auto it = config.encoder_hidden.rbegin(); it != config.encoder_hidden.rend(); ++it) {
      ae.decoder.spec.layer_widths.push_back(*it);
    }
    ae.decoder.spec.layer_widths.push_back(view_dims[v]);
    init_stack(ae.encoder, rng);
    init_stack(ae.decoder, rng);
    params.autoencoders.push_back(std::move(ae));
  }

  params.heads.student.spec.layer_widths = {config.latent_dim, config.head_hidden,
                                            config.head_dim};
  params.heads.predictor.spec.layer_widths = {config.head_dim, num_clusters};
  params.heads.predictor.spec.final_activation = MLPSpec::Final::softmax;
  params.heads.teacher.spec.layer_widths = {config.latent_dim, config.head_hidden,
                                            config.head_dim};
  init_stack(params.heads.student, rng);
  init_stack(params.heads.predictor, rng);
  init_stack(params.heads.teacher, rng);
  return params;
}

Matrix encode(const AutoencoderParams& params, const Matrix& x_batch) {
  return forward_plain(params.encoder, x_batch);
}

Matrix decode(const AutoencoderParams& params, const Matrix& z_batch) {
  return forward_plain(params.decoder, z_batch);
}

Matrix student_probs(const HeadParams& heads, const Matrix& z_batch) {
  return forward_plain(heads.predictor, forward_plain(heads.student, z_batch));
}

Matrix teacher_features(const HeadParams& heads, const Matrix& z_batch) {
  return forward_plain(heads.teacher, z_batch);
}

void ema_update(DenseStack& theta, const DenseStack& xi, double mu) {
  if (theta.layer_count() != xi.layer_count()) {
    throw ShapeError("ema_update: stacks have different depth");
  }
  for (std::size_t l = 0; l < theta.layer_count(); ++l) {
    if (theta.weights[l].rows() != xi.weights[l].rows() ||
        theta.weights[l].cols() != xi.weights[l].cols()) {
      throw ShapeError("ema_update: layer " + std::to_string(l) + " shape mismatch");
    }
    theta.weights[l] = mu * theta.weights[l] + (1.0 - mu) * xi.weights[l];
    theta.biases[l] = mu * theta.biases[l] + (1.0 - mu) * xi.biases[l];
  }
}

std::vector<ad::Value> register_stack(ad::Tape& tape, const DenseStack& stack) {
  std::vector<ad::Value> leaves;
  leaves.reserve(stack.layer_count() * 2);
  for (std::size_t l = 0; l < stack.layer_count(); ++l) {
    leaves.push_back(tape.constant(stack.weights[l]));
    leaves.push_back(tape.constant(stack.biases[l]));
  }
  return leaves;
}

ad::Value forward_stack(ad::Tape& tape, const DenseStack& stack, ad::Value input,
                        const std::vector<ad::Value>* taped_params) {
  std::vector<ad::Value> local;
  if (!taped_params) {
    local = register_stack(tape, stack);
    taped_params = &local;
  }
  ad::Value h = input;
  for (std::size_t l = 0; l < stack.layer_count(); ++l) {
    h = ad::add_row_vector(ad::matmul(h, (*taped_params)[2 * l]), (*taped_params)[2 * l + 1]);
    if (l + 1 < stack.layer_count()) h = ad::relu(h);
  }
  if (stack.spec.final_activation == MLPSpec::Final::softmax) h = ad::row_softmax(h);
  return h;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ostringstream body;
  body.write(kMagic, 4);
  put_u64(body, static_cast<std::uint64_t>(ckpt.version));
  body.put(ckpt.stage == Stage::pretrained ? 0 : 1);

  const std::string cfg = to_kv_text(ckpt.config);
  put_u64(body, cfg.size());
  body.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));

  put_u64(body, ckpt.rng_state.size());
  body.write(reinterpret_cast<const char*>(ckpt.rng_state.data()),
             static_cast<std::streamsize>(ckpt.rng_state.size()));

  put_u64(body, ckpt.view_dims.size());
  for (const int d : ckpt.view_dims) put_u64(body, static_cast<std::uint64_t>(d));
  put_u64(body, static_cast<std::uint64_t>(ckpt.num_clusters));

  const auto tensors = ckpt.params.all_tensors();
  put_u64(body, tensors.size());
  for (const Matrix* t : tensors) {
    put_u64(body, static_cast<std::uint64_t>(t->rows()));
    put_u64(body, static_cast<std::uint64_t>(t->cols()));
    for (Eigen::Index i = 0; i < t->rows(); ++i)
      for (Eigen::Index j = 0; j < t->cols(); ++j) put_f64(body, (*t)(i, j));
  }

  const std::string bytes = body.str();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  put_u64(out, hash_file_contents(bytes));
  if (!out) throw LoadError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw LoadError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << file.rdbuf();
  std::string bytes = ss.str();
  if (bytes.size() < 8 + 4 + 8) throw IntegrityError("checkpoint truncated");

  const std::string payload = bytes.substr(0, bytes.size() - 8);
  std::istringstream in(payload);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw IntegrityError("not a checkpoint file (bad magic)");
  }

  // Version is checked before the checksum so a format-mismatched file
  // reports the actionable error.
  Checkpoint ckpt;
  ckpt.version = static_cast<int>(get_u64(in));
  if (ckpt.version != Checkpoint::kVersion) {
    throw VersionError("checkpoint version " + std::to_string(ckpt.version) +
                       ", expected " + std::to_string(Checkpoint::kVersion));
  }

  {
    std::istringstream tail(bytes.substr(bytes.size() - 8));
    const std::uint64_t stored = get_u64(tail);
    if (stored != hash_file_contents(payload)) {
      throw IntegrityError("checkpoint checksum mismatch (corrupt or truncated file)");
    }
  }
  const int stage_byte = in.get();
  if (stage_byte != 0 && stage_byte != 1) throw IntegrityError("bad stage byte");
  ckpt.stage = stage_byte == 0 ? Stage::pretrained : Stage::finetuned;

  const std::uint64_t cfg_len = get_u64(in);
  std::string cfg(cfg_len, '\0');
  in.read(cfg.data(), static_cast<std::streamsize>(cfg_len));
  if (!in) throw IntegrityError("checkpoint truncated");
  ckpt.config = from_kv_text(cfg);

  const std::uint64_t rng_len = get_u64(in);
  ckpt.rng_state.resize(rng_len);
  in.read(reinterpret_cast<char*>(ckpt.rng_state.data()),
          static_cast<std::streamsize>(rng_len));
  if (!in) throw IntegrityError("checkpoint truncated");

  const std::uint64_t num_views = get_u64(in);
  ckpt.view_dims.resize(num_views);
  for (auto& d : ckpt.view_dims) d = static_cast<int>(get_u64(in));
  ckpt.num_clusters = static_cast<int>(get_u64(in));

  // Rebuild the parameter skeleton from the snapshot, then fill tensors in
  // declaration order, verifying every shape.
  ckpt.params = init_params(ckpt.config, ckpt.view_dims, ckpt.num_clusters, 0);
  auto tensors = ckpt.params.all_tensors();
  const std::uint64_t tensor_count = get_u64(in);
  if (tensor_count != tensors.size()) {
    throw IntegrityError("checkpoint tensor count " + std::to_string(tensor_count) +
                         ", expected " + std::to_string(tensors.size()));
  }
  for (Matrix* t : tensors) {
    const auto rows = static_cast<Eigen::Index>(get_u64(in));
    const auto cols = static_cast<Eigen::Index>(get_u64(in));
    if (rows != t->rows() || cols != t->cols()) {
      throw IntegrityError("checkpoint tensor shape mismatch");
    }
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) (*t)(i, j) = get_f64(in);
  }
  return ckpt;
}

}  // namespace mvclust
