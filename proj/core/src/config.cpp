#include "mvclust/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace mvclust {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const std::string v = trim(value);
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw ConfigError("config: bad value '" + value + "' for key '" + key + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: bad boolean '" + value + "' for key '" + key + "'");
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (pretrain_epochs < 0 || finetune_epochs < 0) throw ConfigError("epochs must be >= 0");
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be > 0");
  if (!(tau_s > 0) || !(tau_t > 0)) throw ConfigError("temperatures must be > 0");
  if (tau_d < 0 || tau_d >= 1) throw ConfigError("tau_d must be in [0,1)");
  if (momentum_mu < 0 || momentum_mu > 1) throw ConfigError("mu must be in [0,1]");
  if (latent_dim < 2) throw ConfigError("latent_dim must be >= 2");
  if (head_dim < 1) throw ConfigError("head_dim must be >= 1");
  if (encoder_hidden.empty()) throw ConfigError("encoder_hidden must not be empty");
  for (const int w : encoder_hidden)
    if (w < 1) throw ConfigError("encoder_hidden widths must be >= 1");
  if (head_hidden < 1) throw ConfigError("head_hidden must be >= 1");
  if (kmeans_refresh_epochs < 1) throw ConfigError("kmeans_refresh_epochs must be >= 1");
  if (kmeans_max_iter < 1) throw ConfigError("kmeans_max_iter must be >= 1");
  if (!(kmeans_tol >= 0)) throw ConfigError("kmeans_tol must be >= 0");
}

std::string u_mode_name(UMode m) { return m == UMode::uniform ? "uniform" : "gaussian"; }
std::string dark_mode_name(DarkMode m) { return m == DarkMode::soft ? "soft" : "onehot"; }

UMode parse_u_mode(const std::string& s) {
  if (s == "uniform") return UMode::uniform;
  if (s == "gaussian") return UMode::gaussian;
  throw ConfigError("config: u-mode must be 'uniform' or 'gaussian', got '" + s + "'");
}

DarkMode parse_dark_mode(const std::string& s) {
  if (s == "soft") return DarkMode::soft;
  if (s == "onehot") return DarkMode::onehot;
  throw ConfigError("config: dark-mode must be 'soft' or 'onehot', got '" + s + "'");
}

std::string to_kv_text(const TrainConfig& c) {
  std::ostringstream out;
  out.precision(17);
  out << "batch-size=" << c.batch_size << '\n'
      << "pretrain-epochs=" << c.pretrain_epochs << '\n'
      << "finetune-epochs=" << c.finetune_epochs << '\n'
      << "lr=" << c.learning_rate << '\n'
      << "tau-s=" << c.tau_s << '\n'
      << "tau-t=" << c.tau_t << '\n'
      << "tau-d=" << c.tau_d << '\n'
      << "mu=" << c.momentum_mu << '\n'
      << "latent-dim=" << c.latent_dim << '\n'
      << "head-dim=" << c.head_dim << '\n'
      << "encoder-hidden=";
  for (std::size_t i = 0; i < c.encoder_hidden.size(); ++i) {
    if (i) out << ',';
    out << c.encoder_hidden[i];
  }
  out << '\n'
      << "head-hidden=" << c.head_hidden << '\n'
      << "seed=" << c.seed << '\n'
      << "u-mode=" << u_mode_name(c.u_mode) << '\n'
      << "dark-mode=" << dark_mode_name(c.dark_mode) << '\n'
      << "kmeans-refresh-epochs=" << c.kmeans_refresh_epochs << '\n'
      << "include-self-negatives=" << (c.include_self_negatives ? "true" : "false") << '\n'
      << "iic-target=" << (c.iic_target == IicTarget::latent ? "latent" : "predictor") << '\n'
      << "finetune-update-encoders=" << (c.finetune_update_encoders ? "true" : "false") << '\n'
      << "distill-literal-sign=" << (c.distill_literal_sign ? "true" : "false") << '\n'
      << "normalize-input=" << (c.normalize_input ? "true" : "false") << '\n'
      << "normalize-teacher-features=" << (c.normalize_teacher_features ? "true" : "false")
      << '\n'
      << "dark-temp=" << c.dark_temp << '\n'
      << "kmeans-max-iter=" << c.kmeans_max_iter << '\n'
      << "kmeans-tol=" << c.kmeans_tol << '\n';
  return out.str();
}

void apply_kv(TrainConfig& c, const std::string& key, const std::string& value) {
  if (key == "batch-size") c.batch_size = parse_number<int>(key, value);
  else if (key == "pretrain-epochs") c.pretrain_epochs = parse_number<int>(key, value);
  else if (key == "finetune-epochs") c.finetune_epochs = parse_number<int>(key, value);
  else if (key == "lr") c.learning_rate = parse_number<double>(key, value);
  else if (key == "tau-s") c.tau_s = parse_number<double>(key, value);
  else if (key == "tau-t") c.tau_t = parse_number<double>(key, value);
  else if (key == "tau-d") c.tau_d = parse_number<double>(key, value);
  else if (key == "mu") c.momentum_mu = parse_number<double>(key, value);
  else if (key == "latent-dim") c.latent_dim = parse_number<int>(key, value);
  else if (key == "head-dim") c.head_dim = parse_number<int>(key, value);
  else if (key == "encoder-hidden") {
    c.encoder_hidden.clear();
    std::istringstream ss(trim(value));
    std::string tok;
    while (std::getline(ss, tok, ',')) c.encoder_hidden.push_back(parse_number<int>(key, tok));
  }
  else if (key == "head-hidden") c.head_hidden = parse_number<int>(key, value);
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "u-mode") c.u_mode = parse_u_mode(trim(value));
  else if (key == "dark-mode") c.dark_mode = parse_dark_mode(trim(value));
  else if (key == "kmeans-refresh-epochs") c.kmeans_refresh_epochs = parse_number<int>(key, value);
  else if (key == "include-self-negatives") c.include_self_negatives = parse_bool(key, value);
  else if (key == "iic-target") {
    const std::string v = trim(value);
    if (v == "latent") c.iic_target = IicTarget::latent;
    else if (v == "predictor") c.iic_target = IicTarget::predictor;
    else throw ConfigError("config: iic-target must be 'latent' or 'predictor'");
  }
  else if (key == "finetune-update-encoders") c.finetune_update_encoders = parse_bool(key, value);
  else if (key == "distill-literal-sign") c.distill_literal_sign = parse_bool(key, value);
  else if (key == "normalize-input") c.normalize_input = parse_bool(key, value);
  else if (key == "normalize-teacher-features")
    c.normalize_teacher_features = parse_bool(key, value);
  else if (key == "dark-temp") c.dark_temp = parse_number<double>(key, value);
  else if (key == "kmeans-max-iter") c.kmeans_max_iter = parse_number<int>(key, value);
  else if (key == "kmeans-tol") c.kmeans_tol = parse_number<double>(key, value);
  else throw ConfigError("config: unknown key '" + key + "'");
}

namespace {
void apply_kv_text(TrainConfig& c, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config: expected key=value, got '" + line + "'");
    apply_kv(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}
}  // namespace

TrainConfig from_kv_text(const std::string& text) {
  TrainConfig c;
  apply_kv_text(c, text);
  return c;
}

void apply_config_file(TrainConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  apply_kv_text(cfg, ss.str());
}

TrainConfig load_config_file(const std::filesystem::path& path) {
  TrainConfig c;
  apply_config_file(c, path);
  return c;
}

}  // namespace mvclust
