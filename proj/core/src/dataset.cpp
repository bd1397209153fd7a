#include "mvclust/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mvclust/rng.hpp"

namespace mvclust {

namespace {

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw LoadError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double parse_cell(std::string_view cell, const std::filesystem::path& file,
                  int row, int col) {
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  while (first != last && (*first == ' ' || *first == '\t')) ++first;
  while (last != first && (last[-1] == ' ' || last[-1] == '\t' || last[-1] == '\r')) --last;
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last || first == last) {
    throw ParseError("non-numeric cell in " + file.filename().string() + " at row " +
                     std::to_string(row + 1) + ", column " + std::to_string(col + 1));
  }
  return value;
}

Matrix read_csv_matrix(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw LoadError("cannot open " + file.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  int row_idx = 0;
  Eigen::Index width = -1;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::vector<double> row;
    std::size_t start = 0;
    int col_idx = 0;
    for (;;) {
      const std::size_t comma = line.find(',', start);
      const std::string_view cell(line.data() + start,
                                  (comma == std::string::npos ? line.size() : comma) - start);
      row.push_back(parse_cell(cell, file, row_idx, col_idx));
      ++col_idx;
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (width < 0) width = static_cast<Eigen::Index>(row.size());
    if (static_cast<Eigen::Index>(row.size()) != width) {
      throw ShapeError("ragged row " + std::to_string(row_idx + 1) + " in " +
                       file.filename().string());
    }
    rows.push_back(std::move(row));
    ++row_idx;
  }
  Matrix m(static_cast<Eigen::Index>(rows.size()), std::max<Eigen::Index>(width, 0));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rows[i][j];
  return m;
}

void write_csv_matrix(const Matrix& m, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw LoadError("cannot open " + file.string() + " for writing");
  char buf[40];
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));  // round-trip exact
      if (j) out << ',';
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace

std::vector<int> MultiViewDataset::view_dims() const {
  std::vector<int> dims;
  dims.reserve(views.size());
  for (const auto& v : views) dims.push_back(static_cast<int>(v.data.cols()));
  return dims;
}

void MultiViewDataset::validate() const {
  if (num_views() < 2) throw ShapeError("dataset needs at least 2 views");
  if (num_clusters < 2) throw ConfigError("dataset needs k >= 2");
  const Eigen::Index n = views.front().data.rows();
  if (n < 2) throw ShapeError("dataset needs at least 2 samples");
  for (const auto& v : views) {
    if (v.data.rows() != n) {
      throw ShapeError("view " + std::to_string(v.view_index) + " has " +
                       std::to_string(v.data.rows()) + " rows, expected " +
                       std::to_string(n));
    }
    if (v.data.cols() < 1) throw ShapeError("view with zero columns");
    if (!all_finite(v.data)) {
      throw NumericError("view " + std::to_string(v.view_index) +
                         " contains a non-finite entry");
    }
  }
  if (labels) {
    if (static_cast<Eigen::Index>(labels->size()) != n) {
      throw ShapeError("labels length does not match sample count");
    }
    for (const int l : *labels) {
      if (l < 0 || l >= num_clusters) {
        throw RangeError("label " + std::to_string(l) + " outside [0," +
                         std::to_string(num_clusters) + ")");
      }
    }
  }
}

void SyntheticSpec::validate() const {
  if (n_per_cluster < 2) throw ConfigError("n_per_cluster must be >= 2");
  if (k < 2) throw ConfigError("k must be >= 2");
  if (view_dims.size() < 2) throw ConfigError("need at least 2 views");
  for (const int d : view_dims)
    if (d < 2) throw ConfigError("every view_dim must be >= 2");
  if (!(cluster_separation > 0)) throw ConfigError("cluster_separation must be > 0");
  if (noise_scale < 0) throw ConfigError("noise_scale must be >= 0");
}

MultiViewDataset load_dataset(const std::filesystem::path& root) {
  const auto meta_path = root / "meta.json";
  if (!std::filesystem::exists(meta_path)) {
    throw LoadError("missing meta.json in " + root.string());
  }
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_file(meta_path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("meta.json: " + std::string(e.what()));
  }

  MultiViewDataset ds;
  try {
    ds.name = meta.at("name").get<std::string>();
    ds.num_clusters = meta.at("num_clusters").get<int>();
    const int num_views = meta.at("num_views").get<int>();
    const int num_samples = meta.at("num_samples").get<int>();
    const auto dims = meta.at("view_dims").get<std::vector<int>>();
    const bool has_labels = meta.at("has_labels").get<bool>();
    if (static_cast<int>(dims.size()) != num_views) {
      throw ShapeError("meta.json: view_dims length != num_views");
    }

    for (int v = 0; v < num_views; ++v) {
      const auto file = root / ("view_" + std::to_string(v) + ".csv");
      if (!std::filesystem::exists(file)) {
        throw LoadError("missing view_" + std::to_string(v) + ".csv in " + root.string());
      }
      ViewMatrix vm;
      vm.view_index = v;
      vm.data = read_csv_matrix(file);
      if (vm.data.rows() != num_samples || vm.data.cols() != dims[v]) {
        throw ShapeError("view_" + std::to_string(v) + ".csv is " +
                         std::to_string(vm.data.rows()) + "x" +
                         std::to_string(vm.data.cols()) + ", meta.json declares " +
                         std::to_string(num_samples) + "x" + std::to_string(dims[v]));
      }
      ds.views.push_back(std::move(vm));
    }

    if (has_labels) {
      const auto file = root / "labels.csv";
      if (!std::filesystem::exists(file)) {
        throw LoadError("missing labels.csv in " + root.string());
      }
      const Matrix lm = read_csv_matrix(file);
      if (lm.cols() != 1 || lm.rows() != num_samples) {
        throw ShapeError("labels.csv must have num_samples rows and one column");
      }
      std::vector<int> labels(static_cast<std::size_t>(lm.rows()));
      for (Eigen::Index i = 0; i < lm.rows(); ++i) {
        labels[static_cast<std::size_t>(i)] = static_cast<int>(std::llround(lm(i, 0)));
      }
      ds.labels = std::move(labels);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("meta.json: " + std::string(e.what()));
  }

  ds.validate();
  return ds;
}

void save_dataset(const MultiViewDataset& dataset, const std::filesystem::path& root) {
  dataset.validate();
  std::filesystem::create_directories(root);

  nlohmann::json meta;
  meta["name"] = dataset.name;
  meta["num_views"] = dataset.num_views();
  meta["num_samples"] = static_cast<int>(dataset.num_samples());
  meta["num_clusters"] = dataset.num_clusters;
  meta["view_dims"] = dataset.view_dims();
  meta["has_labels"] = dataset.labels.has_value();
  {
    std::ofstream out(root / "meta.json", std::ios::binary);
    if (!out) throw LoadError("cannot write meta.json in " + root.string());
    out << meta.dump(2) << '\n';
  }

  for (const auto& v : dataset.views) {
    write_csv_matrix(v.data, root / ("view_" + std::to_string(v.view_index) + ".csv"));
  }
  if (dataset.labels) {
    std::ofstream out(root / "labels.csv", std::ios::binary);
    if (!out) throw LoadError("cannot write labels.csv in " + root.string());
    for (const int l : *dataset.labels) out << l << '\n';
  }
}

MultiViewDataset normalize_minmax(const MultiViewDataset& dataset) {
  dataset.validate();
  MultiViewDataset out = dataset;
  for (auto& view : out.views) {
    for (Eigen::Index j = 0; j < view.data.cols(); ++j) {
      const double lo = view.data.col(j).minCoeff();
      const double hi = view.data.col(j).maxCoeff();
      const double range = hi - lo;
      if (range > 0.0) {
        view.data.col(j) = (view.data.col(j).array() - lo) / range;
      } else {
        view.data.col(j).setZero();
      }
    }
  }
  return out;
}

MultiViewDataset synth_generate(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, "synth"));

  const int latent_dim = std::max(4, spec.k);
  const int n = spec.n_per_cluster * spec.k;

  // Cluster centers in the shared latent space, rescaled so the closest pair
  // sits exactly cluster_separation apart (within-cluster stddev is 1).
  Matrix centers(spec.k, latent_dim);
  for (Eigen::Index i = 0; i < centers.rows(); ++i)
    for (Eigen::Index j = 0; j < centers.cols(); ++j) centers(i, j) = rng.normal();
  double min_dist = std::numeric_limits<double>::infinity();
  for (int a = 0; a < spec.k; ++a)
    for (int b = a + 1; b < spec.k; ++b)
      min_dist = std::min(min_dist, (centers.row(a) - centers.row(b)).norm());
  centers *= spec.cluster_separation / min_dist;

  Matrix latent(n, latent_dim);
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int c = 0; c < spec.k; ++c) {
    for (int i = 0; i < spec.n_per_cluster; ++i) {
      const int row = c * spec.n_per_cluster + i;
      labels[static_cast<std::size_t>(row)] = c;
      for (int j = 0; j < latent_dim; ++j) {
        latent(row, j) = centers(c, j) + rng.normal();
      }
    }
  }

  MultiViewDataset ds;
  ds.name = "synthetic";
  ds.num_clusters = spec.k;
  ds.labels = std::move(labels);
  for (std::size_t v = 0; v < spec.view_dims.size(); ++v) {
    const int d = spec.view_dims[v];
    Matrix projection(latent_dim, d);
    for (Eigen::Index i = 0; i < projection.rows(); ++i)
      for (Eigen::Index j = 0; j < projection.cols(); ++j)
        projection(i, j) = rng.normal() / std::sqrt(static_cast<double>(latent_dim));
    ViewMatrix vm;
    vm.view_index = static_cast<int>(v);
    vm.data = latent * projection;
    for (Eigen::Index i = 0; i < vm.data.rows(); ++i)
      for (Eigen::Index j = 0; j < vm.data.cols(); ++j)
        vm.data(i, j) += spec.noise_scale * rng.normal();
    ds.views.push_back(std::move(vm));
  }
  ds.validate();
  return ds;
}

std::vector<std::vector<int>> batch_iter(int num_samples, const BatchPlan& plan,
                                         int epoch) {
  if (plan.batch_size < 2) {
    throw ConfigError("batch_size must be >= 2 (contrastive losses need negatives)");
  }
  std::vector<int> order(static_cast<std::size_t>(num_samples));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(plan.shuffle_seed, "shuffle", static_cast<std::uint64_t>(epoch)));
  rng.shuffle(order);

  std::vector<std::vector<int>> batches;
  for (int start = 0; start < num_samples; start += plan.batch_size) {
    const int end = std::min(start + plan.batch_size, num_samples);
    batches.emplace_back(order.begin() + start, order.begin() + end);
  }
  if (!batches.empty() && static_cast<int>(batches.back().size()) < plan.batch_size &&
      plan.drop_last) {
    batches.pop_back();
  } else if (batches.size() >= 2 && batches.back().size() < 2) {
    auto tail = std::move(batches.back());
    batches.pop_back();
    batches.back().insert(batches.back().end(), tail.begin(), tail.end());
  }
  return batches;
}

std::vector<std::vector<int>> batch_iter(const MultiViewDataset& dataset,
                                         const BatchPlan& plan, int epoch) {
  return batch_iter(static_cast<int>(dataset.num_samples()), plan, epoch);
}

}  // namespace mvclust
