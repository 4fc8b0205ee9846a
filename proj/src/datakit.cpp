#include "semaug/datakit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace semaug {
namespace {

std::vector<double> random_unit(int dim, RngState& rng) {
  std::vector<double> v(static_cast<std::size_t>(dim));
  double norm = 0.0;
  do {
    for (double& x : v) x = rng_normal(rng);
    norm = std::sqrt(dot(v, v));
  } while (norm == 0.0);
  for (double& x : v) x /= norm;
  return v;
}

std::vector<int> random_coords(int dim, int count, RngState& rng) {
  std::vector<int> all(static_cast<std::size_t>(dim));
  std::iota(all.begin(), all.end(), 0);
  rng_shuffle(all, rng);
  all.resize(static_cast<std::size_t>(count));
  std::sort(all.begin(), all.end());
  return all;
}

void check_synth(const SynthConfig& cfg) {
  if (cfg.meta_categories < 1 || cfg.subclasses_per_meta < 1 || cfg.input_dim < 1 ||
      cfg.train_per_class < 1 || cfg.test_per_class < 1 || cfg.pose_states < 1)
    throw std::invalid_argument("gen_synthetic: all counts must be >= 1");
  if (cfg.meta_separation <= 0.0 || cfg.sub_separation <= 0.0)
    throw std::invalid_argument("gen_synthetic: separations must be positive");
  if (cfg.pose_noise_scale < 0.0 || cfg.base_noise_scale < 0.0)
    throw std::invalid_argument("gen_synthetic: noise scales must be nonnegative");
}

Dataset draw_split(const SynthConfig& cfg, const Matrix& class_means,
                   const std::vector<std::vector<int>>& pose_coords, int per_class,
                   RngState rng, const std::string& name) {
  const int classes = class_means.rows;
  const int dim = cfg.input_dim;
  Dataset data;
  data.name = name;
  data.inputs = Matrix(classes * per_class, dim);
  data.labels.reserve(data.inputs.rows);
  data.pose_state.reserve(data.inputs.rows);
  data.pose_coords = pose_coords;
  data.meta_category.resize(classes);
  for (int c = 0; c < classes; ++c) data.meta_category[c] = c / cfg.subclasses_per_meta;

  int row = 0;
  for (int c = 0; c < classes; ++c) {
    for (int s = 0; s < per_class; ++s, ++row) {
      const int pose = static_cast<int>(rng_uniform(rng) * cfg.pose_states);
      double* x = data.inputs.data.data() + static_cast<std::size_t>(row) * dim;
      for (int d = 0; d < dim; ++d)
        x[d] = class_means.at(c, d) + cfg.base_noise_scale * rng_normal(rng);
      for (int coord : pose_coords[static_cast<std::size_t>(c) * cfg.pose_states + pose])
        x[coord] += cfg.pose_noise_scale * rng_normal(rng);
      data.labels.push_back(c);
      data.pose_state.push_back(pose);
    }
  }
  return data;
}

}  // namespace

std::pair<Dataset, Dataset> gen_synthetic(const SynthConfig& cfg, const RngState& rng) {
  check_synth(cfg);
  const int classes = cfg.meta_categories * cfg.subclasses_per_meta;
  const int dim = cfg.input_dim;

  // Class structure (means, pose subspaces) comes from one substream; the
  // train and test draws use two more, making the splits independent.
  RngState structure_rng = rng_derive(rng, 1);
  Matrix class_means(classes, dim);
  for (int m = 0; m < cfg.meta_categories; ++m) {
    const std::vector<double> meta_dir = random_unit(dim, structure_rng);
    for (int s = 0; s < cfg.subclasses_per_meta; ++s) {
      const int c = m * cfg.subclasses_per_meta + s;
      const std::vector<double> sub_dir = random_unit(dim, structure_rng);
      for (int d = 0; d < dim; ++d)
        class_means.at(c, d) =
            cfg.meta_separation * meta_dir[d] + cfg.sub_separation * sub_dir[d];
    }
  }
  const int subspace_dim = std::max(1, dim / 4);
  std::vector<std::vector<int>> pose_coords;
  pose_coords.reserve(static_cast<std::size_t>(classes) * cfg.pose_states);
  for (int c = 0; c < classes; ++c)
    for (int p = 0; p < cfg.pose_states; ++p)
      pose_coords.push_back(random_coords(dim, subspace_dim, structure_rng));

  Dataset train = draw_split(cfg, class_means, pose_coords, cfg.train_per_class,
                             rng_derive(rng, 2), "synthetic-train");
  Dataset test = draw_split(cfg, class_means, pose_coords, cfg.test_per_class,
                            rng_derive(rng, 3), "synthetic-test");
  return {std::move(train), std::move(test)};
}

Example example_at(const Dataset& data, int index) {
  if (index < 0 || index >= data.size()) throw std::invalid_argument("example_at: index out of range");
  const std::span<const double> row = data.inputs.row(index);
  return Example{std::vector<double>(row.begin(), row.end()), data.labels[index]};
}

std::vector<Example> gather(const Dataset& data, std::span<const int> indices) {
  std::vector<Example> out;
  out.reserve(indices.size());
  for (int i : indices) out.push_back(example_at(data, i));
  return out;
}

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

std::uint32_t read_be32(std::istream& is, const std::string& path) {
  unsigned char buf[4];
  is.read(reinterpret_cast<char*>(buf), 4);
  if (!is) throw std::runtime_error("idx file truncated: " + path);
  return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
         (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

void write_be32(std::ostream& os, std::uint32_t v) {
  const unsigned char buf[4] = {static_cast<unsigned char>(v >> 24),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v)};
  os.write(reinterpret_cast<const char*>(buf), 4);
}

std::vector<unsigned char> read_bytes(std::istream& is, std::size_t n, const std::string& path) {
  std::vector<unsigned char> bytes(n);
  is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(n));
  if (!is) throw std::runtime_error("idx file truncated: " + path);
  return bytes;
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream images(images_path, std::ios::binary);
  if (!images) throw std::runtime_error("cannot open idx file: " + images_path);
  if (read_be32(images, images_path) != kImagesMagic)
    throw std::runtime_error("wrong idx image magic: " + images_path);
  const std::uint32_t n = read_be32(images, images_path);
  const std::uint32_t rows = read_be32(images, images_path);
  const std::uint32_t cols = read_be32(images, images_path);
  const std::size_t pixels = std::size_t(rows) * cols;
  const std::vector<unsigned char> pixel_bytes = read_bytes(images, std::size_t(n) * pixels, images_path);

  std::ifstream labels(labels_path, std::ios::binary);
  if (!labels) throw std::runtime_error("cannot open idx file: " + labels_path);
  if (read_be32(labels, labels_path) != kLabelsMagic)
    throw std::runtime_error("wrong idx label magic: " + labels_path);
  const std::uint32_t n_labels = read_be32(labels, labels_path);
  if (n_labels != n)
    throw std::runtime_error("idx image/label count mismatch: " + std::to_string(n) + " vs " +
                             std::to_string(n_labels));
  const std::vector<unsigned char> label_bytes = read_bytes(labels, n_labels, labels_path);

  Dataset data;
  data.name = images_path;
  data.inputs = Matrix(static_cast<int>(n), static_cast<int>(pixels));
  for (std::size_t i = 0; i < pixel_bytes.size(); ++i)
    data.inputs.data[i] = pixel_bytes[i] / 255.0;
  data.labels.reserve(n);
  int max_label = 0;
  for (unsigned char b : label_bytes) {
    data.labels.push_back(b);
    max_label = std::max(max_label, static_cast<int>(b));
  }
  data.meta_category.assign(static_cast<std::size_t>(max_label) + 1, 0);
  std::iota(data.meta_category.begin(), data.meta_category.end(), 0);
  return data;
}

void save_idx(const Dataset& data, int image_rows, int image_cols,
              const std::string& images_path, const std::string& labels_path) {
  if (image_rows * image_cols != data.input_dim())
    throw std::invalid_argument("save_idx: image shape does not match input width");
  std::ofstream images(images_path, std::ios::binary);
  if (!images) throw std::runtime_error("cannot open idx file for writing: " + images_path);
  write_be32(images, kImagesMagic);
  write_be32(images, static_cast<std::uint32_t>(data.size()));
  write_be32(images, static_cast<std::uint32_t>(image_rows));
  write_be32(images, static_cast<std::uint32_t>(image_cols));
  for (double x : data.inputs.data) {
    const double clamped = std::clamp(x, 0.0, 1.0);
    images.put(static_cast<char>(std::lround(clamped * 255.0)));
  }

  std::ofstream labels(labels_path, std::ios::binary);
  if (!labels) throw std::runtime_error("cannot open idx file for writing: " + labels_path);
  write_be32(labels, kLabelsMagic);
  write_be32(labels, static_cast<std::uint32_t>(data.size()));
  for (int label : data.labels) labels.put(static_cast<char>(label));
}

BatchIter::BatchIter(int dataset_size, int batch_size, bool drop_short, RngState rng)
    : size_(dataset_size), batch_(batch_size), rng_(rng) {
  if (batch_size < 1) throw std::invalid_argument("BatchIter: batch size must be >= 1");
  if (batch_size > dataset_size)
    throw std::invalid_argument("BatchIter: batch size exceeds dataset size");
  usable_ = drop_short ? size_ - size_ % batch_ : size_;
  order_.resize(static_cast<std::size_t>(size_));
  std::iota(order_.begin(), order_.end(), 0);
  pos_ = usable_;  // forces a shuffle on the first call
}

std::vector<int> BatchIter::next() {
  if (pos_ >= usable_) {
    rng_shuffle(order_, rng_);
    pos_ = 0;
  }
  const int take = std::min(batch_, usable_ - pos_);
  std::vector<int> batch(order_.begin() + pos_, order_.begin() + pos_ + take);
  pos_ += take;
  return batch;
}

int BatchIter::batches_per_epoch() const {
  return usable_ == size_ ? (size_ + batch_ - 1) / batch_ : usable_ / batch_;
}

}  // namespace semaug
