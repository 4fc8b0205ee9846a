#pragma once

#include <string>
#include <utility>
#include <vector>

#include "semaug/networks.hpp"
#include "semaug/numkit.hpp"

// Synthetic fine-grained classification data — coarse groups of close
// subclasses where the meaningful variation directions differ per sample —
// plus reading and writing the IDX binary image format.

namespace semaug {

struct Dataset {
  Matrix inputs;                   // one sample per row
  std::vector<int> labels;
  std::vector<int> meta_category;  // coarse group of each class
  std::string name;

  // Generation log (synthetic data only): the latent pose drawn per sample
  // and the coordinate subspace carrying each (class, pose) pair's noise.
  std::vector<int> pose_state;
  std::vector<std::vector<int>> pose_coords;  // indexed class * poses + pose

  int size() const { return inputs.rows; }
  int input_dim() const { return inputs.cols; }
  int classes() const { return static_cast<int>(meta_category.size()); }
};

struct SynthConfig {
  int meta_categories = 4;
  int subclasses_per_meta = 8;
  int input_dim = 32;
  int train_per_class = 40;
  int test_per_class = 100;
  double meta_separation = 1.2;
  double sub_separation = 1.8;
  int pose_states = 2;
  double pose_noise_scale = 1.2;
  double base_noise_scale = 0.2;
};

// Each coarse group gets a mean on a random direction; each subclass offsets
// it; each sample draws a latent pose and adds pose noise restricted to that
// pose's coordinate subspace plus isotropic base noise. Train and test are
// independent draws with the same class structure.
std::pair<Dataset, Dataset> gen_synthetic(const SynthConfig& cfg, const RngState& rng);

Example example_at(const Dataset& data, int index);
std::vector<Example> gather(const Dataset& data, std::span<const int> indices);

// IDX binary format: big-endian magic (0x00000803 images, 0x00000801 labels)
// and dimension sizes, then raw unsigned bytes; pixels scaled to [0, 1].
Dataset load_idx(const std::string& images_path, const std::string& labels_path);
void save_idx(const Dataset& data, int image_rows, int image_cols,
              const std::string& images_path, const std::string& labels_path);

// Seeded epoch shuffling cut into contiguous index batches; with drop_short
// the trailing partial batch of an epoch is skipped.
class BatchIter {
 public:
  BatchIter(int dataset_size, int batch_size, bool drop_short, RngState rng);

  std::vector<int> next();
  int batches_per_epoch() const;

 private:
  int size_;
  int batch_;
  int usable_;
  RngState rng_;
  std::vector<int> order_;
  int pos_ = 0;
};

}  // namespace semaug
