#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "semaug/datakit.hpp"

using namespace semaug;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / "semaug_datakit_test") {
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

void push_be32(std::vector<std::uint8_t>& v, std::uint32_t x) {
  v.push_back(static_cast<std::uint8_t>(x >> 24));
  v.push_back(static_cast<std::uint8_t>(x >> 16));
  v.push_back(static_cast<std::uint8_t>(x >> 8));
  v.push_back(static_cast<std::uint8_t>(x));
}

}  // namespace

TEST_CASE("synthetic generation: sizes, label layout, and group mapping") {
  SynthConfig cfg;
  // The shipped benchmark: 4 heavily overlapping groups of 8 well-separated
  // subclasses, with pose variation as the dominant intra-class noise source.
  CHECK(cfg.meta_categories == 4);
  CHECK(cfg.subclasses_per_meta == 8);
  CHECK(cfg.train_per_class == 40);
  CHECK(cfg.test_per_class == 100);
  CHECK(cfg.pose_noise_scale > cfg.base_noise_scale);
  CHECK(cfg.sub_separation > cfg.meta_separation);
  const int classes = cfg.meta_categories * cfg.subclasses_per_meta;
  const auto [train, test] = gen_synthetic(cfg, RngState{7, 0});
  CHECK(train.size() == classes * cfg.train_per_class);
  CHECK(test.size() == classes * cfg.test_per_class);
  CHECK(train.input_dim() == 32);
  CHECK(train.classes() == classes);

  std::vector<int> counts(classes, 0);
  for (int label : train.labels) {
    REQUIRE(label >= 0);
    REQUIRE(label < classes);
    ++counts[label];
  }
  for (int c : counts) CHECK(c == cfg.train_per_class);

  for (int c = 0; c < classes; ++c)
    CHECK(train.meta_category[c] == c / cfg.subclasses_per_meta);
  CHECK(train.pose_state.size() == static_cast<std::size_t>(train.size()));
  for (int p : train.pose_state) {
    CHECK(p >= 0);
    CHECK(p < cfg.pose_states);
  }
  // One recorded coordinate subspace per (class, pose) pair, shared between
  // train and test splits.
  CHECK(train.pose_coords.size() ==
        static_cast<std::size_t>(classes * cfg.pose_states));
  CHECK(test.pose_coords == train.pose_coords);
}

TEST_CASE("synthetic generation is deterministic in the seed") {
  SynthConfig cfg;
  cfg.train_per_class = 5;
  cfg.test_per_class = 3;
  const auto [a_train, a_test] = gen_synthetic(cfg, RngState{11, 0});
  const auto [b_train, b_test] = gen_synthetic(cfg, RngState{11, 0});
  CHECK(a_train.inputs.data == b_train.inputs.data);
  CHECK(a_test.inputs.data == b_test.inputs.data);
  CHECK(a_train.labels == b_train.labels);
  CHECK(a_train.pose_state == b_train.pose_state);

  const auto [c_train, c_test] = gen_synthetic(cfg, RngState{12, 0});
  CHECK(a_train.inputs.data != c_train.inputs.data);
  // Train and test are independent draws, not copies.
  CHECK(a_train.inputs.data != a_test.inputs.data);
}

TEST_CASE("zero noise collapses every sample onto its class center") {
  SynthConfig cfg;
  cfg.meta_categories = 2;
  cfg.subclasses_per_meta = 2;
  cfg.input_dim = 8;
  cfg.train_per_class = 4;
  cfg.test_per_class = 2;
  cfg.pose_noise_scale = 0.0;
  cfg.base_noise_scale = 0.0;
  const auto [train, test] = gen_synthetic(cfg, RngState{3, 0});

  // All samples of one class are identical, and equal across splits.
  std::vector<std::vector<double>> center(4);
  for (int i = 0; i < train.size(); ++i) {
    const std::vector<double> row(train.inputs.row(i).begin(), train.inputs.row(i).end());
    if (center[train.labels[i]].empty())
      center[train.labels[i]] = row;
    else
      CHECK(center[train.labels[i]] == row);
  }
  for (int i = 0; i < test.size(); ++i) {
    const std::vector<double> row(test.inputs.row(i).begin(), test.inputs.row(i).end());
    CHECK(center[test.labels[i]] == row);
  }
  // Distinct classes still have distinct centers.
  CHECK(center[0] != center[1]);
  CHECK(center[0] != center[2]);
}

TEST_CASE("group structure: same-group classes sit closer than cross-group classes") {
  SynthConfig cfg;
  cfg.train_per_class = 30;
  cfg.test_per_class = 1;
  cfg.pose_noise_scale = 0.0;
  cfg.base_noise_scale = 0.0;
  const auto [train, test] = gen_synthetic(cfg, RngState{19, 0});

  const int classes = train.classes();
  std::vector<std::vector<double>> center(classes);
  for (int i = 0; i < train.size(); ++i)
    if (center[train.labels[i]].empty())
      center[train.labels[i]] = std::vector<double>(train.inputs.row(i).begin(),
                                                    train.inputs.row(i).end());
  auto dist = [](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t d = 0; d < a.size(); ++d) s += (a[d] - b[d]) * (a[d] - b[d]);
    return std::sqrt(s);
  };
  double within = 0.0, across = 0.0;
  int n_within = 0, n_across = 0;
  for (int a = 0; a < classes; ++a)
    for (int b = a + 1; b < classes; ++b) {
      if (train.meta_category[a] == train.meta_category[b]) {
        within += dist(center[a], center[b]);
        ++n_within;
      } else {
        across += dist(center[a], center[b]);
        ++n_across;
      }
    }
  CHECK(within / n_within < across / n_across);
}

TEST_CASE("sample access helpers copy rows and labels") {
  SynthConfig cfg;
  cfg.meta_categories = 1;
  cfg.subclasses_per_meta = 2;
  cfg.input_dim = 4;
  cfg.train_per_class = 3;
  cfg.test_per_class = 1;
  const auto [train, test] = gen_synthetic(cfg, RngState{5, 0});
  const Example ex = example_at(train, 2);
  CHECK(ex.label == train.labels[2]);
  CHECK(ex.input == std::vector<double>(train.inputs.row(2).begin(), train.inputs.row(2).end()));

  const std::vector<int> idx = {4, 0};
  const std::vector<Example> batch = gather(train, idx);
  REQUIRE(batch.size() == 2);
  CHECK(batch[0].label == train.labels[4]);
  CHECK(batch[1].label == train.labels[0]);
  CHECK_THROWS_AS(example_at(train, 99), std::invalid_argument);
}

TEST_CASE("idx files: hand-written fixture decodes to exact pixel fractions") {
  TempDir tmp;
  std::vector<std::uint8_t> images;
  push_be32(images, 0x00000803);
  push_be32(images, 2);  // two images
  push_be32(images, 2);  // rows
  push_be32(images, 2);  // cols
  const std::uint8_t pixels[8] = {0, 128, 255, 64, 10, 20, 30, 40};
  images.insert(images.end(), pixels, pixels + 8);
  std::vector<std::uint8_t> labels;
  push_be32(labels, 0x00000801);
  push_be32(labels, 2);
  labels.push_back(3);
  labels.push_back(0);
  write_bytes(tmp.path / "imgs", images);
  write_bytes(tmp.path / "lbls", labels);

  const Dataset data = load_idx((tmp.path / "imgs").string(), (tmp.path / "lbls").string());
  CHECK(data.size() == 2);
  CHECK(data.input_dim() == 4);
  CHECK(data.labels == std::vector<int>{3, 0});
  CHECK(data.classes() == 4);  // labels run up to 3
  CHECK(data.inputs.at(0, 0) == 0.0);
  CHECK(data.inputs.at(0, 1) == 128.0 / 255.0);
  CHECK(data.inputs.at(0, 2) == 1.0);
  CHECK(data.inputs.at(0, 3) == 64.0 / 255.0);
  CHECK(data.inputs.at(1, 0) == 10.0 / 255.0);
}

TEST_CASE("idx files: malformed inputs produce distinct errors") {
  TempDir tmp;
  std::vector<std::uint8_t> images;
  push_be32(images, 0x00000803);
  push_be32(images, 1);
  push_be32(images, 1);
  push_be32(images, 2);
  images.push_back(7);
  images.push_back(9);
  std::vector<std::uint8_t> labels;
  push_be32(labels, 0x00000801);
  push_be32(labels, 1);
  labels.push_back(0);
  write_bytes(tmp.path / "imgs", images);
  write_bytes(tmp.path / "lbls", labels);

  // Baseline sanity: the pair loads.
  CHECK_NOTHROW(load_idx((tmp.path / "imgs").string(), (tmp.path / "lbls").string()));

  // Missing file.
  CHECK_THROWS_WITH_AS(
      load_idx((tmp.path / "nope").string(), (tmp.path / "lbls").string()),
      doctest::Contains("cannot open"), std::runtime_error);

  // Wrong magic word.
  std::vector<std::uint8_t> bad_magic = images;
  bad_magic[3] = 0x05;
  write_bytes(tmp.path / "badmagic", bad_magic);
  CHECK_THROWS_WITH_AS(
      load_idx((tmp.path / "badmagic").string(), (tmp.path / "lbls").string()),
      doctest::Contains("magic"), std::runtime_error);

  // Truncated pixel payload.
  std::vector<std::uint8_t> trunc(images.begin(), images.end() - 1);
  write_bytes(tmp.path / "trunc", trunc);
  CHECK_THROWS_WITH_AS(load_idx((tmp.path / "trunc").string(), (tmp.path / "lbls").string()),
                       doctest::Contains("truncated"), std::runtime_error);

  // Image/label count disagreement.
  std::vector<std::uint8_t> two_labels;
  push_be32(two_labels, 0x00000801);
  push_be32(two_labels, 2);
  two_labels.push_back(0);
  two_labels.push_back(1);
  write_bytes(tmp.path / "twolbls", two_labels);
  CHECK_THROWS_WITH_AS(
      load_idx((tmp.path / "imgs").string(), (tmp.path / "twolbls").string()),
      doctest::Contains("mismatch"), std::runtime_error);
}

TEST_CASE("idx files: save and reload round-trips byte-representable pixels") {
  TempDir tmp;
  Dataset data;
  data.inputs = Matrix(3, 4);
  for (int i = 0; i < 12; ++i) data.inputs.data[i] = static_cast<double>(i * 20) / 255.0;
  data.labels = {2, 0, 1};
  data.meta_category = {0, 1, 2};
  save_idx(data, 2, 2, (tmp.path / "imgs").string(), (tmp.path / "lbls").string());
  const Dataset back = load_idx((tmp.path / "imgs").string(), (tmp.path / "lbls").string());
  CHECK(back.inputs.data == data.inputs.data);
  CHECK(back.labels == data.labels);

  // Geometry must match the flat width.
  CHECK_THROWS_AS(
      save_idx(data, 3, 3, (tmp.path / "x").string(), (tmp.path / "y").string()),
      std::invalid_argument);
}

TEST_CASE("batch iteration partitions each epoch exactly once") {
  BatchIter iter(100, 10, /*drop_short=*/true, RngState{9, 0});
  CHECK(iter.batches_per_epoch() == 10);
  for (int epoch = 0; epoch < 3; ++epoch) {
    std::set<int> seen;
    for (int b = 0; b < 10; ++b) {
      const std::vector<int> batch = iter.next();
      REQUIRE(batch.size() == 10);
      seen.insert(batch.begin(), batch.end());
    }
    CHECK(seen.size() == 100);
    CHECK(*seen.begin() == 0);
    CHECK(*seen.rbegin() == 99);
  }
}

TEST_CASE("batch iteration drops the short trailing batch") {
  BatchIter iter(65, 64, /*drop_short=*/true, RngState{13, 0});
  CHECK(iter.batches_per_epoch() == 1);
  for (int k = 0; k < 4; ++k) {
    const std::vector<int> batch = iter.next();
    CHECK(batch.size() == 64);
  }

  BatchIter keep(65, 64, /*drop_short=*/false, RngState{13, 0});
  CHECK(keep.batches_per_epoch() == 2);
  const std::vector<int> full = keep.next();
  const std::vector<int> tail = keep.next();
  CHECK(full.size() == 64);
  CHECK(tail.size() == 1);
}

TEST_CASE("batch iteration is deterministic and reshuffles between epochs") {
  BatchIter a(40, 8, true, RngState{21, 0});
  BatchIter b(40, 8, true, RngState{21, 0});
  std::vector<int> first_epoch_first, second_epoch_first;
  for (int k = 0; k < 5; ++k) {
    const std::vector<int> ba = a.next();
    CHECK(ba == b.next());
    if (k == 0) first_epoch_first = ba;
  }
  second_epoch_first = a.next();
  (void)b.next();
  CHECK(first_epoch_first != second_epoch_first);

  CHECK_THROWS_AS(BatchIter(4, 8, true, RngState{1, 0}), std::invalid_argument);
  CHECK_THROWS_AS(BatchIter(4, 0, true, RngState{1, 0}), std::invalid_argument);
}

TEST_CASE("synthetic config validation") {
  SynthConfig cfg;
  cfg.meta_categories = 0;
  CHECK_THROWS_AS(gen_synthetic(cfg, RngState{1, 0}), std::invalid_argument);
  SynthConfig cfg2;
  cfg2.pose_states = 0;
  CHECK_THROWS_AS(gen_synthetic(cfg2, RngState{1, 0}), std::invalid_argument);
  SynthConfig cfg3;
  cfg3.train_per_class = 0;
  CHECK_THROWS_AS(gen_synthetic(cfg3, RngState{1, 0}), std::invalid_argument);
}
