#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "acl/tensor.hpp"

namespace acl {

struct Sample {
  Tensor image;  // [C,H,W]
  int label = 0;
};

struct Dataset {
  std::vector<Sample> samples;
  int channels = 0, height = 0, width = 0;

  bool empty() const { return samples.empty(); }
  size_t size() const { return samples.size(); }
  std::vector<int> class_ids() const;  // sorted unique labels
  Dataset filter_classes(const std::vector<int>& classes) const;
  void append(const Dataset& other);
};

// Batch assembly: stacks the selected samples into one [N,C,H,W] tensor.
Tensor stack_images(const Dataset& data, const std::vector<int>& indices);
std::vector<int> gather_labels(const Dataset& data, const std::vector<int>& indices);

// ---- binary tensor dataset format ----
// magic "ACLD", u32 version, u32 num_samples, u32 C, u32 H, u32 W,
// u8 label[num_samples], f32 pixels[num_samples*C*H*W] (little-endian).
inline constexpr uint32_t kDatasetFormatVersion = 1;

void write_dataset(const std::string& path, const Dataset& data);
Dataset read_dataset(const std::string& path);

// ---- synthetic generator ----

struct AugmentSpec {
  double rotation_max_deg = 0.0;
  int resize_to = 0;  // 0 = keep size

  bool enabled() const { return rotation_max_deg > 0.0 || resize_to > 0; }
};

enum class PatternKind { gratings, blobs };

// Per-class image distributions built from class-specific oriented gratings or
// blob layouts, randomized per sample (phase, jitter, positions, noise) so a
// linear probe on raw pixels stays weak while a small CNN separates classes.
struct SyntheticSpec {
  int num_classes = 10;
  int train_per_class = 100;
  int test_per_class = 20;
  int channels = 1;
  int height = 32;
  int width = 32;
  PatternKind pattern = PatternKind::gratings;
  double noise_sigma = 0.6;
  AugmentSpec augment;

  void validate() const;  // throws ConfigError on degenerate shapes
};

struct SyntheticData {
  Dataset train;
  Dataset test;
};

SyntheticData generate_synthetic(const SyntheticSpec& spec, uint64_t seed);

// ---- training-time augmentation ----
Tensor rotate_image(const Tensor& chw, double degrees);       // bilinear, zero fill
Tensor resize_image(const Tensor& chw, int out_h, int out_w); // bilinear
Tensor augment_image(const Tensor& chw, const AugmentSpec& spec, Rng& rng);

// ---- task split ----
struct TaskSplit {
  std::vector<int> base_classes;            // backbone pretraining classes
  std::vector<std::vector<int>> rounds;     // disjoint class groups, in order

  void validate() const;                    // pairwise disjointness
  std::vector<int> classes_through_round(int round_index) const;  // rounds[0..r] flattened
};

}  // namespace acl
