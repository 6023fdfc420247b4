#include "acl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include "acl/errors.hpp"

namespace acl {

std::vector<int> Dataset::class_ids() const {
  std::set<int> s;
  for (const auto& smp : samples) s.insert(smp.label);
  return {s.begin(), s.end()};
}

Dataset Dataset::filter_classes(const std::vector<int>& classes) const {
  const std::set<int> keep(classes.begin(), classes.end());
  Dataset out;
  out.channels = channels;
  out.height = height;
  out.width = width;
  for (const auto& smp : samples)
    if (keep.count(smp.label)) out.samples.push_back(smp);
  return out;
}

void Dataset::append(const Dataset& other) {
  if (empty()) {
    channels = other.channels;
    height = other.height;
    width = other.width;
  } else if (channels != other.channels || height != other.height || width != other.width) {
    throw ShapeError("dataset append: image shape mismatch");
  }
  samples.insert(samples.end(), other.samples.begin(), other.samples.end());
}

Tensor stack_images(const Dataset& data, const std::vector<int>& indices) {
  if (indices.empty()) throw ShapeError("stack_images: empty batch");
  const auto& first = data.samples[static_cast<size_t>(indices[0])].image;
  Tensor out({static_cast<int>(indices.size()), first.dim(0), first.dim(1), first.dim(2)});
  const size_t per = first.data.size();
  for (size_t i = 0; i < indices.size(); ++i) {
    const auto& img = data.samples[static_cast<size_t>(indices[i])].image;
    std::copy(img.data.begin(), img.data.end(), out.data.begin() + static_cast<int64_t>(i * per));
  }
  return out;
}

std::vector<int> gather_labels(const Dataset& data, const std::vector<int>& indices) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (int i : indices) out.push_back(data.samples[static_cast<size_t>(i)].label);
  return out;
}

namespace {
constexpr char kMagic[4] = {'A', 'C', 'L', 'D'};

template <typename T>
void write_pod(std::ofstream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T read_pod(std::ifstream& is, const std::string& path) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw CheckpointError("truncated dataset file: " + path);
  return v;
}
}  // namespace

void write_dataset(const std::string& path, const Dataset& data) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot open for writing: " + path);
  os.write(kMagic, 4);
  write_pod<uint32_t>(os, kDatasetFormatVersion);
  write_pod<uint32_t>(os, static_cast<uint32_t>(data.samples.size()));
  write_pod<uint32_t>(os, static_cast<uint32_t>(data.channels));
  write_pod<uint32_t>(os, static_cast<uint32_t>(data.height));
  write_pod<uint32_t>(os, static_cast<uint32_t>(data.width));
  for (const auto& smp : data.samples) {
    if (smp.label < 0 || smp.label > 255)
      throw CheckpointError("dataset format stores u8 labels, got " + std::to_string(smp.label));
    const auto label = static_cast<uint8_t>(smp.label);
    write_pod<uint8_t>(os, label);
  }
  std::vector<float> px;
  for (const auto& smp : data.samples) {
    px.assign(smp.image.data.begin(), smp.image.data.end());
    os.write(reinterpret_cast<const char*>(px.data()),
             static_cast<std::streamsize>(px.size() * sizeof(float)));
  }
  if (!os) throw CheckpointError("write failed: " + path);
}

Dataset read_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw CheckpointError("bad magic bytes, not an ACLD dataset: " + path);
  const auto version = read_pod<uint32_t>(is, path);
  if (version != kDatasetFormatVersion)
    throw CheckpointError("unsupported dataset version " + std::to_string(version) + ": " + path);
  const auto n = read_pod<uint32_t>(is, path);
  Dataset out;
  out.channels = static_cast<int>(read_pod<uint32_t>(is, path));
  out.height = static_cast<int>(read_pod<uint32_t>(is, path));
  out.width = static_cast<int>(read_pod<uint32_t>(is, path));
  if (out.channels <= 0 || out.height <= 0 || out.width <= 0)
    throw CheckpointError("degenerate image shape in dataset: " + path);
  std::vector<uint8_t> labels(n);
  is.read(reinterpret_cast<char*>(labels.data()), static_cast<std::streamsize>(n));
  if (!is) throw CheckpointError("truncated label block: " + path);
  const size_t per = static_cast<size_t>(out.channels) * out.height * out.width;
  std::vector<float> px(per);
  out.samples.reserve(n);
  for (uint32_t i = 0; i < n; ++i) {
    is.read(reinterpret_cast<char*>(px.data()), static_cast<std::streamsize>(per * sizeof(float)));
    if (!is) throw CheckpointError("truncated pixel payload: " + path);
    Sample smp;
    smp.label = labels[i];
    smp.image = Tensor({out.channels, out.height, out.width});
    for (size_t j = 0; j < per; ++j) smp.image.data[j] = static_cast<double>(px[j]);
    out.samples.push_back(std::move(smp));
  }
  return out;
}

void SyntheticSpec::validate() const {
  if (num_classes < 2) throw ConfigError("synthetic: need at least 2 classes");
  if (num_classes > 255) throw ConfigError("synthetic: dataset format stores u8 labels");
  if (channels < 1 || height < 4 || width < 4)
    throw ConfigError("synthetic: degenerate image shape " + std::to_string(channels) + "x" +
                      std::to_string(height) + "x" + std::to_string(width));
  if (train_per_class < 1 || test_per_class < 1)
    throw ConfigError("synthetic: per-class counts must be positive");
  if (noise_sigma < 0.0) throw ConfigError("synthetic: noise sigma must be non-negative");
}

namespace {

void standardize(Tensor& img) {
  double mean = 0.0;
  for (double v : img.data) mean += v;
  mean /= static_cast<double>(img.data.size());
  double var = 0.0;
  for (double v : img.data) var += (v - mean) * (v - mean);
  var /= static_cast<double>(img.data.size());
  const double inv = 1.0 / std::sqrt(var + 1e-8);
  for (double& v : img.data) v = (v - mean) * inv;
}

// Class identity lives in (orientation, frequency); phase, small jitters and
// pixel noise are randomized per sample so class means vanish pixelwise.
Tensor grating_sample(const SyntheticSpec& spec, int cls, Rng& rng) {
  const int orient_count = (spec.num_classes + 1) / 2;
  const int freq_band = cls / orient_count;
  const int orient_idx = cls % orient_count;
  const double theta0 = M_PI * static_cast<double>(orient_idx) / static_cast<double>(orient_count);
  const double cycles0 = freq_band == 0 ? 2.5 : 5.0;

  std::uniform_real_distribution<double> phase_d(0.0, 2.0 * M_PI);
  std::uniform_real_distribution<double> jitter_d(-1.0, 1.0);
  std::normal_distribution<double> noise_d(0.0, spec.noise_sigma);
  const double phase = phase_d(rng);
  const double theta = theta0 + jitter_d(rng) * (M_PI / 60.0);  // +-3 degrees
  const double cycles = cycles0 * (1.0 + 0.05 * jitter_d(rng));
  const double amp = 1.0 + 0.1 * jitter_d(rng);
  const double k = 2.0 * M_PI * cycles / static_cast<double>(std::min(spec.height, spec.width));
  const double kx = k * std::cos(theta), ky = k * std::sin(theta);

  Tensor img({spec.channels, spec.height, spec.width});
  for (int c = 0; c < spec.channels; ++c)
    for (int y = 0; y < spec.height; ++y)
      for (int x = 0; x < spec.width; ++x)
        img.data[(static_cast<size_t>(c) * spec.height + y) * spec.width + x] =
            amp * std::sin(kx * x + ky * y + phase) + noise_d(rng);
  standardize(img);
  return img;
}

// Class identity lives in (blob count, blob radius); centers are uniform so
// the per-pixel class mean is flat.
Tensor blob_sample(const SyntheticSpec& spec, int cls, Rng& rng) {
  const int count = 2 + cls % 5;
  const double radius = 1.2 + 0.6 * static_cast<double>((cls / 5) % 3);
  std::uniform_real_distribution<double> pos_y(1.0, spec.height - 2.0);
  std::uniform_real_distribution<double> pos_x(1.0, spec.width - 2.0);
  std::normal_distribution<double> noise_d(0.0, spec.noise_sigma);

  Tensor img({spec.channels, spec.height, spec.width});
  for (int b = 0; b < count; ++b) {
    const double cy = pos_y(rng), cx = pos_x(rng);
    for (int y = 0; y < spec.height; ++y)
      for (int x = 0; x < spec.width; ++x) {
        const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
        const double v = std::exp(-d2 / (2.0 * radius * radius));
        for (int c = 0; c < spec.channels; ++c)
          img.data[(static_cast<size_t>(c) * spec.height + y) * spec.width + x] += v;
      }
  }
  for (double& v : img.data) v += noise_d(rng);
  standardize(img);
  return img;
}

Dataset make_split(const SyntheticSpec& spec, int per_class, Rng& rng) {
  Dataset out;
  out.channels = spec.channels;
  out.height = spec.height;
  out.width = spec.width;
  out.samples.reserve(static_cast<size_t>(per_class) * spec.num_classes);
  for (int cls = 0; cls < spec.num_classes; ++cls)
    for (int i = 0; i < per_class; ++i) {
      Sample smp;
      smp.label = cls;
      smp.image = spec.pattern == PatternKind::gratings ? grating_sample(spec, cls, rng)
                                                        : blob_sample(spec, cls, rng);
      out.samples.push_back(std::move(smp));
    }
  return out;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec, uint64_t seed) {
  spec.validate();
  SyntheticData out;
  Rng train_rng(derive_seed(seed, 0x7261696e));  // distinct train/test streams
  Rng test_rng(derive_seed(seed, 0x74657374));
  out.train = make_split(spec, spec.train_per_class, train_rng);
  out.test = make_split(spec, spec.test_per_class, test_rng);
  return out;
}

Tensor rotate_image(const Tensor& chw, double degrees) {
  const int c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
  const double rad = degrees * M_PI / 180.0;
  const double cs = std::cos(rad), sn = std::sin(rad);
  const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
  Tensor out({c, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      // inverse mapping with bilinear sampling, zero outside
      const double sy = cy + (y - cy) * cs - (x - cx) * sn;
      const double sx = cx + (y - cy) * sn + (x - cx) * cs;
      const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
      const double fy = sy - y0, fx = sx - x0;
      for (int ci = 0; ci < c; ++ci) {
        auto px = [&](int yy, int xx) -> double {
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) return 0.0;
          return chw.data[(static_cast<size_t>(ci) * h + yy) * w + xx];
        };
        out.data[(static_cast<size_t>(ci) * h + y) * w + x] =
            (1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x0 + 1)) +
            fy * ((1 - fx) * px(y0 + 1, x0) + fx * px(y0 + 1, x0 + 1));
      }
    }
  return out;
}

Tensor resize_image(const Tensor& chw, int out_h, int out_w) {
  const int c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
  if (out_h < 1 || out_w < 1) throw ShapeError("resize_image: non-positive target size");
  if (out_h == h && out_w == w) return chw;
  Tensor out({c, out_h, out_w});
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) {
      const double sy = (y + 0.5) * h / out_h - 0.5;
      const double sx = (x + 0.5) * w / out_w - 0.5;
      const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
      const double fy = sy - y0, fx = sx - x0;
      for (int ci = 0; ci < c; ++ci) {
        auto px = [&](int yy, int xx) -> double {
          yy = std::clamp(yy, 0, h - 1);
          xx = std::clamp(xx, 0, w - 1);
          return chw.data[(static_cast<size_t>(ci) * h + yy) * w + xx];
        };
        out.data[(static_cast<size_t>(ci) * out_h + y) * out_w + x] =
            (1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x0 + 1)) +
            fy * ((1 - fx) * px(y0 + 1, x0) + fx * px(y0 + 1, x0 + 1));
      }
    }
  return out;
}

Tensor augment_image(const Tensor& chw, const AugmentSpec& spec, Rng& rng) {
  Tensor img = chw;
  if (spec.rotation_max_deg > 0.0) {
    std::uniform_real_distribution<double> deg(-spec.rotation_max_deg, spec.rotation_max_deg);
    img = rotate_image(img, deg(rng));
  }
  if (spec.resize_to > 0) img = resize_image(img, spec.resize_to, spec.resize_to);
  return img;
}

void TaskSplit::validate() const {
  std::set<int> seen(base_classes.begin(), base_classes.end());
  if (seen.size() != base_classes.size()) throw ConfigError("task split: duplicate base class");
  for (size_t r = 0; r < rounds.size(); ++r) {
    if (rounds[r].empty()) throw ConfigError("task split: round " + std::to_string(r + 1) + " is empty");
    for (int cls : rounds[r])
      if (!seen.insert(cls).second)
        throw ConfigError("task split: class " + std::to_string(cls) +
                          " appears in more than one group (round " + std::to_string(r + 1) + ")");
  }
}

std::vector<int> TaskSplit::classes_through_round(int round_index) const {
  std::vector<int> out;
  for (int r = 0; r <= round_index && r < static_cast<int>(rounds.size()); ++r)
    out.insert(out.end(), rounds[static_cast<size_t>(r)].begin(), rounds[static_cast<size_t>(r)].end());
  return out;
}

}  // namespace acl
