#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "swinvftr/tensor.hpp"

namespace swinvftr::inline SWINVFTR_PRECISION {

enum class Vendor : uint8_t { Spectralis = 0, Cirrus = 1, Topcon = 2, Synthetic = 3 };

std::string vendor_name(Vendor v);

/// OCT intensities in [0, 1], stored (h * width + w) * scans + c. The scan axis
/// (B-scans) is the depth axis the model crops along.
struct Volume {
  int64_t height = 0;
  int64_t width = 0;
  int64_t scans = 0;
  Vendor vendor = Vendor::Synthetic;
  std::vector<float> voxels;

  Volume() = default;
  Volume(int64_t height, int64_t width, int64_t scans, Vendor vendor = Vendor::Synthetic);
  int64_t index(int64_t h, int64_t w, int64_t c) const { return (h * width + w) * scans + c; }
  float at(int64_t h, int64_t w, int64_t c) const { return voxels[index(h, w, c)]; }
  Dims3 dims() const { return {height, width, scans}; }
};

/// Class ids in {0 BG, 1 IRF, 2 SRF, 3 PED}, same layout as Volume.
struct LabelVolume {
  int64_t height = 0;
  int64_t width = 0;
  int64_t scans = 0;
  std::vector<uint8_t> labels;

  LabelVolume() = default;
  LabelVolume(int64_t height, int64_t width, int64_t scans);
  int64_t index(int64_t h, int64_t w, int64_t c) const { return (h * width + w) * scans + c; }
  uint8_t at(int64_t h, int64_t w, int64_t c) const { return labels[index(h, w, c)]; }
  Dims3 dims() const { return {height, width, scans}; }
};

/// File layout (little-endian): "SVOL" | u16 version = 1 | u8 dtype (0 intensity, 1 labels)
/// | u8 rank = 3 | u32 dims[3] (H, W, scans) | u8 vendor | u8 voxels in Volume order.
struct VolumeHeader {
  uint16_t version = 1;
  uint8_t dtype = 0;
  Dims3 dims{0, 0, 0};
  Vendor vendor = Vendor::Synthetic;
};

inline constexpr int64_t kVolumeHeaderBytes = 4 + 2 + 1 + 1 + 12 + 1;
/// Upper bound on voxels per file; larger headers are rejected as corrupt.
inline constexpr int64_t kMaxVolumeVoxels = int64_t{1} << 32;

VolumeHeader parse_volume_header(const std::vector<uint8_t>& bytes);
VolumeHeader read_volume_header(const std::string& path);

/// Intensities are quantized to round(v * 255) on write and divided by 255 on read.
void write_volume(const Volume& volume, const std::string& path);
Volume read_volume(const std::string& path);
void write_labels(const LabelVolume& labels, const std::string& path, Vendor vendor = Vendor::Synthetic);
/// Throws ClassError for class ids above 3.
LabelVolume read_labels(const std::string& path);

std::vector<uint8_t> encode_volume(const Volume& volume);
Volume decode_volume(const std::vector<uint8_t>& bytes, const std::string& source = "<memory>");

struct ManifestEntry {
  std::string image;
  std::string label;
};

/// One `image<TAB>label` pair per line; blank and '#' lines are skipped.
/// Relative paths resolve against the manifest's directory.
std::vector<ManifestEntry> read_manifest(const std::string& path);
void write_manifest(const std::vector<ManifestEntry>& entries, const std::string& path);

}  // namespace swinvftr
