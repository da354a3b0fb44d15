#include "swinvftr/volume_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

namespace swinvftr::inline SWINVFTR_PRECISION {

namespace {

std::vector<uint8_t> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void dump(const std::vector<uint8_t>& bytes, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write on " + path);
}

void put_u16(std::vector<uint8_t>& b, uint16_t v) {
  b.push_back(v & 0xff);
  b.push_back(v >> 8);
}

void put_u32(std::vector<uint8_t>& b, uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back((v >> (8 * i)) & 0xff);
}

uint32_t get_u32(const uint8_t* p) { return p[0] | (p[1] << 8) | (p[2] << 16) | (uint32_t{p[3]} << 24); }

std::vector<uint8_t> header_bytes(uint8_t dtype, Dims3 dims, Vendor vendor) {
  std::vector<uint8_t> b{'S', 'V', 'O', 'L'};
  put_u16(b, 1);
  b.push_back(dtype);
  b.push_back(3);
  for (int64_t d : dims) {
    if (d < 0 || d > 0xffffffffLL) throw FormatError("volume dim " + std::to_string(d) + " does not fit u32");
    put_u32(b, static_cast<uint32_t>(d));
  }
  b.push_back(static_cast<uint8_t>(vendor));
  return b;
}

std::pair<VolumeHeader, const uint8_t*> checked_payload(const std::vector<uint8_t>& bytes, uint8_t dtype,
                                                        const std::string& source) {
  VolumeHeader h = parse_volume_header(bytes);
  if (h.dtype != dtype) {
    throw FormatError(source + ": expected dtype " + std::to_string(dtype) + ", found " + std::to_string(h.dtype));
  }
  const int64_t n = h.dims[0] * h.dims[1] * h.dims[2];
  if (static_cast<int64_t>(bytes.size()) != kVolumeHeaderBytes + n) {
    throw FormatError(source + ": payload holds " + std::to_string(bytes.size() - kVolumeHeaderBytes) +
                      " bytes, header implies " + std::to_string(n));
  }
  return {h, bytes.data() + kVolumeHeaderBytes};
}

}  // namespace

std::string vendor_name(Vendor v) {
  switch (v) {
    case Vendor::Spectralis: return "Spectralis";
    case Vendor::Cirrus: return "Cirrus";
    case Vendor::Topcon: return "Topcon";
    case Vendor::Synthetic: return "Synthetic";
  }
  return "unknown";
}

Volume::Volume(int64_t height, int64_t width, int64_t scans, Vendor vendor)
    : height(height), width(width), scans(scans), vendor(vendor), voxels(height * width * scans, 0.0f) {}

LabelVolume::LabelVolume(int64_t height, int64_t width, int64_t scans)
    : height(height), width(width), scans(scans), labels(height * width * scans, 0) {}

VolumeHeader parse_volume_header(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < static_cast<size_t>(kVolumeHeaderBytes)) throw FormatError("volume header truncated");
  if (std::memcmp(bytes.data(), "SVOL", 4) != 0) throw FormatError("bad volume magic");
  VolumeHeader h;
  h.version = bytes[4] | (bytes[5] << 8);
  if (h.version != 1) throw FormatError("unsupported volume version " + std::to_string(h.version));
  h.dtype = bytes[6];
  if (h.dtype > 1) throw FormatError("unknown volume dtype " + std::to_string(h.dtype));
  if (bytes[7] != 3) throw FormatError("volume rank must be 3, found " + std::to_string(bytes[7]));
  int64_t total = 1;
  for (int i = 0; i < 3; ++i) {
    h.dims[i] = get_u32(bytes.data() + 8 + 4 * i);
    if (h.dims[i] == 0) throw FormatError("volume has a zero dimension");
    if (total > kMaxVolumeVoxels / h.dims[i]) throw FormatError("volume dims " + dims_str(h.dims) + " overflow");
    total *= h.dims[i];
  }
  const uint8_t vendor = bytes[20];
  if (vendor > 3) throw FormatError("unknown vendor tag " + std::to_string(vendor));
  h.vendor = static_cast<Vendor>(vendor);
  return h;
}

VolumeHeader read_volume_header(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<uint8_t> head(kVolumeHeaderBytes);
  in.read(reinterpret_cast<char*>(head.data()), kVolumeHeaderBytes);
  head.resize(in.gcount());
  return parse_volume_header(head);
}

std::vector<uint8_t> encode_volume(const Volume& volume) {
  std::vector<uint8_t> b = header_bytes(0, volume.dims(), volume.vendor);
  b.reserve(b.size() + volume.voxels.size());
  for (float v : volume.voxels) {
    const float q = std::nearbyint(std::clamp(v, 0.0f, 1.0f) * 255.0f);
    b.push_back(static_cast<uint8_t>(q));
  }
  return b;
}

Volume decode_volume(const std::vector<uint8_t>& bytes, const std::string& source) {
  const auto [h, payload] = checked_payload(bytes, 0, source);
  Volume v(h.dims[0], h.dims[1], h.dims[2], h.vendor);
  for (size_t i = 0; i < v.voxels.size(); ++i) v.voxels[i] = static_cast<float>(payload[i]) / 255.0f;
  return v;
}

void write_volume(const Volume& volume, const std::string& path) { dump(encode_volume(volume), path); }

Volume read_volume(const std::string& path) { return decode_volume(slurp(path), path); }

void write_labels(const LabelVolume& labels, const std::string& path, Vendor vendor) {
  std::vector<uint8_t> b = header_bytes(1, labels.dims(), vendor);
  b.insert(b.end(), labels.labels.begin(), labels.labels.end());
  dump(b, path);
}

LabelVolume read_labels(const std::string& path) {
  const std::vector<uint8_t> bytes = slurp(path);
  const auto [h, payload] = checked_payload(bytes, 1, path);
  LabelVolume l(h.dims[0], h.dims[1], h.dims[2]);
  std::memcpy(l.labels.data(), payload, l.labels.size());
  for (uint8_t c : l.labels)
    if (c > 3) throw ClassError(path + ": label " + std::to_string(c) + " outside {0,1,2,3}");
  return l;
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path);
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path fp(p);
    return fp.is_absolute() ? p : (base / fp).string();
  };
  std::vector<ManifestEntry> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": expected image<TAB>label");
    }
    entries.push_back({resolve(line.substr(0, tab)), resolve(line.substr(tab + 1))});
  }
  if (entries.empty()) throw FormatError("manifest " + path + " lists no volumes");
  return entries;
}

void write_manifest(const std::vector<ManifestEntry>& entries, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path);
  for (const auto& e : entries) out << e.image << '\t' << e.label << '\n';
}

}  // namespace swinvftr
