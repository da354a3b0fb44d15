#include "swinvftr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace swinvftr::inline SWINVFTR_PRECISION {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

class Writer {
 public:
  void bytes(const void* p, size_t n) {
    const auto* b = static_cast<const char*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  template <typename T>
  void pod(T v) {
    bytes(&v, sizeof(T));
  }
  std::vector<char>& buffer() { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  Reader(const std::vector<char>& buf, size_t end) : buf_(buf), end_(end) {}
  void bytes(void* out, size_t n) {
    if (pos_ + n > end_) throw FormatError("checkpoint: record runs past end of payload");
    std::memcpy(out, buf_.data() + pos_, n);
    pos_ += n;
  }
  template <typename T>
  T pod() {
    T v;
    bytes(&v, sizeof(T));
    return v;
  }
  size_t pos() const { return pos_; }

 private:
  const std::vector<char>& buf_;
  size_t end_;
  size_t pos_ = 0;
};

std::vector<char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

void write_checkpoint_data(const CheckpointData& data, const std::string& path) {
  Writer w;
  w.bytes("SVCK", 4);
  w.pod<uint16_t>(kCheckpointVersion);
  const std::string config = canonical_key_values(data.meta);
  w.pod<uint32_t>(static_cast<uint32_t>(config.size()));
  w.bytes(config.data(), config.size());
  w.pod<uint32_t>(static_cast<uint32_t>(data.records.size()));
  for (const auto& [name, t] : data.records) {
    if (name.size() > 0xffff) throw FormatError("checkpoint: parameter name too long: " + name);
    w.pod<uint16_t>(static_cast<uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.pod<uint8_t>(static_cast<uint8_t>(t.rank()));
    for (int64_t d : t.shape()) w.pod<uint32_t>(static_cast<uint32_t>(d));
    for (Scalar x : t.data()) w.pod<float>(static_cast<float>(x));
  }
  const uint64_t hash = fnv1a64(w.buffer().data(), w.buffer().size());
  w.pod<uint64_t>(hash);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path);
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw IoError("short write on checkpoint " + path);
}

CheckpointData read_checkpoint_data(const std::string& path) {
  const std::vector<char> buf = read_file(path);
  if (buf.size() < 4 + 2 + 8) throw ChecksumError("checkpoint " + path + " is truncated");
  const size_t payload = buf.size() - 8;
  uint64_t stored;
  std::memcpy(&stored, buf.data() + payload, 8);
  if (fnv1a64(buf.data(), payload) != stored) {
    throw ChecksumError("checkpoint " + path + " failed its content hash (corrupt or truncated)");
  }
  Reader r(buf, payload);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, "SVCK", 4) != 0) throw FormatError("checkpoint " + path + ": bad magic");
  const auto version = r.pod<uint16_t>();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint " + path + ": unsupported version " + std::to_string(version));
  }
  CheckpointData data;
  const auto config_len = r.pod<uint32_t>();
  std::string config(config_len, '\0');
  r.bytes(config.data(), config_len);
  data.meta = parse_key_values(config, path);
  const auto count = r.pod<uint32_t>();
  for (uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.pod<uint16_t>();
    std::string name(name_len, '\0');
    r.bytes(name.data(), name_len);
    const auto rank = r.pod<uint8_t>();
    Shape shape(rank);
    for (auto& d : shape) d = r.pod<uint32_t>();
    if (rank == 0 || numel(shape) <= 0 || numel(shape) > static_cast<int64_t>(payload)) {
      throw FormatError("checkpoint " + path + ": bad shape for " + name);
    }
    std::vector<Scalar> values(numel(shape));
    for (Scalar& x : values) x = r.pod<float>();
    data.records.emplace_back(name, Tensor::from_data(shape, std::move(values)));
  }
  if (r.pos() != payload) throw FormatError("checkpoint " + path + ": trailing bytes before hash");
  return data;
}

uint64_t checkpoint_hash(const std::string& path) {
  const std::vector<char> buf = read_file(path);
  if (buf.size() < 8) throw ChecksumError("checkpoint " + path + " is truncated");
  uint64_t stored;
  std::memcpy(&stored, buf.data() + buf.size() - 8, 8);
  return stored;
}

void save_checkpoint(const SwinVftr& model, const std::string& path) {
  CheckpointData data;
  data.meta = model.config().to_key_values();
  for (const Parameter& p : model.parameters().params()) data.records.emplace_back(p.name, p.tensor);
  write_checkpoint_data(data, path);
}

void load_weights_into(SwinVftr& model, const CheckpointData& data) {
  KeyValues meta = data.meta;
  const ModelConfig stored = ModelConfig::from_key_values(meta);
  if (!stored.compatible_with(model.config())) {
    throw ConfigError("checkpoint config does not match model.\ncheckpoint:\n" +
                      canonical_key_values(stored.to_key_values()) + "model:\n" +
                      canonical_key_values(model.config().to_key_values()));
  }
  size_t loaded = 0;
  for (const auto& [name, t] : data.records) {
    Parameter* p = model.parameters().find(name);
    if (!p) continue;  // optimizer state and other extras
    if (p->tensor.shape() != t.shape()) {
      throw ConfigError("checkpoint parameter " + name + " has shape " + shape_str(t.shape()) +
                        ", model expects " + shape_str(p->tensor.shape()));
    }
    std::copy(t.data().begin(), t.data().end(), p->tensor.mutable_data().begin());
    ++loaded;
  }
  if (loaded != model.parameters().size()) {
    throw ConfigError("checkpoint provides " + std::to_string(loaded) + " of " +
                      std::to_string(model.parameters().size()) + " model parameters");
  }
}

void load_checkpoint_into(SwinVftr& model, const std::string& path) {
  load_weights_into(model, read_checkpoint_data(path));
}

SwinVftr load_checkpoint(const std::string& path) {
  const CheckpointData data = read_checkpoint_data(path);
  KeyValues meta = data.meta;
  SwinVftr model(ModelConfig::from_key_values(meta));
  load_weights_into(model, data);
  return model;
}

}  // namespace swinvftr
