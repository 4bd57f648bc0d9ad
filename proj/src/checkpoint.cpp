#include "priorclip/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "priorclip/errors.hpp"

namespace priorclip {

using nlohmann::json;
using nlohmann::ordered_json;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'P', 'C', 'L', 'P', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in, const std::string& what) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw InputError("checkpoint: truncated " + what);
  return v;
}

ordered_json table(const std::vector<Checkpoint::Blob>& blobs, std::uint64_t& offset) {
  ordered_json arr = ordered_json::array();
  for (const auto& b : blobs) {
    ordered_json e;
    e["name"] = b.name;
    e["shape"] = b.shape;
    e["trainable"] = b.trainable;
    e["offset"] = offset;
    e["count"] = b.values.size();
    offset += b.values.size();
    arr.push_back(e);
  }
  return arr;
}

std::vector<Checkpoint::Blob> read_table(const json& arr, const std::vector<double>& data) {
  std::vector<Checkpoint::Blob> out;
  for (const auto& e : arr) {
    Checkpoint::Blob b;
    b.name = e.at("name").get<std::string>();
    b.shape = e.at("shape").get<Shape>();
    b.trainable = e.at("trainable").get<bool>();
    const auto offset = e.at("offset").get<std::size_t>();
    const auto count = e.at("count").get<std::size_t>();
    if (count != shape_numel(b.shape) || offset + count > data.size()) {
      throw InputError("checkpoint: tensor '" + b.name + "' is inconsistent with the blob section");
    }
    b.values.assign(data.begin() + static_cast<std::ptrdiff_t>(offset),
                    data.begin() + static_cast<std::ptrdiff_t>(offset + count));
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace

const Checkpoint::Blob* Checkpoint::find(const std::string& name) const {
  for (const auto& b : params) {
    if (b.name == name) return &b;
  }
  return nullptr;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::uint64_t offset = 0;
  ordered_json header;
  header["format"] = "priorclip-checkpoint";
  header["config"] = ck.config;
  header["data_shape"] = ck.shape.to_json();
  header["step"] = ck.step;
  header["rng"] = {{"algorithm", Rng::algorithm}, {"state", ck.rng_state}};
  header["params"] = table(ck.params, offset);
  header["velocity"] = table(ck.velocity, offset);
  header["blob_count"] = offset;
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto* group : {&ck.params, &ck.velocity}) {
    for (const auto& b : *group) {
      out.write(reinterpret_cast<const char*>(b.values.data()), static_cast<std::streamsize>(b.values.size() * 8));
    }
  }
  if (!out) throw InputError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("checkpoint not found: " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw InputError("checkpoint: " + path.string() + " is not a checkpoint file");
  }
  const auto version = get<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion) throw InputError("checkpoint: unsupported version " + std::to_string(version));
  const auto header_len = get<std::uint64_t>(in, "header length");
  std::string text(header_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(header_len))) throw InputError("checkpoint: truncated header");
  Checkpoint ck;
  try {
    json header = json::parse(text);
    const auto count = header.at("blob_count").get<std::size_t>();
    std::vector<double> data(count);
    if (!in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(count * 8))) {
      throw InputError("checkpoint: truncated parameter blobs");
    }
    ck.config = header.at("config");
    ck.shape = DataShape::from_json(header.at("data_shape"));
    ck.step = header.at("step").get<std::size_t>();
    if (header.at("rng").at("algorithm").get<std::string>() != Rng::algorithm) {
      throw InputError("checkpoint: RNG algorithm mismatch");
    }
    ck.rng_state = header.at("rng").at("state").get<std::string>();
    ck.params = read_table(header.at("params"), data);
    ck.velocity = read_table(header.at("velocity"), data);
  } catch (const json::exception& e) {
    throw InputError(std::string("checkpoint: malformed header: ") + e.what());
  }
  return ck;
}

std::vector<Checkpoint::Blob> snapshot_parameters(const PriorClipModel& model) {
  std::vector<Checkpoint::Blob> out;
  for (const auto& e : model.params().entries()) {
    out.push_back({e.name, e.tensor.shape(), e.trainable, e.tensor.to_vector()});
  }
  return out;
}

void restore_parameters(PriorClipModel& model, const std::vector<Checkpoint::Blob>& params, bool require_all) {
  std::size_t found = 0;
  for (auto& e : model.params().entries()) {
    const Checkpoint::Blob* blob = nullptr;
    for (const auto& b : params) {
      if (b.name == e.name) {
        blob = &b;
        break;
      }
    }
    if (!blob) {
      if (require_all) throw ConfigError("checkpoint lacks parameter '" + e.name + "'");
      continue;
    }
    if (blob->shape != e.tensor.shape()) {
      throw ConfigError("checkpoint parameter '" + e.name + "' has shape " + shape_str(blob->shape) +
                        ", model expects " + shape_str(e.tensor.shape()));
    }
    auto dst = e.tensor.mutable_values();
    std::copy(blob->values.begin(), blob->values.end(), dst.begin());
    ++found;
  }
  if (found == 0) throw ConfigError("checkpoint shares no parameters with the model");
}

}  // namespace priorclip
