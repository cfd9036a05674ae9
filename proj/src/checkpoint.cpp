#include "amrforge/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace amrforge {

namespace {

constexpr char kMagic[8] = {'A', 'M', 'R', 'F', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <class T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

template <class T>
T get(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw CheckpointError("checkpoint: truncated file");
  T value;
  std::memcpy(&value, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

struct TensorRef {
  std::string name;
  const Mat* data;
};

}  // namespace

std::string checkpoint_bytes(const Checkpoint& c) {
  std::vector<TensorRef> tensors;
  for (const auto& [name, m] : c.params) tensors.push_back({name, &m});
  if (c.adapters) {
    for (const auto& [name, lr] : c.adapters->targets) {
      tensors.push_back({"lora." + name + ".A", &lr.A});
      tensors.push_back({"lora." + name + ".B", &lr.B});
    }
  }
  nlohmann::json header;
  header["format"] = "amrforge-checkpoint";
  header["version"] = kCheckpointVersion;
  header["spec"] = nlohmann::json(c.spec);
  header["tokenizer"] = c.tokenizer.to_json();
  if (c.adapters) {
    header["adapters"] = {{"rank", c.adapters->rank}, {"alpha", c.adapters->alpha}, {"merged", c.adapters->merged}};
  }
  nlohmann::json table = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& t : tensors) {
    table.push_back({{"name", t.name}, {"rows", t.data->rows()}, {"cols", t.data->cols()}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(t.data->size());
  }
  header["tensors"] = table;
  header["metadata"] = c.metadata;
  const std::string text = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, text.size());
  out += text;
  out.reserve(out.size() + offset * sizeof(double));
  for (const auto& t : tensors) {
    out.append(reinterpret_cast<const char*>(t.data->data()), static_cast<std::size_t>(t.data->size()) * sizeof(double));
  }
  return out;
}

Checkpoint checkpoint_from_bytes(const std::string& in) {
  if (in.size() < sizeof(kMagic) || std::memcmp(in.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("checkpoint: bad magic, not an amrforge checkpoint");
  }
  std::size_t pos = sizeof(kMagic);
  const auto version = get<std::uint32_t>(in, pos);
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto header_len = get<std::uint64_t>(in, pos);
  if (pos + header_len > in.size()) throw CheckpointError("checkpoint: truncated header");
  Checkpoint c;
  try {
    const auto header = nlohmann::json::parse(in.substr(pos, header_len));
    pos += header_len;
    c.spec = header.at("spec").get<ModelSpec>();
    c.tokenizer = Tokenizer::from_json(header.at("tokenizer"));
    c.metadata = header.value("metadata", nlohmann::json::object());
    if (header.contains("adapters")) {
      AdapterState a;
      a.rank = header["adapters"].at("rank").get<int>();
      a.alpha = header["adapters"].at("alpha").get<double>();
      a.merged = header["adapters"].at("merged").get<bool>();
      c.adapters = a;
    }
    const std::size_t data_start = pos;
    for (const auto& t : header.at("tensors")) {
      const auto name = t.at("name").get<std::string>();
      const auto rows = t.at("rows").get<Eigen::Index>();
      const auto cols = t.at("cols").get<Eigen::Index>();
      const auto offset = t.at("offset").get<std::uint64_t>();
      const std::size_t begin = data_start + offset * sizeof(double);
      const std::size_t bytes = static_cast<std::size_t>(rows * cols) * sizeof(double);
      if (rows < 0 || cols < 0 || begin + bytes > in.size()) throw CheckpointError("checkpoint: tensor '" + name + "' truncated");
      Mat m(rows, cols);
      std::memcpy(m.data(), in.data() + begin, bytes);
      if (name.starts_with("lora.")) {
        if (!c.adapters) throw CheckpointError("checkpoint: adapter tensor without adapter header");
        const auto target = name.substr(5, name.size() - 7);
        auto& lr = c.adapters->targets[target];
        (name.ends_with(".A") ? lr.A : lr.B) = std::move(m);
      } else {
        c.params.emplace(name, std::move(m));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint: bad header: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }
  try {
    check_parameters(c.params, c.spec);
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  const std::string bytes = checkpoint_bytes(checkpoint);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return checkpoint_from_bytes(buf.str());
}

}  // namespace amrforge
