#include "umif/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

static_assert(std::endian::native == std::endian::little,
              "checkpoints are little-endian and written with raw scalar dumps");

namespace umif {

namespace {

constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<char*>(&v), 4); }
void write_u64(std::ostream& os, uint64_t v) { os.write(reinterpret_cast<char*>(&v), 8); }

uint32_t read_u32(std::istream& is, const std::string& what) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  if (!is) throw ParseError("checkpoint: truncated " + what);
  return v;
}

uint64_t read_u64(std::istream& is, const std::string& what) {
  uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 8);
  if (!is) throw ParseError("checkpoint: truncated " + what);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore<float>& params,
                     const CheckpointTrailer& trailer) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParseError("checkpoint: cannot open for writing: " + path);
  os.write("UMIF", 4);
  write_u32(os, kVersion);
  write_u32(os, uint32_t(params.size()));
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& p = params.at(i);
    write_u32(os, uint32_t(p.name.size()));
    os.write(p.name.data(), std::streamsize(p.name.size()));
    write_u32(os, uint32_t(p.tensor.shape().size()));
    for (int64_t d : p.tensor.shape()) write_u64(os, uint64_t(d));
    os.write(reinterpret_cast<const char*>(p.tensor.value().data()),
             std::streamsize(p.tensor.value().size() * 4));
  }
  write_u32(os, uint32_t(trailer.config_text.size()));
  os.write(trailer.config_text.data(), std::streamsize(trailer.config_text.size()));
  write_u32(os, trailer.epochs_done);
  os.put(trailer.has_optimizer ? 1 : 0);
  if (trailer.has_optimizer) {
    if (trailer.m.size() != params.size() || trailer.v.size() != params.size())
      throw ContractError("checkpoint: optimizer moment count does not match parameters");
    write_u64(os, uint64_t(trailer.step_count));
    for (size_t i = 0; i < params.size(); ++i) {
      os.write(reinterpret_cast<const char*>(trailer.m[i].data()),
               std::streamsize(trailer.m[i].size() * 4));
      os.write(reinterpret_cast<const char*>(trailer.v[i].data()),
               std::streamsize(trailer.v[i].size() * 4));
    }
  }
}

namespace {

struct StoredParam {
  std::string name;
  Shape shape;
  std::streampos data_at;
};

// Walks the parameter section without reading payloads; leaves the stream at
// the trailer.
std::vector<StoredParam> skim_params(std::istream& is, const std::string& path) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "UMIF", 4) != 0)
    throw ParseError("checkpoint: bad magic in " + path);
  uint32_t version = read_u32(is, "version");
  if (version != kVersion)
    throw ParseError("checkpoint: unsupported version " + std::to_string(version));
  uint32_t count = read_u32(is, "parameter count");
  std::vector<StoredParam> out;
  out.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t name_len = read_u32(is, "name length");
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw ParseError("checkpoint: truncated name");
    uint32_t rank = read_u32(is, "rank");
    Shape shape(rank);
    for (uint32_t r = 0; r < rank; ++r) shape[r] = int64_t(read_u64(is, "dims"));
    StoredParam sp{std::move(name), std::move(shape), is.tellg()};
    is.seekg(std::streamoff(numel(sp.shape) * 4), std::ios::cur);
    if (!is) throw ParseError("checkpoint: truncated data for " + sp.name);
    out.push_back(std::move(sp));
  }
  return out;
}

}  // namespace

CheckpointTrailer load_checkpoint(const std::string& path, ParamStore<float>& params) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("checkpoint: cannot open: " + path);
  auto stored = skim_params(is, path);
  if (stored.size() != params.size())
    throw ParseError("checkpoint: has " + std::to_string(stored.size()) +
                     " parameters, model expects " + std::to_string(params.size()));
  std::streampos trailer_at = is.tellg();
  for (const auto& sp : stored) {
    Tensor<float>* t = params.find(sp.name);
    if (!t) throw ParseError("checkpoint: unknown parameter '" + sp.name + "'");
    if (t->shape() != sp.shape)
      throw ParseError("checkpoint: shape mismatch for '" + sp.name + "': stored " +
                       shape_str(sp.shape) + ", model " + shape_str(t->shape()));
    is.seekg(sp.data_at);
    is.read(reinterpret_cast<char*>(t->data().data()), std::streamsize(t->size() * 4));
    if (!is) throw ParseError("checkpoint: truncated data for " + sp.name);
  }
  is.seekg(trailer_at);
  CheckpointTrailer tr;
  uint32_t cfg_len = read_u32(is, "config length");
  tr.config_text.resize(cfg_len);
  is.read(tr.config_text.data(), cfg_len);
  if (!is) throw ParseError("checkpoint: truncated config");
  tr.epochs_done = read_u32(is, "epoch counter");
  int flag = is.get();
  if (flag == EOF) throw ParseError("checkpoint: truncated optimizer flag");
  tr.has_optimizer = flag != 0;
  if (tr.has_optimizer) {
    tr.step_count = int64_t(read_u64(is, "step count"));
    tr.m.resize(params.size());
    tr.v.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      size_t n = size_t(params.at(i).tensor.size());
      tr.m[i].resize(n);
      tr.v[i].resize(n);
      is.read(reinterpret_cast<char*>(tr.m[i].data()), std::streamsize(n * 4));
      is.read(reinterpret_cast<char*>(tr.v[i].data()), std::streamsize(n * 4));
      if (!is) throw ParseError("checkpoint: truncated optimizer state");
    }
  }
  return tr;
}

std::string read_checkpoint_config(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("checkpoint: cannot open: " + path);
  skim_params(is, path);
  uint32_t cfg_len = read_u32(is, "config length");
  std::string text(cfg_len, '\0');
  is.read(text.data(), cfg_len);
  if (!is) throw ParseError("checkpoint: truncated config");
  return text;
}

}  // namespace umif
