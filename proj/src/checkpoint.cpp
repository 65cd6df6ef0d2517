#include "stbn/checkpoint.hpp"

#include <fstream>
#include <map>
#include <stdexcept>

#include "stbn/binary_io.hpp"

namespace stbn {

namespace {

constexpr char kMagic[8] = {'S', 'T', 'B', 'N', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

Checkpoint make_checkpoint(const ParameterList& params, nlohmann::json config, std::uint64_t iteration) {
  Checkpoint c{std::move(config), iteration, {}};
  for (const auto& p : params) c.tensors.emplace_back(p.name, p.var.value());
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
  os.write(kMagic, 8);
  write_u32(os, kVersion);
  write_string(os, ckpt.config.dump());
  write_u64(os, ckpt.iteration);
  write_u32(os, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    write_string(os, name);
    write_u32(os, 4);
    for (int d : {t.n(), t.c(), t.h(), t.w()}) write_i32(os, d);
    write_f32_array(os, t.span());
  }
  if (!os) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[8];
  is.read(magic, 8);
  if (!is || !std::equal(magic, magic + 8, kMagic)) throw std::runtime_error(path.string() + " is not a checkpoint");
  const std::uint32_t version = read_u32(is);
  if (version != kVersion) throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  c.config = nlohmann::json::parse(read_string(is));
  c.iteration = read_u64(is);
  const std::uint32_t count = read_u32(is);
  for (std::uint32_t k = 0; k < count && is; ++k) {
    std::string name = read_string(is);
    if (read_u32(is) != 4) throw std::runtime_error("checkpoint: unsupported tensor rank");
    int d[4];
    for (int& v : d) {
      v = read_i32(is);
      if (v < 0 || v > (1 << 24)) throw std::runtime_error("checkpoint: corrupt tensor dims");
    }
    Tensor t(d[0], d[1], d[2], d[3]);
    read_f32_array(is, t.span());
    c.tensors.emplace_back(std::move(name), std::move(t));
  }
  if (!is) throw std::runtime_error("checkpoint " + path.string() + " is truncated");
  return c;
}

void apply_checkpoint(const Checkpoint& ckpt, ParameterList& params) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : ckpt.tensors) by_name[name] = &t;
  for (auto& p : params) {
    const auto it = by_name.find(p.name);
    if (it == by_name.end()) throw std::runtime_error("checkpoint is missing parameter " + p.name);
    if (!it->second->same_shape(p.var.value()))
      throw std::runtime_error("checkpoint parameter " + p.name + " has shape " + it->second->shape_string() +
                               ", model expects " + p.var.value().shape_string());
    p.var.mutable_value() = *it->second;
  }
}

}  // namespace stbn
