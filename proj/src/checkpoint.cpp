#include "menan/checkpoint.hpp"

#include <algorithm>
#include <fstream>

#include "menan/binary_io.hpp"
#include "menan/error.hpp"

namespace menan::numerics {

namespace {

constexpr char kMagic[8] = {'M', 'E', 'N', 'A', 'N', 'C', 'K', '1'};
constexpr std::uint32_t kVersion = 1;

void write_record(std::ostream& out, const CheckpointRecord& rec) {
  io::write_string(out, rec.name);
  io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(rec.shape.size()));
  for (auto d : rec.shape) io::write_pod<std::uint64_t>(out, d);
  io::write_doubles(out, rec.values);
}

CheckpointRecord read_record(std::istream& in) {
  CheckpointRecord rec;
  rec.name = io::read_string(in);
  auto rank = io::read_pod<std::uint32_t>(in);
  if (rank > 8) throw IoError("checkpoint record '" + rec.name + "' has rank " +
                              std::to_string(rank));
  for (std::uint32_t i = 0; i < rank; ++i)
    rec.shape.push_back(io::read_pod<std::uint64_t>(in));
  rec.values = io::read_doubles(in, shape_numel(rec.shape));
  return rec;
}

}  // namespace

const CheckpointRecord* Checkpoint::find_param(const std::string& name) const {
  auto it = std::find_if(params.begin(), params.end(),
                         [&](const auto& r) { return r.name == name; });
  return it == params.end() ? nullptr : &*it;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  io::write_pod(out, kVersion);
  io::write_pod<std::uint64_t>(out, ckpt.step);
  io::write_string(out, ckpt.metadata);
  io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& r : ckpt.params) write_record(out, r);
  io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.moments.size()));
  for (const auto& r : ckpt.moments) write_record(out, r);
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof(magic)) ||
      !std::equal(magic, magic + 8, kMagic)) {
    throw IoError(path.string() + " is not a checkpoint");
  }
  auto version = io::read_pod<std::uint32_t>(in);
  if (version != kVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.step = io::read_pod<std::uint64_t>(in);
  ckpt.metadata = io::read_string(in);
  auto n_params = io::read_pod<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < n_params; ++i) ckpt.params.push_back(read_record(in));
  auto n_moments = io::read_pod<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < n_moments; ++i) ckpt.moments.push_back(read_record(in));
  return ckpt;
}

void append_params(Checkpoint& ckpt, const ParamSet& set) {
  for (const auto& p : set.params()) {
    ckpt.params.push_back({p.name, p.tensor.shape(),
                           {p.tensor.values().begin(), p.tensor.values().end()}});
  }
}

void append_moments(Checkpoint& ckpt, const Adam& optimizer) {
  for (const auto& [name, mom] : optimizer.moments()) {
    Shape shape{mom->m.size()};
    ckpt.moments.push_back({name + "/m", shape, mom->m});
    ckpt.moments.push_back({name + "/v", shape, mom->v});
  }
}

void load_params(const Checkpoint& ckpt, ParamSet& set) {
  for (auto& p : set.params()) {
    const auto* rec = ckpt.find_param(p.name);
    if (!rec) throw IoError("checkpoint lacks parameter '" + p.name + "'");
    if (rec->shape != p.tensor.shape()) {
      throw DimensionError("checkpoint parameter '" + p.name + "' has shape " +
                           shape_str(rec->shape) + ", model expects " +
                           shape_str(p.tensor.shape()));
    }
    auto dst = p.tensor.mutable_values();
    std::copy(rec->values.begin(), rec->values.end(), dst.begin());
  }
}

void load_moments(const Checkpoint& ckpt, Adam& optimizer) {
  auto find = [&](const std::string& name) -> const CheckpointRecord* {
    for (const auto& r : ckpt.moments)
      if (r.name == name) return &r;
    return nullptr;
  };
  for (const auto& [name, mom] : optimizer.moments()) {
    const auto* m = find(name + "/m");
    const auto* v = find(name + "/v");
    if (!m || !v) continue;
    optimizer.restore(name, AdamMoments{m->values, v->values});
  }
}

}  // namespace menan::numerics
