#include "arm/checkpoint.hpp"

#include "arm/binio.hpp"

namespace arm::tc {

namespace {
constexpr std::string_view kMagic{"ARMCKPT\0", 8};
}

std::string encode_checkpoint(const std::string& metadata,
                              const ParameterSet<double>& params) {
  std::string out(kMagic);
  io::put_u32(out, kCheckpointVersion);
  io::put_u32(out, static_cast<std::uint32_t>(metadata.size()));
  out += metadata;
  io::put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    io::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    io::put_u32(out, 2);
    io::put_u64(out, t.rows());
    io::put_u64(out, t.cols());
    for (double v : t.data()) io::put_f64(out, v);
  }
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  io::Reader r(bytes);
  if (r.remaining() < kMagic.size() || r.bytes(kMagic.size()) != kMagic) {
    throw ValidationError("not a checkpoint file (bad magic)");
  }
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw ValidationError("unsupported checkpoint version " +
                          std::to_string(version));
  }
  Checkpoint ck;
  ck.metadata = std::string(r.bytes(r.u32()));
  const auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(r.bytes(r.u32()));
    const auto ndim = r.u32();
    if (ndim != 2) {
      throw ValidationError("checkpoint tensor '" + name + "' has rank " +
                            std::to_string(ndim));
    }
    Shape s{r.u64(), r.u64()};
    std::vector<double> data(s.numel());
    for (auto& v : data) v = r.f64();
    ck.params.add(std::move(name), Tensor<double>::from(s, std::move(data), true));
  }
  if (!r.done()) throw ValidationError("trailing bytes after checkpoint");
  return ck;
}

void save_checkpoint(const std::string& path, const std::string& metadata,
                     const ParameterSet<double>& params) {
  io::write_file(path, encode_checkpoint(metadata, params));
}

Checkpoint load_checkpoint(const std::string& path) {
  return decode_checkpoint(io::read_file(path));
}

}  // namespace arm::tc
