#include "dyg2vec/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

namespace dyg {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ParseError("truncated checkpoint '" + path + "'");
  return v;
}

template <typename S>
constexpr Precision precision_of() {
  return sizeof(S) == 4 ? Precision::F32 : Precision::F64;
}

template <typename Stored, typename S>
Matrix<S> read_values(std::ifstream& in, Index rows, Index cols, const std::string& path) {
  Matrix<Stored> raw(rows, cols);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(sizeof(Stored) * raw.size()));
  if (!in) throw ParseError("truncated checkpoint '" + path + "'");
  if constexpr (std::is_same_v<Stored, S>) {
    return raw;
  } else {
    return raw.template cast<S>();
  }
}

void read_header(std::ifstream& in, const std::string& path) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw ParseError("'" + path + "' is not a DYGW checkpoint");
  const auto version = get<std::uint32_t>(in, path);
  if (version != kCheckpointVersion)
    throw ParseError("unsupported checkpoint version " + std::to_string(version));
}

}  // namespace

template <typename S>
void save_checkpoint(const ParamSet<S>& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out.write(kCheckpointMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, p] : params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(out, 2);
    put<std::uint64_t>(out, static_cast<std::uint64_t>(p.value.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(p.value.cols()));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(precision_of<S>()));
    out.write(reinterpret_cast<const char*>(p.value.data()),
              static_cast<std::streamsize>(sizeof(S) * p.value.size()));
  }
  if (!out) throw Error("write failed for '" + path + "'");
}

template <typename S>
ParamSet<S> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint '" + path + "'");
  read_header(in, path);
  const auto count = get<std::uint32_t>(in, path);
  ParamSet<S> params;
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto len = get<std::uint32_t>(in, path);
    std::string name(len, '\0');
    in.read(name.data(), len);
    const auto rank = get<std::uint32_t>(in, path);
    if (rank < 1 || rank > 2) throw ParseError("entry '" + name + "' has unsupported rank " + std::to_string(rank));
    std::vector<std::uint64_t> dims(rank);
    for (auto& d : dims) d = get<std::uint64_t>(in, path);
    const Index rows = rank == 2 ? static_cast<Index>(dims[0]) : 1;
    const Index cols = static_cast<Index>(dims[rank - 1]);
    const auto tag = static_cast<Precision>(get<std::uint8_t>(in, path));
    if (tag == Precision::F32) {
      params.add(name, read_values<float, S>(in, rows, cols, path));
    } else if (tag == Precision::F64) {
      params.add(name, read_values<double, S>(in, rows, cols, path));
    } else {
      throw ParseError("entry '" + name + "' has unknown precision tag");
    }
  }
  return params;
}

Precision checkpoint_precision(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint '" + path + "'");
  read_header(in, path);
  if (get<std::uint32_t>(in, path) == 0) return Precision::F32;
  const auto len = get<std::uint32_t>(in, path);
  in.seekg(len, std::ios::cur);
  const auto rank = get<std::uint32_t>(in, path);
  in.seekg(static_cast<std::streamoff>(8 * rank), std::ios::cur);
  return static_cast<Precision>(get<std::uint8_t>(in, path));
}

template void save_checkpoint<float>(const ParamSet<float>&, const std::string&);
template void save_checkpoint<double>(const ParamSet<double>&, const std::string&);
template ParamSet<float> load_checkpoint<float>(const std::string&);
template ParamSet<double> load_checkpoint<double>(const std::string&);

}  // namespace dyg
