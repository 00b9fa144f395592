#include "spgcc/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "spgcc/hsi.hpp"

namespace spgcc {

void save_spgw(const std::vector<Tensor>& tensors, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(IoCode::MissingFile, "cannot create " + path);
  out.write("SPGW", 4);
  const uint32_t count = static_cast<uint32_t>(tensors.size());
  out.write(reinterpret_cast<const char*>(&count), 4);
  for (const Tensor& t : tensors) {
    const uint32_t rank = static_cast<uint32_t>(t.rank());
    out.write(reinterpret_cast<const char*>(&rank), 4);
    for (int d : t.shape()) {
      const uint32_t dim = static_cast<uint32_t>(d);
      out.write(reinterpret_cast<const char*>(&dim), 4);
    }
    out.write(reinterpret_cast<const char*>(t.data().data()),
              static_cast<std::streamsize>(t.data().size() * 8));
  }
}

std::vector<Tensor> load_spgw(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(IoCode::MissingFile, "cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "SPGW", 4) != 0)
    throw IoError(IoCode::BadMagic, path + ": bad magic, expected SPGW");
  auto u32 = [&] {
    uint32_t v;
    in.read(reinterpret_cast<char*>(&v), 4);
    if (!in) throw IoError(IoCode::Truncated, path + ": truncated header");
    return v;
  };
  const uint32_t count = u32();
  std::vector<Tensor> tensors;
  tensors.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t rank = u32();
    Shape shape(rank);
    int64_t n = 1;
    for (uint32_t a = 0; a < rank; ++a) {
      shape[a] = static_cast<int>(u32());
      if (shape[a] < 1) throw IoError(IoCode::DimensionMismatch, path + ": zero dimension");
      n *= shape[a];
    }
    std::vector<double> values(static_cast<size_t>(n));
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(n * 8));
    if (!in) throw IoError(IoCode::Truncated, path + ": truncated payload");
    tensors.push_back(Tensor::from_data(std::move(shape), std::move(values)));
  }
  in.peek();
  if (!in.eof()) throw IoError(IoCode::Truncated, path + ": trailing bytes");
  return tensors;
}

}  // namespace spgcc
