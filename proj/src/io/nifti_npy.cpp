#include <zlib.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "seq2seq/common.hpp"
#include "seq2seq/io/volume.hpp"

namespace seq2seq::io {

namespace {

// the NIfTI-1 fields this reader cares about, at their fixed offsets
struct NiftiHeader {
  std::int32_t sizeof_hdr;   // 0
  std::int16_t dim[8];       // 40
  std::int16_t datatype;     // 70
  std::int16_t bitpix;       // 72
  float pixdim[8];           // 76
  float vox_offset;          // 108
  float scl_slope;           // 112
  float scl_inter;           // 116
  char magic[4];             // 344
};

template <typename T>
T swap_bytes(T v) {
  T out;
  auto* src = reinterpret_cast<const std::uint8_t*>(&v);
  auto* dst = reinterpret_cast<std::uint8_t*>(&out);
  for (std::size_t i = 0; i < sizeof(T); ++i) dst[i] = src[sizeof(T) - 1 - i];
  return out;
}

std::vector<std::uint8_t> read_all_maybe_gz(const std::string& path) {
  gzFile f = gzopen(path.c_str(), "rb");
  if (!f) throw DataError("cannot open: " + path);
  std::vector<std::uint8_t> out;
  std::uint8_t buf[1 << 16];
  int n;
  while ((n = gzread(f, buf, sizeof(buf))) > 0) out.insert(out.end(), buf, buf + n);
  bool bad = n < 0;
  gzclose(f);
  if (bad) throw DataError("decompress failed: " + path);
  return out;
}

template <typename T>
void fill_from(const std::uint8_t* src, std::size_t count, bool swap, float slope, float inter,
               std::vector<float>& dst) {
  dst.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    T v;
    std::memcpy(&v, src + i * sizeof(T), sizeof(T));
    if (swap) v = swap_bytes(v);
    dst[i] = static_cast<float>(v) * slope + inter;
  }
}

}  // namespace

Volume load_nifti(const std::string& path) {
  std::vector<std::uint8_t> raw = read_all_maybe_gz(path);
  if (raw.size() < 352) throw DataError("truncated NIfTI file: " + path);

  NiftiHeader h{};
  std::memcpy(&h.sizeof_hdr, raw.data(), 4);
  std::memcpy(h.dim, raw.data() + 40, 16);
  std::memcpy(&h.datatype, raw.data() + 70, 2);
  std::memcpy(&h.bitpix, raw.data() + 72, 2);
  std::memcpy(h.pixdim, raw.data() + 76, 32);
  std::memcpy(&h.vox_offset, raw.data() + 108, 4);
  std::memcpy(&h.scl_slope, raw.data() + 112, 4);
  std::memcpy(&h.scl_inter, raw.data() + 116, 4);
  std::memcpy(h.magic, raw.data() + 344, 4);

  bool swap = false;
  if (h.dim[0] < 1 || h.dim[0] > 7) {
    swap = true;
    for (auto& d : h.dim) d = swap_bytes(d);
    if (h.dim[0] < 1 || h.dim[0] > 7) throw DataError("bad NIfTI dim field: " + path);
    h.datatype = swap_bytes(h.datatype);
    h.bitpix = swap_bytes(h.bitpix);
    for (auto& p : h.pixdim) p = swap_bytes(p);
    h.vox_offset = swap_bytes(h.vox_offset);
    h.scl_slope = swap_bytes(h.scl_slope);
    h.scl_inter = swap_bytes(h.scl_inter);
  }
  if (std::strncmp(h.magic, "n+1", 3) != 0 && std::strncmp(h.magic, "ni1", 3) != 0)
    throw DataError("missing NIfTI magic: " + path);

  int nd = h.dim[0];
  if (nd > 3) {
    // allow trailing singleton dims (some tools write dim[0]=4 with nt=1)
    for (int i = nd; i > 3; --i) {
      if (h.dim[i] > 1)
        throw DataError("NIfTI with " + std::to_string(nd) + " non-singleton dims unsupported: " + path);
    }
    nd = 3;
  }
  int nx = h.dim[1], ny = nd >= 2 ? h.dim[2] : 1, nz = nd >= 3 ? h.dim[3] : 1;
  if (nx <= 0 || ny <= 0 || nz <= 0) throw DataError("non-positive NIfTI dims: " + path);

  std::size_t count = static_cast<std::size_t>(nx) * ny * nz;
  std::size_t offset = static_cast<std::size_t>(h.vox_offset);
  if (offset < 348) offset = 352;
  std::size_t need = offset + count * static_cast<std::size_t>(h.bitpix / 8);
  if (raw.size() < need) throw DataError("NIfTI data shorter than header promises: " + path);

  float slope = (h.scl_slope == 0.f || !std::isfinite(h.scl_slope)) ? 1.f : h.scl_slope;
  float inter = std::isfinite(h.scl_inter) ? h.scl_inter : 0.f;

  std::vector<float> values;
  const std::uint8_t* src = raw.data() + offset;
  switch (h.datatype) {
    case 2: fill_from<std::uint8_t>(src, count, swap, slope, inter, values); break;
    case 4: fill_from<std::int16_t>(src, count, swap, slope, inter, values); break;
    case 8: fill_from<std::int32_t>(src, count, swap, slope, inter, values); break;
    case 16: fill_from<float>(src, count, swap, slope, inter, values); break;
    case 64: fill_from<double>(src, count, swap, slope, inter, values); break;
    case 512: fill_from<std::uint16_t>(src, count, swap, slope, inter, values); break;
    default: throw DataError("unsupported NIfTI datatype " + std::to_string(h.datatype));
  }

  Volume v;
  if (nz > 1) {
    v.data = nn::Tensor<float>({nz, ny, nx});
    v.spacing = {h.pixdim[3], h.pixdim[2], h.pixdim[1]};
  } else {
    v.data = nn::Tensor<float>({ny, nx});
    v.spacing = {h.pixdim[2], h.pixdim[1]};
  }
  // NIfTI stores x fastest; (D,H,W) row-major matches that layout directly
  std::copy(values.begin(), values.end(), v.data.data.begin());
  return v;
}

void save_nifti(const Volume& v, const std::string& path) {
  std::vector<std::uint8_t> header(352, 0);
  auto put32 = [&](std::size_t off, std::int32_t x) { std::memcpy(header.data() + off, &x, 4); };
  auto put16 = [&](std::size_t off, std::int16_t x) { std::memcpy(header.data() + off, &x, 2); };
  auto putf = [&](std::size_t off, float x) { std::memcpy(header.data() + off, &x, 4); };

  put32(0, 348);
  int nd = v.data.ndim();
  put16(40, static_cast<std::int16_t>(nd));
  int nx = v.width(), ny = v.height(), nz = v.is3d() ? v.depth() : 1;
  put16(42, static_cast<std::int16_t>(nx));
  put16(44, static_cast<std::int16_t>(ny));
  put16(46, static_cast<std::int16_t>(nd == 3 ? nz : 1));
  for (int i = nd + 1; i < 8; ++i) put16(40 + 2 * i, 1);
  put16(70, 16);  // float32
  put16(72, 32);
  putf(76, 1.f);
  for (int i = 0; i < nd; ++i) {
    float sp = i < static_cast<int>(v.spacing.size()) ? v.spacing[v.spacing.size() - 1 - i] : 1.f;
    putf(80 + 4 * i, sp);
  }
  putf(108, 352.f);
  putf(112, 1.f);
  putf(116, 0.f);
  std::memcpy(header.data() + 344, "n+1\0", 4);

  bool gz = path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
  if (gz) {
    gzFile f = gzopen(path.c_str(), "wb");
    if (!f) throw DataError("cannot write: " + path);
    bool ok = gzwrite(f, header.data(), 352) == 352;
    ok = ok && gzwrite(f, v.data.ptr(), static_cast<unsigned>(v.data.numel() * 4)) ==
                   static_cast<int>(v.data.numel() * 4);
    gzclose(f);
    if (!ok) throw DataError("write failed: " + path);
  } else {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write: " + path);
    f.write(reinterpret_cast<const char*>(header.data()), 352);
    f.write(reinterpret_cast<const char*>(v.data.ptr()),
            static_cast<std::streamsize>(v.data.numel() * 4));
    if (!f) throw DataError("write failed: " + path);
  }
}

// ---- minimal .npy (C-order float32/float64, versions 1.x) ----

nn::Tensor<float> load_npy(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open: " + path);
  char magic[6];
  f.read(magic, 6);
  if (!f || std::memcmp(magic, "\x93NUMPY", 6) != 0) throw DataError("not an npy file: " + path);
  std::uint8_t ver[2];
  f.read(reinterpret_cast<char*>(ver), 2);
  std::uint32_t hlen = 0;
  if (ver[0] == 1) {
    std::uint16_t h16;
    f.read(reinterpret_cast<char*>(&h16), 2);
    hlen = h16;
  } else {
    f.read(reinterpret_cast<char*>(&hlen), 4);
  }
  std::string header(hlen, '\0');
  f.read(header.data(), hlen);
  if (!f) throw DataError("truncated npy header: " + path);

  auto find_value = [&](const std::string& key) -> std::string {
    std::size_t k = header.find("'" + key + "'");
    if (k == std::string::npos) throw DataError("npy header missing " + key + ": " + path);
    std::size_t colon = header.find(':', k);
    return header.substr(colon + 1);
  };

  std::string descr = find_value("descr");
  std::size_t q1 = descr.find('\'');
  std::size_t q2 = descr.find('\'', q1 + 1);
  descr = descr.substr(q1 + 1, q2 - q1 - 1);
  bool f64;
  if (descr == "<f4" || descr == "|f4") {
    f64 = false;
  } else if (descr == "<f8" || descr == "|f8") {
    f64 = true;
  } else {
    throw DataError("npy dtype " + descr + " unsupported (need <f4 or <f8): " + path);
  }
  if (find_value("fortran_order").find("True") < 8)
    throw DataError("fortran-order npy unsupported: " + path);

  std::string shape_str = find_value("shape");
  std::size_t open = shape_str.find('(');
  std::size_t close = shape_str.find(')');
  std::vector<int> shape;
  std::string inner = shape_str.substr(open + 1, close - open - 1);
  std::size_t pos = 0;
  while (pos < inner.size()) {
    while (pos < inner.size() && !std::isdigit(static_cast<unsigned char>(inner[pos]))) ++pos;
    if (pos >= inner.size()) break;
    std::size_t end = pos;
    while (end < inner.size() && std::isdigit(static_cast<unsigned char>(inner[end]))) ++end;
    shape.push_back(std::stoi(inner.substr(pos, end - pos)));
    pos = end;
  }
  if (shape.empty()) throw DataError("scalar npy unsupported: " + path);

  nn::Tensor<float> out(shape);
  if (f64) {
    std::vector<double> tmp(static_cast<std::size_t>(out.numel()));
    f.read(reinterpret_cast<char*>(tmp.data()), static_cast<std::streamsize>(tmp.size() * 8));
    if (!f) throw DataError("truncated npy data: " + path);
    for (std::size_t i = 0; i < tmp.size(); ++i) out.data[i] = static_cast<float>(tmp[i]);
  } else {
    f.read(reinterpret_cast<char*>(out.data.data()),
           static_cast<std::streamsize>(out.data.size() * 4));
    if (!f) throw DataError("truncated npy data: " + path);
  }
  return out;
}

void save_npy(const nn::Tensor<float>& t, const std::string& path) {
  std::string shape;
  for (std::size_t i = 0; i < t.shape.size(); ++i) shape += std::to_string(t.shape[i]) + ", ";
  if (t.shape.size() > 1) shape.resize(shape.size() - 2);
  std::string dict = "{'descr': '<f4', 'fortran_order': False, 'shape': (" + shape + "), }";
  std::size_t total = 10 + dict.size() + 1;
  std::size_t padded = (total + 63) / 64 * 64;
  dict.append(padded - 10 - dict.size() - 1, ' ');
  dict.push_back('\n');

  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write: " + path);
  f.write("\x93NUMPY\x01\x00", 8);
  std::uint16_t hlen = static_cast<std::uint16_t>(dict.size());
  f.write(reinterpret_cast<const char*>(&hlen), 2);
  f.write(dict.data(), static_cast<std::streamsize>(dict.size()));
  f.write(reinterpret_cast<const char*>(t.ptr()), static_cast<std::streamsize>(t.data.size() * 4));
  if (!f) throw DataError("write failed: " + path);
}

}  // namespace seq2seq::io
