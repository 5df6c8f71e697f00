#include "seq2seq/train/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "seq2seq/sha256.hpp"

namespace seq2seq::train {

namespace {
constexpr char kMagic[4] = {'S', '2', 'S', '1'};
}

void save_weights_file(const WeightsFile& w, const std::string& path) {
  Json meta = w.meta;
  meta["format_version"] = kWeightsFormatVersion;
  Json names = Json::array();
  Sha256 hash;
  for (const auto& [name, tensor] : w.tensors) {
    names.push_back({{"name", name}, {"shape", tensor.shape}});
    hash.update(tensor.ptr(), tensor.data.size() * sizeof(float));
  }
  meta["tensors"] = std::move(names);
  meta["data_sha256"] = hash.hex_digest();

  std::string header = meta.dump();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write: " + path);
  f.write(kMagic, 4);
  std::uint64_t hlen = header.size();
  f.write(reinterpret_cast<const char*>(&hlen), 8);
  f.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& [name, tensor] : w.tensors) {
    (void)name;
    f.write(reinterpret_cast<const char*>(tensor.ptr()),
            static_cast<std::streamsize>(tensor.data.size() * sizeof(float)));
  }
  if (!f) throw DataError("write failed: " + path);
}

WeightsFile load_weights_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open weights file: " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("not a weights file (bad magic): " + path);
  std::uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), 8);
  if (!f || hlen == 0 || hlen > (1ull << 30)) throw DataError("corrupt weights header: " + path);
  std::string header(hlen, '\0');
  f.read(header.data(), static_cast<std::streamsize>(hlen));
  if (!f) throw DataError("truncated weights header: " + path);

  WeightsFile w;
  try {
    w.meta = Json::parse(header);
  } catch (const Json::parse_error& e) {
    throw DataError("corrupt weights metadata in " + path + ": " + e.what());
  }
  int version = w.meta.value("format_version", -1);
  if (version != kWeightsFormatVersion)
    throw DataError("weights format version " + std::to_string(version) + " unsupported in " +
                    path);
  if (!w.meta.contains("tensors") || !w.meta.contains("data_sha256"))
    throw DataError("weights metadata incomplete: " + path);

  Sha256 hash;
  for (const Json& item : w.meta.at("tensors")) {
    std::string name = item.at("name").get<std::string>();
    std::vector<int> shape = item.at("shape").get<std::vector<int>>();
    nn::Tensor<float> t(shape);
    f.read(reinterpret_cast<char*>(t.ptr()),
           static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    if (!f) throw DataError("truncated weights data for '" + name + "': " + path);
    hash.update(t.ptr(), t.data.size() * sizeof(float));
    w.tensors.emplace_back(std::move(name), std::move(t));
  }
  std::string stored = w.meta.at("data_sha256").get<std::string>();
  if (hash.hex_digest() != stored)
    throw DataError("weights data hash mismatch (corrupt file): " + path);
  return w;
}

}  // namespace seq2seq::train
