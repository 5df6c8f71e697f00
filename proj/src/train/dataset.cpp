#include "seq2seq/train/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <set>

#include "seq2seq/common.hpp"
#include "seq2seq/config.hpp"
#include "seq2seq/io/png_io.hpp"

namespace fs = std::filesystem;

namespace seq2seq::train {

std::vector<int> DatasetIndex::split_indices(const std::string& split) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < subjects.size(); ++i)
    if (subjects[i].split == split) out.push_back(static_cast<int>(i));
  return out;
}

void DatasetIndex::validate() const {
  if (S < 1) throw ConfigError("dataset: needs at least one sequence");
  if (static_cast<int>(sequence_names.size()) != S)
    throw ConfigError("dataset: sequence name count does not match S");
  std::set<std::string> names(sequence_names.begin(), sequence_names.end());
  if (static_cast<int>(names.size()) != S)
    throw ConfigError("dataset: duplicate sequence names");
  std::set<std::string> ids;
  for (const SubjectEntry& s : subjects) {
    if (!ids.insert(s.id).second) throw DataError("dataset: duplicate subject id " + s.id);
    if (s.split != "train" && s.split != "val" && s.split != "test")
      throw DataError("dataset: subject " + s.id + " has unknown split '" + s.split + "'");
    if (static_cast<int>(s.paths.size()) != S || static_cast<int>(s.available.size()) != S)
      throw DataError("dataset: subject " + s.id + " has wrong per-sequence vector length");
    for (int j = 0; j < S; ++j)
      if (s.available[j] && s.paths[j].empty())
        throw DataError("dataset: subject " + s.id + " marks sequence " + sequence_names[j] +
                        " available without a file");
  }
}

DatasetIndex index_from_toy(const toy::ToyManifest& m, const std::string& root) {
  DatasetIndex idx;
  idx.S = 2;
  idx.sequence_names = {"x1", "x2"};
  idx.root = root;
  idx.subjects.reserve(m.entries.size());
  for (const toy::ToyManifestEntry& e : m.entries) {
    SubjectEntry s;
    s.id = e.id;
    s.split = e.split;
    s.paths = {e.x1_path, e.x2_path};
    s.available = {1, 1};
    s.label1 = e.label1;
    s.label2 = e.label2;
    idx.subjects.push_back(std::move(s));
  }
  idx.validate();
  return idx;
}

DatasetIndex load_dataset_index(const std::string& manifest_path) {
  Json j = load_json_file(manifest_path);
  std::string root = fs::path(manifest_path).parent_path().string();
  if (root.empty()) root = ".";
  if (!j.contains("sequence_names"))
    return index_from_toy(toy::load_toy_manifest(manifest_path), root);

  check_known_keys(j, {"sequence_names", "subjects"}, "dataset manifest");
  DatasetIndex idx;
  idx.root = root;
  idx.sequence_names = j.at("sequence_names").get<std::vector<std::string>>();
  idx.S = static_cast<int>(idx.sequence_names.size());
  for (const Json& js : j.at("subjects")) {
    check_known_keys(js, {"id", "split", "files", "label1", "label2"}, "dataset subject");
    SubjectEntry s;
    s.id = require<std::string>(js, "id", "dataset subject");
    s.split = require<std::string>(js, "split", "dataset subject");
    s.label1 = get_or<int>(js, "label1", -1);
    s.label2 = get_or<int>(js, "label2", -1);
    s.paths.assign(idx.S, "");
    s.available.assign(idx.S, 0);
    const Json& files = js.at("files");
    for (auto it = files.begin(); it != files.end(); ++it) {
      auto pos = std::find(idx.sequence_names.begin(), idx.sequence_names.end(), it.key());
      if (pos == idx.sequence_names.end())
        throw ConfigError("dataset subject " + s.id + ": unknown sequence '" + it.key() + "'");
      int k = static_cast<int>(pos - idx.sequence_names.begin());
      if (!it.value().is_null()) {
        s.paths[k] = it.value().get<std::string>();
        s.available[k] = 1;
      }
    }
    idx.subjects.push_back(std::move(s));
  }
  idx.validate();
  return idx;
}

std::vector<std::vector<char>> make_availability_plan(
    const std::vector<std::vector<char>>& present, int S, std::uint64_t seed) {
  if (S < 2) throw ConfigError("availability plan: needs S >= 2 sequences");
  int max_silenced = std::min(3, S - 1);
  Rng root(seed);
  std::vector<std::vector<char>> keep(present.size());
  std::vector<long long> survivors(static_cast<std::size_t>(S), 0);

  for (std::size_t i = 0; i < present.size(); ++i) {
    if (static_cast<int>(present[i].size()) != S)
      throw ConfigError("availability plan: presence row " + std::to_string(i) +
                        " has wrong length");
    keep[i].assign(present[i].begin(), present[i].end());
    std::vector<int> have;
    for (int j = 0; j < S; ++j)
      if (present[i][j]) have.push_back(j);
    if (have.empty()) continue;

    Rng r = root.fork(i + 1);
    int k = r.uniform_int(1, max_silenced);
    k = std::min(k, static_cast<int>(have.size()) - 1);
    for (int pick = 0; pick < k; ++pick) {
      int sel = pick + static_cast<int>(r.uniform_int(
                           static_cast<std::uint64_t>(have.size() - pick)));
      std::swap(have[pick], have[sel]);
      keep[i][have[pick]] = 0;
    }
    for (int j = 0; j < S; ++j) survivors[j] += keep[i][j] != 0;
  }

  for (int j = 0; j < S; ++j)
    if (survivors[j] == 0 && !present.empty())
      warn("availability plan: sequence " + std::to_string(j) +
           " is silenced in every subject");
  return keep;
}

std::vector<std::vector<char>> make_availability_plan(int n_subjects, int S,
                                                     std::uint64_t seed) {
  std::vector<std::vector<char>> present(
      static_cast<std::size_t>(n_subjects), std::vector<char>(static_cast<std::size_t>(S), 1));
  return make_availability_plan(present, S, seed);
}

void apply_availability_plan(DatasetIndex& idx, const std::vector<std::vector<char>>& keep) {
  if (keep.size() != idx.subjects.size())
    throw ConfigError("availability plan: subject count mismatch");
  for (std::size_t i = 0; i < idx.subjects.size(); ++i) {
    if (idx.subjects[i].split != "train") continue;
    for (int j = 0; j < idx.S; ++j)
      idx.subjects[i].available[j] =
          static_cast<char>(idx.subjects[i].available[j] && keep[i][j]);
  }
}

const io::Volume& SlabLoader::volume(int subject, int seq) {
  if (subject < 0 || subject >= static_cast<int>(idx_->subjects.size()) || seq < 0 ||
      seq >= idx_->S)
    throw ConfigError("slab loader: index out of range");
  std::size_t k = key(subject, seq);
  ++counts_[k];
  const SubjectEntry& s = idx_->subjects[static_cast<std::size_t>(subject)];
  if (!s.available[static_cast<std::size_t>(seq)])
    throw DataError("slab loader: subject " + s.id + " sequence " +
                    idx_->sequence_names[static_cast<std::size_t>(seq)] +
                    " is unavailable and must not be read");

  auto it = cache_.find(k);
  if (it != cache_.end()) return it->second;

  fs::path p(s.paths[static_cast<std::size_t>(seq)]);
  if (p.is_relative()) p = fs::path(idx_->root) / p;
  std::string path = p.string();
  io::Volume v;
  if (path.ends_with(".png")) {
    v.data = io::load_png_gray(path);
    v.range_min = 0.f;
    v.range_max = 1.f;
  } else if (path.ends_with(".nii") || path.ends_with(".nii.gz")) {
    v = io::normalize_minmax(io::load_nifti(path));
  } else if (path.ends_with(".npy")) {
    v = io::normalize_minmax(io::load_volume(path, io::VolumeFormat::raw_npy_like));
  } else {
    throw DataError("slab loader: unsupported file type " + path);
  }
  return cache_.emplace(k, std::move(v)).first->second;
}

nn::Tensor<float> SlabLoader::load_image(int subject, int seq) {
  const io::Volume& v = volume(subject, seq);
  if (v.is3d())
    throw DataError("slab loader: expected a 2D image for subject " +
                    idx_->subjects[static_cast<std::size_t>(subject)].id);
  return v.data.reshaped({1, 1, v.height(), v.width()});
}

nn::Tensor<float> SlabLoader::load_slab(int subject, int seq, int axial_index) {
  const io::Volume& v = volume(subject, seq);
  if (!v.is3d())
    throw DataError("slab loader: expected a 3D volume for subject " +
                    idx_->subjects[static_cast<std::size_t>(subject)].id);
  return io::extract_25d_slab(v, axial_index).reshaped({1, 3, v.height(), v.width()});
}

int SlabLoader::depth(int subject, int seq) { return volume(subject, seq).depth(); }

}  // namespace seq2seq::train
