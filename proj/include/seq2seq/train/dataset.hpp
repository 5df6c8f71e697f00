#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "seq2seq/io/volume.hpp"
#include "seq2seq/rng.hpp"
#include "seq2seq/toy/toy_sim.hpp"

namespace seq2seq::train {

struct SubjectEntry {
  std::string id;
  std::string split;               // train | val | test
  std::vector<std::string> paths;  // one per sequence, empty = not on disk
  std::vector<char> available;     // on disk and not silenced
  int label1 = -1, label2 = -1;    // toy extras

  int n_available() const {
    int n = 0;
    for (char a : available) n += a != 0;
    return n;
  }
};

struct DatasetIndex {
  int S = 0;
  std::vector<std::string> sequence_names;
  std::vector<SubjectEntry> subjects;
  std::string root;  // directory paths resolve against

  std::vector<int> split_indices(const std::string& split) const;
  void validate() const;
};

// Adapts the paired toy manifest (sequences x1, x2, everything on disk).
DatasetIndex index_from_toy(const toy::ToyManifest& m, const std::string& root);

// Reads either the toy manifest schema or the generic study schema
// {"sequence_names": [...], "subjects": [{"id","split","files":{name:path}}]}.
DatasetIndex load_dataset_index(const std::string& manifest_path);

// keep[subject][sequence]: for each subject draw k uniform in
// {1..min(3,S-1)} and silence k of its present sequences, always retaining at
// least one. Warns when a sequence ends up silenced everywhere.
std::vector<std::vector<char>> make_availability_plan(
    const std::vector<std::vector<char>>& present, int S, std::uint64_t seed);

// convenience: n subjects with every sequence present
std::vector<std::vector<char>> make_availability_plan(int n_subjects, int S, std::uint64_t seed);

// applies keep to idx.subjects[i].available (train split only)
void apply_availability_plan(DatasetIndex& idx, const std::vector<std::vector<char>>& keep);

// Cached image access with per-entry read counters. Reading a silenced entry
// throws; the counters let tests prove no such read was even attempted.
class SlabLoader {
 public:
  explicit SlabLoader(const DatasetIndex& idx) : idx_(&idx) {
    counts_.assign(idx.subjects.size() * static_cast<std::size_t>(idx.S), 0);
  }

  // 2D image as (1,1,H,W)
  nn::Tensor<float> load_image(int subject, int seq);
  // 3-slice slab of a 3D volume at an axial index, (1,3,H,W)
  nn::Tensor<float> load_slab(int subject, int seq, int axial_index);
  // 1 for 2D images
  int depth(int subject, int seq);

  long long access_count(int subject, int seq) const {
    return counts_[key(subject, seq)];
  }
  const DatasetIndex& index() const { return *idx_; }

 private:
  std::size_t key(int subject, int seq) const {
    return static_cast<std::size_t>(subject) * idx_->S + static_cast<std::size_t>(seq);
  }
  const io::Volume& volume(int subject, int seq);

  const DatasetIndex* idx_;
  std::vector<long long> counts_;
  std::unordered_map<std::size_t, io::Volume> cache_;
};

}  // namespace seq2seq::train
