#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace galformer::molio {

using Vec3 = std::array<double, 3>;

struct Bond {
  int u = 0;
  int v = 0;
  int type = 0;
  std::vector<double> feats;  // length theta_e

  bool operator==(const Bond&) const = default;
};

/// Topological molecular graph: atom attributes, bond attributes, optional
/// downstream labels (nullopt entries are missing).
struct MolGraph2D {
  std::string id;
  std::size_t theta_v = 0;
  std::vector<double> atom_feats;  // row-major [n_atoms x theta_v]
  std::vector<int> atom_types;
  std::vector<Bond> bonds;
  std::optional<std::vector<std::optional<double>>> labels;

  std::size_t atom_count() const { return atom_types.size(); }
  std::span<const double> atom_feat(std::size_t atom) const {
    return std::span<const double>(atom_feats).subspan(atom * theta_v, theta_v);
  }

  bool operator==(const MolGraph2D&) const = default;
};

/// Geometric graph: atom types, one conformer, the same connectivity.
struct MolGraph3D {
  std::string id;
  std::vector<int> atom_types;
  std::vector<Vec3> coords;
  std::vector<std::pair<int, int>> bonds;

  bool operator==(const MolGraph3D&) const = default;
};

struct MolRecord {
  MolGraph2D g2d;
  std::optional<MolGraph3D> g3d;

  bool operator==(const MolRecord&) const = default;
};

enum class TaskKind { classification, regression };

struct DatasetMeta {
  int theta_v = 16;
  int theta_e = 4;
  int theta_t = 8;
  std::vector<std::string> atom_type_vocab;
  std::vector<std::string> bond_type_vocab;
  int task_count = 0;
  TaskKind task_kind = TaskKind::classification;

  int bond_type_count() const { return static_cast<int>(bond_type_vocab.size()); }
  /// Unordered atom-type pairs (a <= b).
  int pair_class_count() const { return theta_t * (theta_t + 1) / 2; }

  bool operator==(const DatasetMeta&) const = default;
};

struct Dataset {
  std::vector<MolRecord> records;
  DatasetMeta meta;

  std::size_t size() const { return records.size(); }
  bool operator==(const Dataset&) const = default;
};

/// Index of the unordered type pair {a, b} in [0, t(t+1)/2).
inline int pair_class(int a, int b, int theta_t) {
  if (a > b) std::swap(a, b);
  // rows a = 0..a-1 contribute (theta_t - row) pairs each
  return a * theta_t - a * (a - 1) / 2 + (b - a);
}

}  // namespace galformer::molio
