#pragma once

// Everything about a molecule that does not depend on parameters: line graphs,
// gathered feature inputs and structural encodings.

#include <optional>

#include "galformer/linegraph/features.hpp"
#include "galformer/linegraph/line_graph.hpp"
#include "galformer/model/config.hpp"
#include "galformer/molio/types.hpp"
#include "galformer/structcode/encoding.hpp"

namespace galformer::model {

template <std::floating_point T>
struct Prepared2D {
  lg::LineGraph graph;
  lg::FeatureInputs2D inputs;
  sc::Structure<T> structure;
};

template <std::floating_point T>
struct Prepared3D {
  lg::LineGraph graph;
  lg::FeatureInputs3D inputs;
  sc::Structure<T> structure;
};

template <std::floating_point T>
struct PreparedMolecule {
  std::string id;
  Prepared2D<T> d2;
  std::optional<Prepared3D<T>> d3;

  std::size_t n_nodes() const { return d2.graph.n_nodes(); }
};

template <std::floating_point T>
Prepared2D<T> prepare_2d(const molio::MolGraph2D& g, const molio::DatasetMeta& meta, const ModelConfig& cfg) {
  Prepared2D<T> p;
  p.graph = lg::to_line_graph(g, meta.theta_t);
  p.inputs = lg::gather_2d_inputs(g, p.graph);
  p.structure = sc::compute_structure<T>(p.graph, cfg.encoding_config());
  return p;
}

template <std::floating_point T>
Prepared3D<T> prepare_3d(const molio::MolGraph3D& g, const molio::DatasetMeta& meta, const ModelConfig& cfg) {
  Prepared3D<T> p;
  p.graph = lg::to_line_graph(g, meta.theta_t);
  p.inputs = lg::gather_3d_inputs(g, p.graph, meta.theta_t);
  p.structure = sc::compute_structure<T>(p.graph, cfg.encoding_config());
  return p;
}

/// need_3d: MissingConformer when the record lacks coordinates.
template <std::floating_point T>
PreparedMolecule<T> prepare_molecule(const molio::MolRecord& r, const molio::DatasetMeta& meta,
                                     const ModelConfig& cfg, bool need_3d) {
  PreparedMolecule<T> m;
  m.id = r.g2d.id;
  m.d2 = prepare_2d<T>(r.g2d, meta, cfg);
  if (need_3d) {
    if (!r.g3d) throw MissingConformer("molecule '" + r.g2d.id + "' has no conformer");
    m.d3 = prepare_3d<T>(*r.g3d, meta, cfg);
    if (m.d3->graph.node_origin != m.d2.graph.node_origin)
      throw DimensionMismatch("2-D and 3-D bonds differ for '" + r.g2d.id + "'");
  }
  return m;
}

}  // namespace galformer::model
