#include "formation/graph.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "formation/errors.hpp"

namespace formation {

UndirectedGraph::UndirectedGraph(int vertex_count, std::vector<Edge> edges)
    : vertex_count_(vertex_count), edges_(std::move(edges)) {
  if (vertex_count_ <= 0) {
    throw ValidationError("graph needs at least one vertex");
  }
  if (edges_.empty()) {
    throw ValidationError("graph needs at least one edge");
  }
  for (Edge& e : edges_) {
    if (e.i == e.j) {
      throw ValidationError("self-loop at vertex " + std::to_string(e.i + 1));
    }
    if (e.i < 0 || e.j < 0 || e.i >= vertex_count_ || e.j >= vertex_count_) {
      throw ValidationError("edge endpoint out of range");
    }
    if (e.i > e.j) std::swap(e.i, e.j);
  }
  std::sort(edges_.begin(), edges_.end());
  if (std::adjacent_find(edges_.begin(), edges_.end()) != edges_.end()) {
    throw ValidationError("duplicate edge");
  }
  incident_.resize(vertex_count_);
  for (int k = 0; k < edge_count(); ++k) {
    incident_[edges_[k].i].push_back(k);
    incident_[edges_[k].j].push_back(k);
  }
}

UndirectedGraph UndirectedGraph::complete(int vertex_count) {
  std::vector<Edge> edges;
  for (int i = 0; i < vertex_count; ++i) {
    for (int j = i + 1; j < vertex_count; ++j) edges.push_back({i, j});
  }
  return UndirectedGraph(vertex_count, std::move(edges));
}

int UndirectedGraph::edge_index(int a, int b) const {
  if (a > b) std::swap(a, b);
  auto it = std::lower_bound(edges_.begin(), edges_.end(), Edge{a, b});
  if (it == edges_.end() || *it != Edge{a, b}) return -1;
  return static_cast<int>(it - edges_.begin());
}

FormationSpec::FormationSpec(UndirectedGraph graph, int dimension,
                             std::vector<double> distances)
    : graph_(std::move(graph)), dimension_(dimension), distances_(std::move(distances)) {
  if (dimension_ <= 0) throw ValidationError("ambient dimension must be positive");
  if (static_cast<int>(distances_.size()) != graph_.edge_count()) {
    throw DimensionError("one desired distance per edge is required");
  }
  squared_distances_.resize(graph_.edge_count());
  for (int k = 0; k < graph_.edge_count(); ++k) {
    const double d = distances_[k];
    if (!(d > 0.0) || !std::isfinite(d)) {
      const Edge& e = graph_.edges()[k];
      throw ValidationError("desired distance for edge " + std::to_string(e.i + 1) + "-" +
                            std::to_string(e.j + 1) + " must be positive");
    }
    squared_distances_[k] = d * d;
  }
}

FormationSpec FormationSpec::from_edges(int vertex_count, int dimension,
                                        const std::vector<EdgeLength>& edges) {
  std::vector<Edge> plain;
  plain.reserve(edges.size());
  for (const auto& e : edges) plain.push_back({e.i, e.j});
  UndirectedGraph graph(vertex_count, plain);
  std::vector<double> distances(graph.edge_count());
  for (const auto& e : edges) distances[graph.edge_index(e.i, e.j)] = e.distance;
  return FormationSpec(std::move(graph), dimension, std::move(distances));
}

void require_configuration(const UndirectedGraph& graph, int dimension,
                           const Configuration& p) {
  const auto expected = static_cast<Eigen::Index>(dimension) * graph.vertex_count();
  if (p.size() != expected) {
    throw DimensionError("configuration has dimension " + std::to_string(p.size()) +
                         ", expected " + std::to_string(expected));
  }
}

void require_configuration(const FormationSpec& spec, const Configuration& p) {
  require_configuration(spec.graph(), spec.dimension(), p);
}

Eigen::VectorXd edge_map(const UndirectedGraph& graph, int dimension,
                         const Configuration& p) {
  require_configuration(graph, dimension, p);
  Eigen::VectorXd out(graph.edge_count());
  for (int k = 0; k < graph.edge_count(); ++k) {
    const Edge& e = graph.edges()[k];
    out[k] = (agent_block(p, e.j, dimension) - agent_block(p, e.i, dimension)).squaredNorm();
  }
  return out;
}

Eigen::MatrixXd rigidity_matrix(const UndirectedGraph& graph, int dimension,
                                const Configuration& p) {
  require_configuration(graph, dimension, p);
  const int n = dimension;
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(graph.edge_count(), p.size());
  for (int k = 0; k < graph.edge_count(); ++k) {
    const Edge& e = graph.edges()[k];
    const Eigen::VectorXd diff = agent_block(p, e.i, n) - agent_block(p, e.j, n);
    jac.block(k, static_cast<Eigen::Index>(e.i) * n, 1, n) = 2.0 * diff.transpose();
    jac.block(k, static_cast<Eigen::Index>(e.j) * n, 1, n) = -2.0 * diff.transpose();
  }
  return jac;
}

RigidityVerdict is_infinitesimally_rigid(const UndirectedGraph& graph, int dimension,
                                         const Configuration& p, double rank_tolerance) {
  const int n = dimension;
  const int N = graph.vertex_count();
  if (N < n) {
    throw UnsupportedCase("infinitesimal rigidity is only defined here for N >= n (got N=" +
                          std::to_string(N) + ", n=" + std::to_string(n) + ")");
  }
  RigidityVerdict verdict;
  verdict.required_rank = n * N - n * (n + 1) / 2;

  const Eigen::MatrixXd jac = rigidity_matrix(graph, dimension, p);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(jac);
  verdict.singular_values = svd.singularValues();
  const double sigma_max =
      verdict.singular_values.size() > 0 ? verdict.singular_values.maxCoeff() : 0.0;
  int rank = 0;
  if (sigma_max > 0.0) {
    for (Eigen::Index k = 0; k < verdict.singular_values.size(); ++k) {
      if (verdict.singular_values[k] > rank_tolerance * sigma_max) ++rank;
    }
  }
  verdict.rank = rank;
  verdict.rigid = rank == verdict.required_rank;
  return verdict;
}

bool is_target_formation(const FormationSpec& spec, const Configuration& p, double tol) {
  const Eigen::VectorXd lengths = edge_map(spec.graph(), spec.dimension(), p);
  return (lengths - spec.squared_distances()).lpNorm<Eigen::Infinity>() <= tol;
}

}  // namespace formation
