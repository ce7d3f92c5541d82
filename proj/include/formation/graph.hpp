#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace formation {

// Stacked agent positions (p_1, ..., p_N), each block of length n.
using Configuration = Eigen::VectorXd;

// Undirected edge between agents i < j (0-based).
struct Edge {
  int i = 0;
  int j = 0;

  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

// Simple undirected graph. Edges are kept in lexicographic order so that
// every edge-indexed vector in the library shares one layout.
class UndirectedGraph {
 public:
  UndirectedGraph(int vertex_count, std::vector<Edge> edges);

  static UndirectedGraph complete(int vertex_count);

  int vertex_count() const { return vertex_count_; }
  int edge_count() const { return static_cast<int>(edges_.size()); }
  const std::vector<Edge>& edges() const { return edges_; }

  // Index of edge {a, b} in the canonical order, or -1.
  int edge_index(int a, int b) const;

  // Edge indices incident to vertex i.
  const std::vector<int>& incident_edges(int i) const { return incident_[i]; }

 private:
  int vertex_count_;
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> incident_;
};

struct EdgeLength {
  int i = 0;
  int j = 0;
  double distance = 0.0;
};

// Graph, ambient dimension and desired inter-agent distances.
class FormationSpec {
 public:
  // `distances` follows the graph's canonical edge order.
  FormationSpec(UndirectedGraph graph, int dimension, std::vector<double> distances);

  static FormationSpec from_edges(int vertex_count, int dimension,
                                  const std::vector<EdgeLength>& edges);

  const UndirectedGraph& graph() const { return graph_; }
  int dimension() const { return dimension_; }
  int agent_count() const { return graph_.vertex_count(); }
  int edge_count() const { return graph_.edge_count(); }
  // n * N
  int state_dimension() const { return dimension_ * graph_.vertex_count(); }

  const std::vector<double>& distances() const { return distances_; }
  // d_ij^2 in canonical edge order.
  const Eigen::VectorXd& squared_distances() const { return squared_distances_; }

 private:
  UndirectedGraph graph_;
  int dimension_;
  std::vector<double> distances_;
  Eigen::VectorXd squared_distances_;
};

// Position block of agent i.
inline auto agent_block(const Eigen::VectorXd& x, int i, int n) {
  return x.segment(static_cast<Eigen::Index>(i) * n, n);
}
inline auto agent_block(Eigen::VectorXd& x, int i, int n) {
  return x.segment(static_cast<Eigen::Index>(i) * n, n);
}

void require_configuration(const UndirectedGraph& graph, int dimension,
                           const Configuration& p);
void require_configuration(const FormationSpec& spec, const Configuration& p);

// Squared edge lengths ||p_j - p_i||^2 in canonical edge order.
Eigen::VectorXd edge_map(const UndirectedGraph& graph, int dimension,
                         const Configuration& p);

// Jacobian of edge_map, M x nN.
Eigen::MatrixXd rigidity_matrix(const UndirectedGraph& graph, int dimension,
                                const Configuration& p);

struct RigidityVerdict {
  bool rigid = false;
  int rank = 0;
  int required_rank = 0;
  Eigen::VectorXd singular_values;
};

inline constexpr double kDefaultRankTolerance = 1e-9;

// Numerical rank of the rigidity matrix against nN - n(n+1)/2. Singular
// values above rank_tolerance * sigma_max count as nonzero.
RigidityVerdict is_infinitesimally_rigid(const UndirectedGraph& graph, int dimension,
                                         const Configuration& p,
                                         double rank_tolerance = kDefaultRankTolerance);

// True iff every edge length matches its desired value up to tol in the
// squared-distance (sup-norm) sense.
bool is_target_formation(const FormationSpec& spec, const Configuration& p, double tol);

}  // namespace formation
