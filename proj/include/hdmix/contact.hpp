#pragma once

// P1 finite elements for the plane viscoelastic body in bilateral contact
// with Tresca friction. Builds the discrete mixed instance:
//
//   A  from  int (2 beta eps(u) + eta tr eps(u) I) : eps(v)
//   G  from  int eps(u) : eps(v)            (the X inner product)
//   B  tangential trace at each free contact node, lumped edge weights w
//   Lambda = { |mu_i| <= g }
//
// Clamped dofs and contact-node normal dofs are eliminated from the unknowns.

#include <functional>
#include <vector>

#include <Eigen/Core>

#include "hdmix/history.hpp"
#include "hdmix/mesh.hpp"
#include "hdmix/saddle.hpp"

namespace hdmix {

struct Material {
  double beta = 1.0;   // shear-like Lame coefficient
  double eta = 0.5;    // volumetric Lame coefficient
  double omega = 1.0;  // relaxation rate

  /// Nonnegativity of all three; the solver additionally needs beta > 0.
  void validate() const;
};

struct Loads {
  std::vector<Eigen::Vector2d> body;      // per node, force / volume
  std::vector<Eigen::Vector2d> traction;  // per node, used on traction edges
  std::function<double(double)> theta = [](double) { return 1.0; };
  std::function<double(double)> zeta = [](double) { return 1.0; };

  static Loads uniform(std::size_t nodes, Eigen::Vector2d body, Eigen::Vector2d traction);
};

struct ContactModel {
  Mesh mesh;
  Material material;
  Loads loads;
  double g = 0.1;  // friction bound on the contact part

  void validate() const;
};

enum class NodeKind { Free, Clamped, Contact };

struct DofMap {
  std::vector<NodeKind> kind;
  /// First reduced dof per node (-1 when clamped). Free nodes own two
  /// consecutive dofs (x, y), contact nodes one tangential dof.
  std::vector<int> first_dof;
  std::vector<Eigen::Vector2d> tangent;  // contact nodes only
  std::vector<Eigen::Vector2d> normal;   // outward, contact nodes only
  std::vector<int> contact_nodes;        // multiplier order
  int n = 0;
};

struct AssembledInstance {
  DofMap dofs;
  SpMat A;
  SpMat G;
  SpMat div;  // int div u div v, so that A = 2 beta G + eta div
  SpMat B;
  Vec weights;
  Vec bounds;
  Vec body_load;
  Vec traction_load;
  /// Reduced Gram matrix of pi v = (v, v on the traction part) in L2 x L2.
  SpMat pi_gram;
  /// Factorized X inner product built from G.
  InnerProduct inner;
  Material material;
  std::function<double(double)> theta;
  std::function<double(double)> zeta;

  Vec load(double t) const;
  Index dim() const { return A.rows(); }
  Index multipliers() const { return B.rows(); }

  PrimalOperator primal_operator() const;
  CouplingForm coupling() const;
  MultiplierSet multiplier_set() const;

  /// Nodal displacement field (clamped nodes zero).
  std::vector<Eigen::Vector2d> displacement(const Vec& u) const;
  /// Tangential displacement at each contact node (= B u).
  Vec tangential(const Vec& u) const;
  /// Normal displacement at each contact node reconstructed from the field.
  Vec normal_displacement(const Vec& u) const;
};

AssembledInstance assemble(const ContactModel& model);

/// Stiffness of the unconstrained body on all 2 * nodes dofs (x, y per node).
SpMat full_stiffness(const Mesh& mesh, const Material& material);

/// Max nodal error of the P1 solve with the linear field grad * x + shift
/// prescribed on every boundary node (all tags treated as Dirichlet).
double patch_test_error(const Mesh& mesh, const Material& material, const Eigen::Matrix2d& grad,
                        const Eigen::Vector2d& shift);

/// c0 with ||pi v||_Z <= c0 ||v||_X on the reduced space.
double trace_constant(const AssembledInstance& inst);

struct FrictionKktReport {
  double max_bound_residual = 0.0;  // max(0, |lambda_i| - g)
  double max_slip_residual = 0.0;   // |lambda_i - g sign(u_tau_i)| on slipping nodes
  double weighted_bound_violation = 0.0;
  std::vector<bool> slipping;
  int stick = 0;
  int slip = 0;
};

FrictionKktReport check_friction_kkt(const Vec& u_tau, const Vec& lambda, double g,
                                     const Vec& weights, double tol);

EvolutionProblem to_evolution_problem(const AssembledInstance& inst, const TimeGrid& grid);
EvolutionProblem to_evolution_problem(const ContactModel& model, const TimeGrid& grid);

/// L2 norm of eps(u) - eps(u_h) over the mesh (6-point quadrature per triangle).
double strain_error(const Mesh& mesh, const std::vector<Eigen::Vector2d>& uh,
                    const std::function<Eigen::Matrix2d(const Eigen::Vector2d&)>& exact_strain);

}  // namespace hdmix
