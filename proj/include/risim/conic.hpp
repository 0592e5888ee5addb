// conic.hpp — semidefinite problem builder and interior-point solver.
//
// Variables are real symmetric PSD matrices, complex Hermitian PSD matrices,
// or free real vectors. Constraints are scalar affine equalities and
// inequalities plus linear matrix inequalities; the objective is a scalar
// affine functional. Complex variables are embedded as structured real
// blocks internally; solutions are read back in the caller's domain.

#pragma once

#include <string>
#include <vector>

#include "risim/linalg.hpp"

namespace risim {

enum class VarKind { kRealPsd, kComplexPsd, kFree };

struct VarHandle {
  int id = -1;
};

// One linear term of a scalar functional. For matrix variables the value is
// Re tr(coeff * X) (only the self-adjoint part of coeff contributes); for
// free vector variables it is Re(coeff)^T x with coeff a dim x 1 column.
struct AffineTerm {
  VarHandle var;
  CMat coeff;
};

// Scalar affine functional: sum of trace terms plus a constant.
struct ScalarAffine {
  std::vector<AffineTerm> terms;
  double constant = 0.0;

  ScalarAffine& add(VarHandle v, const CMat& coeff) {
    terms.push_back({v, coeff});
    return *this;
  }
};

inline ScalarAffine trace_term(VarHandle v, const CMat& coeff,
                               double constant = 0.0) {
  ScalarAffine a;
  a.constant = constant;
  a.add(v, coeff);
  return a;
}

// Real embedding of a complex Hermitian matrix, [[Re, -Im], [Im, Re]], and
// its structured inverse (averages the two copies back into one Hermitian
// matrix). Trace convention: Re tr(H X) == 0.5 * tr(realify(H) realify(X)).
Mat realify(const CMat& h);
CMat derealify(const Mat& y);

enum class SolveStatus { kOptimal, kInfeasible, kUnbounded, kNumericalLimit };

struct SolveSettings {
  int max_iterations = 100;
  double tol = 1e-9;         // target relative primal/dual/gap residuals
  double accept_tol = 1e-7;  // weakest residuals still reported as optimal
};

struct SdpSolution {
  SolveStatus status = SolveStatus::kNumericalLimit;
  double objective = 0.0;
  std::vector<CMat> values;  // indexed by variable id
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double gap = 0.0;
  int iterations = 0;

  const CMat& value(VarHandle v) const { return values.at(v.id); }
  Mat real_value(VarHandle v) const { return values.at(v.id).real(); }
};

class SdpBuilder {
 public:
  VarHandle add_variable(VarKind kind, int dim, std::string name);

  // Scalar constraints: expr == 0 and expr >= 0.
  void add_equality(ScalarAffine expr);
  void add_inequality(ScalarAffine expr);

  // Symmetric affine matrix constraint: entries[i][j] for i <= j define the
  // upper triangle (the rest is mirrored); the matrix must be PSD.
  void add_lmi(std::vector<std::vector<ScalarAffine>> entries);

  void minimize(ScalarAffine objective);

  struct Variable {
    VarKind kind;
    int dim;
    std::string name;
  };
  struct Lmi {
    std::vector<std::vector<ScalarAffine>> entries;
  };

  const std::vector<Variable>& variables() const { return vars_; }
  const std::vector<ScalarAffine>& equalities() const { return eqs_; }
  const std::vector<ScalarAffine>& inequalities() const { return ineqs_; }
  const std::vector<Lmi>& lmis() const { return lmis_; }
  const ScalarAffine& objective() const { return objective_; }

 private:
  void check_term_dims(const ScalarAffine& expr) const;

  std::vector<Variable> vars_;
  std::vector<ScalarAffine> eqs_;
  std::vector<ScalarAffine> ineqs_;
  std::vector<Lmi> lmis_;
  ScalarAffine objective_;
};

SdpSolution solve_sdp(const SdpBuilder& problem, const SolveSettings& settings = {});

}  // namespace risim
