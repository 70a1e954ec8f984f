#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ccf {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

/// Affine second-order cone constraint |M z + q|_2 <= r'z + s.
struct SecondOrderConeBlock {
  SparseMatrix M;
  VectorXd q;
  Eigen::SparseVector<double> r;
  double s = 0.0;

  int dim() const { return static_cast<int>(M.rows()) + 1; }
};

/// Convex program
///
///   minimize    c'z + 1/2 |S z - t|^2
///   subject to  E z = d,  F z <= e,  |M_k z + q_k| <= r_k'z + s_k.
///
struct ConicProgram {
  int num_vars = 0;
  VectorXd linear_cost;
  SparseMatrix quad_map;  // S, rows may be zero
  VectorXd quad_target;   // t
  SparseMatrix eq_matrix;
  VectorXd eq_rhs;
  SparseMatrix ineq_matrix;
  VectorXd ineq_rhs;
  std::vector<SecondOrderConeBlock> cones;

  explicit ConicProgram(int n = 0)
      : num_vars(n),
        linear_cost(VectorXd::Zero(n)),
        quad_map(0, n),
        quad_target(0),
        eq_matrix(0, n),
        eq_rhs(0),
        ineq_matrix(0, n),
        ineq_rhs(0) {}

  bool has_quadratic() const { return quad_map.rows() > 0; }

  double objective(const VectorXd& z) const {
    double v = linear_cost.dot(z);
    if (has_quadratic()) v += 0.5 * (quad_map * z - quad_target).squaredNorm();
    return v;
  }

  void validate() const {
    auto fail = [](const char* what) {
      throw std::invalid_argument(std::string("ConicProgram: ") + what);
    };
    if (num_vars <= 0) fail("num_vars must be positive");
    if (linear_cost.size() != num_vars) fail("linear cost size");
    if (quad_map.cols() != num_vars || quad_map.rows() != quad_target.size()) {
      fail("quadratic term dimensions");
    }
    if (eq_matrix.cols() != num_vars || eq_matrix.rows() != eq_rhs.size()) {
      fail("equality dimensions");
    }
    if (ineq_matrix.cols() != num_vars || ineq_matrix.rows() != ineq_rhs.size()) {
      fail("inequality dimensions");
    }
    for (const auto& k : cones) {
      if (k.M.cols() != num_vars || k.M.rows() != k.q.size() || k.r.size() != num_vars) {
        fail("cone block dimensions");
      }
    }
  }
};

/// min c'x + 1/2 x'Px  s.t.  A x = b,  G x + s = h,  s in R+^l x Q^{d_1} x ... x Q^{d_k}.
struct StandardConicForm {
  VectorXd c;
  SparseMatrix P;  // symmetric positive semidefinite, may be empty
  SparseMatrix A;
  VectorXd b;
  SparseMatrix G;
  VectorXd h;
  int num_linear = 0;
  std::vector<int> soc_dims;
  double objective_offset = 0.0;
};

/// Lowers a ConicProgram. The quadratic term becomes P = S'S with the linear
/// cost shifted by -S't; linear rows come first, then the cones in order.
inline StandardConicForm to_standard_form(const ConicProgram& p) {
  p.validate();
  StandardConicForm f;
  const int nx = p.num_vars;

  f.c = p.linear_cost;
  f.P = SparseMatrix(nx, nx);
  if (p.has_quadratic()) {
    const SparseMatrix St = p.quad_map.transpose();
    f.P = (St * p.quad_map).pruned();
    f.c -= St * p.quad_target;
    f.objective_offset = 0.5 * p.quad_target.squaredNorm();
  }

  f.A = p.eq_matrix;
  f.b = p.eq_rhs;

  // Cones of dimension one degenerate to linear rows 0 <= r'z + s.
  std::vector<const SecondOrderConeBlock*> scalar_cones;
  std::vector<const SecondOrderConeBlock*> real_cones;
  for (const auto& k : p.cones) (k.dim() == 1 ? scalar_cones : real_cones).push_back(&k);

  int rows = static_cast<int>(p.ineq_matrix.rows() + scalar_cones.size());
  f.num_linear = rows;
  for (const auto* k : real_cones) {
    f.soc_dims.push_back(k->dim());
    rows += k->dim();
  }

  std::vector<Triplet> g;
  f.h = VectorXd::Zero(rows);
  int row = 0;
  {
    const SparseMatrix& F = p.ineq_matrix;
    for (int k = 0; k < F.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(F, k); it; ++it) {
        g.emplace_back(row + it.row(), it.col(), it.value());
      }
    }
    f.h.segment(row, F.rows()) = p.ineq_rhs;
    row += static_cast<int>(F.rows());
  }
  auto put_cone = [&](const SecondOrderConeBlock& k) {
    // s = (r'z + s, M z + q) = h - G z
    for (Eigen::SparseVector<double>::InnerIterator it(k.r); it; ++it) {
      g.emplace_back(row, it.index(), -it.value());
    }
    f.h(row) = k.s;
    for (int c = 0; c < k.M.outerSize(); ++c) {
      for (SparseMatrix::InnerIterator it(k.M, c); it; ++it) {
        g.emplace_back(row + 1 + it.row(), it.col(), -it.value());
      }
    }
    f.h.segment(row + 1, k.q.size()) = k.q;
    row += k.dim();
  };
  for (const auto* k : scalar_cones) put_cone(*k);
  for (const auto* k : real_cones) put_cone(*k);
  f.G = SparseMatrix(rows, nx);
  f.G.setFromTriplets(g.begin(), g.end());
  return f;
}

// ---------------------------------------------------------------------------
// Plain-text dump of an assembled program:
//
//   conic_program v1
//   num_vars <n>
//   cost <n values>
//   quad <rows> <nnz>        followed by nnz "i j v" lines, then "target <rows values>"
//   eq <rows> <nnz>          followed by nnz triplets, then "rhs <rows values>"
//   ineq <rows> <nnz>        followed by nnz triplets, then "rhs <rows values>"
//   cones <count>
//   cone <rows> <nnz> <r_nnz> <s>   then M triplets, "q ..." and r pairs "j v"
//   end

namespace detail {

inline void dump_triplets(std::ostream& out, const SparseMatrix& m) {
  for (int k = 0; k < m.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(m, k); it; ++it) {
      out << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
    }
  }
}

inline void dump_vector(std::ostream& out, const char* tag, const VectorXd& v) {
  out << tag;
  for (Eigen::Index i = 0; i < v.size(); ++i) out << ' ' << v(i);
  out << '\n';
}

inline SparseMatrix read_triplets(std::istream& in, int rows, int cols, long nnz) {
  std::vector<Triplet> t;
  t.reserve(nnz);
  for (long k = 0; k < nnz; ++k) {
    int i, j;
    double v;
    in >> i >> j >> v;
    t.emplace_back(i, j, v);
  }
  SparseMatrix m(rows, cols);
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

inline VectorXd read_vector(std::istream& in, const char* tag, int n) {
  std::string word;
  in >> word;
  if (word != tag) throw std::runtime_error("read_conic_program: expected " + std::string(tag));
  VectorXd v(n);
  for (int i = 0; i < n; ++i) in >> v(i);
  return v;
}

inline void expect(std::istream& in, const char* tag) {
  std::string word;
  in >> word;
  if (word != tag) throw std::runtime_error("read_conic_program: expected " + std::string(tag));
}

}  // namespace detail

inline void write_conic_program(std::ostream& out, const ConicProgram& p) {
  p.validate();
  out << std::setprecision(17);
  out << "conic_program v1\n";
  out << "num_vars " << p.num_vars << '\n';
  detail::dump_vector(out, "cost", p.linear_cost);
  out << "quad " << p.quad_map.rows() << ' ' << p.quad_map.nonZeros() << '\n';
  detail::dump_triplets(out, p.quad_map);
  detail::dump_vector(out, "target", p.quad_target);
  out << "eq " << p.eq_matrix.rows() << ' ' << p.eq_matrix.nonZeros() << '\n';
  detail::dump_triplets(out, p.eq_matrix);
  detail::dump_vector(out, "rhs", p.eq_rhs);
  out << "ineq " << p.ineq_matrix.rows() << ' ' << p.ineq_matrix.nonZeros() << '\n';
  detail::dump_triplets(out, p.ineq_matrix);
  detail::dump_vector(out, "rhs", p.ineq_rhs);
  out << "cones " << p.cones.size() << '\n';
  for (const auto& k : p.cones) {
    out << "cone " << k.M.rows() << ' ' << k.M.nonZeros() << ' ' << k.r.nonZeros() << ' ' << k.s
        << '\n';
    detail::dump_triplets(out, k.M);
    detail::dump_vector(out, "q", k.q);
    for (Eigen::SparseVector<double>::InnerIterator it(k.r); it; ++it) {
      out << it.index() << ' ' << it.value() << '\n';
    }
  }
  out << "end\n";
}

inline ConicProgram read_conic_program(std::istream& in) {
  detail::expect(in, "conic_program");
  detail::expect(in, "v1");
  detail::expect(in, "num_vars");
  int n;
  in >> n;
  ConicProgram p(n);
  p.linear_cost = detail::read_vector(in, "cost", n);
  int rows;
  long nnz;
  detail::expect(in, "quad");
  in >> rows >> nnz;
  p.quad_map = detail::read_triplets(in, rows, n, nnz);
  p.quad_target = detail::read_vector(in, "target", rows);
  detail::expect(in, "eq");
  in >> rows >> nnz;
  p.eq_matrix = detail::read_triplets(in, rows, n, nnz);
  p.eq_rhs = detail::read_vector(in, "rhs", rows);
  detail::expect(in, "ineq");
  in >> rows >> nnz;
  p.ineq_matrix = detail::read_triplets(in, rows, n, nnz);
  p.ineq_rhs = detail::read_vector(in, "rhs", rows);
  detail::expect(in, "cones");
  std::size_t count;
  in >> count;
  for (std::size_t c = 0; c < count; ++c) {
    detail::expect(in, "cone");
    SecondOrderConeBlock k;
    long r_nnz;
    in >> rows >> nnz >> r_nnz >> k.s;
    k.M = detail::read_triplets(in, rows, n, nnz);
    k.q = detail::read_vector(in, "q", rows);
    k.r.resize(n);
    for (long j = 0; j < r_nnz; ++j) {
      int idx;
      double v;
      in >> idx >> v;
      k.r.coeffRef(idx) = v;
    }
    p.cones.push_back(std::move(k));
  }
  detail::expect(in, "end");
  if (!in) throw std::runtime_error("read_conic_program: truncated input");
  p.validate();
  return p;
}

}  // namespace ccf
