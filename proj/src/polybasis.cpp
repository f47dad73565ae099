#include "sosioc/polybasis.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <Eigen/QR>
#include <Eigen/SVD>
#include <nlohmann/json.hpp>

#include "sosioc/util.hpp"

namespace sosioc {

std::size_t basis_dimension(int n, int d) {
  if (n < 1) throw std::invalid_argument("basis_dimension: n must be >= 1");
  if (d < 0) throw std::invalid_argument("basis_dimension: d must be >= 0");
  // C(n+i, i) = C(n+i-1, i-1) * (n+i) / i, exact at every step.
  std::size_t r = 1;
  for (int i = 1; i <= d; ++i) {
    std::size_t prod = 0;
    if (__builtin_mul_overflow(r, static_cast<std::size_t>(n + i), &prod))
      throw std::overflow_error("basis_dimension: C(" + std::to_string(n + d) + ", " +
                                std::to_string(d) + ") overflows");
    r = prod / static_cast<std::size_t>(i);
  }
  return r;
}

namespace {

void append_compositions(int remaining, int axis, std::vector<int>& current,
                         std::vector<std::vector<int>>& out) {
  const int n = static_cast<int>(current.size());
  if (axis == n - 1) {
    current[axis] = remaining;
    out.push_back(current);
    return;
  }
  for (int e = remaining; e >= 0; --e) {
    current[axis] = e;
    append_compositions(remaining - e, axis + 1, current, out);
  }
}

}  // namespace

Eigen::MatrixXi graded_exponents(int n, int d) {
  const std::size_t count = basis_dimension(n, d);
  std::vector<std::vector<int>> rows;
  rows.reserve(count);
  std::vector<int> current(n, 0);
  for (int k = 0; k <= d; ++k) append_compositions(k, 0, current, rows);
  Eigen::MatrixXi e(static_cast<Eigen::Index>(rows.size()), n);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (int i = 0; i < n; ++i) e(static_cast<Eigen::Index>(r), i) = rows[r][i];
  return e;
}

ChebyshevBasis::ChebyshevBasis(Box box, int degree)
    : box_(std::move(box)), degree_(degree), exponents_(graded_exponents(box_.dim(), degree)) {}

Eigen::VectorXd ChebyshevBasis::eval(const Eigen::Ref<const Eigen::VectorXd>& point) const {
  if (!box_.contains(point))
    throw std::out_of_range("ChebyshevBasis: point outside the box");
  return eval_unchecked(point);
}

Eigen::VectorXd ChebyshevBasis::eval_unchecked(const Eigen::Ref<const Eigen::VectorXd>& point) const {
  const int n = dim();
  const Eigen::VectorXd t = box_.to_reference(point);
  Eigen::MatrixXd table(degree_ + 1, n);
  for (int i = 0; i < n; ++i) chebyshev_values(t[i], degree_, table.col(i).data());
  Eigen::VectorXd out(size());
  for (Eigen::Index r = 0; r < size(); ++r) {
    double v = 1.0;
    for (int i = 0; i < n; ++i) v *= table(exponents_(r, i), i);
    out[r] = v;
  }
  return out;
}

Eigen::MatrixXd ChebyshevBasis::eval_many(const Eigen::Ref<const Eigen::MatrixXd>& points) const {
  Eigen::MatrixXd out(size(), points.cols());
  for (Eigen::Index c = 0; c < points.cols(); ++c) out.col(c) = eval(points.col(c));
  return out;
}

Eigen::MatrixXd ChebyshevBasis::jacobian(const Eigen::Ref<const Eigen::VectorXd>& point) const {
  if (!box_.contains(point))
    throw std::out_of_range("ChebyshevBasis: point outside the box");
  const int n = dim();
  const Eigen::VectorXd t = box_.to_reference(point);
  const Eigen::VectorXd scale = (2.0 / box_.width().array()).matrix();
  Eigen::MatrixXd vals(degree_ + 1, n), ders(degree_ + 1, n);
  for (int i = 0; i < n; ++i)
    chebyshev_values(t[i], degree_, vals.col(i).data(), ders.col(i).data());
  Eigen::MatrixXd jac(size(), n);
  for (Eigen::Index r = 0; r < size(); ++r) {
    for (int j = 0; j < n; ++j) {
      double v = ders(exponents_(r, j), j) * scale[j];
      for (int i = 0; i < n; ++i)
        if (i != j) v *= vals(exponents_(r, i), i);
      jac(r, j) = v;
    }
  }
  return jac;
}

Eigen::VectorXd ChebyshevBasis::moments() const {
  const int n = dim();
  const Eigen::VectorXd half = 0.5 * box_.width();
  Eigen::VectorXd m(size());
  for (Eigen::Index r = 0; r < size(); ++r) {
    double v = 1.0;
    for (int i = 0; i < n; ++i) {
      const int k = exponents_(r, i);
      // integral of T_k over [-1, 1]
      const double ref = (k % 2 == 1) ? 0.0 : 2.0 / (1.0 - static_cast<double>(k) * k);
      v *= ref * half[i];
    }
    m[r] = v;
  }
  return m;
}

Eigen::VectorXd orthogonal_basis_eval(int n, int d, const Box& box,
                                      const Eigen::Ref<const Eigen::VectorXd>& point) {
  if (box.dim() != n) throw std::invalid_argument("orthogonal_basis_eval: box dimension mismatch");
  return ChebyshevBasis(box, d).eval(point);
}

namespace {

void finish_grid(InterpolationGrid& g) {
  const Eigen::Index count = g.nodes.cols();
  g.vandermonde.resize(count, g.basis.size());
  for (Eigen::Index j = 0; j < count; ++j)
    g.vandermonde.row(j) = g.basis.eval(g.nodes.col(j)).transpose();
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(g.vandermonde);
  const auto& sv = svd.singularValues();
  g.condition_number = sv[sv.size() - 1] > 0.0 ? sv[0] / sv[sv.size() - 1]
                                               : std::numeric_limits<double>::infinity();
  if (!std::isfinite(g.condition_number) || g.condition_number > 1e14) {
    throw std::runtime_error("interpolation grid: node Vandermonde is singular (degree " +
                             std::to_string(g.degree) + ", dimension " +
                             std::to_string(g.dim()) + ")");
  }
  g.vandermonde_lu.compute(g.vandermonde);
}

}  // namespace

InterpolationGrid select_fekete_nodes(int n, int d, const Box& box, double candidate_density) {
  if (box.dim() != n) throw std::invalid_argument("select_fekete_nodes: box dimension mismatch");
  if (d < 0) throw std::invalid_argument("select_fekete_nodes: negative degree");
  const auto count = static_cast<Eigen::Index>(basis_dimension(n, d));
  const int per_axis = static_cast<int>(std::ceil(candidate_density * (d + 1)));
  if (per_axis < 2) throw std::invalid_argument("select_fekete_nodes: candidate density too small");
  Eigen::Index total = 1;
  for (int i = 0; i < n; ++i) total *= per_axis;
  if (total < 4 * count)
    throw std::invalid_argument("select_fekete_nodes: candidate grid smaller than 4x the basis size");

  // Chebyshev-Gauss-Lobatto points on [-1, 1], ordered from +1 down to -1.
  Eigen::VectorXd cgl(per_axis);
  for (int k = 0; k < per_axis; ++k)
    cgl[k] = std::cos(std::numbers::pi * k / (per_axis - 1));

  InterpolationGrid grid;
  grid.box = box;
  grid.degree = d;
  grid.candidate_density = candidate_density;
  grid.basis = ChebyshevBasis(box, d);

  // Transposed candidate Vandermonde: one column per candidate point.
  Eigen::MatrixXd cand(count, total);
  Eigen::MatrixXd cand_points(n, total);
  std::vector<int> idx(n, 0);
  Eigen::VectorXd t(n);
  for (Eigen::Index c = 0; c < total; ++c) {
    for (int i = 0; i < n; ++i) t[i] = cgl[idx[i]];
    cand_points.col(c) = box.from_reference(t);
    cand.col(c) = grid.basis.eval_unchecked(cand_points.col(c));
    for (int i = n - 1; i >= 0; --i) {
      if (++idx[i] < per_axis) break;
      idx[i] = 0;
    }
  }

  Eigen::ColPivHouseholderQR<Eigen::Ref<Eigen::MatrixXd>> qr(cand);
  if (qr.rank() < count) {
    throw std::runtime_error("select_fekete_nodes: candidate Vandermonde is rank deficient for degree " +
                             std::to_string(d) + " in dimension " + std::to_string(n));
  }
  const auto& perm = qr.colsPermutation().indices();
  grid.nodes.resize(n, count);
  for (Eigen::Index j = 0; j < count; ++j) {
    // Snap to the box so endpoint candidates stay exactly on the boundary.
    grid.nodes.col(j) = box.clamp(cand_points.col(perm[j]));
  }
  finish_grid(grid);
  return grid;
}

InterpolationGrid grid_from_nodes(const Box& box, int d, Eigen::MatrixXd nodes,
                                  double candidate_density) {
  const auto count = static_cast<Eigen::Index>(basis_dimension(box.dim(), d));
  if (nodes.rows() != box.dim() || nodes.cols() != count)
    throw std::invalid_argument("grid_from_nodes: node matrix has the wrong shape");
  for (Eigen::Index j = 0; j < count; ++j)
    if (!box.contains(nodes.col(j))) throw std::out_of_range("grid_from_nodes: node outside the box");
  InterpolationGrid grid;
  grid.box = box;
  grid.degree = d;
  grid.candidate_density = candidate_density;
  grid.basis = ChebyshevBasis(box, d);
  grid.nodes = std::move(nodes);
  finish_grid(grid);
  return grid;
}

Eigen::VectorXd lagrange_eval(const InterpolationGrid& grid,
                              const Eigen::Ref<const Eigen::VectorXd>& point) {
  return grid.vandermonde_lu.transpose().solve(grid.basis.eval(point));
}

Eigen::MatrixXd lagrange_eval_many(const InterpolationGrid& grid,
                                   const Eigen::Ref<const Eigen::MatrixXd>& points) {
  return grid.vandermonde_lu.transpose().solve(grid.basis.eval_many(points));
}

Eigen::VectorXd integrate_lagrange(const InterpolationGrid& grid) {
  return grid.vandermonde_lu.transpose().solve(grid.basis.moments());
}

Eigen::VectorXd to_orthogonal_coefficients(const InterpolationGrid& grid,
                                           const Eigen::Ref<const Eigen::VectorXd>& node_values) {
  if (node_values.size() != grid.size())
    throw std::invalid_argument("to_orthogonal_coefficients: size mismatch");
  return grid.vandermonde_lu.solve(node_values);
}

std::string grid_to_json(const InterpolationGrid& grid) {
  std::ostringstream os;
  auto vec = [&](const Eigen::VectorXd& v) {
    os << '[';
    for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? ", " : "") << fmt17(v[i]);
    os << ']';
  };
  os << "{\n  \"schema_version\": 1,\n  \"kind\": \"interpolation_grid\",\n";
  os << "  \"dimension\": " << grid.dim() << ",\n";
  os << "  \"degree\": " << grid.degree << ",\n";
  os << "  \"candidate_density\": " << fmt17(grid.candidate_density) << ",\n";
  os << "  \"box\": {\"lower\": ";
  vec(grid.box.lower);
  os << ", \"upper\": ";
  vec(grid.box.upper);
  os << "},\n  \"nodes\": [\n";
  for (Eigen::Index j = 0; j < grid.size(); ++j) {
    os << "    ";
    vec(grid.nodes.col(j));
    os << (j + 1 < grid.size() ? ",\n" : "\n");
  }
  os << "  ]\n}\n";
  return os.str();
}

InterpolationGrid grid_from_json(const std::string& text) {
  const auto doc = nlohmann::json::parse(text);
  if (doc.at("schema_version").get<int>() != 1 || doc.at("kind").get<std::string>() != "interpolation_grid")
    throw std::invalid_argument("grid_from_json: unsupported document");
  const auto lo = doc.at("box").at("lower").get<std::vector<double>>();
  const auto hi = doc.at("box").at("upper").get<std::vector<double>>();
  const Box box(Eigen::Map<const Eigen::VectorXd>(lo.data(), static_cast<Eigen::Index>(lo.size())),
                Eigen::Map<const Eigen::VectorXd>(hi.data(), static_cast<Eigen::Index>(hi.size())));
  const auto rows = doc.at("nodes").get<std::vector<std::vector<double>>>();
  Eigen::MatrixXd nodes(box.dim(), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t j = 0; j < rows.size(); ++j) {
    if (static_cast<Eigen::Index>(rows[j].size()) != box.dim())
      throw std::invalid_argument("grid_from_json: node dimension mismatch");
    for (Eigen::Index i = 0; i < box.dim(); ++i) nodes(i, static_cast<Eigen::Index>(j)) = rows[j][i];
  }
  return grid_from_nodes(box, doc.at("degree").get<int>(), std::move(nodes),
                         doc.at("candidate_density").get<double>());
}

std::string grid_fingerprint(const InterpolationGrid& grid) { return hex64(fnv1a64(grid_to_json(grid))); }

}  // namespace sosioc
