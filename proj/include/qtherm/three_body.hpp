#pragma once

// Two identical bosons X (coordinates x1, x2) plus one impurity Y (coordinate
// y), equal masses and trap frequency, contact couplings g_x delta(x1 - x2)
// + g_xy [delta(x1 - y) + delta(x2 - y)].
//
// The product basis |n1 n2 m> with n1 <= n2 (symmetrized in the X pair) and
// n1 + n2 + m <= cutoff is truncated by total quanta. The contact terms only
// touch relative motion and the truncation is a union of whole shells, so the
// truncated Hamiltonian commutes with the centre-of-mass number operator.
// Every quench studied here starts in the COM ground state, so the engine
// works in the COM-ground frame: the kernel of the COM lowering operator,
// built shell by shell. Frame vectors carry a definite shell Q and parity
// (-1)^Q.

#include <Eigen/Dense>
#include <complex>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <sstream>
#include <vector>

#include "qtherm/eigensystem.hpp"
#include "qtherm/errors.hpp"
#include "qtherm/hermite.hpp"

namespace qtherm {

inline constexpr int kDefaultThreeBodyCutoff = 40;
inline constexpr std::size_t kDefaultMemoryBudget = std::size_t{4} << 30;

class ThreeBodyBasis {
 public:
  /// X-symmetric product state n1 <= n2 with Y mode m.
  struct ProductState {
    int n1, n2, m;
  };
  /// One entry of a frame vector written as an unsymmetrized tensor psi(a, b, m).
  struct TensorEntry {
    int a, b, m;
    double value;
  };

  explicit ThreeBodyBasis(int cutoff, std::size_t memory_budget = kDefaultMemoryBudget) : cutoff_(cutoff) {
    if (cutoff < 2) throw ValidationError("ThreeBodyBasis: cutoff must be >= 2");
    check_budget(memory_budget);
    enumerate();
    build_frame();
    build_contact_matrices();
    build_symmetric_frame();
  }

  /// Rough peak memory of the construction, in bytes.
  static std::size_t estimated_bytes(int cutoff) {
    const auto k = static_cast<std::size_t>(cutoff);
    const std::size_t shell = (k + 2) * (k + 2) / 4 + 1;  // largest symmetrized shell
    const std::size_t frame = shell;                       // frame dimension equals top shell size
    const std::size_t nodes = k + 8;
    return 8 * (4 * frame * frame + 3 * shell * shell + 2 * nodes * (k + 1) * frame + (k + 1) * (k + 1) * (k + 1)) +
           24 * frame * (k + 1) * (k + 1);
  }

  [[nodiscard]] int cutoff() const { return cutoff_; }
  [[nodiscard]] const std::vector<ProductState>& product_states() const { return states_; }
  [[nodiscard]] Eigen::Index product_dimension() const { return static_cast<Eigen::Index>(states_.size()); }
  [[nodiscard]] Eigen::Index frame_dimension() const { return static_cast<Eigen::Index>(frame_shell_.size()); }
  [[nodiscard]] int frame_shell(Eigen::Index i) const { return frame_shell_[static_cast<std::size_t>(i)]; }
  [[nodiscard]] const std::vector<TensorEntry>& frame_tensor(Eigen::Index i) const {
    return frame_tensor_[static_cast<std::size_t>(i)];
  }
  /// Frame vector i as coefficients over product_states().
  [[nodiscard]] Eigen::VectorXd frame_product_coefficients(Eigen::Index i) const {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(product_dimension());
    const auto& coeffs = frame_sym_[static_cast<std::size_t>(i)];
    const Eigen::Index offset = shell_offset_[static_cast<std::size_t>(frame_shell(i))];
    v.segment(offset, coeffs.size()) = coeffs;
    return v;
  }

  /// <f_i| delta(x1 - x2) |f_j>.
  [[nodiscard]] const Eigen::MatrixXd& contact_xx() const { return contact_xx_; }
  /// <f_i| delta(x1 - y) |f_j> (equal to the x2 - y term on X-symmetric states).
  [[nodiscard]] const Eigen::MatrixXd& contact_xy() const { return contact_xy_; }
  /// Orthonormal frame coordinates spanning the fully symmetric subspace.
  [[nodiscard]] const Eigen::MatrixXd& fully_symmetric_frame() const { return symmetric_frame_; }

  [[nodiscard]] Eigen::MatrixXd hamiltonian(const CouplingPair& c) const {
    Eigen::MatrixXd h = c.g_x * contact_xx_ + 2.0 * c.g_xy * contact_xy_;
    for (Eigen::Index i = 0; i < frame_dimension(); ++i) h(i, i) += frame_shell(i) + 1.5;
    return h;
  }

  enum class Exchange { x1_x2, x1_y };

  /// Matrix of a particle transposition in frame coordinates.
  [[nodiscard]] Eigen::MatrixXd exchange_matrix(Exchange which) const {
    const Eigen::Index f = frame_dimension();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(f, f);
    for (int q = 0; q <= cutoff_; ++q) {
      const auto& members = shell_members_[static_cast<std::size_t>(q)];
      if (members.empty()) continue;
      const int side = q + 1;
      Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(side * side, static_cast<Eigen::Index>(members.size()));
      Eigen::MatrixXd permuted = dense;
      for (std::size_t c = 0; c < members.size(); ++c) {
        for (const auto& e : frame_tensor(members[c])) {
          dense(e.a * side + e.m, static_cast<Eigen::Index>(c)) = e.value;
          if (which == Exchange::x1_x2) {
            permuted(e.b * side + e.m, static_cast<Eigen::Index>(c)) = e.value;
          } else {
            permuted(e.m * side + e.a, static_cast<Eigen::Index>(c)) = e.value;
          }
        }
      }
      const Eigen::MatrixXd block = dense.transpose() * permuted;
      for (std::size_t r = 0; r < members.size(); ++r) {
        for (std::size_t c = 0; c < members.size(); ++c) out(members[r], members[c]) = block(r, c);
      }
    }
    return out;
  }

  /// Dense tensor psi[(a * d + b) * d + m], d = cutoff + 1, from frame coordinates.
  void fill_tensor(const Eigen::VectorXcd& frame_coeffs, std::vector<std::complex<double>>& out) const {
    const std::size_t d = static_cast<std::size_t>(cutoff_) + 1;
    out.assign(d * d * d, {0.0, 0.0});
    for (Eigen::Index i = 0; i < frame_dimension(); ++i) {
      const std::complex<double> z = frame_coeffs[i];
      if (z == 0.0) continue;
      for (const auto& e : frame_tensor(i)) {
        out[(static_cast<std::size_t>(e.a) * d + e.b) * d + e.m] += z * e.value;
      }
    }
  }

 private:
  void check_budget(std::size_t budget) const {
    const std::size_t need = estimated_bytes(cutoff_);
    if (need > budget) {
      std::ostringstream msg;
      msg << "ThreeBodyBasis: cutoff " << cutoff_ << " needs ~" << (need >> 20) << " MiB, budget is "
          << (budget >> 20) << " MiB";
      throw ResourceError(msg.str());
    }
  }

  void enumerate() {
    shell_offset_.assign(static_cast<std::size_t>(cutoff_) + 2, 0);
    for (int q = 0; q <= cutoff_; ++q) {
      shell_offset_[static_cast<std::size_t>(q)] = static_cast<Eigen::Index>(states_.size());
      for (int m = 0; m <= q; ++m) {
        const int pair = q - m;
        for (int n1 = 0; 2 * n1 <= pair; ++n1) states_.push_back({n1, pair - n1, m});
      }
    }
    shell_offset_.back() = static_cast<Eigen::Index>(states_.size());
  }

  // Kernel of A_c = (a1 + a2 + a3)/sqrt(3) per shell. A_c^dag A_c is the COM
  // number operator, so kernel eigenvalues are 0 and the rest are >= 1.
  void build_frame() {
    shell_members_.resize(static_cast<std::size_t>(cutoff_) + 1);
    for (int q = 0; q <= cutoff_; ++q) {
      const Eigen::Index begin = shell_offset_[static_cast<std::size_t>(q)];
      const Eigen::Index count = shell_offset_[static_cast<std::size_t>(q) + 1] - begin;
      Eigen::MatrixXd kernel;
      if (q == 0) {
        kernel = Eigen::MatrixXd::Ones(1, 1);
      } else {
        // Image lives in shell q-1; index unsymmetrized entries by (a, m).
        const int side = q;
        Eigen::MatrixXd lower = Eigen::MatrixXd::Zero(side * side, count);
        const double norm = 1.0 / std::sqrt(3.0);
        for (Eigen::Index s = 0; s < count; ++s) {
          for (const auto& e : symmetric_entries(states_[static_cast<std::size_t>(begin + s)])) {
            if (e.a > 0) lower((e.a - 1) * side + e.m, s) += norm * std::sqrt(e.a) * e.value;
            if (e.b > 0) lower(e.a * side + e.m, s) += norm * std::sqrt(e.b) * e.value;
            if (e.m > 0) lower(e.a * side + (e.m - 1), s) += norm * std::sqrt(e.m) * e.value;
          }
        }
        const Eigen::MatrixXd number = lower.transpose() * lower;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(number);
        if (solver.info() != Eigen::Success) throw ConvergenceError("ThreeBodyBasis: COM kernel solve failed");
        Eigen::Index k = 0;
        while (k < count && solver.eigenvalues()[k] < 0.5) ++k;
        kernel = solver.eigenvectors().leftCols(k);
      }
      for (Eigen::Index c = 0; c < kernel.cols(); ++c) {
        Eigen::VectorXd coeffs = kernel.col(c);
        detail::fix_sign(coeffs);
        std::vector<TensorEntry> entries;
        for (Eigen::Index s = 0; s < count; ++s) {
          if (coeffs[s] == 0.0) continue;
          for (auto e : symmetric_entries(states_[static_cast<std::size_t>(begin + s)])) {
            e.value *= coeffs[s];
            entries.push_back(e);
          }
        }
        shell_members_[static_cast<std::size_t>(q)].push_back(static_cast<Eigen::Index>(frame_shell_.size()));
        frame_shell_.push_back(q);
        frame_sym_.push_back(std::move(coeffs));
        frame_tensor_.push_back(std::move(entries));
      }
    }
  }

  static std::vector<TensorEntry> symmetric_entries(const ProductState& s) {
    if (s.n1 == s.n2) return {{s.n1, s.n2, s.m, 1.0}};
    const double v = 1.0 / std::numbers::sqrt2;
    return {{s.n1, s.n2, s.m, v}, {s.n2, s.n1, s.m, v}};
  }

  // Contact matrix elements are one-dimensional quartic overlaps evaluated on
  // a Gauss-Hermite rule exact for degree 2 * cutoff, factorized through the
  // wavefunction at coincidence.
  void build_contact_matrices() {
    const int d = cutoff_ + 1;
    const QuadratureRule rule = gauss_hermite(quadrature_nodes_for_degree(2 * cutoff_));
    const auto nodes = static_cast<Eigen::Index>(rule.size());
    std::vector<std::vector<double>> h(rule.size());
    std::vector<double> root_w(rule.size());
    for (std::size_t k = 0; k < rule.size(); ++k) {
      h[k] = hermite_polynomial_parts(cutoff_, rule.nodes[k] / std::numbers::sqrt2);
      root_w[k] = std::sqrt(rule.weights[k] / std::numbers::sqrt2);
    }
    const Eigen::Index f = frame_dimension();
    Eigen::MatrixXd gxx = Eigen::MatrixXd::Zero(nodes * d, f);
    Eigen::MatrixXd gxy = Eigen::MatrixXd::Zero(nodes * d, f);
    for (Eigen::Index i = 0; i < f; ++i) {
      for (const auto& e : frame_tensor(i)) {
        for (Eigen::Index k = 0; k < nodes; ++k) {
          const auto& hk = h[static_cast<std::size_t>(k)];
          const double w = root_w[static_cast<std::size_t>(k)] * e.value;
          gxx(k * d + e.m, i) += w * hk[e.a] * hk[e.b];
          gxy(k * d + e.b, i) += w * hk[e.a] * hk[e.m];
        }
      }
    }
    contact_xx_ = Eigen::MatrixXd::Zero(f, f);
    contact_xx_.selfadjointView<Eigen::Lower>().rankUpdate(gxx.transpose());
    contact_xx_ = contact_xx_.selfadjointView<Eigen::Lower>();
    contact_xy_ = Eigen::MatrixXd::Zero(f, f);
    contact_xy_.selfadjointView<Eigen::Lower>().rankUpdate(gxy.transpose());
    contact_xy_ = contact_xy_.selfadjointView<Eigen::Lower>();
  }

  // Symmetrizer over S3 restricted to X-symmetric states: (1 + 2 P_{x1,y}) / 3.
  void build_symmetric_frame() {
    const Eigen::MatrixXd p13 = exchange_matrix(Exchange::x1_y);
    const Eigen::MatrixXd sym = (Eigen::MatrixXd::Identity(frame_dimension(), frame_dimension()) + 2.0 * p13) / 3.0;
    std::vector<Eigen::VectorXd> cols;
    for (int q = 0; q <= cutoff_; ++q) {
      const auto& members = shell_members_[static_cast<std::size_t>(q)];
      const auto n = static_cast<Eigen::Index>(members.size());
      if (n == 0) continue;
      Eigen::MatrixXd block(n, n);
      for (Eigen::Index r = 0; r < n; ++r) {
        for (Eigen::Index c = 0; c < n; ++c) block(r, c) = sym(members[r], members[c]);
      }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(block);
      for (Eigen::Index k = 0; k < n; ++k) {
        if (solver.eigenvalues()[k] < 0.5) continue;
        Eigen::VectorXd v = Eigen::VectorXd::Zero(frame_dimension());
        for (Eigen::Index r = 0; r < n; ++r) v[members[r]] = solver.eigenvectors()(r, k);
        detail::fix_sign(v);
        cols.push_back(std::move(v));
      }
    }
    symmetric_frame_.resize(frame_dimension(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) symmetric_frame_.col(static_cast<Eigen::Index>(c)) = cols[c];
  }

  int cutoff_;
  std::vector<ProductState> states_;
  std::vector<Eigen::Index> shell_offset_;
  std::vector<std::vector<Eigen::Index>> shell_members_;
  std::vector<int> frame_shell_;
  std::vector<Eigen::VectorXd> frame_sym_;
  std::vector<std::vector<TensorEntry>> frame_tensor_;
  Eigen::MatrixXd contact_xx_;
  Eigen::MatrixXd contact_xy_;
  Eigen::MatrixXd symmetric_frame_;
};

/// Process-wide cache; bases are immutable once built.
inline std::shared_ptr<const ThreeBodyBasis> three_body_basis(int cutoff,
                                                              std::size_t memory_budget = kDefaultMemoryBudget) {
  static std::mutex mutex;
  static std::map<int, std::shared_ptr<const ThreeBodyBasis>> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find(cutoff);
  if (it != cache.end()) return it->second;
  auto basis = std::make_shared<const ThreeBodyBasis>(cutoff, memory_budget);
  cache.emplace(cutoff, basis);
  return basis;
}

/// Eigensystem of the 2+1 Hamiltonian in the COM-ground frame. With
/// `fully_bosonic` the spectrum is restricted to states symmetric under every
/// exchange (three indistinguishable bosons), which requires g_x == g_xy.
inline EigenSystem build_three_body(const CouplingPair& c, int cutoff = kDefaultThreeBodyCutoff,
                                    BasisSymmetry symmetry = BasisSymmetry::bosonic_in_x_pair,
                                    std::size_t memory_budget = kDefaultMemoryBudget) {
  const auto basis = three_body_basis(cutoff, memory_budget);
  const Eigen::MatrixXd h = basis->hamiltonian(c);
  const BasisDescriptor desc{BasisKind::three_body_symmetrized, cutoff, symmetry};
  if (symmetry == BasisSymmetry::bosonic_in_x_pair) return diagonalize(h, desc);
  if (symmetry != BasisSymmetry::fully_bosonic) {
    throw ValidationError("build_three_body: symmetry must be bosonic_in_x_pair or fully_bosonic");
  }
  if (c.g_x != c.g_xy) throw ValidationError("build_three_body: fully bosonic sector needs g_x == g_xy");
  const Eigen::MatrixXd& u = basis->fully_symmetric_frame();
  EigenSystem reduced = diagonalize(u.transpose() * h * u, desc);
  EigenSystem es;
  es.energies = reduced.energies;
  es.vectors = u * reduced.vectors;
  es.hamiltonian = h;
  es.basis = desc;
  es.residual_norm = detail::max_residual(h, es.energies, es.vectors);
  return es;
}

/// Coupling families used for spectra; letters follow the quench strategies.
enum class SpectrumFamily { A, B, C, D, E, indistinguishable };

inline CouplingPair family_couplings(SpectrumFamily family, double g, double infinity_proxy = 20.0) {
  switch (family) {
    case SpectrumFamily::A:
    case SpectrumFamily::indistinguishable: return {g, g};
    case SpectrumFamily::B: return {0.0, g};
    case SpectrumFamily::C: return {g, 0.0};
    case SpectrumFamily::D: return {g, infinity_proxy};
    case SpectrumFamily::E: return {infinity_proxy, g};
  }
  return {};
}

struct SpectrumRow {
  double g = 0.0;
  std::vector<double> energies;  ///< lowest k levels, ascending
  std::string error;             ///< non-empty when this grid point failed
};

/// Lowest `levels` energies versus g at fixed cutoff. Grid points are
/// independent and run on up to `workers` threads.
inline std::vector<SpectrumRow> spectrum_sweep(SpectrumFamily family, const std::vector<double>& g_grid,
                                               int cutoff = kDefaultThreeBodyCutoff, int levels = 10,
                                               int workers = 1, double infinity_proxy = 20.0) {
  for (double g : g_grid) {
    if (!std::isfinite(g)) throw ValidationError("spectrum_sweep: grid values must be finite");
  }
  const BasisSymmetry sym =
      family == SpectrumFamily::indistinguishable ? BasisSymmetry::fully_bosonic : BasisSymmetry::bosonic_in_x_pair;
  three_body_basis(cutoff);  // build once before fanning out
  auto point = [&](double g) {
    SpectrumRow row;
    row.g = g;
    try {
      const EigenSystem es = build_three_body(family_couplings(family, g, infinity_proxy), cutoff, sym);
      if (levels > es.size()) throw ValidationError("spectrum_sweep: more levels requested than basis states");
      row.energies.assign(es.energies.data(), es.energies.data() + levels);
    } catch (const std::exception& ex) {
      row.error = ex.what();
    }
    return row;
  };
  std::vector<SpectrumRow> rows(g_grid.size());
  const std::size_t stride = static_cast<std::size_t>(std::max(1, workers));
  for (std::size_t start = 0; start < g_grid.size(); start += stride) {
    std::vector<std::future<SpectrumRow>> batch;
    for (std::size_t i = start; i < std::min(g_grid.size(), start + stride); ++i) {
      batch.push_back(std::async(workers > 1 ? std::launch::async : std::launch::deferred, point, g_grid[i]));
    }
    for (std::size_t i = 0; i < batch.size(); ++i) rows[start + i] = batch[i].get();
  }
  return rows;
}

}  // namespace qtherm
