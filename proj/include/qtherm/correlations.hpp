#pragma once

// Time-evolved states, one-body reduced density matrices in mode space, and
// the observables built from them (entropies, densities).

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <fstream>
#include <json.hpp>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "qtherm/eigensystem.hpp"
#include "qtherm/errors.hpp"
#include "qtherm/hermite.hpp"
#include "qtherm/thermo.hpp"
#include "qtherm/three_body.hpp"

namespace qtherm {

enum class Species { single, X, Y };

inline const char* to_string(Species s) {
  switch (s) {
    case Species::single: return "single";
    case Species::X: return "X";
    case Species::Y: return "Y";
  }
  return "?";
}

/// Amplitudes over the final eigenbasis at time t.
struct EvolvedState {
  double time = 0.0;
  Eigen::VectorXcd coefficients;

  [[nodiscard]] double norm() const { return coefficients.squaredNorm(); }
};

inline EvolvedState evolve(const SpectralDecomposition& sd, double t) {
  if (!std::isfinite(t)) throw ValidationError("evolve: time must be finite");
  EvolvedState s;
  s.time = t;
  s.coefficients.resize(sd.size());
  for (Eigen::Index j = 0; j < sd.size(); ++j) {
    s.coefficients[j] = sd.amplitudes[j] * std::polar(1.0, -sd.final_energy(j) * t);
  }
  return s;
}

/// Evolved state in the coordinates of the final eigensystem's basis.
inline Eigen::VectorXcd to_basis(const EigenSystem& final, const EvolvedState& s) {
  if (s.coefficients.size() != final.size()) throw ValidationError("to_basis: state does not match eigensystem");
  return final.vectors.cast<std::complex<double>>() * s.coefficients;
}

struct ReducedDensityMatrix {
  Eigen::MatrixXcd mode_matrix;
  Eigen::VectorXd occupations;  ///< descending
  Eigen::MatrixXcd orbitals;    ///< column k = natural orbital of occupations[k]
  Species species = Species::single;
  double discarded_weight = 0.0;  ///< norm removed by mode truncation before renormalizing

  ReducedDensityMatrix() = default;
  ReducedDensityMatrix(Eigen::MatrixXcd rho, Species s, double discarded = 0.0)
      : mode_matrix(std::move(rho)), species(s), discarded_weight(discarded) {
    mode_matrix = 0.5 * (mode_matrix + mode_matrix.adjoint()).eval();
    const Eigen::Index n = mode_matrix.rows();
    // States of definite total parity give an RDM that is block diagonal in
    // mode parity; diagonalize the blocks separately when that holds exactly.
    std::vector<std::vector<Eigen::Index>> blocks(2);
    bool split = true;
    for (Eigen::Index i = 0; i < n; ++i) {
      blocks[static_cast<std::size_t>(i % 2)].push_back(i);
      for (Eigen::Index j = i % 2 == 0 ? 1 : 0; j < n && split; j += 2) split = mode_matrix(i, j) == 0.0;
    }
    if (!split) {
      blocks = {std::vector<Eigen::Index>(static_cast<std::size_t>(n))};
      std::iota(blocks[0].begin(), blocks[0].end(), Eigen::Index{0});
    }
    std::vector<std::pair<double, Eigen::VectorXcd>> pairs;
    for (const auto& idx : blocks) {
      const auto m = static_cast<Eigen::Index>(idx.size());
      if (m == 0) continue;
      Eigen::MatrixXcd sub(m, m);
      for (Eigen::Index a = 0; a < m; ++a) {
        for (Eigen::Index b = 0; b < m; ++b) sub(a, b) = mode_matrix(idx[a], idx[b]);
      }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(sub);
      if (solver.info() != Eigen::Success) throw ConvergenceError("ReducedDensityMatrix: eigensolver failed");
      for (Eigen::Index k = 0; k < m; ++k) {
        Eigen::VectorXcd v = Eigen::VectorXcd::Zero(n);
        for (Eigen::Index a = 0; a < m; ++a) v[idx[a]] = solver.eigenvectors()(a, k);
        pairs.emplace_back(solver.eigenvalues()[k], std::move(v));
      }
    }
    std::stable_sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    if (!pairs.empty() && pairs.back().first < -1e-10) {
      throw NumericalError("ReducedDensityMatrix: negative occupation " + std::to_string(pairs.back().first));
    }
    occupations.resize(n);
    orbitals.resize(n, n);
    for (Eigen::Index k = 0; k < n; ++k) {
      occupations[k] = pairs[static_cast<std::size_t>(k)].first;
      orbitals.col(k) = pairs[static_cast<std::size_t>(k)].second;
    }
  }

  [[nodiscard]] double trace() const { return mode_matrix.trace().real(); }
  [[nodiscard]] Eigen::Index modes() const { return mode_matrix.rows(); }
};

/// von Neumann entropy -sum lambda ln lambda with lambda clipped to [0, 1].
inline double vne(const ReducedDensityMatrix& rdm) {
  const double tr = rdm.trace();
  if (std::abs(tr - 1.0) > 1e-6) throw NumericalError("vne: RDM trace " + std::to_string(tr) + " is not 1");
  double s = 0.0;
  for (Eigen::Index k = 0; k < rdm.occupations.size(); ++k) {
    const double l = std::clamp(rdm.occupations[k], 0.0, 1.0);
    if (l > 0.0) s -= l * std::log(l);
  }
  return s;
}

/// rho(x) = sum_ab rho_ab phi_a(x) phi_b(x) on a position grid.
inline std::vector<double> density_profile(const ReducedDensityMatrix& rdm, const std::vector<double>& x) {
  const Eigen::MatrixXd re = rdm.mode_matrix.real();
  const int nmax = static_cast<int>(rdm.modes()) - 1;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) throw ValidationError("density_profile: grid must be finite");
    const auto f = hermite_functions(nmax, x[i]);
    const Eigen::Map<const Eigen::VectorXd> phi(f.data(), nmax + 1);
    out[i] = phi.dot(re * phi);
  }
  return out;
}

/// Default density grid: 513 points on [-6, 6].
inline std::vector<double> default_density_grid() { return linspace(-6.0, 6.0, 513); }

/// Source of one-body RDMs along a quench trajectory.
class Dynamics {
 public:
  virtual ~Dynamics() = default;
  [[nodiscard]] virtual ReducedDensityMatrix rdm(double t, Species which) const = 0;
  [[nodiscard]] virtual std::vector<Species> species() const = 0;
};

/// One atom: the RDM is the pure state itself.
class SingleDynamics : public Dynamics {
 public:
  SingleDynamics(SpectralDecomposition sd, EigenSystem final) : sd_(std::move(sd)), final_(std::move(final)) {}

  [[nodiscard]] ReducedDensityMatrix rdm(double t, Species which) const override {
    if (which != Species::single) throw ValidationError("SingleDynamics: only the 'single' species exists");
    const Eigen::VectorXcd psi = to_basis(final_, evolve(sd_, t));
    return {psi * psi.adjoint(), Species::single};
  }
  [[nodiscard]] std::vector<Species> species() const override { return {Species::single}; }

 private:
  SpectralDecomposition sd_;
  EigenSystem final_;
};

/// Maps centre-of-mass x relative amplitudes A(c, r) to lab amplitudes
/// psi(n1, n2), using a_c^dag = (a1^dag + a2^dag)/sqrt2 and
/// a_r^dag = (a1^dag - a2^dag)/sqrt2 on shells of fixed n1 + n2 = c + r.
class LabTransform {
 public:
  LabTransform(int com_cutoff, int rel_cutoff) : kc_(com_cutoff), kr_(rel_cutoff) {
    if (com_cutoff < 0 || rel_cutoff < 0) throw ValidationError("LabTransform: cutoffs must be >= 0");
    vecs_.resize(static_cast<std::size_t>((kc_ + 1) * (kr_ + 1)));
    // In shell q the states |c, q - c> are the eigenvectors of the COM number
    // operator q/2 + (a1^dag a2 + a2^dag a1)/2, a symmetric tridiagonal matrix
    // with eigenvalues c = 0..q. A ladder recurrence is unstable here.
    for (int q = 0; q <= kc_ + kr_; ++q) {
      Eigen::VectorXd diag = Eigen::VectorXd::Zero(q + 1);
      Eigen::VectorXd off(std::max(q, 0));
      for (int n1 = 0; n1 < q; ++n1) off[n1] = 0.5 * std::sqrt(static_cast<double>((n1 + 1) * (q - n1)));
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
      es.computeFromTridiagonal(diag, off, Eigen::ComputeEigenvectors);
      for (int c = std::max(0, q - kr_); c <= std::min(q, kc_); ++c) {
        const int r = q - c;
        Eigen::VectorXd v = es.eigenvectors().col(c);
        // <0, q | c, r> has sign (-1)^r.
        if ((v[0] < 0.0) != (r % 2 == 1)) v = -v;
        at(c, r).assign(v.data(), v.data() + v.size());
      }
    }
  }

  [[nodiscard]] int com_cutoff() const { return kc_; }
  [[nodiscard]] int rel_cutoff() const { return kr_; }
  [[nodiscard]] int lab_modes() const { return kc_ + kr_ + 1; }

  /// Lab shell vector of |c, r>, indexed by n1 = 0..c+r.
  [[nodiscard]] const std::vector<double>& shell_vector(int c, int r) const {
    return vecs_[static_cast<std::size_t>(c * (kr_ + 1) + r)];
  }

  /// Lab amplitudes of the product state com (x) rel.
  [[nodiscard]] Eigen::MatrixXcd lab_amplitudes(const Eigen::VectorXcd& com, const Eigen::VectorXcd& rel) const {
    const int d = lab_modes();
    Eigen::MatrixXcd psi = Eigen::MatrixXcd::Zero(d, d);
    for (int c = 0; c <= kc_; ++c) {
      if (com[c] == 0.0) continue;
      for (int r = 0; r <= kr_; ++r) {
        const std::complex<double> a = com[c] * rel[r];
        if (a == 0.0) continue;
        const int q = c + r;
        const auto& v = shell_vector(c, r);
        for (int n1 = 0; n1 <= q; ++n1) psi(n1, q - n1) += a * v[static_cast<std::size_t>(n1)];
      }
    }
    return psi;
  }

 private:
  std::vector<double>& at(int c, int r) { return vecs_[static_cast<std::size_t>(c * (kr_ + 1) + r)]; }

  int kc_, kr_;
  std::vector<std::vector<double>> vecs_;
};

/// psi psi^dag, skipping the blocks that vanish when psi(n1, n2) is nonzero
/// only for one parity of n1 + n2.
inline Eigen::MatrixXcd gram_by_parity(const Eigen::MatrixXcd& psi) {
  const Eigen::Index d = psi.rows();
  int parity = -1;
  bool definite = true;
  for (Eigen::Index j = 0; j < psi.cols() && definite; ++j) {
    for (Eigen::Index i = 0; i < d; ++i) {
      if (psi(i, j) == 0.0) continue;
      const int p = static_cast<int>((i + j) % 2);
      if (parity < 0) parity = p;
      if (p != parity) {
        definite = false;
        break;
      }
    }
  }
  if (!definite || parity < 0) return psi * psi.adjoint();
  Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(d, d);
  for (int rp = 0; rp < 2; ++rp) {
    const int cp = (rp + parity) % 2;
    const Eigen::Index nr = (d - rp + 1) / 2;
    const Eigen::Index nc = (psi.cols() - cp + 1) / 2;
    Eigen::MatrixXcd block(nr, nc);
    for (Eigen::Index a = 0; a < nr; ++a) {
      for (Eigen::Index b = 0; b < nc; ++b) block(a, b) = psi(rp + 2 * a, cp + 2 * b);
    }
    const Eigen::MatrixXcd g = block * block.adjoint();
    for (Eigen::Index a = 0; a < nr; ++a) {
      for (Eigen::Index b = 0; b < nr; ++b) rho(rp + 2 * a, rp + 2 * b) = g(a, b);
    }
  }
  return rho;
}

inline constexpr int kDefaultEntanglementRelCutoff = 120;

/// Smallest cutoff holding all but `tail` of a state's norm (at least `minimum`).
inline int weight_cutoff(const Eigen::VectorXcd& v, double tail, int minimum = 0) {
  double acc = 0.0;
  for (Eigen::Index k = v.size() - 1; k >= 0; --k) {
    acc += std::norm(v[k]);
    if (acc > tail) return std::max(minimum, static_cast<int>(k));
  }
  return minimum;
}

/// Two identical atoms. COM and REL evolve independently; the one-body RDM
/// is formed in the lab basis after truncating COM and REL to the given
/// cutoffs and renormalizing.
class PairDynamics : public Dynamics {
 public:
  PairDynamics(SpectralDecomposition com_sd, EigenSystem com_final, SpectralDecomposition rel_sd,
               EigenSystem rel_final, int rel_entanglement_cutoff = kDefaultEntanglementRelCutoff)
      : com_sd_(std::move(com_sd)),
        com_final_(std::move(com_final)),
        rel_sd_(std::move(rel_sd)),
        rel_final_(std::move(rel_final)),
        transform_(com_cutoff_for(com_sd_, com_final_),
                   std::min<int>(rel_entanglement_cutoff, static_cast<int>(rel_final_.dimension()) - 1)) {}

  [[nodiscard]] ReducedDensityMatrix rdm(double t, Species which) const override {
    if (which == Species::Y) throw ValidationError("PairDynamics: species Y does not exist for two atoms");
    Eigen::VectorXcd com = to_basis(com_final_, evolve(com_sd_, t)).head(transform_.com_cutoff() + 1);
    Eigen::VectorXcd rel = to_basis(rel_final_, evolve(rel_sd_, t)).head(transform_.rel_cutoff() + 1);
    const double kept = com.squaredNorm() * rel.squaredNorm();
    com /= std::sqrt(com.squaredNorm());
    rel /= std::sqrt(rel.squaredNorm());
    const Eigen::MatrixXcd psi = transform_.lab_amplitudes(com, rel);
    return {gram_by_parity(psi), Species::X, std::max(0.0, 1.0 - kept)};
  }
  [[nodiscard]] std::vector<Species> species() const override { return {Species::X}; }
  [[nodiscard]] const LabTransform& transform() const { return transform_; }

 private:
  // COM weights in unit modes are time independent when the final COM
  // Hamiltonian is the unit oscillator; a generous tail keeps it exact
  // to 1e-12 in general.
  static int com_cutoff_for(const SpectralDecomposition& sd, const EigenSystem& final) {
    const Eigen::VectorXcd psi = to_basis(final, evolve(sd, 0.0));
    return weight_cutoff(psi, 1e-12);
  }

  SpectralDecomposition com_sd_;
  EigenSystem com_final_;
  SpectralDecomposition rel_sd_;
  EigenSystem rel_final_;
  LabTransform transform_;
};

/// 2+1 mixture in the COM-ground frame.
class ThreeBodyDynamics : public Dynamics {
 public:
  ThreeBodyDynamics(SpectralDecomposition sd, EigenSystem final)
      : sd_(std::move(sd)), final_(std::move(final)), basis_(three_body_basis(final_.basis.cutoff)) {
    if (final_.basis.kind != BasisKind::three_body_symmetrized) {
      throw ValidationError("ThreeBodyDynamics: eigensystem is not three-body");
    }
  }

  [[nodiscard]] ReducedDensityMatrix rdm(double t, Species which) const override {
    if (which == Species::single) throw ValidationError("ThreeBodyDynamics: species must be X or Y");
    std::vector<std::complex<double>> psi;
    basis_->fill_tensor(to_basis(final_, evolve(sd_, t)), psi);
    return from_tensor(psi, basis_->cutoff() + 1, which);
  }
  [[nodiscard]] std::vector<Species> species() const override { return {Species::X, Species::Y}; }

  /// RDM of a stationary frame vector, e.g. an eigenstate.
  [[nodiscard]] static ReducedDensityMatrix stationary(const ThreeBodyBasis& basis, const Eigen::VectorXd& frame_vec,
                                                       Species which) {
    std::vector<std::complex<double>> psi;
    basis.fill_tensor(frame_vec.cast<std::complex<double>>(), psi);
    return from_tensor(psi, basis.cutoff() + 1, which);
  }

 private:
  // psi is stored as [(a * d + b) * d + m] with a, b the X modes and m the Y mode.
  static ReducedDensityMatrix from_tensor(std::vector<std::complex<double>>& psi, int d, Species which) {
    if (which == Species::X) {
      const Eigen::Map<const Eigen::MatrixXcd> by_a(psi.data(), d * d, d);
      return {(by_a.adjoint() * by_a).transpose(), Species::X};
    }
    const Eigen::Map<const Eigen::MatrixXcd> by_m(psi.data(), d, d * d);
    return {by_m * by_m.adjoint(), Species::Y};
  }

  SpectralDecomposition sd_;
  EigenSystem final_;
  std::shared_ptr<const ThreeBodyBasis> basis_;
};

/// RDM of a two-body eigenstate factorized as COM ground x REL vector.
inline ReducedDensityMatrix pair_stationary_rdm(const Eigen::VectorXd& rel_vector, int rel_cutoff) {
  const int kr = std::min<int>(rel_cutoff, static_cast<int>(rel_vector.size()) - 1);
  Eigen::VectorXcd rel = rel_vector.head(kr + 1).cast<std::complex<double>>();
  const double kept = rel.squaredNorm();
  rel /= std::sqrt(kept);
  const LabTransform transform(0, kr);
  const Eigen::VectorXcd com = Eigen::VectorXcd::Ones(1);
  const Eigen::MatrixXcd psi = transform.lab_amplitudes(com, rel);
  return {gram_by_parity(psi), Species::X, std::max(0.0, 1.0 - kept)};
}

inline TimeSeries<double> vne_series(const Dynamics& dyn, const TimeGrid& grid, Species which) {
  std::vector<double> s(grid.count);
  for (std::size_t k = 0; k < grid.count; ++k) s[k] = vne(dyn.rdm(grid.time(k), which));
  return {grid, std::move(s)};
}

/// Trapezoidal average over [t0, t0 + tau]; the final partial interval is
/// linearly interpolated.
inline double time_average(const TimeSeries<double>& s, double tau) {
  if (!(tau > 0.0)) throw ValidationError("time_average: tau must be positive");
  if (s.size() < 2) throw ValidationError("time_average: need at least two samples");
  const double span = s.time(s.size() - 1) - s.t0;
  if (tau > span * (1.0 + 1e-12)) throw ValidationError("time_average: tau exceeds the sampled interval");
  double acc = 0.0;
  double covered = 0.0;
  for (std::size_t k = 0; k + 1 < s.size() && covered < tau; ++k) {
    const double h = std::min(s.dt, tau - covered);
    const double end_value = s.values[k] + (s.values[k + 1] - s.values[k]) * (h / s.dt);
    acc += 0.5 * h * (s.values[k] + end_value);
    covered += h;
  }
  return acc / covered;
}

/// rho(0, 0; t) for the requested species.
inline TimeSeries<double> center_density_series(const Dynamics& dyn, const TimeGrid& grid, Species which) {
  std::vector<double> v(grid.count);
  const std::vector<double> origin{0.0};
  for (std::size_t k = 0; k < grid.count; ++k) v[k] = density_profile(dyn.rdm(grid.time(k), which), origin)[0];
  return {grid, std::move(v)};
}

struct DensityMovie {
  TimeGrid grid;
  std::vector<double> x;
  std::vector<std::vector<double>> frames;  ///< frames[k][i] = rho(x_i, t_k)
};

inline DensityMovie density_movie(const Dynamics& dyn, const TimeGrid& grid, Species which, std::vector<double> x) {
  DensityMovie m{grid, std::move(x), {}};
  m.frames.reserve(grid.count);
  for (std::size_t k = 0; k < grid.count; ++k) m.frames.push_back(density_profile(dyn.rdm(grid.time(k), which), m.x));
  return m;
}

/// Movie as a CSV matrix (rows = time, columns = x) plus `<path>.json`
/// describing the grids, units and protocol.
inline void write_density_movie(const std::string& path, const DensityMovie& m, const nlohmann::json& protocol,
                                const std::vector<std::string>& header = {}) {
  auto out = open_csv(path);
  write_comment_header(out, header);
  out << "t";
  for (double xi : m.x) out << ",x=" << xi;
  out << '\n';
  for (std::size_t k = 0; k < m.frames.size(); ++k) {
    out << m.grid.time(k);
    for (double v : m.frames[k]) out << ',' << v;
    out << '\n';
  }
  nlohmann::json meta;
  meta["rows"] = {{"quantity", "t"}, {"t0", m.grid.t0}, {"dt", m.grid.dt}, {"count", m.grid.count}};
  meta["columns"] = {{"quantity", "x"}, {"min", m.x.front()}, {"max", m.x.back()}, {"count", m.x.size()}};
  meta["units"] = {{"t", "1/omega2"}, {"x", "oscillator length of the final trap"}, {"density", "1/length"}};
  meta["protocol"] = protocol;
  std::ofstream side(path + ".json");
  if (!side) throw std::runtime_error("cannot write " + path + ".json");
  side << meta.dump(2) << '\n';
}

}  // namespace qtherm
