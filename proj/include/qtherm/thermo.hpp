#pragma once

// Work statistics of a sudden quench. The state is not changed by the quench,
// so everything follows from the expansion of the initial ground state in the
// final eigenbasis.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "qtherm/closed_forms.hpp"
#include "qtherm/eigensystem.hpp"
#include "qtherm/errors.hpp"

namespace qtherm {

inline constexpr double kCaptureGuard = 0.99;
inline constexpr double kDefaultMergeTol = 1e-8;

struct SpectralDecomposition {
  Eigen::VectorXd delta_energies;  ///< E_j^F - E_0^I
  Eigen::VectorXd weights;         ///< |<psi_0^I|psi_j^F>|^2
  Eigen::VectorXd amplitudes;      ///< <psi_j^F|psi_0^I>
  double captured_weight = 0.0;
  double e0_initial = 0.0;
  double e0_final = 0.0;

  [[nodiscard]] Eigen::Index size() const { return weights.size(); }
  [[nodiscard]] bool guard_ok() const { return captured_weight >= kCaptureGuard; }
  [[nodiscard]] double final_energy(Eigen::Index j) const { return delta_energies[j] + e0_initial; }

  /// Smallest |Delta E| bound outside which the weight sums to < tail.
  [[nodiscard]] double bandwidth(double tail = 1e-10) const {
    std::vector<std::pair<double, double>> lines;
    lines.reserve(static_cast<std::size_t>(size()));
    for (Eigen::Index j = 0; j < size(); ++j) lines.emplace_back(std::abs(delta_energies[j]), weights[j]);
    std::sort(lines.begin(), lines.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    double acc = 0.0;
    for (const auto& [e, w] : lines) {
      acc += w;
      if (acc >= tail) return e;
    }
    return 0.0;
  }
};

/// Expansion of the initial ground state in the final eigenbasis.
inline SpectralDecomposition project_initial(const EigenSystem& initial, const EigenSystem& final) {
  if (!initial.basis.same_coordinates(final.basis) || initial.dimension() != final.dimension()) {
    std::ostringstream msg;
    msg << "project_initial: basis mismatch (" << to_string(initial.basis.kind) << ", cutoff " << initial.basis.cutoff
        << ") vs (" << to_string(final.basis.kind) << ", cutoff " << final.basis.cutoff << ")";
    throw ValidationError(msg.str());
  }
  SpectralDecomposition sd;
  sd.e0_initial = initial.ground_energy();
  sd.e0_final = final.ground_energy();
  sd.amplitudes = final.vectors.transpose() * initial.vectors.col(0);
  sd.weights = sd.amplitudes.array().square();
  sd.delta_energies = final.energies.array() - sd.e0_initial;
  sd.captured_weight = sd.weights.sum();
  if (sd.captured_weight > 1.0 + 1e-10) {
    throw NumericalError("project_initial: captured weight exceeds 1; eigenvectors not orthonormal");
  }
  return sd;
}

/// Decomposition of a product state under a sum Hamiltonian (COM + REL).
/// Products with weight below `prune` are dropped; their total is excluded
/// from captured_weight. `index_pairs` receives (a, b) for each kept line.
inline SpectralDecomposition tensor_product(const SpectralDecomposition& a, const SpectralDecomposition& b,
                                            std::vector<std::pair<Eigen::Index, Eigen::Index>>* index_pairs = nullptr,
                                            double prune = 1e-32) {
  std::vector<double> de, w, amp;
  if (index_pairs) index_pairs->clear();
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a.weights[i] == 0.0) continue;
    for (Eigen::Index j = 0; j < b.size(); ++j) {
      const double p = a.weights[i] * b.weights[j];
      if (p < prune) continue;
      de.push_back(a.delta_energies[i] + b.delta_energies[j]);
      w.push_back(p);
      amp.push_back(a.amplitudes[i] * b.amplitudes[j]);
      if (index_pairs) index_pairs->emplace_back(i, j);
    }
  }
  SpectralDecomposition sd;
  sd.delta_energies = Eigen::Map<Eigen::VectorXd>(de.data(), static_cast<Eigen::Index>(de.size()));
  sd.weights = Eigen::Map<Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
  sd.amplitudes = Eigen::Map<Eigen::VectorXd>(amp.data(), static_cast<Eigen::Index>(amp.size()));
  sd.captured_weight = sd.weights.sum();
  sd.e0_initial = a.e0_initial + b.e0_initial;
  sd.e0_final = a.e0_final + b.e0_final;
  return sd;
}

struct TimeGrid {
  double t0 = 0.0;
  double dt = 1.0;
  std::size_t count = 0;

  /// `count` samples from t0 to t_end inclusive.
  static TimeGrid uniform(double t0, double t_end, std::size_t count) {
    if (count < 2 || !(t_end > t0)) throw ValidationError("TimeGrid: need count >= 2 and t_end > t0");
    return {t0, (t_end - t0) / static_cast<double>(count - 1), count};
  }
  [[nodiscard]] double time(std::size_t i) const { return t0 + dt * static_cast<double>(i); }
  [[nodiscard]] double end() const { return time(count - 1); }
};

template <class T>
struct TimeSeries {
  double t0 = 0.0;
  double dt = 1.0;
  std::vector<T> values;

  TimeSeries() = default;
  TimeSeries(const TimeGrid& g, std::vector<T> v) : t0(g.t0), dt(g.dt), values(std::move(v)) {
    if (!(g.dt > 0.0)) throw ValidationError("TimeSeries: dt must be positive");
  }
  [[nodiscard]] TimeGrid grid() const { return {t0, dt, values.size()}; }
  [[nodiscard]] double time(std::size_t i) const { return t0 + dt * static_cast<double>(i); }
  [[nodiscard]] std::size_t size() const { return values.size(); }
};

/// chi(t) = sum_j |c_j|^2 exp(i Delta E_j t), evaluated by phase stepping.
inline TimeSeries<std::complex<double>> characteristic_function(const SpectralDecomposition& sd,
                                                                const TimeGrid& grid) {
  std::vector<std::complex<double>> out(grid.count, {0.0, 0.0});
  for (Eigen::Index j = 0; j < sd.size(); ++j) {
    const double w = sd.weights[j];
    if (w == 0.0) continue;
    const double e = sd.delta_energies[j];
    const std::complex<double> step = std::polar(1.0, e * grid.dt);
    std::complex<double> phase = std::polar(w, e * grid.t0);
    for (std::size_t k = 0; k < grid.count; ++k) {
      // Re-anchor periodically so rounding in the recursion stays at ~1e-15.
      if (k % 64 == 0) phase = std::polar(w, e * grid.time(k));
      out[k] += phase;
      phase *= step;
    }
  }
  return {grid, std::move(out)};
}

inline TimeSeries<double> loschmidt_echo(const SpectralDecomposition& sd, const TimeGrid& grid) {
  const auto chi = characteristic_function(sd, grid);
  std::vector<double> le(chi.size());
  for (std::size_t k = 0; k < chi.size(); ++k) le[k] = std::norm(chi.values[k]);
  return {grid, std::move(le)};
}

struct WorkDistribution {
  std::vector<double> support;
  std::vector<double> probabilities;
};

/// Atoms at W_j, merging levels closer than merge_tol to the first level of
/// their group.
inline WorkDistribution work_distribution(const SpectralDecomposition& sd, double merge_tol = kDefaultMergeTol) {
  if (!(merge_tol >= 0.0)) throw ValidationError("work_distribution: merge_tol must be >= 0");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(sd.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return sd.delta_energies[a] < sd.delta_energies[b]; });
  WorkDistribution wd;
  double anchor = 0.0;
  for (Eigen::Index j : order) {
    const double e = sd.delta_energies[j];
    if (wd.support.empty() || e - anchor > merge_tol) {
      anchor = e;
      wd.support.push_back(e);
      wd.probabilities.push_back(sd.weights[j]);
    } else {
      wd.probabilities.back() += sd.weights[j];
    }
  }
  return wd;
}

/// Scalar result carrying the truncation guard.
struct GuardedValue {
  double value = 0.0;
  bool warning = false;  ///< captured weight below kCaptureGuard
};

inline GuardedValue average_work(const SpectralDecomposition& sd) {
  return {sd.delta_energies.dot(sd.weights), !sd.guard_ok()};
}

inline double free_energy_change(const SpectralDecomposition& sd) { return sd.e0_final - sd.e0_initial; }

inline GuardedValue irreversible_work(const SpectralDecomposition& sd) {
  const GuardedValue w = average_work(sd);
  return {w.value - free_energy_change(sd), w.warning};
}

/// <psi_0^I|H_F|psi_0^I> - E_0^I evaluated in the shared basis, independent
/// of the final eigenvectors.
inline double direct_average_work(const EigenSystem& initial, const EigenSystem& final) {
  if (!initial.basis.same_coordinates(final.basis)) throw ValidationError("direct_average_work: basis mismatch");
  if (final.hamiltonian.size() == 0) throw ValidationError("direct_average_work: final Hamiltonian not available");
  const Eigen::VectorXd psi = initial.vectors.col(0);
  return psi.dot(final.hamiltonian * psi) - initial.ground_energy();
}

inline TimeSeries<double> bures_entropy_series(const TimeSeries<double>& le) {
  std::vector<double> out(le.size());
  for (std::size_t k = 0; k < le.size(); ++k) out[k] = bures_bound(le.values[k]);
  TimeSeries<double> s;
  s.t0 = le.t0;
  s.dt = le.dt;
  s.values = std::move(out);
  return s;
}

enum class Window { rectangular, cosine };

inline Window parse_window(const std::string& s) {
  if (s == "rectangular") return Window::rectangular;
  if (s == "cosine") return Window::cosine;
  throw ValidationError("unknown window '" + s + "' (expected rectangular or cosine)");
}

struct SpectralFunction {
  std::vector<double> omega;
  std::vector<double> values;
  double resolution = 0.0;  ///< 2 pi / T

  /// Omega of the largest value.
  [[nodiscard]] double peak() const {
    return omega[static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin())];
  }
};

/// A(omega) = 2 Re int_0^T w(t) chi(t) exp(-i omega t) dt by the trapezoid
/// rule, so a line of chi at +Delta E peaks at omega = +Delta E. `bandwidth`
/// bounds |Delta E| of the lines present in chi.
inline SpectralFunction spectral_function(const TimeSeries<std::complex<double>>& chi, Window window,
                                          const std::vector<double>& omegas, double bandwidth) {
  if (chi.size() < 2) throw ValidationError("spectral_function: need at least two samples");
  if (bandwidth * chi.dt >= std::numbers::pi) {
    std::ostringstream msg;
    msg << "spectral_function: sampling aliases (bandwidth " << bandwidth << " with dt " << chi.dt
        << "); need dt < " << std::numbers::pi / bandwidth;
    throw ValidationError(msg.str());
  }
  const std::size_t n = chi.size();
  const double span = chi.time(n - 1) - chi.t0;
  std::vector<std::complex<double>> weighted(n);
  for (std::size_t k = 0; k < n; ++k) {
    double w = (k == 0 || k == n - 1) ? 0.5 : 1.0;
    if (window == Window::cosine) w *= std::cos(0.5 * std::numbers::pi * (chi.time(k) - chi.t0) / span);
    weighted[k] = w * chi.dt * chi.values[k];
  }
  SpectralFunction out;
  out.omega = omegas;
  out.values.resize(omegas.size());
  out.resolution = 2.0 * std::numbers::pi / span;
  for (std::size_t i = 0; i < omegas.size(); ++i) {
    const std::complex<double> step = std::polar(1.0, -omegas[i] * chi.dt);
    std::complex<double> phase = std::polar(1.0, -omegas[i] * chi.t0);
    std::complex<double> acc{0.0, 0.0};
    for (std::size_t k = 0; k < n; ++k) {
      if (k % 64 == 0) phase = std::polar(1.0, -omegas[i] * chi.time(k));
      acc += weighted[k] * phase;
      phase *= step;
    }
    out.values[i] = 2.0 * acc.real();
  }
  return out;
}

/// Evenly spaced axis from lo to hi inclusive.
inline std::vector<double> linspace(double lo, double hi, std::size_t count) {
  if (count < 2) throw ValidationError("linspace: count must be >= 2");
  std::vector<double> v(count);
  for (std::size_t i = 0; i < count; ++i) v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
  return v;
}

// CSV export. Lines starting with '#' carry provenance; numbers use 17
// significant digits so files round-trip exactly.

inline void write_comment_header(std::ostream& out, const std::vector<std::string>& header) {
  for (const auto& line : header) out << "# " << line << '\n';
}

inline std::ofstream open_csv(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.precision(17);
  return out;
}

inline void write_csv(const std::string& path, const TimeSeries<double>& s, const std::string& column,
                      const std::vector<std::string>& header = {}) {
  auto out = open_csv(path);
  write_comment_header(out, header);
  out << "t," << column << '\n';
  for (std::size_t k = 0; k < s.size(); ++k) out << s.time(k) << ',' << s.values[k] << '\n';
}

inline void write_csv(const std::string& path, const TimeSeries<std::complex<double>>& s, const std::string& column,
                      const std::vector<std::string>& header = {}) {
  auto out = open_csv(path);
  write_comment_header(out, header);
  out << "t," << column << "_re," << column << "_im\n";
  for (std::size_t k = 0; k < s.size(); ++k) {
    out << s.time(k) << ',' << s.values[k].real() << ',' << s.values[k].imag() << '\n';
  }
}

inline void write_csv(const std::string& path, const WorkDistribution& wd, const std::vector<std::string>& header = {}) {
  auto out = open_csv(path);
  write_comment_header(out, header);
  out << "W,p\n";
  for (std::size_t k = 0; k < wd.support.size(); ++k) out << wd.support[k] << ',' << wd.probabilities[k] << '\n';
}

inline void write_csv(const std::string& path, const SpectralFunction& a, const std::vector<std::string>& header = {}) {
  auto out = open_csv(path);
  write_comment_header(out, header);
  out << "omega,A\n";
  for (std::size_t k = 0; k < a.omega.size(); ++k) out << a.omega[k] << ',' << a.values[k] << '\n';
}

}  // namespace qtherm
