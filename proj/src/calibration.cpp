#include "droneear/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "droneear/errors.hpp"
#include "droneear/fft.hpp"

namespace droneear {

namespace {

constexpr double kPi = std::numbers::pi;

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

double median_abs(std::vector<double> v) {
  for (auto& x : v) x = std::abs(x);
  const auto mid = v.begin() + static_cast<long>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

// Orthonormal frame through the centroid: columns 0,1 span the best-fit
// plane, column 2 is its normal.
struct ArrayFrame {
  Eigen::Vector3d origin;
  Eigen::Matrix3d basis;
  bool planar = false;
};

ArrayFrame array_frame(const std::vector<Vec3>& positions) {
  ArrayFrame f;
  const Vec3 c = centroid(positions);
  f.origin = {c[0], c[1], c[2]};
  Eigen::MatrixXd centred(positions.size(), 3);
  for (std::size_t i = 0; i < positions.size(); ++i)
    centred.row(static_cast<long>(i)) << positions[i][0] - c[0], positions[i][1] - c[1], positions[i][2] - c[2];
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centred, Eigen::ComputeFullV);
  f.basis = svd.matrixV();
  const auto s = svd.singularValues();
  f.planar = s.size() < 3 || s(2) <= 1e-3 * std::max(s(0), 1e-12);
  if (f.basis.determinant() < 0) f.basis.col(2) *= -1.0;
  return f;
}

Eigen::Vector3d to_eigen(const Vec3& v) { return {v[0], v[1], v[2]}; }
Vec3 to_vec3(const Eigen::Vector3d& v) { return {v(0), v(1), v(2)}; }

// Range-difference residuals r_ij = c tau_ij - (|q - p_j| - |q - p_i|), i < j.
struct TdoaProblem {
  const Eigen::MatrixXd& tdoa;
  std::vector<Eigen::Vector3d> mics;
  double c;

  double cost(const Eigen::Vector3d& q) const {
    double s = 0.0;
    const auto m = mics.size();
    std::vector<double> r(m);
    for (std::size_t i = 0; i < m; ++i) r[i] = (q - mics[i]).norm();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = i + 1; j < m; ++j) {
        const double e = c * tdoa(static_cast<long>(i), static_cast<long>(j)) - (r[j] - r[i]);
        s += e * e;
      }
    return s;
  }

  std::size_t pair_count() const { return mics.size() * (mics.size() - 1) / 2; }

  // Levenberg-Marquardt in the coordinates q = origin + basis * u.
  Eigen::Vector3d refine(Eigen::Vector3d q, const Eigen::MatrixXd& basis) const {
    const long dims = basis.cols();
    const auto pairs = static_cast<long>(pair_count());
    double lambda = 1e-3;
    double current = cost(q);
    for (int iter = 0; iter < 100; ++iter) {
      Eigen::VectorXd res(pairs);
      Eigen::MatrixXd jac(pairs, dims);
      long row = 0;
      for (std::size_t i = 0; i < mics.size(); ++i)
        for (std::size_t j = i + 1; j < mics.size(); ++j, ++row) {
          const Eigen::Vector3d di = q - mics[i];
          const Eigen::Vector3d dj = q - mics[j];
          const double ri = std::max(di.norm(), 1e-12);
          const double rj = std::max(dj.norm(), 1e-12);
          res(row) = c * tdoa(static_cast<long>(i), static_cast<long>(j)) - (rj - ri);
          const Eigen::Vector3d grad = -(dj / rj - di / ri);
          jac.row(row) = grad.transpose() * basis;
        }
      const Eigen::MatrixXd jtj = jac.transpose() * jac;
      const Eigen::VectorXd jtr = jac.transpose() * res;
      bool improved = false;
      for (int tries = 0; tries < 10 && !improved; ++tries) {
        Eigen::MatrixXd a = jtj;
        a.diagonal() += lambda * (jtj.diagonal().array() + 1e-12).matrix();
        const Eigen::VectorXd step = a.ldlt().solve(-jtr);
        const Eigen::Vector3d candidate = q + basis * step;
        const double next = cost(candidate);
        if (next < current) {
          q = candidate;
          const double gain = current - next;
          current = next;
          lambda = std::max(lambda * 0.3, 1e-12);
          improved = true;
          if (gain < 1e-22) return q;
        } else {
          lambda *= 10.0;
        }
      }
      if (!improved) break;
    }
    return q;
  }
};

// Dense Levenberg-Marquardt with a forward-difference Jacobian.
template <typename F>
Eigen::VectorXd levenberg_marquardt(F&& residuals, Eigen::VectorXd x, int max_iter = 200) {
  Eigen::VectorXd r = residuals(x);
  double cost = r.squaredNorm();
  double lambda = 1e-3;
  Eigen::MatrixXd jac(r.size(), x.size());
  for (int iter = 0; iter < max_iter; ++iter) {
    for (long k = 0; k < x.size(); ++k) {
      const double h = 1e-7 * std::max(1.0, std::abs(x(k)));
      Eigen::VectorXd xp = x;
      xp(k) += h;
      jac.col(k) = (residuals(xp) - r) / h;
    }
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd jtr = jac.transpose() * r;
    bool improved = false;
    for (int tries = 0; tries < 12 && !improved; ++tries) {
      Eigen::MatrixXd a = jtj;
      a.diagonal() += lambda * (jtj.diagonal().array() + 1e-12).matrix();
      const Eigen::VectorXd candidate = x + a.ldlt().solve(-jtr);
      const Eigen::VectorXd rc = residuals(candidate);
      const double next = rc.squaredNorm();
      if (next < cost) {
        const double drop = cost - next;
        x = candidate;
        r = rc;
        cost = next;
        lambda = std::max(lambda * 0.3, 1e-12);
        improved = true;
        if (drop <= 1e-14 * std::max(cost, 1e-30)) return x;
      } else {
        lambda *= 10.0;
      }
    }
    if (!improved) break;
  }
  return x;
}

double pulse_energy(const std::vector<double>& x) { return std::inner_product(x.begin(), x.end(), x.begin(), 0.0); }

// Pulse positions, source levels and log gains fitted together to the range
// differences and the inverse-square energies, microphones held fixed.
// Three microphones pin a pulse's direction far better than its range; the
// energy ratios supply the range.
void refine_pulses_and_gains(const std::vector<Eigen::MatrixXd>& tdoas, const PulseRecordingSet& pulses,
                             const std::vector<Vec3>& mics, double c, std::vector<Vec3>& pulse_pos,
                             std::vector<double>& gains) {
  constexpr double kSigmaRange = 0.002;  // m
  constexpr double kSigmaLog = 0.05;
  const ArrayFrame frame = array_frame(mics);
  const long dims = frame.planar ? 2 : 3;
  const Eigen::MatrixXd basis = frame.basis.leftCols(dims);
  const auto n_p = static_cast<long>(pulse_pos.size());
  const auto m = static_cast<long>(mics.size());
  const long per = dims + 1;

  Eigen::MatrixXd level(n_p, m);
  for (long p = 0; p < n_p; ++p)
    for (long i = 0; i < m; ++i) level(p, i) = std::log(std::max(pulse_energy(pulses.pulses[p][i]), 1e-300));

  Eigen::VectorXd x(n_p * per + m);
  for (long i = 0; i < m; ++i) x(n_p * per + i) = std::log(gains[static_cast<std::size_t>(i)]);
  for (long p = 0; p < n_p; ++p) {
    const Eigen::Vector3d q = to_eigen(pulse_pos[static_cast<std::size_t>(p)]);
    x.segment(p * per, dims) = basis.transpose() * (q - frame.origin);
    double s = 0.0;
    for (long i = 0; i < m; ++i)
      s += level(p, i) + 2.0 * std::log(std::max(distance(pulse_pos[p], mics[i]), 1e-9)) - 2.0 * x(n_p * per + i);
    x(p * per + dims) = s / static_cast<double>(m);
  }

  const long pairs = m * (m - 1) / 2;
  auto residuals = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd r(n_p * (pairs + m) + 1);
    long row = 0;
    std::vector<double> dist(static_cast<std::size_t>(m));
    for (long p = 0; p < n_p; ++p) {
      const Eigen::Vector3d q = frame.origin + basis * v.segment(p * per, dims);
      for (long i = 0; i < m; ++i) dist[i] = std::max((q - to_eigen(mics[i])).norm(), 1e-9);
      for (long i = 0; i < m; ++i)
        for (long j = i + 1; j < m; ++j) r(row++) = (c * tdoas[p](i, j) - (dist[j] - dist[i])) / kSigmaRange;
      for (long i = 0; i < m; ++i)
        r(row++) = (level(p, i) - (v(p * per + dims) - 2.0 * std::log(dist[i]) + 2.0 * v(n_p * per + i))) / kSigmaLog;
    }
    r(row) = v.tail(m).sum();  // gauge: unit geometric mean
    return r;
  };
  x = levenberg_marquardt(residuals, x);

  for (long p = 0; p < n_p; ++p) pulse_pos[p] = to_vec3(frame.origin + basis * x.segment(p * per, dims));
  const double mean_log = x.tail(m).mean();
  for (long i = 0; i < m; ++i) gains[i] = std::exp(x(n_p * per + i) - mean_log);
}

}  // namespace

std::vector<double> detect_onsets(const std::vector<std::vector<double>>& channels, double sample_rate) {
  std::vector<double> onsets;
  for (std::size_t c = 0; c < channels.size(); ++c) {
    const auto& x = channels[c];
    if (x.empty()) throw CalibrationSignalError("detect_onsets: empty channel");
    double peak = 0.0;
    for (double v : x) peak = std::max(peak, std::abs(v));
    const double med = median_abs(x);
    if (!(peak > 0.0) || peak < 10.0 * med)
      throw CalibrationSignalError("detect_onsets: no transient on channel " + std::to_string(c));
    const double level = 0.5 * peak;
    std::size_t idx = 0;
    while (std::abs(x[idx]) <= level) ++idx;
    onsets.push_back(static_cast<double>(idx) / sample_rate);
  }
  return onsets;
}

std::vector<std::vector<double>> detect_pulse_onsets(const PulseRecordingSet& recordings) {
  std::vector<std::vector<double>> out;
  for (const auto& pulse : recordings.pulses) out.push_back(detect_onsets(pulse, recordings.sample_rate));
  return out;
}

double estimate_pair_delay(std::span<const double> a, std::span<const double> b, double sample_rate,
                           const TdoaOptions& options, double* peak_correlation) {
  const std::size_t n = std::max(a.size(), b.size());
  if (n < 2) throw UnreliablePulseError("estimate_pair_delay: segments too short");
  const std::size_t nfft = next_pow2(2 * n);
  RealFft fft(nfft);
  const auto fa = fft.forward(a);
  auto fb = fft.forward(b);
  for (std::size_t k = 0; k < fb.size(); ++k) fb[k] *= std::conj(fa[k]);
  const auto corr = fft.inverse(fb);  // corr[l] = sum_n a[n] b[n + l]

  const double ea = std::inner_product(a.begin(), a.end(), a.begin(), 0.0);
  const double eb = std::inner_product(b.begin(), b.end(), b.begin(), 0.0);
  if (!(ea > 0.0) || !(eb > 0.0)) throw UnreliablePulseError("estimate_pair_delay: silent segment");

  const long max_lag = options.max_lag > 0 ? std::min<long>(options.max_lag, static_cast<long>(n) - 1)
                                           : static_cast<long>(n) - 1;
  auto at = [&](long lag) { return corr[static_cast<std::size_t>((lag + static_cast<long>(nfft)) % static_cast<long>(nfft))]; };
  long best = -max_lag;
  for (long lag = -max_lag; lag <= max_lag; ++lag)
    if (at(lag) > at(best)) best = lag;

  const double rho = at(best) / std::sqrt(ea * eb);
  if (peak_correlation) *peak_correlation = rho;
  if (rho < options.min_correlation)
    throw UnreliablePulseError("estimate_pair_delay: correlation peak " + std::to_string(rho) +
                               " below threshold");

  double frac = 0.0;
  if (best > -max_lag && best < max_lag) {
    const double ym = at(best - 1), y0 = at(best), yp = at(best + 1);
    const double denom = ym - 2.0 * y0 + yp;
    if (denom < 0.0) frac = 0.5 * (ym - yp) / denom;
  }
  return (static_cast<double>(best) + frac) / sample_rate;
}

Eigen::MatrixXd estimate_tdoa(const std::vector<std::vector<double>>& pulse, double sample_rate,
                              const TdoaOptions& options) {
  const auto m = static_cast<long>(pulse.size());
  Eigen::MatrixXd tau = Eigen::MatrixXd::Zero(m, m);
  for (long i = 0; i < m; ++i)
    for (long j = i + 1; j < m; ++j) {
      tau(i, j) = estimate_pair_delay(pulse[i], pulse[j], sample_rate, options);
      tau(j, i) = -tau(i, j);
    }
  return tau;
}

Eigen::MatrixXd estimate_pairwise_distances(const std::vector<Eigen::MatrixXd>& tdoas, double sound_speed) {
  if (tdoas.size() < 4)
    throw InsufficientCalibrationDataError("estimate_pairwise_distances: need at least 4 usable pulses, have " +
                                           std::to_string(tdoas.size()));
  const long m = tdoas.front().rows();
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(m, m);
  for (const auto& t : tdoas) {
    if (t.rows() != m || t.cols() != m)
      throw InputDomainError("estimate_pairwise_distances: TDOA matrices differ in size");
    d = d.cwiseMax(t.cwiseAbs());
  }
  d *= sound_speed;
  d = 0.5 * (d + d.transpose());
  d.diagonal().setZero();
  return d;
}

Eigen::MatrixXd mds_localize(const Eigen::MatrixXd& distances) {
  const long m = distances.rows();
  if (m < 2 || distances.cols() != m) throw InputDomainError("mds_localize: need a square matrix, M >= 2");
  const double scale = std::max(distances.cwiseAbs().maxCoeff(), 1e-300);
  if ((distances - distances.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale)
    throw InputDomainError("mds_localize: distance matrix not symmetric");
  if (distances.diagonal().cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw InputDomainError("mds_localize: distance matrix diagonal not zero");
  if (distances.minCoeff() < 0.0) throw InputDomainError("mds_localize: negative distance");

  const Eigen::MatrixXd d2 = distances.cwiseProduct(distances);
  const Eigen::MatrixXd j =
      Eigen::MatrixXd::Identity(m, m) - Eigen::MatrixXd::Constant(m, m, 1.0 / static_cast<double>(m));
  const Eigen::MatrixXd b = -0.5 * j * d2 * j;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (b + b.transpose()));
  // ascending order; reverse
  const Eigen::VectorXd values = eig.eigenvalues().reverse();
  const Eigen::MatrixXd vectors = eig.eigenvectors().rowwise().reverse();

  const double largest = std::max(values(0), 0.0);
  long negatives = 0;
  for (long k = 0; k < m; ++k)
    if (values(k) < -0.01 * largest) ++negatives;
  if (negatives > std::max<long>(0, m - 4))
    throw InconsistentDistancesError("mds_localize: " + std::to_string(negatives) +
                                     " significantly negative eigenvalues");

  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(m, 3);
  for (long k = 0; k < std::min<long>(3, m); ++k) {
    if (values(k) <= 0.0) continue;
    Eigen::VectorXd col = vectors.col(k) * std::sqrt(values(k));
    // deterministic sign: first clearly nonzero coordinate is positive
    for (long i = 0; i < m; ++i) {
      if (std::abs(col(i)) > 1e-9 * std::sqrt(largest)) {
        if (col(i) < 0.0) col = -col;
        break;
      }
    }
    x.col(k) = col;
  }
  return x;
}

std::vector<Vec3> locate_pulse(const Eigen::MatrixXd& tdoa, const std::vector<Vec3>& mic_positions,
                               double sound_speed) {
  const auto m = mic_positions.size();
  if (m < 2 || tdoa.rows() != static_cast<long>(m)) throw InputDomainError("locate_pulse: size mismatch");
  const ArrayFrame frame = array_frame(mic_positions);
  TdoaProblem problem{tdoa, {}, sound_speed};
  for (const auto& p : mic_positions) problem.mics.push_back(to_eigen(p));

  // Coarse polar grid, log-spaced ranges.
  const int n_range = 100;
  const double r_lo = 0.2, r_hi = 20.0;
  const int n_az = frame.planar ? 360 : 120;
  const int n_el = frame.planar ? 1 : 31;
  auto range_at = [&](int k) { return r_lo * std::pow(r_hi / r_lo, k / static_cast<double>(n_range - 1)); };
  auto point_at = [&](int a, int e, int k) {
    const double az = 2.0 * kPi * a / n_az;
    const double el = frame.planar ? 0.0 : -0.5 * kPi + kPi * e / (n_el - 1);
    const Eigen::Vector3d u(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
    return Eigen::Vector3d(frame.origin + range_at(k) * (frame.basis * u));
  };
  std::vector<double> grid(static_cast<std::size_t>(n_az) * n_el * n_range);
  auto idx = [&](int a, int e, int k) {
    return (static_cast<std::size_t>(a) * n_el + e) * n_range + k;
  };
  for (int a = 0; a < n_az; ++a)
    for (int e = 0; e < n_el; ++e)
      for (int k = 0; k < n_range; ++k) grid[idx(a, e, k)] = problem.cost(point_at(a, e, k));

  struct Seed {
    double cost;
    Eigen::Vector3d q;
  };
  std::vector<Seed> seeds;
  for (int a = 0; a < n_az; ++a)
    for (int e = 0; e < n_el; ++e)
      for (int k = 0; k < n_range; ++k) {
        const double v = grid[idx(a, e, k)];
        bool is_min = true;
        for (int da = -1; da <= 1 && is_min; ++da)
          for (int de = -1; de <= 1 && is_min; ++de)
            for (int dk = -1; dk <= 1 && is_min; ++dk) {
              if (da == 0 && de == 0 && dk == 0) continue;
              const int ee = e + de, kk = k + dk;
              if (ee < 0 || ee >= n_el || kk < 0 || kk >= n_range) continue;
              const int aa = (a + da + n_az) % n_az;
              if (grid[idx(aa, ee, kk)] < v) is_min = false;
            }
        if (is_min) seeds.push_back({v, point_at(a, e, k)});
      }
  std::sort(seeds.begin(), seeds.end(), [](const Seed& x, const Seed& y) { return x.cost < y.cost; });
  if (seeds.size() > 8) seeds.resize(8);

  const Eigen::MatrixXd basis = frame.planar ? Eigen::MatrixXd(frame.basis.leftCols(2)) : Eigen::MatrixXd(frame.basis);
  std::vector<Seed> solutions;
  for (const auto& s : seeds) {
    Eigen::Vector3d q = problem.refine(s.q, basis);
    // delays consistent only with a far-field source: keep the direction,
    // the energy fit in calibrate() settles the range
    const double range = (q - frame.origin).norm();
    if (range > r_hi) q = frame.origin + (q - frame.origin) * (r_hi / range);
    solutions.push_back({problem.cost(q), q});
  }
  if (solutions.empty()) throw CalibrationSignalError("locate_pulse: no consistent source position");
  std::sort(solutions.begin(), solutions.end(), [](const Seed& x, const Seed& y) { return x.cost < y.cost; });

  const double pairs = static_cast<double>(problem.pair_count());
  const double best_rms = std::sqrt(solutions.front().cost / pairs);
  const double accept_rms = std::max(2.0 * best_rms, 5e-4);
  std::vector<Vec3> out;
  for (const auto& s : solutions) {
    if (std::sqrt(s.cost / pairs) > accept_rms) continue;
    const bool duplicate = std::any_of(out.begin(), out.end(),
                                       [&](const Vec3& v) { return (to_eigen(v) - s.q).norm() < 0.05; });
    if (!duplicate) out.push_back(to_vec3(s.q));
  }
  return out;
}

std::vector<double> calibrate_gains(const PulseRecordingSet& recordings, const std::vector<Vec3>& mic_positions,
                                    const std::vector<Vec3>& pulse_positions) {
  const std::size_t p_count = recordings.pulse_count();
  const std::size_t m = mic_positions.size();
  if (p_count == 0 || m == 0) throw GainUnobservableError("calibrate_gains: no pulses or microphones");
  if (pulse_positions.size() != p_count)
    throw InputDomainError("calibrate_gains: one position per pulse required");

  // y_pi = log E_pi + 2 log r_pi = log S_p + 2 log g_i; complete two-way layout
  Eigen::MatrixXd y(static_cast<long>(p_count), static_cast<long>(m));
  for (std::size_t p = 0; p < p_count; ++p) {
    if (recordings.pulses[p].size() != m) throw InputDomainError("calibrate_gains: channel count mismatch");
    for (std::size_t i = 0; i < m; ++i) {
      const auto& x = recordings.pulses[p][i];
      const double e = std::inner_product(x.begin(), x.end(), x.begin(), 0.0);
      const double r = distance(pulse_positions[p], mic_positions[i]);
      if (!(e > 0.0) || !std::isfinite(e) || !(r > 0.0))
        throw GainUnobservableError("calibrate_gains: pulse " + std::to_string(p) + " unusable on channel " +
                                    std::to_string(i));
      y(static_cast<long>(p), static_cast<long>(i)) = std::log(e) + 2.0 * std::log(r);
    }
  }
  const Eigen::VectorXd col_means = y.colwise().mean().transpose();
  const double grand = col_means.mean();
  std::vector<double> gains(m);
  for (std::size_t i = 0; i < m; ++i) gains[i] = std::exp(0.5 * (col_means(static_cast<long>(i)) - grand));
  return gains;
}

double azimuth_spread_deg(std::vector<double> azimuths) {
  if (azimuths.size() < 2) return 0.0;
  for (auto& a : azimuths) a = wrap_degrees(a);
  std::sort(azimuths.begin(), azimuths.end());
  double max_gap = 360.0 - azimuths.back() + azimuths.front();
  for (std::size_t i = 1; i < azimuths.size(); ++i) max_gap = std::max(max_gap, azimuths[i] - azimuths[i - 1]);
  return 360.0 - max_gap;
}

namespace {

// Rotates (or reflects) the MDS frame so that mic 0 lies on +x, the array
// plane is xy and mic 1 has y > 0. Pulse positions follow the same map.
void to_canonical_frame(std::vector<Vec3>& mics, std::vector<Vec3>& pulses) {
  const Vec3 c = centroid(mics);
  for (auto& p : mics) p = p - c;
  for (auto& p : pulses) p = p - c;
  // MDS puts the least-variance axis on z
  Eigen::Vector3d z(0.0, 0.0, 1.0);
  Eigen::Vector3d x = Eigen::Vector3d::Zero();
  for (const auto& p : mics) {
    const Eigen::Vector3d v(p[0], p[1], 0.0);
    if (v.norm() > 1e-9) {
      x = v.normalized();
      break;
    }
  }
  if (x.isZero()) return;
  if (mics.size() > 1) {
    const Eigen::Vector3d a(mics[0][0], mics[0][1], mics[0][2]), b(mics[1][0], mics[1][1], mics[1][2]);
    if (a.cross(b).dot(z) < 0.0) z = -z;
  }
  const Eigen::Vector3d y = z.cross(x);
  auto apply = [&](Vec3& p) {
    const Eigen::Vector3d v(p[0], p[1], p[2]);
    p = {x.dot(v), y.dot(v), z.dot(v)};
  };
  for (auto& p : mics) apply(p);
  for (auto& p : pulses) apply(p);
}

}  // namespace

CalibrationResult calibrate(const PulseRecordingSet& recordings, const CalibrationOptions& options) {
  CalibrationResult result;
  TdoaOptions tdoa_opts;
  tdoa_opts.min_correlation = options.min_correlation;
  tdoa_opts.max_lag =
      static_cast<int>(std::ceil(options.max_aperture_m / options.sound_speed * recordings.sample_rate)) + 2;

  std::vector<Eigen::MatrixXd> tdoas;
  PulseRecordingSet usable;
  usable.sample_rate = recordings.sample_rate;
  for (std::size_t p = 0; p < recordings.pulse_count(); ++p) {
    try {
      detect_onsets(recordings.pulses[p], recordings.sample_rate);
      tdoas.push_back(estimate_tdoa(recordings.pulses[p], recordings.sample_rate, tdoa_opts));
      usable.pulses.push_back(recordings.pulses[p]);
    } catch (const CalibrationSignalError& e) {
      result.warnings.push_back("pulse " + std::to_string(p) + " discarded: " + e.what());
    } catch (const UnreliablePulseError& e) {
      result.warnings.push_back("pulse " + std::to_string(p) + " discarded: " + e.what());
    }
  }
  result.pulses_used = tdoas.size();
  result.pulses_discarded = recordings.pulse_count() - tdoas.size();
  if (tdoas.size() < 4)
    throw InsufficientCalibrationDataError("calibrate: " + std::to_string(tdoas.size()) +
                                           " usable pulses, need at least 4");
  if (tdoas.size() < 10)
    result.warnings.push_back("only " + std::to_string(tdoas.size()) + " usable pulses (10 recommended)");

  result.distances = estimate_pairwise_distances(tdoas, options.sound_speed);
  const Eigen::MatrixXd x = mds_localize(result.distances);
  std::vector<Vec3> positions;
  for (long i = 0; i < x.rows(); ++i) positions.push_back({x(i, 0), x(i, 1), x(i, 2)});

  // Locate pulses; resolve pulses with several consistent positions by the
  // inverse-square energy fit once the unambiguous ones have fixed the gains.
  std::vector<std::vector<Vec3>> candidates;
  for (const auto& t : tdoas) candidates.push_back(locate_pulse(t, positions, options.sound_speed));

  auto energy_misfit = [&](std::size_t p, const Vec3& q, const std::vector<double>& gains) {
    const auto& pulse = usable.pulses[p];
    std::vector<double> y;
    for (std::size_t i = 0; i < pulse.size(); ++i) {
      const double e = std::inner_product(pulse[i].begin(), pulse[i].end(), pulse[i].begin(), 0.0);
      y.push_back(std::log(std::max(e, 1e-300)) - 2.0 * std::log(gains[i]) +
                  2.0 * std::log(std::max(distance(q, positions[i]), 1e-9)));
    }
    const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
    double s = 0.0;
    for (double v : y) s += (v - mean) * (v - mean);
    return s;
  };

  std::vector<double> gains(positions.size(), 1.0);
  {
    PulseRecordingSet unique_set;
    std::vector<Vec3> unique_pos;
    for (std::size_t p = 0; p < candidates.size(); ++p)
      if (candidates[p].size() == 1) {
        unique_set.pulses.push_back(usable.pulses[p]);
        unique_pos.push_back(candidates[p].front());
      }
    if (!unique_pos.empty()) gains = calibrate_gains(unique_set, positions, unique_pos);
  }
  result.pulse_positions.clear();
  for (std::size_t p = 0; p < candidates.size(); ++p) {
    const auto& c = candidates[p];
    auto best = std::min_element(c.begin(), c.end(), [&](const Vec3& a, const Vec3& b) {
      return energy_misfit(p, a, gains) < energy_misfit(p, b, gains);
    });
    result.pulse_positions.push_back(*best);
  }
  gains = calibrate_gains(usable, positions, result.pulse_positions);
  refine_pulses_and_gains(tdoas, usable, positions, options.sound_speed, result.pulse_positions, gains);

  std::vector<double> azimuths;
  for (const auto& q : result.pulse_positions) azimuths.push_back(azimuth_deg(q));
  result.direction_spread_deg = azimuth_spread_deg(azimuths);
  if (result.direction_spread_deg < 90.0)
    result.warnings.push_back("pulse directions span only " + std::to_string(result.direction_spread_deg) +
                              " deg; pairwise distances are likely underestimated");

  to_canonical_frame(positions, result.pulse_positions);
  result.geometry = ArrayGeometry::from_positions(positions, gains, options.sound_speed);
  return result;
}

ProcrustesResult procrustes_align(const std::vector<Vec3>& estimate, const std::vector<Vec3>& reference) {
  if (estimate.size() != reference.size() || estimate.empty())
    throw InputDomainError("procrustes_align: point sets differ in size");
  const Eigen::Vector3d ce = to_eigen(centroid(estimate));
  const Eigen::Vector3d cr = to_eigen(centroid(reference));
  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < estimate.size(); ++i)
    h += (to_eigen(estimate[i]) - ce) * (to_eigen(reference[i]) - cr).transpose();
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  ProcrustesResult r;
  r.rotation = svd.matrixV() * svd.matrixU().transpose();
  r.translation = cr - r.rotation * ce;
  double sq = 0.0;
  for (std::size_t i = 0; i < estimate.size(); ++i)
    sq += (r.rotation * to_eigen(estimate[i]) + r.translation - to_eigen(reference[i])).squaredNorm();
  r.rms_error = std::sqrt(sq / static_cast<double>(estimate.size()));
  return r;
}

}  // namespace droneear
