#include "rnnlab/numerics.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>

namespace rnnlab {

namespace {

std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream_id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream_id),
                    static_cast<std::uint32_t>(stream_id >> 32), 0x9e3779b9u};
  return std::mt19937_64(seq);
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id), engine_(make_engine(seed, stream_id)) {}

double RngStream::normal() { return normal_(engine_); }
double RngStream::normal(double stddev) { return stddev * normal_(engine_); }

double RngStream::uniform() { return std::generate_canonical<double, 64>(engine_); }
double RngStream::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::size_t RngStream::index(std::size_t n) {
  if (n == 0) throw std::invalid_argument("RngStream::index: empty range");
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
}

double RngStream::rademacher() { return (engine_() >> 63) ? 1.0 : -1.0; }
std::uint64_t RngStream::bits() { return engine_(); }

RngStream RngStream::child(std::uint64_t tag) const {
  return RngStream(splitmix(seed_ ^ splitmix(tag)), splitmix(stream_id_ + 0x632be59bd9b4e019ull * (tag + 1)));
}

Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, RngStream& rng) {
  Matrix M(rows, cols);
  double* p = M.data();
  for (Eigen::Index k = 0; k < M.size(); ++k) p[k] = stddev * rng.normal();
  return M;
}

Vector gaussian_vector(Eigen::Index n, double stddev, RngStream& rng) {
  Vector v(n);
  for (Eigen::Index k = 0; k < n; ++k) v[k] = stddev * rng.normal();
  return v;
}

Vector random_unit_vector(Eigen::Index n, RngStream& rng) {
  Vector v = gaussian_vector(n, 1.0, rng);
  double nv = v.norm();
  while (nv == 0.0) {
    v = gaussian_vector(n, 1.0, rng);
    nv = v.norm();
  }
  return v / nv;
}

Matrix gram_schmidt(std::span<const Vector> vs) {
  if (vs.empty()) throw std::invalid_argument("gram_schmidt: no vectors");
  const Eigen::Index m = vs.front().size();
  const auto n = static_cast<Eigen::Index>(vs.size());
  if (m == 0) throw std::invalid_argument("gram_schmidt: zero-dimensional vectors");
  if (n > m) throw std::invalid_argument("gram_schmidt: more vectors than dimensions");
  for (const auto& v : vs) {
    if (v.size() != m) throw std::invalid_argument("gram_schmidt: dimension mismatch");
  }

  Matrix U(m, n);
  auto orthogonalize = [&](Vector r, Eigen::Index upto) {
    // Two passes of modified Gram-Schmidt keep the columns orthonormal to
    // ~1e-15 even for nearly dependent inputs.
    for (int pass = 0; pass < 2; ++pass) {
      for (Eigen::Index c = 0; c < upto; ++c) r -= U.col(c).dot(r) * U.col(c);
    }
    return r;
  };

  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector& v = vs[static_cast<std::size_t>(i)];
    const double scale = v.norm();
    Vector r = orthogonalize(v, i);
    double rn = r.norm();
    if (!(rn >= 1e-12 * scale) || rn == 0.0) {
      // Degenerate residual: first basis vector with a usable residual.
      for (Eigen::Index b = 0; b < m; ++b) {
        r = orthogonalize(Vector::Unit(m, b), i);
        rn = r.norm();
        if (rn > 1e-6) break;
      }
    }
    U.col(i) = r / rn;
  }
  return U;
}

double spectral_norm(const Matrix& M, double tol, std::uint64_t seed) {
  if (M.size() == 0) throw std::invalid_argument("spectral_norm: empty matrix");
  if (!all_finite(M)) throw std::invalid_argument("spectral_norm: non-finite entries");
  PowerIterationOptions opts;
  opts.tol = tol;
  opts.seed = seed;
  return spectral_norm_op(
      M.rows(), M.cols(), [&](const Vector& v) -> Vector { return M * v; },
      [&](const Vector& u) -> Vector { return M.transpose() * u; }, opts);
}

double spectral_norm_op(Eigen::Index rows, Eigen::Index cols,
                        const std::function<Vector(const Vector&)>& apply,
                        const std::function<Vector(const Vector&)>& apply_t,
                        const PowerIterationOptions& opts) {
  if (rows <= 0 || cols <= 0) throw std::invalid_argument("spectral_norm: empty operator");
  RngStream rng(opts.seed, 0);
  Vector v = random_unit_vector(cols, rng);
  double sigma = 0.0;
  // Stop once the Rayleigh quotient has settled far below tol, which keeps
  // slow-gap cases from stopping prematurely.
  const double settle = std::max(opts.tol * 1e-3, 1e-15);
  for (int it = 0; it < opts.max_iter; ++it) {
    Vector u = apply(v);
    Vector w = apply_t(u);
    const double wn = w.norm();
    if (wn == 0.0) return 0.0;
    const double next = std::sqrt(u.squaredNorm());
    v = w / wn;
    if (it > 2 && std::abs(next - sigma) <= settle * next) {
      sigma = next;
      break;
    }
    sigma = next;
  }
  // One more half step gives ||M v|| for the converged right vector.
  return std::max(sigma, apply(v).norm());
}

double row_norm_p_q(const Matrix& M, NormIndex p, NormIndex q) {
  if (M.size() == 0) throw std::invalid_argument("row_norm_p_q: empty matrix");
  Vector rows(M.rows());
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    rows[r] = (p == NormIndex::Two) ? M.row(r).norm() : M.row(r).cwiseAbs().maxCoeff();
  }
  return (q == NormIndex::Two) ? rows.norm() : rows.maxCoeff();
}

Vector LowRankMatrix::apply(const Vector& v) const {
  if (U.cols() == 0) return Vector::Zero(U.rows());
  return U * (V.transpose() * v);
}

Vector LowRankMatrix::apply_transpose(const Vector& u) const {
  if (U.cols() == 0) return Vector::Zero(V.rows());
  return V * (U.transpose() * u);
}

Matrix LowRankMatrix::dense() const {
  if (U.cols() == 0) return Matrix::Zero(U.rows(), V.rows());
  return U * V.transpose();
}

double LowRankMatrix::frobenius_norm() const {
  if (U.cols() == 0) return 0.0;
  // ||U V^T||_F^2 = tr((U^T U)(V^T V))
  const Eigen::MatrixXd gu = U.transpose() * U;
  const Eigen::MatrixXd gv = V.transpose() * V;
  return std::sqrt(std::max(0.0, (gu.cwiseProduct(gv)).sum()));
}

bool all_finite(const Matrix& M) { return M.allFinite(); }

namespace {

constexpr std::array<char, 4> kMagic{'R', 'N', 'N', 'W'};

template <class T>
void put_le(std::ostream& out, T value) {
  std::array<unsigned char, sizeof(T)> buf{};
  std::uint64_t bits = 0;
  if constexpr (std::is_same_v<T, double>) {
    bits = std::bit_cast<std::uint64_t>(value);
  } else {
    bits = static_cast<std::uint64_t>(value);
  }
  for (std::size_t b = 0; b < sizeof(T); ++b) buf[b] = static_cast<unsigned char>(bits >> (8 * b));
  out.write(reinterpret_cast<const char*>(buf.data()), sizeof(T));
}

template <class T>
T get_le(std::istream& in) {
  std::array<unsigned char, sizeof(T)> buf{};
  in.read(reinterpret_cast<char*>(buf.data()), sizeof(T));
  if (!in) throw std::runtime_error("matrix snapshot: truncated file");
  std::uint64_t bits = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b) bits |= static_cast<std::uint64_t>(buf[b]) << (8 * b);
  if constexpr (std::is_same_v<T, double>) {
    return std::bit_cast<double>(bits);
  } else {
    return static_cast<T>(bits);
  }
}

}  // namespace

void write_matrix(std::ostream& out, const Matrix& M) {
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, kSnapshotVersion);
  put_le<std::uint32_t>(out, 0);  // reserved
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(M.rows()));
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(M.cols()));
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(M.data()),
              static_cast<std::streamsize>(M.size() * sizeof(double)));
  } else {
    for (Eigen::Index k = 0; k < M.size(); ++k) put_le<double>(out, M.data()[k]);
  }
  if (!out) throw std::runtime_error("matrix snapshot: write failed");
}

Matrix read_matrix(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw std::runtime_error("matrix snapshot: bad magic");
  const auto version = get_le<std::uint32_t>(in);
  if (version != kSnapshotVersion) {
    throw std::runtime_error("matrix snapshot: unsupported version " + std::to_string(version));
  }
  (void)get_le<std::uint32_t>(in);
  const auto rows = get_le<std::uint64_t>(in);
  const auto cols = get_le<std::uint64_t>(in);
  if (rows == 0 || cols == 0) throw std::runtime_error("matrix snapshot: empty matrix");
  Matrix M(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  if constexpr (std::endian::native == std::endian::little) {
    in.read(reinterpret_cast<char*>(M.data()), static_cast<std::streamsize>(M.size() * sizeof(double)));
    if (!in) throw std::runtime_error("matrix snapshot: truncated payload");
  } else {
    for (Eigen::Index k = 0; k < M.size(); ++k) M.data()[k] = get_le<double>(in);
  }
  return M;
}

void save_matrix(const std::filesystem::path& path, const Matrix& M) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_matrix(out, M);
}

Matrix load_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_matrix(in);
}

LogLogFit fit_loglog(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("fit_loglog: size mismatch");
  if (xs.size() < 2) throw std::invalid_argument("fit_loglog: need at least two points");
  const auto n = static_cast<double>(xs.size());
  double sx = 0, sy = 0;
  std::vector<double> lx, ly;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    if (!(xs[k] > 0) || !(ys[k] > 0)) throw std::invalid_argument("fit_loglog: non-positive value");
    lx.push_back(std::log(xs[k]));
    ly.push_back(std::log(ys[k]));
    sx += lx.back();
    sy += ly.back();
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < lx.size(); ++k) {
    sxx += (lx[k] - mx) * (lx[k] - mx);
    sxy += (lx[k] - mx) * (ly[k] - my);
  }
  if (sxx == 0) throw std::invalid_argument("fit_loglog: degenerate x grid");
  LogLogFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  if (xs.size() > 2) {
    double sse = 0;
    for (std::size_t k = 0; k < lx.size(); ++k) {
      const double r = ly[k] - (fit.intercept + fit.slope * lx[k]);
      sse += r * r;
    }
    fit.slope_stderr = std::sqrt(sse / (n - 2) / sxx);
  }
  return fit;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median: empty input");
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(values.size() / 2);
  std::nth_element(values.begin(), mid, values.end());
  if (values.size() % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(values.begin(), mid);
  return 0.5 * (lo + hi);
}

}  // namespace rnnlab
