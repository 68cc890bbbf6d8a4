#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <random>
#include <span>
#include <vector>

namespace rnnlab {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Reproducible random stream. Two streams with the same (seed, stream_id)
// produce bit-identical draws; different stream ids are statistically
// independent (the pair is mixed through std::seed_seq).
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  double normal();                 // N(0,1)
  double normal(double stddev);    // N(0, stddev^2)
  double uniform();                // [0,1)
  double uniform(double lo, double hi);
  std::size_t index(std::size_t n);  // uniform in [0, n)
  double rademacher();             // ±1 with equal probability
  std::uint64_t bits();

  // Child stream derived from this stream's identity (not its state), so
  // that substreams do not depend on how many draws were made before.
  RngStream child(std::uint64_t tag) const;

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, RngStream& rng);
Vector gaussian_vector(Eigen::Index n, double stddev, RngStream& rng);
Vector random_unit_vector(Eigen::Index n, RngStream& rng);

// Orthonormalize v_1..v_n (columns of the result). A residual below
// 1e-12 * ||v_i|| is treated as zero and replaced by the first standard
// basis vector that survives orthogonalization against earlier columns.
Matrix gram_schmidt(std::span<const Vector> vs);

struct PowerIterationOptions {
  double tol = 1e-8;
  int max_iter = 100000;
  std::uint64_t seed = 0x5eed;
};

// sigma_max(M) by power iteration on M^T M.
double spectral_norm(const Matrix& M, double tol = 1e-8, std::uint64_t seed = 0x5eed);

// Same for an implicit operator given by v -> M v (cols -> rows) and
// u -> M^T u (rows -> cols).
double spectral_norm_op(Eigen::Index rows, Eigen::Index cols,
                        const std::function<Vector(const Vector&)>& apply,
                        const std::function<Vector(const Vector&)>& apply_t,
                        const PowerIterationOptions& opts = {});

enum class NormIndex { Two, Inf };

// l_q norm over rows of the row-wise l_p norms.
double row_norm_p_q(const Matrix& M, NormIndex p, NormIndex q);

// W' = U V^T, kept factored (m x r each).
struct LowRankMatrix {
  Matrix U;
  Matrix V;

  Eigen::Index rows() const { return U.rows(); }
  Eigen::Index cols() const { return V.rows(); }
  Eigen::Index rank() const { return U.cols(); }
  Vector apply(const Vector& v) const;
  Vector apply_transpose(const Vector& u) const;
  Matrix dense() const;
  double frobenius_norm() const;
};

bool all_finite(const Matrix& M);

// Matrix snapshot: "RNNW", u32 version, u32 reserved, u64 rows, u64 cols
// (28 bytes, little-endian), then row-major little-endian f64.
inline constexpr std::uint32_t kSnapshotVersion = 1;
void write_matrix(std::ostream& out, const Matrix& M);
Matrix read_matrix(std::istream& in);
void save_matrix(const std::filesystem::path& path, const Matrix& M);
Matrix load_matrix(const std::filesystem::path& path);

// Least-squares fit log y = slope * log x + intercept.
struct LogLogFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_stderr = 0.0;
};
LogLogFit fit_loglog(std::span<const double> xs, std::span<const double> ys);

double median(std::vector<double> values);

}  // namespace rnnlab
