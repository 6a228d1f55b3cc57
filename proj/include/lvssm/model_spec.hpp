#pragma once

#include <Eigen/Dense>
#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace lvssm {

/// Concrete state-space matrices:
///   x_t = A x_{t-1} + B u_t + q_t,   q_t ~ N(0, Q)
///   y_t = C x_t     + D u_t + r_t,   r_t ~ N(0, R)
/// with x_0 ~ N(x0, P0).
struct ParamSet {
  Eigen::MatrixXd A, B, C, D, Q, R;
  Eigen::VectorXd x0;
  Eigen::MatrixXd P0;

  int latents() const { return static_cast<int>(A.rows()); }
  int observations() const { return static_cast<int>(C.rows()); }
  int inputs() const { return static_cast<int>(B.cols()); }

  /// Throws DataError on inconsistent dimensions, NumericalError when Q, R or
  /// P0 is not symmetric positive semi-definite.
  void validate() const;
};

struct Fixed {
  double value = 0.0;
};
struct Free {
  std::string label;
};
struct Shared {
  std::string label;
};
using Entry = std::variant<Fixed, Free, Shared>;

class ConstraintMatrix {
 public:
  ConstraintMatrix() = default;
  ConstraintMatrix(int rows, int cols, Entry fill = Fixed{0.0});

  static ConstraintMatrix fixed(const Eigen::MatrixXd& values);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  Entry& operator()(int r, int c) { return entries_.at(index(r, c)); }
  const Entry& operator()(int r, int c) const { return entries_.at(index(r, c)); }

  /// (r, c) becomes Free(label) and its mirror (c, r) Shared(label).
  void set_symmetric(int r, int c, const std::string& label);

  friend bool operator==(const ConstraintMatrix& a, const ConstraintMatrix& b);

 private:
  std::size_t index(int r, int c) const;
  int rows_ = 0;
  int cols_ = 0;
  std::vector<Entry> entries_;  // column-major
};

bool operator==(const Entry& a, const Entry& b);

/// Matrices in the order labels are scanned when packing (column-major within
/// each matrix), which lists loadings, transitions, latent covariance and
/// input effects first.
enum class MatrixId { C, A, Q, B, D, R, x0, P0 };
inline constexpr std::array<MatrixId, 8> kAllMatrices = {MatrixId::C, MatrixId::A, MatrixId::Q,
                                                        MatrixId::B, MatrixId::D, MatrixId::R,
                                                        MatrixId::x0, MatrixId::P0};
std::string_view matrix_name(MatrixId id);
std::optional<MatrixId> matrix_from_name(std::string_view name);
bool is_covariance_matrix(MatrixId id);

struct ModelSpec {
  std::string name;
  std::vector<std::string> latents;
  std::vector<std::string> observations;
  std::vector<std::string> inputs;
  ConstraintMatrix A, B, C, D, Q, R, x0, P0;
  bool standardize = true;

  int m() const { return static_cast<int>(latents.size()); }
  int n() const { return static_cast<int>(observations.size()); }
  int p() const { return static_cast<int>(inputs.size()); }

  const ConstraintMatrix& matrix(MatrixId id) const;
  ConstraintMatrix& matrix(MatrixId id);

  /// Free labels in packing order.
  std::vector<std::string> free_labels() const;
  std::size_t free_count() const { return free_labels().size(); }
};

bool operator==(const ModelSpec& a, const ModelSpec& b);

struct EntryRef {
  MatrixId matrix;
  int row;
  int col;
};

enum class ParamKind { Plain, Variance, Covariance };

/// Label -> matrix positions, precomputed from a ModelSpec.
struct ParamLayout {
  std::vector<std::string> labels;
  std::vector<std::vector<EntryRef>> positions;  // positions[k][0] is the Free entry
  std::vector<ParamKind> kinds;

  static ParamLayout from_spec(const ModelSpec& spec);
  std::optional<std::size_t> find(std::string_view label) const;
  std::size_t size() const { return labels.size(); }
};

struct PackedParams {
  std::vector<std::string> labels;
  Eigen::VectorXd values;

  double value(std::string_view label) const;
  std::optional<std::size_t> find(std::string_view label) const;
};

PackedParams pack(const ParamSet& params, const ModelSpec& spec);
ParamSet unpack(const Eigen::VectorXd& values, const ModelSpec& spec);
ParamSet unpack(const PackedParams& packed, const ModelSpec& spec);
/// Writes Fixed entries and the given free values into `out` (resized as needed).
void unpack_into(const Eigen::VectorXd& values, const ModelSpec& spec, const ParamLayout& layout,
                 ParamSet& out);

/// Label collisions, dimension mismatches, missing identification and
/// inconsistent symmetric structure; empty when the spec is valid.
std::vector<std::string> validate_spec(const ModelSpec& spec);

/// Indicator sets of the two latent constructs.
const std::vector<std::string>& stress_indicators();
const std::vector<std::string>& workload_indicators();

/// Two latents (stress, workload) with free loadings on their indicator sets,
/// free 2x2 transitions b1..b4, free input effects C11..C22, latent noise with
/// unit variances and free covariance q2, free diagonal observation noise.
ModelSpec build_two_latent_spec(const std::vector<std::string>& observations,
                                const std::vector<std::string>& inputs);

/// Same layout with latent 2's transition and input effects tied to latent 1's
/// and perfectly correlated latent noise, so both latents follow one path.
ModelSpec build_base_spec(const std::vector<std::string>& observations,
                          const std::vector<std::string>& inputs);

std::string spec_to_json(const ModelSpec& spec);
ModelSpec spec_from_json(std::string_view text);

}  // namespace lvssm
