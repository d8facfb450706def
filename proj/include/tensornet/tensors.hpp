#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "tensornet/common.hpp"
#include "tensornet/ensembles.hpp"

namespace tensornet {

/// Dense symmetric tensor of a given order over R^d, entries in row-major
/// multi-index order. A guard refuses tensors beyond 10^8 entries.
class SymmetricTensor {
 public:
  SymmetricTensor(int order, int dim)
      : order_(order), dim_(dim), data_(guarded_size(order, dim), 0.0) {}

  static std::int64_t guarded_size(int order, int dim) {
    if (order < 0) throw std::invalid_argument("tensor order must be >= 0");
    if (dim < 1) throw std::invalid_argument("tensor dim must be >= 1");
    constexpr std::int64_t kMaxEntries = 100000000;  // 10^8
    std::int64_t n = 1;
    for (int t = 0; t < order; ++t) {
      if (n > kMaxEntries / dim)
        throw guard_error("dense tensor guard: dim^order exceeds 10^8 entries (dim=" +
                          std::to_string(dim) + ", order=" + std::to_string(order) + ")");
      n *= dim;
    }
    return n;
  }

  int order() const { return order_; }
  int dim() const { return dim_; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  double operator[](std::int64_t flat) const { return data_[flat]; }
  double& operator[](std::int64_t flat) { return data_[flat]; }

  /// Largest |T[idx] - T[perm(idx)]| over adjacent-transposition pairs; zero
  /// for an exactly symmetric tensor.
  double symmetry_residual() const {
    if (order_ < 2) return 0.0;
    double worst = 0.0;
    std::vector<int> digits(order_, 0);
    for (std::int64_t flat = 0; flat < size(); ++flat) {
      for (int pos = 0; pos + 1 < order_; ++pos) {
        if (digits[pos] == digits[pos + 1]) continue;
        std::int64_t swapped = flat;
        std::int64_t stride_hi = 1, stride_lo = 1;
        for (int t = pos + 1; t < order_; ++t) stride_hi *= dim_;
        for (int t = pos + 2; t < order_; ++t) stride_lo *= dim_;
        swapped += (digits[pos + 1] - digits[pos]) * stride_hi +
                   (digits[pos] - digits[pos + 1]) * stride_lo;
        worst = std::max(worst, std::abs(data_[flat] - data_[swapped]));
      }
      for (int t = order_ - 1; t >= 0; --t) {
        if (++digits[t] < dim_) break;
        digits[t] = 0;
      }
    }
    return worst;
  }

 private:
  int order_;
  int dim_;
  std::vector<double> data_;
};

/// T = sum_i w_i^{(x) k}, materialized densely. Entries are filled in
/// parallel; each entry is written exactly once.
inline SymmetricTensor build_moment_tensor(const WeightEnsemble& e, int k) {
  SymmetricTensor t(k, e.d);
  if (k == 0) {
    t[0] = e.r;
    return t;
  }
  const Eigen::MatrixXd& w = e.W;
  const int d = e.d, r = e.r;
  parallel_for(t.size(), [&](std::int64_t lo, std::int64_t hi) {
    std::vector<int> digits(k);
    std::int64_t rem = lo;
    for (int pos = k - 1; pos >= 0; --pos) {
      digits[pos] = static_cast<int>(rem % d);
      rem /= d;
    }
    for (std::int64_t flat = lo; flat < hi; ++flat) {
      double acc = 0.0;
      for (int i = 0; i < r; ++i) {
        double prod = w(i, digits[0]);
        for (int pos = 1; pos < k; ++pos) prod *= w(i, digits[pos]);
        acc += prod;
      }
      t[flat] = acc;
      for (int pos = k - 1; pos >= 0; --pos) {
        if (++digits[pos] < d) break;
        digits[pos] = 0;
      }
    }
  });
  return t;
}

/// <T, x^{(x) k}> by direct summation over all entries.
inline double tensor_apply(const SymmetricTensor& t, const Eigen::VectorXd& x) {
  if (t.order() == 0) return t[0];
  if (x.size() != t.dim())
    throw std::invalid_argument("tensor_apply: dimension mismatch");
  const int k = t.order(), d = t.dim();
  std::vector<int> digits(k, 0);
  double acc = 0.0;
  for (std::int64_t flat = 0; flat < t.size(); ++flat) {
    double prod = t[flat];
    if (prod != 0.0)
      for (int pos = 0; pos < k; ++pos) prod *= x(digits[pos]);
    acc += prod;
    for (int pos = k - 1; pos >= 0; --pos) {
      if (++digits[pos] < d) break;
      digits[pos] = 0;
    }
  }
  return acc;
}

/// Sums the first two indices along the diagonal, producing the tensor of
/// order k-2. For moment tensors of unit-norm weights this reproduces the
/// lower-order moment tensor exactly.
inline SymmetricTensor contract_pair(const SymmetricTensor& t) {
  if (t.order() < 3)
    throw std::domain_error("contract_pair: tensor order must be >= 3");
  const int d = t.dim();
  SymmetricTensor out(t.order() - 2, d);
  std::int64_t rest = out.size();
  std::int64_t diag_stride = 0;
  {
    std::int64_t hi = rest * d;  // stride of the first index
    diag_stride = hi + rest;     // moving both leading indices together
  }
  parallel_for(rest, [&](std::int64_t lo, std::int64_t hi_) {
    for (std::int64_t f = lo; f < hi_; ++f) {
      double acc = 0.0;
      for (int j = 0; j < d; ++j) acc += t[j * diag_stride + f];
      out[f] = acc;
    }
  });
  return out;
}

namespace detail {

/// Trace over the two indices of an order-2 tensor. For a moment tensor of
/// unit-norm weights this equals r; used for the constant term of label
/// reconstruction chains.
inline double trace_pair(const SymmetricTensor& t) {
  if (t.order() != 2)
    throw std::invalid_argument("trace_pair: expects an order-2 tensor");
  double acc = 0.0;
  for (int j = 0; j < t.dim(); ++j) acc += t[j * (t.dim() + 1)];
  return acc;
}

}  // namespace detail

enum class ReductionMode { parity, two_tensor, noisy };

inline const char* to_string(ReductionMode m) {
  switch (m) {
    case ReductionMode::parity: return "parity";
    case ReductionMode::two_tensor: return "two_tensor";
    case ReductionMode::noisy: return "noisy";
  }
  return "parity";
}

/// Describes a tensor-to-label reduction.
///
/// coeffs semantics depend on mode:
///  - parity:     coeffs[j] multiplies z^j; nonzero entries must have j >= 1,
///                j <= ell and parity matching ell.
///  - two_tensor: coeffs[j] multiplies z^j for j = 0..ell+1.
///  - noisy:      coeffs[j] is the positive c_{m+j} attached to the power
///                z^{p (ell - (p-1)(m+j))}, j = 0..floor(ell/(p-1)) - m.
struct ReductionSpec {
  int ell = 3;
  ReductionMode mode = ReductionMode::parity;
  std::vector<double> coeffs;
  int p = 0;
  int m = 0;
};

inline int parity_of(int k) { return k % 2; }

inline void validate_reduction_spec(const ReductionSpec& spec) {
  if (spec.ell < 3)
    throw std::invalid_argument("reduction: ell must be >= 3");
  switch (spec.mode) {
    case ReductionMode::parity: {
      if (spec.coeffs.size() > static_cast<std::size_t>(spec.ell) + 1)
        throw std::invalid_argument(
            "reduction(parity): polynomial degree exceeds ell");
      for (std::size_t j = 0; j < spec.coeffs.size(); ++j)
        if (spec.coeffs[j] != 0.0 &&
            (j == 0 || parity_of(static_cast<int>(j)) != parity_of(spec.ell)))
          throw std::invalid_argument(
              "reduction(parity): coefficient at power " + std::to_string(j) +
              " breaks the parity constraint");
      break;
    }
    case ReductionMode::two_tensor: {
      if (spec.coeffs.size() > static_cast<std::size_t>(spec.ell) + 2)
        throw std::invalid_argument(
            "reduction(two_tensor): polynomial degree exceeds ell+1");
      break;
    }
    case ReductionMode::noisy: {
      if (spec.p < 2 || spec.p % 2 != 0 || spec.p > spec.ell + 1)
        throw std::invalid_argument(
            "reduction(noisy): p must be even and in [2, ell+1]");
      int kmax = spec.ell / (spec.p - 1);
      if (spec.m < 1 || spec.m > kmax)
        throw std::invalid_argument(
            "reduction(noisy): m must lie in [1, floor(ell/(p-1))]");
      if (spec.coeffs.size() != static_cast<std::size_t>(kmax - spec.m + 1))
        throw std::invalid_argument(
            "reduction(noisy): expected one coefficient per contraction "
            "level m..floor(ell/(p-1))");
      for (double c : spec.coeffs)
        if (!(c > 0.0))
          throw std::invalid_argument(
              "reduction(noisy): coefficients must be positive");
      break;
    }
  }
}

namespace detail {

/// The moment tensors reachable from t by repeated pair contraction, keyed
/// by order; includes the order-0 value via the trace when the chain passes
/// through order 2.
inline std::map<int, SymmetricTensor> contraction_chain(SymmetricTensor t) {
  std::map<int, SymmetricTensor> chain;
  int order = t.order();
  chain.emplace(order, std::move(t));
  while (order >= 3) {
    SymmetricTensor next = contract_pair(chain.at(order));
    order -= 2;
    chain.emplace(order, std::move(next));
  }
  if (order == 2) {
    SymmetricTensor scalar(0, chain.at(2).dim());
    scalar[0] = trace_pair(chain.at(2));
    chain.emplace(0, std::move(scalar));
  }
  return chain;
}

}  // namespace detail

/// Reconstructs network labels from moment tensors alone:
/// y_j = sum_k c_k <T^(k), x_j^{(x) k}>, with all lower-order tensors
/// obtained by repeated pair contraction of T^(ell) (and of T^(ell+1) for
/// the opposite parity in two_tensor mode).
inline Eigen::VectorXd labels_from_tensor(const ReductionSpec& spec,
                                          const SymmetricTensor& t_ell,
                                          const SymmetricTensor* t_ell_plus_1,
                                          const Eigen::MatrixXd& x) {
  validate_reduction_spec(spec);
  if (spec.mode == ReductionMode::noisy)
    throw std::invalid_argument(
        "labels_from_tensor: use noisy_labels for the noisy mode");
  if (t_ell.order() != spec.ell)
    throw std::invalid_argument("labels_from_tensor: T has order " +
                                std::to_string(t_ell.order()) +
                                ", spec says ell=" + std::to_string(spec.ell));
  if (spec.mode == ReductionMode::two_tensor) {
    if (t_ell_plus_1 == nullptr)
      throw std::invalid_argument(
          "labels_from_tensor: two_tensor mode needs the order ell+1 tensor");
    if (t_ell_plus_1->order() != spec.ell + 1 ||
        t_ell_plus_1->dim() != t_ell.dim())
      throw std::invalid_argument(
          "labels_from_tensor: second tensor has the wrong shape");
  }
  std::map<int, SymmetricTensor> chain = detail::contraction_chain(t_ell);
  if (spec.mode == ReductionMode::two_tensor) {
    auto more = detail::contraction_chain(*t_ell_plus_1);
    for (auto& kv : more) chain.emplace(kv.first, std::move(kv.second));
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(x.rows());
  for (std::size_t j = 0; j < spec.coeffs.size(); ++j) {
    double c = spec.coeffs[j];
    if (c == 0.0) continue;
    auto it = chain.find(static_cast<int>(j));
    if (it == chain.end())
      throw std::invalid_argument(
          "labels_from_tensor: no contraction chain reaches order " +
          std::to_string(j));
    for (Eigen::Index n = 0; n < x.rows(); ++n)
      out(n) += c * tensor_apply(it->second, x.row(n).transpose());
  }
  return out;
}

/// T0^(k) of order p(ell-(p-1)k): p copies of T^(ell), every pair of copies
/// sharing k contracted indices. Direct summation over the shared index
/// pattern; this is the ground-truth path and is guarded to p in {2, 4} and
/// a bounded work budget.
inline SymmetricTensor build_noisy_contraction(const SymmetricTensor& t_ell,
                                               int p, int k) {
  const int ell = t_ell.order();
  const int d = t_ell.dim();
  if (p < 2 || p % 2 != 0)
    throw std::invalid_argument("build_noisy_contraction: p must be even");
  if (p > 4)
    throw guard_error(
        "build_noisy_contraction: p > 4 is outside the implemented budget");
  if (k < 0 || ell - (p - 1) * k < 0)
    throw std::invalid_argument(
        "build_noisy_contraction: need p(ell-(p-1)k) >= 0");
  const int free_per_copy = ell - (p - 1) * k;
  const int out_order = p * free_per_copy;
  const int pairs = p * (p - 1) / 2;
  const int shared_total = pairs * k;
  double work = std::pow(static_cast<double>(d), shared_total + out_order);
  if (work > 2e9)
    throw guard_error(
        "build_noisy_contraction: contraction work exceeds the budget");
  SymmetricTensor out(out_order, d);

  // pair_index[b][c] -> position of the (b,c) shared block, b < c
  std::vector<std::array<int, 2>> pair_of(pairs);
  std::vector<std::vector<int>> block_of(p, std::vector<int>(p, -1));
  {
    int pos = 0;
    for (int b = 0; b < p; ++b)
      for (int c = b + 1; c < p; ++c) {
        block_of[b][c] = pos;
        pair_of[pos] = {b, c};
        ++pos;
      }
  }
  std::int64_t shared_count = 1;
  for (int t = 0; t < shared_total; ++t) shared_count *= d;

  parallel_for(out.size(), [&](std::int64_t lo, std::int64_t hi) {
    std::vector<int> free_digits(std::max(out_order, 1), 0);
    std::vector<int> shared_digits(std::max(shared_total, 1), 0);
    std::vector<int> arg(ell);
    for (std::int64_t flat = lo; flat < hi; ++flat) {
      std::int64_t rem = flat;
      for (int pos = out_order - 1; pos >= 0; --pos) {
        free_digits[pos] = static_cast<int>(rem % d);
        rem /= d;
      }
      double acc = 0.0;
      std::fill(shared_digits.begin(), shared_digits.end(), 0);
      for (std::int64_t s = 0; s < shared_count; ++s) {
        double prod = 1.0;
        for (int q = 0; q < p && prod != 0.0; ++q) {
          int apos = 0;
          for (int b = 0; b < q; ++b) {
            int blk = block_of[b][q];
            for (int t = 0; t < k; ++t) arg[apos++] = shared_digits[blk * k + t];
          }
          for (int t = 0; t < free_per_copy; ++t)
            arg[apos++] = free_digits[q * free_per_copy + t];
          for (int c = q + 1; c < p; ++c) {
            int blk = block_of[q][c];
            for (int t = 0; t < k; ++t) arg[apos++] = shared_digits[blk * k + t];
          }
          std::int64_t tflat = 0;
          for (int t = 0; t < ell; ++t) tflat = tflat * d + arg[t];
          prod *= t_ell[tflat];
        }
        acc += prod;
        for (int pos = shared_total - 1; pos >= 0; --pos) {
          if (++shared_digits[pos] < d) break;
          shared_digits[pos] = 0;
        }
      }
      out[flat] = acc;
    }
  });
  return out;
}

/// Weight-factorized form of the same contraction,
/// sum_{i_1..i_p} prod_{b<c} <w_{i_b}, w_{i_c}>^k  (x)_q w_{i_q}^{(x)(ell-(p-1)k)},
/// costing O(r^p d^out) instead of O(d^{shared+out}). Cross-checked against
/// the index-pattern path in the tests.
inline SymmetricTensor noisy_contraction_from_weights(const WeightEnsemble& e,
                                                      int ell, int p, int k) {
  if (p < 2 || p % 2 != 0)
    throw std::invalid_argument("noisy_contraction_from_weights: p must be even");
  if (k < 0 || ell - (p - 1) * k < 0)
    throw std::invalid_argument(
        "noisy_contraction_from_weights: need p(ell-(p-1)k) >= 0");
  const int d = e.d, r = e.r;
  const int free_per_copy = ell - (p - 1) * k;
  const int out_order = p * free_per_copy;
  SymmetricTensor out(out_order, d);
  Eigen::MatrixXd gram = e.W * e.W.transpose();
  Eigen::MatrixXd gram_k = gram.array().pow(k).matrix();
  std::vector<int> tuple(p, 0);
  const std::int64_t tuples = [&] {
    std::int64_t n = 1;
    for (int q = 0; q < p; ++q) n *= r;
    return n;
  }();
  std::vector<int> digits(std::max(out_order, 1), 0);
  for (std::int64_t ti = 0; ti < tuples; ++ti) {
    double coef = 1.0;
    for (int b = 0; b < p && coef != 0.0; ++b)
      for (int c = b + 1; c < p; ++c) coef *= gram_k(tuple[b], tuple[c]);
    if (coef != 0.0) {
      std::fill(digits.begin(), digits.end(), 0);
      for (std::int64_t flat = 0; flat < out.size(); ++flat) {
        double prod = coef;
        for (int pos = 0; pos < out_order; ++pos)
          prod *= e.W(tuple[pos / free_per_copy], digits[pos]);
        out[flat] += prod;
        for (int pos = out_order - 1; pos >= 0; --pos) {
          if (++digits[pos] < d) break;
          digits[pos] = 0;
        }
      }
    }
    for (int q = p - 1; q >= 0; --q) {
      if (++tuple[q] < r) break;
      tuple[q] = 0;
    }
  }
  return out;
}

/// Labels built from the contracted tensors, the clean reference network
/// output, and the multiplicative error certificate
/// |label - clean| <= (delta^m r)^{p-1} clean. The teacher enters only the
/// clean reference and the certificate constants.
struct NoisyLabels {
  Eigen::VectorXd labels;
  Eigen::VectorXd clean;
  bool error_bound_ok = false;
  double max_abs_error = 0.0;
  double max_bound_rhs = 0.0;
};

inline NoisyLabels noisy_labels(const ReductionSpec& spec,
                                const SymmetricTensor& t_ell,
                                const Eigen::MatrixXd& x,
                                const WeightEnsemble& teacher) {
  validate_reduction_spec(spec);
  if (spec.mode != ReductionMode::noisy)
    throw std::invalid_argument("noisy_labels: spec mode must be noisy");
  if (t_ell.order() != spec.ell)
    throw std::invalid_argument("noisy_labels: tensor order does not match ell");
  const int kmax = spec.ell / (spec.p - 1);
  NoisyLabels out;
  out.labels = Eigen::VectorXd::Zero(x.rows());
  for (int k = spec.m; k <= kmax; ++k) {
    double c = spec.coeffs[static_cast<std::size_t>(k - spec.m)];
    SymmetricTensor t0 = build_noisy_contraction(t_ell, spec.p, k);
    for (Eigen::Index n = 0; n < x.rows(); ++n)
      out.labels(n) += c * tensor_apply(t0, x.row(n).transpose());
  }
  // clean reference: sigma(z) = sum_k c_k z^{p(ell-(p-1)k)}
  out.clean = Eigen::VectorXd::Zero(x.rows());
  Eigen::MatrixXd proj = x * teacher.W.transpose();
  for (Eigen::Index n = 0; n < x.rows(); ++n) {
    double acc = 0.0;
    for (int i = 0; i < teacher.r; ++i) {
      double z = proj(n, i);
      for (int k = spec.m; k <= kmax; ++k) {
        int power = spec.p * (spec.ell - (spec.p - 1) * k);
        acc += spec.coeffs[static_cast<std::size_t>(k - spec.m)] *
               std::pow(z, power);
      }
    }
    out.clean(n) = acc;
  }
  AssumptionReport rep = check_assumptions(teacher);
  double factor =
      std::pow(std::pow(rep.delta, spec.m) * teacher.r, spec.p - 1);
  out.error_bound_ok = true;
  for (Eigen::Index n = 0; n < x.rows(); ++n) {
    double err = std::abs(out.labels(n) - out.clean(n));
    double rhs = factor * out.clean(n);
    out.max_abs_error = std::max(out.max_abs_error, err);
    out.max_bound_rhs = std::max(out.max_bound_rhs, rhs);
    if (err > rhs + 1e-9) out.error_bound_ok = false;
  }
  return out;
}

/// Provenance recorded in the JSON sidecar next to a tensor file.
struct TensorProvenance {
  std::string ensemble_kind = "custom";
  std::uint64_t seed = 0;
};

/// Flat binary layout: magic "SYMT", u32 version, u32 order, u32 dim, then
/// dim^order little-endian doubles. A JSON sidecar at path + ".json" records
/// the provenance.
inline void save_tensor(const std::string& path, const SymmetricTensor& t,
                        const TensorProvenance& prov = {}) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_tensor: cannot open " + path);
  f.write("SYMT", 4);
  std::uint32_t header[3] = {1u, static_cast<std::uint32_t>(t.order()),
                             static_cast<std::uint32_t>(t.dim())};
  f.write(reinterpret_cast<const char*>(header), sizeof(header));
  f.write(reinterpret_cast<const char*>(t.data().data()),
          static_cast<std::streamsize>(t.size() * sizeof(double)));
  std::ofstream side(path + ".json");
  side << "{\n  \"ensemble_kind\": \"" << prov.ensemble_kind
       << "\",\n  \"seed\": " << prov.seed << ",\n  \"order\": " << t.order()
       << ",\n  \"dim\": " << t.dim() << "\n}\n";
}

inline SymmetricTensor load_tensor(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_tensor: cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "SYMT", 4) != 0)
    throw std::runtime_error("load_tensor: bad magic in " + path);
  std::uint32_t header[3];
  f.read(reinterpret_cast<char*>(header), sizeof(header));
  if (!f || header[0] != 1u)
    throw std::runtime_error("load_tensor: unsupported version in " + path);
  SymmetricTensor t(static_cast<int>(header[1]), static_cast<int>(header[2]));
  f.read(reinterpret_cast<char*>(t.data().data()),
         static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!f) throw std::runtime_error("load_tensor: truncated file " + path);
  return t;
}

}  // namespace tensornet
