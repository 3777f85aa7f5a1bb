#include "mrsm/aspe.hpp"

#include <cmath>
#include <istream>
#include <ostream>

#include "mrsm/io.hpp"

namespace mrsm {
namespace {

constexpr std::string_view kKeyMagic = "MRSMKEY";
constexpr std::uint32_t kKeyVersion = 1;

Matrix unit_triangular(std::size_t dim, bool lower, Rng& rng) {
  const auto n = static_cast<Eigen::Index>(dim);
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  std::uniform_real_distribution<double> entry(-bound, bound);
  Matrix t = Matrix::Identity(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < i; ++j) {
      if (lower) {
        t(i, j) = entry(rng);
      } else {
        t(j, i) = entry(rng);
      }
    }
  }
  return t;
}

// Returns {M, M^-1}.
std::pair<Matrix, Matrix> invertible_matrix(std::size_t dim, int pairs, Rng& rng) {
  const auto n = static_cast<Eigen::Index>(dim);
  Matrix m = Matrix::Identity(n, n);
  Matrix inv = Matrix::Identity(n, n);
  const Matrix identity = Matrix::Identity(n, n);
  for (int p = 0; p < pairs; ++p) {
    const Matrix lower = unit_triangular(dim, true, rng);
    const Matrix upper = unit_triangular(dim, false, rng);
    m = (m * lower.triangularView<Eigen::UnitLower>()).eval();
    m = (m * upper.triangularView<Eigen::UnitUpper>()).eval();
    const Matrix lower_inv = lower.triangularView<Eigen::UnitLower>().solve(identity);
    const Matrix upper_inv = upper.triangularView<Eigen::UnitUpper>().solve(identity);
    inv = (lower_inv.triangularView<Eigen::UnitLower>() * inv).eval();
    inv = (upper_inv.triangularView<Eigen::UnitUpper>() * inv).eval();
  }
  return {std::move(m), std::move(inv)};
}

void check_dim(Eigen::Index got, const PartitionKey& key, const char* what) {
  if (got != static_cast<Eigen::Index>(key.dim())) {
    throw Error(std::string(what) + ": dimension " + std::to_string(got) +
                " does not match key dimension " + std::to_string(key.dim()));
  }
}

}  // namespace

double condition_number(const Matrix& m, const Matrix& inverse) {
  const double a = m.cwiseAbs().colwise().sum().maxCoeff();
  const double b = inverse.cwiseAbs().colwise().sum().maxCoeff();
  return a * b;
}

PartitionKey generate_partition_key(std::size_t dim, Rng& rng, const KeyOptions& options) {
  if (dim == 0) throw Error("key dimension must be at least 1");
  for (int attempt = 0; attempt < options.max_attempts; ++attempt) {
    PartitionKey key;
    key.split.resize(dim);
    std::bernoulli_distribution coin(0.5);
    for (auto& s : key.split) s = coin(rng) ? 1 : 0;
    auto [m1, m1_inv] = invertible_matrix(dim, options.factor_pairs, rng);
    auto [m2, m2_inv] = invertible_matrix(dim, options.factor_pairs, rng);
    if (condition_number(m1, m1_inv) > options.condition_cap ||
        condition_number(m2, m2_inv) > options.condition_cap) {
      continue;
    }
    key.m1 = std::move(m1);
    key.m2 = std::move(m2);
    key.m1_inv = std::move(m1_inv);
    key.m2_inv = std::move(m2_inv);
    return key;
  }
  throw Error("could not generate a key of dimension " + std::to_string(dim) +
              " under the condition-number cap");
}

SecretKey keygen(std::span<const std::size_t> dims, std::uint64_t seed,
                 const KeyOptions& options) {
  SecretKey key;
  for (std::size_t p = 0; p < dims.size(); ++p) {
    Rng rng = make_rng(seed, 1000 + p);
    key.partitions.push_back(generate_partition_key(dims[p], rng, options));
  }
  return key;
}

PartitionKey extend_key(const PartitionKey& old, std::size_t added, std::uint64_t seed,
                        const KeyOptions& options) {
  if (added == 0) throw Error("extend_key needs at least one new keyword");
  Rng rng = make_rng(seed, 2000 + old.dim());
  return generate_partition_key(old.dim() + added, rng, options);
}

PartitionKey identity_key(std::size_t dim) {
  const auto n = static_cast<Eigen::Index>(dim);
  PartitionKey key;
  key.split.assign(dim, 0);
  key.m1 = key.m2 = key.m1_inv = key.m2_inv = Matrix::Identity(n, n);
  return key;
}

EncryptedVector encrypt_vector(const Vector& v, const PartitionKey& key, Rng& rng) {
  check_dim(v.size(), key, "encrypt");
  Vector v1 = v, v2 = v;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Eigen::Index t = 0; t < v.size(); ++t) {
    if (key.split[static_cast<std::size_t>(t)]) {
      v1[t] = unit(rng);
      v2[t] = v[t] - v1[t];
    }
  }
  return {key.m1.transpose() * v1, key.m2.transpose() * v2};
}

std::vector<EncryptedVector> encrypt_columns(const Matrix& columns, const PartitionKey& key,
                                             Rng& rng) {
  check_dim(columns.rows(), key, "encrypt");
  Matrix a = columns, b = columns;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Eigen::Index c = 0; c < columns.cols(); ++c) {
    for (Eigen::Index t = 0; t < columns.rows(); ++t) {
      if (key.split[static_cast<std::size_t>(t)]) {
        a(t, c) = unit(rng);
        b(t, c) = columns(t, c) - a(t, c);
      }
    }
  }
  const Matrix c1 = key.m1.transpose() * a;
  const Matrix c2 = key.m2.transpose() * b;
  std::vector<EncryptedVector> out;
  out.reserve(static_cast<std::size_t>(columns.cols()));
  for (Eigen::Index c = 0; c < columns.cols(); ++c) out.push_back({c1.col(c), c2.col(c)});
  return out;
}

Vector decrypt_vector(const EncryptedVector& e, const PartitionKey& key) {
  check_dim(e.c1.size(), key, "decrypt");
  const Vector v1 = key.m1_inv.transpose() * e.c1;
  const Vector v2 = key.m2_inv.transpose() * e.c2;
  Vector v(v1.size());
  for (Eigen::Index t = 0; t < v.size(); ++t) {
    v[t] = key.split[static_cast<std::size_t>(t)] ? v1[t] + v2[t] : 0.5 * (v1[t] + v2[t]);
  }
  return v;
}

Trapdoor make_trapdoor(const Vector& q, const PartitionKey& key, Rng& rng) {
  check_dim(q.size(), key, "trapdoor");
  for (Eigen::Index t = 0; t < q.size(); ++t) {
    if (!(q[t] >= 0.0)) {
      throw Error("query entry " + std::to_string(t) + " is negative; tree pruning needs q >= 0");
    }
  }
  Vector q1 = q, q2 = q;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Eigen::Index t = 0; t < q.size(); ++t) {
    if (!key.split[static_cast<std::size_t>(t)]) {
      q1[t] = unit(rng);
      q2[t] = q[t] - q1[t];
    }
  }
  return {key.m1_inv * q1, key.m2_inv * q2};
}

double score(const EncryptedVector& e, const Trapdoor& t) {
  if (e.c1.size() != t.t1.size() || e.c2.size() != t.t2.size()) {
    throw Error("score: ciphertext and trapdoor dimensions differ");
  }
  return e.c1.dot(t.t1) + e.c2.dot(t.t2);
}

void write_key(std::ostream& out, const SecretKey& key) {
  io::BinaryWriter w(out);
  io::write_header(w, kKeyMagic, kKeyVersion);
  w.u64(key.size());
  for (const auto& part : key.partitions) {
    w.u64(part.dim());
    for (auto s : part.split) w.u8(s);
    w.matrix(part.m1);
    w.matrix(part.m2);
    w.matrix(part.m1_inv);
    w.matrix(part.m2_inv);
  }
}

SecretKey read_key(std::istream& in) {
  io::BinaryReader r(in);
  r.expect_header(kKeyMagic, kKeyVersion);
  SecretKey key;
  const auto count = r.u64();
  for (std::uint64_t p = 0; p < count; ++p) {
    PartitionKey part;
    const auto dim = r.u64();
    part.split.resize(dim);
    for (auto& s : part.split) {
      s = r.u8();
      if (s > 1) throw Error("key file: split indicator must be 0/1");
    }
    part.m1 = r.matrix();
    part.m2 = r.matrix();
    part.m1_inv = r.matrix();
    part.m2_inv = r.matrix();
    for (const Matrix* m : {&part.m1, &part.m2, &part.m1_inv, &part.m2_inv}) {
      if (m->rows() != static_cast<Eigen::Index>(dim) || m->cols() != m->rows()) {
        throw Error("key file: matrix shape does not match dimension");
      }
    }
    key.partitions.push_back(std::move(part));
  }
  return key;
}

}  // namespace mrsm
