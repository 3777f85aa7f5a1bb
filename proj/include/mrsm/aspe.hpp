#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "mrsm/types.hpp"

namespace mrsm {

// Secret material for one partition: the split indicator and two invertible
// matrices, stored together with their inverses.
struct PartitionKey {
  std::vector<std::uint8_t> split;
  Matrix m1, m2;
  Matrix m1_inv, m2_inv;

  std::size_t dim() const { return split.size(); }
};

struct SecretKey {
  std::vector<PartitionKey> partitions;

  std::size_t size() const { return partitions.size(); }
  const PartitionKey& operator[](PartitionId p) const { return partitions.at(p); }
};

struct KeyOptions {
  double condition_cap = 1e6;  // 1-norm condition number
  int max_attempts = 16;
  int factor_pairs = 3;        // M = (L1 U1)(L2 U2)(L3 U3)
};

// Each matrix is a product of unit lower/upper triangular factors with
// off-diagonal entries uniform in [-1, 1] / sqrt(dim), so it is invertible
// by construction and its inverse is the reversed product of the factor
// inverses.
PartitionKey generate_partition_key(std::size_t dim, Rng& rng, const KeyOptions& options = {});
SecretKey keygen(std::span<const std::size_t> dims, std::uint64_t seed,
                 const KeyOptions& options = {});

// Fresh key for a sub-dictionary grown by `added` keywords. Every ciphertext
// of the partition has to be re-encrypted under the result.
PartitionKey extend_key(const PartitionKey& old, std::size_t added, std::uint64_t seed,
                        const KeyOptions& options = {});

// S = 0, M = identity. Encryption becomes a plain copy; for tests.
PartitionKey identity_key(std::size_t dim);

double condition_number(const Matrix& m, const Matrix& inverse);

struct EncryptedVector {
  Vector c1, c2;
};

struct Trapdoor {
  Vector t1, t2;
};

// S[t] = 0: both halves copy v[t]; S[t] = 1: v1[t] ~ U(0,1), v2[t] = v[t] - v1[t].
// Then c1 = M1^T v1, c2 = M2^T v2.
EncryptedVector encrypt_vector(const Vector& v, const PartitionKey& key, Rng& rng);

// Column-wise batch form of encrypt_vector (one GEMM per half).
std::vector<EncryptedVector> encrypt_columns(const Matrix& columns, const PartitionKey& key,
                                             Rng& rng);

// Inverse transform and merge of the two halves.
Vector decrypt_vector(const EncryptedVector& e, const PartitionKey& key);

// Complementary split (S[t] = 0: random split; S[t] = 1: copy), then
// t1 = M1^-1 q1, t2 = M2^-1 q2. Query entries must be non-negative.
Trapdoor make_trapdoor(const Vector& q, const PartitionKey& key, Rng& rng);

// c1.t1 + c2.t2, which equals the plaintext inner product v.q.
double score(const EncryptedVector& e, const Trapdoor& t);

void write_key(std::ostream& out, const SecretKey& key);
SecretKey read_key(std::istream& in);

}  // namespace mrsm
