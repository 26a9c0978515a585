#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dsiml {

/// Dense row-major matrix of real-valued user or item vectors.
class EmbeddingMatrix {
public:
    EmbeddingMatrix() = default;
    EmbeddingMatrix(std::size_t rows, std::size_t dim)
        : rows_(rows), dim_(dim), values_(rows * dim, 0.0) {}

    static EmbeddingMatrix random_uniform(std::size_t rows, std::size_t dim,
                                          std::uint64_t seed, double lo = -1.0,
                                          double hi = 1.0);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t dim() const noexcept { return dim_; }

    std::span<double> row(std::size_t r) { return {values_.data() + r * dim_, dim_}; }
    std::span<const double> row(std::size_t r) const {
        return {values_.data() + r * dim_, dim_};
    }

    std::vector<double>& values() noexcept { return values_; }
    const std::vector<double>& values() const noexcept { return values_; }

    bool all_finite() const;
    std::uint64_t checksum() const;

    bool operator==(const EmbeddingMatrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t dim_ = 0;
    std::vector<double> values_;
};

/// Bit-packed matrix of ±1 codes, one row per user or item.
///
/// Layout: each row occupies ceil(dim/64) little-endian words; logical entry
/// k of a row lives at bit (k % 64) of word (k / 64), bit 1 meaning +1 and
/// bit 0 meaning -1. Bits past `dim` in the final word of a row are kept at
/// zero so xor/popcount over whole words is exact.
class BinaryCodeMatrix {
public:
    BinaryCodeMatrix() = default;
    BinaryCodeMatrix(std::size_t rows, std::size_t dim);

    static BinaryCodeMatrix random(std::size_t rows, std::size_t dim, std::uint64_t seed);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t dim() const noexcept { return dim_; }
    std::size_t words_per_row() const noexcept { return words_per_row_; }

    /// Logical entry, +1 or -1.
    int get(std::size_t row, std::size_t k) const;
    void set(std::size_t row, std::size_t k, int sign);

    std::span<const std::uint64_t> row_words(std::size_t row) const {
        return {words_.data() + row * words_per_row_, words_per_row_};
    }

    void set_row(std::size_t row, std::span<const int> signs);
    std::vector<int> row_signs(std::size_t row) const;

    std::uint64_t checksum() const;

    bool operator==(const BinaryCodeMatrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t dim_ = 0;
    std::size_t words_per_row_ = 0;
    std::vector<std::uint64_t> words_;
};

/// b^T d of two ±1 rows, in [-d, d]; throws std::invalid_argument on
/// dimension mismatch. Computed as d - 2*popcount(xor).
int inner_product(const BinaryCodeMatrix& a, std::size_t row_a,
                  const BinaryCodeMatrix& b, std::size_t row_b);

/// Number of differing coordinates, in [0, d]; equals (d - inner)/2.
int hamming_distance(const BinaryCodeMatrix& a, std::size_t row_a,
                     const BinaryCodeMatrix& b, std::size_t row_b);

/// Angle between two codes, arccos(b^T d / dim); derived from the inner
/// product, never stored. Monotone in the Hamming distance.
double code_angle(const BinaryCodeMatrix& a, std::size_t row_a,
                  const BinaryCodeMatrix& b, std::size_t row_b);

/// Entry-wise sign with sign(0) = +1.
BinaryCodeMatrix sign_quantize(const EmbeddingMatrix& e);

// Code file format: magic "DSML", u32 LE version (1), u64 LE rows, u32 LE
// dim, then rows * ceil(dim/8) payload bytes (row-major, LSB-first within
// each byte, zero padding). Embedding files use magic "DSMR" with the same
// header followed by rows*dim IEEE f64 LE values.
void save_codes(const BinaryCodeMatrix& m, const std::string& path);
BinaryCodeMatrix load_codes(const std::string& path);
void save_embeddings(const EmbeddingMatrix& m, const std::string& path);
EmbeddingMatrix load_embeddings(const std::string& path);

}  // namespace dsiml
