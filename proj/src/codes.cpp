#include "dsiml/codes.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "dsiml/error.hpp"
#include "dsiml/rng.hpp"

namespace dsiml {

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = kFnvOffset) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= kFnvPrime;
    }
    return h;
}

void write_bytes(std::ofstream& out, const void* data, std::size_t n) {
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

void write_u32le(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    write_bytes(out, b, 4);
}

void write_u64le(std::ofstream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    write_bytes(out, b, 8);
}

void read_bytes(std::ifstream& in, void* data, std::size_t n, const std::string& path) {
    in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) {
        throw DataError("truncated file: " + path);
    }
}

std::uint32_t read_u32le(std::ifstream& in, const std::string& path) {
    unsigned char b[4];
    read_bytes(in, b, 4, path);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t read_u64le(std::ifstream& in, const std::string& path) {
    unsigned char b[8];
    read_bytes(in, b, 8, path);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

void check_header(std::ifstream& in, const std::string& path, const char expected_magic[4]) {
    char magic[4];
    read_bytes(in, magic, 4, path);
    if (std::memcmp(magic, expected_magic, 4) != 0) {
        throw DataError("bad magic in " + path + " (expected " +
                        std::string(expected_magic, 4) + ")");
    }
    const std::uint32_t version = read_u32le(in, path);
    if (version != 1) {
        throw DataError("unsupported version " + std::to_string(version) + " in " + path);
    }
}

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    return in;
}

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path);
    return out;
}

}  // namespace

EmbeddingMatrix EmbeddingMatrix::random_uniform(std::size_t rows, std::size_t dim,
                                                std::uint64_t seed, double lo, double hi) {
    EmbeddingMatrix m(rows, dim);
    Rng rng(seed);
    for (double& v : m.values_) v = rng.next_uniform(lo, hi);
    return m;
}

bool EmbeddingMatrix::all_finite() const {
    for (double v : values_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::uint64_t EmbeddingMatrix::checksum() const {
    std::uint64_t h = fnv1a(&rows_, sizeof(rows_));
    h = fnv1a(&dim_, sizeof(dim_), h);
    return fnv1a(values_.data(), values_.size() * sizeof(double), h);
}

BinaryCodeMatrix::BinaryCodeMatrix(std::size_t rows, std::size_t dim)
    : rows_(rows), dim_(dim), words_per_row_((dim + 63) / 64),
      words_(rows * ((dim + 63) / 64), 0) {}

BinaryCodeMatrix BinaryCodeMatrix::random(std::size_t rows, std::size_t dim,
                                          std::uint64_t seed) {
    BinaryCodeMatrix m(rows, dim);
    Rng rng(seed);
    const std::uint64_t tail_mask =
        (dim % 64) ? ((std::uint64_t{1} << (dim % 64)) - 1) : ~std::uint64_t{0};
    for (std::size_t r = 0; r < rows; ++r) {
        std::uint64_t* w = m.words_.data() + r * m.words_per_row_;
        for (std::size_t k = 0; k < m.words_per_row_; ++k) w[k] = rng.next_u64();
        if (m.words_per_row_ > 0) w[m.words_per_row_ - 1] &= tail_mask;
    }
    return m;
}

int BinaryCodeMatrix::get(std::size_t row, std::size_t k) const {
    const std::uint64_t word = words_[row * words_per_row_ + k / 64];
    return (word >> (k % 64)) & 1 ? 1 : -1;
}

void BinaryCodeMatrix::set(std::size_t row, std::size_t k, int sign) {
    std::uint64_t& word = words_[row * words_per_row_ + k / 64];
    const std::uint64_t bit = std::uint64_t{1} << (k % 64);
    if (sign > 0) {
        word |= bit;
    } else {
        word &= ~bit;
    }
}

void BinaryCodeMatrix::set_row(std::size_t row, std::span<const int> signs) {
    if (signs.size() != dim_) {
        throw std::invalid_argument("set_row: expected " + std::to_string(dim_) +
                                    " signs, got " + std::to_string(signs.size()));
    }
    std::uint64_t* w = words_.data() + row * words_per_row_;
    std::fill(w, w + words_per_row_, 0);
    for (std::size_t k = 0; k < dim_; ++k) {
        if (signs[k] > 0) w[k / 64] |= std::uint64_t{1} << (k % 64);
    }
}

std::vector<int> BinaryCodeMatrix::row_signs(std::size_t row) const {
    std::vector<int> out(dim_);
    for (std::size_t k = 0; k < dim_; ++k) out[k] = get(row, k);
    return out;
}

std::uint64_t BinaryCodeMatrix::checksum() const {
    std::uint64_t h = fnv1a(&rows_, sizeof(rows_));
    h = fnv1a(&dim_, sizeof(dim_), h);
    return fnv1a(words_.data(), words_.size() * sizeof(std::uint64_t), h);
}

namespace {

void check_same_dim(const BinaryCodeMatrix& a, const BinaryCodeMatrix& b) {
    if (a.dim() != b.dim()) {
        throw std::invalid_argument("code dimension mismatch: " + std::to_string(a.dim()) +
                                    " vs " + std::to_string(b.dim()));
    }
}

}  // namespace

int inner_product(const BinaryCodeMatrix& a, std::size_t row_a,
                  const BinaryCodeMatrix& b, std::size_t row_b) {
    check_same_dim(a, b);
    return static_cast<int>(a.dim()) - 2 * hamming_distance(a, row_a, b, row_b);
}

int hamming_distance(const BinaryCodeMatrix& a, std::size_t row_a,
                     const BinaryCodeMatrix& b, std::size_t row_b) {
    check_same_dim(a, b);
    const auto wa = a.row_words(row_a);
    const auto wb = b.row_words(row_b);
    int dist = 0;
    for (std::size_t k = 0; k < wa.size(); ++k) {
        dist += std::popcount(wa[k] ^ wb[k]);
    }
    return dist;
}

double code_angle(const BinaryCodeMatrix& a, std::size_t row_a,
                  const BinaryCodeMatrix& b, std::size_t row_b) {
    const double cosine = static_cast<double>(inner_product(a, row_a, b, row_b)) /
                          static_cast<double>(a.dim());
    return std::acos(std::clamp(cosine, -1.0, 1.0));
}

BinaryCodeMatrix sign_quantize(const EmbeddingMatrix& e) {
    BinaryCodeMatrix m(e.rows(), e.dim());
    for (std::size_t r = 0; r < e.rows(); ++r) {
        const auto row = e.row(r);
        for (std::size_t k = 0; k < e.dim(); ++k) {
            if (row[k] >= 0.0) m.set(r, k, 1);
        }
    }
    return m;
}

void save_codes(const BinaryCodeMatrix& m, const std::string& path) {
    auto out = open_output(path);
    write_bytes(out, "DSML", 4);
    write_u32le(out, 1);
    write_u64le(out, m.rows());
    write_u32le(out, static_cast<std::uint32_t>(m.dim()));
    const std::size_t bytes_per_row = (m.dim() + 7) / 8;
    std::vector<unsigned char> buf(bytes_per_row);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const auto words = m.row_words(r);
        for (std::size_t j = 0; j < bytes_per_row; ++j) {
            buf[j] = static_cast<unsigned char>(words[j / 8] >> (8 * (j % 8)));
        }
        write_bytes(out, buf.data(), bytes_per_row);
    }
    if (!out) throw DataError("write failed: " + path);
}

BinaryCodeMatrix load_codes(const std::string& path) {
    auto in = open_input(path);
    check_header(in, path, "DSML");
    const std::uint64_t rows = read_u64le(in, path);
    const std::uint32_t dim = read_u32le(in, path);
    BinaryCodeMatrix m(rows, dim);
    const std::size_t bytes_per_row = (dim + 7u) / 8u;
    std::vector<unsigned char> buf(bytes_per_row);
    for (std::size_t r = 0; r < rows; ++r) {
        read_bytes(in, buf.data(), bytes_per_row, path);
        for (std::size_t j = 0; j < bytes_per_row; ++j) {
            for (int bit = 0; bit < 8; ++bit) {
                const std::size_t k = j * 8 + static_cast<std::size_t>(bit);
                const bool on = (buf[j] >> bit) & 1;
                if (k >= dim) {
                    if (on) throw DataError("nonzero padding bits in " + path);
                    continue;
                }
                if (on) m.set(r, k, 1);
            }
        }
    }
    return m;
}

void save_embeddings(const EmbeddingMatrix& m, const std::string& path) {
    auto out = open_output(path);
    write_bytes(out, "DSMR", 4);
    write_u32le(out, 1);
    write_u64le(out, m.rows());
    write_u32le(out, static_cast<std::uint32_t>(m.dim()));
    for (double v : m.values()) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        write_u64le(out, bits);
    }
    if (!out) throw DataError("write failed: " + path);
}

EmbeddingMatrix load_embeddings(const std::string& path) {
    auto in = open_input(path);
    check_header(in, path, "DSMR");
    const std::uint64_t rows = read_u64le(in, path);
    const std::uint32_t dim = read_u32le(in, path);
    EmbeddingMatrix m(rows, dim);
    for (double& v : m.values()) {
        const std::uint64_t bits = read_u64le(in, path);
        std::memcpy(&v, &bits, sizeof v);
    }
    if (!m.all_finite()) throw DataError("non-finite values in " + path);
    return m;
}

}  // namespace dsiml
