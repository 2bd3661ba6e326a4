#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "pyramid/errors.hpp"

namespace pyramid {

struct Dataset {
    std::size_t dim = 0;
    std::size_t count = 0;
    std::vector<float> data;  // count x dim, row major

    std::span<const float> row(std::size_t i) const { return {data.data() + i * dim, dim}; }
    std::span<float> row(std::size_t i) { return {data.data() + i * dim, dim}; }
};

struct IntDataset {
    std::size_t dim = 0;
    std::size_t count = 0;
    std::vector<std::int32_t> data;

    std::span<const std::int32_t> row(std::size_t i) const {
        return {data.data() + i * dim, dim};
    }
};

enum class VecFormat { Fvecs, Bvecs, Ivecs };

VecFormat vec_format_from_string(const std::string& s);

/// fvecs/bvecs records: 4-byte little-endian dim, then dim elements
/// (f32 / u8, bytes widened to float). Throws FormatError with the byte
/// offset of the first malformed record.
Dataset read_vectors(const std::filesystem::path& path, VecFormat format);
IntDataset read_ivecs(const std::filesystem::path& path);

void write_fvecs(const std::filesystem::path& path, const Dataset& ds);
void write_ivecs(const std::filesystem::path& path, const IntDataset& ds);

/// Seeded synthetic generators for desk-scale benchmarks.
Dataset gen_uniform(std::size_t n, std::size_t dim, std::uint64_t seed);
Dataset gen_gaussian_mixture(std::size_t n, std::size_t dim, std::size_t clusters,
                             double cluster_sigma, std::uint64_t seed);
/// Random unit directions scaled by log-normal norms (MIPS stress set).
Dataset gen_lognormal_norm(std::size_t n, std::size_t dim, double log_sigma,
                           std::uint64_t seed);

}  // namespace pyramid
