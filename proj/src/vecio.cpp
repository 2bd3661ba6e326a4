#include "pyramid/vecio.hpp"

#include <cstring>
#include <fstream>
#include <random>

namespace pyramid {

namespace {

std::vector<char> read_all(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary | std::ios::ate);
    if (!is) throw FormatError("cannot open: " + path.string(), 0);
    const std::streamsize size = is.tellg();
    is.seekg(0);
    std::vector<char> buf(static_cast<std::size_t>(size), '\0');
    if (size > 0) is.read(buf.data(), size);
    if (!is) throw FormatError("read failed: " + path.string(), 0);
    return buf;
}

std::int32_t header_at(const std::vector<char>& buf, std::size_t off) {
    std::int32_t d = 0;
    std::memcpy(&d, buf.data() + off, 4);
    return d;
}

}  // namespace

VecFormat vec_format_from_string(const std::string& s) {
    if (s == "fvecs") return VecFormat::Fvecs;
    if (s == "bvecs") return VecFormat::Bvecs;
    if (s == "ivecs") return VecFormat::Ivecs;
    throw ConfigError("unknown vector format: " + s);
}

Dataset read_vectors(const std::filesystem::path& path, VecFormat format) {
    if (format == VecFormat::Ivecs)
        throw ConfigError("read_vectors: use read_ivecs for integer files");
    const std::size_t elem = format == VecFormat::Fvecs ? 4 : 1;
    const auto buf = read_all(path);

    Dataset ds;
    std::size_t off = 0;
    while (off < buf.size()) {
        if (off + 4 > buf.size()) throw FormatError("truncated record header", off);
        const std::int32_t d = header_at(buf, off);
        if (d <= 0) throw FormatError("nonpositive dimension", off);
        if (ds.dim == 0)
            ds.dim = std::size_t(d);
        else if (std::size_t(d) != ds.dim)
            throw FormatError("inconsistent dimension", off);
        const std::size_t body = std::size_t(d) * elem;
        if (off + 4 + body > buf.size()) throw FormatError("truncated record body", off);
        const char* p = buf.data() + off + 4;
        if (format == VecFormat::Fvecs) {
            const std::size_t old = ds.data.size();
            ds.data.resize(old + std::size_t(d));
            std::memcpy(ds.data.data() + old, p, body);
        } else {
            for (std::int32_t i = 0; i < d; ++i)
                ds.data.push_back(float(std::uint8_t(p[i])));
        }
        ds.count++;
        off += 4 + body;
    }
    return ds;
}

IntDataset read_ivecs(const std::filesystem::path& path) {
    const auto buf = read_all(path);
    IntDataset ds;
    std::size_t off = 0;
    while (off < buf.size()) {
        if (off + 4 > buf.size()) throw FormatError("truncated record header", off);
        const std::int32_t d = header_at(buf, off);
        if (d <= 0) throw FormatError("nonpositive dimension", off);
        if (ds.dim == 0)
            ds.dim = std::size_t(d);
        else if (std::size_t(d) != ds.dim)
            throw FormatError("inconsistent dimension", off);
        const std::size_t body = std::size_t(d) * 4;
        if (off + 4 + body > buf.size()) throw FormatError("truncated record body", off);
        const std::size_t old = ds.data.size();
        ds.data.resize(old + std::size_t(d));
        std::memcpy(ds.data.data() + old, buf.data() + off + 4, body);
        ds.count++;
        off += 4 + body;
    }
    return ds;
}

void write_fvecs(const std::filesystem::path& path, const Dataset& ds) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("cannot open for write: " + path.string(), 0);
    const std::int32_t d = std::int32_t(ds.dim);
    for (std::size_t i = 0; i < ds.count; ++i) {
        os.write(reinterpret_cast<const char*>(&d), 4);
        os.write(reinterpret_cast<const char*>(ds.data.data() + i * ds.dim),
                 std::streamsize(ds.dim * 4));
    }
    if (!os) throw FormatError("write failed: " + path.string(), 0);
}

void write_ivecs(const std::filesystem::path& path, const IntDataset& ds) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("cannot open for write: " + path.string(), 0);
    const std::int32_t d = std::int32_t(ds.dim);
    for (std::size_t i = 0; i < ds.count; ++i) {
        os.write(reinterpret_cast<const char*>(&d), 4);
        os.write(reinterpret_cast<const char*>(ds.data.data() + i * ds.dim),
                 std::streamsize(ds.dim * 4));
    }
    if (!os) throw FormatError("write failed: " + path.string(), 0);
}

Dataset gen_uniform(std::size_t n, std::size_t dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    Dataset ds{dim, n, {}};
    ds.data.reserve(n * dim);
    for (std::size_t i = 0; i < n * dim; ++i) ds.data.push_back(float(dist(rng)));
    return ds;
}

Dataset gen_gaussian_mixture(std::size_t n, std::size_t dim, std::size_t clusters,
                             double cluster_sigma, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> center_dist(-10.0, 10.0);
    std::normal_distribution<double> noise(0.0, cluster_sigma);
    std::vector<double> centers(clusters * dim);
    for (double& v : centers) v = center_dist(rng);

    Dataset ds{dim, n, {}};
    ds.data.reserve(n * dim);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = rng() % clusters;
        for (std::size_t d = 0; d < dim; ++d)
            ds.data.push_back(float(centers[c * dim + d] + noise(rng)));
    }
    return ds;
}

Dataset gen_lognormal_norm(std::size_t n, std::size_t dim, double log_sigma,
                           std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::lognormal_distribution<double> norm_dist(0.0, log_sigma);
    Dataset ds{dim, n, {}};
    ds.data.resize(n * dim);
    for (std::size_t i = 0; i < n; ++i) {
        double sq = 0.0;
        std::vector<double> dir(dim);
        for (std::size_t d = 0; d < dim; ++d) {
            dir[d] = gauss(rng);
            sq += dir[d] * dir[d];
        }
        const double scale = norm_dist(rng) / std::sqrt(std::max(sq, 1e-300));
        for (std::size_t d = 0; d < dim; ++d) ds.data[i * dim + d] = float(dir[d] * scale);
    }
    return ds;
}

}  // namespace pyramid
