#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "kolambert/errors.hpp"
#include "kolambert/koopman.hpp"

namespace kolambert {

// Versioned binary serialization of a KoopmanModel. Matrices are stored
// row-major; complex entries as re/im pairs. The basis index list is
// re-derived from (dimension, order, domain) on load, which the deterministic
// enumeration guarantees to be identical.

inline constexpr char kModelMagic[8] = {'K', 'O', 'M', 'D', 'L', '0', '0', '1'};

namespace detail {

inline void write_bytes(std::ofstream& out, const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void read_bytes(std::ifstream& in, void* p, std::size_t n) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in) throw CacheError("model cache: truncated file");
}

inline void write_matrix(std::ofstream& out, const MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            const double v = m(i, j);
            write_bytes(out, &v, sizeof(v));
        }
}

inline void write_cmatrix(std::ofstream& out, const MatrixXcd& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            const double re = m(i, j).real(), im = m(i, j).imag();
            write_bytes(out, &re, sizeof(re));
            write_bytes(out, &im, sizeof(im));
        }
}

inline void read_matrix(std::ifstream& in, MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) read_bytes(in, &m(i, j), sizeof(double));
}

inline void read_cmatrix(std::ifstream& in, MatrixXcd& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            double re = 0, im = 0;
            read_bytes(in, &re, sizeof(re));
            read_bytes(in, &im, sizeof(im));
            m(i, j) = {re, im};
        }
}

}  // namespace detail

inline void save_model(const KoopmanModel& model, std::uint64_t key, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CacheError("model cache: cannot write " + path);
    detail::write_bytes(out, kModelMagic, sizeof(kModelMagic));
    detail::write_bytes(out, &key, sizeof(key));
    const std::int32_t d = model.basis.dimension;
    const std::int32_t order = model.basis.max_order;
    const std::int32_t m = model.basis.size();
    const std::int32_t q = model.observable_count();
    detail::write_bytes(out, &d, sizeof(d));
    detail::write_bytes(out, &order, sizeof(order));
    detail::write_bytes(out, &m, sizeof(m));
    detail::write_bytes(out, &q, sizeof(q));
    for (int j = 0; j < d; ++j) {
        const double lo = model.basis.domain.lower[j], hi = model.basis.domain.upper[j];
        detail::write_bytes(out, &lo, sizeof(lo));
        detail::write_bytes(out, &hi, sizeof(hi));
    }
    const std::uint8_t diag = model.diagonalizable ? 1 : 0;
    detail::write_bytes(out, &diag, sizeof(diag));
    detail::write_bytes(out, &model.condition_P, sizeof(double));
    detail::write_bytes(out, &model.eigen_residual, sizeof(double));
    detail::write_matrix(out, model.K);
    for (Eigen::Index i = 0; i < model.eigenvalues.size(); ++i) {
        const double re = model.eigenvalues[i].real(), im = model.eigenvalues[i].imag();
        detail::write_bytes(out, &re, sizeof(re));
        detail::write_bytes(out, &im, sizeof(im));
    }
    detail::write_cmatrix(out, model.P);
    detail::write_cmatrix(out, model.P_inverse);
    detail::write_matrix(out, model.A);
    if (!out) throw CacheError("model cache: write failed for " + path);
}

inline KoopmanModel load_model(std::uint64_t expected_key, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CacheError("model cache: cannot open " + path);
    char magic[8];
    detail::read_bytes(in, magic, sizeof(magic));
    if (std::memcmp(magic, kModelMagic, sizeof(magic)) != 0)
        throw CacheError("model cache: bad magic in " + path);
    std::uint64_t key = 0;
    detail::read_bytes(in, &key, sizeof(key));
    if (key != expected_key) throw CacheError("model cache: key mismatch in " + path);
    std::int32_t d = 0, order = 0, m = 0, q = 0;
    detail::read_bytes(in, &d, sizeof(d));
    detail::read_bytes(in, &order, sizeof(order));
    detail::read_bytes(in, &m, sizeof(m));
    detail::read_bytes(in, &q, sizeof(q));
    if (d < 1 || order < 0 || m < 1 || q < 1) throw CacheError("model cache: corrupt header");
    VectorXd lo(d), hi(d);
    for (int j = 0; j < d; ++j) {
        detail::read_bytes(in, &lo[j], sizeof(double));
        detail::read_bytes(in, &hi[j], sizeof(double));
    }
    KoopmanModel model;
    model.basis = build_basis(d, order, DomainBox(lo, hi), m);
    if (model.basis.size() != m) throw CacheError("model cache: basis size mismatch");
    std::uint8_t diag = 0;
    detail::read_bytes(in, &diag, sizeof(diag));
    model.diagonalizable = diag != 0;
    detail::read_bytes(in, &model.condition_P, sizeof(double));
    detail::read_bytes(in, &model.eigen_residual, sizeof(double));
    model.K.resize(m, m);
    detail::read_matrix(in, model.K);
    model.eigenvalues.resize(m);
    for (int i = 0; i < m; ++i) {
        double re = 0, im = 0;
        detail::read_bytes(in, &re, sizeof(re));
        detail::read_bytes(in, &im, sizeof(im));
        model.eigenvalues[i] = {re, im};
    }
    model.P.resize(m, m);
    detail::read_cmatrix(in, model.P);
    model.P_inverse.resize(m, m);
    detail::read_cmatrix(in, model.P_inverse);
    model.A.resize(q, m);
    detail::read_matrix(in, model.A);
    model.B = model.A.cast<std::complex<double>>() * model.P_inverse;
    return model;
}

// Cache directory resolution: the environment variable wins, then a cache/
// directory under the output directory.
inline std::string cache_directory(const std::string& output_directory) {
    if (const char* env = std::getenv("KOLAMBERT_CACHE_DIR"); env && *env) return env;
    return output_directory + "/cache";
}

inline std::string cache_path(const std::string& cache_dir, std::uint64_t key) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(key));
    return cache_dir + "/model_" + buf + ".kolm";
}

}  // namespace kolambert
