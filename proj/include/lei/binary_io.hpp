#pragma once

#include "lei/errors.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>
#include <vector>

namespace lei::binary {

/// Little-endian-host container: magic tag, format version, then payload.
class Writer {
public:
    Writer(std::ostream& out, std::string_view magic, std::uint32_t version) : out_(out) {
        out_.write(magic.data(), static_cast<std::streamsize>(magic.size()));
        put(version);
    }

    template <typename T>
        requires std::is_arithmetic_v<T>
    void put(T v) {
        out_.write(reinterpret_cast<const char*>(&v), sizeof v);
    }

    void put(const std::string& s) {
        put(static_cast<std::uint64_t>(s.size()));
        out_.write(s.data(), static_cast<std::streamsize>(s.size()));
    }

    template <typename Scalar, int R, int C>
    void put(const Eigen::Matrix<Scalar, R, C>& m) {
        put(static_cast<std::uint64_t>(m.rows()));
        put(static_cast<std::uint64_t>(m.cols()));
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            for (Eigen::Index i = 0; i < m.rows(); ++i) put(m(i, j));
    }

    template <typename T>
    void put(const std::vector<T>& v) {
        put(static_cast<std::uint64_t>(v.size()));
        for (const auto& x : v) put(x);
    }

private:
    std::ostream& out_;
};

class Reader {
public:
    Reader(std::istream& in, std::string_view magic, std::uint32_t max_version) : in_(in) {
        std::string tag(magic.size(), '\0');
        in_.read(tag.data(), static_cast<std::streamsize>(tag.size()));
        if (!in_ || tag != magic) throw ValidationError("not a " + std::string(magic) + " container");
        version_ = get<std::uint32_t>();
        if (version_ == 0 || version_ > max_version)
            throw ValidationError("unsupported " + std::string(magic) + " container version " + std::to_string(version_));
    }

    [[nodiscard]] std::uint32_t version() const { return version_; }

    template <typename T>
        requires std::is_arithmetic_v<T>
    T get() {
        T v{};
        in_.read(reinterpret_cast<char*>(&v), sizeof v);
        if (!in_) throw IoError("truncated container");
        return v;
    }

    std::string get_string() {
        auto n = get<std::uint64_t>();
        if (n > (1ULL << 32)) throw IoError("corrupt string length");
        std::string s(n, '\0');
        in_.read(s.data(), static_cast<std::streamsize>(n));
        if (!in_) throw IoError("truncated container");
        return s;
    }

    template <typename Scalar>
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> get_matrix() {
        auto rows = get<std::uint64_t>();
        auto cols = get<std::uint64_t>();
        if (rows * cols > (1ULL << 34)) throw IoError("corrupt matrix extents");
        Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> m(rows, cols);
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = get<Scalar>();
        return m;
    }

    template <typename T>
    std::vector<T> get_vector() {
        auto n = get<std::uint64_t>();
        if (n > (1ULL << 34)) throw IoError("corrupt vector length");
        std::vector<T> v;
        v.reserve(n);
        for (std::uint64_t i = 0; i < n; ++i) v.push_back(get<T>());
        return v;
    }

private:
    std::istream& in_;
    std::uint32_t version_ = 0;
};

}  // namespace lei::binary
