#include "ecglang/tensor_io.hpp"

#include <cstring>
#include <fstream>
#include <vector>

namespace ecglang::io {

namespace {

void put_u16(std::ostream& os, std::uint16_t v) {
    const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
    os.write(b, 2);
}

void put_u32(std::ostream& os, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 4);
}

std::uint16_t get_u16(std::istream& is) {
    unsigned char b[2];
    is.read(reinterpret_cast<char*>(b), 2);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

void put_f64(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
    os.write(b, 8);
}

double get_f64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

void put_f32(std::ostream& os, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(os, bits);
}

float get_f32(std::istream& is) {
    const std::uint32_t bits = get_u32(is);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

} // namespace

void save_tensors(const TensorMap& tensors, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write tensor file " + path);
    f.write("TNS1", 4);
    put_u32(f, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, mat] : tensors) {
        if (name.size() > 0xffff) throw DataError("tensor name too long: " + name);
        put_u16(f, static_cast<std::uint16_t>(name.size()));
        f.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(f, static_cast<std::uint32_t>(mat.rows()));
        put_u32(f, static_cast<std::uint32_t>(mat.cols()));
        for (Eigen::Index r = 0; r < mat.rows(); ++r)
            for (Eigen::Index c = 0; c < mat.cols(); ++c) put_f64(f, mat(r, c));
    }
    if (!f) throw DataError("write failed for tensor file " + path);
}

TensorMap load_tensors(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open tensor file " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "TNS1", 4) != 0)
        throw DataError("bad magic in tensor file " + path);

    TensorMap out;
    const std::uint32_t count = get_u32(f);
    for (std::uint32_t t = 0; t < count; ++t) {
        const std::uint16_t name_len = get_u16(f);
        std::string name(name_len, '\0');
        f.read(name.data(), name_len);
        const std::uint32_t rows = get_u32(f);
        const std::uint32_t cols = get_u32(f);
        Mat m(rows, cols);
        for (std::uint32_t r = 0; r < rows; ++r)
            for (std::uint32_t c = 0; c < cols; ++c) m(r, c) = get_f64(f);
        if (!f) throw DataError("truncated tensor file " + path);
        out.emplace(std::move(name), std::move(m));
    }
    return out;
}

void save_embedding_file(const Eigen::MatrixXf& table, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write embedding file " + path);
    f.write("EMB1", 4);
    put_u32(f, static_cast<std::uint32_t>(table.rows()));
    put_u32(f, static_cast<std::uint32_t>(table.cols()));
    for (Eigen::Index r = 0; r < table.rows(); ++r)
        for (Eigen::Index c = 0; c < table.cols(); ++c) put_f32(f, table(r, c));
    if (!f) throw DataError("write failed for embedding file " + path);
}

Eigen::MatrixXf load_embedding_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open embedding file " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "EMB1", 4) != 0)
        throw DataError("bad magic in embedding file " + path);
    const std::uint32_t rows = get_u32(f);
    const std::uint32_t dim = get_u32(f);
    Eigen::MatrixXf table(rows, dim);
    for (std::uint32_t r = 0; r < rows; ++r)
        for (std::uint32_t c = 0; c < dim; ++c) table(r, c) = get_f32(f);
    if (!f) throw DataError("truncated embedding file " + path);
    return table;
}

std::uint64_t tensor_checksum(const TensorMap& tensors) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](const void* data, std::size_t len) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < len; ++i) {
            h ^= p[i];
            h *= 0x100000001b3ull;
        }
    };
    for (const auto& [name, mat] : tensors) {
        mix(name.data(), name.size());
        for (Eigen::Index r = 0; r < mat.rows(); ++r)
            for (Eigen::Index c = 0; c < mat.cols(); ++c) {
                const double v = mat(r, c);
                mix(&v, sizeof(v));
            }
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

} // namespace ecglang::io
