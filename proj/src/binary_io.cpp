#include "lwsr/binary_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace lwsr::io {
namespace {

static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

void put_u32(std::ostream& out, std::uint32_t v) {
    std::array<unsigned char, 4> b{static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                   static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b.data()), 4);
}

bool get_u32(std::istream& in, std::uint32_t& v) {
    std::array<unsigned char, 4> b{};
    if (!in.read(reinterpret_cast<char*>(b.data()), 4)) return false;
    v = std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) | (std::uint32_t{b[3]} << 24);
    return true;
}

}  // namespace

void write_block(std::ostream& out, const MatrixF& m) {
    put_u32(out, static_cast<std::uint32_t>(m.rows));
    put_u32(out, static_cast<std::uint32_t>(m.cols));
    for (float f : m.data) put_u32(out, std::bit_cast<std::uint32_t>(f));
    if (!out) throw Error(Errc::io_error, "write failed");
}

MatrixF read_block(std::istream& in, const std::string& origin) {
    std::uint32_t rows = 0, cols = 0;
    if (!get_u32(in, rows) || !get_u32(in, cols)) {
        throw Error(Errc::dimension_mismatch, origin + ": truncated header");
    }
    MatrixF m(rows, cols);
    for (float& f : m.data) {
        std::uint32_t bits = 0;
        if (!get_u32(in, bits)) {
            throw Error(Errc::dimension_mismatch, origin + ": header declares " + std::to_string(rows) + "x" +
                                                      std::to_string(cols) + " but payload is shorter");
        }
        f = std::bit_cast<float>(bits);
    }
    return m;
}

void write_matrix_file(const std::filesystem::path& path, const MatrixF& m) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io_error, "cannot open " + path.string() + " for writing");
    write_block(out, m);
}

MatrixF read_matrix_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::missing_file, path.string());
    MatrixF m = read_block(in, path.string());
    if (in.peek() != std::char_traits<char>::eof()) {
        throw Error(Errc::dimension_mismatch, path.string() + ": payload longer than header declares");
    }
    if (!all_finite<float>(m.data)) throw Error(Errc::non_finite, path.string());
    return m;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::missing_file, path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io_error, "cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw Error(Errc::io_error, "write failed: " + path.string());
}

}  // namespace lwsr::io
