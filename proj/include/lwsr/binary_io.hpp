#pragma once

#include <filesystem>
#include <iosfwd>

#include "lwsr/common.hpp"

namespace lwsr::io {

// Feature binary layout: u32 LE rows, u32 LE cols, then rows*cols f32 LE,
// row-major. The same block layout is reused for checkpoints, bank dumps
// and index dumps.
void write_block(std::ostream& out, const MatrixF& m);
MatrixF read_block(std::istream& in, const std::string& origin);

void write_matrix_file(const std::filesystem::path& path, const MatrixF& m);

// Throws missing_file, dimension_mismatch (header vs payload size) or
// non_finite (any NaN/Inf value).
MatrixF read_matrix_file(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace lwsr::io
