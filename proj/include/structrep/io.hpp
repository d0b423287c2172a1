#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace structrep {

/// Whole-file read; throws InputError when the file cannot be opened.
std::string read_text_file(const std::filesystem::path& path);
/// Whole-file write (binary mode, truncating); throws InputError on failure.
void write_text_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace structrep
