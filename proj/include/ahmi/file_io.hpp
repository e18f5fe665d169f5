#pragma once

#include <fstream>
#include <stdexcept>
#include <string>

namespace ahmi {

/// Raised when a file cannot be opened, read or written.
class FileError : public std::runtime_error {
public:
    FileError(const std::string& what, std::string path)
        : std::runtime_error(what + ": " + path), path_(std::move(path)) {}

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

std::ifstream open_input_file(const std::string& path);

std::string read_text_file(const std::string& path);

/// Writes `contents` to a sibling temp file and renames it over `path`.
void write_text_file(const std::string& path, const std::string& contents);

}  // namespace ahmi
