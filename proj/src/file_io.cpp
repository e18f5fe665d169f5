#include "ahmi/file_io.hpp"

#include <cstdio>
#include <filesystem>
#include <sstream>

namespace ahmi {

std::ifstream open_input_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FileError("cannot open input file", path);
    }
    return in;
}

std::string read_text_file(const std::string& path) {
    auto in = open_input_file(path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    if (in.bad()) {
        throw FileError("error reading file", path);
    }
    return buffer.str();
}

void write_text_file(const std::string& path, const std::string& contents) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(target.parent_path(), ec);
    }
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw FileError("cannot open output file", path);
        }
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.flush();
        if (!out) {
            throw FileError("error writing file", path);
        }
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        std::remove(tmp.c_str());
        throw FileError("cannot replace file", path);
    }
}

}  // namespace ahmi
