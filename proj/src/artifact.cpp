#include "cohdial/artifact.hpp"

#include <sstream>
#include <system_error>

#include <unistd.h>

#include "cohdial/errors.hpp"

namespace cohdial {

AtomicFile::AtomicFile(std::filesystem::path path, bool binary) : path_(std::move(path)) {
    tmp_ = path_;
    tmp_ += ".tmp." + std::to_string(::getpid());
    if (path_.has_parent_path())
        std::filesystem::create_directories(path_.parent_path());
    out_.open(tmp_, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
    if (!out_)
        throw IoError("cannot write " + tmp_.string());
}

AtomicFile::~AtomicFile() {
    if (!committed_) {
        out_.close();
        std::error_code ec;
        std::filesystem::remove(tmp_, ec);
    }
}

void AtomicFile::commit() {
    out_.flush();
    if (!out_)
        throw IoError("write failed for " + tmp_.string());
    out_.close();
    std::error_code ec;
    std::filesystem::rename(tmp_, path_, ec);
    if (ec)
        throw IoError("cannot rename onto " + path_.string() + ": " + ec.message());
    committed_ = true;
}

void write_file_atomic(const std::filesystem::path &path, std::string_view content, bool binary) {
    AtomicFile file(path, binary);
    file.stream().write(content.data(), static_cast<std::streamsize>(content.size()));
    file.commit();
}

std::string read_file(const std::filesystem::path &path, bool binary) {
    std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
    if (!in)
        throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace cohdial
