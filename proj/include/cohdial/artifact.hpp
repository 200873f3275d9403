#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>

namespace cohdial {

// Streams into `<path>.tmp` and renames onto `path` on commit(). A writer
// destroyed without commit() removes its temp file, so the final path only
// ever holds complete artifacts.
class AtomicFile {
  public:
    explicit AtomicFile(std::filesystem::path path, bool binary = false);
    AtomicFile(const AtomicFile &) = delete;
    AtomicFile &operator=(const AtomicFile &) = delete;
    ~AtomicFile();

    std::ostream &stream() { return out_; }
    void commit();

  private:
    std::filesystem::path path_;
    std::filesystem::path tmp_;
    std::ofstream out_;
    bool committed_ = false;
};

void write_file_atomic(const std::filesystem::path &path, std::string_view content,
                       bool binary = false);

std::string read_file(const std::filesystem::path &path, bool binary = false);

// Prefix of comment lines carrying the producing configuration.
inline constexpr std::string_view kHeaderPrefix = "#cfg ";

} // namespace cohdial
