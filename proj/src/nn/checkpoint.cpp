#include "cohdial/nn/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <sstream>

#include "cohdial/artifact.hpp"
#include "cohdial/errors.hpp"
#include "cohdial/text.hpp"

namespace cohdial::nn {

namespace {

constexpr char kMagic[8] = {'C', 'D', 'C', 'K', 'P', 'T', 0, 0};

template <class T>
void put(std::string &out, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big)
        std::reverse(bytes, bytes + sizeof(T));
    out.append(reinterpret_cast<const char *>(bytes), sizeof(T));
}

class Reader {
  public:
    explicit Reader(const std::string &data) : data_(data) {}

    template <class T>
    T get() {
        need(sizeof(T));
        unsigned char bytes[sizeof(T)];
        std::memcpy(bytes, data_.data() + pos_, sizeof(T));
        if constexpr (std::endian::native == std::endian::big)
            std::reverse(bytes, bytes + sizeof(T));
        pos_ += sizeof(T);
        T v;
        std::memcpy(&v, bytes, sizeof(T));
        return v;
    }

    std::string bytes(std::size_t n) {
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == data_.size(); }

  private:
    void need(std::size_t n) const {
        if (pos_ + n > data_.size())
            throw IoError("checkpoint truncated");
    }

    const std::string &data_;
    std::size_t pos_ = 0;
};

} // namespace

std::string format_header(const ConfigHeader &header) {
    std::string out;
    for (const auto &[k, v] : header)
        out += k + "=" + v + "\n";
    return out;
}

ConfigHeader parse_header(const std::string &text) {
    ConfigHeader out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty())
            continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw IoError("bad checkpoint header line '" + line + "'");
        out[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return out;
}

void save_checkpoint(const std::filesystem::path &path, const ConfigHeader &header,
                     const ParameterStore &params) {
    std::string out(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, kCheckpointVersion);
    auto text = format_header(header);
    put<std::uint64_t>(out, text.size());
    out += text;
    auto all = params.all();
    put<std::uint64_t>(out, all.size());
    for (const auto *p : all) {
        put<std::uint64_t>(out, p->name.size());
        out += p->name;
        put<std::uint32_t>(out, static_cast<std::uint32_t>(p->value.rank()));
        for (auto d : p->value.shape())
            put<std::uint64_t>(out, d);
        for (double v : p->value.data())
            put<double>(out, v);
    }
    write_file_atomic(path, out, true);
}

Checkpoint load_checkpoint(const std::filesystem::path &path) {
    std::string data = read_file(path, true);
    Reader in(data);
    if (in.bytes(sizeof kMagic) != std::string(kMagic, sizeof kMagic))
        throw IoError(path.string() + " is not a checkpoint");
    auto version = in.get<std::uint32_t>();
    if (version != kCheckpointVersion)
        throw IoError("unsupported checkpoint version " + std::to_string(version));
    Checkpoint ckpt;
    ckpt.header = parse_header(in.bytes(in.get<std::uint64_t>()));
    auto count = in.get<std::uint64_t>();
    for (std::uint64_t k = 0; k < count; ++k) {
        auto name = in.bytes(in.get<std::uint64_t>());
        auto rank = in.get<std::uint32_t>();
        Shape shape(rank);
        for (auto &d : shape)
            d = in.get<std::uint64_t>();
        std::vector<double> values(numel(shape));
        for (auto &v : values)
            v = in.get<double>();
        ckpt.tensors.emplace(name, Tensor(shape, std::move(values)));
    }
    if (!in.done())
        throw IoError("trailing bytes in checkpoint " + path.string());
    return ckpt;
}

void restore_parameters(const Checkpoint &ckpt, ParameterStore &params) {
    for (auto *p : params.all()) {
        auto it = ckpt.tensors.find(p->name);
        if (it == ckpt.tensors.end())
            throw IoError("checkpoint lacks parameter '" + p->name + "'");
        if (it->second.shape() != p->value.shape())
            throw ShapeError("checkpoint parameter '" + p->name + "' has shape " +
                             to_string(it->second.shape()) + ", model expects " +
                             to_string(p->value.shape()));
        p->value = it->second;
    }
}

} // namespace cohdial::nn
