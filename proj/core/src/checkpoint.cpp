#include "muse/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace muse {

namespace {

constexpr std::array<char, 8> kMagic = {'M', 'U', 'S', 'E', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& out, T value)
{
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& source)
{
    T value{};
    if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) throw DataError(source + ": truncated checkpoint");
    return value;
}

std::string get_string(std::istream& in, const std::string& source, std::uint32_t limit)
{
    const auto n = get<std::uint32_t>(in, source);
    if (n > limit) throw DataError(source + ": implausible string length " + std::to_string(n));
    std::string s(n, '\0');
    if (n != 0 && !in.read(s.data(), n)) throw DataError(source + ": truncated checkpoint");
    return s;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint)
{
    out.write(kMagic.data(), kMagic.size());
    put<std::uint32_t>(out, kVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(checkpoint.config_text.size()));
    out.write(checkpoint.config_text.data(), static_cast<std::streamsize>(checkpoint.config_text.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(checkpoint.params.size()));
    for (const auto& [name, tensor] : checkpoint.params.values()) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put<std::uint8_t>(out, 0);
        put<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.rank()));
        for (std::size_t d : tensor.shape()) put<std::uint64_t>(out, d);
        out.write(reinterpret_cast<const char*>(tensor.data()), static_cast<std::streamsize>(tensor.size() * sizeof(float)));
    }
    if (!out) throw Error("checkpoint: write failed");
}

Checkpoint read_checkpoint(std::istream& in, const std::string& source)
{
    std::array<char, 8> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw DataError(source + ": not a muse checkpoint");
    const auto version = get<std::uint32_t>(in, source);
    if (version != kVersion) throw DataError(source + ": unsupported checkpoint version " + std::to_string(version));
    Checkpoint ck;
    ck.config_text = get_string(in, source, 1u << 20);
    const auto count = get<std::uint32_t>(in, source);
    for (std::uint32_t p = 0; p < count; ++p) {
        std::string name = get_string(in, source, 4096);
        const auto dtype = get<std::uint8_t>(in, source);
        const auto rank = get<std::uint32_t>(in, source);
        if (rank > 8) throw DataError(source + ": parameter '" + name + "' has implausible rank");
        Shape shape(rank);
        for (auto& d : shape) d = static_cast<std::size_t>(get<std::uint64_t>(in, source));
        const std::size_t n = element_count(shape);
        std::vector<float> values(n);
        if (dtype == 0) {
            if (n != 0 && !in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(n * sizeof(float)))) {
                throw DataError(source + ": truncated data for '" + name + "'");
            }
        } else if (dtype == 1) {
            for (auto& v : values) v = static_cast<float>(get<double>(in, source));
        } else {
            throw DataError(source + ": unknown dtype " + std::to_string(dtype) + " for '" + name + "'");
        }
        if (ck.params.contains(name)) throw DataError(source + ": duplicate parameter '" + name + "'");
        ck.params.add(name, Tensor<float>(std::move(shape), std::move(values)));
    }
    return ck;
}

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    write_checkpoint(out, checkpoint);
}

Checkpoint load_checkpoint(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint '" + path + "'");
    return read_checkpoint(in, path);
}

}  // namespace muse
