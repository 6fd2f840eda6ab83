#include "sodkit/archive.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "sodkit/errors.hpp"

namespace sodkit {

namespace {

constexpr char kMagic[8] = {'S', 'O', 'D', 'A', 'R', 'C', '0', '1'};
constexpr std::uint32_t kMaxString = 1u << 20;

void put_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); }
void put_i32(std::ostream& os, std::int32_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); }
void put_str(std::ostream& os, const std::string& s) {
    put_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T get(std::istream& is, const std::filesystem::path& path) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw DataError("truncated archive: " + path.string());
    return v;
}

std::string get_str(std::istream& is, const std::filesystem::path& path) {
    const auto n = get<std::uint32_t>(is, path);
    if (n > kMaxString) throw DataError("corrupt archive (string length): " + path.string());
    std::string s(n, '\0');
    if (n && !is.read(s.data(), n)) throw DataError("truncated archive: " + path.string());
    return s;
}

}  // namespace

const std::string* TensorArchive::meta(const std::string& key) const {
    for (const auto& [k, v] : metadata)
        if (k == key) return &v;
    return nullptr;
}

const Tensor* TensorArchive::tensor(const std::string& name) const {
    for (const auto& [k, t] : tensors)
        if (k == name) return &t;
    return nullptr;
}

std::map<std::string, const Tensor*> TensorArchive::tensor_index() const {
    std::map<std::string, const Tensor*> idx;
    for (const auto& [k, t] : tensors) idx[k] = &t;
    return idx;
}

void write_archive(const std::filesystem::path& path, const TensorArchive& archive) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot open for writing: " + path.string());
    os.write(kMagic, sizeof kMagic);
    put_u32(os, static_cast<std::uint32_t>(archive.metadata.size()));
    for (const auto& [k, v] : archive.metadata) {
        put_str(os, k);
        put_str(os, v);
    }
    put_u32(os, static_cast<std::uint32_t>(archive.tensors.size()));
    for (const auto& [name, t] : archive.tensors) {
        put_str(os, name);
        const Shape& s = t.shape();
        put_i32(os, s.n);
        put_i32(os, s.c);
        put_i32(os, s.h);
        put_i32(os, s.w);
        os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(float)));
    }
    if (!os) throw DataError("write failed: " + path.string());
}

TensorArchive read_archive(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open archive: " + path.string());
    char magic[8];
    if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
        throw DataError("not a tensor archive: " + path.string());
    TensorArchive a;
    const auto n_meta = get<std::uint32_t>(is, path);
    for (std::uint32_t i = 0; i < n_meta; ++i) {
        std::string k = get_str(is, path);
        std::string v = get_str(is, path);
        a.metadata.emplace_back(std::move(k), std::move(v));
    }
    const auto n_tensors = get<std::uint32_t>(is, path);
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
        std::string name = get_str(is, path);
        Shape s;
        s.n = get<std::int32_t>(is, path);
        s.c = get<std::int32_t>(is, path);
        s.h = get<std::int32_t>(is, path);
        s.w = get<std::int32_t>(is, path);
        if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0 || s.numel() > (std::size_t{1} << 31))
            throw DataError("corrupt archive (tensor shape " + s.str() + "): " + path.string());
        Tensor t(s);
        if (t.numel() && !is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(float))))
            throw DataError("truncated archive: " + path.string());
        a.tensors.emplace_back(std::move(name), std::move(t));
    }
    if (is.peek() != std::char_traits<char>::eof()) throw DataError("trailing bytes in archive: " + path.string());
    return a;
}

}  // namespace sodkit
