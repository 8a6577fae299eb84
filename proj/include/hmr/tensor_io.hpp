#pragma once

// Binary tensor file: 8-byte magic "HMRTENS1", u32 LE header length, UTF-8
// JSON header {"shape":[...],"dtype":"f32"|"f64"}, then row-major LE payload.
// Assumes a little-endian host.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "hmr/tensor.hpp"

namespace hmr::io {

inline constexpr char kMagic[8] = {'H', 'M', 'R', 'T', 'E', 'N', 'S', '1'};

template <class T>
const char* dtype_name();
template <>
inline const char* dtype_name<float>() {
    return "f32";
}
template <>
inline const char* dtype_name<double>() {
    return "f64";
}
template <>
inline const char* dtype_name<int>() {
    return "i32";
}

template <class T>
void save_tensor(const TensorT<T>& t, std::ostream& os) {
    os.write(kMagic, 8);
    nlohmann::json hdr{{"shape", t.shape}, {"dtype", dtype_name<T>()}};
    const std::string h = hdr.dump();
    const std::uint32_t len = static_cast<std::uint32_t>(h.size());
    os.write(reinterpret_cast<const char*>(&len), 4);
    os.write(h.data(), static_cast<std::streamsize>(h.size()));
    os.write(reinterpret_cast<const char*>(t.data.data()),
             static_cast<std::streamsize>(t.data.size() * sizeof(T)));
}

template <class T>
void save_tensor(const TensorT<T>& t, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    save_tensor(t, os);
}

template <class T>
TensorT<T> load_tensor(std::istream& is) {
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0) throw std::runtime_error("tensor file: bad magic");
    std::uint32_t len = 0;
    is.read(reinterpret_cast<char*>(&len), 4);
    std::string h(len, '\0');
    is.read(h.data(), len);
    const auto hdr = nlohmann::json::parse(h);
    if (hdr.at("dtype").get<std::string>() != dtype_name<T>())
        throw std::runtime_error("tensor file: dtype mismatch, file has " +
                                 hdr.at("dtype").get<std::string>());
    TensorT<T> t(hdr.at("shape").get<std::vector<int>>());
    is.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(T)));
    if (!is) throw std::runtime_error("tensor file: truncated payload");
    return t;
}

template <class T>
TensorT<T> load_tensor(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    return load_tensor<T>(is);
}

}  // namespace hmr::io
