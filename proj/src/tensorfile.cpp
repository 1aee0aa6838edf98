#include "gebd/tensorfile.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "gebd/datamodel.hpp"

namespace gebd {

namespace {

// The container is written in host byte order and declares little-endian;
// refuse to run on big-endian hosts rather than silently corrupt files.
bool host_is_little_endian() {
    const std::uint16_t probe = 1;
    unsigned char byte;
    std::memcpy(&byte, &probe, 1);
    return byte == 1;
}

std::size_t shape_elements(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

} // namespace

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t seed) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < bytes; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::size_t TensorEntry::element_count() const {
    return shape_elements(shape);
}

void TensorFile::add_f32(const std::string& name, std::vector<int> shape, std::vector<float> data) {
    if (shape_elements(shape) != data.size())
        throw Error("tensor '" + name + "': shape does not match data size");
    TensorEntry e;
    e.name = name;
    e.dtype = "f32";
    e.shape = std::move(shape);
    e.f32 = std::move(data);
    entries_.push_back(std::move(e));
}

void TensorFile::add_f64(const std::string& name, std::vector<int> shape, std::vector<double> data) {
    if (shape_elements(shape) != data.size())
        throw Error("tensor '" + name + "': shape does not match data size");
    TensorEntry e;
    e.name = name;
    e.dtype = "f64";
    e.shape = std::move(shape);
    e.f64 = std::move(data);
    entries_.push_back(std::move(e));
}

const TensorEntry* TensorFile::find(const std::string& name) const {
    for (const auto& e : entries_)
        if (e.name == name) return &e;
    return nullptr;
}

const TensorEntry& TensorFile::get(const std::string& name) const {
    const TensorEntry* e = find(name);
    if (!e) throw Error("tensor '" + name + "' not found in container");
    return *e;
}

std::uint64_t TensorFile::content_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& e : entries_) {
        if (e.dtype == "f32")
            h = fnv1a(e.f32.data(), e.f32.size() * sizeof(float), h);
        else
            h = fnv1a(e.f64.data(), e.f64.size() * sizeof(double), h);
    }
    return h;
}

void TensorFile::write(const std::string& path) const {
    if (!host_is_little_endian()) throw Error("tensor container requires a little-endian host");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open file for writing: " + path);

    std::ostringstream header;
    header << "GEBDTENSOR 1\n";
    for (const auto& e : entries_) {
        header << "tensor " << e.name << " " << e.dtype << " " << e.shape.size();
        for (int d : e.shape) header << " " << d;
        header << "\n";
    }
    char hashbuf[17];
    std::snprintf(hashbuf, sizeof hashbuf, "%016llx",
                  static_cast<unsigned long long>(content_hash()));
    header << "hash " << hashbuf << "\n";
    header << "data\n";
    out << header.str();

    for (const auto& e : entries_) {
        if (e.dtype == "f32")
            out.write(reinterpret_cast<const char*>(e.f32.data()),
                      static_cast<std::streamsize>(e.f32.size() * sizeof(float)));
        else
            out.write(reinterpret_cast<const char*>(e.f64.data()),
                      static_cast<std::streamsize>(e.f64.size() * sizeof(double)));
    }
    if (!out) throw Error("write failed: " + path);
}

TensorFile TensorFile::read(const std::string& path) {
    if (!host_is_little_endian()) throw Error("tensor container requires a little-endian host");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open file: " + path);

    std::string line;
    if (!std::getline(in, line) || line != "GEBDTENSOR 1")
        throw Error("bad tensor container magic in " + path);

    TensorFile tf;
    std::uint64_t declared_hash = 0;
    bool have_hash = false;
    while (std::getline(in, line)) {
        if (line == "data") break;
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "tensor") {
            TensorEntry e;
            std::size_t ndim = 0;
            ls >> e.name >> e.dtype >> ndim;
            if (!ls || (e.dtype != "f32" && e.dtype != "f64"))
                throw Error("bad tensor declaration in " + path + ": " + line);
            e.shape.resize(ndim);
            for (std::size_t i = 0; i < ndim; ++i) {
                ls >> e.shape[i];
                if (!ls || e.shape[i] < 0) throw Error("bad tensor shape in " + path);
            }
            tf.entries_.push_back(std::move(e));
        } else if (tag == "hash") {
            std::string hex;
            ls >> hex;
            declared_hash = std::stoull(hex, nullptr, 16);
            have_hash = true;
        } else {
            throw Error("unknown header line in " + path + ": " + line);
        }
    }
    if (line != "data") throw Error("tensor container missing data section: " + path);

    for (auto& e : tf.entries_) {
        const std::size_t n = e.element_count();
        if (e.dtype == "f32") {
            e.f32.resize(n);
            in.read(reinterpret_cast<char*>(e.f32.data()),
                    static_cast<std::streamsize>(n * sizeof(float)));
        } else {
            e.f64.resize(n);
            in.read(reinterpret_cast<char*>(e.f64.data()),
                    static_cast<std::streamsize>(n * sizeof(double)));
        }
        if (!in) throw Error("truncated tensor payload in " + path);
    }
    if (have_hash && tf.content_hash() != declared_hash)
        throw Error("tensor payload hash mismatch in " + path);
    return tf;
}

} // namespace gebd
