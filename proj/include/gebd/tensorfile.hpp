#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gebd {

// Flat binary tensor container: a small text header declaring names, shapes
// and dtypes, then the raw little-endian payload in header order. Used for
// synthetic backbone features, the stage-2 handoff files and checkpoints.
//
//   GEBDTENSOR 1
//   tensor <name> <f32|f64> <ndim> <d0> <d1> ...
//   hash <16-hex-digit fnv1a of payload>
//   data
//   <raw bytes>
struct TensorEntry {
    std::string name;
    std::string dtype; // "f32" or "f64"
    std::vector<int> shape;
    std::vector<float> f32;
    std::vector<double> f64;

    std::size_t element_count() const;
};

class TensorFile {
public:
    void add_f32(const std::string& name, std::vector<int> shape, std::vector<float> data);
    void add_f64(const std::string& name, std::vector<int> shape, std::vector<double> data);

    const TensorEntry* find(const std::string& name) const;
    const TensorEntry& get(const std::string& name) const;
    const std::vector<TensorEntry>& entries() const { return entries_; }

    // FNV-1a over the payload bytes; also stored in the header on write and
    // verified on read.
    std::uint64_t content_hash() const;

    void write(const std::string& path) const;
    static TensorFile read(const std::string& path);

private:
    std::vector<TensorEntry> entries_;
};

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

} // namespace gebd
