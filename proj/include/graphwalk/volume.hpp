#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "graphwalk/core.hpp"

namespace graphwalk {

static_assert(std::endian::native == std::endian::little,
              "raw volume I/O assumes a little-endian host");

/// Multi-channel scalar field over a voxel grid. Storage is planar: channel c
/// occupies one contiguous x-fastest (row-major) block.
template <typename T>
struct Volume {
    GridDims dims;
    int channels = 1;
    std::vector<T> data;

    Volume() = default;
    Volume(GridDims d, int c, T fill = T{})
        : dims(d), channels(c), data(static_cast<size_t>(d.count()) * c, fill) {}

    T& at(int c, Index ix, Index iy, Index iz) {
        return data[static_cast<size_t>(c) * dims.count() + linear_index(dims, ix, iy, iz)];
    }
    const T& at(int c, Index ix, Index iy, Index iz) const {
        return data[static_cast<size_t>(c) * dims.count() + linear_index(dims, ix, iy, iz)];
    }
    T& at(int c, Index j) { return data[static_cast<size_t>(c) * dims.count() + j]; }
    const T& at(int c, Index j) const {
        return data[static_cast<size_t>(c) * dims.count() + j];
    }

    /// Clamped read: out-of-bounds coordinates replicate the nearest voxel.
    const T& at_clamped(int c, Index ix, Index iy, Index iz) const {
        ix = std::clamp<Index>(ix, 0, dims.x - 1);
        iy = std::clamp<Index>(iy, 0, dims.y - 1);
        iz = std::clamp<Index>(iz, 0, dims.z - 1);
        return at(c, ix, iy, iz);
    }
};

using VolumeF = Volume<float>;
using VolumeU8 = Volume<std::uint8_t>;
using VolumeU16 = Volume<std::uint16_t>;

namespace detail {

inline std::string sidecar_path(const std::string& raw_path) { return raw_path + ".json"; }

template <typename T>
void write_volume_impl(const Volume<T>& v, const std::string& raw_path) {
    namespace fs = std::filesystem;
    if (auto parent = fs::path(raw_path).parent_path(); !parent.empty())
        fs::create_directories(parent);
    std::ofstream raw(raw_path, std::ios::binary | std::ios::trunc);
    if (!raw) throw IoError("cannot open for writing: " + raw_path);
    raw.write(reinterpret_cast<const char*>(v.data.data()),
              static_cast<std::streamsize>(v.data.size() * sizeof(T)));
    if (!raw) throw IoError("short write: " + raw_path);

    nlohmann::json side = {{"dims", {v.dims.x, v.dims.y, v.dims.z}},
                           {"channels", v.channels},
                           {"order", "row-major"}};
    std::ofstream meta(sidecar_path(raw_path), std::ios::trunc);
    if (!meta) throw IoError("cannot open for writing: " + sidecar_path(raw_path));
    meta << side.dump(2) << "\n";
}

template <typename T>
Volume<T> read_volume_impl(const std::string& raw_path) {
    std::ifstream meta(sidecar_path(raw_path));
    if (!meta) throw IoError("missing sidecar: " + sidecar_path(raw_path));
    nlohmann::json side;
    try {
        meta >> side;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("bad sidecar " + sidecar_path(raw_path) + ": " + e.what());
    }
    Volume<T> v;
    try {
        auto d = side.at("dims");
        v.dims = {d.at(0).get<Index>(), d.at(1).get<Index>(), d.at(2).get<Index>()};
        v.channels = side.at("channels").get<int>();
        if (side.at("order").get<std::string>() != "row-major")
            throw IoError("unsupported order in " + sidecar_path(raw_path));
    } catch (const nlohmann::json::exception& e) {
        throw IoError("bad sidecar " + sidecar_path(raw_path) + ": " + e.what());
    }
    if (v.dims.x <= 0 || v.dims.y <= 0 || v.dims.z <= 0 || v.channels <= 0)
        throw IoError("nonpositive dims/channels in " + sidecar_path(raw_path));

    std::ifstream raw(raw_path, std::ios::binary);
    if (!raw) throw IoError("cannot open: " + raw_path);
    const size_t n = static_cast<size_t>(v.dims.count()) * v.channels;
    v.data.resize(n);
    raw.read(reinterpret_cast<char*>(v.data.data()),
             static_cast<std::streamsize>(n * sizeof(T)));
    if (static_cast<size_t>(raw.gcount()) != n * sizeof(T))
        throw IoError("raw payload shorter than sidecar promises: " + raw_path);
    return v;
}

} // namespace detail

inline void write_volume(const VolumeF& v, const std::string& p) { detail::write_volume_impl(v, p); }
inline void write_volume(const VolumeU8& v, const std::string& p) { detail::write_volume_impl(v, p); }
inline void write_volume(const VolumeU16& v, const std::string& p) { detail::write_volume_impl(v, p); }

inline VolumeF read_volume_f32(const std::string& p) { return detail::read_volume_impl<float>(p); }
inline VolumeU8 read_volume_u8(const std::string& p) { return detail::read_volume_impl<std::uint8_t>(p); }
inline VolumeU16 read_volume_u16(const std::string& p) { return detail::read_volume_impl<std::uint16_t>(p); }

} // namespace graphwalk
