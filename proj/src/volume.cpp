#include "voxrl/volume.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "voxrl/errors.hpp"
#include "voxrl/rng.hpp"

namespace voxrl {

namespace fs = std::filesystem;
using nlohmann::json;

Volume::Volume(int x, int y, int z) : nx(x), ny(y), nz(z) {
    if (x < 1 || y < 1 || z < 1) throw std::invalid_argument("volume dims must be >= 1");
    voxels.assign(std::size_t(numel()), 0.0f);
}

PhantomConfig PhantomConfig::paper() {
    PhantomConfig c;
    c.out_dims = {64, 64, 36};
    c.native_z_range = {28, 36};
    c.lesion_count_range = {1, 5};
    c.lesion_radius_range = {4.0, 8.0};
    c.lesion_contrast = 0.5;
    c.noise_sigma = 0.03;
    return c;
}

PhantomConfig PhantomConfig::desk() {
    PhantomConfig c;
    c.out_dims = {32, 32, 16};
    c.native_z_range = {12, 16};
    c.lesion_count_range = {2, 4};
    c.lesion_radius_range = {2.5, 4.5};
    c.lesion_contrast = 0.6;
    c.noise_sigma = 0.03;
    return c;
}

void PhantomConfig::validate() const {
    for (int d : out_dims)
        if (d < 1) throw std::invalid_argument("phantom: out_dims must be >= 1");
    if (native_z_range.first < 1 || native_z_range.second < native_z_range.first ||
        native_z_range.second > out_dims[2])
        throw std::invalid_argument("phantom: native_z_range must fit within out z dim");
    if (lesion_count_range.first < 0 || lesion_count_range.second < lesion_count_range.first)
        throw std::invalid_argument("phantom: bad lesion_count_range");
    if (lesion_radius_range.first <= 0 ||
        lesion_radius_range.second < lesion_radius_range.first)
        throw std::invalid_argument("phantom: bad lesion_radius_range");
    const int min_dim = std::min({out_dims[0], out_dims[1], native_z_range.first});
    if (2.0 * lesion_radius_range.second >= double(min_dim))
        throw std::invalid_argument("phantom: lesion radius " +
                                    std::to_string(lesion_radius_range.second) +
                                    " does not fit in volume (min dim " +
                                    std::to_string(min_dim) + ")");
    if (noise_sigma < 0) throw std::invalid_argument("phantom: noise_sigma must be >= 0");
}

LabeledVolume generate_phantom(const PhantomConfig& config, int label, const std::string& id) {
    config.validate();
    if (label != 0 && label != 1) throw std::invalid_argument("phantom: label must be 0 or 1");

    const std::uint64_t vol_seed = mix64(config.rng_seed, hash64(id));
    Rng bg_rng = Rng(vol_seed).fork("bg");
    Rng lesion_rng = Rng(vol_seed).fork("lesion");

    const int nx = config.out_dims[0], ny = config.out_dims[1];
    const int nz = config.native_z_range.first +
                   bg_rng.uniform_int(config.native_z_range.second -
                                      config.native_z_range.first + 1);
    Volume v(nx, ny, nz);

    // Ellipsoidal field, brightest at the center, zero outside.
    const double cx = 0.5 * (nx - 1), cy = 0.5 * (ny - 1), cz = 0.5 * (nz - 1);
    const double ax = 0.42 * nx, ay = 0.42 * ny, az = 0.45 * nz;
    for (int z = 0; z < nz; ++z)
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x) {
                const double dx = (x - cx) / ax, dy = (y - cy) / ay, dz = (z - cz) / az;
                const double rho2 = dx * dx + dy * dy + dz * dz;
                double val = rho2 <= 1.0 ? 0.55 * (1.0 - 0.35 * rho2) : 0.0;
                if (config.noise_sigma > 0) val += config.noise_sigma * bg_rng.gaussian();
                v.at(x, y, z) = float(std::clamp(val, 0.0, 1.0));
            }

    if (label == 1) {
        const int count = config.lesion_count_range.first +
                          lesion_rng.uniform_int(config.lesion_count_range.second -
                                                 config.lesion_count_range.first + 1);
        for (int b = 0; b < count; ++b) {
            // center drawn uniformly from a ball scaled into the ellipsoid
            double ux, uy, uz;
            do {
                ux = lesion_rng.uniform(-1.0, 1.0);
                uy = lesion_rng.uniform(-1.0, 1.0);
                uz = lesion_rng.uniform(-1.0, 1.0);
            } while (ux * ux + uy * uy + uz * uz > 1.0);
            const double bx = cx + 0.55 * ax * ux;
            const double by = cy + 0.55 * ay * uy;
            const double bz = cz + 0.55 * az * uz;
            const double r = lesion_rng.uniform(config.lesion_radius_range.first,
                                                config.lesion_radius_range.second);
            const double r2 = r * r;
            const int x0 = std::max(0, int(std::floor(bx - r))),
                      x1 = std::min(nx - 1, int(std::ceil(bx + r)));
            const int y0 = std::max(0, int(std::floor(by - r))),
                      y1 = std::min(ny - 1, int(std::ceil(by + r)));
            const int z0 = std::max(0, int(std::floor(bz - r))),
                      z1 = std::min(nz - 1, int(std::ceil(bz + r)));
            for (int z = z0; z <= z1; ++z)
                for (int y = y0; y <= y1; ++y)
                    for (int x = x0; x <= x1; ++x) {
                        const double dx = x - bx, dy = y - by, dz = z - bz;
                        if (dx * dx + dy * dy + dz * dz <= r2)
                            v.at(x, y, z) = float(std::min(
                                1.0, double(v.at(x, y, z)) + config.lesion_contrast));
                    }
        }
    }
    return LabeledVolume{id, std::move(v), label, ""};
}

Volume downsample_xy(const Volume& v, int target_xy) {
    if (target_xy < 1) throw std::invalid_argument("downsample_xy: target must be >= 1");
    if (v.nx % target_xy != 0 || v.ny % target_xy != 0)
        throw std::invalid_argument("downsample_xy: dims " + std::to_string(v.nx) + "x" +
                                    std::to_string(v.ny) + " not divisible by " +
                                    std::to_string(target_xy));
    const int rx = v.nx / target_xy, ry = v.ny / target_xy;
    Volume out(target_xy, target_xy, v.nz);
    const double inv = 1.0 / (double(rx) * ry);
    for (int z = 0; z < v.nz; ++z)
        for (int y = 0; y < target_xy; ++y)
            for (int x = 0; x < target_xy; ++x) {
                double acc = 0;
                for (int j = 0; j < ry; ++j)
                    for (int i = 0; i < rx; ++i) acc += v.at(x * rx + i, y * ry + j, z);
                out.at(x, y, z) = float(acc * inv);
            }
    return out;
}

Volume pad_z(const Volume& v, int target_z) {
    if (v.nz > target_z)
        throw std::invalid_argument("pad_z: volume has " + std::to_string(v.nz) +
                                    " slices, target is " + std::to_string(target_z));
    Volume out(v.nx, v.ny, target_z);
    std::memcpy(out.voxels.data(), v.voxels.data(), v.voxels.size() * sizeof(float));
    return out;
}

namespace {

constexpr char kVolumeMagic[4] = {'V', 'O', 'L', 'B'};
constexpr std::int64_t kMaxVoxels = std::int64_t(1) << 31;

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is, std::uint64_t offset, const char* what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw FormatError(std::string("truncated while reading ") + what, offset);
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}

}  // namespace

void write_volume(const std::string& path, const Volume& v) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os.write(kVolumeMagic, 4);
    put_u32(os, std::uint32_t(v.nx));
    put_u32(os, std::uint32_t(v.ny));
    put_u32(os, std::uint32_t(v.nz));
    static_assert(sizeof(float) == 4);
    os.write(reinterpret_cast<const char*>(v.voxels.data()),
             std::streamsize(v.voxels.size() * 4));
    if (!os) throw std::runtime_error("write failed: " + path);
}

Volume read_volume(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    char magic[4];
    if (!is.read(magic, 4)) throw FormatError("truncated volume header", 0);
    if (std::memcmp(magic, kVolumeMagic, 4) != 0)
        throw FormatError("bad volume magic '" + std::string(magic, 4) + "'", 0);
    const std::uint32_t x = get_u32(is, 4, "x dim");
    const std::uint32_t y = get_u32(is, 8, "y dim");
    const std::uint32_t z = get_u32(is, 12, "z dim");
    if (x == 0 || y == 0 || z == 0) throw FormatError("zero volume dimension", 4);
    std::uint64_t n64 = std::uint64_t(x) * y;
    if (n64 > std::uint64_t(kMaxVoxels)) throw FormatError("volume dimensions overflow", 4);
    n64 *= z;
    if (n64 > std::uint64_t(kMaxVoxels)) throw FormatError("volume dimensions overflow", 4);
    const std::int64_t n = std::int64_t(n64);
    Volume v(static_cast<int>(x), static_cast<int>(y), static_cast<int>(z));
    is.read(reinterpret_cast<char*>(v.voxels.data()), std::streamsize(n * 4));
    if (is.gcount() != std::streamsize(n * 4))
        throw FormatError("truncated voxel payload, expected " + std::to_string(n * 4) +
                              " bytes, got " + std::to_string(is.gcount()),
                          std::uint64_t(16 + is.gcount()));
    return v;
}

std::vector<ManifestRow> build_manifest(const std::vector<LabeledVolume>& volumes,
                                        const SplitCounts& counts,
                                        const std::string& path_prefix) {
    std::map<std::pair<std::string, int>, std::vector<const LabeledVolume*>> groups;
    std::set<std::string> seen;
    for (const auto& v : volumes) {
        if (!seen.insert(v.id).second)
            throw std::invalid_argument("build_manifest: duplicate id '" + v.id + "'");
        groups[{v.split, v.label}].push_back(&v);
    }
    const std::array<std::tuple<std::string, int, int>, 4> want{
        std::tuple{"train", 0, counts.train_normal}, std::tuple{"train", 1, counts.train_tumor},
        std::tuple{"test", 0, counts.test_normal}, std::tuple{"test", 1, counts.test_tumor}};

    std::string shortfall;
    for (const auto& [split, label, n] : want) {
        const auto it = groups.find({split, label});
        const int have = it == groups.end() ? 0 : int(it->second.size());
        if (have < n)
            shortfall += " " + split + "/label" + std::to_string(label) + " needs " +
                         std::to_string(n) + " has " + std::to_string(have);
    }
    if (!shortfall.empty())
        throw std::invalid_argument("build_manifest: insufficient volumes:" + shortfall);

    std::vector<ManifestRow> rows;
    for (const auto& [split, label, n] : want) {
        if (n == 0) continue;
        auto& g = groups[{split, label}];
        std::sort(g.begin(), g.end(),
                  [](const LabeledVolume* a, const LabeledVolume* b) { return a->id < b->id; });
        for (int i = 0; i < n; ++i)
            rows.push_back(ManifestRow{g[std::size_t(i)]->id,
                                       path_prefix + g[std::size_t(i)]->id + ".volb", label,
                                       split});
    }
    return rows;
}

void write_manifest(const std::string& path, const std::vector<ManifestRow>& rows) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    for (const auto& r : rows) {
        json j{{"id", r.id}, {"path", r.path}, {"label", r.label}, {"split", r.split}};
        os << j.dump() << "\n";
    }
}

std::vector<ManifestRow> read_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open manifest: " + path);
    std::vector<ManifestRow> rows;
    std::set<std::string> seen;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw std::runtime_error("manifest line " + std::to_string(lineno) + ": " +
                                     e.what());
        }
        ManifestRow r{j.at("id").get<std::string>(), j.at("path").get<std::string>(),
                      j.at("label").get<int>(), j.at("split").get<std::string>()};
        if (r.label != 0 && r.label != 1)
            throw std::runtime_error("manifest line " + std::to_string(lineno) +
                                     ": label must be 0 or 1");
        if (r.split != "train" && r.split != "test")
            throw std::runtime_error("manifest line " + std::to_string(lineno) +
                                     ": split must be train or test");
        if (!seen.insert(r.id).second)
            throw std::runtime_error("manifest: duplicate id '" + r.id + "'");
        rows.push_back(std::move(r));
    }
    return rows;
}

nn::Tensor volume_to_tensor(const Volume& v) {
    nn::Tensor t({1, v.nz, v.ny, v.nx});
    for (std::size_t i = 0; i < v.voxels.size(); ++i) t.data[i] = v.voxels[i];
    return t;
}

Dataset Dataset::load(const std::string& manifest_path,
                      const std::map<std::string, int>* label_override) {
    const auto rows = read_manifest(manifest_path);
    const fs::path base = fs::path(manifest_path).parent_path();

    if (label_override) {
        std::string missing;
        for (const auto& r : rows)
            if (!label_override->count(r.id)) missing += " " + r.id;
        if (!missing.empty())
            throw std::invalid_argument("label map does not cover manifest ids:" + missing);
    }

    Dataset ds;
    for (const auto& r : rows) {
        const auto vol = read_volume((base / r.path).string());
        if (ds.dims == std::array<int, 3>{0, 0, 0}) ds.dims = {vol.nx, vol.ny, vol.nz};
        if (ds.dims != std::array<int, 3>{vol.nx, vol.ny, vol.nz})
            throw std::runtime_error("dataset volumes have mixed dimensions (" + r.id + ")");
        const int label = label_override ? label_override->at(r.id) : r.label;
        DatasetItem item{r.id, label, volume_to_tensor(vol)};
        (r.split == "train" ? ds.train : ds.test).push_back(std::move(item));
    }
    return ds;
}

}  // namespace voxrl
